#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace mixbank {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

template <typename T>
struct is_complex : std::false_type {};
template <typename T>
struct is_complex<std::complex<T>> : std::true_type {};

template <typename T>
T conj_if(const T& v) {
  if constexpr (is_complex<T>::value) {
    return std::conj(v);
  } else {
    return v;
  }
}

template <typename T>
double abs2(const T& v) {
  if constexpr (is_complex<T>::value) {
    return std::norm(v);
  } else {
    return v * v;
  }
}

// Row-major dense matrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = T{1};
    return out;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T> col(std::size_t c) const {
    std::vector<T> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using RMatrix = Matrix<double>;
using CMatrix = Matrix<cplx>;

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T{}) continue;
      auto brow = b.row(k);
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

template <typename T>
Matrix<T> adjoint(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = conj_if(a(i, j));
  return out;
}

template <typename T>
Matrix<T> operator-(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("matrix subtraction: shape mismatch");
  Matrix<T> out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

template <typename T>
double frobenius_norm(const Matrix<T>& a) {
  double s = 0.0;
  for (const T& v : a.data()) s += abs2(v);
  return std::sqrt(s);
}

template <typename T>
double norm2(std::span<const T> v) {
  double s = 0.0;
  for (const T& x : v) s += abs2(x);
  return std::sqrt(s);
}

inline CMatrix to_complex(const RMatrix& a) {
  CMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i];
  return out;
}

template <typename T>
Matrix<T> select_columns(const Matrix<T>& a, std::span<const std::size_t> cols) {
  Matrix<T> out(a.rows(), cols.size());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t j = 0; j < cols.size(); ++j) out(r, j) = a(r, cols[j]);
  return out;
}

template <typename T>
Matrix<T> select_rows(const Matrix<T>& a, std::span<const std::size_t> rows) {
  Matrix<T> out(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) throw std::out_of_range("select_rows: row index out of range");
    std::copy(a.row(rows[i]).begin(), a.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

template <typename T>
struct EigenDecomposition {
  std::vector<double> values;  // descending
  Matrix<T> vectors;           // column k pairs with values[k]
};

// Cyclic Jacobi for Hermitian (or real symmetric) matrices. Each rotation first
// removes the phase of the pivot entry, then applies a real plane rotation.
template <typename T>
EigenDecomposition<T> hermitian_eig(const Matrix<T>& q) {
  const std::size_t n = q.rows();
  if (q.cols() != n) throw std::invalid_argument("hermitian_eig: matrix is not square");
  const double scale = frobenius_norm(q);
  double asym = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) asym += abs2(q(i, j) - conj_if(q(j, i)));
  if (std::sqrt(asym) > 1e-8 * std::max(scale, 1e-300))
    throw std::invalid_argument("hermitian_eig: matrix is not Hermitian");

  Matrix<T> a = q;
  Matrix<T> v = Matrix<T>::identity(n);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = T{std::real(a(i, i))};

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += abs2(a(i, j));
    return std::sqrt(2.0 * s);
  };

  for (int sweep = 0; sweep < 100; ++sweep) {
    if (off_norm() <= 1e-15 * scale) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const T apq = a(p, r);
        const double mag = std::abs(apq);
        if (mag == 0.0) continue;
        const T ph = apq / mag;
        const double app = std::real(a(p, p));
        const double aqq = std::real(a(r, r));
        const double tau = (aqq - app) / (2.0 * mag);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const T cph = conj_if(ph);
        // A <- A J, J = diag(1, conj(ph)) * [[c, s], [-s, c]] on (p, r)
        for (std::size_t k = 0; k < n; ++k) {
          const T x = a(k, p);
          const T y = a(k, r);
          a(k, p) = x * c - y * cph * s;
          a(k, r) = x * s + y * cph * c;
        }
        // A <- J^H A
        for (std::size_t k = 0; k < n; ++k) {
          const T x = a(p, k);
          const T y = a(r, k);
          a(p, k) = c * x - s * ph * y;
          a(r, k) = s * x + c * ph * y;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const T x = v(k, p);
          const T y = v(k, r);
          v(k, p) = x * c - y * cph * s;
          v(k, r) = x * s + y * cph * c;
        }
        a(p, r) = T{};
        a(r, p) = T{};
        a(p, p) = T{std::real(a(p, p))};
        a(r, r) = T{std::real(a(r, r))};
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::real(a(i, i)) > std::real(a(j, j));
  });
  EigenDecomposition<T> out;
  out.values.resize(n);
  out.vectors = Matrix<T>(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = std::real(a(order[k], order[k]));
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

class RankDeficientError : public std::runtime_error {
 public:
  RankDeficientError(const std::string& what, std::size_t rank)
      : std::runtime_error(what), rank_(rank) {}
  std::size_t rank() const { return rank_; }

 private:
  std::size_t rank_;
};

// Householder QR with column pivoting. Factor once, solve for many right-hand sides.
template <typename T>
class QrSolver {
 public:
  explicit QrSolver(const Matrix<T>& a, double rank_tol = 1e-10)
      : rows_(a.rows()), cols_(a.cols()), qr_(a), perm_(a.cols()) {
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    const std::size_t steps = std::min(rows_, cols_);
    reflectors_.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      std::size_t best = k;
      double best_norm = -1.0;
      for (std::size_t j = k; j < cols_; ++j) {
        double s = 0.0;
        for (std::size_t i = k; i < rows_; ++i) s += abs2(qr_(i, j));
        if (s > best_norm) {
          best_norm = s;
          best = j;
        }
      }
      if (best != k) {
        for (std::size_t i = 0; i < rows_; ++i) std::swap(qr_(i, k), qr_(i, best));
        std::swap(perm_[k], perm_[best]);
      }
      std::vector<T> v(rows_ - k);
      for (std::size_t i = k; i < rows_; ++i) v[i - k] = qr_(i, k);
      const double xnorm = std::sqrt(std::max(best_norm, 0.0));
      T alpha{};
      if (xnorm > 0.0) {
        const double m0 = std::abs(v[0]);
        const T ph = m0 > 0.0 ? v[0] / m0 : T{1};
        alpha = -ph * xnorm;
        v[0] -= alpha;
        const double vn = norm2(std::span<const T>(v));
        if (vn > 0.0)
          for (T& e : v) e /= vn;
        apply_reflector(v, k, k);
      }
      reflectors_.push_back(std::move(v));
      qr_(k, k) = alpha;
      for (std::size_t i = k + 1; i < rows_; ++i) qr_(i, k) = T{};
    }
    const double r0 = steps > 0 ? std::abs(qr_(0, 0)) : 0.0;
    rank_ = 0;
    for (std::size_t k = 0; k < steps; ++k)
      if (std::abs(qr_(k, k)) > rank_tol * r0 && r0 > 0.0) ++rank_;
    condition_ = rank_ > 0 ? r0 / std::abs(qr_(rank_ - 1, rank_ - 1)) : INFINITY;
  }

  std::size_t rank() const { return rank_; }
  bool full_column_rank() const { return rank_ == cols_; }
  double condition_estimate() const { return condition_; }

  // Solution using the leading `rank` pivoted columns; for a rank-deficient
  // matrix this still yields the orthogonal projection A z onto range(A).
  Matrix<T> solve_basic(const Matrix<T>& y) const {
    if (y.rows() != rows_) throw std::invalid_argument("QrSolver: right-hand side row mismatch");
    Matrix<T> qy = y;
    for (std::size_t k = 0; k < reflectors_.size(); ++k) {
      const auto& v = reflectors_[k];
      for (std::size_t c = 0; c < qy.cols(); ++c) {
        T dot{};
        for (std::size_t i = k; i < rows_; ++i) dot += conj_if(v[i - k]) * qy(i, c);
        for (std::size_t i = k; i < rows_; ++i) qy(i, c) -= T{2} * v[i - k] * dot;
      }
    }
    Matrix<T> z(cols_, y.cols());
    for (std::size_t c = 0; c < y.cols(); ++c) {
      for (std::size_t ii = rank_; ii-- > 0;) {
        T s = qy(ii, c);
        for (std::size_t j = ii + 1; j < rank_; ++j) s -= qr_(ii, j) * z(perm_[j], c);
        z(perm_[ii], c) = s / qr_(ii, ii);
      }
    }
    return z;
  }

  Matrix<T> solve(const Matrix<T>& y) const {
    if (!full_column_rank())
      throw RankDeficientError("least squares: matrix has rank " + std::to_string(rank_) +
                                   " < " + std::to_string(cols_) + " columns",
                               rank_);
    return solve_basic(y);
  }

 private:
  void apply_reflector(const std::vector<T>& v, std::size_t k, std::size_t col0) {
    for (std::size_t c = col0; c < cols_; ++c) {
      T dot{};
      for (std::size_t i = k; i < rows_; ++i) dot += conj_if(v[i - k]) * qr_(i, c);
      for (std::size_t i = k; i < rows_; ++i) qr_(i, c) -= T{2} * v[i - k] * dot;
    }
  }

  std::size_t rows_;
  std::size_t cols_;
  Matrix<T> qr_;
  std::vector<std::size_t> perm_;
  std::vector<std::vector<T>> reflectors_;
  std::size_t rank_ = 0;
  double condition_ = 0.0;
};

template <typename T>
struct LeastSquaresSolution {
  Matrix<T> z;
  double condition = 0.0;
};

template <typename T>
LeastSquaresSolution<T> lstsq(const Matrix<T>& a, const Matrix<T>& y) {
  QrSolver<T> qr(a);
  return {qr.solve(y), qr.condition_estimate()};
}

template <typename T>
Matrix<T> lstsq_apply(const Matrix<T>& a, const Matrix<T>& y) {
  return lstsq(a, y).z;
}

namespace detail {

class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan plan(std::size_t n, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_pair(n, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<cplx> in(n), out(n);
    fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(in.data()),
                                   reinterpret_cast<fftw_complex*>(out.data()), sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (p == nullptr) throw std::runtime_error("fftw: plan creation failed");
    plans_.emplace(key, p);
    return p;
  }

  ~FftPlanCache() {
    for (auto& kv : plans_) fftw_destroy_plan(kv.second);
  }

 private:
  FftPlanCache() = default;
  std::mutex mutex_;
  std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

inline std::vector<cplx> run_fft(std::span<const cplx> x, int sign) {
  if (x.empty()) throw std::invalid_argument("dft: empty input");
  std::vector<cplx> in(x.begin(), x.end());
  std::vector<cplx> out(x.size());
  fftw_plan p = FftPlanCache::instance().plan(x.size(), sign);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

}  // namespace detail

// X[k] = sum_j x[j] exp(-2 pi i j k / n)
inline std::vector<cplx> dft(std::span<const cplx> x) { return detail::run_fft(x, FFTW_FORWARD); }

inline std::vector<cplx> dft(std::span<const double> x) {
  std::vector<cplx> c(x.begin(), x.end());
  return dft(std::span<const cplx>(c));
}

// Inverse with the 1/n factor.
inline std::vector<cplx> idft(std::span<const cplx> x) {
  auto out = detail::run_fft(x, FFTW_BACKWARD);
  const double inv = 1.0 / static_cast<double>(x.size());
  for (cplx& v : out) v *= inv;
  return out;
}

// Full linear convolution, length signal + taps - 1.
inline std::vector<double> convolve(std::span<const double> signal, std::span<const double> taps) {
  if (signal.empty() || taps.empty()) throw std::invalid_argument("convolve: empty input");
  std::vector<double> out(signal.size() + taps.size() - 1, 0.0);
  for (std::size_t i = 0; i < signal.size(); ++i)
    for (std::size_t j = 0; j < taps.size(); ++j) out[i + j] += signal[i] * taps[j];
  return out;
}

}  // namespace mixbank
