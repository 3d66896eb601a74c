#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixbank/frontend.hpp"
#include "mixbank/model.hpp"
#include "mixbank/numerics.hpp"
#include "mixbank/spectral.hpp"

namespace mixbank {

struct CorrelationFrame {
  RMatrix Q;                    // m x m, Q = a a^T
  RMatrix V;                    // m x r, kept eigenvectors scaled by sqrt(eigval)
  std::vector<double> eigvals;  // descending
  double threshold = 0.0;

  std::size_t rank() const { return V.cols(); }
  bool empty() const { return V.cols() == 0; }
};

inline CorrelationFrame build_frame(const SampleStreams& streams, double tau) {
  if (streams.channels() == 0 || streams.length() == 0)
    throw std::invalid_argument("build_frame: streams are empty");
  if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("build_frame: tau must lie in [0, 1)");
  const std::size_t m = streams.channels();
  CorrelationFrame fr;
  fr.threshold = tau;
  fr.Q = RMatrix(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = i; k < m; ++k) {
      double s = 0.0;
      for (std::size_t n = 0; n < streams.length(); ++n) s += streams.data(i, n) * streams.data(k, n);
      fr.Q(i, k) = s;
      fr.Q(k, i) = s;
    }
  }
  auto eig = hermitian_eig(fr.Q);
  fr.eigvals = eig.values;
  const double top = fr.eigvals.empty() ? 0.0 : fr.eigvals.front();
  std::size_t keep = 0;
  if (top > 0.0)
    while (keep < m && fr.eigvals[keep] > tau * top) ++keep;
  fr.V = RMatrix(m, keep);
  for (std::size_t k = 0; k < keep; ++k) {
    const double s = std::sqrt(fr.eigvals[k]);
    for (std::size_t i = 0; i < m; ++i) fr.V(i, k) = eig.vectors(i, k) * s;
  }
  return fr;
}

struct MMVProblem {
  CMatrix A;
  CMatrix V;
  std::size_t sparsity = 1;

  void validate() const {
    if (A.rows() != V.rows()) throw std::invalid_argument("MMVProblem: A and V row counts differ");
    if (V.cols() < 1) throw std::invalid_argument("MMVProblem: frame has no columns");
    if (sparsity < 1 || sparsity > A.rows())
      throw std::invalid_argument("MMVProblem: sparsity budget must satisfy 1 <= K <= m");
  }
};

struct SompOptions {
  double residual_tol = 1e-9;  // stop once |R|_F < residual_tol |V|_F
};

struct SompResult {
  SupportSet support;
  std::vector<std::size_t> order;          // selected 0-based columns, in selection order
  std::vector<double> residual_history;    // |R|_F / |V|_F after each selection
  double residual = 0.0;                   // final |R|_F
  double relative_residual = 0.0;
  bool early_exit = false;
  bool rank_deficient = false;
};

inline SompResult somp(const MMVProblem& prob, const SompOptions& opt = {}) {
  prob.validate();
  const std::size_t m = prob.A.rows();
  const std::size_t M = prob.A.cols();
  std::vector<double> col_norm(M);
  for (std::size_t j = 0; j < M; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += std::norm(prob.A(i, j));
    col_norm[j] = std::sqrt(s);
    if (col_norm[j] == 0.0) throw std::invalid_argument("somp: A has a zero column");
  }
  SompResult res;
  const double vnorm = frobenius_norm(prob.V);
  CMatrix R = prob.V;
  res.residual = vnorm;
  res.relative_residual = vnorm > 0.0 ? 1.0 : 0.0;
  if (vnorm == 0.0) {
    res.early_exit = true;
    return res;
  }
  std::vector<bool> taken(M, false);
  const std::size_t r = prob.V.cols();
  while (res.order.size() < prob.sparsity) {
    if (res.residual < opt.residual_tol * vnorm) {
      res.early_exit = true;
      break;
    }
    std::size_t best = M;
    double best_val = -1.0;
    for (std::size_t j = 0; j < M; ++j) {
      if (taken[j]) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < r; ++c) {
        cplx dot{};
        for (std::size_t i = 0; i < m; ++i) dot += std::conj(prob.A(i, j)) * R(i, c);
        s += std::norm(dot);
      }
      const double val = std::sqrt(s) / col_norm[j];
      if (val > best_val) {
        best_val = val;
        best = j;
      }
    }
    if (best == M) break;
    taken[best] = true;
    res.order.push_back(best);
    const CMatrix As = select_columns(prob.A, std::span<const std::size_t>(res.order));
    QrSolver<cplx> qr(As);
    if (!qr.full_column_rank()) res.rank_deficient = true;
    R = prob.V - matmul(As, qr.solve_basic(prob.V));
    res.residual = frobenius_norm(R);
    res.relative_residual = res.residual / vnorm;
    res.residual_history.push_back(res.relative_residual);
  }
  std::vector<int> idx;
  for (std::size_t j : res.order) idx.push_back(static_cast<int>(j) + 1);
  res.support = SupportSet(std::move(idx));
  return res;
}

struct RecoveryOptions {
  std::size_t sparsity = 12;   // K; clamped to the channel count
  double tau = 1e-2;           // frame eigenvalue threshold relative to the largest
  double residual_tol = 1e-2;  // SOMP early exit, relative to |V|_F
};

struct SupportEstimate {
  SupportSet support;
  CorrelationFrame frame;
  SompResult somp;
  std::size_t sparsity_used = 0;
};

inline SupportEstimate recover_support(const SampleStreams& streams, const MeasurementMatrix& mm,
                                       const RecoveryOptions& opt = {}) {
  if (streams.channels() != mm.channels())
    throw std::invalid_argument("recover_support: stream count differs from rows of A");
  SupportEstimate est;
  est.frame = build_frame(streams, opt.tau);
  est.sparsity_used = std::min(opt.sparsity, mm.channels());
  if (est.frame.empty()) return est;
  MMVProblem prob{mm.A, to_complex(est.frame.V), est.sparsity_used};
  est.somp = somp(prob, SompOptions{opt.residual_tol});
  est.support = est.somp.support;
  return est;
}

class RankDeficientSupportError : public std::runtime_error {
 public:
  RankDeficientSupportError(const SupportSet& s, std::size_t rank)
      : std::runtime_error("reconstruct: A_S is rank deficient (rank " + std::to_string(rank) + ") for support {" +
                           s.to_string() + "}"),
        support_(s) {}
  const SupportSet& support() const { return support_; }

 private:
  SupportSet support_;
};

struct Reconstruction {
  SupportSet support;
  CMatrix baseband;  // |S| x L: z_n[k] = ((A_S)^+ a[k]) / d_n
  DenseGrid signal;
};

// Per-snapshot pseudoinverse, then periodic sinc interpolation of each baseband
// sequence onto `grid`, modulation by exp(-j 2 pi n t / T) and summation.
inline Reconstruction reconstruct(const SampleStreams& streams, const MeasurementMatrix& mm, const SupportSet& S,
                                  const GridSpec& grid) {
  if (streams.channels() != mm.channels())
    throw std::invalid_argument("reconstruct: stream count differs from rows of A");
  Reconstruction out;
  out.support = S;
  out.signal = DenseGrid{grid, std::vector<double>(grid.n_points, 0.0)};
  const std::size_t L = streams.length();
  out.baseband = CMatrix(S.size(), L);
  if (S.empty()) return out;
  if (S.indices().back() > static_cast<int>(mm.slices()))
    throw std::out_of_range("reconstruct: support index exceeds M");
  if (S.size() > mm.channels()) throw RankDeficientSupportError(S, mm.channels());

  const auto cols = S.columns();
  const CMatrix As = select_columns(mm.A, std::span<const std::size_t>(cols));
  QrSolver<cplx> qr(As);
  if (!qr.full_column_rank()) throw RankDeficientSupportError(S, qr.rank());
  const CMatrix W = qr.solve(to_complex(streams.data));
  for (std::size_t s = 0; s < cols.size(); ++s)
    for (std::size_t k = 0; k < L; ++k) out.baseband(s, k) = W(s, k) / mm.d[cols[s]];

  const double T = mm.T;
  const std::size_t P = detail::decimation_factor(grid, T);
  const double shift = (streams.t0 - grid.t_start) / grid.dt();
  const double off_r = std::round(shift);
  if (std::abs(shift - off_r) > 1e-6) throw std::invalid_argument("reconstruct: stream samples are off the grid");
  const auto off = static_cast<long>(off_r);
  const std::size_t Nup = L * P;
  const auto Ls = static_cast<long>(L);
  const auto Nups = static_cast<long>(Nup);
  std::vector<cplx> spec(Nup);
  for (std::size_t s = 0; s < cols.size(); ++s) {
    const long n = mm.harmonic_of(cols[s]);
    std::vector<cplx> z(out.baseband.row(s).begin(), out.baseband.row(s).end());
    const auto Z = dft(std::span<const cplx>(z));
    const cplx phase = std::polar(static_cast<double>(P), -2.0 * kPi * static_cast<double>(n) * streams.t0 / T);
    for (std::size_t k = 0; k < L; ++k) {
      long kk = static_cast<long>(k);
      if (2 * kk > Ls) kk -= Ls;
      auto put = [&](long bin, cplx v) {
        long j = (bin - n * Ls) % Nups;
        if (j < 0) j += Nups;
        spec[static_cast<std::size_t>(j)] += v;
      };
      if (2 * kk == Ls) {
        put(kk, 0.5 * Z[k] * phase);
        put(-kk, 0.5 * Z[k] * phase);
      } else {
        put(kk, Z[k] * phase);
      }
    }
  }
  const auto y = idft(std::span<const cplx>(spec));
  for (std::size_t j = 0; j < grid.n_points; ++j) {
    long idx = (static_cast<long>(j) - off) % Nups;
    if (idx < 0) idx += Nups;
    out.signal.values[j] = y[static_cast<std::size_t>(idx)].real();
  }
  return out;
}

// Relative l2 error over the central half of the record.
inline double central_relative_error(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) throw std::invalid_argument("central_relative_error: size mismatch");
  const std::size_t n = reference.size();
  double num = 0.0, den = 0.0;
  for (std::size_t j = n / 4; j < 3 * n / 4; ++j) {
    num += (estimate[j] - reference[j]) * (estimate[j] - reference[j]);
    den += reference[j] * reference[j];
  }
  return den > 0.0 ? std::sqrt(num / den) : (num > 0.0 ? INFINITY : 0.0);
}

}  // namespace mixbank
