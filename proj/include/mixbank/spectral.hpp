#pragma once

#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixbank/frontend.hpp"
#include "mixbank/model.hpp"
#include "mixbank/numerics.hpp"
#include "mixbank/text.hpp"

namespace mixbank {

// d_n = (1 - exp(-j w0 n)) / (j 2 pi n), d_0 = 1/M, w0 = 2 pi / M.
inline cplx chip_factor(long n, std::size_t M) {
  if (n == 0) return {1.0 / static_cast<double>(M), 0.0};
  const double w0 = 2.0 * kPi / static_cast<double>(M);
  const double nd = static_cast<double>(n);
  const cplx num = 1.0 - std::polar(1.0, -w0 * nd);
  return num / cplx(0.0, 2.0 * kPi * nd);
}

// Fourier series coefficient of p_i: (1/T) int_0^T p_i(t) exp(-j 2 pi n t / T) dt.
// channel is 1-based.
inline cplx fourier_coeff(const SignMatrix& signs, std::size_t channel, long n) {
  if (channel < 1 || channel > signs.rows()) throw std::out_of_range("fourier_coeff: channel out of range");
  const std::size_t M = signs.cols();
  const double w0 = 2.0 * kPi / static_cast<double>(M);
  const long nm = ((n % static_cast<long>(M)) + static_cast<long>(M)) % static_cast<long>(M);
  cplx sum{};
  for (std::size_t k = 0; k < M; ++k)
    sum += static_cast<double>(signs(channel - 1, k)) *
           std::polar(1.0, -w0 * static_cast<double>((static_cast<long>(k) * nm) % static_cast<long>(M)));
  return sum * chip_factor(n, M);
}

struct MeasurementMatrix {
  CMatrix A;            // m x M
  std::vector<cplx> d;  // diagonal of D, indexed by column
  std::size_t n0 = 0;
  double T = 0.0;

  std::size_t channels() const { return A.rows(); }
  std::size_t slices() const { return A.cols(); }
  // 0-based column holding harmonic n.
  std::size_t column_of(long n) const { return static_cast<std::size_t>(n + static_cast<long>(n0)); }
  long harmonic_of(std::size_t col) const { return static_cast<long>(col) - static_cast<long>(n0); }

  MeasurementMatrix select_rows(std::span<const std::size_t> rows) const {
    return {mixbank::select_rows(A, rows), d, n0, T};
  }
  MeasurementMatrix first_rows(std::size_t count) const {
    if (count < 1 || count > channels()) throw std::out_of_range("first_rows: bad count");
    std::vector<std::size_t> rows(count);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return select_rows(rows);
  }
};

// A = S F with F(k, n + n0) = exp(-j w0 n k), n = -n0..n0.
inline MeasurementMatrix build_measurement_matrix(const SignMatrix& signs, double T) {
  const std::size_t M = signs.cols();
  if (M % 2 == 0) throw std::invalid_argument("build_measurement_matrix: M must be odd");
  if (!(T > 0.0)) throw std::invalid_argument("build_measurement_matrix: T must be positive");
  MeasurementMatrix mm;
  mm.n0 = (M - 1) / 2;
  mm.T = T;
  CMatrix F(M, M);
  const double w0 = 2.0 * kPi / static_cast<double>(M);
  const auto Ml = static_cast<long>(M);
  for (std::size_t k = 0; k < M; ++k) {
    for (std::size_t col = 0; col < M; ++col) {
      const long n = mm.harmonic_of(col);
      const long e = ((static_cast<long>(k) * n) % Ml + Ml) % Ml;
      F(k, col) = std::polar(1.0, -w0 * static_cast<double>(e));
    }
  }
  mm.A = matmul(to_complex(signs.to_matrix()), F);
  mm.d.resize(M);
  for (std::size_t col = 0; col < M; ++col) mm.d[col] = chip_factor(mm.harmonic_of(col), M);
  return mm;
}

// Uniformly spaced spectrum samples: values[b] = X(f_start + b df).
struct SpectrumGrid {
  double f_start = 0.0;
  double df = 1.0;
  std::vector<cplx> values;

  double freq(std::size_t b) const { return f_start + static_cast<double>(b) * df; }
};

// Slice vectors x_i(f) = X(f + (i - n0 - 1)/T) for in-band f in [-1/(2T), 1/(2T)).
struct SliceField {
  std::size_t M = 0;
  double T = 0.0;
  double df = 0.0;
  std::vector<double> freqs;  // in-band frequencies
  CMatrix values;             // M x freqs.size(), row i-1 is slice i
};

namespace detail {

inline long aligned_index(double value, double step, const char* what) {
  const double q = value / step;
  const double r = std::round(q);
  if (std::abs(q - r) > 1e-6) throw std::invalid_argument(std::string("slice_spectrum: ") + what);
  return static_cast<long>(r);
}

}  // namespace detail

inline SliceField slice_spectrum(const SpectrumGrid& X, std::size_t M, double T) {
  if (M % 2 == 0) throw std::invalid_argument("slice_spectrum: M must be odd");
  const long per_slice = detail::aligned_index(1.0 / T, X.df, "slice width is not a multiple of the bin spacing");
  if (per_slice < 1) throw std::invalid_argument("slice_spectrum: bin spacing wider than a slice");
  const long start = detail::aligned_index(X.f_start, X.df, "grid is not aligned to f = 0");
  SliceField out;
  out.M = M;
  out.T = T;
  out.df = X.df;
  const long lo = -(per_slice / 2);
  for (long b = 0; b < per_slice; ++b) out.freqs.push_back(static_cast<double>(lo + b) * X.df);
  out.values = CMatrix(M, static_cast<std::size_t>(per_slice));
  const long n0 = static_cast<long>((M - 1) / 2);
  for (std::size_t i = 1; i <= M; ++i) {
    const long shift = (static_cast<long>(i) - n0 - 1) * per_slice;
    for (long b = 0; b < per_slice; ++b) {
      const long idx = lo + b + shift - start;
      if (idx >= 0 && idx < static_cast<long>(X.values.size()))
        out.values(i - 1, static_cast<std::size_t>(b)) = X.values[static_cast<std::size_t>(idx)];
    }
  }
  return out;
}

// Inverse of slice_spectrum onto the bins of `layout`.
inline SpectrumGrid assemble_spectrum(const SliceField& slices, const SpectrumGrid& layout) {
  SpectrumGrid out{layout.f_start, layout.df, std::vector<cplx>(layout.values.size())};
  const long per_slice = static_cast<long>(slices.freqs.size());
  const long start = detail::aligned_index(layout.f_start, layout.df, "grid is not aligned to f = 0");
  const long lo = -(per_slice / 2);
  const long n0 = static_cast<long>((slices.M - 1) / 2);
  for (std::size_t i = 1; i <= slices.M; ++i) {
    const long shift = (static_cast<long>(i) - n0 - 1) * per_slice;
    for (long b = 0; b < per_slice; ++b) {
      const long idx = lo + b + shift - start;
      if (idx >= 0 && idx < static_cast<long>(out.values.size()))
        out.values[static_cast<std::size_t>(idx)] = slices.values(i - 1, static_cast<std::size_t>(b));
    }
  }
  return out;
}

// Slice index carried by column col(n) of A: the column multiplies X(f - n/T),
// i.e. slice i = n0 + 1 - n = M - col(n) (1-based col). Equal to the mirror slice.
inline std::size_t slice_of_column(std::size_t col0, std::size_t M) { return M - col0; }

using SpectrumFn = std::function<cplx(double)>;

// Fourier transform of synthesize(sig): sum_i sqrt(E_i/B)/2 [rect((f-f_i)/B) + rect((f+f_i)/B)].
inline SpectrumFn multiband_spectrum(const MultibandSignal& sig) {
  return [sig](double f) {
    const double B = sig.params.band_width;
    double acc = 0.0;
    for (std::size_t i = 0; i < sig.carriers.size(); ++i) {
      const double amp = 0.5 * std::sqrt(sig.params.energies[i] / B);
      for (double c : {sig.carriers[i], -sig.carriers[i]})
        if (std::abs(f - c) < B / 2.0) acc += amp;
    }
    return cplx(acc, 0.0);
  };
}

// A_i(f) = sum_{n=-n0}^{n0} c_in X(f - n/T), channels x freqs.
inline CMatrix predict_dtft(const SpectrumFn& X, const SignMatrix& signs, double T,
                            std::span<const double> freqs) {
  const std::size_t M = signs.cols();
  if (M % 2 == 0) throw std::invalid_argument("predict_dtft: M must be odd");
  const long n0 = static_cast<long>((M - 1) / 2);
  CMatrix c(signs.rows(), M);
  for (std::size_t i = 0; i < signs.rows(); ++i)
    for (long n = -n0; n <= n0; ++n) c(i, static_cast<std::size_t>(n + n0)) = fourier_coeff(signs, i + 1, n);
  CMatrix out(signs.rows(), freqs.size());
  for (std::size_t b = 0; b < freqs.size(); ++b) {
    for (long n = -n0; n <= n0; ++n) {
      const cplx xv = X(freqs[b] - static_cast<double>(n) / T);
      if (xv == cplx{}) continue;
      for (std::size_t i = 0; i < signs.rows(); ++i) out(i, b) += c(i, static_cast<std::size_t>(n + n0)) * xv;
    }
  }
  return out;
}

struct SpectralLine {
  double freq = 0.0;
  cplx amplitude{};
};

// Line spectrum version: input lines anywhere in the band, output the baseband
// lines of each channel (frequencies in [-1/(2T), 1/(2T)), merged when equal).
inline std::vector<std::vector<SpectralLine>> predict_lines(std::span<const SpectralLine> lines,
                                                            const SignMatrix& signs, double T) {
  const std::size_t M = signs.cols();
  if (M % 2 == 0) throw std::invalid_argument("predict_lines: M must be odd");
  const long n0 = static_cast<long>((M - 1) / 2);
  std::vector<std::vector<SpectralLine>> out(signs.rows());
  for (const auto& line : lines) {
    for (long n = -n0; n <= n0; ++n) {
      const double fb = line.freq - static_cast<double>(n) / T;
      if (fb < -0.5 / T || fb >= 0.5 / T) continue;
      for (std::size_t i = 0; i < signs.rows(); ++i) {
        const cplx amp = fourier_coeff(signs, i + 1, n) * line.amplitude;
        auto& chan = out[i];
        auto it = std::find_if(chan.begin(), chan.end(),
                               [&](const SpectralLine& s) { return std::abs(s.freq - fb) <= 1e-9 / T; });
        if (it == chan.end()) chan.push_back({fb, amp});
        else it->amplitude += amp;
      }
    }
  }
  return out;
}

inline void write_measurement_csv(std::ostream& os, const MeasurementMatrix& mm) {
  os << "# m=" << mm.channels() << ",M=" << mm.slices() << ",n0=" << mm.n0 << ",T=" << format_double(mm.T) << '\n';
  os << "entry,row,col,re,im\n";
  for (std::size_t i = 0; i < mm.A.rows(); ++i)
    for (std::size_t j = 0; j < mm.A.cols(); ++j)
      os << "A," << i << ',' << j << ',' << format_double(mm.A(i, j).real()) << ','
         << format_double(mm.A(i, j).imag()) << '\n';
  for (std::size_t j = 0; j < mm.d.size(); ++j)
    os << "D," << j << ',' << j << ',' << format_double(mm.d[j].real()) << ',' << format_double(mm.d[j].imag())
       << '\n';
}

inline MeasurementMatrix read_measurement_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0)
    throw std::invalid_argument("measurement csv: missing metadata line");
  std::size_t m = 0, M = 0;
  MeasurementMatrix mm;
  for (const auto& tok : split_list(line.substr(2))) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("measurement csv: bad metadata");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "m") m = static_cast<std::size_t>(parse_int(val));
    else if (key == "M") M = static_cast<std::size_t>(parse_int(val));
    else if (key == "n0") mm.n0 = static_cast<std::size_t>(parse_int(val));
    else if (key == "T") mm.T = parse_double(val);
  }
  mm.A = CMatrix(m, M);
  mm.d.assign(M, cplx{});
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_list(line);
    if (f.size() != 5) throw std::invalid_argument("measurement csv: expected 5 fields");
    const auto r = static_cast<std::size_t>(parse_int(f[1]));
    const auto c = static_cast<std::size_t>(parse_int(f[2]));
    const cplx v(parse_double(f[3]), parse_double(f[4]));
    if (f[0] == "A" && r < m && c < M) mm.A(r, c) = v;
    else if (f[0] == "D" && c < M) mm.d[c] = v;
    else throw std::invalid_argument("measurement csv: bad entry '" + line + "'");
  }
  return mm;
}

}  // namespace mixbank
