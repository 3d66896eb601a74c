#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixbank/model.hpp"
#include "mixbank/numerics.hpp"
#include "mixbank/text.hpp"

namespace mixbank {

class SignMatrix {
 public:
  SignMatrix() = default;
  SignMatrix(std::size_t m, std::size_t M, std::vector<std::int8_t> entries, std::uint64_t seed)
      : m_(m), M_(M), entries_(std::move(entries)), seed_(seed) {
    if (m_ < 1 || M_ < 1) throw std::invalid_argument("SignMatrix: dimensions must be positive");
    if (entries_.size() != m_ * M_) throw std::invalid_argument("SignMatrix: entry count mismatch");
    for (auto e : entries_)
      if (e != 1 && e != -1) throw std::invalid_argument("SignMatrix: entries must be +1 or -1");
  }

  std::size_t rows() const { return m_; }
  std::size_t cols() const { return M_; }
  std::uint64_t seed() const { return seed_; }
  // 0-based channel and chip.
  int operator()(std::size_t i, std::size_t k) const { return entries_[i * M_ + k]; }

  void flip_row(std::size_t i) {
    for (std::size_t k = 0; k < M_; ++k) entries_[i * M_ + k] = static_cast<std::int8_t>(-entries_[i * M_ + k]);
  }

  RMatrix to_matrix() const {
    RMatrix out(m_, M_);
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t k = 0; k < M_; ++k) out(i, k) = (*this)(i, k);
    return out;
  }

 private:
  std::size_t m_ = 0;
  std::size_t M_ = 0;
  std::vector<std::int8_t> entries_;
  std::uint64_t seed_ = 0;
};

inline SignMatrix generate_signs(std::size_t m, std::size_t M, std::uint64_t seed) {
  if (m < 1 || M < 1) throw std::invalid_argument("generate_signs: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::vector<std::int8_t> e(m * M);
  for (auto& v : e) v = (rng() >> 63) ? std::int8_t{1} : std::int8_t{-1};
  return SignMatrix(m, M, std::move(e), seed);
}

enum class LowpassKind {
  ideal,  // brick wall at 1/(2T), applied in the frequency domain over the record
  fir,    // Hamming windowed sinc, group-delay compensated
};

inline std::string to_string(LowpassKind k) { return k == LowpassKind::ideal ? "ideal" : "fir"; }

inline LowpassKind parse_lowpass(std::string_view s) {
  const std::string t = trim(s);
  if (t == "ideal") return LowpassKind::ideal;
  if (t == "fir") return LowpassKind::fir;
  throw std::invalid_argument("unknown lowpass kind '" + t + "' (expected ideal or fir)");
}

struct FrontEndParams {
  std::size_t m = 51;
  std::size_t M = 51;
  double f_nyq = 10e9;
  LowpassKind lowpass = LowpassKind::ideal;
  std::size_t fir_taps = 20400;  // filter order; taps + 1 coefficients
  double fir_cutoff = 0.0;       // Hz; 0 selects 1/(2T)
  std::size_t decimation_offset = 0;

  // T = T_p = T_s
  double period() const { return static_cast<double>(M) / f_nyq; }
  double cutoff() const { return fir_cutoff > 0.0 ? fir_cutoff : 0.5 / period(); }
};

// p_i(t) = alpha_{ik}, k = floor(M mod(t, T_p) / T_p); channel is 1-based.
inline int mixing_waveform(const SignMatrix& signs, std::size_t channel, double t, double period) {
  if (channel < 1 || channel > signs.rows())
    throw std::out_of_range("mixing_waveform: channel out of range");
  const double M = static_cast<double>(signs.cols());
  double u = std::fmod(t, period) / period;
  if (u < 0.0) u += 1.0;
  auto k = static_cast<std::size_t>(std::floor(M * u + 1e-9));
  if (k >= signs.cols()) k -= signs.cols();
  return signs(channel - 1, k);
}

inline std::vector<double> design_lowpass(std::size_t taps, double cutoff, double grid_rate) {
  if (taps < 2) throw std::invalid_argument("design_lowpass: need taps >= 2");
  if (!(cutoff > 0.0) || cutoff >= grid_rate / 2.0)
    throw std::invalid_argument("design_lowpass: cutoff must lie in (0, grid_rate/2)");
  const double wc = 2.0 * cutoff / grid_rate;
  const double mid = static_cast<double>(taps) / 2.0;
  std::vector<double> h(taps + 1);
  double sum = 0.0;
  for (std::size_t n = 0; n <= taps; ++n) {
    const double win = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(n) / static_cast<double>(taps));
    h[n] = wc * sinc(wc * (static_cast<double>(n) - mid)) * win;
    sum += h[n];
  }
  for (double& v : h) v /= sum;
  return h;
}

inline cplx lowpass_response(std::span<const double> h, double f, double grid_rate) {
  cplx acc{};
  for (std::size_t n = 0; n < h.size(); ++n)
    acc += h[n] * std::polar(1.0, -2.0 * kPi * f * static_cast<double>(n) / grid_rate);
  return acc;
}

struct SampleStreams {
  RMatrix data;  // channels x samples
  double rate = 0.0;
  double t0 = 0.0;  // time of sample 0
  std::uint64_t sign_seed = 0;

  std::size_t channels() const { return data.rows(); }
  std::size_t length() const { return data.cols(); }
  double period() const { return 1.0 / rate; }

  SampleStreams select_channels(std::span<const std::size_t> rows) const {
    return {select_rows(data, rows), rate, t0, sign_seed};
  }
  SampleStreams first_channels(std::size_t count) const {
    if (count < 1 || count > channels()) throw std::out_of_range("first_channels: bad count");
    std::vector<std::size_t> rows(count);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return select_channels(rows);
  }
};

namespace detail {

// Chip occupancy for grid residues r = 0..P-1 (grid index offset + r + qP).
// A grid point exactly on a chip boundary splits its weight between both chips.
struct ChipWeight {
  std::size_t chip_a = 0;
  double weight_a = 1.0;
  std::size_t chip_b = 0;
  double weight_b = 0.0;
};

inline std::vector<ChipWeight> chip_weights(double t_first, double dt, std::size_t P, std::size_t M,
                                            double f_nyq) {
  std::vector<ChipWeight> out(P);
  const double Md = static_cast<double>(M);
  const double u0 = std::fmod(t_first * f_nyq, Md);
  const double step = dt * f_nyq;
  for (std::size_t r = 0; r < P; ++r) {
    double u = std::fmod(u0 + static_cast<double>(r) * step, Md);
    if (u < 0.0) u += Md;
    const double nearest = std::round(u);
    ChipWeight w;
    if (std::abs(u - nearest) < 1e-6) {
      const auto b = static_cast<std::size_t>(nearest) % M;
      w = {b, 0.5, (b + M - 1) % M, 0.5};
    } else {
      w.chip_a = static_cast<std::size_t>(std::floor(u)) % M;
    }
    out[r] = w;
  }
  return out;
}

inline std::size_t decimation_factor(const GridSpec& grid, double period) {
  const double ratio = period / grid.dt();
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-6 * ratio)
    throw std::invalid_argument("decimation factor T/dt = " + format_double(ratio) + " is not an integer");
  return static_cast<std::size_t>(rounded);
}

}  // namespace detail

inline SampleStreams simulate(const DenseGrid& x, const SignMatrix& signs, const FrontEndParams& p) {
  if (signs.rows() != p.m || signs.cols() != p.M)
    throw std::invalid_argument("simulate: sign matrix shape differs from front-end params");
  if (x.values.size() != x.spec.n_points) throw std::invalid_argument("simulate: grid/value size mismatch");
  x.spec.validate(p.f_nyq);
  const double T = p.period();
  const double dt = x.spec.dt();
  const std::size_t P = detail::decimation_factor(x.spec, T);
  const std::size_t N = x.values.size();
  if (p.decimation_offset >= N) throw std::invalid_argument("simulate: decimation offset beyond record");
  const std::size_t L = (N - p.decimation_offset) / P;
  if (L < 1) throw std::invalid_argument("simulate: record shorter than one period");
  const std::size_t off = p.decimation_offset;
  const auto chips = detail::chip_weights(x.spec.time(off), dt, P, p.M, p.f_nyq);

  // u(k, n): lowpass output of x times the indicator of chip k, at sample n.
  RMatrix u(p.M, L);
  if (p.lowpass == LowpassKind::fir) {
    if (p.fir_taps % 2 != 0)
      throw std::invalid_argument("simulate: FIR order must be even for integer delay compensation");
    const auto h = design_lowpass(p.fir_taps, p.cutoff(), 1.0 / dt);
    const auto half = static_cast<std::ptrdiff_t>(p.fir_taps / 2);
    const auto Nn = static_cast<std::ptrdiff_t>(N);
    for (std::size_t n = 0; n < L; ++n) {
      const auto c = static_cast<std::ptrdiff_t>(off + n * P);
      // y[c] = sum_q h[q] x[c + half - q]
      for (std::size_t q = 0; q < h.size(); ++q) {
        const std::ptrdiff_t j = c + half - static_cast<std::ptrdiff_t>(q);
        if (j < 0 || j >= Nn) continue;
        const double v = h[q] * x.values[static_cast<std::size_t>(j)];
        const auto r = static_cast<std::size_t>(((j - static_cast<std::ptrdiff_t>(off)) % static_cast<std::ptrdiff_t>(P) +
                                                 static_cast<std::ptrdiff_t>(P)) %
                                                static_cast<std::ptrdiff_t>(P));
        const auto& w = chips[r];
        u(w.chip_a, n) += w.weight_a * v;
        if (w.weight_b != 0.0) u(w.chip_b, n) += w.weight_b * v;
      }
    }
  } else {
    // Circular over the record x[off, off + L P). The chip indicator has period P,
    // so its spectrum lives on multiples of L bins:
    //   Y[b] = sum_l W[l] X[b - l L],  W = DFT_P(mask) / P.
    const std::size_t Nr = L * P;
    std::vector<double> rec(x.values.begin() + static_cast<std::ptrdiff_t>(off),
                            x.values.begin() + static_cast<std::ptrdiff_t>(off + Nr));
    const auto X = dft(std::span<const double>(rec));
    CMatrix W(p.M, P);
    for (std::size_t l = 0; l < P; ++l) {
      for (std::size_t r = 0; r < P; ++r) {
        const cplx e = std::polar(1.0 / static_cast<double>(P),
                                  -2.0 * kPi * static_cast<double>((l * r) % P) / static_cast<double>(P));
        const auto& w = chips[r];
        W(w.chip_a, l) += w.weight_a * e;
        if (w.weight_b != 0.0) W(w.chip_b, l) += w.weight_b * e;
      }
    }
    // In-band bins |b| < L/2 in DFT_L order; for even L the Nyquist bin is split.
    const auto Ls = static_cast<std::ptrdiff_t>(L);
    const auto Nrs = static_cast<std::ptrdiff_t>(Nr);
    std::vector<cplx> U(L);
    for (std::size_t k = 0; k < p.M; ++k) {
      for (std::size_t idx = 0; idx < L; ++idx) {
        std::ptrdiff_t b = static_cast<std::ptrdiff_t>(idx);
        if (2 * b > Ls) b -= Ls;
        auto band_sum = [&](std::ptrdiff_t bin) {
          cplx acc{};
          for (std::size_t l = 0; l < P; ++l) {
            std::ptrdiff_t j = (bin - static_cast<std::ptrdiff_t>(l) * Ls) % Nrs;
            if (j < 0) j += Nrs;
            acc += W(k, l) * X[static_cast<std::size_t>(j)];
          }
          return acc;
        };
        if (2 * b == Ls) {
          U[idx] = 0.5 * (band_sum(b) + band_sum(-b));
        } else {
          U[idx] = band_sum(b);
        }
      }
      const auto v = idft(std::span<const cplx>(U));
      for (std::size_t n = 0; n < L; ++n) u(k, n) = v[n].real() / static_cast<double>(P);
    }
  }

  SampleStreams out;
  out.data = matmul(signs.to_matrix(), u);
  out.rate = 1.0 / T;
  out.t0 = x.spec.time(off);
  out.sign_seed = signs.seed();
  return out;
}

inline void write_streams_csv(std::ostream& os, const SampleStreams& s) {
  os << "# rate=" << format_double(s.rate) << ",sign_seed=" << s.sign_seed
     << ",t0=" << format_double(s.t0) << '\n';
  for (std::size_t i = 0; i < s.channels(); ++i) os << (i ? ",a" : "a") << (i + 1);
  os << '\n';
  for (std::size_t n = 0; n < s.length(); ++n) {
    for (std::size_t i = 0; i < s.channels(); ++i) os << (i ? "," : "") << format_double(s.data(i, n));
    os << '\n';
  }
}

inline SampleStreams read_streams_csv(std::istream& is) {
  SampleStreams s;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0)
    throw std::invalid_argument("streams csv: missing metadata line");
  for (const auto& tok : split_list(line.substr(2))) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("streams csv: bad metadata '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "rate") s.rate = parse_double(val);
    else if (key == "sign_seed") s.sign_seed = parse_uint64(val);
    else if (key == "t0") s.t0 = parse_double(val);
  }
  if (!std::getline(is, line)) throw std::invalid_argument("streams csv: missing header");
  const std::size_t m = split_list(line).size();
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::vector<double> r;
    for (const auto& tok : split_list(line)) r.push_back(parse_double(tok));
    if (r.size() != m) throw std::invalid_argument("streams csv: ragged row");
    rows.push_back(std::move(r));
  }
  s.data = RMatrix(m, rows.size());
  for (std::size_t n = 0; n < rows.size(); ++n)
    for (std::size_t i = 0; i < m; ++i) s.data(i, n) = rows[n][i];
  return s;
}

struct FrontEndSetup {
  GridSpec grid;
  FrontEndParams frontend;
};

// 4000 points on [-200/f_nyq, 200/f_nyq] and a 50th-order FIR.
inline FrontEndSetup short_window_fir_setup(double f_nyq = 10e9, std::size_t m = 51, std::size_t M = 51) {
  FrontEndSetup s;
  s.grid = {-200.0 / f_nyq, 200.0 / f_nyq, 4000};
  s.frontend.m = m;
  s.frontend.M = M;
  s.frontend.f_nyq = f_nyq;
  s.frontend.lowpass = LowpassKind::fir;
  s.frontend.fir_taps = 50;
  return s;
}

}  // namespace mixbank
