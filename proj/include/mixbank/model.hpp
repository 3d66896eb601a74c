#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixbank/numerics.hpp"
#include "mixbank/text.hpp"

namespace mixbank {

// Sorted, duplicate-free set of 1-based spectrum slice indices.
class SupportSet {
 public:
  SupportSet() = default;
  explicit SupportSet(std::vector<int> indices) : idx_(std::move(indices)) {
    std::sort(idx_.begin(), idx_.end());
    idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
    if (!idx_.empty() && idx_.front() < 1)
      throw std::invalid_argument("SupportSet: indices are 1-based");
  }

  const std::vector<int>& indices() const { return idx_; }
  std::size_t size() const { return idx_.size(); }
  bool empty() const { return idx_.empty(); }
  bool contains(int i) const { return std::binary_search(idx_.begin(), idx_.end(), i); }
  bool includes(const SupportSet& other) const {
    return std::includes(idx_.begin(), idx_.end(), other.idx_.begin(), other.idx_.end());
  }
  bool operator==(const SupportSet&) const = default;

  // 0-based column indices.
  std::vector<std::size_t> columns() const {
    std::vector<std::size_t> out;
    out.reserve(idx_.size());
    for (int i : idx_) out.push_back(static_cast<std::size_t>(i - 1));
    return out;
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t k = 0; k < idx_.size(); ++k) {
      if (k) s += ' ';
      s += std::to_string(idx_[k]);
    }
    return s;
  }

  static SupportSet parse(std::string_view s) {
    std::vector<int> v;
    for (const auto& tok : split_list(s)) v.push_back(static_cast<int>(parse_int(tok)));
    return SupportSet(std::move(v));
  }

 private:
  std::vector<int> idx_;
};

struct ModelParams {
  double f_nyq = 10e9;
  int n_bands = 3;
  double band_width = 40e6;
  std::vector<double> energies{1.0, 2.0, 3.0};

  void validate() const {
    if (!(f_nyq > 0.0)) throw std::invalid_argument("ModelParams: f_nyq must be positive");
    if (!(band_width > 0.0)) throw std::invalid_argument("ModelParams: band_width must be positive");
    if (n_bands < 1) throw std::invalid_argument("ModelParams: need at least one band");
    if (energies.size() != static_cast<std::size_t>(n_bands))
      throw std::invalid_argument("ModelParams: expected " + std::to_string(n_bands) + " energies");
    for (double e : energies)
      if (!(e > 0.0)) throw std::invalid_argument("ModelParams: energies must be positive");
    if (2.0 * n_bands * band_width > f_nyq)
      throw std::invalid_argument("ModelParams: 2*N*B exceeds f_nyq");
  }
};

struct MultibandSignal {
  ModelParams params;
  std::vector<double> carriers;  // Hz

  void validate() const {
    params.validate();
    if (carriers.size() != static_cast<std::size_t>(params.n_bands))
      throw std::invalid_argument("MultibandSignal: carrier count differs from n_bands");
    for (double f : carriers)
      if (std::abs(f) + params.band_width / 2.0 > params.f_nyq / 2.0 * (1.0 + 1e-12))
        throw std::invalid_argument("MultibandSignal: band exceeds [-f_nyq/2, f_nyq/2]");
  }
};

// Carriers uniform on [-f_nyq/2, f_nyq/2]; draws whose band would cross the
// Nyquist edge are redrawn.
inline MultibandSignal draw_signal(const ModelParams& params, std::uint64_t seed) {
  params.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-params.f_nyq / 2.0, params.f_nyq / 2.0);
  MultibandSignal sig{params, {}};
  while (sig.carriers.size() < static_cast<std::size_t>(params.n_bands)) {
    const double f = uni(rng);
    if (std::abs(f) + params.band_width / 2.0 <= params.f_nyq / 2.0) sig.carriers.push_back(f);
  }
  return sig;
}

struct GridSpec {
  double t_start = 0.0;
  double t_end = 0.0;
  std::size_t n_points = 0;

  double dt() const { return (t_end - t_start) / static_cast<double>(n_points); }
  // Written so that a grid with 2n points reproduces time(j) at index 2j bit for bit.
  double time(std::size_t j) const {
    return t_start + (t_end - t_start) * static_cast<double>(j) / static_cast<double>(n_points);
  }

  void validate(double f_nyq) const {
    if (n_points < 2) throw std::invalid_argument("GridSpec: need at least 2 points");
    if (!(t_end > t_start)) throw std::invalid_argument("GridSpec: t_end must exceed t_start");
    if (dt() > 1.0 / (2.0 * f_nyq) * (1.0 + 1e-12))
      throw std::invalid_argument("GridSpec: grid coarser than 2x oversampling of f_nyq");
  }

  // `periods` whole periods of length `period`, centered on t = 0.
  static GridSpec centered_periods(double period, std::size_t periods, std::size_t points_per_period) {
    const double half = static_cast<double>(periods) * period / 2.0;
    return {-half, half, periods * points_per_period};
  }

  bool operator==(const GridSpec&) const = default;
};

struct DenseGrid {
  GridSpec spec;
  std::vector<double> values;

  std::size_t n_points() const { return values.size(); }
};

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

// x(t) = sum_i sqrt(E_i B) sinc(B t) cos(2 pi f_i t)
inline DenseGrid synthesize(const MultibandSignal& sig, const GridSpec& grid) {
  sig.validate();
  grid.validate(sig.params.f_nyq);
  const double b = sig.params.band_width;
  DenseGrid out{grid, std::vector<double>(grid.n_points, 0.0)};
  for (std::size_t j = 0; j < grid.n_points; ++j) {
    const double t = grid.time(j);
    const double env = sinc(b * t);
    double acc = 0.0;
    for (std::size_t i = 0; i < sig.carriers.size(); ++i)
      acc += std::sqrt(sig.params.energies[i] * b) * std::cos(2.0 * kPi * sig.carriers[i] * t);
    out.values[j] = env * acc;
  }
  return out;
}

enum class SnrConvention {
  norm_ratio,   // 10 log10(|x| / |w|)
  power_ratio,  // 20 log10(|x| / |w|)
};

inline std::string to_string(SnrConvention c) {
  return c == SnrConvention::norm_ratio ? "norm" : "power";
}

inline SnrConvention parse_snr_convention(std::string_view s) {
  const std::string t = trim(s);
  if (t == "norm") return SnrConvention::norm_ratio;
  if (t == "power") return SnrConvention::power_ratio;
  throw std::invalid_argument("unknown SNR convention '" + t + "' (expected norm or power)");
}

class Snr {
 public:
  static Snr noiseless() { return Snr(); }
  static Snr db(double value) {
    if (!std::isfinite(value)) throw std::invalid_argument("Snr: finite dB value required");
    Snr s;
    s.noiseless_ = false;
    s.db_ = value;
    return s;
  }
  static Snr parse(std::string_view text) {
    const std::string t = trim(text);
    if (t == "inf" || t == "noiseless") return noiseless();
    return db(parse_double(t));
  }

  bool is_noiseless() const { return noiseless_; }
  double value_db() const {
    if (noiseless_) throw std::logic_error("Snr: noiseless has no dB value");
    return db_;
  }
  // Target |x| / |w| for a finite SNR.
  double norm_ratio(SnrConvention c) const {
    const double denom = c == SnrConvention::norm_ratio ? 10.0 : 20.0;
    return std::pow(10.0, value_db() / denom);
  }
  std::string to_string() const { return noiseless_ ? "inf" : format_double(db_); }
  bool operator==(const Snr&) const = default;

 private:
  Snr() = default;
  bool noiseless_ = true;
  double db_ = 0.0;
};

struct NoisyGrid {
  DenseGrid noisy;
  DenseGrid noise;
};

inline NoisyGrid add_noise(const DenseGrid& x, const Snr& snr, std::uint64_t seed,
                           SnrConvention convention = SnrConvention::norm_ratio) {
  const double xn = norm2(std::span<const double>(x.values));
  if (xn == 0.0) throw std::invalid_argument("add_noise: SNR undefined for an all-zero signal");
  NoisyGrid out{x, DenseGrid{x.spec, std::vector<double>(x.values.size(), 0.0)}};
  if (snr.is_noiseless()) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double& w : out.noise.values) w = gauss(rng);
  const double wn = norm2(std::span<const double>(out.noise.values));
  const double scale = xn / (wn * snr.norm_ratio(convention));
  for (std::size_t j = 0; j < x.values.size(); ++j) {
    out.noise.values[j] *= scale;
    out.noisy.values[j] = x.values[j] + out.noise.values[j];
  }
  return out;
}

// Slice i (1-based) covers [(i - n0 - 1)/T - 1/(2T), (i - n0 - 1)/T + 1/(2T)].
struct SliceLayout {
  int M = 51;
  double T = 51.0 / 10e9;

  int n0() const { return (M - 1) / 2; }
  double center(int i) const { return static_cast<double>(i - n0() - 1) / T; }
  double lower(int i) const { return center(i) - 0.5 / T; }
  double upper(int i) const { return center(i) + 0.5 / T; }
  int mirror(int i) const { return M + 1 - i; }
};

inline SupportSet true_support(const MultibandSignal& sig, int M) {
  sig.validate();
  if (M < 1) throw std::invalid_argument("true_support: M must be positive");
  if (static_cast<double>(M) > sig.params.f_nyq / sig.params.band_width * (1.0 + 1e-12))
    throw std::invalid_argument("true_support: M exceeds f_nyq / B");
  const SliceLayout layout{M, M / sig.params.f_nyq};
  const double half_b = sig.params.band_width / 2.0;
  std::vector<int> hit;
  for (double f : sig.carriers) {
    for (double c : {f, -f}) {
      for (int i = 1; i <= M; ++i)
        if (c + half_b > layout.lower(i) && c - half_b < layout.upper(i)) hit.push_back(i);
    }
  }
  return SupportSet(std::move(hit));
}

struct ValidationCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  double average_rate = 0.0;  // m / T
  double minimal_rate = 0.0;  // 4NB blind, 2NB otherwise

  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& c : checks)
      os << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    os << "average rate m/T = " << format_double(average_rate) << " Hz, minimal rate = "
       << format_double(minimal_rate) << " Hz\n";
    return os.str();
  }
};

inline ValidationReport validate_parameters(const ModelParams& params, int M, int m, bool blind) {
  ValidationReport rep;
  try {
    params.validate();
    rep.checks.push_back({"model", true, "parameters well formed"});
  } catch (const std::exception& e) {
    rep.checks.push_back({"model", false, e.what()});
    return rep;
  }
  const double limit = params.f_nyq / params.band_width;
  rep.checks.push_back({"M <= f_nyq/B", static_cast<double>(M) <= limit * (1.0 + 1e-12),
                        std::to_string(M) + " <= " + format_double(limit)});
  const int need = (blind ? 4 : 2) * params.n_bands;
  rep.checks.push_back({blind ? "m >= 4N" : "m >= 2N", m >= need,
                        std::to_string(m) + " >= " + std::to_string(need)});
  rep.checks.push_back({"M odd", M >= 1 && M % 2 == 1, "M = " + std::to_string(M)});
  const double T = M / params.f_nyq;
  rep.average_rate = m / T;
  rep.minimal_rate = need * params.band_width;
  return rep;
}

inline std::string to_key_value(const MultibandSignal& sig) {
  std::ostringstream os;
  os << "f_nyq = " << format_double(sig.params.f_nyq) << '\n';
  os << "n_bands = " << sig.params.n_bands << '\n';
  os << "band_width = " << format_double(sig.params.band_width) << '\n';
  os << "energies =";
  for (double e : sig.params.energies) os << ' ' << format_double(e);
  os << "\ncarriers =";
  for (double f : sig.carriers) os << ' ' << format_double(f);
  os << '\n';
  return os.str();
}

inline MultibandSignal parse_signal(std::string_view text) {
  MultibandSignal sig;
  sig.params.energies.clear();
  bool seen_carriers = false;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "f_nyq") {
      sig.params.f_nyq = parse_double(value);
    } else if (key == "n_bands") {
      sig.params.n_bands = static_cast<int>(parse_int(value));
    } else if (key == "band_width") {
      sig.params.band_width = parse_double(value);
    } else if (key == "energies") {
      for (const auto& tok : split_list(value)) sig.params.energies.push_back(parse_double(tok));
    } else if (key == "carriers") {
      seen_carriers = true;
      for (const auto& tok : split_list(value)) sig.carriers.push_back(parse_double(tok));
    } else {
      throw std::invalid_argument("parse_signal: unknown key '" + key + "'");
    }
  }
  if (!seen_carriers) throw std::invalid_argument("parse_signal: missing carriers");
  sig.validate();
  return sig;
}

}  // namespace mixbank
