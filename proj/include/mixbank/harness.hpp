#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mixbank/frontend.hpp"
#include "mixbank/model.hpp"
#include "mixbank/recovery.hpp"
#include "mixbank/seeding.hpp"
#include "mixbank/spectral.hpp"
#include "mixbank/text.hpp"

#ifndef MIXBANK_VERSION
#define MIXBANK_VERSION "0.1.0"
#endif

namespace mixbank {

struct ExperimentConfig {
  ModelParams model;
  FrontEndParams frontend;
  std::size_t window_periods = 197;  // record length in periods T, centered on t = 0
  std::size_t oversampling = 10;     // grid rate / f_nyq
  std::size_t trials = 100;
  std::vector<Snr> snr_list{Snr::db(5), Snr::db(10), Snr::db(15), Snr::db(20), Snr::db(25)};
  std::vector<std::size_t> channel_subsets{10, 20, 30, 40, 51};
  std::uint64_t master_seed = 1;
  double tau = 1e-2;
  double residual_tol = 1e-2;
  std::size_t sparsity = 0;  // 0 selects 4N
  SnrConvention snr_convention = SnrConvention::norm_ratio;
  bool random_subsets = false;
  bool timing = false;
  std::size_t threads = 1;
  std::string output = "results";

  GridSpec grid() const {
    return GridSpec::centered_periods(frontend.period(), window_periods, oversampling * frontend.M);
  }
  std::size_t sparsity_budget() const {
    return sparsity > 0 ? sparsity : static_cast<std::size_t>(4 * model.n_bands);
  }

  // Empty when the configuration is runnable.
  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    const auto rep = validate_parameters(model, static_cast<int>(frontend.M), static_cast<int>(frontend.m), true);
    for (const auto& c : rep.checks)
      if (!c.passed) out.push_back(c.name + " failed: " + c.detail);
    if (frontend.f_nyq != model.f_nyq) out.push_back("front-end f_nyq differs from model f_nyq");
    if (trials < 1) out.push_back("trials must be >= 1");
    if (snr_list.empty()) out.push_back("snr_list is empty");
    if (channel_subsets.empty()) out.push_back("channel_subsets is empty");
    for (std::size_t mb : channel_subsets)
      if (mb < 1 || mb > frontend.m)
        out.push_back("channel subset " + std::to_string(mb) + " outside 1.." + std::to_string(frontend.m));
    if (window_periods < 1) out.push_back("window_periods must be >= 1");
    if (oversampling < 2) out.push_back("oversampling must be >= 2");
    if (!(tau >= 0.0 && tau < 1.0)) out.push_back("tau must lie in [0, 1)");
    if (threads < 1) out.push_back("threads must be >= 1");
    return out;
  }

  std::string to_key_value() const {
    std::ostringstream os;
    os << "f_nyq = " << format_double(model.f_nyq) << '\n'
       << "n_bands = " << model.n_bands << '\n'
       << "band_width = " << format_double(model.band_width) << '\n'
       << "energies =";
    for (double e : model.energies) os << ' ' << format_double(e);
    os << "\nm = " << frontend.m << '\n'
       << "M = " << frontend.M << '\n'
       << "lowpass = " << to_string(frontend.lowpass) << '\n'
       << "fir_taps = " << frontend.fir_taps << '\n'
       << "fir_cutoff = " << format_double(frontend.fir_cutoff) << '\n'
       << "decimation_offset = " << frontend.decimation_offset << '\n'
       << "window_periods = " << window_periods << '\n'
       << "oversampling = " << oversampling << '\n'
       << "trials = " << trials << '\n'
       << "snr_list =";
    for (const auto& s : snr_list) os << ' ' << s.to_string();
    os << "\nchannel_subsets =";
    for (auto mb : channel_subsets) os << ' ' << mb;
    os << "\nmaster_seed = " << master_seed << '\n'
       << "tau = " << format_double(tau) << '\n'
       << "residual_tol = " << format_double(residual_tol) << '\n'
       << "sparsity = " << sparsity << '\n'
       << "snr_convention = " << to_string(snr_convention) << '\n'
       << "random_subsets = " << (random_subsets ? "true" : "false") << '\n'
       << "timing = " << (timing ? "true" : "false") << '\n'
       << "threads = " << threads << '\n'
       << "output = " << output << '\n';
    return os.str();
  }
};

inline bool parse_bool(std::string_view s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw std::invalid_argument("not a boolean: '" + t + "'");
}

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "f_nyq",         "n_bands",         "band_width",   "energies",     "m",
      "M",             "lowpass",         "fir_taps",     "fir_cutoff",   "decimation_offset",
      "window_periods", "oversampling",   "trials",       "snr_list",     "channel_subsets",
      "master_seed",   "tau",             "residual_tol", "sparsity",     "snr_convention",
      "random_subsets", "timing",         "threads",      "output"};
  return keys;
}

inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto to_size = [](const std::string& v) {
    const long long x = parse_int(v);
    if (x < 0) throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(x);
  };
  if (key == "f_nyq") {
    cfg.model.f_nyq = parse_double(value);
    cfg.frontend.f_nyq = cfg.model.f_nyq;
  } else if (key == "n_bands") {
    cfg.model.n_bands = static_cast<int>(parse_int(value));
  } else if (key == "band_width") {
    cfg.model.band_width = parse_double(value);
  } else if (key == "energies") {
    cfg.model.energies.clear();
    for (const auto& t : split_list(value)) cfg.model.energies.push_back(parse_double(t));
  } else if (key == "m") {
    cfg.frontend.m = to_size(value);
  } else if (key == "M") {
    cfg.frontend.M = to_size(value);
  } else if (key == "lowpass") {
    cfg.frontend.lowpass = parse_lowpass(value);
  } else if (key == "fir_taps") {
    cfg.frontend.fir_taps = to_size(value);
  } else if (key == "fir_cutoff") {
    cfg.frontend.fir_cutoff = parse_double(value);
  } else if (key == "decimation_offset") {
    cfg.frontend.decimation_offset = to_size(value);
  } else if (key == "window_periods") {
    cfg.window_periods = to_size(value);
  } else if (key == "oversampling") {
    cfg.oversampling = to_size(value);
  } else if (key == "trials") {
    cfg.trials = to_size(value);
  } else if (key == "snr_list") {
    cfg.snr_list.clear();
    for (const auto& t : split_list(value)) cfg.snr_list.push_back(Snr::parse(t));
  } else if (key == "channel_subsets") {
    cfg.channel_subsets.clear();
    for (const auto& t : split_list(value)) cfg.channel_subsets.push_back(to_size(t));
  } else if (key == "master_seed") {
    cfg.master_seed = parse_uint64(value);
  } else if (key == "tau") {
    cfg.tau = parse_double(value);
  } else if (key == "residual_tol") {
    cfg.residual_tol = parse_double(value);
  } else if (key == "sparsity") {
    cfg.sparsity = to_size(value);
  } else if (key == "snr_convention") {
    cfg.snr_convention = parse_snr_convention(value);
  } else if (key == "random_subsets") {
    cfg.random_subsets = parse_bool(value);
  } else if (key == "timing") {
    cfg.timing = parse_bool(value);
  } else if (key == "threads") {
    cfg.threads = to_size(value);
  } else if (key == "output") {
    cfg.output = trim(value);
  } else {
    throw std::invalid_argument("unknown configuration key '" + key + "'");
  }
}

inline void apply_config_text(ExperimentConfig& cfg, std::string_view text) {
  for (const auto& [k, v] : parse_key_values(text)) apply_setting(cfg, k, v);
}

struct TrialRecord {
  std::size_t trial = 0;
  std::size_t m_bar = 0;
  Snr snr = Snr::noiseless();
  SupportSet true_support;
  SupportSet estimated_support;
  bool exact_match = false;
  bool superset_match = false;
  double residual = 0.0;  // final SOMP residual relative to |V|_F
  double wall_time_s = 0.0;
};

struct CellSummary {
  std::size_t m_bar = 0;
  Snr snr = Snr::noiseless();
  std::size_t trials = 0;
  std::size_t exact = 0;
  std::size_t superset = 0;

  double exact_pct() const { return trials ? 100.0 * static_cast<double>(exact) / static_cast<double>(trials) : 0.0; }
  double superset_pct() const {
    return trials ? 100.0 * static_cast<double>(superset) / static_cast<double>(trials) : 0.0;
  }
};

struct ExperimentResult {
  std::vector<TrialRecord> records;  // trial-major, then SNR, then m_bar
  std::vector<CellSummary> summary;  // m_bar-major, then SNR
  std::uint64_t sign_seed = 0;

  const CellSummary& cell(std::size_t m_bar, const Snr& snr) const {
    for (const auto& c : summary)
      if (c.m_bar == m_bar && c.snr == snr) return c;
    throw std::out_of_range("no such cell");
  }
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_valid(const ExperimentConfig& cfg) {
  const auto probs = cfg.problems();
  if (probs.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& p : probs) msg += "\n  " + p;
  throw ConfigError(msg);
}

// Every seed drawn by run_experiment, in no particular order.
inline std::vector<std::uint64_t> experiment_seeds(const ExperimentConfig& cfg) {
  std::vector<std::uint64_t> out{derive_seed(cfg.master_seed, SeedStream::signs, 0, 0)};
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const auto ti = static_cast<std::uint32_t>(t);
    out.push_back(derive_seed(cfg.master_seed, SeedStream::signal, 0, ti));
    for (std::size_t s = 0; s < cfg.snr_list.size(); ++s)
      if (!cfg.snr_list[s].is_noiseless())
        out.push_back(derive_seed(cfg.master_seed, SeedStream::noise, static_cast<std::uint32_t>(s), ti));
    if (cfg.random_subsets)
      for (std::size_t c = 0; c < cfg.channel_subsets.size(); ++c)
        out.push_back(derive_seed(cfg.master_seed, SeedStream::subset, static_cast<std::uint32_t>(c), ti));
  }
  return out;
}

namespace detail {

inline std::vector<std::size_t> channel_rows(const ExperimentConfig& cfg, std::size_t subset_index, std::size_t trial) {
  const std::size_t mb = cfg.channel_subsets[subset_index];
  std::vector<std::size_t> rows(cfg.frontend.m);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (cfg.random_subsets) {
    std::mt19937_64 rng(derive_seed(cfg.master_seed, SeedStream::subset, static_cast<std::uint32_t>(subset_index),
                                    static_cast<std::uint32_t>(trial)));
    // Partial Fisher-Yates; std::shuffle's draw pattern is implementation-defined.
    for (std::size_t i = 0; i < mb; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (rows.size() - i));
      std::swap(rows[i], rows[j]);
    }
    rows.resize(mb);
    std::sort(rows.begin(), rows.end());
  } else {
    rows.resize(mb);
  }
  return rows;
}

inline std::vector<TrialRecord> run_trial(const ExperimentConfig& cfg, const SignMatrix& signs,
                                          const MeasurementMatrix& mm, const GridSpec& grid, std::size_t trial) {
  const auto ti = static_cast<std::uint32_t>(trial);
  const auto sig = draw_signal(cfg.model, derive_seed(cfg.master_seed, SeedStream::signal, 0, ti));
  const auto x = synthesize(sig, grid);
  const auto truth = true_support(sig, static_cast<int>(cfg.frontend.M));
  std::vector<TrialRecord> out;
  for (std::size_t s = 0; s < cfg.snr_list.size(); ++s) {
    const auto noisy = add_noise(x, cfg.snr_list[s],
                                 derive_seed(cfg.master_seed, SeedStream::noise, static_cast<std::uint32_t>(s), ti),
                                 cfg.snr_convention);
    const auto streams = simulate(noisy.noisy, signs, cfg.frontend);
    for (std::size_t c = 0; c < cfg.channel_subsets.size(); ++c) {
      const auto t_begin = std::chrono::steady_clock::now();
      const auto rows = channel_rows(cfg, c, trial);
      RecoveryOptions opt;
      opt.sparsity = std::min(cfg.sparsity_budget(), rows.size());
      opt.tau = cfg.tau;
      opt.residual_tol = cfg.residual_tol;
      const auto est = recover_support(streams.select_channels(rows), mm.select_rows(rows), opt);
      TrialRecord rec;
      rec.trial = trial;
      rec.m_bar = rows.size();
      rec.snr = cfg.snr_list[s];
      rec.true_support = truth;
      rec.estimated_support = est.support;
      rec.exact_match = est.support == truth;
      rec.superset_match = est.support.includes(truth);
      rec.residual = est.frame.empty() ? 0.0 : est.somp.relative_residual;
      if (cfg.timing)
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  require_valid(cfg);
  ExperimentResult res;
  res.sign_seed = derive_seed(cfg.master_seed, SeedStream::signs, 0, 0);
  const auto signs = generate_signs(cfg.frontend.m, cfg.frontend.M, res.sign_seed);
  const auto mm = build_measurement_matrix(signs, cfg.frontend.period());
  const auto grid = cfg.grid();

  std::vector<std::vector<TrialRecord>> per_trial(cfg.trials);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t t = next++; t < cfg.trials; t = next++) {
      try {
        per_trial[t] = detail::run_trial(cfg, signs, mm, grid, t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t nthreads = std::min(cfg.threads, cfg.trials);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& v : per_trial)
    for (auto& r : v) res.records.push_back(std::move(r));
  for (std::size_t c = 0; c < cfg.channel_subsets.size(); ++c) {
    for (const auto& snr : cfg.snr_list) {
      CellSummary cell{cfg.channel_subsets[c], snr, 0, 0, 0};
      for (const auto& r : res.records) {
        if (r.m_bar != cell.m_bar || !(r.snr == snr)) continue;
        ++cell.trials;
        cell.exact += r.exact_match ? 1 : 0;
        cell.superset += r.superset_match ? 1 : 0;
      }
      res.summary.push_back(cell);
    }
  }
  return res;
}

inline void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << "trial,m_bar,snr_db,true_support,estimated_support,exact_match,superset_match,residual,wall_time_s\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.6e", r.residual);
    os << r.trial << ',' << r.m_bar << ',' << r.snr.to_string() << ',' << r.true_support.to_string() << ','
       << r.estimated_support.to_string() << ',' << (r.exact_match ? 1 : 0) << ',' << (r.superset_match ? 1 : 0)
       << ',' << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.6f", r.wall_time_s);
    os << buf << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& cells) {
  os << "m_bar,snr_db,trials,exact_pct,superset_pct\n";
  char buf[64];
  for (const auto& c : cells) {
    os << c.m_bar << ',' << c.snr.to_string() << ',' << c.trials << ',';
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f", c.exact_pct(), c.superset_pct());
    os << buf << '\n';
  }
}

inline void write_manifest(std::ostream& os, const ExperimentConfig& cfg, const ExperimentResult& res) {
  os << "# mixbank experiment manifest\n"
     << "version = " << MIXBANK_VERSION << '\n'
     << "sign_seed = " << res.sign_seed << '\n'
     << "sparsity_budget = " << cfg.sparsity_budget() << '\n'
     << "records = " << res.records.size() << '\n'
     << cfg.to_key_value();
}

// Writes trials.csv, summary.csv and manifest.txt under cfg.output.
inline void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentResult& res) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("trials.csv");
    write_trials_csv(f, res.records);
  }
  {
    auto f = open("summary.csv");
    write_summary_csv(f, res.summary);
  }
  {
    auto f = open("manifest.txt");
    write_manifest(f, cfg, res);
  }
}

struct DemoOptions {
  ExperimentConfig config;
  std::uint64_t seed = 1;
  Snr snr = Snr::noiseless();
  bool zero_energy = false;  // replace the signal by x = 0
  std::string waveform_dir;  // CSV dumps when non-empty
};

struct DemoReport {
  std::string text;
  SupportSet true_support;
  SupportSet estimated_support;
  bool exact_match = false;
  double reconstruction_error = 0.0;  // NaN when not computed
};

inline DemoReport run_demo(const DemoOptions& opt) {
  const ExperimentConfig& cfg = opt.config;
  require_valid(cfg);
  char buf[256];
  std::ostringstream os;
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
  };
  const auto grid = cfg.grid();
  const auto sign_seed = derive_seed(opt.seed, SeedStream::signs, 0, 0);
  const auto signs = generate_signs(cfg.frontend.m, cfg.frontend.M, sign_seed);
  const auto mm = build_measurement_matrix(signs, cfg.frontend.period());
  const auto sig = draw_signal(cfg.model, derive_seed(opt.seed, SeedStream::signal, 0, 0));

  DemoReport rep;
  DenseGrid x{grid, std::vector<double>(grid.n_points, 0.0)};
  os << "mixbank demo (version " << MIXBANK_VERSION << ")\n";
  os << "seed: " << opt.seed << '\n';
  os << "model: f_nyq=" << fmt(cfg.model.f_nyq) << " Hz, N=" << cfg.model.n_bands
     << ", B=" << fmt(cfg.model.band_width) << " Hz, energies=";
  for (std::size_t i = 0; i < cfg.model.energies.size(); ++i) os << (i ? " " : "") << fmt(cfg.model.energies[i]);
  os << '\n';
  if (opt.zero_energy) {
    grid.validate(cfg.model.f_nyq);
    os << "signal: zero-energy override (x = 0)\n";
  } else {
    x = synthesize(sig, grid);
    rep.true_support = true_support(sig, static_cast<int>(cfg.frontend.M));
    os << "carriers [Hz]:";
    for (double f : sig.carriers) os << ' ' << fmt(f);
    os << '\n';
  }
  os << "front end: m=" << cfg.frontend.m << " M=" << cfg.frontend.M << " T=" << fmt(cfg.frontend.period())
     << " s, lowpass=" << to_string(cfg.frontend.lowpass) << '\n';
  os << "grid: " << grid.n_points << " points, dt=" << fmt(grid.dt()) << " s, window [" << fmt(grid.t_start) << ", "
     << fmt(grid.t_end) << "] s\n";

  DenseGrid input = x;
  if (opt.zero_energy || opt.snr.is_noiseless()) {
    os << "snr: " << (opt.zero_energy ? "n/a (no signal)" : "noiseless") << '\n';
  } else {
    input = add_noise(x, opt.snr, derive_seed(opt.seed, SeedStream::noise, 0, 0), cfg.snr_convention).noisy;
    os << "snr: " << opt.snr.to_string() << " dB (" << to_string(cfg.snr_convention) << " convention)\n";
  }
  const auto streams = simulate(input, signs, cfg.frontend);
  os << "streams: " << streams.channels() << " x " << streams.length() << " samples at " << fmt(streams.rate)
     << " Hz\n";

  RecoveryOptions ropt;
  ropt.sparsity = std::min(cfg.sparsity_budget(), cfg.frontend.m);
  ropt.tau = cfg.tau;
  ropt.residual_tol = cfg.residual_tol;
  const auto est = recover_support(streams, mm, ropt);
  os << "frame: rank " << est.frame.rank() << " of " << streams.channels() << " (tau=" << fmt(cfg.tau) << ")";
  if (!est.frame.eigvals.empty()) {
    os << ", leading eigenvalues:";
    for (std::size_t k = 0; k < std::min<std::size_t>(5, est.frame.eigvals.size()); ++k)
      os << ' ' << fmt(est.frame.eigvals[k]);
  }
  os << '\n';
  if (est.frame.empty()) {
    os << "somp: skipped (empty frame)\n";
  } else {
    os << "somp: K=" << est.sparsity_used << ", iterations=" << est.somp.order.size()
       << (est.somp.early_exit ? " (early exit)" : "") << (est.somp.rank_deficient ? " (rank deficient)" : "")
       << '\n';
    for (std::size_t it = 0; it < est.somp.order.size(); ++it)
      os << "  iter " << (it + 1) << ": slice " << (est.somp.order[it] + 1) << ", relative residual "
         << fmt(est.somp.residual_history[it]) << '\n';
  }
  rep.estimated_support = est.support;
  rep.exact_match = est.support == rep.true_support;
  os << "true support: {" << rep.true_support.to_string() << "}\n";
  os << "estimated support: {" << rep.estimated_support.to_string() << "}\n";
  os << "exact match: " << (rep.exact_match ? "yes" : "no") << '\n';

  rep.reconstruction_error = std::nan("");
  DenseGrid xhat{grid, std::vector<double>(grid.n_points, 0.0)};
  if (opt.zero_energy) {
    os << "reconstruction: n/a (no signal)\n";
  } else {
    try {
      xhat = reconstruct(streams, mm, est.support, grid).signal;
      rep.reconstruction_error = central_relative_error(xhat.values, x.values);
      os << "reconstruction relative error (central half): " << fmt(rep.reconstruction_error) << '\n';
    } catch (const RankDeficientSupportError& e) {
      os << "reconstruction: " << e.what() << '\n';
    }
  }

  if (!opt.waveform_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(opt.waveform_dir);
    std::ofstream wf(fs::path(opt.waveform_dir) / "waveform.csv", std::ios::binary);
    wf << "t,x,input,reconstruction\n";
    for (std::size_t j = 0; j < grid.n_points; ++j)
      wf << format_double(grid.time(j)) << ',' << format_double(x.values[j]) << ',' << format_double(input.values[j])
         << ',' << format_double(xhat.values[j]) << '\n';
    std::ofstream sf(fs::path(opt.waveform_dir) / "streams.csv", std::ios::binary);
    write_streams_csv(sf, streams);
    os << "waveforms written to " << opt.waveform_dir << '\n';
  }
  rep.text = os.str();
  return rep;
}

}  // namespace mixbank
