#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "mixbank/mixbank.hpp"

namespace {

struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
};

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (char& c : s)
    if (c == '_') c = '-';
  return "--" + s;
}

void add_config_flags(CLI::App* app, ConfigFlags& flags) {
  app->add_option("-c,--config", flags.config_file, "key = value configuration file (flags override it)");
  for (const auto& key : mixbank::config_keys())
    app->add_option(flag_name(key), flags.values[key], "configuration key '" + key + "'");
}

mixbank::ExperimentConfig build_config(const CLI::App* app, const ConfigFlags& flags) {
  mixbank::ExperimentConfig cfg;
  if (!flags.config_file.empty()) {
    std::ifstream in(flags.config_file);
    if (!in) throw std::runtime_error("cannot read config file " + flags.config_file);
    std::stringstream ss;
    ss << in.rdbuf();
    mixbank::apply_config_text(cfg, ss.str());
  }
  for (const auto& key : mixbank::config_keys())
    if (app->count(flag_name(key)) > 0) mixbank::apply_setting(cfg, key, flags.values.at(key));
  return cfg;
}

int run_validate(const mixbank::ExperimentConfig& cfg) {
  const auto rep = mixbank::validate_parameters(cfg.model, static_cast<int>(cfg.frontend.M),
                                                static_cast<int>(cfg.frontend.m), true);
  std::cout << rep.to_string();
  const auto probs = cfg.problems();
  for (const auto& p : probs) std::cout << "config: " << p << '\n';
  std::cout << (probs.empty() ? "configuration valid\n" : "configuration invalid\n");
  return probs.empty() ? 0 : 1;
}

int run_sweep(const mixbank::ExperimentConfig& cfg) {
  const auto res = mixbank::run_experiment(cfg);
  mixbank::write_experiment_outputs(cfg, res);
  std::printf("exact support recovery [%%], rows m_bar, columns SNR [dB]\n%8s", "m_bar");
  for (const auto& s : cfg.snr_list) std::printf("%8s", s.to_string().c_str());
  std::printf("\n");
  for (auto mb : cfg.channel_subsets) {
    std::printf("%8zu", mb);
    for (const auto& s : cfg.snr_list) std::printf("%8.1f", res.cell(mb, s).exact_pct());
    std::printf("\n");
  }
  std::printf("outputs written to %s\n", cfg.output.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random sign-mixing sub-Nyquist sampler: simulation, blind recovery, experiments"};
  app.require_subcommand(1);

  ConfigFlags demo_flags, exp_flags, val_flags;
  std::uint64_t demo_seed = 1;
  std::string demo_snr = "inf";
  bool zero_energy = false;
  std::string dump_dir;

  auto* demo = app.add_subcommand("demo", "run one signal through the full pipeline and print a trace");
  add_config_flags(demo, demo_flags);
  demo->add_option("--seed", demo_seed, "demo seed");
  demo->add_option("--snr", demo_snr, "SNR in dB, or inf for noiseless");
  demo->add_flag("--zero-energy", zero_energy, "replace the signal by zero");
  demo->add_option("--dump", dump_dir, "directory for waveform and stream CSVs");

  auto* exp = app.add_subcommand("experiment", "Monte Carlo recovery sweep over channel counts and SNR");
  add_config_flags(exp, exp_flags);

  auto* val = app.add_subcommand("validate", "check parameters and configuration, exit nonzero on failure");
  add_config_flags(val, val_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*val) return run_validate(build_config(val, val_flags));
    if (*exp) {
      const auto cfg = build_config(exp, exp_flags);
      if (!cfg.problems().empty()) {
        run_validate(cfg);
        return 2;
      }
      return run_sweep(cfg);
    }
    if (*demo) {
      mixbank::DemoOptions opt;
      opt.config = build_config(demo, demo_flags);
      if (!opt.config.problems().empty()) {
        run_validate(opt.config);
        return 2;
      }
      opt.seed = demo_seed;
      opt.snr = mixbank::Snr::parse(demo_snr);
      opt.zero_energy = zero_energy;
      opt.waveform_dir = dump_dir;
      std::cout << mixbank::run_demo(opt).text;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
