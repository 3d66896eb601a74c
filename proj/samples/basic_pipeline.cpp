// Draws one multiband signal, acquires it with the default 51-channel bank,
// recovers the occupied slices blindly and reconstructs the waveform.
#include <cstdio>

#include "mixbank/mixbank.hpp"

int main() {
  using namespace mixbank;
  ExperimentConfig cfg;
  const GridSpec grid = cfg.grid();

  const auto sig = draw_signal(cfg.model, 2024);
  const auto x = synthesize(sig, grid);
  const auto signs = generate_signs(cfg.frontend.m, cfg.frontend.M, 7);
  const auto mm = build_measurement_matrix(signs, cfg.frontend.period());

  const auto streams = simulate(x, signs, cfg.frontend);
  RecoveryOptions opt;
  opt.sparsity = cfg.sparsity_budget();
  const auto est = recover_support(streams, mm, opt);
  const auto truth = true_support(sig, static_cast<int>(cfg.frontend.M));

  std::printf("true support:      {%s}\n", truth.to_string().c_str());
  std::printf("estimated support: {%s}\n", est.support.to_string().c_str());

  const auto rec = reconstruct(streams, mm, est.support, grid);
  std::printf("relative error over the central half: %.4f\n",
              central_relative_error(rec.signal.values, x.values));
  return est.support == truth ? 0 : 1;
}
