// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include "mixbank/mixbank.hpp"

using namespace mixbank;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(const char* id, const char* title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs < limit_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s %s %s: %s [%.1f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs,
              limit_s, in_time ? "" : ", exceeded");
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

CMatrix gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMatrix a(r, c);
  for (auto& v : a.data()) v = {g(rng), g(rng)};
  return a;
}

// (1/T) int_0^T p(t) exp(-j 2 pi n t / T) dt, composite 10-point Gauss-Legendre with
// 32 panels per chip.
cplx quadrature_coeff(const SignMatrix& s, std::size_t row, long n) {
  static const double x10[] = {-0.9739065285171717, -0.8650633666889845, -0.6794095682990244, -0.4333953941292472,
                               -0.1488743389816312, 0.1488743389816312,  0.4333953941292472,  0.6794095682990244,
                               0.8650633666889845,  0.9739065285171717};
  static const double w10[] = {0.0666713443086881, 0.1494513491505806, 0.2190863625159820, 0.2692667193099963,
                               0.2955242247147529, 0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                               0.1494513491505806, 0.0666713443086881};
  const std::size_t M = s.cols();
  const int panels = 32;
  const double h = 1.0 / (static_cast<double>(M) * panels);
  cplx acc{};
  for (std::size_t k = 0; k < M; ++k) {
    cplx chip{};
    for (int q = 0; q < panels; ++q) {
      const double a = static_cast<double>(k) / static_cast<double>(M) + q * h;
      for (int g = 0; g < 10; ++g) {
        const double u = a + 0.5 * h * (x10[g] + 1.0);
        chip += 0.5 * h * w10[g] * std::polar(1.0, -2.0 * kPi * static_cast<double>(n) * u);
      }
    }
    acc += static_cast<double>(s(row, k)) * chip;
  }
  return acc;
}

Outcome criterion_fourier() {
  const auto s = generate_signs(20, 51, derive_seed(101, SeedStream::signs, 0, 0));
  double worst = 0.0;
  for (std::size_t i = 0; i < 20; ++i)
    for (long n = -25; n <= 25; ++n)
      worst = std::max(worst, std::abs(fourier_coeff(s, i + 1, n) - quadrature_coeff(s, i, n)));
  return {worst < 1e-9, "max |c_closed - c_quad| = " + fmt("%.2e", worst) + " (tol 1e-9, 20 rows, |n| <= 25)"};
}

Outcome criterion_matrix_identity() {
  double worst = 0.0;
  for (std::size_t M : {5u, 17u, 51u}) {
    const auto s = generate_signs(12, M, derive_seed(102, SeedStream::signs, static_cast<std::uint32_t>(M), 0));
    const auto mm = build_measurement_matrix(s, static_cast<double>(M) / 10e9);
    const long n0 = static_cast<long>(mm.n0);
    for (std::size_t i = 0; i < 12; ++i)
      for (long n = -n0; n <= n0; ++n) {
        const std::size_t col = static_cast<std::size_t>(n + n0);
        worst = std::max(worst, std::abs(mm.A(i, col) * mm.d[col] - fourier_coeff(s, i + 1, n)));
      }
  }
  return {worst < 1e-12, "max |A(i,col(n)) d_n - c_in| = " + fmt("%.2e", worst) + " (tol 1e-12, M in {5,17,51})"};
}

// Tone cos(2 pi k t / T + phi) through the default FIR front end. Mixing with p_i leaves
// a constant (c_{i,-k} e^{j phi} + c_{i,k} e^{-j phi}) / 2 in band, so the DFT of the
// valid stream samples is that constant times the sample count at DC and zero elsewhere.
Outcome criterion_frontend() {
  FrontEndParams p;
  p.lowpass = LowpassKind::fir;
  const double T = p.period();
  const std::size_t P = 10 * p.M;
  const std::size_t periods = 81;
  const auto grid = GridSpec::centered_periods(T, periods, P);
  const auto signs = generate_signs(p.m, p.M, derive_seed(103, SeedStream::signs, 0, 0));
  std::mt19937_64 rng(derive_seed(103, SeedStream::signal, 0, 0));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

  // Samples whose filter support lies inside the record.
  const std::size_t half = p.fir_taps / 2;
  std::size_t first = 0, last = 0;
  bool any = false;
  for (std::size_t n = 0; n < periods; ++n) {
    const std::size_t c = p.decimation_offset + n * P;
    if (c >= half && c + half < grid.n_points) {
      if (!any) first = n;
      last = n;
      any = true;
    }
  }
  if (!any) return {false, "record too short for the filter"};
  const std::size_t Lv = last - first + 1;
  // Bins within the Hamming transition width of the cutoff are excluded.
  const double transition = 3.3 / (static_cast<double>(p.fir_taps) * grid.dt());
  const double fs = 1.0 / T;

  double worst = 0.0;
  for (int tone = 0; tone < 10; ++tone) {
    const long k = 1 + static_cast<long>(rng() % 25);
    const double phi = phase(rng);
    DenseGrid x{grid, std::vector<double>(grid.n_points)};
    for (std::size_t j = 0; j < grid.n_points; ++j)
      x.values[j] = std::cos(2.0 * kPi * static_cast<double>(k) * grid.time(j) / T + phi);
    const auto streams = simulate(x, signs, p);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.m; ++i) {
      std::vector<double> a(streams.data.row(i).begin() + static_cast<std::ptrdiff_t>(first),
                            streams.data.row(i).begin() + static_cast<std::ptrdiff_t>(first + Lv));
      const auto Y = dft(std::span<const double>(a));
      const cplx dc = 0.5 * (fourier_coeff(signs, i + 1, -k) * std::polar(1.0, phi) +
                             fourier_coeff(signs, i + 1, k) * std::polar(1.0, -phi));
      for (std::size_t b = 0; b < Lv; ++b) {
        const double f = static_cast<double>(2 * b <= Lv ? static_cast<long>(b) : static_cast<long>(b) - static_cast<long>(Lv)) *
                         fs / static_cast<double>(Lv);
        if (std::abs(f) > p.cutoff() - transition) continue;
        const cplx pred = b == 0 ? dc * static_cast<double>(Lv) : cplx{};
        num += std::norm(Y[b] - pred);
        den += std::norm(pred);
      }
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  return {worst < 0.05, "worst in-band relative error " + fmt("%.3e", worst) + " over 10 tones, FIR order " +
                            std::to_string(p.fir_taps) + ", " + std::to_string(Lv) + " valid samples (tol 5e-2)"};
}

Outcome criterion_somp() {
  std::mt19937_64 rng(derive_seed(104, SeedStream::signal, 0, 0));
  std::normal_distribution<double> g;
  int hits = 0, unique = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto A = gaussian(8, 16, rng);
    std::vector<int> planted;
    while (planted.size() < 2) {
      const int j = static_cast<int>(rng() % 16) + 1;
      if (std::find(planted.begin(), planted.end(), j) == planted.end()) planted.push_back(j);
    }
    CMatrix U(16, 3);
    for (int j : planted)
      for (std::size_t c = 0; c < 3; ++c) U(static_cast<std::size_t>(j - 1), c) = {g(rng), g(rng)};
    const auto V = matmul(A, U);
    const SupportSet truth(planted);

    // Exhaustive search over all 2-subsets: the planted pair must be the only exact fit.
    int exact_fits = 0;
    bool planted_fits = false;
    for (std::size_t a = 0; a < 16; ++a)
      for (std::size_t b = a + 1; b < 16; ++b) {
        const std::vector<std::size_t> cols{a, b};
        const auto As = select_columns(A, std::span<const std::size_t>(cols));
        const double r = frobenius_norm(V - matmul(As, lstsq_apply(As, V))) / frobenius_norm(V);
        if (r < 1e-8) {
          ++exact_fits;
          planted_fits = planted_fits || SupportSet({static_cast<int>(a) + 1, static_cast<int>(b) + 1}) == truth;
        }
      }
    if (exact_fits == 1 && planted_fits) ++unique;
    if (somp({A, V, 2}).support == truth) ++hits;
  }
  return {hits >= 95 && unique == 100, "SOMP exact on " + std::to_string(hits) + "/100 (need >= 95), planted support "
                                           "unique-sparsest in " + std::to_string(unique) + "/100"};
}

Outcome criterion_noiseless() {
  ExperimentConfig cfg;
  cfg.snr_list = {Snr::noiseless()};
  cfg.channel_subsets = {51};
  const auto res = run_experiment(cfg);
  const double pct = res.cell(51, Snr::noiseless()).exact_pct();

  // Reconstruct every exact recovery with the same seeds as the experiment.
  const auto grid = cfg.grid();
  const auto signs = generate_signs(cfg.frontend.m, cfg.frontend.M, res.sign_seed);
  const auto mm = build_measurement_matrix(signs, cfg.frontend.period());
  double worst = 0.0;
  std::size_t successes = 0;
  bool consistent = true;
  for (const auto& r : res.records) {
    const auto sig = draw_signal(cfg.model, derive_seed(cfg.master_seed, SeedStream::signal, 0,
                                                        static_cast<std::uint32_t>(r.trial)));
    const auto x = synthesize(sig, grid);
    const auto streams = simulate(x, signs, cfg.frontend);
    const auto est = recover_support(streams, mm, {cfg.sparsity_budget(), cfg.tau, cfg.residual_tol});
    consistent = consistent && est.support == r.estimated_support;
    if (!r.exact_match) continue;
    ++successes;
    const auto rec = reconstruct(streams, mm, est.support, grid);
    worst = std::max(worst, central_relative_error(rec.signal.values, x.values));
  }
  return {pct >= 95.0 && worst < 0.05 && consistent,
          "exact recovery " + fmt("%.0f", pct) + "% (need >= 95), worst reconstruction error " + fmt("%.3e", worst) +
              " over " + std::to_string(successes) + " successes (tol 5e-2)"};
}

std::string grid_text(const ExperimentResult& res, const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "        m_bar\\snr";
  for (const auto& s : cfg.snr_list) os << ' ' << std::string(5 - std::min<std::size_t>(5, s.to_string().size() + 2), ' ')
                                        << s.to_string() << "dB";
  os << '\n';
  for (std::size_t mb : cfg.channel_subsets) {
    os << "        " << fmt("%9.0f", static_cast<double>(mb));
    for (const auto& s : cfg.snr_list) os << ' ' << fmt("%5.0f", res.cell(mb, s).exact_pct());
    os << '\n';
  }
  return os.str();
}

bool trend_holds(const ExperimentResult& res, const ExperimentConfig& cfg, std::string& why) {
  bool ok = true;
  const auto& ms = cfg.channel_subsets;
  const auto& ss = cfg.snr_list;
  for (std::size_t a = 0; a < ms.size(); ++a)
    for (std::size_t b = 0; b < ss.size(); ++b) {
      const double v = res.cell(ms[a], ss[b]).exact_pct();
      if (b + 1 < ss.size() && res.cell(ms[a], ss[b + 1]).exact_pct() < v - 5.0) {
        ok = false;
        why += " drop along SNR at m_bar=" + std::to_string(ms[a]) + ";";
      }
      if (a + 1 < ms.size() && res.cell(ms[a + 1], ss[b]).exact_pct() < v - 5.0) {
        ok = false;
        why += " drop along m_bar at snr=" + ss[b].to_string() + ";";
      }
    }
  return ok;
}

ExperimentConfig sweep_config() {
  ExperimentConfig cfg;
  cfg.output = "";
  return cfg;
}

Outcome criterion_sweep() {
  const auto cfg = sweep_config();  // single-threaded
  const auto res = run_experiment(cfg);
  std::string why;
  const bool a = trend_holds(res, cfg, why);
  const double top = res.cell(51, Snr::db(25)).exact_pct();
  const double bottom = res.cell(10, Snr::db(5)).exact_pct();
  const bool b = top >= 90.0;
  const bool c = bottom <= 20.0;
  std::printf("  exact-recovery %% (tau=%g):\n%s", cfg.tau, grid_text(res, cfg).c_str());
  return {a && b && c, std::string("(a) monotone within 5pp: ") + (a ? "yes" : "no" + why) + ", (b) " +
                           fmt("%.0f", top) + "% at (51, 25 dB) (need >= 90), (c) " + fmt("%.0f", bottom) +
                           "% at (10, 5 dB) (need <= 20)"};
}

void tau_sensitivity() {
  for (double tau : {1e-1, 1e-3}) {
    auto cfg = sweep_config();
    cfg.tau = tau;
    cfg.threads = std::max(1u, std::thread::hardware_concurrency());
    const auto t0 = Clock::now();
    const auto res = run_experiment(cfg);
    std::string why;
    const bool mono = trend_holds(res, cfg, why);
    std::printf("INFO tau sensitivity tau=%g: (51,25dB)=%.0f%% (10,5dB)=%.0f%% monotone=%s [%.1f s]\n%s", tau,
                res.cell(51, Snr::db(25)).exact_pct(), res.cell(10, Snr::db(5)).exact_pct(), mono ? "yes" : "no",
                std::chrono::duration<double>(Clock::now() - t0).count(), grid_text(res, cfg).c_str());
  }
  std::fflush(stdout);
}

Outcome criterion_numerics() {
  std::mt19937_64 rng(derive_seed(107, SeedStream::signal, 0, 0));
  std::normal_distribution<double> g;
  double eig_worst = 0.0, ls_worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + rng() % 51;
    // Eigendecomposition of a random PSD matrix, alternating real and complex.
    double res = 0.0;
    if (inst % 2 == 0) {
      RMatrix a(n, 1 + rng() % n);
      for (auto& v : a.data()) v = g(rng);
      const auto q = matmul(a, adjoint(a));
      const auto e = hermitian_eig(q);
      RMatrix lam(n, n);
      for (std::size_t k = 0; k < n; ++k) lam(k, k) = e.values[k];
      res = frobenius_norm(matmul(matmul(e.vectors, lam), adjoint(e.vectors)) - q) / frobenius_norm(q);
    } else {
      const auto a = gaussian(n, 1 + rng() % n, rng);
      const auto q = matmul(a, adjoint(a));
      const auto e = hermitian_eig(q);
      CMatrix lam(n, n);
      for (std::size_t k = 0; k < n; ++k) lam(k, k) = e.values[k];
      res = frobenius_norm(matmul(matmul(e.vectors, lam), adjoint(e.vectors)) - q) / frobenius_norm(q);
    }
    eig_worst = std::max(eig_worst, res);
    // Planted least squares with a tall full-rank matrix.
    const std::size_t k = 1 + rng() % n;
    const auto A = gaussian(n, k, rng);
    const auto z = gaussian(k, 1 + rng() % 4, rng);
    const auto sol = lstsq(A, matmul(A, z));
    ls_worst = std::max(ls_worst, frobenius_norm(sol.z - z) / frobenius_norm(z));
  }
  return {eig_worst < 1e-8 && ls_worst < 1e-9, "eig reconstruction " + fmt("%.2e", eig_worst) +
                                                   " (tol 1e-8), lstsq relative " + fmt("%.2e", ls_worst) +
                                                   " (tol 1e-9), 200 instances up to 51"};
}

Outcome criterion_determinism() {
  auto cfg = sweep_config();
  cfg.channel_subsets = {10};
  cfg.snr_list = {Snr::db(5)};
  auto csv = [&] {
    const auto res = run_experiment(cfg);
    std::ostringstream t, s, m;
    write_trials_csv(t, res.records);
    write_summary_csv(s, res.summary);
    write_manifest(m, cfg, res);
    return t.str() + s.str() + m.str();
  };
  const auto first = csv();
  const auto second = csv();
  return {first == second && !first.empty(),
          std::string("cell (10, 5 dB), two runs with master_seed=1: ") +
              (first == second ? "byte-identical" : "differ") + " (" + std::to_string(first.size()) + " bytes)"};
}

}  // namespace

int main() {
  std::printf("mixbank acceptance suite (version %s)\n", MIXBANK_VERSION);
  std::fflush(stdout);
  const auto t0 = Clock::now();
  run("C1", "Fourier coefficients vs quadrature", 10, criterion_fourier);
  run("C2", "measurement matrix identity", 5, criterion_matrix_identity);
  run("C3", "front end vs analytic stream spectrum", 30, criterion_frontend);
  run("C4", "SOMP vs brute force", 30, criterion_somp);
  run("C5", "noiseless end-to-end", 300, criterion_noiseless);
  run("C6", "recovery sweep trend", 1800, criterion_sweep);
  tau_sensitivity();
  run("C7", "numerics kernels", 30, criterion_numerics);
  run("C8", "determinism", 600, criterion_determinism);
  std::printf("%s: %d criteria failed, total %.1f s\n", failures ? "FAIL" : "PASS", failures,
              std::chrono::duration<double>(Clock::now() - t0).count());
  return failures ? 1 : 0;
}
