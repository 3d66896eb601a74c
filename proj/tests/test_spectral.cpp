#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "mixbank/frontend.hpp"
#include "mixbank/spectral.hpp"

using namespace mixbank;

namespace {

// (1/T) int_0^T p(t) exp(-j 2 pi n t / T) dt by 8-point Gauss-Legendre on each chip.
cplx quadrature_coeff(const SignMatrix& s, std::size_t ch, long n) {
  static const double x8[] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
                              0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
  static const double w8[] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
                              0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
  const std::size_t M = s.cols();
  const int sub = 16;  // subintervals per chip
  cplx acc{};
  for (std::size_t k = 0; k < M; ++k) {
    for (int q = 0; q < sub; ++q) {
      const double a = (static_cast<double>(k) + static_cast<double>(q) / sub) / static_cast<double>(M);
      const double h = 1.0 / (static_cast<double>(M) * sub);
      for (int g = 0; g < 8; ++g) {
        const double u = a + 0.5 * h * (x8[g] + 1.0);  // t / T
        acc += 0.5 * h * w8[g] * static_cast<double>(s(ch - 1, k)) * std::polar(1.0, -2.0 * kPi * static_cast<double>(n) * u);
      }
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("Fourier coefficients of an all +1 pattern are pure DC") {
  const SignMatrix s(1, 7, std::vector<std::int8_t>(7, 1), 0);
  CHECK(std::abs(fourier_coeff(s, 1, 0) - 1.0) < 1e-15);
  for (long n = -100; n <= 100; ++n)
    if (n != 0) REQUIRE(std::abs(fourier_coeff(s, 1, n)) < 1e-14);
}

TEST_CASE("Fourier coefficient at n = 0 is the mean sign") {
  const SignMatrix s(1, 3, {1, -1, 1}, 0);
  CHECK(std::abs(fourier_coeff(s, 1, 0) - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("Fourier coefficients match quadrature") {
  const auto s = generate_signs(3, 51, 17);
  double worst = 0.0;
  for (std::size_t ch = 1; ch <= 3; ++ch)
    for (long n = -25; n <= 25; ++n) worst = std::max(worst, std::abs(fourier_coeff(s, ch, n) - quadrature_coeff(s, ch, n)));
  CHECK(worst < 1e-9);
}

TEST_CASE("Fourier coefficients are conjugate symmetric and satisfy truncated Parseval") {
  const auto s = generate_signs(5, 51, 18);
  for (std::size_t ch = 1; ch <= 5; ++ch) {
    double energy = 0.0;
    for (long n = -50 * 51; n <= 50 * 51; ++n) {
      const cplx c = fourier_coeff(s, ch, n);
      if (n > 0) REQUIRE(std::abs(c - std::conj(fourier_coeff(s, ch, -n))) < 1e-13);
      energy += std::norm(c);
    }
    CHECK(energy >= 0.99);
    CHECK(energy <= 1.0 + 1e-12);
  }
}

TEST_CASE("measurement matrix times D reproduces the Fourier coefficients") {
  std::mt19937_64 rng(1);
  for (std::size_t M : {5u, 17u, 51u}) {
    const auto s = generate_signs(7, M, rng());
    const auto mm = build_measurement_matrix(s, M / 10e9);
    REQUIRE(mm.n0 == (M - 1) / 2);
    double worst = 0.0;
    for (std::size_t i = 0; i < 7; ++i)
      for (long n = -static_cast<long>(mm.n0); n <= static_cast<long>(mm.n0); ++n) {
        const auto col = mm.column_of(n);
        worst = std::max(worst, std::abs(mm.A(i, col) * mm.d[col] - fourier_coeff(s, i + 1, n)));
      }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("measurement matrix equals S times a shifted DFT matrix") {
  const std::size_t M = 17;
  const auto s = generate_signs(4, M, 3);
  const auto mm = build_measurement_matrix(s, 1.0);
  CMatrix F(M, M);
  for (std::size_t k = 0; k < M; ++k)
    for (std::size_t c = 0; c < M; ++c)
      F(k, c) = std::exp(cplx(0.0, -2.0 * kPi / M * (static_cast<double>(c) - 8.0) * static_cast<double>(k)));
  CHECK(frobenius_norm(matmul(adjoint(F), F) - [&] {
          CMatrix I = CMatrix::identity(M);
          for (auto& v : I.data()) v *= static_cast<double>(M);
          return I;
        }()) < 1e-10);
  CHECK(frobenius_norm(mm.A - matmul(to_complex(s.to_matrix()), F)) < 1e-10);
}

TEST_CASE("all +1 signs give M at the DC column and zero elsewhere") {
  const std::size_t M = 51;
  const SignMatrix s(M, M, std::vector<std::int8_t>(M * M, 1), 0);
  const auto mm = build_measurement_matrix(s, 1.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t c = 0; c < M; ++c)
      REQUIRE(std::abs(mm.A(i, c) - (c == mm.column_of(0) ? cplx(51.0) : cplx(0.0))) < 1e-11);
}

TEST_CASE("D has no zero entries and even M is rejected") {
  const auto mm = build_measurement_matrix(generate_signs(2, 51, 1), 51 / 10e9);
  double smallest = 1.0;
  for (const auto& d : mm.d) smallest = std::min(smallest, std::abs(d));
  CHECK(smallest > 0.0);
  CHECK(std::abs(mm.d[mm.column_of(25)]) == Catch::Approx(smallest));
  CHECK_THROWS_AS(build_measurement_matrix(generate_signs(2, 50, 1), 1.0), std::invalid_argument);
}

TEST_CASE("row selection keeps D and T") {
  const auto mm = build_measurement_matrix(generate_signs(6, 5, 2), 2.0);
  const auto sub = mm.first_rows(3);
  CHECK(sub.channels() == 3);
  CHECK(sub.A(2, 4) == mm.A(2, 4));
  CHECK(sub.d == mm.d);
  CHECK_THROWS(mm.first_rows(7));
}

TEST_CASE("slicing a zero spectrum gives zero slices") {
  const double T = 51 / 10e9;
  SpectrumGrid X{-5e9, 1.0 / (10 * T), std::vector<cplx>(510)};
  const auto sl = slice_spectrum(X, 51, T);
  CHECK(frobenius_norm(sl.values) == 0.0);
  CHECK(sl.freqs.size() == 10);
}

TEST_CASE("a spectral delta at 1 GHz lands in slice 31") {
  const double T = 51 / 10e9;
  const double df = 1.0 / (10 * T);
  SpectrumGrid X{-255 * df, df, std::vector<cplx>(510)};
  const auto b = static_cast<std::size_t>(std::lround((1e9 - X.f_start) / df));
  X.values[b] = 1.0;
  const auto sl = slice_spectrum(X, 51, T);
  for (std::size_t i = 0; i < 51; ++i)
    for (std::size_t k = 0; k < sl.freqs.size(); ++k) {
      const bool hit = std::abs(sl.values(i, k)) > 0.0;
      REQUIRE(hit == (i + 1 == 31 && std::abs(sl.freqs[k] - (1e9 - 5 / T)) < 1e-3 * df));
    }
}

TEST_CASE("slices reassemble to the original spectrum") {
  const double T = 51 / 10e9;
  for (int per_slice : {9, 10}) {
    const double df = 1.0 / (per_slice * T);
    const std::size_t nbins = 51 * static_cast<std::size_t>(per_slice);
    SpectrumGrid X{-static_cast<double>(per_slice / 2 + 25 * per_slice) * df, df, std::vector<cplx>(nbins)};
    std::mt19937_64 rng(per_slice);
    std::normal_distribution<double> g;
    for (auto& v : X.values) v = {g(rng), g(rng)};
    const auto back = assemble_spectrum(slice_spectrum(X, 51, T), X);
    CHECK(back.values == X.values);
  }
}

TEST_CASE("slicing rejects misaligned grids") {
  const double T = 51 / 10e9;
  SpectrumGrid X{0.0, 1.0 / (10.5 * T), std::vector<cplx>(100)};
  CHECK_THROWS_AS(slice_spectrum(X, 51, T), std::invalid_argument);
  SpectrumGrid Y{0.3 / (10 * T), 1.0 / (10 * T), std::vector<cplx>(100)};
  CHECK_THROWS_AS(slice_spectrum(Y, 51, T), std::invalid_argument);
}

TEST_CASE("predicted spectra of zero input are zero") {
  const auto s = generate_signs(4, 51, 1);
  const std::vector<double> f{0.0, 1e7, -3e7};
  CHECK(frobenius_norm(predict_dtft([](double) { return cplx{}; }, s, 51 / 10e9, f)) == 0.0);
}

TEST_CASE("a tone at a slice center contributes through exactly two harmonics") {
  const double T = 51 / 10e9;
  const auto s = generate_signs(3, 51, 2);
  const std::vector<SpectralLine> tone{{7 / T, 0.5}, {-7 / T, 0.5}};
  const auto lines = predict_lines(tone, s, T);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(lines[i].size() == 1);
    CHECK(std::abs(lines[i][0].freq) < 1e-3);
    const cplx expect = 0.5 * (fourier_coeff(s, i + 1, 7) + fourier_coeff(s, i + 1, -7));
    CHECK(std::abs(lines[i][0].amplitude - expect) < 1e-14);
  }
  // Tone strictly inside a slice: both lines map to distinct baseband frequencies.
  const std::vector<SpectralLine> off{{7 / T + 1e6, 0.5}, {-7 / T - 1e6, 0.5}};
  const auto l2 = predict_lines(off, s, T);
  CHECK(l2[0].size() == 2);
}

TEST_CASE("the slice-domain system agrees with the direct prediction") {
  // Column col(n) carries X(f - n/T), which is slice M - col(n): reverse the slice vector.
  const double T = 51 / 10e9;
  const auto s = generate_signs(8, 51, 4);
  const auto mm = build_measurement_matrix(s, T);
  const auto sig = draw_signal(ModelParams{}, 12);
  const auto X = multiband_spectrum(sig);
  std::vector<double> freqs;
  for (int k = -9; k <= 9; ++k) freqs.push_back(k * 0.05 / T + 1.234e5);
  const auto direct = predict_dtft(X, s, T, freqs);
  double worst = 0.0, scale = 0.0;
  for (std::size_t b = 0; b < freqs.size(); ++b) {
    for (std::size_t i = 0; i < 8; ++i) {
      cplx y{};
      for (std::size_t col = 0; col < 51; ++col) {
        const std::size_t slice = slice_of_column(col, 51);
        const cplx xi = X(freqs[b] + static_cast<double>(static_cast<long>(slice) - 26) / T);
        y += mm.A(i, col) * mm.d[col] * xi;
      }
      worst = std::max(worst, std::abs(y - direct(i, b)));
      scale = std::max(scale, std::abs(direct(i, b)));
    }
  }
  REQUIRE(scale > 0.0);
  CHECK(worst < 1e-10 * std::max(1.0, scale));
}

TEST_CASE("simulated stream spectra match the prediction") {
  // Ideal front end on a record of L periods: compare T exp(-j 2 pi f t0) DFT_L(a)
  // with sum_n c_in X_w(f - n/T), X_w the Riemann-sum spectrum of the grid signal.
  FrontEndParams p;
  const double T = p.period();
  const std::size_t L = 51, P = 510;
  const auto grid = GridSpec::centered_periods(T, L, P);
  const auto x = synthesize(draw_signal(ModelParams{}, 21), grid);
  const auto s = generate_signs(p.m, p.M, 22);
  const auto streams = simulate(x, s, p);
  REQUIRE(streams.length() == L);
  const auto Xn = dft(std::span<const double>(x.values));
  const double dt = grid.dt();
  const std::size_t N = L * P;
  auto Xw = [&](double f) {
    const long m = std::lround(f * static_cast<double>(N) * dt);
    const auto idx = static_cast<std::size_t>(((m % static_cast<long>(N)) + static_cast<long>(N)) % static_cast<long>(N));
    return dt * std::polar(1.0, -2.0 * kPi * f * grid.t_start) * Xn[idx];
  };
  std::vector<double> freqs;
  for (long b = -static_cast<long>(L / 2); b <= static_cast<long>(L / 2); ++b) freqs.push_back(b / (L * T));
  const auto pred = predict_dtft(Xw, s, T, freqs);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.m; ++i) {
    std::vector<double> a(streams.data.row(i).begin(), streams.data.row(i).end());
    const auto A = dft(std::span<const double>(a));
    for (std::size_t q = 0; q < freqs.size(); ++q) {
      const long b = std::lround(freqs[q] * L * T);
      const cplx meas = T * std::polar(1.0, -2.0 * kPi * freqs[q] * streams.t0) *
                        A[static_cast<std::size_t>((b + static_cast<long>(L)) % static_cast<long>(L))];
      num += std::norm(meas - pred(i, q));
      den += std::norm(pred(i, q));
    }
  }
  CHECK(std::sqrt(num / den) < 0.05);
}

TEST_CASE("measurement matrices round-trip through CSV") {
  const auto mm = build_measurement_matrix(generate_signs(4, 7, 9), 7 / 10e9);
  std::stringstream ss;
  write_measurement_csv(ss, mm);
  const auto back = read_measurement_csv(ss);
  CHECK(back.A.data() == mm.A.data());
  CHECK(back.d == mm.d);
  CHECK(back.n0 == mm.n0);
  CHECK(back.T == mm.T);
}
