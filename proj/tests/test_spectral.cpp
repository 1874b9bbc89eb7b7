#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sfm/spectral.hpp"
#include "sfm/tensor.hpp"

#include <numbers>
#include <random>

using namespace sfm;

namespace {

// Reference transform straight from the definition: quadruple loop,
// O((MN)^2). Everything the fast path produces is checked against this.
CPlane naive_dft2d(const Plane& x) {
  const int M = static_cast<int>(x.rows());
  const int N = static_cast<int>(x.cols());
  CPlane F(M, N);
  const Scalar tau = 2.0 * std::numbers::pi_v<Scalar>;
  for (int k = 0; k < M; ++k)
    for (int l = 0; l < N; ++l) {
      std::complex<Scalar> acc = 0;
      for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n) {
          Scalar phase = -tau * (Scalar(k) * m / M + Scalar(l) * n / N);
          acc += x(m, n) * std::polar<Scalar>(1.0, phase);
        }
      F(k, l) = acc / (static_cast<Scalar>(M) * N);
    }
  return F;
}

Plane random_plane(int H, int W, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> dist(-1.0, 1.0);
  Plane p(H, W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) p(i, j) = dist(rng);
  return p;
}

// cos(2*pi*f*m) along rows: constant across each row, oscillating down columns.
Plane row_cosine(int H, int W, Scalar f, Scalar amplitude = 1.0) {
  Plane p(H, W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      p(i, j) = amplitude * std::cos(2.0 * std::numbers::pi_v<Scalar> * f * i);
  return p;
}

}  // namespace

TEST_CASE("fast transform matches the quadruple-loop reference") {
  for (auto [H, W] : {std::pair{4, 4}, {7, 5}, {8, 8}, {6, 9}, {8, 7}}) {
    Plane x = random_plane(H, W, 11 * H + W);
    CPlane ref = naive_dft2d(x);
    Spectrum s = dft2d(x);
    REQUIRE(s.M == H);
    REQUIRE(s.N == W);
    Scalar max_err = (s.F - ref).abs().maxCoeff();
    CHECK(max_err < 1e-9);
  }
}

TEST_CASE("inverse transform recovers the input") {
  for (auto [H, W] : {std::pair{16, 16}, {11, 13}, {32, 24}}) {
    Plane x = random_plane(H, W, 3 * H + W);
    Plane back = idft2d(dft2d(x));
    CHECK((back - x).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("constant map concentrates at DC") {
  Plane x = Plane::Constant(8, 8, 2.5);
  Spectrum s = dft2d(x);
  CHECK(std::abs(s.F(0, 0) - std::complex<Scalar>(2.5)) < 1e-12);
  Scalar off_dc = 0;
  for (int k = 0; k < 8; ++k)
    for (int l = 0; l < 8; ++l)
      if (k || l) off_dc = std::max(off_dc, std::abs(s.F(k, l)));
  CHECK(off_dc < 1e-12);
}

TEST_CASE("quarter-frequency cosine lands on its two bins at magnitude 1/2") {
  Plane x = row_cosine(16, 16, 0.25);
  Spectrum s = dft2d(x);
  CHECK(std::abs(s.F(4, 0)) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::abs(s.F(12, 0)) == doctest::Approx(0.5).epsilon(1e-9));
  Scalar rest = 0;
  for (int k = 0; k < 16; ++k)
    for (int l = 0; l < 16; ++l)
      if (!((k == 4 || k == 12) && l == 0)) rest = std::max(rest, std::abs(s.F(k, l)));
  CHECK(rest < 1e-9);
}

TEST_CASE("real input gives a conjugate-symmetric spectrum") {
  Plane x = random_plane(12, 10, 99);
  Spectrum s = dft2d(x);
  for (int k = 0; k < s.M; ++k)
    for (int l = 0; l < s.N; ++l) {
      auto mirrored = s.F((s.M - k) % s.M, (s.N - l) % s.N);
      CHECK(std::abs(s.F(k, l) - std::conj(mirrored)) < 1e-9);
    }
}

TEST_CASE("Parseval holds under the forward 1/(MN) normalization") {
  Plane x = random_plane(16, 16, 7);
  Spectrum s = dft2d(x);
  Scalar lhs = x.square().sum();
  Scalar rhs = s.F.abs2().sum() * (16.0 * 16.0);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("high band membership follows the signed-frequency rule") {
  FrequencyBandSet band(16, 16, 0.25);
  CHECK_FALSE(band.in_high(0, 0));
  // |signed k|/16 > 1/4 picks k in {5..11}: 7 of 16 indices per axis.
  Eigen::Index expect = 16 * 16 - 9 * 9;
  CHECK(band.count == expect);
  CHECK(band.in_high(5, 0));
  CHECK(band.in_high(0, 11));
  CHECK_FALSE(band.in_high(4, 4));  // exactly at threshold: low band
  CHECK(band.in_high(8, 0));       // Nyquist bin itself
  for (int k = 0; k < 16; ++k)
    for (int l = 0; l < 16; ++l)
      CHECK(band.in_high(k, l) == band.in_high((16 - k) % 16, (16 - l) % 16));
}

TEST_CASE("aliasing ratio separates sub- and super-threshold cosines") {
  CHECK(aliasing_ratio(Plane::Constant(16, 16, 3.0)) == doctest::Approx(0.0));
  CHECK(aliasing_ratio(Plane::Zero(16, 16)) == doctest::Approx(0.0));
  CHECK(aliasing_ratio(row_cosine(16, 16, 3.0 / 8.0)) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(aliasing_ratio(row_cosine(16, 16, 1.0 / 8.0)) == doctest::Approx(0.0).epsilon(1e-9));
  // Content exactly at the threshold frequency counts as low.
  CHECK(aliasing_ratio(row_cosine(16, 16, 0.25)) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("aliasing ratio ignores amplitude scaling") {
  Plane x = random_plane(16, 16, 21);
  CHECK(aliasing_ratio(x * -3.7) == doctest::Approx(aliasing_ratio(x)).epsilon(1e-12));
}

TEST_CASE("aliasing ratio of a stack averages the channels") {
  FeatureMap f(2, 16, 16);
  f.channel(0) = row_cosine(16, 16, 3.0 / 8.0);
  f.channel(1) = row_cosine(16, 16, 1.0 / 8.0);
  CHECK(aliasing_ratio(f) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("low-frequency ratio thresholds strictly") {
  CHECK(lfr(Plane::Constant(8, 8, 1.0), 0.01) == doctest::Approx(1.0));
  Plane x = row_cosine(16, 16, 3.0 / 8.0);
  CHECK(lfr(x, 0.25) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(lfr(x, 0.45) == doctest::Approx(1.0).epsilon(1e-9));
  // Peak sits exactly at 3/8: strict < excludes it at xi == 3/8.
  CHECK(lfr(x, 0.375) == doctest::Approx(0.0).epsilon(1e-9));

  Plane noise = random_plane(16, 16, 5);
  Scalar prev = 0;
  for (int t = 1; t <= 50; ++t) {
    Scalar v = lfr(noise, 0.5 * t / 50.0);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("ratio density integrates back to the full spectrum") {
  // Constant map: everything below any positive threshold, so the whole unit
  // of mass lands in the first bin.
  Vec r = rdf(Plane::Constant(8, 8, 4.0), 10);
  REQUIRE(r.size() == 10);
  CHECK(r[0] == doctest::Approx(20.0).epsilon(1e-9));  // 1.0 / (0.5/10)
  for (int t = 1; t < 10; ++t) CHECK(r[t] == doctest::Approx(0.0));

  // Single cosine at 3/8 with 50 bins: mass enters between 0.37 and 0.38.
  Vec rc = rdf(row_cosine(16, 16, 3.0 / 8.0), 50);
  CHECK(rc[37] * 0.01 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rc.sum() * 0.01 == doctest::Approx(1.0).epsilon(1e-9));

  // Mass exactly at the top fencepost still counts: alternating-sign rows.
  Vec rn = rdf(row_cosine(16, 16, 0.5), 50);
  CHECK(rn.sum() * 0.01 == doctest::Approx(1.0).epsilon(1e-9));

  Vec rr = rdf(random_plane(16, 16, 31), 50);
  Scalar mass = rr.sum() * 0.01;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  for (int t = 0; t < 50; ++t) CHECK(rr[t] >= -1e-12);
}

TEST_CASE("high band power matches the hand count") {
  CHECK(high_band_power(Plane::Constant(16, 16, 2.0)) == doctest::Approx(0.0));
  Plane x = row_cosine(16, 16, 3.0 / 8.0);
  // Two bins of squared magnitude 1/4 spread over |H| = 256 - 81 = 175 bins.
  CHECK(high_band_power(x) == doctest::Approx(0.5 / 175.0).epsilon(1e-9));
  CHECK(high_band_power(row_cosine(16, 16, 3.0 / 8.0, 2.0)) ==
        doctest::Approx(4.0 * 0.5 / 175.0).epsilon(1e-9));
}

TEST_CASE("uniform upsampling halves a cosine's digital frequency") {
  const int H = 64, A = 2;
  // Bin-aligned frequency nearest 0.4; off-bin cosines leak across the whole
  // spectrum and the starting ratio would not be exactly 1.
  const Scalar f = 26.0 / 64.0;
  Plane x = row_cosine(H, H, f);
  CHECK(aliasing_ratio(x) == doctest::Approx(1.0).epsilon(1e-9));

  FeatureMap fm = from_plane(x);
  Plane up(A * H, A * H);
  for (int i = 0; i < A * H; ++i)
    for (int j = 0; j < A * H; ++j)
      up(i, j) = bilinear_at(fm, Scalar(i) / (A * H - 1), Scalar(j) / (A * H - 1), 0);

  Spectrum s = dft2d(up);
  int best_k = 0, best_l = 0;
  Scalar best = -1;
  for (int k = 0; k < s.M; ++k)
    for (int l = 0; l < s.N; ++l) {
      if (k == 0 && l == 0) continue;
      if (std::abs(s.F(k, l)) > best) {
        best = std::abs(s.F(k, l));
        best_k = k;
        best_l = l;
      }
    }
  Scalar fk = std::abs(signed_frequency(best_k, s.M));
  CHECK(std::abs(fk - f / A) <= 1.0 / (A * H) + 1e-12);  // within one bin of f/A
  CHECK(best_l == 0);
  CHECK(aliasing_ratio(up) < aliasing_ratio(x));
}
