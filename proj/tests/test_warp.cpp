#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sfm/spectral.hpp"
#include "sfm/synthetic.hpp"
#include "sfm/tensor.hpp"
#include "sfm/warp.hpp"

#include <random>

using namespace sfm;

namespace {

Plane random_attention(int H, int W, unsigned seed, Scalar spread = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> dist(1.0 - spread, 1.0 + spread);
  Plane a(H, W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) a(i, j) = dist(rng);
  return a / a.sum();
}

Plane uniform_attention(int H, int W) { return Plane::Constant(H, W, 1.0 / (H * W)); }

}  // namespace

TEST_CASE("gaussian window is positive and rotation-symmetric") {
  GaussianKernel k(3);
  Plane w = k.window();
  REQUIRE(w.rows() == 7);
  CHECK(w.minCoeff() > 0);
  CHECK(w(3, 3) == doctest::Approx(1.0));  // no prefactor: peak is exp(0)
  for (int p = 0; p < 7; ++p)
    for (int q = 0; q < 7; ++q) CHECK(w(p, q) == doctest::Approx(w(6 - q, p)).epsilon(1e-15));
  CHECK_THROWS_AS(GaussianKernel(0), std::invalid_argument);
}

TEST_CASE("default radius tracks the larger extent") {
  CHECK(default_sigma(64, 64) == 8);
  CHECK(default_sigma(32, 64) == 8);
  CHECK(default_sigma(4, 4) == 1);
}

TEST_CASE("uniform attention maps to the identity grid") {
  const int H = 12, W = 10;
  CoordinateGrid g = map_coordinates(uniform_attention(H, W), GaussianKernel(3));
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      CHECK(g.u(i, j) == doctest::Approx(Scalar(i) / (H - 1)).epsilon(1e-9));
      CHECK(g.v(i, j) == doctest::Approx(Scalar(j) / (W - 1)).epsilon(1e-9));
    }
}

TEST_CASE("borders are pinned exactly") {
  Plane a = random_attention(9, 9, 2);
  CoordinateGrid g = map_coordinates(a, GaussianKernel(2));
  for (int j = 0; j < 9; ++j) {
    CHECK(g.u(0, j) == 0.0);
    CHECK(g.u(8, j) == 1.0);
  }
  for (int i = 0; i < 9; ++i) {
    CHECK(g.v(i, 0) == 0.0);
    CHECK(g.v(i, 8) == 1.0);
  }
}

TEST_CASE("attention mass pulls coordinates toward itself") {
  // Peak at the center of a 9x9 grid: a pixel above center is pulled down
  // (u above its uniform value), one below center is pulled up.
  Plane a = Plane::Constant(9, 9, 1e-3);
  a(4, 4) = 1.0;
  a /= a.sum();
  CoordinateGrid g = map_coordinates(a, GaussianKernel(2));
  CHECK(g.u(3, 4) > 3.0 / 8.0 + 1e-6);
  CHECK(g.u(5, 4) < 5.0 / 8.0 - 1e-6);
  CHECK(g.v(4, 3) > 3.0 / 8.0 + 1e-6);
}

TEST_CASE("oversized windows and non-positive attention are rejected") {
  CHECK_THROWS_AS(map_coordinates(uniform_attention(4, 4), GaussianKernel(4)),
                  std::invalid_argument);
  Plane bad = uniform_attention(8, 8);
  bad(3, 3) = 0.0;
  CHECK_THROWS_AS(map_coordinates(bad, GaussianKernel(2)), std::invalid_argument);
}

TEST_CASE("grid depends only on the shape of the attention, not its scale") {
  Plane a = random_attention(10, 10, 7);
  CoordinateGrid g1 = map_coordinates(a, GaussianKernel(2));
  CoordinateGrid g2 = map_coordinates(Plane(a * 3.5), GaussianKernel(2));
  CHECK((g1.u - g2.u).abs().maxCoeff() < 1e-12);
  CHECK((g1.v - g2.v).abs().maxCoeff() < 1e-12);
}

TEST_CASE("coordinates stay monotone for moderate attention") {
  for (unsigned seed : {1u, 2u, 3u, 4u, 5u}) {
    Plane a = random_attention(16, 16, seed, 0.8);
    CoordinateGrid g = map_coordinates(a, GaussianKernel(2));
    for (int j = 0; j < 16; ++j)
      for (int i = 1; i < 16; ++i) CHECK(g.u(i, j) >= g.u(i - 1, j) - 1e-9);
    for (int i = 0; i < 16; ++i)
      for (int j = 1; j < 16; ++j) CHECK(g.v(i, j) >= g.v(i, j - 1) - 1e-9);
  }
}

TEST_CASE("modulation with uniform attention is the identity") {
  FeatureMap x(2, 12, 12);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<Scalar> dist(0.0, 1.0);
  for (Eigen::Index t = 0; t < x.data.size(); ++t) x.data[t] = dist(rng);
  auto [y, grid] = modulate(x, uniform_attention(12, 12), GaussianKernel(2));
  CHECK((y.data - x.data).abs().maxCoeff() < 1e-9);
}

TEST_CASE("modulating a constant map stays constant") {
  FeatureMap x(1, 10, 10);
  x.data.setConstant(0.42);
  auto [y, grid] = modulate(x, random_attention(10, 10, 13), GaussianKernel(2));
  CHECK((y.data - 0.42).abs().maxCoeff() < 1e-12);
}

TEST_CASE("modulation rejects mismatched attention extents") {
  FeatureMap x(1, 8, 8);
  CHECK_THROWS_AS(modulate(x, uniform_attention(8, 9), GaussianKernel(2)), std::domain_error);
}

TEST_CASE("edge-focused attention lowers the aliasing ratio of the texture scene") {
  Scene scene = texture_scene(64);
  Plane attn = laplacian_attention(scene.image);
  auto [mod, grid] = modulate(from_plane(scene.image), attn, GaussianKernel(8));
  Scalar before = aliasing_ratio(scene.image);
  Scalar after = aliasing_ratio(Plane(mod.channel(0)));
  CHECK(after < before - 0.05);
}

TEST_CASE("density is flat for the identity grid and peaks where sampling is dense") {
  CoordinateGrid ident(9, 9);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      ident.u(i, j) = i / 8.0;
      ident.v(i, j) = j / 8.0;
    }
  Plane d = density(ident);
  CHECK((d - 1.0).abs().maxCoeff() < 1e-9);

  Plane a = Plane::Constant(9, 9, 1e-3);
  a(4, 4) = 1.0;
  a /= a.sum();
  Plane dc = density(map_coordinates(a, GaussianKernel(2)));
  CHECK(dc(4, 4) > dc(0, 0));
  CHECK(dc(4, 4) > dc(8, 8));
  CHECK(dc.mean() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("grid decimation and serialization round-trip") {
  Plane a = random_attention(9, 9, 5);
  CoordinateGrid g = map_coordinates(a, GaussianKernel(2));

  CoordinateGrid d = decimate_grid(g, 2);
  REQUIRE(d.H == 5);
  REQUIRE(d.W == 5);
  CHECK(d.u(2, 2) == g.u(4, 4));
  CHECK(d.v(1, 3) == g.v(2, 6));
  CHECK_THROWS_AS(decimate_grid(g, 1), std::domain_error);

  Tensor t = grid_to_tensor(g);
  REQUIRE(t.rank() == 3);
  CHECK(t.shape()[0] == 2);
  CoordinateGrid back = grid_from_tensor(t);
  CHECK((back.u - g.u).abs().maxCoeff() == 0.0);
  CHECK((back.v - g.v).abs().maxCoeff() == 0.0);
}

TEST_CASE("coordinate-map adjoint matches finite differences") {
  const int H = 7, W = 6;
  Plane a = random_attention(H, W, 21, 0.4);
  GaussianKernel k(2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<Scalar> dist(-1.0, 1.0);
  Plane du(H, W), dv(H, W), dir(H, W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      du(i, j) = dist(rng);
      dv(i, j) = dist(rng);
      dir(i, j) = dist(rng);
    }

  Plane dattn = map_coordinates_vjp(a, k, du, dv);
  Scalar analytic = (dattn * dir).sum();

  const Scalar eps = 1e-6;
  auto project = [&](const Plane& attn) {
    CoordinateGrid g = map_coordinates(attn, k);
    return (g.u * du).sum() + (g.v * dv).sum();
  };
  Scalar numeric = (project(Plane(a + eps * dir)) - project(Plane(a - eps * dir))) / (2 * eps);
  CHECK(analytic == doctest::Approx(numeric).epsilon(1e-5));
}

TEST_CASE("resampling adjoint matches finite differences") {
  const int H = 8, W = 7;
  FeatureMap x(2, H, W);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<Scalar> dist(-1.0, 1.0);
  for (Eigen::Index t = 0; t < x.data.size(); ++t) x.data[t] = dist(rng);
  CoordinateGrid grid = map_coordinates(random_attention(H, W, 23, 0.5), GaussianKernel(2));

  FeatureMap g(2, H, W);
  for (Eigen::Index t = 0; t < g.data.size(); ++t) g.data[t] = dist(rng);

  FeatureMap dmap(2, H, W);
  Plane du = Plane::Zero(H, W), dv = Plane::Zero(H, W);
  warp_sample_vjp(x, grid, g, &dmap, &du, &dv);

  // Map direction: perturb the sampled features.
  FeatureMap dirm(2, H, W);
  for (Eigen::Index t = 0; t < dirm.data.size(); ++t) dirm.data[t] = dist(rng);
  auto project_map = [&](const FeatureMap& m) {
    return (warp_sample(m, grid).data * g.data).sum();
  };
  const Scalar eps = 1e-6;
  FeatureMap xp = x, xm = x;
  xp.data += eps * dirm.data;
  xm.data -= eps * dirm.data;
  Scalar numeric_m = (project_map(xp) - project_map(xm)) / (2 * eps);
  CHECK((dmap.data * dirm.data).sum() == doctest::Approx(numeric_m).epsilon(1e-6));

  // Grid direction: perturb interior coordinates only, away from the pinned
  // borders and off any integer sampling coordinate.
  Plane diru = Plane::Zero(H, W), dirv = Plane::Zero(H, W);
  for (int i = 1; i + 1 < H; ++i)
    for (int j = 1; j + 1 < W; ++j) {
      diru(i, j) = dist(rng);
      dirv(i, j) = dist(rng);
    }
  auto project_grid = [&](Scalar t) {
    CoordinateGrid gp = grid;
    gp.u += t * diru;
    gp.v += t * dirv;
    return (warp_sample(x, gp).data * g.data).sum();
  };
  Scalar numeric_g = (project_grid(eps) - project_grid(-eps)) / (2 * eps);
  Scalar analytic_g = (du * diru).sum() + (dv * dirv).sum();
  CHECK(analytic_g == doctest::Approx(numeric_g).epsilon(1e-5));
}
