#include "sfm/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace sfm {

Scene boundary_scene(int n) {
  if (n < 8) throw std::invalid_argument("boundary_scene: extent too small");
  Scene s;
  s.image = Plane(n, n);
  s.labels = LabelMap(n, n);
  s.num_classes = 2;
  // Three full periods at amplitude 5n/32: steep enough that the staircase
  // dominates the spectrum's high band, which is what adaptive resampling is
  // able to smooth out (the two flat half-planes contribute nothing it can
  // improve).
  for (int j = 0; j < n; ++j) {
    const Scalar bnd =
        n / 2.0 + 5.0 * n / 32.0 * std::sin(2.0 * std::numbers::pi_v<Scalar> * 3.0 * j / n);
    for (int i = 0; i < n; ++i) {
      const bool below = i >= bnd;
      s.image(i, j) = below ? 0.9 : 0.1;
      s.labels(i, j) = below ? 1 : 0;
    }
  }
  return s;
}

Scene texture_scene(int n) {
  if (n < 16) throw std::invalid_argument("texture_scene: extent too small");
  Scene s;
  s.image = Plane::Constant(n, n, 0.3);
  s.labels = LabelMap::Zero(n, n);
  s.num_classes = 2;
  // Square wave of period 3 with duty cycle 2/3; the product pattern puts the
  // fundamental at frequency 1/3 on both axes.
  auto c = [](int t) { return t % 3 != 2 ? 1 : -1; };
  const int r0 = 20 * n / 64, r1 = 44 * n / 64;
  const int c0 = 38 * n / 64, c1 = 58 * n / 64;
  for (int i = r0; i < r1; ++i)
    for (int j = c0; j < c1; ++j) {
      s.image(i, j) = c(i) * c(j) > 0 ? 0.9 : 0.1;
      s.labels(i, j) = 1;
    }
  return s;
}

Scene shapes_scene(int n, unsigned seed, int num_classes) {
  if (n < 8) throw std::invalid_argument("shapes_scene: extent too small");
  if (num_classes < 2) throw std::invalid_argument("shapes_scene: need at least 2 classes");
  Scene s;
  s.image = Plane::Constant(n, n, 0.2);
  s.labels = LabelMap::Zero(n, n);
  s.num_classes = num_classes;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pos(0, n - 1);
  std::uniform_int_distribution<int> ext(n / 8, n / 3);
  std::uniform_real_distribution<Scalar> shade(0.4, 1.0);
  const int rects = 2 * (num_classes - 1);
  for (int t = 0; t < rects; ++t) {
    const int cls = 1 + t % (num_classes - 1);
    const int i0 = pos(rng), j0 = pos(rng);
    const int i1 = std::min(n, i0 + ext(rng)), j1 = std::min(n, j0 + ext(rng));
    const Scalar val = shade(rng);
    for (int i = i0; i < i1; ++i)
      for (int j = j0; j < j1; ++j) {
        s.image(i, j) = val;
        s.labels(i, j) = cls;
      }
  }
  return s;
}

}  // namespace sfm
