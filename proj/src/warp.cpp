#include "sfm/warp.hpp"

#include "sfm/tensor.hpp"

#include <cmath>

namespace sfm {

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Symmetric (edge-repeating) reflection of an out-of-range index. A single
// reflection suffices because the pad width never exceeds the extent.
inline int reflect_sym(int i, int n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - 1 - i;
  return i;
}

Plane pad_symmetric(const Plane& s, int r) {
  const int H = static_cast<int>(s.rows());
  const int W = static_cast<int>(s.cols());
  Plane out(H + 2 * r, W + 2 * r);
  for (int i = 0; i < H + 2 * r; ++i)
    for (int j = 0; j < W + 2 * r; ++j)
      out(i, j) = s(reflect_sym(i - r, H), reflect_sym(j - r, W));
  return out;
}

void check_window(const GaussianKernel& k, int H, int W) {
  const int window = 2 * k.sigma + 1;
  if (window > 2 * std::min(H, W))
    throw std::invalid_argument("map_coordinates: kernel window exceeds twice the grid extent");
}

// Shared forward state: raw weighted-average coordinates before the border
// rescale, plus the window-sum denominator.
struct RawCoords {
  Plane num_u, num_v, den;
};

RawCoords raw_coords(const AttentionMap& attn, const GaussianKernel& k) {
  const int H = static_cast<int>(attn.rows());
  const int W = static_cast<int>(attn.cols());
  const int r = k.sigma;
  Plane sp = pad_symmetric(attn, r);

  // Column-filtered pass: collapse the q (column) axis of the window.
  Plane P(H + 2 * r, W);   // sum_q g(q) * sp(ip, j+q+r)
  Plane Pj(H + 2 * r, W);  // sum_q g(q) * (j+q) * sp(ip, j+q+r)
  for (int ip = 0; ip < H + 2 * r; ++ip)
    for (int j = 0; j < W; ++j) {
      Scalar s0 = 0, s1 = 0;
      for (int q = -r; q <= r; ++q) {
        const Scalar w = k.g[q + r] * sp(ip, j + q + r);
        s0 += w;
        s1 += w * (j + q);
      }
      P(ip, j) = s0;
      Pj(ip, j) = s1;
    }

  RawCoords out;
  out.num_u = Plane::Zero(H, W);
  out.num_v = Plane::Zero(H, W);
  out.den = Plane::Zero(H, W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      Scalar den = 0, nu = 0, nv = 0;
      for (int p = -r; p <= r; ++p) {
        const Scalar gp = k.g[p + r];
        den += gp * P(i + p + r, j);
        nu += gp * (i + p) * P(i + p + r, j);
        nv += gp * Pj(i + p + r, j);
      }
      out.den(i, j) = den;
      out.num_u(i, j) = nu;
      out.num_v(i, j) = nv;
    }
  return out;
}

}  // namespace

GaussianKernel::GaussianKernel(int sigma_) : sigma(sigma_) {
  if (sigma < 1) throw std::invalid_argument("GaussianKernel: sigma must be >= 1");
  g = Vec(2 * sigma + 1);
  for (int t = -sigma; t <= sigma; ++t)
    g[t + sigma] = std::exp(-0.5 * t * t / (static_cast<Scalar>(sigma) * sigma));
}

Plane GaussianKernel::window() const {
  const int n = 2 * sigma + 1;
  Plane w(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) w(p, q) = g[p] * g[q];
  return w;
}

int default_sigma(int H, int W) {
  return std::max(1, static_cast<int>(std::lround(std::max(H, W) / 8.0)));
}

CoordinateGrid map_coordinates(const AttentionMap& attn, const GaussianKernel& kernel) {
  const int H = static_cast<int>(attn.rows());
  const int W = static_cast<int>(attn.cols());
  if (H < 2 || W < 2) throw std::invalid_argument("map_coordinates: grid must be at least 2x2");
  check_window(kernel, H, W);
  if (attn.minCoeff() <= 0)
    throw std::invalid_argument("map_coordinates: attention must be strictly positive");

  RawCoords rc = raw_coords(attn, kernel);
  Plane ru = rc.num_u / rc.den / static_cast<Scalar>(H - 1);
  Plane rv = rc.num_v / rc.den / static_cast<Scalar>(W - 1);

  CoordinateGrid grid(H, W);
  for (int j = 0; j < W; ++j) {
    const Scalar a = ru(0, j), b = ru(H - 1, j);
    if (b - a < 1e-12) throw std::runtime_error("map_coordinates: degenerate column span");
    for (int i = 0; i < H; ++i)
      grid.u(i, j) = std::clamp((ru(i, j) - a) / (b - a), 0.0, 1.0);
  }
  for (int i = 0; i < H; ++i) {
    const Scalar c = rv(i, 0), d = rv(i, W - 1);
    if (d - c < 1e-12) throw std::runtime_error("map_coordinates: degenerate row span");
    for (int j = 0; j < W; ++j)
      grid.v(i, j) = std::clamp((rv(i, j) - c) / (d - c), 0.0, 1.0);
  }
  return grid;
}

Plane map_coordinates_vjp(const AttentionMap& attn, const GaussianKernel& kernel,
                          const Plane& du, const Plane& dv) {
  const int H = static_cast<int>(attn.rows());
  const int W = static_cast<int>(attn.cols());
  const int r = kernel.sigma;
  check_window(kernel, H, W);

  RawCoords rc = raw_coords(attn, kernel);
  Plane ru = rc.num_u / rc.den / static_cast<Scalar>(H - 1);
  Plane rv = rc.num_v / rc.den / static_cast<Scalar>(W - 1);

  // Back through the affine rescale. Entries clamped at 0/1 pass no gradient.
  Plane dru = Plane::Zero(H, W), drv = Plane::Zero(H, W);
  for (int j = 0; j < W; ++j) {
    const Scalar a = ru(0, j), b = ru(H - 1, j), span = b - a;
    for (int i = 0; i < H; ++i) {
      const Scalar pre = (ru(i, j) - a) / span;
      if (pre < 0.0 || pre > 1.0) continue;
      const Scalar g = du(i, j);
      dru(i, j) += g / span;
      dru(0, j) += g * (ru(i, j) - b) / (span * span);
      dru(H - 1, j) -= g * (ru(i, j) - a) / (span * span);
    }
  }
  for (int i = 0; i < H; ++i) {
    const Scalar c = rv(i, 0), d = rv(i, W - 1), span = d - c;
    for (int j = 0; j < W; ++j) {
      const Scalar pre = (rv(i, j) - c) / span;
      if (pre < 0.0 || pre > 1.0) continue;
      const Scalar g = dv(i, j);
      drv(i, j) += g / span;
      drv(i, 0) += g * (rv(i, j) - d) / (span * span);
      drv(i, W - 1) -= g * (rv(i, j) - c) / (span * span);
    }
  }

  // Back through the ratio into the padded attention, then fold the pad.
  Plane dsp = Plane::Zero(H + 2 * r, W + 2 * r);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const Scalar den = rc.den(i, j);
      const Scalar dnu = dru(i, j) / (den * (H - 1));
      const Scalar dnv = drv(i, j) / (den * (W - 1));
      const Scalar dden = -(dru(i, j) * rc.num_u(i, j) / (H - 1) +
                            drv(i, j) * rc.num_v(i, j) / (W - 1)) /
                          (den * den);
      for (int p = -r; p <= r; ++p)
        for (int q = -r; q <= r; ++q) {
          const Scalar w = kernel.weight(p, q);
          dsp(i + p + r, j + q + r) += w * ((i + p) * dnu + (j + q) * dnv + dden);
        }
    }

  Plane dattn = Plane::Zero(H, W);
  for (int ip = 0; ip < H + 2 * r; ++ip)
    for (int jp = 0; jp < W + 2 * r; ++jp)
      dattn(reflect_sym(ip - r, H), reflect_sym(jp - r, W)) += dsp(ip, jp);
  return dattn;
}

FeatureMap warp_sample(const FeatureMap& map, const CoordinateGrid& grid) {
  if (grid.H != map.H || grid.W != map.W)
    throw std::domain_error("warp_sample: grid extents do not match the feature map");
  FeatureMap out(map.C, map.H, map.W);
  for (int c = 0; c < map.C; ++c)
    for (int i = 0; i < map.H; ++i)
      for (int j = 0; j < map.W; ++j)
        out.at(c, i, j) = bilinear_at(map, grid.u(i, j), grid.v(i, j), c);
  return out;
}

void warp_sample_vjp(const FeatureMap& map, const CoordinateGrid& grid, const FeatureMap& g,
                     FeatureMap* dmap, Plane* du, Plane* dv) {
  const int H = map.H, W = map.W;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const Scalar x = grid.u(i, j) * (H - 1);
      const Scalar y = grid.v(i, j) * (W - 1);
      int x0 = clampi(static_cast<int>(x), 0, std::max(H - 2, 0));
      int y0 = clampi(static_cast<int>(y), 0, std::max(W - 2, 0));
      const int x1 = std::min(x0 + 1, H - 1), y1 = std::min(y0 + 1, W - 1);
      const Scalar fx = x - x0, fy = y - y0;
      for (int c = 0; c < map.C; ++c) {
        const Scalar gc = g.at(c, i, j);
        if (dmap) {
          dmap->at(c, x0, y0) += gc * (1 - fx) * (1 - fy);
          dmap->at(c, x0, y1) += gc * (1 - fx) * fy;
          dmap->at(c, x1, y0) += gc * fx * (1 - fy);
          dmap->at(c, x1, y1) += gc * fx * fy;
        }
        const Scalar v00 = map.at(c, x0, y0), v01 = map.at(c, x0, y1);
        const Scalar v10 = map.at(c, x1, y0), v11 = map.at(c, x1, y1);
        if (du)
          (*du)(i, j) += gc * (H - 1) * ((1 - fy) * (v10 - v00) + fy * (v11 - v01));
        if (dv)
          (*dv)(i, j) += gc * (W - 1) * ((1 - fx) * (v01 - v00) + fx * (v11 - v10));
      }
    }
}

std::pair<FeatureMap, CoordinateGrid> modulate(const FeatureMap& map, const AttentionMap& attn,
                                               const GaussianKernel& kernel) {
  if (static_cast<int>(attn.rows()) != map.H || static_cast<int>(attn.cols()) != map.W)
    throw std::domain_error("modulate: attention extents do not match the feature map");
  CoordinateGrid grid = map_coordinates(attn, kernel);
  return {warp_sample(map, grid), grid};
}

Plane density(const CoordinateGrid& grid) {
  const int H = grid.H, W = grid.W;
  auto ddi = [&](const Plane& f, int i, int j) {
    if (i == 0) return f(1, j) - f(0, j);
    if (i == H - 1) return f(H - 1, j) - f(H - 2, j);
    return (f(i + 1, j) - f(i - 1, j)) / 2;
  };
  auto ddj = [&](const Plane& f, int i, int j) {
    if (j == 0) return f(i, 1) - f(i, 0);
    if (j == W - 1) return f(i, W - 1) - f(i, W - 2);
    return (f(i, j + 1) - f(i, j - 1)) / 2;
  };
  Plane d(H, W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const Scalar det =
          ddi(grid.u, i, j) * ddj(grid.v, i, j) - ddj(grid.u, i, j) * ddi(grid.v, i, j);
      d(i, j) = 1.0 / std::max(std::abs(det), 1e-12);
    }
  return d * (static_cast<Scalar>(H) * W / d.sum());
}

CoordinateGrid decimate_grid(const CoordinateGrid& grid, int stride) {
  if (stride < 2) throw std::domain_error("decimate_grid: stride must be >= 2");
  CoordinateGrid out((grid.H + stride - 1) / stride, (grid.W + stride - 1) / stride);
  for (int i = 0; i < out.H; ++i)
    for (int j = 0; j < out.W; ++j) {
      out.u(i, j) = grid.u(i * stride, j * stride);
      out.v(i, j) = grid.v(i * stride, j * stride);
    }
  return out;
}

Tensor grid_to_tensor(const CoordinateGrid& grid) {
  Tensor t({2u, static_cast<std::uint32_t>(grid.H), static_cast<std::uint32_t>(grid.W)});
  Eigen::Index n = static_cast<Eigen::Index>(grid.H) * grid.W;
  PlaneMap(t.data(), grid.H, grid.W) = grid.u;
  PlaneMap(t.data() + n, grid.H, grid.W) = grid.v;
  return t;
}

CoordinateGrid grid_from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.shape()[0] != 2)
    throw std::invalid_argument("grid_from_tensor: expected a (2,H,W) tensor");
  CoordinateGrid grid(static_cast<int>(t.shape()[1]), static_cast<int>(t.shape()[2]));
  Eigen::Index n = static_cast<Eigen::Index>(grid.H) * grid.W;
  grid.u = ConstPlaneMap(t.data(), grid.H, grid.W);
  grid.v = ConstPlaneMap(t.data() + n, grid.H, grid.W);
  return grid;
}

}  // namespace sfm
