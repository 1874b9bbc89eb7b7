// Modulation: attention-driven non-uniform sampling coordinates and the
// resampling operator that applies them.
#pragma once

#include "sfm/attention.hpp"
#include "sfm/types.hpp"

#include <utility>

namespace sfm {

// Per-pixel sampling coordinates in [0,1]^2. Border rows and columns are
// pinned exactly: u(0,.) = 0, u(H-1,.) = 1, v(.,0) = 0, v(.,W-1) = 1, and u
// is non-decreasing down columns, v along rows, for well-behaved attention.
struct CoordinateGrid {
  int H = 0, W = 0;
  Plane u, v;

  CoordinateGrid() = default;
  CoordinateGrid(int h, int w) : H(h), W(w), u(Plane::Zero(h, w)), v(Plane::Zero(h, w)) {}
};

// Isotropic Gaussian window, radius sigma, extent (2*sigma+1) per axis.
// Stored as the 1-D factor exp(-t^2 / (2 sigma^2)); the 2-D weight is the
// product of the two factors. No normalization prefactor: it cancels in the
// weighted-average ratio.
struct GaussianKernel {
  int sigma = 1;
  Vec g;

  explicit GaussianKernel(int sigma_);
  Scalar weight(int p, int q) const { return g[p + sigma] * g[q + sigma]; }
  Plane window() const;
};

// Radius heuristic: an eighth of the larger extent, at least 1.
int default_sigma(int H, int W);

// Attention-weighted average of neighbor coordinates within the Gaussian
// window (attention is symmetric-pad extended by sigma, neighbor coordinates
// run off the grid virtually), followed by a per-column (u) / per-row (v)
// affine rescale that pins the borders to exactly {0,1}. Outputs are clamped
// to [0,1].
CoordinateGrid map_coordinates(const AttentionMap& attn, const GaussianKernel& kernel);

// Adjoint: gradient of a scalar loss w.r.t. the attention map, given the
// gradients w.r.t. the grid's u and v planes.
Plane map_coordinates_vjp(const AttentionMap& attn, const GaussianKernel& kernel,
                          const Plane& du, const Plane& dv);

// Resample every channel of `map` at the grid's normalized coordinates.
FeatureMap warp_sample(const FeatureMap& map, const CoordinateGrid& grid);

// Adjoint of warp_sample. Non-null outputs are accumulated into; dmap must be
// pre-sized like map, du/dv like the grid planes.
void warp_sample_vjp(const FeatureMap& map, const CoordinateGrid& grid, const FeatureMap& g,
                     FeatureMap* dmap, Plane* du, Plane* dv);

// Full modulation: derive the grid from attention, then resample.
std::pair<FeatureMap, CoordinateGrid> modulate(const FeatureMap& map, const AttentionMap& attn,
                                               const GaussianKernel& kernel);

// Reciprocal local cell area from finite differences of (u,v), normalized to
// mean 1 so an identity grid reads exactly 1 everywhere.
Plane density(const CoordinateGrid& grid);

// Strided subsampling of the grid, matching decimate on feature maps.
CoordinateGrid decimate_grid(const CoordinateGrid& grid, int stride);

Tensor grid_to_tensor(const CoordinateGrid& grid);
CoordinateGrid grid_from_tensor(const Tensor& t);

}  // namespace sfm
