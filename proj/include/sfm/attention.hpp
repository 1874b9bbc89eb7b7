// High-frequency-sensitive attention: difference-aware depthwise convolution,
// pyramid pooling context, and a joint spatial softmax. Also the Laplacian
// high-pass used both as a handcrafted attention baseline and by the
// structure-target construction in the objective module.
#pragma once

#include "sfm/types.hpp"

namespace sfm {

// H x W map of strictly positive weights summing to 1.
using AttentionMap = Plane;

// Depthwise difference-aware convolution: one raw k x k weight block per
// channel, softmax-normalized before use so each block sums to 1.
struct DAConvParams {
  int channels = 1;
  int k = 3;
  Vec raw;  // channels * k * k, row-major per channel

  DAConvParams() = default;
  DAConvParams(int channels_, int k_) : channels(channels_), k(k_) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("daconv kernel extent must be odd");
    raw = Vec::Zero(static_cast<Eigen::Index>(channels) * k * k);
  }
  PlaneMap block(int c) {
    return PlaneMap(raw.data() + static_cast<Eigen::Index>(c) * k * k, k, k);
  }
  ConstPlaneMap block(int c) const {
    return ConstPlaneMap(raw.data() + static_cast<Eigen::Index>(c) * k * k, k, k);
  }
};

// Softmax over all k*k entries; result is entrywise positive and sums to 1.
Plane kernel_softmax(const Plane& raw);

// Center-minus-surround response with softmaxed weights and replicate
// padding: out(i,j) = sum_{p,q} W(p,q) * (x(i,j) - [pq != center] * x(i+p,j+q)).
FeatureMap daconv(const FeatureMap& x, const DAConvParams& p);

// Adjoint of daconv. Accumulates the gradient w.r.t. the raw (pre-softmax)
// weights into draw and, when dx is non-null, the input gradient into dx.
void daconv_vjp(const FeatureMap& x, const DAConvParams& p, const FeatureMap& g, Vec& draw,
                FeatureMap* dx);

// 3x3 high-pass [[0,1,0],[1,-4,1],[0,1,0]] with replicate padding.
Plane laplacian(const Plane& x);

// Separable Gaussian blur, radius-limited window, replicate padding.
// Weights are normalized to sum to 1.
Plane gaussian_blur(const Plane& x, Scalar std_dev, int radius);

// Pyramid pooling: adaptive average pool to b x b for b in {1,2,3,7}, then
// corner-aligned bilinear upsample back to H x W. Output has 4*C channels,
// level-major (all C channels of b=1 first).
FeatureMap psp_pool(const FeatureMap& x);

// Adjoint of psp_pool: g has 4*C channels, returns the C-channel input grad.
FeatureMap psp_vjp(const FeatureMap& g, int C, int H, int W);

// Full generator: concat[daconv(x), psp(x)] -> 1x1 projection to one logit
// channel -> joint softmax over all H*W positions.
struct AttentionParams {
  DAConvParams da;
  Vec proj_w;  // 5*C projection weights
  Scalar proj_b = 0;

  AttentionParams() = default;
  explicit AttentionParams(int channels, int k = 3) : da(channels, k) {
    proj_w = Vec::Zero(static_cast<Eigen::Index>(5) * channels);
  }
};

// Forward cache handed to attention_vjp; holds the concatenated feature
// stack and the softmax output.
struct AttentionTrace {
  FeatureMap concat;
  Plane attn;
};

AttentionMap generate_attention(const FeatureMap& x, const AttentionParams& p,
                                AttentionTrace* trace = nullptr);

struct AttentionGrads {
  Vec draw;
  Vec dproj_w;
  Scalar dproj_b = 0;
};

// Backward pass for generate_attention w.r.t. the parameters, given the
// gradient of a scalar loss w.r.t. the attention map.
AttentionGrads attention_vjp(const FeatureMap& x, const AttentionParams& p,
                             const AttentionTrace& trace, const Plane& dattn);

// Handcrafted baseline: blurred Laplacian magnitude with a small positive
// floor, normalized to sum to 1. Flat images yield uniform attention.
AttentionMap laplacian_attention(const Plane& image);

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

}  // namespace sfm
