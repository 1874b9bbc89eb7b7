// Uniform resampling primitives and tensor file I/O (SFMT binary + P5 PGM).
#pragma once

#include "sfm/types.hpp"

namespace sfm {

// Bilinear sample at normalized (u,v) in [0,1]^2; coordinates map to pixel
// space as u*(H-1), v*(W-1) with clamped indexing at the borders.
Scalar bilinear_at(const FeatureMap& map, Scalar u, Scalar v, int channel);

// Bilinear sample of a single plane at pixel coordinates (x,y), clamped.
// Shared by the warp module and PSP upsampling; no domain restriction.
Scalar bilinear_plane(const ConstPlaneMap& p, Scalar x, Scalar y);
Scalar bilinear_plane(const Plane& p, Scalar x, Scalar y);

// Strided subsampling: output(i,j) = input(i*stride, j*stride) per channel.
// Output extents are ceil(H/stride) x ceil(W/stride).
FeatureMap decimate(const FeatureMap& map, int stride);

// SFMT container: "SFMT" | u32 version=1 | u32 ndim (1..4) | ndim x u32
// extents | f32 payload, row-major, last axis fastest. Little-endian.
// read_tensor also accepts binary PGM ("P5", maxval 255), yielding a (1,H,W)
// tensor scaled to [0,1]. Storage is f32; in-memory values are f64.
Tensor read_tensor(const std::string& path);
void write_tensor(const std::string& path, const Tensor& t);

FeatureMap to_feature_map(const Tensor& t);
Tensor from_feature_map(const FeatureMap& f);

}  // namespace sfm
