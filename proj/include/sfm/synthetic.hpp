// Procedural test scenes: small labeled images with known spectral content.
#pragma once

#include "sfm/types.hpp"

namespace sfm {

struct Scene {
  Plane image;
  LabelMap labels;
  int num_classes = 2;
};

// Two classes split by a sinusoidal boundary: hard 0.1 / 0.9 edge running
// horizontally with three full oscillation periods at amplitude 5n/32.
Scene boundary_scene(int n = 64);

// Flat background with one high-frequency textured rectangle: a period-3
// product checkerboard occupying rows [20,44) x cols [38,58) at n=64
// (proportionally scaled otherwise). The fundamental sits at frequency 1/3,
// so moderate densification pulls it under a 1/4 threshold.
Scene texture_scene(int n = 64);

// Seeded random axis-aligned rectangles over a background class.
Scene shapes_scene(int n, unsigned seed, int num_classes = 3);

}  // namespace sfm
