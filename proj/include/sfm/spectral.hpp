// 2-D DFT and the frequency-domain metrics built on it: aliasing ratio,
// low-frequency ratio, ratio density, and high-band power.
#pragma once

#include "sfm/types.hpp"

namespace sfm {

// Forward-normalized spectrum of an M x N real grid: the forward transform
// divides by M*N, the inverse applies no factor, so idft2d(dft2d(x)) == x.
struct Spectrum {
  int M = 0, N = 0;
  CPlane F;
};

Spectrum dft2d(const Plane& x);
Plane idft2d(const Spectrum& s);

// Index k in [0,M) read as a signed frequency: bins above M/2 are negative.
inline Scalar signed_frequency(int k, int M) {
  int s = k > M / 2 ? k - M : k;
  return static_cast<Scalar>(s) / static_cast<Scalar>(M);
}

// High band H = {(k,l): |freq_k| > nyquist or |freq_l| > nyquist}. Bins lying
// exactly at the threshold are low-band; DC is never high for nyquist >= 0.
struct FrequencyBandSet {
  int M = 0, N = 0;
  Scalar nyquist = 0.25;
  BPlane high;
  Eigen::Index count = 0;

  FrequencyBandSet(int M, int N, Scalar nyquist = 0.25);
  bool in_high(int k, int l) const { return high(k, l); }
};

// Fraction of spectral magnitude (|F|, not squared) in the high band.
// All-zero input yields 0. The FeatureMap overloads below average per-channel
// values arithmetically.
Scalar aliasing_ratio(const Plane& x, Scalar nyquist = 0.25);
Scalar aliasing_ratio(const FeatureMap& x, Scalar nyquist = 0.25);

// Low-frequency ratio: fraction of |F|^2 in bins with max(|freq_k|,|freq_l|)
// strictly below xi. All-zero input counts as all-low (1.0).
Scalar lfr(const Plane& x, Scalar xi);
Scalar lfr(const FeatureMap& x, Scalar xi);

// Density of lfr over a uniform grid of `bins` steps covering (0, 1/2]:
// entry t is (lfr(xi_{t+1}) - lfr(xi_t)) / dxi with dxi = 0.5/bins. The top
// fencepost counts the full spectrum (inclusive), so sum(rdf)*dxi == 1.
Vec rdf(const Plane& x, int bins);
Vec rdf(const FeatureMap& x, int bins);

// Mean of |F|^2 over the high band, zero if the band is empty.
Scalar high_band_power(const Plane& x, Scalar nyquist = 0.25);
Scalar high_band_power(const FeatureMap& x, Scalar nyquist = 0.25);

}  // namespace sfm
