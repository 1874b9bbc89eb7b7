#include "sfm/spectral.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace sfm {

namespace {

using Cx = std::complex<Scalar>;

int smallest_prime_factor(int n) {
  for (int p = 2; p * p <= n; ++p)
    if (n % p == 0) return p;
  return n;
}

// Direct O(n^2) transform, used for prime lengths where the radix split
// bottoms out. sign = -1 forward, +1 inverse.
void naive_dft(const Cx* in, Cx* out, int n, int sign) {
  const Scalar w = sign * 2.0 * std::numbers::pi_v<Scalar> / n;
  for (int k = 0; k < n; ++k) {
    Cx acc = 0;
    for (int j = 0; j < n; ++j) acc += in[j] * std::polar<Scalar>(1.0, w * ((j * k) % n));
    out[k] = acc;
  }
}

// Recursive mixed-radix transform: split off the smallest prime factor p,
// recurse on the p interleaved subsequences, then combine with twiddles.
// No normalization at any level.
void fft_rec(Cx* x, int n, int sign, Cx* scratch) {
  if (n == 1) return;
  int p = smallest_prime_factor(n);
  if (p == n) {
    naive_dft(x, scratch, n, sign);
    std::copy(scratch, scratch + n, x);
    return;
  }
  const int m = n / p;
  for (int r = 0; r < p; ++r)
    for (int t = 0; t < m; ++t) scratch[r * m + t] = x[t * p + r];
  for (int r = 0; r < p; ++r) fft_rec(scratch + r * m, m, sign, x);

  const Scalar w = sign * 2.0 * std::numbers::pi_v<Scalar> / n;
  std::vector<Cx> tw(n);
  for (int q = 0; q < n; ++q) tw[q] = std::polar<Scalar>(1.0, w * q);
  for (int k = 0; k < n; ++k) {
    Cx acc = 0;
    for (int r = 0; r < p; ++r) acc += tw[(r * k) % n] * scratch[r * m + (k % m)];
    x[k] = acc;
  }
}

// In-place 2-D transform of an M x N complex grid, rows then columns.
void fft2_inplace(CPlane& F, int sign) {
  const int M = static_cast<int>(F.rows());
  const int N = static_cast<int>(F.cols());
  std::vector<Cx> scratch(static_cast<std::size_t>(std::max(M, N)));
  std::vector<Cx> col(static_cast<std::size_t>(M));
  for (int i = 0; i < M; ++i) fft_rec(F.data() + static_cast<Eigen::Index>(i) * N, N, sign, scratch.data());
  for (int j = 0; j < N; ++j) {
    for (int i = 0; i < M; ++i) col[i] = F(i, j);
    fft_rec(col.data(), M, sign, scratch.data());
    for (int i = 0; i < M; ++i) F(i, j) = col[i];
  }
}

Plane power_spectrum(const Plane& x) {
  Spectrum s = dft2d(x);
  return s.F.abs2();
}

// Shared lfr kernel on a precomputed |F|^2 grid; strict < threshold.
Scalar lfr_on(const Plane& p2, Scalar xi) {
  const int M = static_cast<int>(p2.rows());
  const int N = static_cast<int>(p2.cols());
  Scalar low = 0, total = 0;
  for (int k = 0; k < M; ++k) {
    const Scalar fk = std::abs(signed_frequency(k, M));
    for (int l = 0; l < N; ++l) {
      const Scalar m = std::max(fk, std::abs(signed_frequency(l, N)));
      total += p2(k, l);
      if (m < xi) low += p2(k, l);
    }
  }
  if (total == 0) return 1.0;
  return low / total;
}

}  // namespace

Spectrum dft2d(const Plane& x) {
  const int M = static_cast<int>(x.rows());
  const int N = static_cast<int>(x.cols());
  if (M < 2 || N < 2) throw std::invalid_argument("dft2d: grid must be at least 2x2");
  Spectrum s;
  s.M = M;
  s.N = N;
  s.F = x.cast<Cx>();
  fft2_inplace(s.F, -1);
  s.F /= static_cast<Scalar>(M) * N;
  return s;
}

Plane idft2d(const Spectrum& s) {
  if (s.F.rows() != s.M || s.F.cols() != s.N)
    throw std::invalid_argument("idft2d: coefficient grid does not match extents");
  CPlane F = s.F;
  fft2_inplace(F, +1);
  return F.real();
}

FrequencyBandSet::FrequencyBandSet(int M_, int N_, Scalar nyquist_)
    : M(M_), N(N_), nyquist(nyquist_) {
  if (M < 1 || N < 1) throw std::invalid_argument("FrequencyBandSet: bad extents");
  high = BPlane::Constant(M, N, false);
  for (int k = 0; k < M; ++k) {
    const Scalar fk = std::abs(signed_frequency(k, M));
    for (int l = 0; l < N; ++l) {
      const Scalar fl = std::abs(signed_frequency(l, N));
      if (fk > nyquist || fl > nyquist) {
        high(k, l) = true;
        ++count;
      }
    }
  }
}

Scalar aliasing_ratio(const Plane& x, Scalar nyquist) {
  Spectrum s = dft2d(x);
  FrequencyBandSet band(s.M, s.N, nyquist);
  Scalar hi = 0, total = 0;
  for (int k = 0; k < s.M; ++k)
    for (int l = 0; l < s.N; ++l) {
      const Scalar mag = std::abs(s.F(k, l));
      total += mag;
      if (band.high(k, l)) hi += mag;
    }
  if (total == 0) return 0.0;
  return hi / total;
}

Scalar aliasing_ratio(const FeatureMap& x, Scalar nyquist) {
  Scalar acc = 0;
  for (int c = 0; c < x.C; ++c) acc += aliasing_ratio(Plane(x.channel(c)), nyquist);
  return acc / x.C;
}

Scalar lfr(const Plane& x, Scalar xi) { return lfr_on(power_spectrum(x), xi); }

Scalar lfr(const FeatureMap& x, Scalar xi) {
  Scalar acc = 0;
  for (int c = 0; c < x.C; ++c) acc += lfr(Plane(x.channel(c)), xi);
  return acc / x.C;
}

Vec rdf(const Plane& x, int bins) {
  if (bins < 2) throw std::invalid_argument("rdf: bins must be >= 2");
  const Plane p2 = power_spectrum(x);
  const Scalar dxi = 0.5 / bins;
  Vec out(bins);
  Scalar prev = lfr_on(p2, 0.0);
  for (int t = 0; t < bins; ++t) {
    const Scalar next = t + 1 == bins ? 1.0 : lfr_on(p2, (t + 1) * dxi);
    out[t] = (next - prev) / dxi;
    prev = next;
  }
  return out;
}

Vec rdf(const FeatureMap& x, int bins) {
  Vec acc = Vec::Zero(bins);
  for (int c = 0; c < x.C; ++c) acc += rdf(Plane(x.channel(c)), bins);
  return acc / x.C;
}

Scalar high_band_power(const Plane& x, Scalar nyquist) {
  Spectrum s = dft2d(x);
  FrequencyBandSet band(s.M, s.N, nyquist);
  if (band.count == 0) return 0.0;
  Scalar acc = 0;
  for (int k = 0; k < s.M; ++k)
    for (int l = 0; l < s.N; ++l)
      if (band.high(k, l)) acc += std::norm(s.F(k, l));
  return acc / static_cast<Scalar>(band.count);
}

Scalar high_band_power(const FeatureMap& x, Scalar nyquist) {
  Scalar acc = 0;
  for (int c = 0; c < x.C; ++c) acc += high_band_power(Plane(x.channel(c)), nyquist);
  return acc / x.C;
}

}  // namespace sfm
