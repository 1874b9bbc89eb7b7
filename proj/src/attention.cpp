#include "sfm/attention.hpp"

#include <cmath>

namespace sfm {

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

constexpr int kPspBins[4] = {1, 2, 3, 7};

// Adaptive pooling region for output cell i of b along an axis of extent n:
// [start, end), with overlapping cells when b does not divide n.
inline int pool_start(int i, int n, int b) { return (i * n) / b; }
inline int pool_end(int i, int n, int b) { return ((i + 1) * n + b - 1) / b; }

// Corner-aligned sampling coordinate into a b-cell axis of extent n.
inline Scalar align_coord(int i, int n, int b) {
  return b > 1 ? static_cast<Scalar>(i) * (b - 1) / (n - 1) : 0.0;
}

struct BilinearTap {
  int i0, i1, j0, j1;
  Scalar w00, w01, w10, w11;
};

BilinearTap taps(Scalar x, Scalar y, int H, int W) {
  int x0 = clampi(static_cast<int>(std::floor(x)), 0, H - 1);
  int y0 = clampi(static_cast<int>(std::floor(y)), 0, W - 1);
  int x1 = std::min(x0 + 1, H - 1);
  int y1 = std::min(y0 + 1, W - 1);
  Scalar fx = x - x0, fy = y - y0;
  return {x0, x1, y0, y1, (1 - fx) * (1 - fy), (1 - fx) * fy, fx * (1 - fy), fx * fy};
}

}  // namespace

Plane kernel_softmax(const Plane& raw) {
  Plane e = (raw - raw.maxCoeff()).exp();
  return e / e.sum();
}

FeatureMap daconv(const FeatureMap& x, const DAConvParams& p) {
  if (p.channels != x.C) throw std::invalid_argument("daconv: channel count mismatch");
  if (p.k % 2 == 0) throw std::invalid_argument("daconv: kernel extent must be odd");
  const int r = p.k / 2;
  FeatureMap out(x.C, x.H, x.W);
  for (int c = 0; c < x.C; ++c) {
    Plane W = kernel_softmax(Plane(p.block(c)));
    auto xin = x.channel(c);
    auto o = out.channel(c);
    for (int i = 0; i < x.H; ++i)
      for (int j = 0; j < x.W; ++j) {
        Scalar acc = 0;
        for (int p_ = -r; p_ <= r; ++p_)
          for (int q = -r; q <= r; ++q) {
            Scalar nb = (p_ == 0 && q == 0)
                            ? 0.0
                            : xin(clampi(i + p_, 0, x.H - 1), clampi(j + q, 0, x.W - 1));
            acc += W(p_ + r, q + r) * (xin(i, j) - nb);
          }
        o(i, j) = acc;
      }
  }
  return out;
}

void daconv_vjp(const FeatureMap& x, const DAConvParams& p, const FeatureMap& g, Vec& draw,
                FeatureMap* dx) {
  if (g.C != x.C || g.H != x.H || g.W != x.W)
    throw std::invalid_argument("daconv_vjp: gradient shape mismatch");
  const int r = p.k / 2;
  draw = Vec::Zero(p.raw.size());
  for (int c = 0; c < x.C; ++c) {
    Plane W = kernel_softmax(Plane(p.block(c)));
    Plane dW = Plane::Zero(p.k, p.k);
    auto xin = x.channel(c);
    auto gc = g.channel(c);
    for (int i = 0; i < x.H; ++i)
      for (int j = 0; j < x.W; ++j) {
        const Scalar gij = gc(i, j);
        for (int p_ = -r; p_ <= r; ++p_)
          for (int q = -r; q <= r; ++q) {
            if (p_ == 0 && q == 0) {
              dW(r, r) += gij * xin(i, j);
              continue;
            }
            const int ni = clampi(i + p_, 0, x.H - 1);
            const int nj = clampi(j + q, 0, x.W - 1);
            dW(p_ + r, q + r) += gij * (xin(i, j) - xin(ni, nj));
            if (dx) dx->channel(c)(ni, nj) -= W(p_ + r, q + r) * gij;
          }
        if (dx) dx->channel(c)(i, j) += gij;  // sum of W over the block is 1
      }
    // Softmax adjoint: draw = W .* (dW - <dW, W>).
    const Scalar inner = (dW * W).sum();
    PlaneMap(draw.data() + static_cast<Eigen::Index>(c) * p.k * p.k, p.k, p.k) =
        W * (dW - inner);
  }
}

Plane laplacian(const Plane& x) {
  const int H = static_cast<int>(x.rows());
  const int W = static_cast<int>(x.cols());
  Plane out(H, W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      out(i, j) = x(clampi(i - 1, 0, H - 1), j) + x(clampi(i + 1, 0, H - 1), j) +
                  x(i, clampi(j - 1, 0, W - 1)) + x(i, clampi(j + 1, 0, W - 1)) - 4 * x(i, j);
  return out;
}

Plane gaussian_blur(const Plane& x, Scalar std_dev, int radius) {
  if (std_dev <= 0 || radius < 0) throw std::invalid_argument("gaussian_blur: bad parameters");
  Vec w(2 * radius + 1);
  for (int t = -radius; t <= radius; ++t)
    w[t + radius] = std::exp(-0.5 * t * t / (std_dev * std_dev));
  w /= w.sum();

  const int H = static_cast<int>(x.rows());
  const int W = static_cast<int>(x.cols());
  Plane tmp(H, W), out(H, W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      Scalar acc = 0;
      for (int t = -radius; t <= radius; ++t) acc += w[t + radius] * x(i, clampi(j + t, 0, W - 1));
      tmp(i, j) = acc;
    }
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      Scalar acc = 0;
      for (int t = -radius; t <= radius; ++t) acc += w[t + radius] * tmp(clampi(i + t, 0, H - 1), j);
      out(i, j) = acc;
    }
  return out;
}

FeatureMap psp_pool(const FeatureMap& x) {
  if (x.H < 7 || x.W < 7) throw std::invalid_argument("psp_pool: spatial extents must be >= 7");
  FeatureMap out(4 * x.C, x.H, x.W);
  int level = 0;
  for (int b : kPspBins) {
    for (int c = 0; c < x.C; ++c) {
      Plane pooled = Plane::Zero(b, b);
      auto xin = x.channel(c);
      for (int pi = 0; pi < b; ++pi)
        for (int pj = 0; pj < b; ++pj) {
          int i0 = pool_start(pi, x.H, b), i1 = pool_end(pi, x.H, b);
          int j0 = pool_start(pj, x.W, b), j1 = pool_end(pj, x.W, b);
          pooled(pi, pj) = xin.block(i0, j0, i1 - i0, j1 - j0).mean();
        }
      auto o = out.channel(level * x.C + c);
      for (int i = 0; i < x.H; ++i)
        for (int j = 0; j < x.W; ++j) {
          BilinearTap t = taps(align_coord(i, x.H, b), align_coord(j, x.W, b), b, b);
          o(i, j) = t.w00 * pooled(t.i0, t.j0) + t.w01 * pooled(t.i0, t.j1) +
                    t.w10 * pooled(t.i1, t.j0) + t.w11 * pooled(t.i1, t.j1);
        }
    }
    ++level;
  }
  return out;
}

FeatureMap psp_vjp(const FeatureMap& g, int C, int H, int W) {
  if (g.C != 4 * C || g.H != H || g.W != W)
    throw std::invalid_argument("psp_vjp: gradient shape mismatch");
  FeatureMap dx(C, H, W);
  int level = 0;
  for (int b : kPspBins) {
    for (int c = 0; c < C; ++c) {
      Plane gpool = Plane::Zero(b, b);
      auto gc = g.channel(level * C + c);
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          BilinearTap t = taps(align_coord(i, H, b), align_coord(j, W, b), b, b);
          gpool(t.i0, t.j0) += t.w00 * gc(i, j);
          gpool(t.i0, t.j1) += t.w01 * gc(i, j);
          gpool(t.i1, t.j0) += t.w10 * gc(i, j);
          gpool(t.i1, t.j1) += t.w11 * gc(i, j);
        }
      auto d = dx.channel(c);
      for (int pi = 0; pi < b; ++pi)
        for (int pj = 0; pj < b; ++pj) {
          int i0 = pool_start(pi, H, b), i1 = pool_end(pi, H, b);
          int j0 = pool_start(pj, W, b), j1 = pool_end(pj, W, b);
          Scalar share = gpool(pi, pj) / (static_cast<Scalar>(i1 - i0) * (j1 - j0));
          d.block(i0, j0, i1 - i0, j1 - j0) += share;
        }
    }
    ++level;
  }
  return dx;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.H != b.H || a.W != b.W) throw std::invalid_argument("concat: spatial extents differ");
  FeatureMap out(a.C + b.C, a.H, a.W);
  out.data.head(a.data.size()) = a.data;
  out.data.tail(b.data.size()) = b.data;
  return out;
}

AttentionMap generate_attention(const FeatureMap& x, const AttentionParams& p,
                                AttentionTrace* trace) {
  FeatureMap cat = concat_channels(daconv(x, p.da), psp_pool(x));
  if (p.proj_w.size() != cat.C)
    throw std::invalid_argument("generate_attention: projection width mismatch");
  Plane logits = Plane::Constant(x.H, x.W, p.proj_b);
  for (int m = 0; m < cat.C; ++m) logits += p.proj_w[m] * Plane(cat.channel(m));
  Plane e = (logits - logits.maxCoeff()).exp();
  Plane attn = e / e.sum();
  if (trace) {
    trace->concat = std::move(cat);
    trace->attn = attn;
  }
  return attn;
}

AttentionGrads attention_vjp(const FeatureMap& x, const AttentionParams& p,
                             const AttentionTrace& trace, const Plane& dattn) {
  const Plane& S = trace.attn;
  Plane dlogit = S * (dattn - (dattn * S).sum());

  AttentionGrads out;
  out.dproj_b = dlogit.sum();
  out.dproj_w = Vec::Zero(p.proj_w.size());
  FeatureMap dcat(trace.concat.C, x.H, x.W);
  for (int m = 0; m < trace.concat.C; ++m) {
    out.dproj_w[m] = (dlogit * Plane(trace.concat.channel(m))).sum();
    dcat.channel(m) = p.proj_w[m] * dlogit;
  }

  FeatureMap g_da(x.C, x.H, x.W);
  g_da.data = dcat.data.head(g_da.data.size());
  daconv_vjp(x, p.da, g_da, out.draw, nullptr);
  return out;
}

AttentionMap laplacian_attention(const Plane& image) {
  Plane a = gaussian_blur(laplacian(image).abs(), 1.0, 3) + 1e-6;
  return a / a.sum();
}

}  // namespace sfm
