#include "sfm/demod.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace sfm {

namespace {

#if defined(__SIZEOF_FLOAT128__)
using Wide = __float128;
#else
using Wide = long double;
#endif

// Orientation of (a,b,c): > 0 counter-clockwise, < 0 clockwise, 0 collinear.
// Evaluated in double with a relative tie window of 1e-12; ties re-evaluated
// in wide arithmetic where the differences of input doubles are exact.
Scalar orient2d(Point2 a, Point2 b, Point2 c) {
  const Scalar t1 = (b.u - a.u) * (c.v - a.v);
  const Scalar t2 = (b.v - a.v) * (c.u - a.u);
  const Scalar det = t1 - t2;
  const Scalar mag = std::abs(t1) + std::abs(t2);
  if (std::abs(det) > 1e-12 * mag) return det;
  const Wide w1 = (Wide(b.u) - Wide(a.u)) * (Wide(c.v) - Wide(a.v));
  const Wide w2 = (Wide(b.v) - Wide(a.v)) * (Wide(c.u) - Wide(a.u));
  const Wide e = w1 - w2;
  const Wide tol = ((w1 < 0 ? -w1 : w1) + (w2 < 0 ? -w2 : w2)) * Wide(1e-30);
  if (e > tol) return 1.0;
  if (e < -tol) return -1.0;
  return 0.0;
}

// Strict circumcircle containment for a counter-clockwise triangle (a,b,c):
// > 0 means p lies strictly inside. On-circle ties resolve to "not inside".
bool in_circumcircle(Point2 a, Point2 b, Point2 c, Point2 p) {
  const Scalar ax = a.u - p.u, ay = a.v - p.v;
  const Scalar bx = b.u - p.u, by = b.v - p.v;
  const Scalar cx = c.u - p.u, cy = c.v - p.v;
  const Scalar d1 = (ax * ax + ay * ay) * (bx * cy - by * cx);
  const Scalar d2 = (bx * bx + by * by) * (ax * cy - ay * cx);
  const Scalar d3 = (cx * cx + cy * cy) * (ax * by - ay * bx);
  const Scalar det = d1 - d2 + d3;
  const Scalar mag = std::abs(d1) + std::abs(d2) + std::abs(d3);
  if (std::abs(det) > 1e-12 * mag) return det > 0;

  const Wide wax = Wide(a.u) - Wide(p.u), way = Wide(a.v) - Wide(p.v);
  const Wide wbx = Wide(b.u) - Wide(p.u), wby = Wide(b.v) - Wide(p.v);
  const Wide wcx = Wide(c.u) - Wide(p.u), wcy = Wide(c.v) - Wide(p.v);
  const Wide e = (wax * wax + way * way) * (wbx * wcy - wby * wcx) -
                 (wbx * wbx + wby * wby) * (wax * wcy - way * wcx) +
                 (wcx * wcx + wcy * wcy) * (wax * wby - way * wbx);
  Wide emag = mag;  // double magnitude is an adequate scale reference
  return e > emag * Wide(1e-30);
}

struct Builder {
  std::vector<Point2> pts;                   // 3 super vertices + real points
  std::vector<std::array<int, 3>> tris;      // all counter-clockwise

  void insert(int np) {
    const Point2 p = pts[static_cast<std::size_t>(np)];
    std::vector<int> bad;
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
      const auto& tr = tris[static_cast<std::size_t>(t)];
      if (in_circumcircle(pts[tr[0]], pts[tr[1]], pts[tr[2]], p)) bad.push_back(t);
    }
    // Cavity boundary: directed edges of removed triangles whose reverse is
    // not also removed.
    std::vector<std::pair<int, int>> edges;
    edges.reserve(bad.size() * 3);
    for (int t : bad) {
      const auto& tr = tris[static_cast<std::size_t>(t)];
      edges.emplace_back(tr[0], tr[1]);
      edges.emplace_back(tr[1], tr[2]);
      edges.emplace_back(tr[2], tr[0]);
    }
    auto has_reverse = [&](std::pair<int, int> e) {
      for (const auto& o : edges)
        if (o.first == e.second && o.second == e.first) return true;
      return false;
    };
    for (int k = static_cast<int>(bad.size()) - 1; k >= 0; --k)
      tris.erase(tris.begin() + bad[static_cast<std::size_t>(k)]);
    for (const auto& e : edges) {
      if (has_reverse(e)) continue;
      if (orient2d(pts[e.first], pts[e.second], p) <= 0) continue;
      // Near-collinear lattice triples survive the exact orientation test
      // with areas around 1e-18; such slivers are useless for interpolation
      // and poison point location, so they are dropped (queries falling into
      // the negligible gap extrapolate from a neighbor).
      const Point2 a = pts[e.first], b = pts[e.second];
      const Scalar area2 = (b.u - a.u) * (p.v - a.v) - (b.v - a.v) * (p.u - a.u);
      if (std::abs(area2) < 1e-11) continue;
      tris.push_back({e.first, e.second, np});
    }
  }
};

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

void build_buckets(TriangleMesh& mesh) {
  const int nt = static_cast<int>(mesh.triangles.size());
  mesh.buckets_per_axis = clampi(static_cast<int>(std::sqrt(static_cast<double>(nt)) / 2), 1, 256);
  const int nb = mesh.buckets_per_axis;
  mesh.buckets.assign(static_cast<std::size_t>(nb) * nb, {});
  for (int t = 0; t < nt; ++t) {
    const auto& tr = mesh.triangles[static_cast<std::size_t>(t)];
    Scalar umin = 1e30, umax = -1e30, vmin = 1e30, vmax = -1e30;
    for (int k = 0; k < 3; ++k) {
      const Point2& q = mesh.vertices[static_cast<std::size_t>(tr[k])];
      umin = std::min(umin, q.u);
      umax = std::max(umax, q.u);
      vmin = std::min(vmin, q.v);
      vmax = std::max(vmax, q.v);
    }
    const int bu0 = clampi(static_cast<int>(umin * nb), 0, nb - 1);
    const int bu1 = clampi(static_cast<int>(umax * nb), 0, nb - 1);
    const int bv0 = clampi(static_cast<int>(vmin * nb), 0, nb - 1);
    const int bv1 = clampi(static_cast<int>(vmax * nb), 0, nb - 1);
    for (int bu = bu0; bu <= bu1; ++bu)
      for (int bv = bv0; bv <= bv1; ++bv)
        mesh.buckets[static_cast<std::size_t>(bu) * nb + bv].push_back(t);
  }
}

}  // namespace

Bary barycentric_weights(Point2 p1, Point2 p2, Point2 p3, Point2 q) {
  const Scalar det = (p2.v - p3.v) * (p1.u - p3.u) + (p3.u - p2.u) * (p1.v - p3.v);
  if (std::abs(det) < 1e-12) throw std::domain_error("barycentric_weights: degenerate triangle");
  Bary w;
  w.w1 = ((p2.v - p3.v) * (q.u - p3.u) + (p3.u - p2.u) * (q.v - p3.v)) / det;
  w.w2 = ((p3.v - p1.v) * (q.u - p3.u) + (p1.u - p3.u) * (q.v - p3.v)) / det;
  w.w3 = 1.0 - w.w1 - w.w2;
  return w;
}

TriangleMesh triangulate(const CoordinateGrid& grid) {
  const int n = grid.H * grid.W;
  TriangleMesh mesh;
  mesh.grid_H = grid.H;
  mesh.grid_W = grid.W;
  mesh.src.assign(static_cast<std::size_t>(n), -1);

  // Merge duplicate coordinates, first row-major occurrence wins.
  std::map<std::pair<Scalar, Scalar>, int> seen;
  for (int idx = 0; idx < n; ++idx) {
    const int i = idx / grid.W, j = idx % grid.W;
    const std::pair<Scalar, Scalar> key(grid.u(i, j), grid.v(i, j));
    auto it = seen.find(key);
    if (it != seen.end()) {
      mesh.src[static_cast<std::size_t>(idx)] = it->second;
      continue;
    }
    const int vid = static_cast<int>(mesh.vertices.size());
    seen.emplace(key, vid);
    mesh.vertices.push_back({key.first, key.second});
    mesh.rep.push_back(idx);
    mesh.src[static_cast<std::size_t>(idx)] = vid;
  }
  if (mesh.vertices.size() < 3)
    throw std::domain_error("triangulate: fewer than 3 distinct points");

  Builder bld;
  bld.pts.push_back({-100.0, -100.0});
  bld.pts.push_back({301.0, -100.0});
  bld.pts.push_back({-100.0, 301.0});
  for (const Point2& p : mesh.vertices) bld.pts.push_back(p);
  bld.tris.push_back({0, 1, 2});
  for (int k = 0; k < static_cast<int>(mesh.vertices.size()); ++k) bld.insert(k + 3);

  for (const auto& tr : bld.tris) {
    if (tr[0] < 3 || tr[1] < 3 || tr[2] < 3) continue;
    std::array<int, 3> t = {tr[0] - 3, tr[1] - 3, tr[2] - 3};
    // Canonical rotation: smallest vertex first, orientation preserved.
    while (t[0] > t[1] || t[0] > t[2]) t = {t[1], t[2], t[0]};
    mesh.triangles.push_back(t);
  }
  if (mesh.triangles.empty())
    throw std::runtime_error("triangulate: no triangles (all points collinear)");
  std::sort(mesh.triangles.begin(), mesh.triangles.end());
  build_buckets(mesh);
  return mesh;
}

int TriangleMesh::locate(Scalar qu, Scalar qv, Bary& w, bool& extrapolated) const {
  const int nb = buckets_per_axis;
  const int bu = clampi(static_cast<int>(qu * nb), 0, nb - 1);
  const int bv = clampi(static_cast<int>(qv * nb), 0, nb - 1);
  int best_t = -1;
  Scalar best_viol = std::numeric_limits<Scalar>::infinity();
  Bary best_w;

  auto scan_bucket = [&](int cu, int cv) -> int {
    for (int t : buckets[static_cast<std::size_t>(cu) * nb + cv]) {
      const auto& tr = triangles[static_cast<std::size_t>(t)];
      const Point2 p1 = vertices[tr[0]], p2 = vertices[tr[1]], p3 = vertices[tr[2]];
      const Scalar det = (p2.v - p3.v) * (p1.u - p3.u) + (p3.u - p2.u) * (p1.v - p3.v);
      if (std::abs(det) < 1e-12) continue;  // sliver, unusable for weights
      Bary bw = barycentric_weights(p1, p2, p3, {qu, qv});
      const Scalar viol = -std::min({bw.w1, bw.w2, bw.w3});
      if (viol <= 1e-9) {
        w = bw;
        return t;
      }
      if (viol < best_viol) {
        best_viol = viol;
        best_t = t;
        best_w = bw;
      }
    }
    return -1;
  };

  for (int r = 0; r < nb; ++r) {
    int found = -1;
    for (int cu = bu - r; cu <= bu + r && found < 0; ++cu) {
      if (cu < 0 || cu >= nb) continue;
      for (int cv = bv - r; cv <= bv + r && found < 0; ++cv) {
        if (cv < 0 || cv >= nb) continue;
        if (std::max(std::abs(cu - bu), std::abs(cv - bv)) != r) continue;  // ring only
        found = scan_bucket(cu, cv);
      }
    }
    if (found >= 0) {
      extrapolated = false;
      return found;
    }
  }
  if (best_t < 0) throw std::runtime_error("locate: mesh has no usable triangle");
  extrapolated = true;
  w = best_w;
  return best_t;
}

std::string mesh_to_json(const TriangleMesh& mesh) {
  std::string out = "{\"vertices\":[";
  char buf[80];
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s[%.17g,%.17g]", i ? "," : "", mesh.vertices[i].u,
                  mesh.vertices[i].v);
    out += buf;
  }
  out += "],\"triangles\":[";
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%s[%d,%d,%d]", t ? "," : "", mesh.triangles[t][0],
                  mesh.triangles[t][1], mesh.triangles[t][2]);
    out += buf;
  }
  out += "]}";
  return out;
}

FeatureMap nuu_upsample(const FeatureMap& modulated, const TriangleMesh& mesh, int outH,
                        int outW) {
  if (mesh.grid_H != modulated.H || mesh.grid_W != modulated.W)
    throw std::invalid_argument("nuu_upsample: mesh and feature extents differ");
  if (outH < 2 || outW < 2) throw std::invalid_argument("nuu_upsample: output must be >= 2x2");
  FeatureMap out(modulated.C, outH, outW);
  int fallbacks = 0;
  for (int qi = 0; qi < outH; ++qi)
    for (int qj = 0; qj < outW; ++qj) {
      Bary w;
      bool extrapolated = false;
      const int t = mesh.locate(static_cast<Scalar>(qi) / (outH - 1),
                                static_cast<Scalar>(qj) / (outW - 1), w, extrapolated);
      if (extrapolated) ++fallbacks;
      const auto& tr = mesh.triangles[static_cast<std::size_t>(t)];
      for (int c = 0; c < modulated.C; ++c) {
        Scalar acc = 0;
        const Scalar ws[3] = {w.w1, w.w2, w.w3};
        for (int k = 0; k < 3; ++k) {
          const int r = mesh.rep[static_cast<std::size_t>(tr[k])];
          acc += ws[k] * modulated.at(c, r / modulated.W, r % modulated.W);
        }
        out.at(c, qi, qj) = acc;
      }
    }
  if (fallbacks > 0)
    std::fprintf(stderr,
                 "nuu_upsample: %d of %d queries had no containing triangle, extrapolated "
                 "from the nearest\n",
                 fallbacks, outH * outW);
  return out;
}

FeatureMap nuu_upsample(const FeatureMap& modulated, const CoordinateGrid& grid, int outH,
                        int outW) {
  return nuu_upsample(modulated, triangulate(grid), outH, outW);
}

FeatureMap nuu_upsample_vjp(const TriangleMesh& mesh, int channels, const FeatureMap& g) {
  FeatureMap dmod(channels, mesh.grid_H, mesh.grid_W);
  for (int qi = 0; qi < g.H; ++qi)
    for (int qj = 0; qj < g.W; ++qj) {
      Bary w;
      bool extrapolated = false;
      const int t = mesh.locate(static_cast<Scalar>(qi) / (g.H - 1),
                                static_cast<Scalar>(qj) / (g.W - 1), w, extrapolated);
      const auto& tr = mesh.triangles[static_cast<std::size_t>(t)];
      const Scalar ws[3] = {w.w1, w.w2, w.w3};
      for (int c = 0; c < channels; ++c) {
        const Scalar gc = g.at(c, qi, qj);
        for (int k = 0; k < 3; ++k) {
          const int r = mesh.rep[static_cast<std::size_t>(tr[k])];
          dmod.at(c, r / mesh.grid_W, r % mesh.grid_W) += ws[k] * gc;
        }
      }
    }
  return dmod;
}

FeatureMap lprm_relation(const FeatureMap& x, const LprmParams& p, int dilation) {
  if (x.C != p.in_channels) throw std::invalid_argument("lprm_relation: channel mismatch");
  if (dilation < 1) throw std::invalid_argument("lprm_relation: bad dilation");
  FeatureMap rel(9, x.H, x.W);
  Vec z(9);
  for (int i = 0; i < x.H; ++i)
    for (int j = 0; j < x.W; ++j) {
      for (int oc = 0; oc < 9; ++oc) {
        Scalar acc = p.b[oc];
        for (int ic = 0; ic < x.C; ++ic)
          for (int kp = 0; kp < 9; ++kp) {
            const int ni = clampi(i + (kp / 3 - 1) * dilation, 0, x.H - 1);
            const int nj = clampi(j + (kp % 3 - 1) * dilation, 0, x.W - 1);
            acc += p.wat(oc, ic, kp) * x.at(ic, ni, nj);
          }
        z[oc] = acc;
      }
      const Scalar zmax = z.maxCoeff();
      Scalar denom = 0;
      for (int oc = 0; oc < 9; ++oc) {
        z[oc] = std::exp(z[oc] - zmax);
        denom += z[oc];
      }
      for (int oc = 0; oc < 9; ++oc) rel.at(oc, i, j) = z[oc] / denom;
    }
  return rel;
}

FeatureMap lprm_refine(const FeatureMap& pred, const FeatureMap& rel, int dilation) {
  if (rel.C != 9 || rel.H != pred.H || rel.W != pred.W)
    throw std::invalid_argument("lprm_refine: relation field shape mismatch");
  FeatureMap out(pred.C, pred.H, pred.W);
  for (int c = 0; c < pred.C; ++c)
    for (int i = 0; i < pred.H; ++i)
      for (int j = 0; j < pred.W; ++j) {
        Scalar acc = 0;
        for (int kp = 0; kp < 9; ++kp) {
          const int ni = clampi(i + (kp / 3 - 1) * dilation, 0, pred.H - 1);
          const int nj = clampi(j + (kp % 3 - 1) * dilation, 0, pred.W - 1);
          acc += rel.at(kp, i, j) * pred.at(c, ni, nj);
        }
        out.at(c, i, j) = acc;
      }
  return out;
}

FeatureMap lprm_relation_vjp(const FeatureMap& x, const LprmParams& p, int dilation,
                             const FeatureMap& rel, const FeatureMap& g, Vec& dw, Vec& db) {
  if (dw.size() != p.w.size()) dw = Vec::Zero(p.w.size());
  if (db.size() != p.b.size()) db = Vec::Zero(p.b.size());
  FeatureMap dx(x.C, x.H, x.W);
  Vec dz(9);
  for (int i = 0; i < x.H; ++i)
    for (int j = 0; j < x.W; ++j) {
      Scalar inner = 0;
      for (int oc = 0; oc < 9; ++oc) inner += g.at(oc, i, j) * rel.at(oc, i, j);
      for (int oc = 0; oc < 9; ++oc)
        dz[oc] = rel.at(oc, i, j) * (g.at(oc, i, j) - inner);
      for (int oc = 0; oc < 9; ++oc) {
        db[oc] += dz[oc];
        for (int ic = 0; ic < x.C; ++ic)
          for (int kp = 0; kp < 9; ++kp) {
            const int ni = clampi(i + (kp / 3 - 1) * dilation, 0, x.H - 1);
            const int nj = clampi(j + (kp % 3 - 1) * dilation, 0, x.W - 1);
            dw[(static_cast<Eigen::Index>(oc) * x.C + ic) * 9 + kp] += dz[oc] * x.at(ic, ni, nj);
            dx.at(ic, ni, nj) += p.wat(oc, ic, kp) * dz[oc];
          }
      }
    }
  return dx;
}

void lprm_refine_vjp(const FeatureMap& pred, const FeatureMap& rel, int dilation,
                     const FeatureMap& g, FeatureMap* dpred, FeatureMap* drel) {
  for (int i = 0; i < pred.H; ++i)
    for (int j = 0; j < pred.W; ++j)
      for (int kp = 0; kp < 9; ++kp) {
        const int ni = clampi(i + (kp / 3 - 1) * dilation, 0, pred.H - 1);
        const int nj = clampi(j + (kp % 3 - 1) * dilation, 0, pred.W - 1);
        for (int c = 0; c < pred.C; ++c) {
          const Scalar gc = g.at(c, i, j);
          if (dpred) dpred->at(c, ni, nj) += rel.at(kp, i, j) * gc;
          if (drel) drel->at(kp, i, j) += pred.at(c, ni, nj) * gc;
        }
      }
}

MsauParams MsauParams::make(int xcomp_channels, std::vector<int> dilations) {
  MsauParams p;
  p.dilations = std::move(dilations);
  if (p.dilations.empty()) throw std::invalid_argument("msau: empty dilation list");
  p.stages.emplace_back(xcomp_channels);
  for (std::size_t s = 1; s < p.dilations.size(); ++s) p.stages.emplace_back(9);
  return p;
}

FeatureMap msau(const FeatureMap& pred, const FeatureMap& xcomp, const CoordinateGrid& grid,
                const MsauParams& params, int outH, int outW, MsauTrace* trace) {
  if (params.stages.size() != params.dilations.size())
    throw std::invalid_argument("msau: stage/dilation count mismatch");
  if (pred.H != xcomp.H || pred.W != xcomp.W)
    throw std::invalid_argument("msau: pred and xcomp extents differ");

  TriangleMesh mesh = triangulate(grid);
  FeatureMap y = nuu_upsample(pred, mesh, outH, outW);
  FeatureMap up_comp = nuu_upsample(xcomp, mesh, outH, outW);
  const FeatureMap up_pred = y;

  if (trace) {
    trace->mesh = mesh;
    trace->up_pred = up_pred;
    trace->up_comp = up_comp;
    trace->executed.clear();
    trace->stage_in.clear();
    trace->relations.clear();
    trace->y_in.clear();
  }

  const FeatureMap* input = &up_comp;
  FeatureMap rel;
  for (std::size_t s = 0; s < params.dilations.size(); ++s) {
    const int d = params.dilations[s];
    if (2 * d > std::min(outH, outW)) {
      std::fprintf(stderr, "msau: skipping stage with dilation %d on a %dx%d output\n", d, outH,
                   outW);
      continue;
    }
    FeatureMap r = lprm_relation(*input, params.stages[s], d);
    const FeatureMap& yin = params.refine_original ? up_pred : y;
    FeatureMap ynext = lprm_refine(yin, r, d);
    if (trace) {
      trace->executed.push_back(static_cast<int>(s));
      trace->stage_in.push_back(*input);
      trace->relations.push_back(r);
      trace->y_in.push_back(yin);
    }
    rel = std::move(r);
    input = &rel;
    y = std::move(ynext);
  }
  return y;
}

MsauGrads msau_vjp(const MsauParams& params, const MsauTrace& trace, const FeatureMap& dy) {
  MsauGrads grads;
  grads.dw.resize(params.stages.size());
  grads.db.resize(params.stages.size());
  for (std::size_t s = 0; s < params.stages.size(); ++s) {
    grads.dw[s] = Vec::Zero(params.stages[s].w.size());
    grads.db[s] = Vec::Zero(params.stages[s].b.size());
  }

  const int H = trace.up_pred.H, W = trace.up_pred.W;
  FeatureMap dup_pred(trace.up_pred.C, H, W);
  FeatureMap dY = dy;
  FeatureMap d_next_in;  // gradient flowing into the following stage's conv input

  for (int k = static_cast<int>(trace.executed.size()) - 1; k >= 0; --k) {
    const int s = trace.executed[static_cast<std::size_t>(k)];
    const int d = params.dilations[static_cast<std::size_t>(s)];
    const bool carries_output =
        !params.refine_original || k == static_cast<int>(trace.executed.size()) - 1;

    FeatureMap drel(9, H, W);
    FeatureMap dy_in(trace.up_pred.C, H, W);
    if (carries_output)
      lprm_refine_vjp(trace.y_in[static_cast<std::size_t>(k)],
                      trace.relations[static_cast<std::size_t>(k)], d, dY, &dy_in, &drel);
    if (d_next_in.C == 9) drel.data += d_next_in.data;

    d_next_in = lprm_relation_vjp(trace.stage_in[static_cast<std::size_t>(k)],
                                  params.stages[static_cast<std::size_t>(s)], d,
                                  trace.relations[static_cast<std::size_t>(k)], drel,
                                  grads.dw[static_cast<std::size_t>(s)],
                                  grads.db[static_cast<std::size_t>(s)]);

    if (params.refine_original) {
      if (carries_output) dup_pred.data += dy_in.data;
    } else {
      dY = std::move(dy_in);
    }
  }

  if (trace.executed.empty())
    dup_pred.data += dY.data;
  else if (!params.refine_original)
    dup_pred.data += dY.data;

  FeatureMap dup_comp(trace.up_comp.C, H, W);
  if (d_next_in.C == trace.up_comp.C && !trace.executed.empty()) dup_comp = std::move(d_next_in);

  grads.dpred = nuu_upsample_vjp(trace.mesh, dup_pred.C, dup_pred);
  grads.dxcomp = nuu_upsample_vjp(trace.mesh, dup_comp.C, dup_comp);
  return grads;
}

}  // namespace sfm
