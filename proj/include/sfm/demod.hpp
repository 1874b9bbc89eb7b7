// Demodulation: scattered samples at non-uniform coordinates are lifted back
// onto a uniform grid by Delaunay triangulation + barycentric interpolation,
// then sharpened by a cascade of local pixel relation stages.
#pragma once

#include "sfm/warp.hpp"

#include <array>
#include <string>
#include <vector>

namespace sfm {

struct Point2 {
  Scalar u = 0, v = 0;
};

struct Bary {
  Scalar w1 = 0, w2 = 0, w3 = 0;
};

// Weights reproducing q as w1*p1 + w2*p2 + w3*p3 with w3 = 1 - w1 - w2.
// All three lie in [0,1] exactly when q is inside the triangle.
Bary barycentric_weights(Point2 p1, Point2 p2, Point2 p3, Point2 q);

// Delaunay triangulation of the grid's (u,v) points. Duplicate coordinates
// are merged, keeping the first (row-major) occurrence. Triangles are stored
// counter-clockwise in a canonical order, so identical grids produce
// identical meshes. A uniform bucket index over [0,1]^2 backs point location.
struct TriangleMesh {
  int grid_H = 0, grid_W = 0;
  std::vector<Point2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> src;  // grid point (row-major) -> vertex index
  std::vector<int> rep;  // vertex index -> first grid point owning it

  // Containing (or nearest, for hull-exterior queries) triangle plus its
  // barycentric weights. Sets extrapolated when no triangle contains q.
  int locate(Scalar qu, Scalar qv, Bary& w, bool& extrapolated) const;

  int buckets_per_axis = 1;
  std::vector<std::vector<int>> buckets;
};

TriangleMesh triangulate(const CoordinateGrid& grid);

// Debug dump: {"vertices": [[u,v],...], "triangles": [[a,b,c],...]}.
std::string mesh_to_json(const TriangleMesh& mesh);

// Resample scattered values onto a uniform outH x outW grid: each output
// pixel blends the three vertices of its containing triangle. Exact for
// fields affine in (u,v). Queries outside the hull extrapolate from the
// nearest triangle and are reported once per call on stderr.
FeatureMap nuu_upsample(const FeatureMap& modulated, const TriangleMesh& mesh, int outH,
                        int outW);
FeatureMap nuu_upsample(const FeatureMap& modulated, const CoordinateGrid& grid, int outH,
                        int outW);

// Adjoint w.r.t. the scattered feature values (mesh topology and weights are
// treated as constants).
FeatureMap nuu_upsample_vjp(const TriangleMesh& mesh, int channels, const FeatureMap& g);

// One relation stage: a dilated 3x3 convolution from in_channels to the 9
// neighbor slots, softmaxed per pixel.
struct LprmParams {
  int in_channels = 9;
  Vec w;  // 9 x in_channels x 9, out-channel major, 3x3 position fastest
  Vec b;  // 9

  LprmParams() = default;
  explicit LprmParams(int in_ch) : in_channels(in_ch) {
    if (in_ch < 1) throw std::invalid_argument("LprmParams: bad channel count");
    w = Vec::Zero(static_cast<Eigen::Index>(9) * in_ch * 9);
    b = Vec::Zero(9);
  }
  Scalar& wat(int oc, int ic, int kp) { return w[(static_cast<Eigen::Index>(oc) * in_channels + ic) * 9 + kp]; }
  Scalar wat(int oc, int ic, int kp) const {
    return w[(static_cast<Eigen::Index>(oc) * in_channels + ic) * 9 + kp];
  }
};

// Per-pixel relation weights over the dilated 3x3 neighborhood; channel
// (p+1)*3+(q+1) holds the weight of neighbor offset (p*d, q*d).
FeatureMap lprm_relation(const FeatureMap& x, const LprmParams& p, int dilation);

// Convex blend of each pixel's dilated neighborhood under the relation
// weights; replicate padding at borders.
FeatureMap lprm_refine(const FeatureMap& pred, const FeatureMap& rel, int dilation);

// Adjoints. lprm_relation_vjp returns the input gradient and accumulates
// parameter gradients; lprm_refine_vjp accumulates into dpred and drel.
FeatureMap lprm_relation_vjp(const FeatureMap& x, const LprmParams& p, int dilation,
                             const FeatureMap& rel, const FeatureMap& g, Vec& dw, Vec& db);
void lprm_refine_vjp(const FeatureMap& pred, const FeatureMap& rel, int dilation,
                     const FeatureMap& g, FeatureMap* dpred, FeatureMap* drel);

// Cascade configuration: stage s reads the previous stage's relation field
// (stage 0 reads the upsampled compressed feature) and refines the running
// prediction. Stages whose dilation exceeds min(outH,outW)/2 are skipped
// with a warning. refine_original re-refines the stage-0 prediction each
// stage instead of threading the refined one forward.
struct MsauParams {
  std::vector<int> dilations{1, 2, 4, 8, 16, 32, 64};
  std::vector<LprmParams> stages;
  bool refine_original = false;

  static MsauParams make(int xcomp_channels,
                         std::vector<int> dilations = {1, 2, 4, 8, 16, 32, 64});
};

// Forward cache for msau_vjp.
struct MsauTrace {
  TriangleMesh mesh;
  FeatureMap up_pred, up_comp;
  std::vector<int> executed;          // stage indices that actually ran
  std::vector<FeatureMap> stage_in;   // conv input per executed stage
  std::vector<FeatureMap> relations;  // softmax output per executed stage
  std::vector<FeatureMap> y_in;       // refine input per executed stage
};

FeatureMap msau(const FeatureMap& pred, const FeatureMap& xcomp, const CoordinateGrid& grid,
                const MsauParams& params, int outH, int outW, MsauTrace* trace = nullptr);

struct MsauGrads {
  FeatureMap dpred, dxcomp;
  std::vector<Vec> dw, db;  // one entry per stage (zero for skipped stages)
};

MsauGrads msau_vjp(const MsauParams& params, const MsauTrace& trace, const FeatureMap& dy);

}  // namespace sfm
