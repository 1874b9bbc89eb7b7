// The trainable surface: spectral and coordinate-supervision losses with
// analytic gradients, a finite-difference checking harness, and a small
// deterministic SGD trainer driving the full modulate -> decimate ->
// demodulate pipeline on procedural scenes.
#pragma once

#include "sfm/demod.hpp"
#include "sfm/synthetic.hpp"
#include "sfm/warp.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sfm {

struct LossWeights {
  Scalar lambda_fm = 0.01;
  Scalar lambda_shf = 100.0;
};

// Mean over channels of the high-frequency band power of the map's spectrum.
Scalar fm_loss(const FeatureMap& modulated, Scalar nyquist = 0.25);

// Gradient of fm_loss w.r.t. every input value, via a masked inverse
// transform of the forward spectrum.
FeatureMap fm_loss_vjp(const FeatureMap& modulated, Scalar nyquist = 0.25);

// Supervision grid: |Laplacian| of the label image, Gaussian-blurred with
// std blur_sigma, normalized into an attention map, then turned into
// coordinates. Dense near class boundaries; a single-class label map yields
// uniform attention and hence the identity grid.
//
// `background` is the uniform mass mixed into the normalized response. The
// coordinate mapping is scale-invariant in the attention, so only this
// relative share matters; it keeps the map strictly positive and bounds how
// far boundary mass may pull samples away from any region. Zero would let
// blur tails alone steer coordinates in flat areas, demanding sharper
// concentration than a softmax generator can express.
CoordinateGrid shf_targets(const LabelMap& labels, const GaussianKernel& kernel,
                           Scalar blur_sigma = 1.0, Scalar background = 0.15);

// ||u - u_target||_2 + ||v - v_target||_2 over the flattened planes.
Scalar shf_loss(const CoordinateGrid& grid, const CoordinateGrid& target);

// Gradients w.r.t. grid.u and grid.v, accumulated into du/dv. Each norm's
// gradient is (u - u_target)/||u - u_target||, taken as zero at a perfect
// match.
void shf_loss_vjp(const CoordinateGrid& grid, const CoordinateGrid& target, Plane& du, Plane& dv);

// Mean over pixels of softmax cross-entropy; pred holds one score plane per
// class. Labels outside [0, classes) are rejected.
Scalar seg_loss(const FeatureMap& pred, const LabelMap& labels);
FeatureMap seg_loss_vjp(const FeatureMap& pred, const LabelMap& labels);

Scalar total_loss(Scalar seg, Scalar fm, Scalar shf, const LossWeights& w);

struct GradReport {
  Scalar eps = 1e-4;
  Scalar max_rel_err = 0;
  Eigen::Index worst_index = -1;
  bool finite = true;
};

// Central differences of f around x against the analytic gradient. The
// relative error denominator is max(1, |fd|, |analytic|); any non-finite
// value marks the report as a diagnostic failure.
GradReport grad_check(const std::function<Scalar(const Vec&)>& f, const Vec& x,
                      const Vec& analytic, Scalar eps = 1e-4);

// Trainable bundle: attention generator, 1x1 class head, 1x1 compressed
// feature projection, and the relation cascade parameters.
struct ToyModel {
  AttentionParams attn;
  Vec head_w, head_b;  // classes x channels, classes
  Vec comp_w, comp_b;  // comp_channels x channels, comp_channels
  MsauParams msau;
  int channels = 1, classes = 2, comp_channels = 16;
  int sigma = 8, stride = 2;

  static ToyModel init(int channels, int classes, int comp_channels,
                       const std::vector<int>& dilations, int sigma, int stride,
                       std::uint64_t seed);
};

// Flat parameter order: attention (raw kernel, projection weights, bias),
// head, compression, then each cascade stage. unpack_params requires the
// model to already have the right shapes.
Vec pack_params(const ToyModel& m);
void unpack_params(const Vec& flat, ToyModel& m);

std::string model_to_json(const ToyModel& m);
ToyModel model_from_json(const std::string& text);

struct PipelineEval {
  Scalar seg = 0, fm = 0, shf = 0, total = 0;
  Scalar aliasing_ratio = 0;          // of the modulated feature
  Scalar boundary_density_ratio = 0;  // mean density on label edges / elsewhere
};

// One forward (and, when grad is non-null, backward) pass over a scene:
// attention -> coordinates -> resample -> decimate -> class head + feature
// compression -> mesh upsample + cascade -> losses. grad is laid out like
// pack_params. The mesh is treated as locally constant, so no gradient flows
// from the cascade's triangulation back into the coordinates.
PipelineEval evaluate_pipeline(const ToyModel& m, const Scene& scene, const LossWeights& w,
                               const CoordinateGrid& target, Vec* grad);

struct TrainConfig {
  std::string task = "boundary";  // boundary | texture | shapes
  int size = 64;
  int classes = 0;  // 0 -> the scene's own class count
  int iterations = 200;
  Scalar base_lr = 0.005;
  Scalar momentum = 0.9;
  int stride = 2;
  int sigma = 0;  // 0 -> default_sigma(size, size)
  std::vector<int> dilations{1, 2, 4, 8, 16, 32, 64};
  LossWeights weights;
  std::uint64_t seed = 0;
};

struct TrainRecord {
  int iter = 0;
  Scalar lr = 0, seg = 0, fm = 0, shf = 0, total = 0;
  Scalar aliasing_ratio = 0, boundary_density_ratio = 0;
};

struct TrainResult {
  std::vector<TrainRecord> history;
  ToyModel model;
  bool diverged = false;
};

// Plain SGD with momentum on the pipeline losses, learning rate decayed by
// (1 - iter/max_iter)^0.9. Deterministic for a fixed config. A non-finite
// loss or gradient aborts the run, keeping the last finite parameters and
// history rows.
TrainResult train_toy(const TrainConfig& cfg);

Scene make_scene(const std::string& task, int size, std::uint64_t seed, int classes = 0);

// CSV with header iter,lr,L_seg,L_FM,L_SHF,L_total,aliasing_ratio,
// boundary_density_ratio; doubles serialized with round-trip precision so
// identical runs produce identical bytes.
std::string history_to_csv(const std::vector<TrainRecord>& history);

}  // namespace sfm
