#include "sfm/objective.hpp"

#include "sfm/spectral.hpp"
#include "sfm/tensor.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace sfm {

namespace {

using nlohmann::json;

FeatureMap conv1x1(const FeatureMap& x, const Vec& w, const Vec& b, int out_ch) {
  FeatureMap y(out_ch, x.H, x.W);
  for (int k = 0; k < out_ch; ++k) {
    auto yk = y.channel(k);
    yk.setConstant(b[k]);
    for (int c = 0; c < x.C; ++c) yk += w[static_cast<Eigen::Index>(k) * x.C + c] * x.channel(c);
  }
  return y;
}

void conv1x1_vjp(const FeatureMap& x, const Vec& w, int out_ch, const FeatureMap& g, Vec& dw,
                 Vec& db, FeatureMap& dx) {
  for (int k = 0; k < out_ch; ++k) {
    db[k] += g.channel(k).sum();
    for (int c = 0; c < x.C; ++c) {
      dw[static_cast<Eigen::Index>(k) * x.C + c] += (g.channel(k) * x.channel(c)).sum();
      dx.channel(c) += w[static_cast<Eigen::Index>(k) * x.C + c] * g.channel(k);
    }
  }
}

Scalar boundary_density_ratio(const LabelMap& labels, const CoordinateGrid& grid) {
  const Plane d = density(grid);
  const int H = grid.H, W = grid.W;
  Scalar edge_sum = 0, rest_sum = 0;
  Eigen::Index edge_n = 0, rest_n = 0;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const int y = labels(i, j);
      const bool edge = (i > 0 && labels(i - 1, j) != y) || (i + 1 < H && labels(i + 1, j) != y) ||
                        (j > 0 && labels(i, j - 1) != y) || (j + 1 < W && labels(i, j + 1) != y);
      (edge ? edge_sum : rest_sum) += d(i, j);
      ++(edge ? edge_n : rest_n);
    }
  if (edge_n == 0 || rest_n == 0) return 1.0;
  return (edge_sum / edge_n) / (rest_sum / rest_n);
}

}  // namespace

Scalar fm_loss(const FeatureMap& modulated, Scalar nyquist) {
  return high_band_power(modulated, nyquist);
}

FeatureMap fm_loss_vjp(const FeatureMap& x, Scalar nyquist) {
  FeatureMap g(x.C, x.H, x.W);
  const FrequencyBandSet band(x.H, x.W, nyquist);
  if (band.count == 0) return g;
  // d/dx of (1/|H|) sum_H |F|^2 with a forward-normalized transform: push the
  // band-masked spectrum back through the unnormalized inverse.
  const Scalar scale =
      2.0 / (static_cast<Scalar>(band.count) * x.H * x.W * static_cast<Scalar>(x.C));
  for (int c = 0; c < x.C; ++c) {
    Spectrum s = dft2d(Plane(x.channel(c)));
    for (int k = 0; k < x.H; ++k)
      for (int l = 0; l < x.W; ++l)
        if (!band.in_high(k, l)) s.F(k, l) = 0;
    g.channel(c) = scale * idft2d(s);
  }
  return g;
}

CoordinateGrid shf_targets(const LabelMap& labels, const GaussianKernel& kernel,
                           Scalar blur_sigma, Scalar background) {
  if (background <= 0 || background > 1)
    throw std::invalid_argument("shf_targets: background share must be in (0, 1]");
  const Plane lab = labels.cast<Scalar>();
  const int radius = 3 * std::max(1, static_cast<int>(std::lround(blur_sigma)));
  const Plane resp = gaussian_blur(laplacian(lab).abs(), blur_sigma, radius);
  const Scalar total = resp.sum();
  const Scalar uniform = 1.0 / (static_cast<Scalar>(labels.rows()) * labels.cols());
  Plane attn = Plane::Constant(labels.rows(), labels.cols(), background * uniform);
  if (total > 0) attn += (1.0 - background) * resp / total;
  else attn += (1.0 - background) * uniform;
  return map_coordinates(attn, kernel);
}

Scalar shf_loss(const CoordinateGrid& grid, const CoordinateGrid& target) {
  if (grid.H != target.H || grid.W != target.W)
    throw std::domain_error("shf_loss: grid extents differ");
  return std::sqrt((grid.u - target.u).square().sum()) +
         std::sqrt((grid.v - target.v).square().sum());
}

void shf_loss_vjp(const CoordinateGrid& grid, const CoordinateGrid& target, Plane& du,
                  Plane& dv) {
  if (grid.H != target.H || grid.W != target.W)
    throw std::domain_error("shf_loss: grid extents differ");
  const Scalar nu = std::sqrt((grid.u - target.u).square().sum());
  const Scalar nv = std::sqrt((grid.v - target.v).square().sum());
  if (nu > 0) du += (grid.u - target.u) / nu;
  if (nv > 0) dv += (grid.v - target.v) / nv;
}

Scalar seg_loss(const FeatureMap& pred, const LabelMap& labels) {
  if (labels.rows() != pred.H || labels.cols() != pred.W)
    throw std::domain_error("seg_loss: label extents differ from prediction");
  Scalar total = 0;
  for (int i = 0; i < pred.H; ++i)
    for (int j = 0; j < pred.W; ++j) {
      const int y = labels(i, j);
      if (y < 0 || y >= pred.C) throw std::domain_error("seg_loss: label outside class range");
      Scalar zmax = pred.at(0, i, j);
      for (int k = 1; k < pred.C; ++k) zmax = std::max(zmax, pred.at(k, i, j));
      Scalar lse = 0;
      for (int k = 0; k < pred.C; ++k) lse += std::exp(pred.at(k, i, j) - zmax);
      total += std::log(lse) + zmax - pred.at(y, i, j);
    }
  return total / (static_cast<Scalar>(pred.H) * pred.W);
}

FeatureMap seg_loss_vjp(const FeatureMap& pred, const LabelMap& labels) {
  if (labels.rows() != pred.H || labels.cols() != pred.W)
    throw std::domain_error("seg_loss: label extents differ from prediction");
  FeatureMap g(pred.C, pred.H, pred.W);
  const Scalar inv_n = 1.0 / (static_cast<Scalar>(pred.H) * pred.W);
  for (int i = 0; i < pred.H; ++i)
    for (int j = 0; j < pred.W; ++j) {
      const int y = labels(i, j);
      if (y < 0 || y >= pred.C) throw std::domain_error("seg_loss: label outside class range");
      Scalar zmax = pred.at(0, i, j);
      for (int k = 1; k < pred.C; ++k) zmax = std::max(zmax, pred.at(k, i, j));
      Scalar lse = 0;
      for (int k = 0; k < pred.C; ++k) lse += std::exp(pred.at(k, i, j) - zmax);
      for (int k = 0; k < pred.C; ++k)
        g.at(k, i, j) = (std::exp(pred.at(k, i, j) - zmax) / lse - (k == y ? 1.0 : 0.0)) * inv_n;
    }
  return g;
}

Scalar total_loss(Scalar seg, Scalar fm, Scalar shf, const LossWeights& w) {
  return seg + w.lambda_fm * fm + w.lambda_shf * shf;
}

GradReport grad_check(const std::function<Scalar(const Vec&)>& f, const Vec& x,
                      const Vec& analytic, Scalar eps) {
  GradReport report;
  report.eps = eps;
  if (!analytic.allFinite()) {
    report.finite = false;
    report.max_rel_err = std::numeric_limits<Scalar>::infinity();
    return report;
  }
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const Scalar fp = f(probe);
    probe[i] = x[i] - eps;
    const Scalar fm_val = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm_val)) {
      report.finite = false;
      report.max_rel_err = std::numeric_limits<Scalar>::infinity();
      report.worst_index = i;
      return report;
    }
    const Scalar fd = (fp - fm_val) / (2 * eps);
    const Scalar rel =
        std::abs(fd - analytic[i]) / std::max({Scalar(1), std::abs(fd), std::abs(analytic[i])});
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
    }
  }
  return report;
}

ToyModel ToyModel::init(int channels, int classes, int comp_channels,
                        const std::vector<int>& dilations, int sigma, int stride,
                        std::uint64_t seed) {
  if (channels < 1 || classes < 2 || comp_channels < 1)
    throw std::invalid_argument("ToyModel: bad dimensions");
  ToyModel m;
  m.channels = channels;
  m.classes = classes;
  m.comp_channels = comp_channels;
  m.sigma = sigma;
  m.stride = stride;
  m.attn = AttentionParams(channels);
  m.head_w = Vec::Zero(static_cast<Eigen::Index>(classes) * channels);
  m.head_b = Vec::Zero(classes);
  m.comp_w = Vec::Zero(static_cast<Eigen::Index>(comp_channels) * channels);
  m.comp_b = Vec::Zero(comp_channels);
  m.msau = MsauParams::make(comp_channels, dilations);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> uni(-0.1, 0.1);
  auto fill = [&](Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = uni(rng);
  };
  fill(m.attn.proj_w);
  fill(m.head_w);
  fill(m.comp_w);
  for (auto& stage : m.msau.stages) fill(stage.w);
  return m;
}

Vec pack_params(const ToyModel& m) {
  Eigen::Index n = m.attn.da.raw.size() + m.attn.proj_w.size() + 1 + m.head_w.size() +
                   m.head_b.size() + m.comp_w.size() + m.comp_b.size();
  for (const auto& stage : m.msau.stages) n += stage.w.size() + stage.b.size();
  Vec out(n);
  Eigen::Index o = 0;
  auto put = [&](const Vec& v) {
    out.segment(o, v.size()) = v;
    o += v.size();
  };
  put(m.attn.da.raw);
  put(m.attn.proj_w);
  out[o++] = m.attn.proj_b;
  put(m.head_w);
  put(m.head_b);
  put(m.comp_w);
  put(m.comp_b);
  for (const auto& stage : m.msau.stages) {
    put(stage.w);
    put(stage.b);
  }
  return out;
}

void unpack_params(const Vec& flat, ToyModel& m) {
  Eigen::Index o = 0;
  auto take = [&](Vec& v) {
    if (o + v.size() > flat.size())
      throw std::invalid_argument("unpack_params: parameter vector too short");
    v = flat.segment(o, v.size());
    o += v.size();
  };
  take(m.attn.da.raw);
  take(m.attn.proj_w);
  if (o >= flat.size()) throw std::invalid_argument("unpack_params: parameter vector too short");
  m.attn.proj_b = flat[o++];
  take(m.head_w);
  take(m.head_b);
  take(m.comp_w);
  take(m.comp_b);
  for (auto& stage : m.msau.stages) {
    take(stage.w);
    take(stage.b);
  }
  if (o != flat.size())
    throw std::invalid_argument("unpack_params: parameter vector size mismatch");
}

std::string model_to_json(const ToyModel& m) {
  json j;
  j["channels"] = m.channels;
  j["classes"] = m.classes;
  j["comp_channels"] = m.comp_channels;
  j["sigma"] = m.sigma;
  j["stride"] = m.stride;
  j["dilations"] = m.msau.dilations;
  j["refine_original"] = m.msau.refine_original;
  const Vec p = pack_params(m);
  j["params"] = std::vector<Scalar>(p.data(), p.data() + p.size());
  return j.dump();
}

ToyModel model_from_json(const std::string& text) {
  const json j = json::parse(text);
  ToyModel m = ToyModel::init(j.at("channels").get<int>(), j.at("classes").get<int>(),
                              j.at("comp_channels").get<int>(),
                              j.at("dilations").get<std::vector<int>>(),
                              j.at("sigma").get<int>(), j.at("stride").get<int>(), 0);
  m.msau.refine_original = j.at("refine_original").get<bool>();
  const auto raw = j.at("params").get<std::vector<Scalar>>();
  Vec p(static_cast<Eigen::Index>(raw.size()));
  std::copy(raw.begin(), raw.end(), p.data());
  unpack_params(p, m);
  return m;
}

PipelineEval evaluate_pipeline(const ToyModel& m, const Scene& scene, const LossWeights& w,
                               const CoordinateGrid& target, Vec* grad) {
  const int H = static_cast<int>(scene.image.rows());
  const int W = static_cast<int>(scene.image.cols());
  if (m.channels != 1)
    throw std::invalid_argument("evaluate_pipeline: scenes provide a single channel");

  const FeatureMap X = from_plane(scene.image);
  const GaussianKernel kernel(m.sigma);
  AttentionTrace atrace;
  const Plane attn = generate_attention(X, m.attn, &atrace);
  const CoordinateGrid grid = map_coordinates(attn, kernel);
  const FeatureMap warped = warp_sample(X, grid);
  const FeatureMap xm = decimate(warped, m.stride);
  const CoordinateGrid grid_d = decimate_grid(grid, m.stride);
  const FeatureMap pred_lr = conv1x1(xm, m.head_w, m.head_b, m.classes);
  const FeatureMap xcomp = conv1x1(xm, m.comp_w, m.comp_b, m.comp_channels);
  MsauTrace mtrace;
  const FeatureMap Y = msau(pred_lr, xcomp, grid_d, m.msau, H, W, grad ? &mtrace : nullptr);

  PipelineEval ev;
  ev.seg = seg_loss(Y, scene.labels);
  ev.fm = fm_loss(warped);
  ev.shf = shf_loss(grid, target);
  ev.total = total_loss(ev.seg, ev.fm, ev.shf, w);
  ev.aliasing_ratio = aliasing_ratio(warped);
  ev.boundary_density_ratio = boundary_density_ratio(scene.labels, grid);
  if (!grad) return ev;

  const FeatureMap dY = seg_loss_vjp(Y, scene.labels);
  const MsauGrads mg = msau_vjp(m.msau, mtrace, dY);

  ToyModel gm = m;  // same shapes, refilled below with gradients
  gm.attn.da.raw.setZero();
  gm.attn.proj_w.setZero();
  gm.attn.proj_b = 0;
  gm.head_w.setZero();
  gm.head_b.setZero();
  gm.comp_w.setZero();
  gm.comp_b.setZero();
  for (std::size_t s = 0; s < gm.msau.stages.size(); ++s) {
    gm.msau.stages[s].w = mg.dw[s];
    gm.msau.stages[s].b = mg.db[s];
  }

  FeatureMap dxm(xm.C, xm.H, xm.W);
  conv1x1_vjp(xm, m.head_w, m.classes, mg.dpred, gm.head_w, gm.head_b, dxm);
  conv1x1_vjp(xm, m.comp_w, m.comp_channels, mg.dxcomp, gm.comp_w, gm.comp_b, dxm);

  FeatureMap dwarped(warped.C, H, W);
  for (int c = 0; c < xm.C; ++c)
    for (int i = 0; i < xm.H; ++i)
      for (int j = 0; j < xm.W; ++j)
        dwarped.at(c, i * m.stride, j * m.stride) += dxm.at(c, i, j);
  if (w.lambda_fm != 0) dwarped.data += w.lambda_fm * fm_loss_vjp(warped).data;

  Plane du = Plane::Zero(H, W), dv = Plane::Zero(H, W);
  warp_sample_vjp(X, grid, dwarped, nullptr, &du, &dv);
  if (w.lambda_shf != 0) {
    Plane su = Plane::Zero(H, W), sv = Plane::Zero(H, W);
    shf_loss_vjp(grid, target, su, sv);
    du += w.lambda_shf * su;
    dv += w.lambda_shf * sv;
  }
  const Plane dattn = map_coordinates_vjp(attn, kernel, du, dv);
  const AttentionGrads ag = attention_vjp(X, m.attn, atrace, dattn);
  gm.attn.da.raw = ag.draw;
  gm.attn.proj_w = ag.dproj_w;
  gm.attn.proj_b = ag.dproj_b;

  *grad = pack_params(gm);
  return ev;
}

Scene make_scene(const std::string& task, int size, std::uint64_t seed, int classes) {
  if (task == "boundary") return boundary_scene(size);
  if (task == "texture") return texture_scene(size);
  if (task == "shapes")
    return shapes_scene(size, static_cast<unsigned>(seed), classes > 0 ? classes : 3);
  throw std::invalid_argument("make_scene: unknown task '" + task + "'");
}

TrainResult train_toy(const TrainConfig& cfg) {
  if (cfg.iterations < 1) throw std::invalid_argument("train_toy: need at least one iteration");
  const Scene scene = make_scene(cfg.task, cfg.size, cfg.seed, cfg.classes);
  const int sigma = cfg.sigma > 0 ? cfg.sigma : default_sigma(cfg.size, cfg.size);

  TrainResult res;
  res.model = ToyModel::init(1, scene.num_classes, 16, cfg.dilations, sigma, cfg.stride,
                             cfg.seed);
  const GaussianKernel kernel(sigma);
  const CoordinateGrid target = shf_targets(scene.labels, kernel);

  Vec p = pack_params(res.model);
  Vec vel = Vec::Zero(p.size());
  Vec last_finite = p;

  for (int t = 0; t < cfg.iterations; ++t) {
    const Scalar lr =
        cfg.base_lr * std::pow(1.0 - static_cast<Scalar>(t) / cfg.iterations, 0.9);
    unpack_params(p, res.model);
    Vec g;
    const PipelineEval ev = evaluate_pipeline(res.model, scene, cfg.weights, target, &g);
    if (!std::isfinite(ev.total) || !g.allFinite()) {
      res.diverged = true;
      p = last_finite;
      break;
    }
    res.history.push_back({t, lr, ev.seg, ev.fm, ev.shf, ev.total, ev.aliasing_ratio,
                           ev.boundary_density_ratio});
    last_finite = p;
    vel = cfg.momentum * vel - lr * g;
    p += vel;
  }
  unpack_params(p, res.model);
  return res;
}

std::string history_to_csv(const std::vector<TrainRecord>& history) {
  std::string out = "iter,lr,L_seg,L_FM,L_SHF,L_total,aliasing_ratio,boundary_density_ratio\n";
  char buf[256];
  for (const TrainRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iter,
                  r.lr, r.seg, r.fm, r.shf, r.total, r.aliasing_ratio,
                  r.boundary_density_ratio);
    out += buf;
  }
  return out;
}

}  // namespace sfm
