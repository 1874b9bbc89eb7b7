#include "sfm/cli.hpp"

#include "sfm/attention.hpp"
#include "sfm/demod.hpp"
#include "sfm/objective.hpp"
#include "sfm/spectral.hpp"
#include "sfm/tensor.hpp"
#include "sfm/warp.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace sfm {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Input-side problems (bad paths, malformed files, invalid settings) exit
// with 2; anything that blows up mid-computation is a numerical failure, 3.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void atomic_write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write " + tmp.string());
    f << text;
    if (!f.flush()) throw InputError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void atomic_write_tensor(const fs::path& path, const Tensor& t) {
  const fs::path tmp = path.string() + ".tmp";
  write_tensor(tmp.string(), t);
  fs::rename(tmp, path);
}

FeatureMap load_feature(const std::string& path) {
  if (!fs::exists(path)) throw InputError("input not found: " + path);
  try {
    return to_feature_map(read_tensor(path));
  } catch (const std::exception& e) {
    throw InputError(std::string("cannot load ") + path + ": " + e.what());
  }
}

fs::path prepare_output_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw InputError("cannot create output dir: " + dir);
  return p;
}

Plane channel_mean(const FeatureMap& x) {
  Plane m = Plane::Zero(x.H, x.W);
  for (int c = 0; c < x.C; ++c) m += x.channel(c);
  return m / x.C;
}

json band_metrics(const FeatureMap& x, Scalar nyquist) {
  return {{"aliasing_ratio", aliasing_ratio(x, nyquist)},
          {"high_band_power", high_band_power(x, nyquist)}};
}

// ---------------------------------------------------------------- analyze --

struct AnalyzeOpts {
  std::string input, output_dir;
  Scalar nyquist = 0.25;
};

int cmd_analyze(const AnalyzeOpts& o, std::ostream& out) {
  const FeatureMap x = load_feature(o.input);

  const int curve_points = 50;
  json report;
  report["command"] = "analyze";
  report["input"] = o.input;
  report["nyquist"] = o.nyquist;
  report["shape"] = {x.C, x.H, x.W};
  report["aliasing_ratio"] = aliasing_ratio(x, o.nyquist);
  report["high_band_power"] = high_band_power(x, o.nyquist);

  json curve = json::array();
  for (int t = 0; t < curve_points; ++t) {
    const Scalar xi = 0.5 * (t + 1) / curve_points;
    curve.push_back({xi, lfr(x, xi)});
  }
  report["lfr"] = curve;

  const Vec density = rdf(x, curve_points);
  json dens = json::array();
  for (int t = 0; t < curve_points; ++t) {
    const Scalar xi = 0.5 * (t + 1) / curve_points;  // upper edge of bin t
    dens.push_back({xi, density[t]});
  }
  report["rdf"] = dens;

  json channels = json::array();
  for (int c = 0; c < x.C; ++c) {
    const Plane p = x.channel(c);
    channels.push_back({{"channel", c},
                        {"aliasing_ratio", aliasing_ratio(p, o.nyquist)},
                        {"high_band_power", high_band_power(p, o.nyquist)}});
  }
  report["channels"] = channels;

  if (o.output_dir.empty()) {
    out << report.dump(2) << "\n";
  } else {
    const fs::path dir = prepare_output_dir(o.output_dir);
    atomic_write_text(dir / "analysis.json", report.dump(2) + "\n");
    out << (dir / "analysis.json").string() << "\n";
  }
  return 0;
}

// --------------------------------------------------------------- roundtrip --

struct RoundtripOpts {
  std::string input, output_dir, attention = "laplacian";
  Scalar nyquist = 0.25;
  int sigma = 0;  // 0 -> default_sigma
  int stride = 2;
};

AttentionMap make_attention(const std::string& mode, const FeatureMap& x) {
  if (mode == "uniform") return Plane::Constant(x.H, x.W, 1.0 / (x.H * x.W));
  if (mode == "laplacian") return laplacian_attention(channel_mean(x));
  if (mode.rfind("trained:", 0) == 0) {
    const std::string path = mode.substr(8);
    if (!fs::exists(path)) throw InputError("model not found: " + path);
    std::ifstream f(path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    ToyModel m;
    try {
      m = model_from_json(text);
    } catch (const std::exception& e) {
      throw InputError("cannot load model " + path + ": " + e.what());
    }
    if (m.channels != x.C)
      throw InputError("model expects " + std::to_string(m.channels) + " channels, input has " +
                       std::to_string(x.C));
    return generate_attention(x, m.attn);
  }
  throw InputError("unknown attention mode: " + mode +
                   " (expected uniform | laplacian | trained:<path>)");
}

int cmd_roundtrip(const RoundtripOpts& o, std::ostream& out) {
  const FeatureMap x = load_feature(o.input);
  const fs::path dir = prepare_output_dir(o.output_dir);
  const int sigma = o.sigma > 0 ? o.sigma : default_sigma(x.H, x.W);
  const AttentionMap attn = make_attention(o.attention, x);

  const GaussianKernel kernel(sigma);
  const auto [warped, grid] = modulate(x, attn, kernel);
  const FeatureMap dec = decimate(warped, o.stride);
  const CoordinateGrid grid_d = decimate_grid(grid, o.stride);
  const FeatureMap demod = nuu_upsample(dec, grid_d, x.H, x.W);

  // uniform decimate -> bilinear upsample, the chain the pipeline replaces
  const FeatureMap dec_plain = decimate(x, o.stride);
  FeatureMap naive(x.C, x.H, x.W);
  for (int c = 0; c < x.C; ++c)
    for (int i = 0; i < x.H; ++i)
      for (int j = 0; j < x.W; ++j)
        naive.at(c, i, j) =
            bilinear_at(dec_plain, Scalar(i) / (x.H - 1), Scalar(j) / (x.W - 1), c);

  // invertibility of the resampling alone: demodulate the full-resolution
  // modulated map straight back through its own grid
  const FeatureMap unwarped = nuu_upsample(warped, grid, x.H, x.W);
  const Scalar identity_err = (unwarped.data - x.data).abs().maxCoeff();

  json report;
  report["command"] = "roundtrip";
  report["input"] = o.input;
  report["attention"] = o.attention;
  report["sigma"] = sigma;
  report["stride"] = o.stride;
  report["nyquist"] = o.nyquist;
  report["shape"] = {x.C, x.H, x.W};
  report["metrics"] = {{"original", band_metrics(x, o.nyquist)},
                       {"modulated", band_metrics(warped, o.nyquist)},
                       {"naive_baseline", band_metrics(naive, o.nyquist)},
                       {"demodulated", band_metrics(demod, o.nyquist)}};
  report["identity_max_abs_err"] = identity_err;
  report["outputs"] = {{"modulated", "modulated.sfmt"},
                       {"decimated", "decimated.sfmt"},
                       {"demodulated", "demodulated.sfmt"}};

  atomic_write_tensor(dir / "modulated.sfmt", from_feature_map(warped));
  atomic_write_tensor(dir / "decimated.sfmt", from_feature_map(dec));
  atomic_write_tensor(dir / "demodulated.sfmt", from_feature_map(demod));
  atomic_write_text(dir / "report.json", report.dump(2) + "\n");
  out << (dir / "report.json").string() << "\n";
  return 0;
}

// ------------------------------------------------------------------- train --

struct TrainOpts {
  std::string input, output_dir;
  int sigma = -1, stride = -1;  // -1 -> keep the config file's value
  std::vector<int> dilations;
  Scalar lambda_fm = -1, lambda_shf = -1;
  long long seed = -1;
};

TrainConfig parse_train_config(const std::string& path) {
  if (!fs::exists(path)) throw InputError("config not found: " + path);
  std::ifstream f(path, std::ios::binary);
  json j;
  try {
    j = json::parse(f);
  } catch (const std::exception& e) {
    throw InputError("config " + path + ": " + e.what());
  }
  for (const char* field : {"task", "iterations", "base_lr"})
    if (!j.contains(field))
      throw InputError("train config: missing field \"" + std::string(field) + "\"");

  TrainConfig cfg;
  try {
    cfg.task = j.at("task").get<std::string>();
    cfg.iterations = j.at("iterations").get<int>();
    cfg.base_lr = j.at("base_lr").get<Scalar>();
    if (j.contains("size")) cfg.size = j.at("size").get<int>();
    if (j.contains("classes")) cfg.classes = j.at("classes").get<int>();
    if (j.contains("momentum")) cfg.momentum = j.at("momentum").get<Scalar>();
    if (j.contains("stride")) cfg.stride = j.at("stride").get<int>();
    if (j.contains("sigma")) cfg.sigma = j.at("sigma").get<int>();
    if (j.contains("dilations")) cfg.dilations = j.at("dilations").get<std::vector<int>>();
    if (j.contains("lambda_fm")) cfg.weights.lambda_fm = j.at("lambda_fm").get<Scalar>();
    if (j.contains("lambda_shf")) cfg.weights.lambda_shf = j.at("lambda_shf").get<Scalar>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw InputError("train config: " + std::string(e.what()));
  }
  return cfg;
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.task != "boundary" && cfg.task != "texture" && cfg.task != "shapes")
    throw InputError("train config: unknown task \"" + cfg.task + "\"");
  if (cfg.iterations < 1) throw InputError("train config: iterations must be >= 1");
  if (!(cfg.base_lr > 0)) throw InputError("train config: base_lr must be > 0");
  if (cfg.size < 8) throw InputError("train config: size must be >= 8");
  if (cfg.stride < 2) throw InputError("train config: stride must be >= 2");
  if (cfg.sigma < 0) throw InputError("train config: sigma must be >= 1 (or 0 for automatic)");
  if (cfg.momentum < 0 || cfg.momentum >= 1)
    throw InputError("train config: momentum must be in [0, 1)");
  if (cfg.weights.lambda_fm < 0 || cfg.weights.lambda_shf < 0)
    throw InputError("train config: loss weights must be non-negative");
  if (cfg.dilations.empty()) throw InputError("train config: dilations must be non-empty");
  for (int d : cfg.dilations)
    if (d < 1) throw InputError("train config: dilations must be >= 1");
}

int cmd_train(const TrainOpts& o, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = parse_train_config(o.input);
  if (o.sigma >= 0) cfg.sigma = o.sigma;
  if (o.stride >= 0) cfg.stride = o.stride;
  if (!o.dilations.empty()) cfg.dilations = o.dilations;
  if (o.lambda_fm >= 0) cfg.weights.lambda_fm = o.lambda_fm;
  if (o.lambda_shf >= 0) cfg.weights.lambda_shf = o.lambda_shf;
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  validate_train_config(cfg);
  const fs::path dir = prepare_output_dir(o.output_dir);

  const TrainResult res = train_toy(cfg);

  atomic_write_text(dir / "history.csv", history_to_csv(res.history));
  atomic_write_text(dir / "model.json", model_to_json(res.model) + "\n");
  const Vec params = pack_params(res.model);
  Tensor pt({static_cast<std::uint32_t>(params.size())});
  pt.vec() = params;
  atomic_write_tensor(dir / "params.sfmt", pt);

  if (res.diverged) {
    err << "training diverged after " << res.history.size()
        << " finite iterations; last finite state saved\n";
    return 3;
  }
  out << (dir / "history.csv").string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"spatial frequency modulation pipeline"};
  app.require_subcommand(1);

  AnalyzeOpts an;
  CLI::App* analyze = app.add_subcommand("analyze", "spectral report for a tensor or PGM image");
  analyze->alias("spectrum");
  analyze->add_option("--input", an.input, "SFMT tensor or P5 PGM")->required();
  analyze->add_option("--output-dir", an.output_dir, "write analysis.json here (default stdout)");
  analyze->add_option("--nyquist", an.nyquist, "high-band threshold")
      ->default_val(0.25)
      ->check(CLI::Range(1e-9, 0.5));

  RoundtripOpts rt;
  CLI::App* roundtrip =
      app.add_subcommand("roundtrip", "modulate, decimate, demodulate, and compare spectra");
  roundtrip->add_option("--input", rt.input, "SFMT tensor or P5 PGM")->required();
  roundtrip->add_option("--output-dir", rt.output_dir, "tensor and report destination")
      ->required();
  roundtrip->add_option("--attention", rt.attention, "uniform | laplacian | trained:<path>")
      ->default_val("laplacian");
  roundtrip->add_option("--sigma", rt.sigma, "kernel radius (default max(H,W)/8)")
      ->check(CLI::PositiveNumber);
  roundtrip->add_option("--stride", rt.stride, "decimation stride")
      ->default_val(2)
      ->check(CLI::Range(2, 1 << 20));
  roundtrip->add_option("--nyquist", rt.nyquist, "high-band threshold")
      ->default_val(0.25)
      ->check(CLI::Range(1e-9, 0.5));

  TrainOpts tr;
  CLI::App* train = app.add_subcommand("train", "toy SGD run from a JSON config");
  train->add_option("--input", tr.input, "config JSON")->required();
  train->add_option("--output-dir", tr.output_dir, "history, model, and parameter destination")
      ->required();
  train->add_option("--sigma", tr.sigma, "override config sigma")->check(CLI::PositiveNumber);
  train->add_option("--stride", tr.stride, "override config stride")
      ->check(CLI::Range(2, 1 << 20));
  train->add_option("--dilations", tr.dilations, "override config dilations")
      ->delimiter(',');
  train->add_option("--lambda-fm", tr.lambda_fm, "override config lambda_fm")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--lambda-shf", tr.lambda_shf, "override config lambda_shf")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--seed", tr.seed, "override config seed")->check(CLI::NonNegativeNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 2;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(an, out);
    if (roundtrip->parsed()) return cmd_roundtrip(rt, out);
    return cmd_train(tr, out, err);
  } catch (const InputError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace sfm
