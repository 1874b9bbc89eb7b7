#include "sfm/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace sfm {

namespace {

inline Scalar sample_clamped(const Scalar* d, int H, int W, Scalar x, Scalar y) {
  if (x < 0) x = 0;
  if (y < 0) y = 0;
  if (x > H - 1) x = static_cast<Scalar>(H - 1);
  if (y > W - 1) y = static_cast<Scalar>(W - 1);
  int x0 = static_cast<int>(x);
  int y0 = static_cast<int>(y);
  if (x0 > H - 2) x0 = H - 2 >= 0 ? H - 2 : 0;
  if (y0 > W - 2) y0 = W - 2 >= 0 ? W - 2 : 0;
  int x1 = x0 + 1 < H ? x0 + 1 : x0;
  int y1 = y0 + 1 < W ? y0 + 1 : y0;
  Scalar fx = x - x0, fy = y - y0;
  return d[x0 * W + y0] * (1 - fx) * (1 - fy) + d[x1 * W + y0] * fx * (1 - fy) +
         d[x0 * W + y1] * (1 - fx) * fy + d[x1 * W + y1] * fx * fy;
}

}  // namespace

Scalar bilinear_plane(const ConstPlaneMap& p, Scalar x, Scalar y) {
  return sample_clamped(p.data(), static_cast<int>(p.rows()), static_cast<int>(p.cols()), x, y);
}

Scalar bilinear_plane(const Plane& p, Scalar x, Scalar y) {
  return sample_clamped(p.data(), static_cast<int>(p.rows()), static_cast<int>(p.cols()), x, y);
}

Scalar bilinear_at(const FeatureMap& map, Scalar u, Scalar v, int channel) {
  if (!(u >= 0.0 && u <= 1.0) || !(v >= 0.0 && v <= 1.0))
    throw std::domain_error("bilinear_at: (u,v) outside [0,1]^2");
  if (channel < 0 || channel >= map.C) throw std::domain_error("bilinear_at: bad channel");
  return sample_clamped(map.data.data() + static_cast<Eigen::Index>(channel) * map.H * map.W,
                        map.H, map.W, u * (map.H - 1), v * (map.W - 1));
}

FeatureMap decimate(const FeatureMap& map, int stride) {
  if (stride < 2) throw std::domain_error("decimate: stride must be >= 2");
  int Ho = (map.H + stride - 1) / stride;
  int Wo = (map.W + stride - 1) / stride;
  FeatureMap out(map.C, Ho, Wo);
  for (int c = 0; c < map.C; ++c)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) out.at(c, i, j) = map.at(c, i * stride, j * stride);
  return out;
}

namespace {

[[noreturn]] void format_error(const std::string& path, std::size_t offset, const std::string& what) {
  throw std::runtime_error(path + ": " + what + " (byte offset " + std::to_string(offset) + ")");
}

Tensor read_sfmt(std::ifstream& in, const std::string& path) {
  auto read_u32 = [&](std::size_t off) -> std::uint32_t {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) format_error(path, off, "truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  };
  std::uint32_t version = read_u32(4);
  if (version != 1) format_error(path, 4, "unsupported version " + std::to_string(version));
  std::uint32_t ndim = read_u32(8);
  if (ndim < 1 || ndim > 4) format_error(path, 8, "ndim must be 1..4, got " + std::to_string(ndim));
  std::vector<std::uint32_t> shape(ndim);
  std::size_t count = 1;
  for (std::uint32_t d = 0; d < ndim; ++d) {
    shape[d] = read_u32(12 + 4 * d);
    if (shape[d] == 0) format_error(path, 12 + 4 * d, "zero extent");
    count *= shape[d];
  }
  Tensor t(shape);
  std::size_t payload_off = 12 + 4 * ndim;
  std::vector<float> buf(count);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * 4)))
    format_error(path, payload_off, "truncated payload");
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(buf[i]))
      format_error(path, payload_off + 4 * i, "non-finite value in payload");
    t[static_cast<Eigen::Index>(i)] = static_cast<Scalar>(buf[i]);
  }
  return t;
}

Tensor read_pgm(std::ifstream& in, const std::string& path) {
  // P5 header: magic, width, height, maxval, single whitespace, raster.
  // '#' comments may appear between tokens.
  in.seekg(0);
  auto next_token = [&]() -> std::string {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
      if (ch == '#') {
        while ((ch = in.get()) != EOF && ch != '\n') {}
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) format_error(path, static_cast<std::size_t>(in.tellg()), "truncated PGM header");
    return tok;
  };
  std::string magic = next_token();
  if (magic != "P5") format_error(path, 0, "bad PGM magic '" + magic + "'");
  int W = std::stoi(next_token());
  int H = std::stoi(next_token());
  int maxval = std::stoi(next_token());
  if (W <= 0 || H <= 0) format_error(path, static_cast<std::size_t>(in.tellg()), "bad PGM extents");
  if (maxval != 255)
    format_error(path, static_cast<std::size_t>(in.tellg()), "only maxval 255 PGM supported");
  std::size_t raster_off = static_cast<std::size_t>(in.tellg());
  std::vector<unsigned char> buf(static_cast<std::size_t>(W) * H);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    format_error(path, raster_off, "truncated PGM raster");
  Tensor t({1u, static_cast<std::uint32_t>(H), static_cast<std::uint32_t>(W)});
  for (std::size_t i = 0; i < buf.size(); ++i)
    t[static_cast<Eigen::Index>(i)] = static_cast<Scalar>(buf[i]) / 255.0;
  return t;
}

}  // namespace

Tensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in.gcount() >= 2 && magic[0] == 'P' && magic[1] == '5') return read_pgm(in, path);
  if (in.gcount() == 4 && std::memcmp(magic, "SFMT", 4) == 0) return read_sfmt(in, path);
  format_error(path, 0, "unrecognized magic");
}

void write_tensor(const std::string& path, const Tensor& t) {
  if (t.rank() == 0) throw std::invalid_argument("write_tensor: empty tensor");
  for (Eigen::Index i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i]))
      throw std::runtime_error(path + ": refusing to write non-finite value at flat index " +
                               std::to_string(i));
  // Write to a temp file in the same directory, then rename: no partial files.
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp + ": cannot open for writing");
    auto put_u32 = [&](std::uint32_t v) {
      unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                            static_cast<unsigned char>((v >> 8) & 0xff),
                            static_cast<unsigned char>((v >> 16) & 0xff),
                            static_cast<unsigned char>((v >> 24) & 0xff)};
      out.write(reinterpret_cast<char*>(b), 4);
    };
    out.write("SFMT", 4);
    put_u32(1);
    put_u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u32(e);
    std::vector<float> buf(static_cast<std::size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(t[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!out) throw std::runtime_error(tmp + ": write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error(path + ": rename from temp failed");
}

FeatureMap to_feature_map(const Tensor& t) {
  if (t.rank() == 2) {
    FeatureMap f(1, static_cast<int>(t.shape()[0]), static_cast<int>(t.shape()[1]));
    f.data = t.vec();
    return f;
  }
  if (t.rank() != 3) throw std::invalid_argument("to_feature_map: tensor rank must be 2 or 3");
  FeatureMap f(static_cast<int>(t.shape()[0]), static_cast<int>(t.shape()[1]),
               static_cast<int>(t.shape()[2]));
  f.data = t.vec();
  return f;
}

Tensor from_feature_map(const FeatureMap& f) {
  Tensor t({static_cast<std::uint32_t>(f.C), static_cast<std::uint32_t>(f.H),
            static_cast<std::uint32_t>(f.W)});
  t.vec() = f.data;
  return t;
}

}  // namespace sfm
