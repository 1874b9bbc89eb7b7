#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sfm/tensor.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace sfm;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("bilinear sampling interpolates and clamps") {
  FeatureMap f(1, 2, 2);
  f.at(0, 0, 0) = 0;
  f.at(0, 0, 1) = 1;
  f.at(0, 1, 0) = 2;
  f.at(0, 1, 1) = 3;

  CHECK(bilinear_at(f, 0.5, 0.5, 0) == doctest::Approx(1.5));
  CHECK(bilinear_at(f, 0.0, 0.0, 0) == doctest::Approx(0.0));
  CHECK(bilinear_at(f, 1.0, 1.0, 0) == doctest::Approx(3.0));
  CHECK(bilinear_at(f, 1.0, 0.0, 0) == doctest::Approx(2.0));
  CHECK(bilinear_at(f, 0.25, 0.0, 0) == doctest::Approx(0.5));

  CHECK_THROWS_AS(bilinear_at(f, -0.01, 0.5, 0), std::domain_error);
  CHECK_THROWS_AS(bilinear_at(f, 0.5, 1.01, 0), std::domain_error);
  CHECK_THROWS_AS(bilinear_at(f, 0.5, 0.5, 1), std::domain_error);
}

TEST_CASE("bilinear sampling on a single-pixel map is constant") {
  FeatureMap f(1, 1, 1);
  f.at(0, 0, 0) = 7.0;
  CHECK(bilinear_at(f, 0.0, 0.0, 0) == doctest::Approx(7.0));
  CHECK(bilinear_at(f, 1.0, 1.0, 0) == doctest::Approx(7.0));
  CHECK(bilinear_at(f, 0.3, 0.8, 0) == doctest::Approx(7.0));
}

TEST_CASE("plane sampler clamps out-of-range pixel coordinates") {
  Plane p(2, 2);
  p << 0, 1, 2, 3;
  CHECK(bilinear_plane(p, -1.0, -1.0) == doctest::Approx(0.0));
  CHECK(bilinear_plane(p, 5.0, 5.0) == doctest::Approx(3.0));
  CHECK(bilinear_plane(p, 0.5, 0.5) == doctest::Approx(1.5));
}

TEST_CASE("decimate keeps every stride-th sample with ceil extents") {
  FeatureMap f(1, 4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) f.at(0, i, j) = i * 4 + j;

  FeatureMap d = decimate(f, 2);
  REQUIRE(d.H == 2);
  REQUIRE(d.W == 2);
  CHECK(d.at(0, 0, 0) == doctest::Approx(0));
  CHECK(d.at(0, 0, 1) == doctest::Approx(2));
  CHECK(d.at(0, 1, 0) == doctest::Approx(8));
  CHECK(d.at(0, 1, 1) == doctest::Approx(10));

  FeatureMap f5(2, 5, 5);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) f5.at(c, i, j) = c * 100 + i * 5 + j;
  FeatureMap d5 = decimate(f5, 2);
  REQUIRE(d5.H == 3);  // ceil(5/2)
  REQUIRE(d5.W == 3);
  CHECK(d5.at(1, 2, 2) == doctest::Approx(100 + 4 * 5 + 4));

  CHECK_THROWS_AS(decimate(f, 1), std::domain_error);
  CHECK_THROWS_AS(decimate(f, 0), std::domain_error);
}

TEST_CASE("decimating twice matches a single larger stride") {
  FeatureMap f(1, 16, 16);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) f.at(0, i, j) = std::sin(0.3 * i) + 0.7 * j;
  FeatureMap a = decimate(decimate(f, 2), 2);
  FeatureMap b = decimate(f, 4);
  REQUIRE(a.H == b.H);
  REQUIRE(a.W == b.W);
  for (int i = 0; i < a.H; ++i)
    for (int j = 0; j < a.W; ++j) CHECK(a.at(0, i, j) == doctest::Approx(b.at(0, i, j)));
}

TEST_CASE("tensor file round-trip is byte-identical") {
  Tensor t({2u, 3u, 4u});
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = 0.125 * static_cast<Scalar>(i) - 1.0;

  std::string p1 = temp_path("sfm_rt1.sfmt");
  std::string p2 = temp_path("sfm_rt2.sfmt");
  write_tensor(p1, t);
  Tensor back = read_tensor(p1);
  REQUIRE(back.rank() == 3);
  CHECK(back.shape() == t.shape());
  for (Eigen::Index i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

  write_tensor(p2, back);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("tensor reader reports malformed files with a byte offset") {
  std::string p = temp_path("sfm_bad.sfmt");

  {  // wrong magic
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write("NOPE\x01\x00\x00\x00", 8);
  }
  CHECK_THROWS_WITH_AS(read_tensor(p), doctest::Contains("byte offset 0"), std::runtime_error);

  {  // bad version
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write("SFMT\x09\x00\x00\x00", 8);
  }
  CHECK_THROWS_WITH_AS(read_tensor(p), doctest::Contains("byte offset 4"), std::runtime_error);

  {  // ndim out of range
    const unsigned char hdr[] = {'S', 'F', 'M', 'T', 1, 0, 0, 0, 9, 0, 0, 0};
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  }
  CHECK_THROWS_WITH_AS(read_tensor(p), doctest::Contains("byte offset 8"), std::runtime_error);

  {  // header promises 4 floats, payload has 2
    const unsigned char hdr[] = {'S', 'F', 'M', 'T', 1, 0, 0, 0, 1, 0, 0, 0, 4, 0, 0, 0};
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    float two[2] = {1.f, 2.f};
    out.write(reinterpret_cast<const char*>(two), 8);
  }
  CHECK_THROWS_WITH_AS(read_tensor(p), doctest::Contains("truncated payload"), std::runtime_error);

  {  // NaN in payload
    const unsigned char hdr[] = {'S', 'F', 'M', 'T', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0};
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    float vals[2] = {1.f, std::numeric_limits<float>::quiet_NaN()};
    out.write(reinterpret_cast<const char*>(vals), 8);
  }
  CHECK_THROWS_WITH_AS(read_tensor(p), doctest::Contains("non-finite"), std::runtime_error);
  // offset of the second float: 16-byte header + 4
  CHECK_THROWS_WITH_AS(read_tensor(p), doctest::Contains("byte offset 20"), std::runtime_error);

  std::remove(p.c_str());
}

TEST_CASE("writer refuses non-finite values") {
  Tensor t({2u});
  t[0] = 1.0;
  t[1] = std::numeric_limits<Scalar>::infinity();
  std::string p = temp_path("sfm_nan.sfmt");
  CHECK_THROWS_AS(write_tensor(p, t), std::runtime_error);
  CHECK(!std::filesystem::exists(p));  // atomic write: nothing left behind
  std::remove((p + ".tmp").c_str());
}

TEST_CASE("PGM files load as a normalized single-channel tensor") {
  std::string p = temp_path("sfm_img.pgm");
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << "P5\n# a comment line\n2 2\n255\n";
    unsigned char px[4] = {0, 51, 102, 255};
    out.write(reinterpret_cast<const char*>(px), 4);
  }
  Tensor t = read_tensor(p);
  REQUIRE(t.rank() == 3);
  CHECK(t.shape()[0] == 1);
  CHECK(t.shape()[1] == 2);
  CHECK(t.shape()[2] == 2);
  CHECK(t[0] == doctest::Approx(0.0));
  CHECK(t[1] == doctest::Approx(51.0 / 255.0));
  CHECK(t[2] == doctest::Approx(102.0 / 255.0));
  CHECK(t[3] == doctest::Approx(1.0));
  std::remove(p.c_str());
}

TEST_CASE("PGM reader rejects truncated rasters") {
  std::string p = temp_path("sfm_trunc.pgm");
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << "P5\n4 4\n255\n";
    unsigned char px[3] = {1, 2, 3};
    out.write(reinterpret_cast<const char*>(px), 3);
  }
  CHECK_THROWS_WITH_AS(read_tensor(p), doctest::Contains("truncated PGM raster"),
                       std::runtime_error);
  std::remove(p.c_str());
}

TEST_CASE("feature map conversion preserves layout") {
  Tensor t({2u, 2u, 3u});
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(i);
  FeatureMap f = to_feature_map(t);
  REQUIRE(f.C == 2);
  REQUIRE(f.H == 2);
  REQUIRE(f.W == 3);
  CHECK(f.at(0, 0, 0) == doctest::Approx(0));
  CHECK(f.at(0, 1, 2) == doctest::Approx(5));
  CHECK(f.at(1, 0, 0) == doctest::Approx(6));
  Tensor back = from_feature_map(f);
  CHECK(back.shape() == t.shape());
  for (Eigen::Index i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

  Tensor t2({3u, 4u});
  t2[5] = 2.5;
  FeatureMap f2 = to_feature_map(t2);
  CHECK(f2.C == 1);
  CHECK(f2.H == 3);
  CHECK(f2.at(0, 1, 1) == doctest::Approx(2.5));

  Tensor t4({1u, 1u, 2u, 2u});
  CHECK_THROWS_AS(to_feature_map(t4), std::invalid_argument);
}
