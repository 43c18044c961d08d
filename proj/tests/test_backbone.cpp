#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hgseg/backbone.hpp"
#include "helpers.hpp"

using namespace hgseg;
using namespace hgseg::test;

namespace {

ModelConfig small_cfg() {
  ModelConfig c;
  c.seed = 9;
  return c;
}

Tensor random_image(size_t H, size_t W, Rng& rng) {
  return random_tensor({H * W, 3}, rng, false, 0, 1);
}

}  // namespace

TEST_CASE("pyramid stride arithmetic on 64x64") {
  ModelConfig cfg = small_cfg();
  ParamStore ps;
  Rng rng(1);
  init_backbone_params(ps, cfg, rng);
  Rng irng(2);
  FeaturePyramid pyr = extract_features(random_image(64, 64, irng), 64, 64, ps, cfg);
  REQUIRE(pyr.levels.size() == 4);
  size_t want[4] = {16, 8, 4, 2};
  for (size_t l = 0; l < 4; ++l) {
    CHECK(pyr.levels[l].h == want[l]);
    CHECK(pyr.levels[l].w == want[l]);
    CHECK(pyr.levels[l].feat.cols() == size_t(cfg.backbone_channels[l]));
  }
  DecoderFeatures df = fuse_to_decoder_features(pyr, ps, cfg);
  CHECK(df.K0.feat.rows() == 256);
  CHECK(df.K.feat.rows() == 64);
  CHECK(df.V.feat.rows() == 64);
  CHECK(df.K0.feat.cols() == size_t(cfg.d));
}

TEST_CASE("indivisible sizes pad and record") {
  ModelConfig cfg = small_cfg();
  ParamStore ps;
  Rng rng(1);
  init_backbone_params(ps, cfg, rng);
  Rng irng(2);
  FeaturePyramid pyr = extract_features(random_image(60, 100, irng), 60, 100, ps, cfg);
  CHECK(pyr.input_h == 64);
  CHECK(pyr.input_w == 128);
  CHECK(pyr.orig_h == 60);
  CHECK(pyr.orig_w == 100);
}

TEST_CASE("zero image stays finite; fused V is bias pattern") {
  ModelConfig cfg = small_cfg();
  ParamStore ps;
  Rng rng(1);
  init_backbone_params(ps, cfg, rng);
  Tensor img = Tensor::zeros({64 * 64, 3});
  FeaturePyramid pyr = extract_features(img, 64, 64, ps, cfg);
  DecoderFeatures df = fuse_to_decoder_features(pyr, ps, cfg);
  for (const Tensor* t : {&df.K0.feat, &df.K.feat, &df.V.feat})
    for (size_t i = 0; i < t->numel(); ++i) CHECK(std::isfinite(double(t->at(i))));
  // all rows of V identical (every pixel sees the same zero input)
  size_t d = df.V.feat.cols();
  for (size_t r = 1; r < df.V.feat.rows(); ++r)
    for (size_t c = 0; c < d; ++c)
      CHECK(df.V.feat.at(r * d + c) ==
            doctest::Approx(df.V.feat.at(c)).epsilon(1e-12));
}

TEST_CASE("golden checksum stable") {
  ModelConfig cfg = small_cfg();
  ParamStore ps;
  Rng rng(1);
  init_backbone_params(ps, cfg, rng);
  Rng irng(1234);
  Tensor img = random_image(64, 64, irng);
  auto run = [&] {
    FeaturePyramid pyr = extract_features(img, 64, 64, ps, cfg);
    DecoderFeatures df = fuse_to_decoder_features(pyr, ps, cfg);
    long double s = 0;
    for (size_t i = 0; i < df.V.feat.numel(); ++i)
      s += (long double)(df.V.feat.at(i)) * (long double)(i % 7 + 1);
    return double(s);
  };
  double a = run(), b = run();
  CHECK(a == b);  // bitwise repeatable in-process

  auto golden = std::filesystem::path(HGSEG_TESTS_DIR) / "golden" /
                "backbone_checksum.txt";
  if (std::filesystem::exists(golden)) {
    double want = 0;
    std::ifstream(golden) >> want;
    CHECK(a == doctest::Approx(want).epsilon(1e-12));
  } else {
    std::filesystem::create_directories(golden.parent_path());
    std::ofstream f(golden);
    f.precision(17);
    f << a << "\n";
    MESSAGE("recorded golden checksum ", a);
  }
}

TEST_CASE("gradient reaches the stride-32 level") {
  ModelConfig cfg = small_cfg();
  ParamStore ps;
  Rng rng(1);
  init_backbone_params(ps, cfg, rng);
  Rng irng(5);
  Tensor img = random_image(64, 64, irng);
  ps.zero_grads();
  FeaturePyramid pyr = extract_features(img, 64, 64, ps, cfg);
  DecoderFeatures df = fuse_to_decoder_features(pyr, ps, cfg);
  sum_all(df.V.feat).backward();
  Tensor w32 = ps.get("backbone.down3");
  REQUIRE(w32.grad().size() == w32.numel());
  double mag = 0;
  for (real g : w32.grad()) mag += std::abs(double(g));
  CHECK(mag > 0);
}

TEST_CASE("translation by one stride-8 cell translates K") {
  ModelConfig cfg = small_cfg();
  ParamStore ps;
  Rng rng(1);
  init_backbone_params(ps, cfg, rng);
  size_t H = 64, W = 96;
  Rng irng(77);
  Tensor img = random_image(H, W, irng);
  // shift right by 8 input pixels
  std::vector<real> shifted(H * W * 3, real(0.5));
  for (size_t y = 0; y < H; ++y)
    for (size_t x = 8; x < W; ++x)
      for (size_t c = 0; c < 3; ++c)
        shifted[(y * W + x) * 3 + c] = img.at((y * W + x - 8) * 3 + c);
  Tensor img2 = Tensor::from_data({H * W, 3}, shifted);

  auto K_of = [&](const Tensor& im) {
    return fuse_to_decoder_features(extract_features(im, H, W, ps, cfg), ps, cfg)
        .K.feat;
  };
  Tensor K1 = K_of(img), K2 = K_of(img2);
  size_t h8 = H / 8, w8 = W / 8, d = size_t(cfg.d);
  size_t margin = 3;  // conv receptive-field margin
  for (size_t y = margin; y < h8 - margin; ++y)
    for (size_t x = margin; x + 1 < w8 - margin; ++x)
      for (size_t c = 0; c < d; ++c) {
        double a = double(K1.at((y * w8 + x) * d + c));
        double b = double(K2.at((y * w8 + x + 1) * d + c));
        CHECK(std::abs(a - b) < 1e-6);
      }
}
