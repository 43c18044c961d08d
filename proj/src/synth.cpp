#include "hgseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hgseg {

namespace {

struct Color {
  double r, g, b;
};

// fixed palette; classes beyond 8 cycle with a hue shift
Color base_color(int cls) {
  static const Color palette[] = {
      {0.36, 0.40, 0.46},  // background: slate
      {0.72, 0.22, 0.20},  // red
      {0.22, 0.64, 0.28},  // green
      {0.22, 0.32, 0.74},  // blue
      {0.76, 0.70, 0.22},  // yellow
      {0.62, 0.28, 0.66},  // purple
      {0.20, 0.62, 0.62},  // teal
      {0.80, 0.50, 0.24},  // orange
  };
  return palette[size_t(cls) % 8];
}

double class_noise_amp(int cls) { return 0.03 + 0.012 * double(cls % 5); }

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  if (spec.num_classes < 2)
    throw std::invalid_argument("generate_scene: need at least 2 classes");
  Rng rng(mix_seed(spec.seed, 0xa11ce));
  size_t h = spec.h, w = spec.w;
  Scene sc;
  sc.h = h;
  sc.w = w;
  sc.labels.assign(h * w, 0);
  sc.image.assign(h * w * 3, real(0));

  std::uniform_real_distribution<double> uni(0.0, 1.0);

  // pick 2..4 shape classes for this scene (all if fewer available)
  int avail = spec.num_classes - 1;
  std::vector<int> classes(static_cast<size_t>(avail));
  for (int c = 0; c < avail; ++c) classes[size_t(c)] = c + 1;
  std::shuffle(classes.begin(), classes.end(), rng);
  int min_shapes = std::min(avail, 2);
  int max_shapes = std::min(avail, 4);
  int nshapes =
      min_shapes + int(uni(rng) * double(max_shapes - min_shapes + 1));
  nshapes = std::min(nshapes, max_shapes);
  classes.resize(size_t(nshapes));

  // paint shapes in draw order (later shapes occlude earlier ones)
  for (int cls : classes) {
    int family = (cls - 1) % 4;
    double cx = uni(rng) * double(w), cy = uni(rng) * double(h);
    double sw = (0.12 + 0.25 * uni(rng)) * double(w);
    double sh = (0.2 + 0.4 * uni(rng)) * double(h);
    double angle = uni(rng) * 3.14159265;
    double ca = std::cos(angle), sa = std::sin(angle);
    double period = 6 + uni(rng) * 10;  // stripe spacing
    double band = 0.25 + 0.35 * uni(rng);
    for (size_t y = 0; y < h; ++y)
      for (size_t x = 0; x < w; ++x) {
        double dx = double(x) - cx, dy = double(y) - cy;
        bool inside = false;
        switch (family) {
          case 0:  // rectangle
            inside = std::abs(dx) < sw / 2 && std::abs(dy) < sh / 2;
            break;
          case 1: {  // circle
            double rr = std::min(sw, sh) / 2;
            inside = dx * dx + dy * dy < rr * rr;
            break;
          }
          case 2: {  // diagonal stripe band across a rectangle support
            double t = (dx * ca + dy * sa) / period;
            bool on_stripe = t - std::floor(t) < band;
            inside = std::abs(dx) < sw && std::abs(dy) < sh && on_stripe;
            break;
          }
          case 3: {  // ellipse
            double ex = dx / (sw / 2), ey = dy / (sh / 2);
            inside = ex * ex + ey * ey < 1;
            break;
          }
        }
        if (inside) sc.labels[y * w + x] = cls;
      }
  }

  // per-scene illumination jitter, per-class texture noise
  double gain = 0.9 + 0.2 * uni(rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (size_t i = 0; i < h * w; ++i) {
    int cls = int(sc.labels[i]);
    Color c = base_color(cls);
    double amp = class_noise_amp(cls);
    double rgb[3] = {c.r, c.g, c.b};
    for (int ch = 0; ch < 3; ++ch) {
      double v = rgb[ch] * gain + amp * gauss(rng);
      v = std::clamp(v, 0.0, 1.0);
      // quantize to the 8-bit grid so files round-trip exactly
      sc.image[i * 3 + size_t(ch)] =
          real(std::lround(v * 255.0)) / real(255);
    }
  }
  return sc;
}

}  // namespace hgseg
