#pragma once

#include <cstdint>
#include <vector>

#include "hgseg/rng.hpp"
#include "hgseg/tensor.hpp"

namespace hgseg {

// Procedural scene: textured shapes (one shape family per class) over a
// textured background (class 0). Fully determined by the seed.
struct SceneSpec {
  uint64_t seed = 0;
  size_t h = 64, w = 128;
  int num_classes = 5;  // background + (num_classes - 1) shape classes
};

struct Scene {
  std::vector<real> image;     // h*w*3, [0,1], already quantized to 8 bit
  std::vector<int64_t> labels; // h*w class ids
  size_t h = 0, w = 0;
};

Scene generate_scene(const SceneSpec& spec);

}  // namespace hgseg
