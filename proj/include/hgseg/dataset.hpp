#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgseg/synth.hpp"

namespace hgseg {

struct DatasetManifest {
  std::string split;
  int num_classes = 0;
  size_t h = 0, w = 0;
  std::vector<uint64_t> seeds;
  std::vector<std::string> images;  // paths relative to root
  std::vector<std::string> labels;
  std::string root;  // directory holding the manifest

  size_t size() const { return seeds.size(); }
};

// Generates train/val/test splits with disjoint seed ranges and writes
// images (PPM), labels (PGM), and one manifest JSON per split.
void build_splits(const std::string& out_dir, size_t n_train, size_t n_val,
                  size_t n_test, const SceneSpec& base);

DatasetManifest load_manifest(const std::string& path);

Scene load_sample(const DatasetManifest& m, size_t i);

}  // namespace hgseg
