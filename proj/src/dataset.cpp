#include "hgseg/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "hgseg/image_io.hpp"

namespace hgseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_split(const std::string& out_dir, const std::string& split,
                 uint64_t seed_base, size_t count, const SceneSpec& base) {
  fs::create_directories(fs::path(out_dir) / split);
  DatasetManifest m;
  m.split = split;
  m.num_classes = base.num_classes;
  m.h = base.h;
  m.w = base.w;
  for (size_t i = 0; i < count; ++i) {
    SceneSpec spec = base;
    spec.seed = seed_base + i;
    Scene sc = generate_scene(spec);
    std::string img = split + "/" + std::to_string(spec.seed) + ".ppm";
    std::string lbl = split + "/" + std::to_string(spec.seed) + ".pgm";
    write_ppm((fs::path(out_dir) / img).string(), sc.image, sc.h, sc.w);
    write_pgm((fs::path(out_dir) / lbl).string(), sc.labels, sc.h, sc.w);
    m.seeds.push_back(spec.seed);
    m.images.push_back(img);
    m.labels.push_back(lbl);
  }
  json j;
  j["split"] = m.split;
  j["K"] = m.num_classes;
  j["h"] = m.h;
  j["w"] = m.w;
  j["seeds"] = m.seeds;
  j["images"] = m.images;
  j["labels"] = m.labels;
  std::ofstream f(fs::path(out_dir) / (split + ".json"));
  f << j.dump(2) << "\n";
}

}  // namespace

void build_splits(const std::string& out_dir, size_t n_train, size_t n_val,
                  size_t n_test, const SceneSpec& base) {
  // disjoint seed ranges per split
  write_split(out_dir, "train", base.seed, n_train, base);
  write_split(out_dir, "val", base.seed + 1000000, n_val, base);
  write_split(out_dir, "test", base.seed + 2000000, n_test, base);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_manifest: cannot open " + path);
  json j = json::parse(f);
  DatasetManifest m;
  m.split = j.at("split");
  m.num_classes = j.at("K");
  m.h = j.at("h");
  m.w = j.at("w");
  m.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  m.images = j.at("images").get<std::vector<std::string>>();
  m.labels = j.at("labels").get<std::vector<std::string>>();
  m.root = fs::path(path).parent_path().string();
  return m;
}

Scene load_sample(const DatasetManifest& m, size_t i) {
  Scene sc;
  size_t h = 0, w = 0;
  sc.image = read_ppm((fs::path(m.root) / m.images.at(i)).string(), h, w);
  sc.h = h;
  sc.w = w;
  size_t lh = 0, lw = 0;
  sc.labels = read_pgm((fs::path(m.root) / m.labels.at(i)).string(), lh, lw);
  if (lh != h || lw != w)
    throw std::runtime_error("load_sample: image/label size mismatch");
  return sc;
}

}  // namespace hgseg
