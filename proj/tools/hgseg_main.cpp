#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hgseg/checkpoint.hpp"
#include "hgseg/dataset.hpp"
#include "hgseg/image_io.hpp"
#include "hgseg/inference.hpp"
#include "hgseg/model.hpp"
#include "hgseg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hgseg;

namespace {

struct ConfigFlags {
  std::string config_file;
  std::vector<std::string> sets;
  uint64_t seed = 0;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& cf) {
  cmd->add_option("--config", cf.config_file, "key=value config overlay file");
  cmd->add_option("--set", cf.sets, "inline config override key=value")
      ->take_all();
  cmd->add_option("--seed", cf.seed, "model / run seed");
}

ModelConfig build_config(const ConfigFlags& cf) {
  ModelConfig mc;
  mc.seed = cf.seed;
  if (!cf.config_file.empty()) apply_config_file(mc, cf.config_file);
  for (const auto& s : cf.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--set expects key=value, got: " + s);
    apply_config_kv(mc, s.substr(0, eq), s.substr(eq + 1));
  }
  return mc;
}

void print_config(const ModelConfig& mc) {
  std::cerr << "config: " << to_json(mc) << "\n";
}

json report_to_json(const IoUReport& r) {
  json j;
  j["miou"] = r.miou;
  json pc = json::array();
  for (size_t c = 0; c < r.per_class.size(); ++c) {
    if (r.class_valid[c])
      pc.push_back(r.per_class[c]);
    else
      pc.push_back(nullptr);
  }
  j["per_class"] = pc;
  return j;
}

// --- gen --------------------------------------------------------------------

struct GenArgs {
  std::string out;
  size_t n_train = 800, n_val = 100, n_test = 100;
  uint64_t seed = 0;
  std::string hw = "64x128";
  int classes = 5;
};

int cmd_gen(const GenArgs& a) {
  SceneSpec base;
  base.seed = a.seed;
  base.num_classes = a.classes;
  auto x = a.hw.find('x');
  if (x == std::string::npos) throw CLI::ValidationError("--hw expects HxW");
  base.h = std::stoul(a.hw.substr(0, x));
  base.w = std::stoul(a.hw.substr(x + 1));
  std::cerr << "generating " << a.n_train << "/" << a.n_val << "/" << a.n_test
            << " scenes (" << base.h << "x" << base.w << ", K=" << base.num_classes
            << ", seed " << base.seed << ") into " << a.out << "\n";
  build_splits(a.out, a.n_train, a.n_val, a.n_test, base);
  json j;
  j["out"] = a.out;
  j["train"] = a.n_train;
  j["val"] = a.n_val;
  j["test"] = a.n_test;
  std::cout << j.dump() << "\n";
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data, out;
  ConfigFlags cf;
  TrainConfig tc;
  bool resume = false;
  bool no_hflip = false;
};

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--data", a.data, "dataset directory (from gen)")->required();
  cmd->add_option("--out", a.out, "output directory (ckpt/, logs/)")->required();
  add_config_flags(cmd, a.cf);
  cmd->add_option("--iters", a.tc.iters, "training iterations");
  cmd->add_option("--batch", a.tc.batch, "batch size");
  cmd->add_option("--lr", a.tc.opt.lr, "learning rate");
  cmd->add_option("--wd", a.tc.opt.weight_decay, "weight decay");
  cmd->add_flag("--no-hflip", a.no_hflip, "disable horizontal flip augmentation");
  cmd->add_option("--log-every", a.tc.log_every);
  cmd->add_option("--ckpt-every", a.tc.ckpt_every);
  cmd->add_option("--eval-every", a.tc.eval_every);
  cmd->add_option("--stop-at-miou", a.tc.stop_at_miou,
                  "early stop when val mIoU reaches this");
  cmd->add_option("--eval-max-images", a.tc.eval_max_images);
  cmd->add_option("--threads", a.tc.threads, "0 = auto; HGSEG_THREADS caps");
  cmd->add_flag("--resume", a.resume, "continue from <out>/ckpt/last.ckpt");
}

int cmd_train(TrainArgs a, bool force_flat) {
  ModelConfig mc = build_config(a.cf);
  if (force_flat) mc.grouping = GroupingMode::kFlat;
  a.tc.hflip = !a.no_hflip;
  Model model(mc);
  print_config(mc);
  std::cerr << "parameters: " << model.params().count_scalars() << "\n";
  if (force_flat) {
    ModelConfig hier = mc;
    hier.grouping = GroupingMode::kHierarchical;
    std::cerr << "parameters (hierarchical, for comparison): "
              << Model(hier).params().count_scalars() << "\n";
  }
  Trainer tr(model, a.tc);
  std::string last = (fs::path(a.out) / "ckpt" / "last.ckpt").string();
  if (a.resume) {
    if (!fs::exists(last))
      throw std::runtime_error("--resume: no checkpoint at " + last);
    int64_t step = load_checkpoint(last, mc, model.params(), &tr.opt());
    tr.set_step(step);
    std::cerr << "resumed at step " << step << "\n";
  }
  DatasetManifest train =
      load_manifest((fs::path(a.data) / "train.json").string());
  DatasetManifest val;
  bool has_val = fs::exists(fs::path(a.data) / "val.json");
  if (has_val) val = load_manifest((fs::path(a.data) / "val.json").string());
  TrainResult r = tr.run(train, has_val ? &val : nullptr, a.out);
  json j;
  j["steps"] = r.steps;
  j["stopped_early"] = r.stopped_early;
  if (r.final_val_miou >= 0) j["val_miou"] = r.final_val_miou;
  std::cout << j.dump() << "\n";
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, data, split = "val", out;
  std::string mode = "all";
  std::string corruption;  // "", "kind:severity", or "grid"
  uint64_t corruption_seed = 0;
  bool per_iter = false;
  size_t max_images = 0;
  int threads = 0;
};

json eval_cell(const Model& model, const DatasetManifest& split,
               const EvalArgs& a, const std::optional<CorruptionSpec>& cs) {
  EvalOptions eo;
  eo.corruption = cs;
  eo.max_images = a.max_images;
  eo.per_iteration = a.per_iter;
  eo.threads = a.threads;
  EvalResult r = evaluate(model, split, eo);
  const bool hier = model.config().grouping == GroupingMode::kHierarchical;
  json cell;
  if (a.mode == "all" || a.mode == "ensemble")
    cell["ensemble"] = report_to_json(r.ensemble);
  if (hier && (a.mode == "all" || a.mode == "part"))
    cell["part"] = report_to_json(r.part);
  if (a.mode == "all" || a.mode == "whole")
    cell["whole"] = report_to_json(r.whole);
  if (a.per_iter && hier)
    cell["per_iteration_part_miou"] = r.per_iteration_part_miou;
  return cell;
}

int cmd_eval(const EvalArgs& a, bool expect_flat) {
  if (a.mode != "all" && a.mode != "part" && a.mode != "whole" &&
      a.mode != "ensemble")
    throw CLI::ValidationError("--mode must be part|whole|ensemble|all");
  ModelConfig mc = peek_checkpoint_config(a.ckpt);
  if (expect_flat && mc.grouping != GroupingMode::kFlat)
    throw std::runtime_error("baseline eval expects a flat-grouping checkpoint");
  if (mc.grouping == GroupingMode::kFlat && a.mode == "part")
    throw std::runtime_error("flat checkpoints produce no part outputs");
  Model model(mc);
  print_config(mc);
  int64_t step = load_checkpoint(a.ckpt, mc, model.params(), nullptr);
  DatasetManifest split =
      load_manifest((fs::path(a.data) / (a.split + ".json")).string());

  json j;
  j["split"] = a.split;
  j["images"] = a.max_images > 0 && a.max_images < split.size() ? a.max_images
                                                                : split.size();
  j["mode"] = a.mode;
  j["step"] = step;
  json results;
  if (a.corruption.empty()) {
    results["clean"] = eval_cell(model, split, a, std::nullopt);
  } else if (a.corruption == "grid") {
    results["clean"] = eval_cell(model, split, a, std::nullopt);
    for (CorruptionKind k : all_corruptions())
      for (int sev = 1; sev <= 5; ++sev) {
        CorruptionSpec cs{k, sev, a.corruption_seed};
        std::string name =
            std::string(corruption_name(k)) + ":" + std::to_string(sev);
        results[name] = eval_cell(model, split, a, cs);
        std::cerr << name << " done\n";
      }
  } else {
    auto colon = a.corruption.find(':');
    if (colon == std::string::npos)
      throw CLI::ValidationError("--corruption expects kind:severity or grid");
    CorruptionSpec cs;
    cs.kind = corruption_from_name(a.corruption.substr(0, colon));
    cs.severity = std::stoi(a.corruption.substr(colon + 1));
    if (cs.severity < 0 || cs.severity > 5)
      throw CLI::ValidationError("severity must be 0..5");
    cs.seed = a.corruption_seed;
    results[a.corruption] = eval_cell(model, split, a, cs);
  }
  j["results"] = results;
  std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream f(fs::path(a.out) / "metrics.json", std::ios::binary);
    f << text;
  }
  return 0;
}

// --- viz --------------------------------------------------------------------

struct VizArgs {
  std::string ckpt, image, out;
  bool random_weights = false;
  ConfigFlags cf;
};

std::vector<real> part_colors(size_t n) {
  std::vector<real> c(n * 3);
  for (size_t i = 0; i < n; ++i) {
    uint64_t h = mix_seed(0xc0109u, i);
    c[i * 3 + 0] = real((h >> 0) & 0xff) / 255;
    c[i * 3 + 1] = real((h >> 8) & 0xff) / 255;
    c[i * 3 + 2] = real((h >> 16) & 0xff) / 255;
  }
  return c;
}

int cmd_viz(const VizArgs& a) {
  ModelConfig mc;
  if (a.random_weights) {
    mc = build_config(a.cf);
  } else {
    if (a.ckpt.empty())
      throw CLI::ValidationError("viz needs --ckpt or --random-weights");
    mc = peek_checkpoint_config(a.ckpt);
  }
  Model model(mc);
  print_config(mc);
  if (!a.random_weights)
    load_checkpoint(a.ckpt, mc, model.params(), nullptr);

  size_t H = 0, W = 0;
  std::vector<real> img = read_ppm(a.image, H, W);
  fs::create_directories(a.out);

  NoGradGuard ng;
  Tensor x = Tensor::from_data({H * W, 3}, img);
  ForwardOutputs fo = model.forward(x, H, W);

  // final label map
  Prediction pred = model.predict(img, H, W);
  write_pgm((fs::path(a.out) / "label.pgm").string(), pred.ensemble, H, W);

  // whole-mask heatmaps on the stride-4 grid
  const auto& last = fo.whole.layers.back();
  size_t h4 = fo.feats.K0.h, w4 = fo.feats.K0.w;
  for (size_t q = 0; q < last.masks.rows(); ++q) {
    std::vector<int64_t> heat(h4 * w4);
    for (size_t i = 0; i < h4 * w4; ++i)
      heat[i] = int64_t(std::lround(double(last.masks.at(q * h4 * w4 + i)) * 254));
    write_pgm((fs::path(a.out) / ("whole_q" + std::to_string(q) + ".pgm")).string(),
              heat, h4, w4);
  }

  // hardened part partition, colored, at input resolution
  if (mc.grouping == GroupingMode::kHierarchical) {
    auto hard = harden_assignment(fo.part.history.back().A, fo.grid);
    auto up = upsample_labels(hard, fo.feats.K.h, fo.feats.K.w, H, W);
    auto colors = part_colors(fo.grid.num_parts());
    std::vector<real> rgb(H * W * 3);
    for (size_t i = 0; i < H * W; ++i)
      for (size_t c = 0; c < 3; ++c)
        rgb[i * 3 + c] = colors[size_t(up[i]) * 3 + c];
    write_ppm((fs::path(a.out) / "parts.ppm").string(), rgb, H, W);
  }
  std::cerr << "wrote visualizations to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical grouping segmentation toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* cgen = app.add_subcommand("gen", "generate a synthetic dataset");
  cgen->add_option("--out", gen.out)->required();
  cgen->add_option("--train", gen.n_train);
  cgen->add_option("--val", gen.n_val);
  cgen->add_option("--test", gen.n_test);
  cgen->add_option("--seed", gen.seed);
  cgen->add_option("--hw", gen.hw, "image size HxW");
  cgen->add_option("--classes", gen.classes);

  TrainArgs train;
  auto* ctrain = app.add_subcommand("train", "train a model");
  add_train_flags(ctrain, train);

  EvalArgs ev;
  auto add_eval_flags = [&](CLI::App* cmd, EvalArgs& a) {
    cmd->add_option("--ckpt", a.ckpt)->required();
    cmd->add_option("--data", a.data)->required();
    cmd->add_option("--split", a.split, "val|test|train manifest to evaluate");
    cmd->add_option("--mode", a.mode, "part|whole|ensemble|all");
    cmd->add_option("--corruption", a.corruption, "kind:severity or grid");
    cmd->add_option("--corruption-seed", a.corruption_seed);
    cmd->add_flag("--per-iter", a.per_iter, "per-iteration part mIoU");
    cmd->add_option("--max-images", a.max_images);
    cmd->add_option("--threads", a.threads);
    cmd->add_option("--out", a.out, "also write <out>/metrics.json");
  };
  auto* ceval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_eval_flags(ceval, ev);

  VizArgs viz;
  auto* cviz = app.add_subcommand("viz", "dump qualitative outputs");
  cviz->add_option("--ckpt", viz.ckpt);
  cviz->add_option("--image", viz.image, "input PPM")->required();
  cviz->add_option("--out", viz.out)->required();
  cviz->add_flag("--random-weights", viz.random_weights,
                 "use freshly initialized weights (no checkpoint)");
  add_config_flags(cviz, viz.cf);

  auto* cbase = app.add_subcommand("baseline",
                                   "flat-grouping comparator (same surface)");
  cbase->require_subcommand(1);
  TrainArgs btrain;
  auto* cbtrain = cbase->add_subcommand("train", "train the flat baseline");
  add_train_flags(cbtrain, btrain);
  EvalArgs bev;
  auto* cbeval = cbase->add_subcommand("eval", "evaluate a flat checkpoint");
  add_eval_flags(cbeval, bev);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*cgen) return cmd_gen(gen);
    if (*ctrain) return cmd_train(train, false);
    if (*ceval) return cmd_eval(ev, false);
    if (*cviz) return cmd_viz(viz);
    if (*cbase) {
      if (*cbtrain) return cmd_train(btrain, true);
      if (*cbeval) return cmd_eval(bev, true);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
