#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hgseg/corrupt.hpp"
#include "hgseg/dataset.hpp"
#include "hgseg/metrics.hpp"
#include "hgseg/model.hpp"

namespace hgseg {

struct TrainConfig {
  int64_t iters = 3000;
  int batch = 8;
  AdamWConfig opt;             // lr 1e-4, wd 0.05 defaults
  bool hflip = true;           // random horizontal flip augmentation
  int64_t log_every = 25;
  int64_t ckpt_every = 500;
  int64_t eval_every = 250;    // val mIoU cadence (0 disables)
  double stop_at_miou = -1.0;  // early stop when val mIoU reaches this (<0 off)
  size_t eval_max_images = 0;  // 0 = full split
  int threads = 0;             // 0 = auto (HGSEG_THREADS caps)
};

struct TrainResult {
  int64_t steps = 0;
  double final_val_miou = -1.0;  // -1 when no val split was given
  bool stopped_early = false;
};

struct EvalOptions {
  std::optional<CorruptionSpec> corruption;
  size_t max_images = 0;  // 0 = all
  bool per_iteration = false;
  int threads = 0;
};

struct EvalResult {
  IoUReport ensemble, part, whole;
  std::vector<double> per_iteration_part_miou;  // one entry per iteration
  size_t images = 0;
};

int resolve_threads(int requested, size_t work_items);

EvalResult evaluate(const Model& model, const DatasetManifest& split,
                    const EvalOptions& opts);

class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg);

  AdamW& opt() { return opt_; }
  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }

  // Runs until cfg.iters (or early stop). Writes logs/train.jsonl and
  // ckpt/last.ckpt under out_dir when it is non-empty.
  TrainResult run(const DatasetManifest& train, const DatasetManifest* val,
                  const std::string& out_dir);

 private:
  Model& model_;
  TrainConfig cfg_;
  AdamW opt_;
  int64_t step_ = 0;
};

}  // namespace hgseg
