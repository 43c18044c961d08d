#include "hgseg/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "hgseg/checkpoint.hpp"

namespace hgseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct FlippedScene {
  std::vector<real> image;
  std::vector<int64_t> labels;
};

FlippedScene hflip_scene(const Scene& sc) {
  FlippedScene out;
  out.image.resize(sc.image.size());
  out.labels.resize(sc.labels.size());
  for (size_t y = 0; y < sc.h; ++y)
    for (size_t x = 0; x < sc.w; ++x) {
      size_t src = y * sc.w + x, dst = y * sc.w + (sc.w - 1 - x);
      out.labels[dst] = sc.labels[src];
      for (size_t c = 0; c < 3; ++c) out.image[dst * 3 + c] = sc.image[src * 3 + c];
    }
  return out;
}

std::vector<Scene> preload(const DatasetManifest& m) {
  std::vector<Scene> out;
  out.reserve(m.size());
  for (size_t i = 0; i < m.size(); ++i) out.push_back(load_sample(m, i));
  return out;
}

// Runs fn(worker, i) for i in [0, n) across `threads` workers; rethrows the
// first worker exception on the caller.
void parallel_for(size_t n, int threads,
                  const std::function<void(size_t, size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(0, i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errs(static_cast<size_t>(threads));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
          fn(size_t(t), i);
      } catch (...) {
        errs[size_t(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace

int resolve_threads(int requested, size_t work_items) {
  int n = requested;
  if (n <= 0) {
    n = int(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
  }
  if (const char* env = std::getenv("HGSEG_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0 && cap < n) n = cap;
  }
  if (size_t(n) > work_items) n = int(work_items);
  return n < 1 ? 1 : n;
}

EvalResult evaluate(const Model& model, const DatasetManifest& split,
                    const EvalOptions& opts) {
  size_t n = split.size();
  if (opts.max_images > 0 && opts.max_images < n) n = opts.max_images;
  const int K = model.config().num_classes;
  const bool hier = model.config().grouping == GroupingMode::kHierarchical;
  const size_t iters = hier ? size_t(model.config().L) : 0;
  int threads = resolve_threads(opts.threads, n);

  struct Local {
    ConfusionMatrix ens, part, whole;
    std::vector<ConfusionMatrix> per_iter;
    Local(int K, size_t iters)
        : ens(K), part(K), whole(K), per_iter(iters, ConfusionMatrix(K)) {}
  };
  std::vector<Local> locals(size_t(threads), Local(K, iters));

  auto body = [&](size_t worker, size_t i) {
    Local& L = locals[worker];
    Scene sc = load_sample(split, i);
    std::vector<real> img = sc.image;
    if (opts.corruption) {
      CorruptionSpec cs = *opts.corruption;
      cs.seed = mix_seed(cs.seed, split.seeds[i]);
      img = corrupt(img, sc.h, sc.w, cs);
    }
    Prediction pred = model.predict(img, sc.h, sc.w, opts.per_iteration && hier);
    L.ens.add(pred.ensemble, sc.labels);
    if (!pred.part_only.empty()) L.part.add(pred.part_only, sc.labels);
    L.whole.add(pred.whole_only, sc.labels);
    for (size_t t = 0; t < pred.per_iteration_part.size(); ++t)
      L.per_iter[t].add(pred.per_iteration_part[t], sc.labels);
  };
  parallel_for(n, threads, body);

  ConfusionMatrix ens(K), part(K), whole(K);
  std::vector<ConfusionMatrix> per_iter(iters, ConfusionMatrix(K));
  for (auto& L : locals) {
    ens.merge(L.ens);
    part.merge(L.part);
    whole.merge(L.whole);
    for (size_t t = 0; t < iters; ++t) per_iter[t].merge(L.per_iter[t]);
  }
  EvalResult r;
  r.images = n;
  r.ensemble = ens.report();
  r.part = part.report();
  r.whole = whole.report();
  if (opts.per_iteration)
    for (size_t t = 0; t < iters; ++t)
      r.per_iteration_part_miou.push_back(per_iter[t].report().miou);
  return r;
}

Trainer::Trainer(Model& model, TrainConfig cfg)
    : model_(model), cfg_(cfg), opt_(cfg.opt) {}

TrainResult Trainer::run(const DatasetManifest& train,
                         const DatasetManifest* val,
                         const std::string& out_dir) {
  if (train.size() == 0) throw std::runtime_error("train: empty split");
  std::vector<Scene> data = preload(train);
  const size_t batch = size_t(std::max(1, cfg_.batch));
  int threads = resolve_threads(cfg_.threads, batch);

  std::ofstream log;
  std::string ckpt_path;
  if (!out_dir.empty()) {
    fs::create_directories(fs::path(out_dir) / "logs");
    fs::create_directories(fs::path(out_dir) / "ckpt");
    log.open(fs::path(out_dir) / "logs" / "train.jsonl", std::ios::app);
    ckpt_path = (fs::path(out_dir) / "ckpt" / "last.ckpt").string();
  }
  auto save = [&] {
    if (!ckpt_path.empty())
      save_checkpoint(ckpt_path, model_.config(), model_.params(), &opt_, step_);
  };

  struct ItemOut {
    std::vector<std::pair<Node*, std::vector<real>>> sink;
    double part_cls = 0, contrast = 0, dice = 0, mask = 0, mask_cls = 0,
           total = 0;
  };

  TrainResult res;
  const uint64_t seed = model_.config().seed;
  while (step_ < cfg_.iters) {
    Rng rng(mix_seed(seed, 0x5741u, uint64_t(step_)));
    std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
    std::bernoulli_distribution flip(0.5);
    struct Item {
      const Scene* sc;
      bool flipped;
    };
    std::vector<Item> items(batch);
    for (auto& it : items) {
      it.sc = &data[pick(rng)];
      it.flipped = cfg_.hflip && flip(rng);
    }

    std::vector<ItemOut> outs(batch);
    parallel_for(batch, threads, [&](size_t, size_t i) {
      const Scene& sc = *items[i].sc;
      const std::vector<real>* img = &sc.image;
      const std::vector<int64_t>* lbl = &sc.labels;
      FlippedScene fl;
      if (items[i].flipped) {
        fl = hflip_scene(sc);
        img = &fl.image;
        lbl = &fl.labels;
      }
      Tensor x = Tensor::from_data({sc.h * sc.w, 3}, *img);
      ForwardOutputs fo = model_.forward(x, sc.h, sc.w);
      GroundTruth gt = model_.ground_truth_for(*lbl, sc.h, sc.w);
      LossBreakdown lb = model_.compute_loss(fo, gt);
      ItemOut& o = outs[i];
      o.part_cls = double(lb.part_cls.item());
      o.contrast = double(lb.contrast.item());
      o.dice = double(lb.dice.item());
      o.mask = double(lb.mask.item());
      o.mask_cls = double(lb.mask_cls.item());
      o.total = double(lb.total.item());
      scale(lb.total, real(1) / real(batch)).backward(&o.sink);
    });

    double m_part = 0, m_con = 0, m_dice = 0, m_mask = 0, m_cls = 0, m_tot = 0;
    model_.params().zero_grads();
    for (auto& o : outs) {
      m_part += o.part_cls / double(batch);
      m_con += o.contrast / double(batch);
      m_dice += o.dice / double(batch);
      m_mask += o.mask / double(batch);
      m_cls += o.mask_cls / double(batch);
      m_tot += o.total / double(batch);
      for (auto& [node, g] : o.sink) {
        auto& dst = node->grad;
        if (dst.size() != g.size()) dst.assign(g.size(), real(0));
        for (size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
      }
      o.sink.clear();
    }
    if (!std::isfinite(m_tot)) {
      std::cerr << "step " << (step_ + 1) << ": non-finite loss"
                << "  part_cls=" << m_part << " contrast=" << m_con
                << " dice=" << m_dice << " mask=" << m_mask
                << " mask_cls=" << m_cls << "\n";
      throw std::runtime_error("training diverged: non-finite loss");
    }
    opt_.step(model_.params());
    ++step_;

    bool do_log = log.is_open() &&
                  (step_ % cfg_.log_every == 0 || step_ == 1 || step_ == cfg_.iters);
    bool do_eval = val && cfg_.eval_every > 0 &&
                   (step_ % cfg_.eval_every == 0 || step_ == cfg_.iters);
    double val_miou = -1;
    if (do_eval) {
      EvalOptions eo;
      eo.max_images = cfg_.eval_max_images;
      eo.threads = cfg_.threads;
      val_miou = evaluate(model_, *val, eo).ensemble.miou;
      res.final_val_miou = val_miou;
    }
    if (do_log || do_eval) {
      json j;
      j["step"] = step_;
      j["part_cls"] = m_part;
      j["contrast"] = m_con;
      j["dice"] = m_dice;
      j["mask"] = m_mask;
      j["mask_cls"] = m_cls;
      j["total"] = m_tot;
      if (do_eval) j["val_miou"] = val_miou;
      if (log.is_open()) log << j.dump() << "\n" << std::flush;
      std::cerr << "step " << step_ << " total " << m_tot;
      if (do_eval) std::cerr << " val_miou " << val_miou;
      std::cerr << "\n";
    }
    if (cfg_.ckpt_every > 0 && step_ % cfg_.ckpt_every == 0) save();
    if (do_eval && cfg_.stop_at_miou > 0 && val_miou >= cfg_.stop_at_miou) {
      res.stopped_early = true;
      break;
    }
  }
  save();
  res.steps = step_;
  return res;
}

}  // namespace hgseg
