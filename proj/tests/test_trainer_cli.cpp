#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hgseg/checkpoint.hpp"
#include "hgseg/trainer.hpp"

using namespace hgseg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

ModelConfig small_cfg() {
  ModelConfig c;
  c.d = 16;
  c.heads = 2;
  c.num_queries = 8;
  c.num_classes = 4;
  c.L = 2;
  c.seed = 11;
  return c;
}

struct TempDataset {
  std::string dir;
  DatasetManifest train, val;
  TempDataset() {
    dir = (fs::temp_directory_path() / "hgseg_trainer_test").string();
    fs::remove_all(dir);
    SceneSpec base;
    base.seed = 21;
    base.h = 32;
    base.w = 64;
    base.num_classes = 4;
    build_splits(dir, 12, 4, 2, base);
    train = load_manifest(dir + "/train.json");
    val = load_manifest(dir + "/val.json");
  }
  ~TempDataset() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("training smoke: loss drops, log and checkpoint written, resume works") {
  TempDataset data;
  ModelConfig cfg = small_cfg();
  Model model(cfg);
  TrainConfig tc;
  tc.iters = 60;
  tc.batch = 4;
  tc.log_every = 1;
  tc.ckpt_every = 30;
  tc.eval_every = 0;
  std::string out = data.dir + "/run";
  Trainer tr(model, tc);
  TrainResult res = tr.run(data.train, &data.val, out);
  CHECK(res.steps == 60);

  // parse the JSONL loss log
  std::ifstream log(out + "/logs/train.jsonl");
  REQUIRE(log.good());
  double first_total = -1, last_avg = 0;
  int n = 0, tail = 0;
  std::string line;
  while (std::getline(log, line)) {
    auto pos = line.find("\"total\":");
    REQUIRE(pos != std::string::npos);
    double total = std::stod(line.substr(pos + 8));
    if (n == 0) first_total = total;
    ++n;
    if (n > 50) {
      last_avg += total;
      ++tail;
    }
  }
  CHECK(n == 60);
  CHECK(last_avg / tail < first_total);  // loss at the end below iter-1 loss

  // resume continues the step counter exactly
  Model resumed(cfg);
  Trainer tr2(resumed, tc);
  int64_t step =
      load_checkpoint(out + "/ckpt/last.ckpt", cfg, resumed.params(), &tr2.opt());
  CHECK(step == 60);
  tr2.set_step(step);
  tc.iters = 62;
  Trainer tr3(resumed, tc);
  tr3.opt() = tr2.opt();
  tr3.set_step(step);
  TrainResult r2 = tr3.run(data.train, nullptr, out + "2");
  CHECK(r2.steps == 62);
}

TEST_CASE("training is deterministic") {
  TempDataset data;
  ModelConfig cfg = small_cfg();
  TrainConfig tc;
  tc.iters = 8;
  tc.batch = 2;
  tc.eval_every = 0;
  tc.ckpt_every = 0;
  auto run = [&] {
    Model m(cfg);
    Trainer tr(m, tc);
    tr.run(data.train, nullptr, "");
    Scene sc = load_sample(data.val, 0);
    return m.predict(sc.image, sc.h, sc.w).ensemble;
  };
  CHECK(run() == run());
}

TEST_CASE("evaluate covers corruption and per-iteration modes") {
  TempDataset data;
  Model model(small_cfg());
  EvalOptions eo;
  eo.per_iteration = true;
  EvalResult clean = evaluate(model, data.val, eo);
  CHECK(clean.images == 4);
  CHECK(clean.per_iteration_part_miou.size() == 2);
  eo.corruption = CorruptionSpec{CorruptionKind::kGaussianNoise, 5, 3};
  eo.max_images = 2;
  EvalResult noisy = evaluate(model, data.val, eo);
  CHECK(noisy.images == 2);
  CHECK(noisy.ensemble.miou >= 0.0);
  CHECK(noisy.ensemble.miou <= 1.0);
}

TEST_CASE("cli: gen is deterministic, unknown flags rejected") {
  const char* cli = std::getenv("HGSEG_CLI");
  REQUIRE(cli != nullptr);
  auto dir = fs::temp_directory_path() / "hgseg_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto run = [&](const std::string& args) {
    std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  std::string gen = "gen --train 3 --val 2 --test 1 --seed 5 --hw 32x64 --out ";
  CHECK(run(gen + (dir / "a").string()) == 0);
  CHECK(run(gen + (dir / "b").string()) == 0);
  for (auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), dir / "a");
    CHECK(slurp(e.path()) == slurp(dir / "b" / rel));
  }
  CHECK(run("gen --does-not-exist 1 --out " + (dir / "c").string()) != 0);
  CHECK(run("definitely-not-a-command") != 0);
  fs::remove_all(dir);
}
