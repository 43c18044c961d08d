#include "hgseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hgseg {

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
void put_u64(std::ofstream& f, uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}
void put_str(std::ofstream& f, const std::string& s) {
  put_u64(f, s.size());
  f.write(s.data(), std::streamsize(s.size()));
}
void put_f64s(std::ofstream& f, const std::vector<real>& v) {
  put_u64(f, v.size());
  for (real x : v) {
    double d = double(x);
    f.write(reinterpret_cast<const char*>(&d), 8);
  }
}

uint32_t get_u32(std::ifstream& f) {
  uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t get_u64(std::ifstream& f) {
  uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string get_str(std::ifstream& f) {
  uint64_t n = get_u64(f);
  std::string s(n, '\0');
  f.read(s.data(), std::streamsize(n));
  return s;
}
std::vector<real> get_f64s(std::ifstream& f) {
  uint64_t n = get_u64(f);
  std::vector<real> v(n);
  for (auto& x : v) {
    double d = 0;
    f.read(reinterpret_cast<char*>(&d), 8);
    x = real(d);
  }
  return v;
}

void open_and_check(std::ifstream& f, const std::string& path) {
  f.open(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "HGCK", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t version = get_u32(f);
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamStore& params, const AdamW* opt, int64_t step) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  f.write("HGCK", 4);
  put_u32(f, 1);
  put_str(f, to_json(cfg));
  put_u64(f, params.all().size());
  for (const auto& [name, t] : params.all()) {
    put_str(f, name);
    put_u64(f, t.shape().size());
    for (size_t d : t.shape()) put_u64(f, d);
    put_f64s(f, t.data());
  }
  uint8_t has_opt = opt ? 1 : 0;
  f.write(reinterpret_cast<const char*>(&has_opt), 1);
  if (opt) {
    auto& mom = const_cast<AdamW*>(opt)->moments();
    put_u64(f, mom.size());
    for (const auto& [name, mv] : mom) {
      put_str(f, name);
      put_f64s(f, mv.first);
      put_f64s(f, mv.second);
    }
    put_u64(f, uint64_t(const_cast<AdamW*>(opt)->steps()));
  }
  put_u64(f, uint64_t(step));
}

ModelConfig peek_checkpoint_config(const std::string& path) {
  std::ifstream f;
  open_and_check(f, path);
  return model_config_from_json(get_str(f));
}

int64_t load_checkpoint(const std::string& path, const ModelConfig& expected,
                        ParamStore& params, AdamW* opt) {
  std::ifstream f;
  open_and_check(f, path);
  ModelConfig cfg = model_config_from_json(get_str(f));
  if (!(cfg == expected))
    throw std::runtime_error("checkpoint: config mismatch loading " + path);
  uint64_t n = get_u64(f);
  if (n != params.all().size())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
  for (uint64_t i = 0; i < n; ++i) {
    std::string name = get_str(f);
    uint64_t rank = get_u64(f);
    Shape shape(rank);
    for (auto& d : shape) d = size_t(get_u64(f));
    std::vector<real> data = get_f64s(f);
    if (!params.has(name))
      throw std::runtime_error("checkpoint: unknown parameter " + name);
    Tensor t = params.get(name);
    if (t.shape() != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    t.mutable_data() = std::move(data);
  }
  uint8_t has_opt = 0;
  f.read(reinterpret_cast<char*>(&has_opt), 1);
  if (has_opt) {
    uint64_t m = get_u64(f);
    if (opt) opt->moments().clear();
    for (uint64_t i = 0; i < m; ++i) {
      std::string name = get_str(f);
      auto first = get_f64s(f);
      auto second = get_f64s(f);
      if (opt) opt->moments()[name] = {std::move(first), std::move(second)};
    }
    uint64_t osteps = get_u64(f);
    if (opt) opt->set_steps(int64_t(osteps));
  }
  int64_t step = int64_t(get_u64(f));
  if (!f) throw std::runtime_error("checkpoint: truncated file " + path);
  return step;
}

}  // namespace hgseg
