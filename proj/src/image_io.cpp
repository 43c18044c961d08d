#include "hgseg/image_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace hgseg {

namespace {
[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void read_header(std::ifstream& f, const char* magic, size_t& h, size_t& w,
                 const std::string& path) {
  std::string m;
  f >> m;
  if (m != magic) fail("bad magic in " + path);
  // skip comments
  auto next_token = [&]() {
    std::string t;
    while (f >> t) {
      if (t[0] == '#') {
        std::string line;
        std::getline(f, line);
        continue;
      }
      return t;
    }
    fail("truncated header in " + path);
  };
  w = std::stoul(next_token());
  h = std::stoul(next_token());
  size_t maxval = std::stoul(next_token());
  if (maxval != 255) fail("unsupported maxval in " + path);
  f.get();  // single whitespace before payload
}
}  // namespace

void write_ppm(const std::string& path, const std::vector<real>& rgb, size_t h,
               size_t w) {
  if (rgb.size() != h * w * 3) fail("write_ppm: size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("write_ppm: cannot open " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> buf(rgb.size());
  for (size_t i = 0; i < rgb.size(); ++i) {
    real v = std::min(real(1), std::max(real(0), rgb[i]));
    buf[i] = uint8_t(std::lround(double(v) * 255.0));
  }
  f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
}

std::vector<real> read_ppm(const std::string& path, size_t& h, size_t& w) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("read_ppm: cannot open " + path);
  read_header(f, "P6", h, w, path);
  std::vector<uint8_t> buf(h * w * 3);
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (!f) fail("read_ppm: truncated payload in " + path);
  std::vector<real> out(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) out[i] = real(buf[i]) / real(255);
  return out;
}

void write_pgm(const std::string& path, const std::vector<int64_t>& labels,
               size_t h, size_t w) {
  if (labels.size() != h * w) fail("write_pgm: size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("write_pgm: cannot open " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> buf(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    int64_t l = labels[i];
    if (l < 0) l = 255;
    if (l > 255) fail("write_pgm: label out of range");
    buf[i] = uint8_t(l);
  }
  f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
}

std::vector<int64_t> read_pgm(const std::string& path, size_t& h, size_t& w) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("read_pgm: cannot open " + path);
  read_header(f, "P5", h, w, path);
  std::vector<uint8_t> buf(h * w);
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (!f) fail("read_pgm: truncated payload in " + path);
  std::vector<int64_t> out(buf.size());
  for (size_t i = 0; i < buf.size(); ++i)
    out[i] = buf[i] == 255 ? int64_t(-1) : int64_t(buf[i]);
  return out;
}

}  // namespace hgseg
