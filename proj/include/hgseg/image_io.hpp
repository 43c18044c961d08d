#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgseg/tensor.hpp"

namespace hgseg {

// Binary PPM (P6), values in [0,1] quantized to 8 bit. rgb is h*w*3,
// row-major, pixel-interleaved.
void write_ppm(const std::string& path, const std::vector<real>& rgb, size_t h,
               size_t w);
std::vector<real> read_ppm(const std::string& path, size_t& h, size_t& w);

// Binary PGM (P5) with class-id pixels; 255 maps to the ignore label (-1).
void write_pgm(const std::string& path, const std::vector<int64_t>& labels,
               size_t h, size_t w);
std::vector<int64_t> read_pgm(const std::string& path, size_t& h, size_t& w);

}  // namespace hgseg
