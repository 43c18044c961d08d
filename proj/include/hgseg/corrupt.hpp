#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgseg/tensor.hpp"

namespace hgseg {

// One corruption kind per ImageNet-C-style family member; severity 1..5
// (0 is the identity). Deterministic given (seed, kind, severity).
enum class CorruptionKind {
  kGaussianNoise,
  kImpulseNoise,
  kShotNoise,
  kDefocusBlur,
  kMotionBlur,
  kBrightness,
  kContrast,
  kFogTint,
  kJpegBlock,
};

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussianNoise;
  int severity = 1;
  uint64_t seed = 0;
};

std::vector<real> corrupt(const std::vector<real>& rgb, size_t h, size_t w,
                          const CorruptionSpec& spec);

const char* corruption_name(CorruptionKind k);
CorruptionKind corruption_from_name(const std::string& name);
const std::vector<CorruptionKind>& all_corruptions();

// Mean squared error -> PSNR in dB (peak 1.0); used to calibrate ladders.
double psnr(const std::vector<real>& a, const std::vector<real>& b);

}  // namespace hgseg
