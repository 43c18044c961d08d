#pragma once

#include <cstdint>
#include <string>

#include "hgseg/config.hpp"
#include "hgseg/nn.hpp"

namespace hgseg {

// Checkpoint layout: magic "HGCK", u32 version, config JSON blob, named
// parameter tensors (sorted by name), AdamW moments, u64 step counter.
// save -> load -> save is byte-identical.
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamStore& params, const AdamW* opt, int64_t step);

// Reads the config stored in a checkpoint without loading tensors.
ModelConfig peek_checkpoint_config(const std::string& path);

// Fills `params` (which must already contain identically named and shaped
// tensors) and optionally optimizer state. Mismatched names or shapes are
// errors.
int64_t load_checkpoint(const std::string& path, const ModelConfig& expected,
                        ParamStore& params, AdamW* opt);

}  // namespace hgseg
