#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace hgseg {

enum class GroupingMode { kHierarchical, kFlat };

struct ModelConfig {
  int d = 64;               // decoder feature width
  int r = 4;                // part grid cell size on the stride-8 map
  int L = 6;                // refinement iterations (both grouping stages)
  double tau = 0.1;         // temperature for cosine similarities
  int num_queries = 16;     // N_o
  int num_classes = 5;      // K
  int heads = 4;
  std::array<int, 4> backbone_channels = {16, 32, 64, 128};

  // loss weights: part_cls, contrast, dice, mask, mask_cls
  double w_part_cls = 2.0;
  double w_contrast = 6.0;
  double w_dice = 5.0;
  double w_mask = 5.0;
  double w_mask_cls = 2.0;
  double no_object_weight = 0.1;

  bool deep_supervision_parts = true;   // part losses at every iteration
  bool deep_supervision_whole = true;   // whole losses at every decoder layer
  bool normalize_center_update = true;  // mass-normalized center update
  int inference_iteration = -1;         // -1: last iteration's (A, P_m)

  GroupingMode grouping = GroupingMode::kHierarchical;
  uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

std::string to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const std::string& json);

// key=value overlay file (one pair per line, '#' comments). Unknown keys are
// errors.
void apply_config_file(ModelConfig& c, const std::string& path);
void apply_config_kv(ModelConfig& c, const std::string& key, const std::string& value);

}  // namespace hgseg
