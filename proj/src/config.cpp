#include "hgseg/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace hgseg {

using nlohmann::json;

std::string to_json(const ModelConfig& c) {
  json j;
  j["d"] = c.d;
  j["r"] = c.r;
  j["L"] = c.L;
  j["tau"] = c.tau;
  j["num_queries"] = c.num_queries;
  j["num_classes"] = c.num_classes;
  j["heads"] = c.heads;
  j["backbone_channels"] = c.backbone_channels;
  j["w_part_cls"] = c.w_part_cls;
  j["w_contrast"] = c.w_contrast;
  j["w_dice"] = c.w_dice;
  j["w_mask"] = c.w_mask;
  j["w_mask_cls"] = c.w_mask_cls;
  j["no_object_weight"] = c.no_object_weight;
  j["deep_supervision_parts"] = c.deep_supervision_parts;
  j["deep_supervision_whole"] = c.deep_supervision_whole;
  j["normalize_center_update"] = c.normalize_center_update;
  j["inference_iteration"] = c.inference_iteration;
  j["grouping"] = c.grouping == GroupingMode::kFlat ? "flat" : "hierarchical";
  j["seed"] = c.seed;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig c;
  c.d = j.at("d");
  c.r = j.at("r");
  c.L = j.at("L");
  c.tau = j.at("tau");
  c.num_queries = j.at("num_queries");
  c.num_classes = j.at("num_classes");
  c.heads = j.at("heads");
  c.backbone_channels = j.at("backbone_channels");
  c.w_part_cls = j.at("w_part_cls");
  c.w_contrast = j.at("w_contrast");
  c.w_dice = j.at("w_dice");
  c.w_mask = j.at("w_mask");
  c.w_mask_cls = j.at("w_mask_cls");
  c.no_object_weight = j.at("no_object_weight");
  c.deep_supervision_parts = j.at("deep_supervision_parts");
  c.deep_supervision_whole = j.at("deep_supervision_whole");
  c.normalize_center_update = j.at("normalize_center_update");
  c.inference_iteration = j.at("inference_iteration");
  c.grouping = j.at("grouping") == "flat" ? GroupingMode::kFlat
                                          : GroupingMode::kHierarchical;
  c.seed = j.at("seed");
  return c;
}

void apply_config_kv(ModelConfig& c, const std::string& key,
                     const std::string& value) {
  auto as_int = [&] { return std::stoi(value); };
  auto as_f = [&] { return std::stod(value); };
  auto as_bool = [&] {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config: bad bool for " + key + ": " + value);
  };
  if (key == "d") c.d = as_int();
  else if (key == "r") c.r = as_int();
  else if (key == "L") c.L = as_int();
  else if (key == "tau") c.tau = as_f();
  else if (key == "num_queries") c.num_queries = as_int();
  else if (key == "num_classes") c.num_classes = as_int();
  else if (key == "heads") c.heads = as_int();
  else if (key == "w_part_cls") c.w_part_cls = as_f();
  else if (key == "w_contrast") c.w_contrast = as_f();
  else if (key == "w_dice") c.w_dice = as_f();
  else if (key == "w_mask") c.w_mask = as_f();
  else if (key == "w_mask_cls") c.w_mask_cls = as_f();
  else if (key == "no_object_weight") c.no_object_weight = as_f();
  else if (key == "deep_supervision_parts") c.deep_supervision_parts = as_bool();
  else if (key == "deep_supervision_whole") c.deep_supervision_whole = as_bool();
  else if (key == "normalize_center_update") c.normalize_center_update = as_bool();
  else if (key == "inference_iteration") c.inference_iteration = as_int();
  else if (key == "seed") c.seed = std::stoull(value);
  else if (key == "grouping") {
    if (value == "flat") c.grouping = GroupingMode::kFlat;
    else if (value == "hierarchical") c.grouping = GroupingMode::kHierarchical;
    else throw std::invalid_argument("config: grouping must be flat|hierarchical");
  } else if (key == "backbone_channels") {
    std::stringstream ss(value);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',')) {
      if (i >= 4) throw std::invalid_argument("config: backbone_channels needs 4 values");
      c.backbone_channels[i++] = std::stoi(tok);
    }
    if (i != 4) throw std::invalid_argument("config: backbone_channels needs 4 values");
  } else {
    throw std::invalid_argument("config: unknown key " + key);
  }
}

void apply_config_file(ModelConfig& c, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: missing '=' at line " +
                                  std::to_string(lineno));
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t\r");
      auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    apply_config_kv(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

}  // namespace hgseg
