#include "epe/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "epe/error.hpp"

namespace epe {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': '" + value + "' is not a number");
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("key '" + key + "': '" + value + "' is not a non-negative integer");
  }
  return v;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in, const std::vector<std::string>& allowed) {
  std::map<std::string, std::string> out;
  std::string raw;
  for (int line_no = 1; std::getline(in, raw); ++line_no) {
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key '" + key + "' has no value");
    out[key] = value;
  }
  return out;
}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "initial_lr",   "power",         "max_iter",      "batch_size",   "seed",
      "lambda",       "patch_size",    "flip_prob",     "scale_min",    "scale_max",
      "rotation_deg", "crop_size",     "weight_decay",  "beta1",        "beta2",
      "adam_eps",     "host_width",    "num_classes",   "train_samples", "val_samples",
      "image_size",   "data_seed",     "texture_amplitude", "texture_probability",
      "train_images", "train_labels",  "val_images",    "val_labels"};
  return keys;
}

RunConfig apply_run_config(const std::map<std::string, std::string>& values, RunConfig cfg) {
  for (const auto& [key, value] : values) {
    TrainConfig& t = cfg.train;
    if (key == "initial_lr") t.initial_lr = to_double(key, value);
    else if (key == "power") t.power = to_double(key, value);
    else if (key == "max_iter") t.max_iter = to_uint(key, value);
    else if (key == "batch_size") t.batch_size = to_uint(key, value);
    else if (key == "seed") t.seed = to_uint(key, value);
    else if (key == "lambda") t.lambda = to_double(key, value);
    else if (key == "patch_size") t.patch_size = to_uint(key, value);
    else if (key == "flip_prob") t.augment.flip_prob = to_double(key, value);
    else if (key == "scale_min") t.augment.scale_min = to_double(key, value);
    else if (key == "scale_max") t.augment.scale_max = to_double(key, value);
    else if (key == "rotation_deg") t.augment.max_rotation_deg = to_double(key, value);
    else if (key == "crop_size") t.augment.crop_size = to_uint(key, value);
    else if (key == "weight_decay") t.adam.weight_decay = to_double(key, value);
    else if (key == "beta1") t.adam.beta1 = to_double(key, value);
    else if (key == "beta2") t.adam.beta2 = to_double(key, value);
    else if (key == "adam_eps") t.adam.eps = to_double(key, value);
    else if (key == "host_width") cfg.host_width = to_uint(key, value);
    else if (key == "num_classes") cfg.num_classes = cfg.toy_train.num_classes = cfg.toy_val.num_classes = to_uint(key, value);
    else if (key == "train_samples") cfg.toy_train.num_samples = to_uint(key, value);
    else if (key == "val_samples") cfg.toy_val.num_samples = to_uint(key, value);
    else if (key == "image_size") cfg.toy_train.height = cfg.toy_train.width = cfg.toy_val.height = cfg.toy_val.width = to_uint(key, value);
    else if (key == "data_seed") {
      cfg.toy_train.seed = to_uint(key, value);
      cfg.toy_val.seed = cfg.toy_train.seed + 1;
    } else if (key == "texture_amplitude") cfg.toy_train.texture_amplitude = cfg.toy_val.texture_amplitude = to_double(key, value);
    else if (key == "texture_probability") cfg.toy_train.texture_probability = cfg.toy_val.texture_probability = to_double(key, value);
    else if (key == "train_images") cfg.train_images = value;
    else if (key == "train_labels") cfg.train_labels = value;
    else if (key == "val_images") cfg.val_images = value;
    else if (key == "val_labels") cfg.val_labels = value;
    else throw ConfigError("unknown key '" + key + "'");
  }
  cfg.toy_train.num_classes = cfg.toy_val.num_classes = cfg.num_classes;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  return apply_run_config(parse_key_values(in, run_config_keys()));
}

}  // namespace epe
