#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jointseg/encoder.hpp"
#include "jointseg/eval.hpp"
#include "jointseg/train_config.hpp"

namespace jointseg {

// Everything the command-line tool can be configured with. Each field has a
// `key = value` spelling accepted in config files.
struct Settings {
  EncoderConfig encoder;
  TrainConfig train;

  std::string corpus;
  std::string dev;
  std::string embeddings;
  std::string model;
  std::optional<EvalMode> mode;

  std::size_t min_count = 1;
  std::size_t bigram_min_count = 2;
  bool observed_tags_only = false;
  bool constrain_transitions = false;
  bool strict = true;
  bool normalize_width = false;
  char32_t separator = U'/';
};

// Ordered key/value pairs from a config file: `key = value`, '#' starts a
// comment, blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in);
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path);

// Applies key/value pairs in order of increasing precedence (defaults, then
// file, then command line) and resolves topology implications. Unknown keys
// throw ConfigError naming the key.
Settings resolve_settings(const std::vector<std::pair<std::string, std::string>>& pairs);

std::vector<std::string> known_setting_keys();

// Canonical text forms stored inside model files.
std::string encoder_config_text(const EncoderConfig& cfg);
EncoderConfig parse_encoder_config_text(const std::string& text);
std::string train_config_text(const TrainConfig& cfg);
TrainConfig parse_train_config_text(const std::string& text);

}  // namespace jointseg
