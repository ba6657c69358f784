#include "jointseg/settings.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

#include "jointseg/errors.hpp"
#include "jointseg/utf8.hpp"

namespace jointseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + v + "' for key '" + key + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("invalid number '" + v + "' for key '" + key + "'");
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ConfigError("empty list for key '" + key + "'");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* bool_text(bool b) { return b ? "true" : "false"; }

// Sets a raw encoder field without cross-field implications.
bool apply_encoder_key(EncoderConfig& e, const std::string& key, const std::string& value) {
  if (key == "encoder") {
    if (value != "full" && value != "mlp")
      throw ConfigError("unknown encoder '" + value + "' (expected full or mlp)");
    e.mlp_baseline = value == "mlp";
  } else if (key == "window") {
    e.window = parse_number<int>(key, value);
  } else if (key == "conv") {
    e.use_conv = parse_bool(key, value);
  } else if (key == "pooling") {
    e.use_pooling = parse_bool(key, value);
  } else if (key == "highway") {
    e.use_highway = parse_bool(key, value);
  } else if (key == "recurrent") {
    e.recurrent = parse_recurrent(value);
  } else if (key == "dim") {
    e.dim = parse_number<int>(key, value);
  } else if (key == "hidden") {
    e.hidden = parse_number<int>(key, value);
  } else if (key == "feature_maps") {
    e.feature_maps = parse_int_list(key, value);
  } else if (key == "feature_sets") {
    const int q = parse_number<int>(key, value);
    if (q < 1) throw ConfigError("feature_sets must be at least 1");
    e.feature_maps.resize(static_cast<std::size_t>(q), e.feature_maps.empty() ? 100 : e.feature_maps.front());
  } else if (key == "feature_map_size") {
    const int l = parse_number<int>(key, value);
    for (int& v : e.feature_maps) v = l;
  } else if (key == "bigrams") {
    e.use_bigram = parse_bool(key, value);
  } else {
    return false;
  }
  return true;
}

bool apply_train_key(TrainConfig& t, const std::string& key, const std::string& value) {
  if (key == "lr") {
    t.learning_rate = parse_number<double>(key, value);
  } else if (key == "margin") {
    t.margin = parse_number<double>(key, value);
  } else if (key == "l2") {
    t.l2 = parse_number<double>(key, value);
  } else if (key == "batch") {
    t.batch_size = parse_number<int>(key, value);
  } else if (key == "epochs") {
    t.max_epochs = parse_number<int>(key, value);
  } else if (key == "seed") {
    t.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "dev_fraction") {
    t.dev_fraction = parse_number<double>(key, value);
  } else if (key == "optimizer") {
    t.optimizer = parse_optimizer(value);
  } else if (key == "deterministic") {
    t.deterministic = parse_bool(key, value);
  } else if (key == "threads") {
    t.threads = parse_number<int>(key, value);
  } else if (key == "freeze_embeddings") {
    t.freeze_embeddings = parse_bool(key, value);
  } else {
    return false;
  }
  return true;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("missing key before '='", line_no);
    out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

std::vector<std::string> known_setting_keys() {
  return {"encoder",  "window",       "conv",      "pooling",          "highway",
          "recurrent", "dim",         "hidden",    "feature_maps",     "feature_sets",
          "feature_map_size", "bigrams", "lr",     "margin",           "l2",
          "batch",    "epochs",       "seed",      "dev_fraction",     "optimizer",
          "deterministic", "threads", "freeze_embeddings", "corpus",   "dev",
          "embeddings", "model",      "mode",      "min_count",        "bigram_min_count",
          "tagset",   "constrain",    "strict",    "normalize_width",  "separator"};
}

Settings resolve_settings(const std::vector<std::pair<std::string, std::string>>& pairs) {
  Settings s;
  bool recurrent_given = false;
  for (const auto& [key, value] : pairs) {
    if (key == "recurrent") recurrent_given = true;
    if (apply_encoder_key(s.encoder, key, value) || apply_train_key(s.train, key, value)) continue;
    if (key == "corpus") {
      s.corpus = value;
    } else if (key == "dev") {
      s.dev = value;
    } else if (key == "embeddings") {
      s.embeddings = value;
    } else if (key == "model") {
      s.model = value;
    } else if (key == "mode") {
      if (value == "joint") s.mode = EvalMode::kJoint;
      else if (value == "seg") s.mode = EvalMode::kSegmentation;
      else throw ConfigError("unknown mode '" + value + "' (expected joint or seg)");
    } else if (key == "min_count") {
      s.min_count = parse_number<std::size_t>(key, value);
    } else if (key == "bigram_min_count") {
      s.bigram_min_count = parse_number<std::size_t>(key, value);
    } else if (key == "tagset") {
      if (value != "full" && value != "observed")
        throw ConfigError("unknown tagset '" + value + "' (expected full or observed)");
      s.observed_tags_only = value == "observed";
    } else if (key == "constrain") {
      s.constrain_transitions = parse_bool(key, value);
    } else if (key == "strict") {
      s.strict = parse_bool(key, value);
    } else if (key == "normalize_width") {
      s.normalize_width = parse_bool(key, value);
    } else if (key == "separator") {
      const auto sep = utf8::decode(value);
      if (sep.size() != 1) throw ConfigError("separator must be a single character");
      s.separator = sep[0];
    } else {
      throw ConfigError("unknown configuration key '" + key + "'");
    }
  }

  EncoderConfig& e = s.encoder;
  if (e.mlp_baseline) {
    e.use_conv = e.use_pooling = e.use_highway = false;
    if (!recurrent_given) e.recurrent = Recurrent::kNone;
  }
  // No convolution means nothing to pool; no pooling means the highway carry
  // has no matching width.
  e.use_pooling = e.use_pooling && e.use_conv;
  e.use_highway = e.use_highway && e.use_pooling;
  e.validate();
  s.train.validate();
  return s;
}

std::string encoder_config_text(const EncoderConfig& e) {
  std::string maps;
  for (std::size_t i = 0; i < e.feature_maps.size(); ++i)
    maps += (i ? "," : "") + std::to_string(e.feature_maps[i]);
  std::ostringstream out;
  out << "encoder = " << (e.mlp_baseline ? "mlp" : "full") << '\n'
      << "window = " << e.window << '\n'
      << "conv = " << bool_text(e.use_conv) << '\n'
      << "pooling = " << bool_text(e.use_pooling) << '\n'
      << "highway = " << bool_text(e.use_highway) << '\n'
      << "recurrent = " << to_string(e.recurrent) << '\n'
      << "dim = " << e.dim << '\n'
      << "hidden = " << e.hidden << '\n'
      << "feature_maps = " << maps << '\n'
      << "bigrams = " << bool_text(e.use_bigram) << '\n';
  return out.str();
}

EncoderConfig parse_encoder_config_text(const std::string& text) {
  std::istringstream in(text);
  EncoderConfig e;
  for (const auto& [key, value] : parse_config(in))
    if (!apply_encoder_key(e, key, value))
      throw ConfigError("unknown encoder configuration key '" + key + "'");
  e.validate();
  return e;
}

std::string train_config_text(const TrainConfig& t) {
  std::ostringstream out;
  out << "lr = " << format_double(t.learning_rate) << '\n'
      << "margin = " << format_double(t.margin) << '\n'
      << "l2 = " << format_double(t.l2) << '\n'
      << "batch = " << t.batch_size << '\n'
      << "epochs = " << t.max_epochs << '\n'
      << "seed = " << t.seed << '\n'
      << "dev_fraction = " << format_double(t.dev_fraction) << '\n'
      << "optimizer = " << to_string(t.optimizer) << '\n'
      << "deterministic = " << bool_text(t.deterministic) << '\n'
      << "threads = " << t.threads << '\n'
      << "freeze_embeddings = " << bool_text(t.freeze_embeddings) << '\n';
  return out.str();
}

TrainConfig parse_train_config_text(const std::string& text) {
  std::istringstream in(text);
  TrainConfig t;
  for (const auto& [key, value] : parse_config(in))
    if (!apply_train_key(t, key, value))
      throw ConfigError("unknown training configuration key '" + key + "'");
  return t;
}

}  // namespace jointseg
