// Command-line front end: train, tag and eval subcommands.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "jointseg/corpus.hpp"
#include "jointseg/errors.hpp"
#include "jointseg/eval.hpp"
#include "jointseg/modelfile.hpp"
#include "jointseg/settings.hpp"
#include "jointseg/training.hpp"
#include "jointseg/utf8.hpp"

namespace {

using namespace jointseg;
using KeyValues = std::vector<std::pair<std::string, std::string>>;

// A flag that maps onto one config key. Only flags the user actually passed
// are applied, after the config file, so they take precedence over it.
struct FlagBinding {
  CLI::Option* option = nullptr;
  std::string key;
  std::string value;       // filled by CLI11 for valued options
  const char* fixed = nullptr;  // set for switches such as --no-conv
};

class Overrides {
 public:
  void value(CLI::App* app, const std::string& flag, const std::string& key,
             const std::string& help) {
    auto& b = *bindings_.emplace_back(std::make_unique<FlagBinding>());
    b.key = key;
    b.option = app->add_option(flag, b.value, help);
  }
  void choice(CLI::App* app, const std::string& flag, const std::string& key,
              std::vector<std::string> choices, const std::string& help) {
    auto& b = *bindings_.emplace_back(std::make_unique<FlagBinding>());
    b.key = key;
    b.option = app->add_option(flag, b.value, help)->check(CLI::IsMember(std::move(choices)));
  }
  void toggle(CLI::App* app, const std::string& flag, const std::string& key, const char* value,
              const std::string& help) {
    auto& b = *bindings_.emplace_back(std::make_unique<FlagBinding>());
    b.key = key;
    b.fixed = value;
    b.option = app->add_flag(flag, help);
  }

  void append_to(KeyValues& pairs) const {
    for (const auto& b : bindings_) {
      if (b->option->count() == 0) continue;
      pairs.emplace_back(b->key, b->fixed ? std::string(b->fixed) : b->value);
    }
  }

 private:
  std::vector<std::unique_ptr<FlagBinding>> bindings_;
};

void log_line(const std::string& line) { std::cerr << line << '\n'; }

Settings load_settings(const std::string& config_path, const Overrides& overrides) {
  KeyValues pairs;
  if (!config_path.empty()) pairs = read_config(config_path);
  overrides.append_to(pairs);
  return resolve_settings(pairs);
}

ParseOptions parse_options(const Settings& s) {
  ParseOptions o;
  o.separator = s.separator;
  o.strict = s.strict;
  o.normalize_width = s.normalize_width;
  return o;
}

std::vector<Sentence> read_corpus(const std::string& path, const Settings& s,
                                  const char* what) {
  ParseReport report;
  auto sentences = read_tagged_corpus(path, parse_options(s), &report);
  for (const auto& w : report.warnings) log_line(std::string("warning: ") + w);
  if (report.malformed_tokens)
    log_line(std::string("warning: skipped ") + std::to_string(report.malformed_tokens) +
             " malformed tokens in " + what + " corpus");
  return sentences;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

int run_train(const Settings& s) {
  if (s.corpus.empty()) throw ConfigError("no training corpus given (--corpus or 'corpus')");
  if (s.model.empty()) throw ConfigError("no output model path given (--model or 'model')");

  std::vector<Sentence> train = read_corpus(s.corpus, s, "training");
  std::vector<Sentence> dev;
  if (!s.dev.empty()) {
    dev = read_corpus(s.dev, s, "dev");
  } else if (s.train.dev_fraction > 0) {
    std::tie(train, dev) = split_dev(std::move(train), s.train.dev_fraction, s.train.seed);
  }
  if (train.empty()) throw EmptyInputError("training corpus has no sentences");
  if (dev.empty()) log_line("warning: no dev data; the final epoch will be saved");

  Vocab vocab = Vocab::build(train, s.min_count, s.encoder.use_bigram, s.bigram_min_count);
  TagSet tagset = TagSet::build(train, s.observed_tags_only);
  log_line("train sentences " + std::to_string(train.size()) + ", dev sentences " +
           std::to_string(dev.size()) + ", characters " + std::to_string(vocab.size()) +
           ", tags " + std::to_string(tagset.size()));

  std::mt19937_64 init_rng(s.train.seed);
  if (!s.train.deterministic) init_rng.seed(s.train.seed ^ std::random_device{}());
  auto model = Model<float>::create(s.encoder, std::move(vocab), std::move(tagset),
                                    s.constrain_transitions, init_rng);
  if (!s.embeddings.empty()) {
    const auto stats = load_pretrained_embeddings(s.embeddings, model.vocab, model.encoder.embed,
                                                  static_cast<std::size_t>(s.encoder.dim));
    log_line("embeddings: " + std::to_string(stats.matched) + " of " +
             std::to_string(stats.vocab_size) + " characters initialized (" +
             fmt("%.4f", stats.coverage()) + "), " + std::to_string(stats.bigrams_matched) +
             " bigrams, " + std::to_string(stats.skipped) + " skipped");
  }

  log_line("epoch\tloss\tobjective\tdev_P\tdev_R\tdev_F\tseconds");
  auto result = fit(std::move(model), train, dev, s.train, [](const EpochRecord& rec) {
    std::string line = std::to_string(rec.stats.epoch) + "\t" + fmt("%.6f", rec.stats.mean_loss) +
                       "\t" + fmt("%.6f", rec.stats.objective);
    if (rec.has_dev)
      line += "\t" + fmt("%.4f", rec.dev.precision) + "\t" + fmt("%.4f", rec.dev.recall) + "\t" +
              fmt("%.4f", rec.dev.f1);
    else
      line += "\t-\t-\t-";
    line += "\t" + fmt("%.2f", rec.stats.seconds);
    log_line(line);
  });

  const auto crc = save_model(result.best, s.model);
  char crc_text[16];
  std::snprintf(crc_text, sizeof crc_text, "%08x", crc);
  log_line("saved epoch " + std::to_string(result.best_epoch + 1) +
           (result.selected_on_dev ? " (best dev F1)" : " (final)") + " to " + s.model +
           " crc32 " + crc_text);
  return 0;
}

std::string format_words(const std::u32string& chars, const std::vector<JointTag>& tags) {
  std::string out;
  for (const auto& w : decode_tags_to_words(tags)) {
    if (!out.empty()) out += ' ';
    out += utf8::encode(std::u32string_view(chars).substr(w.start, w.end - w.start));
    out += '/';
    out += w.pos;
  }
  return out;
}

int run_tag(const std::string& model_path, const std::string& input, const std::string& output) {
  const Model<float> model = load_model(model_path);

  std::ifstream file_in;
  if (!input.empty() && input != "-") {
    file_in.open(input);
    if (!file_in) throw Error("cannot open input '" + input + "'");
  }
  std::istream& in = file_in.is_open() ? file_in : std::cin;
  std::ofstream file_out;
  if (!output.empty() && output != "-") {
    file_out.open(output);
    if (!file_out) throw Error("cannot open output '" + output + "'");
  }
  std::ostream& out = file_out.is_open() ? file_out : std::cout;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::u32string chars;
    try {
      chars = utf8::decode(line);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    // Raw input carries no word boundaries; whitespace is dropped.
    std::erase_if(chars, [](char32_t c) {
      return c == U' ' || c == U'\t' || c == U'\r' || c == 0x3000;
    });
    if (!chars.empty()) out << format_words(chars, model.tag(chars));
    out << '\n';
  }
  out.flush();
  if (!out) throw Error("failed writing tagged output");
  return 0;
}

int run_eval(const std::string& model_path, const Settings& s, bool per_pos) {
  if (s.corpus.empty()) throw ConfigError("no gold corpus given (--corpus or 'corpus')");
  const Model<float> model = load_model(model_path);
  // Parse everything before scoring so a bad gold file yields no report.
  const std::vector<Sentence> gold = read_corpus(s.corpus, s, "gold");

  std::vector<std::vector<WordSpan>> ref, pred;
  for (const auto& sentence : gold) {
    ref.push_back(decode_tags_to_words(*sentence.tags));
    pred.push_back(decode_tags_to_words(model.tag(sentence.chars)));
  }
  std::vector<EvalMode> modes{EvalMode::kJoint, EvalMode::kSegmentation};
  if (s.mode) modes = {*s.mode};
  std::cout << "mode\tP\tR\tF\tcorrect\tgold\tpred\n";
  for (EvalMode m : modes) std::cout << format_report_line(m, score_prf(ref, pred, m)) << '\n';
  if (per_pos)
    for (const auto& [pos, score] : per_pos_scores(ref, pred))
      std::cout << format_report_line(EvalMode::kJoint, score).replace(0, 5, "pos:" + pos)
                << '\n';
  return 0;
}

void add_model_flags(CLI::App* cmd, Overrides& o) {
  o.choice(cmd, "--encoder", "encoder", {"full", "mlp"}, "Encoder family");
  o.choice(cmd, "--recurrent", "recurrent", {"none", "lstm", "blstm"}, "Recurrent layer");
  o.toggle(cmd, "--no-conv", "conv", "false", "Disable the convolution layer");
  o.toggle(cmd, "--no-pooling", "pooling", "false", "Disable k-max pooling");
  o.toggle(cmd, "--no-highway", "highway", "false", "Disable the highway layer");
  o.toggle(cmd, "--bigrams", "bigrams", "true", "Add bigram embeddings to the input");
  o.value(cmd, "--window", "window", "Context window of the MLP encoder");
  o.value(cmd, "--dim", "dim", "Character embedding size");
  o.value(cmd, "--hidden", "hidden", "LSTM hidden size");
  o.value(cmd, "--feature-maps", "feature_maps", "Comma-separated feature map counts per conv layer");
}

void add_train_flags(CLI::App* cmd, Overrides& o) {
  o.value(cmd, "--seed", "seed", "Random seed");
  o.toggle(cmd, "--deterministic", "deterministic", "true", "Single-threaded reproducible run");
  o.value(cmd, "--threads", "threads", "Worker threads when not deterministic");
  o.value(cmd, "--epochs", "epochs", "Number of training epochs");
  o.value(cmd, "--batch", "batch", "Mini-batch size");
  o.value(cmd, "--lr", "lr", "Learning rate");
  o.value(cmd, "--margin", "margin", "Margin discount per mislabelled character");
  o.value(cmd, "--l2", "l2", "L2 regularization strength");
  o.value(cmd, "--dev-fraction", "dev_fraction", "Share of the corpus held out when --dev is absent");
  o.toggle(cmd, "--freeze-embeddings", "freeze_embeddings", "true",
           "Keep character embeddings fixed");
  o.toggle(cmd, "--constrain", "constrain", "true", "Forbid BMES-invalid transitions");
}

void add_corpus_flags(CLI::App* cmd, Overrides& o) {
  o.value(cmd, "--corpus", "corpus", "Tagged corpus, one sentence per line");
  o.toggle(cmd, "--lenient", "strict", "false", "Skip malformed tokens instead of failing");
  o.toggle(cmd, "--normalize-width", "normalize_width", "true",
           "Fold full-width ASCII to half width");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint word segmentation and POS tagging"};
  app.require_subcommand(1);

  std::string config;
  std::string model_path;

  Overrides train_flags;
  auto* train = app.add_subcommand("train", "Train a model on a tagged corpus");
  train->add_option("--config", config, "Config file of 'key = value' lines")
      ->check(CLI::ExistingFile);
  add_corpus_flags(train, train_flags);
  train_flags.value(train, "--dev", "dev", "Tagged dev corpus for model selection");
  train_flags.value(train, "--embeddings", "embeddings", "Pre-trained vectors, word2vec text format");
  train_flags.value(train, "--model", "model", "Output model path");
  add_model_flags(train, train_flags);
  add_train_flags(train, train_flags);

  std::string input, output;
  auto* tag = app.add_subcommand("tag", "Tag raw text, one sentence per line");
  tag->add_option("--model", model_path, "Model file")->required();
  tag->add_option("--input,-i", input, "Input file (default: stdin)");
  tag->add_option("--output,-o", output, "Output file (default: stdout)");

  Overrides eval_flags;
  bool per_pos = false;
  auto* eval = app.add_subcommand("eval", "Score a model against a tagged corpus");
  eval->add_option("--config", config, "Config file of 'key = value' lines")
      ->check(CLI::ExistingFile);
  eval->add_option("--model", model_path, "Model file")->required();
  add_corpus_flags(eval, eval_flags);
  eval_flags.choice(eval, "--mode", "mode", {"joint", "seg"}, "Report only one mode");
  eval->add_flag("--per-pos", per_pos, "Also print joint scores per POS");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(load_settings(config, train_flags));
    if (*tag) return run_tag(model_path, input, output);
    if (*eval) return run_eval(model_path, load_settings(config, eval_flags), per_pos);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
