#pragma once

#include <cstdint>
#include <string>

namespace jointseg {

enum class Optimizer { kAdagrad, kSgd };

std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
  double learning_rate = 0.2;  // alpha
  double margin = 0.2;         // eta, per-position hamming penalty
  double l2 = 1e-4;            // lambda
  int batch_size = 20;
  int max_epochs = 20;
  std::uint64_t seed = 1;
  // Leading share of the shuffled training set held out for model selection
  // when no separate dev corpus is given.
  double dev_fraction = 0.1;
  Optimizer optimizer = Optimizer::kAdagrad;
  bool deterministic = true;
  int threads = 1;  // used only when not deterministic
  bool freeze_embeddings = false;

  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

}  // namespace jointseg
