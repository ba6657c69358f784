#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "jointseg/corpus.hpp"

namespace jointseg {

// Half-open character range [start, end) labelled with a POS.
struct WordSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string pos;

  auto operator<=>(const WordSpan&) const = default;
};

// Recovers words from a joint tag sequence. Ill-formed BMES input is repaired:
// a tag that cannot continue the open word closes it at the previous position
// and starts a new word. A span takes the POS of its last character.
std::vector<WordSpan> decode_tags_to_words(std::span<const JointTag> tags);

enum class EvalMode { kJoint, kSegmentation };

std::string to_string(EvalMode mode);

struct PrfScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t correct = 0;
  std::size_t gold = 0;
  std::size_t predicted = 0;
};

PrfScore prf_from_counts(std::size_t correct, std::size_t gold, std::size_t predicted);

// Span-level precision, recall and F1. In joint mode a span also has to match
// the POS.
PrfScore score_prf(const std::vector<std::vector<WordSpan>>& gold,
                   const std::vector<std::vector<WordSpan>>& predicted, EvalMode mode);

// Joint-mode scores restricted to spans of each gold/predicted POS.
std::map<std::string, PrfScore> per_pos_scores(const std::vector<std::vector<WordSpan>>& gold,
                                               const std::vector<std::vector<WordSpan>>& predicted);

// "mode\tP\tR\tF\tcorrect\tgold\tpred"
std::string format_report_line(EvalMode mode, const PrfScore& s);

}  // namespace jointseg
