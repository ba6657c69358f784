#include "jointseg/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <tuple>

#include "jointseg/errors.hpp"

namespace jointseg {

std::vector<WordSpan> decode_tags_to_words(std::span<const JointTag> tags) {
  std::vector<WordSpan> out;
  bool open = false;
  std::size_t start = 0;
  auto close = [&](std::size_t last) {
    out.push_back(WordSpan{start, last + 1, tags[last].pos});
    open = false;
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const Seg seg = tags[i].seg;
    const bool continues = seg == Seg::kM || seg == Seg::kE;
    if (open && !continues) close(i - 1);
    if (!open) {
      start = i;
      open = true;
    }
    if (seg == Seg::kE || seg == Seg::kS) close(i);
  }
  if (open) close(tags.size() - 1);
  return out;
}

std::string to_string(EvalMode mode) { return mode == EvalMode::kJoint ? "joint" : "seg"; }

PrfScore prf_from_counts(std::size_t correct, std::size_t gold, std::size_t predicted) {
  PrfScore s;
  s.correct = correct;
  s.gold = gold;
  s.predicted = predicted;
  s.precision = predicted ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
  s.recall = gold ? static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
  s.f1 = s.precision + s.recall > 0
             ? 2 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

namespace {

std::size_t coverage_end(const std::vector<WordSpan>& spans) {
  std::size_t end = 0;
  for (const auto& s : spans) end = std::max(end, s.end);
  return end;
}

void check_alignment(const std::vector<std::vector<WordSpan>>& gold,
                     const std::vector<std::vector<WordSpan>>& pred) {
  if (gold.size() != pred.size())
    throw DimensionError("gold has " + std::to_string(gold.size()) + " sentences but prediction " +
                         std::to_string(pred.size()));
  for (std::size_t i = 0; i < gold.size(); ++i)
    if (coverage_end(gold[i]) != coverage_end(pred[i]))
      throw DimensionError("sentence " + std::to_string(i) + " length differs between gold (" +
                           std::to_string(coverage_end(gold[i])) + ") and prediction (" +
                           std::to_string(coverage_end(pred[i])) + ")");
}

}  // namespace

PrfScore score_prf(const std::vector<std::vector<WordSpan>>& gold,
                   const std::vector<std::vector<WordSpan>>& predicted, EvalMode mode) {
  check_alignment(gold, predicted);
  std::size_t correct = 0, n_gold = 0, n_pred = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::set<std::tuple<std::size_t, std::size_t, std::string>> reference;
    for (const auto& s : gold[i])
      reference.emplace(s.start, s.end, mode == EvalMode::kJoint ? s.pos : std::string());
    for (const auto& s : predicted[i])
      correct += reference.count({s.start, s.end, mode == EvalMode::kJoint ? s.pos : std::string()});
    n_gold += gold[i].size();
    n_pred += predicted[i].size();
  }
  return prf_from_counts(correct, n_gold, n_pred);
}

std::map<std::string, PrfScore> per_pos_scores(
    const std::vector<std::vector<WordSpan>>& gold,
    const std::vector<std::vector<WordSpan>>& predicted) {
  check_alignment(gold, predicted);
  struct Counts {
    std::size_t correct = 0, gold = 0, pred = 0;
  };
  std::map<std::string, Counts> counts;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::set<WordSpan> reference(gold[i].begin(), gold[i].end());
    for (const auto& s : gold[i]) ++counts[s.pos].gold;
    for (const auto& s : predicted[i]) {
      ++counts[s.pos].pred;
      if (reference.count(s)) ++counts[s.pos].correct;
    }
  }
  std::map<std::string, PrfScore> out;
  for (const auto& [pos, c] : counts) out[pos] = prf_from_counts(c.correct, c.gold, c.pred);
  return out;
}

std::string format_report_line(EvalMode mode, const PrfScore& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s\t%.4f\t%.4f\t%.4f\t%zu\t%zu\t%zu", to_string(mode).c_str(),
                s.precision, s.recall, s.f1, s.correct, s.gold, s.predicted);
  return buf;
}

}  // namespace jointseg
