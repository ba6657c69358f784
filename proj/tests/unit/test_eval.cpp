#include <doctest.h>

#include <random>
#include <vector>

#include "jointseg/errors.hpp"
#include "jointseg/eval.hpp"
#include "support/toy_corpus.hpp"

using namespace jointseg;

namespace {

std::vector<JointTag> tags(std::initializer_list<const char*> names) {
  std::vector<JointTag> out;
  for (const char* n : names) out.push_back(JointTag::parse(n));
  return out;
}

using Spans = std::vector<WordSpan>;

}  // namespace

TEST_CASE("word recovery from well-formed tags") {
  CHECK(decode_tags_to_words(tags({"B-NR", "E-NR", "S-VV"})) ==
        Spans{{0, 2, "NR"}, {2, 3, "VV"}});
  CHECK(decode_tags_to_words(tags({"B-NN", "M-NN", "M-NN", "E-NN"})) == Spans{{0, 4, "NN"}});
}

TEST_CASE("repair of ill-formed tags") {
  CHECK(decode_tags_to_words(tags({"M-NN"})) == Spans{{0, 1, "NN"}});
  CHECK(decode_tags_to_words(tags({"B-NN", "B-VV", "E-VV"})) ==
        Spans{{0, 1, "NN"}, {1, 3, "VV"}});
  CHECK(decode_tags_to_words(tags({"E-NN", "E-NN"})) == Spans{{0, 1, "NN"}, {1, 2, "NN"}});
  CHECK(decode_tags_to_words(tags({"B-NN", "S-VV"})) == Spans{{0, 1, "NN"}, {1, 2, "VV"}});
  // The span takes the POS of its last tag.
  CHECK(decode_tags_to_words(tags({"B-NN", "E-VV"})) == Spans{{0, 2, "VV"}});
  CHECK(decode_tags_to_words(tags({"B-NN", "M-NN"})) == Spans{{0, 2, "NN"}});
  CHECK(decode_tags_to_words({}).empty());
}

TEST_CASE("recovered spans always partition the sentence") {
  std::mt19937_64 rng(3);
  const auto all = tags({"B-A", "M-A", "E-A", "S-A", "B-C", "M-C", "E-C", "S-C"});
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<JointTag> seq(1 + rng() % 10);
    for (auto& t : seq) t = all[rng() % all.size()];
    const auto spans = decode_tags_to_words(seq);
    std::size_t expect = 0;
    for (const auto& s : spans) {
      CHECK(s.start == expect);
      CHECK(s.end > s.start);
      expect = s.end;
    }
    CHECK(expect == seq.size());
  }
}

TEST_CASE("P, R and F arithmetic") {
  const std::vector<Spans> gold{{{0, 2, "NR"}, {2, 4, "VV"}}};
  const std::vector<Spans> pred{{{0, 2, "NR"}, {2, 3, "VV"}, {3, 4, "VV"}}};
  const auto s = score_prf(gold, pred, EvalMode::kJoint);
  CHECK(s.precision == doctest::Approx(1.0 / 3.0));
  CHECK(s.recall == doctest::Approx(0.5));
  CHECK(s.f1 == doctest::Approx(0.4));
  CHECK(s.correct == 1);
  CHECK(s.gold == 2);
  CHECK(s.predicted == 3);

  const auto perfect = score_prf(gold, gold, EvalMode::kJoint);
  CHECK(perfect.f1 == 1.0);
  const auto none = prf_from_counts(0, 3, 4);
  CHECK(none.f1 == 0.0);
  CHECK(prf_from_counts(0, 0, 0).f1 == 0.0);
}

TEST_CASE("segmentation mode ignores POS") {
  const std::vector<Spans> gold{{{0, 2, "NR"}, {2, 4, "VV"}}};
  const std::vector<Spans> pred{{{0, 2, "NR"}, {2, 4, "NN"}}};
  CHECK(score_prf(gold, pred, EvalMode::kJoint).correct == 1);
  CHECK(score_prf(gold, pred, EvalMode::kSegmentation).correct == 2);
}

TEST_CASE("mismatched inputs are rejected") {
  const std::vector<Spans> one{{{0, 2, "NR"}}};
  CHECK_THROWS_AS(score_prf(one, {}, EvalMode::kJoint), DimensionError);
  const std::vector<Spans> longer{{{0, 3, "NR"}}};
  CHECK_THROWS_AS(score_prf(one, longer, EvalMode::kJoint), DimensionError);
}

TEST_CASE("per-POS breakdown and report format") {
  const std::vector<Spans> gold{{{0, 2, "NR"}, {2, 4, "VV"}}};
  const std::vector<Spans> pred{{{0, 2, "NR"}, {2, 4, "NN"}}};
  const auto by_pos = per_pos_scores(gold, pred);
  CHECK(by_pos.at("NR").f1 == 1.0);
  CHECK(by_pos.at("VV").recall == 0.0);
  CHECK(by_pos.at("NN").precision == 0.0);
  CHECK(format_report_line(EvalMode::kSegmentation, score_prf(gold, pred, EvalMode::kSegmentation)) ==
        "seg\t1.0000\t1.0000\t1.0000\t2\t2\t2");
}

TEST_CASE("joint F never exceeds segmentation F") {
  std::mt19937_64 rng(19);
  const auto corpus = testing::make_toy_corpus(20, 4);
  std::vector<Spans> gold;
  for (const auto& s : corpus) gold.push_back(decode_tags_to_words(*s.tags));
  const auto all = tags({"B-NN", "M-NN", "E-NN", "S-NN", "B-VV", "E-VV", "S-AD"});
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Spans> pred;
    for (const auto& s : corpus) {
      auto t = *s.tags;
      for (auto& x : t)
        if (rng() % 4 == 0) x = all[rng() % all.size()];
      pred.push_back(decode_tags_to_words(t));
    }
    CHECK(score_prf(gold, pred, EvalMode::kJoint).f1 <=
          score_prf(gold, pred, EvalMode::kSegmentation).f1);
  }
}
