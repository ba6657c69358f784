#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "jointseg/encoder.hpp"

namespace jointseg {

enum class Seg : std::uint8_t { kB = 0, kM = 1, kE = 2, kS = 3 };

char seg_letter(Seg s);

// Segment position crossed with a POS label, rendered "SEG-POS".
struct JointTag {
  Seg seg = Seg::kS;
  std::string pos;

  std::string str() const;
  static JointTag parse(std::string_view text);

  auto operator<=>(const JointTag&) const = default;
};

struct Sentence {
  std::u32string chars;
  std::optional<std::vector<JointTag>> tags;

  bool operator==(const Sentence&) const = default;
};

// [S-pos] for one character, otherwise [B-pos, M-pos..., E-pos].
std::vector<JointTag> expand_word(std::u32string_view word, const std::string& pos);

struct ParseOptions {
  char32_t separator = U'/';
  // Strict: a malformed token fails the whole parse. Lenient: the token is
  // skipped and counted.
  bool strict = true;
  bool normalize_width = false;
};

struct ParseReport {
  std::size_t sentences = 0;
  std::size_t malformed_tokens = 0;
  std::vector<std::string> warnings;
};

// One sentence per line of whitespace-separated "word<sep>POS" tokens. The
// last separator in a token splits word from label.
std::vector<Sentence> parse_tagged_corpus(std::istream& in, const ParseOptions& opts = {},
                                          ParseReport* report = nullptr);
std::vector<Sentence> read_tagged_corpus(const std::string& path, const ParseOptions& opts = {},
                                         ParseReport* report = nullptr);

// Inverse of parse_tagged_corpus for BMES-consistent gold sentences.
std::string serialize_sentence(const Sentence& s, char32_t separator = U'/');
void write_tagged_corpus(std::ostream& out, const std::vector<Sentence>& sentences,
                         char32_t separator = U'/');

// Maps full-width ASCII variants and the ideographic space to ASCII.
void normalize_width(std::u32string& text);

// Marker used in bigram keys beyond either sentence edge.
inline constexpr char32_t kBoundaryChar = 0x110000;

class Vocab {
 public:
  static constexpr std::int32_t kUnk = 0;
  static constexpr std::int32_t kPad = 1;

  using Bigram = std::pair<char32_t, char32_t>;

  Vocab();

  // Characters (and bigrams, when requested) seen fewer than the cutoff map
  // to unk. Entries are ordered by descending frequency, then code point.
  static Vocab build(const std::vector<Sentence>& sentences, std::size_t min_count = 1,
                     bool with_bigrams = false, std::size_t bigram_min_count = 2);

  // Rebuilds from stored entries (index order, reserved slots excluded).
  static Vocab from_entries(std::vector<std::pair<char32_t, std::uint64_t>> chars,
                            std::vector<std::pair<Bigram, std::uint64_t>> bigrams,
                            std::size_t min_count, std::size_t bigram_min_count);

  std::int32_t index(char32_t c) const;
  std::int32_t bigram_index(char32_t a, char32_t b) const;

  std::size_t size() const { return chars_.size() + 2; }
  std::size_t bigram_size() const { return bigrams_.size() + 2; }
  bool has_bigrams() const { return !bigrams_.empty(); }

  const std::vector<std::pair<char32_t, std::uint64_t>>& char_entries() const { return chars_; }
  const std::vector<std::pair<Bigram, std::uint64_t>>& bigram_entries() const {
    return bigrams_;
  }
  std::size_t min_count() const { return min_count_; }
  std::size_t bigram_min_count() const { return bigram_min_count_; }

  CharIndices encode(const std::u32string& chars, bool with_bigrams) const;

  bool operator==(const Vocab& other) const {
    return chars_ == other.chars_ && bigrams_ == other.bigrams_ &&
           min_count_ == other.min_count_ && bigram_min_count_ == other.bigram_min_count_;
  }

 private:
  struct BigramHash {
    std::size_t operator()(const Bigram& b) const {
      return std::hash<std::uint64_t>()((static_cast<std::uint64_t>(b.first) << 32) | b.second);
    }
  };

  void reindex();

  std::vector<std::pair<char32_t, std::uint64_t>> chars_;
  std::vector<std::pair<Bigram, std::uint64_t>> bigrams_;
  std::unordered_map<char32_t, std::int32_t> char_index_;
  std::unordered_map<Bigram, std::int32_t, BigramHash> bigram_index_;
  std::size_t min_count_ = 1;
  std::size_t bigram_min_count_ = 2;
};

// Joint tag alphabet, POS-major and segment-minor. Either the full cross
// product {B,M,E,S} x POS or only the combinations seen in training.
class TagSet {
 public:
  static TagSet build(const std::vector<Sentence>& sentences, bool observed_only = false);
  static TagSet from_tags(std::vector<JointTag> tags, bool observed_only);

  std::size_t size() const { return tags_.size(); }
  const JointTag& tag(int index) const { return tags_.at(static_cast<std::size_t>(index)); }
  const std::vector<JointTag>& tags() const { return tags_; }
  std::optional<int> find(const JointTag& t) const;
  int index(const JointTag& t) const;  // throws if absent
  std::vector<std::string> pos_labels() const;
  bool observed_only() const { return observed_only_; }

  std::vector<int> encode(const std::vector<JointTag>& tags) const;
  std::vector<JointTag> decode(std::span<const int> ids) const;

  // Allowed-transition flags enforcing BMES well-formedness: B-x/M-x must be
  // followed by M-x/E-x, and E/S by B or S.
  std::vector<std::uint8_t> segmentation_mask() const;

  bool operator==(const TagSet& other) const {
    return tags_ == other.tags_ && observed_only_ == other.observed_only_;
  }

 private:
  std::vector<JointTag> tags_;
  std::map<JointTag, int> index_;
  bool observed_only_ = false;
};

struct EmbeddingLoadStats {
  std::size_t matched = 0;        // unigram rows replaced
  std::size_t bigrams_matched = 0;
  std::size_t skipped = 0;        // tokens absent from the vocabulary
  std::size_t vocab_size = 0;     // distinct characters, excluding unk and pad

  double coverage() const {
    return vocab_size ? static_cast<double>(matched) / static_cast<double>(vocab_size) : 0.0;
  }
};

// word2vec text format: "<count> <dim>" header, then one token and dim values
// per line. Single-character tokens fill unigram rows, two-character tokens
// fill bigram rows when a bigram table exists; other rows keep their values.
template <typename Real>
EmbeddingLoadStats load_pretrained_embeddings(std::istream& in, const Vocab& vocab,
                                              EmbeddingTable<Real>& table, std::size_t dim);
template <typename Real>
EmbeddingLoadStats load_pretrained_embeddings(const std::string& path, const Vocab& vocab,
                                              EmbeddingTable<Real>& table, std::size_t dim);

}  // namespace jointseg
