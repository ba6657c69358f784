#include "jointseg/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "jointseg/errors.hpp"
#include "jointseg/utf8.hpp"

namespace jointseg {

namespace {

bool is_space(char32_t c) { return c == U' ' || c == U'\t' || c == U'\r' || c == U'\n'; }

std::vector<std::u32string> split_whitespace(const std::u32string& line) {
  std::vector<std::u32string> out;
  std::u32string cur;
  for (char32_t c : line) {
    if (is_space(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split_ascii(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

char seg_letter(Seg s) {
  static constexpr char kLetters[] = {'B', 'M', 'E', 'S'};
  return kLetters[static_cast<int>(s)];
}

std::string JointTag::str() const { return std::string(1, seg_letter(seg)) + "-" + pos; }

JointTag JointTag::parse(std::string_view text) {
  if (text.size() < 3 || text[1] != '-')
    throw ParseError("malformed joint tag '" + std::string(text) + "'", 0);
  JointTag t;
  switch (text[0]) {
    case 'B': t.seg = Seg::kB; break;
    case 'M': t.seg = Seg::kM; break;
    case 'E': t.seg = Seg::kE; break;
    case 'S': t.seg = Seg::kS; break;
    default: throw ParseError("unknown segment position in '" + std::string(text) + "'", 0);
  }
  t.pos = std::string(text.substr(2));
  return t;
}

std::vector<JointTag> expand_word(std::u32string_view word, const std::string& pos) {
  if (word.empty()) throw EmptyInputError("cannot expand an empty word");
  if (word.size() == 1) return {JointTag{Seg::kS, pos}};
  std::vector<JointTag> tags(word.size(), JointTag{Seg::kM, pos});
  tags.front().seg = Seg::kB;
  tags.back().seg = Seg::kE;
  return tags;
}

void normalize_width(std::u32string& text) {
  for (char32_t& c : text) {
    if (c >= 0xFF01 && c <= 0xFF5E)
      c = c - 0xFF01 + 0x21;
    else if (c == 0x3000)
      c = U' ';
  }
}

std::vector<Sentence> parse_tagged_corpus(std::istream& in, const ParseOptions& opts,
                                          ParseReport* report) {
  std::vector<Sentence> out;
  ParseReport local;
  ParseReport& rep = report ? *report : local;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::u32string line;
    try {
      line = utf8::decode(raw);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (opts.normalize_width) normalize_width(line);

    Sentence s;
    s.tags.emplace();
    for (const auto& token : split_whitespace(line)) {
      const auto sep = token.rfind(opts.separator);
      if (sep == std::u32string::npos || sep == 0 || sep + 1 == token.size()) {
        const std::string msg = "malformed token '" + utf8::encode(token) + "'";
        if (opts.strict) throw ParseError(msg, line_no);
        ++rep.malformed_tokens;
        rep.warnings.push_back("line " + std::to_string(line_no) + ": " + msg);
        continue;
      }
      const std::u32string_view word(token.data(), sep);
      const std::string pos = utf8::encode(std::u32string_view(token).substr(sep + 1));
      s.chars.append(word);
      auto tags = expand_word(word, pos);
      s.tags->insert(s.tags->end(), tags.begin(), tags.end());
    }
    if (s.chars.empty()) continue;
    out.push_back(std::move(s));
  }
  rep.sentences += out.size();
  return out;
}

std::vector<Sentence> read_tagged_corpus(const std::string& path, const ParseOptions& opts,
                                         ParseReport* report) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus '" + path + "'");
  return parse_tagged_corpus(in, opts, report);
}

std::string serialize_sentence(const Sentence& s, char32_t separator) {
  if (!s.tags) return utf8::encode(s.chars);
  if (s.tags->size() != s.chars.size())
    throw DimensionError("sentence has " + std::to_string(s.chars.size()) + " characters but " +
                         std::to_string(s.tags->size()) + " tags");
  std::string out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.chars.size(); ++i) {
    const Seg seg = (*s.tags)[i].seg;
    if (seg != Seg::kE && seg != Seg::kS && i + 1 < s.chars.size()) continue;
    if (!out.empty()) out += ' ';
    out += utf8::encode(std::u32string_view(s.chars).substr(start, i + 1 - start));
    out += utf8::encode(separator);
    out += (*s.tags)[i].pos;
    start = i + 1;
  }
  return out;
}

void write_tagged_corpus(std::ostream& out, const std::vector<Sentence>& sentences,
                         char32_t separator) {
  for (const auto& s : sentences) out << serialize_sentence(s, separator) << '\n';
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() = default;

Vocab Vocab::build(const std::vector<Sentence>& sentences, std::size_t min_count,
                   bool with_bigrams, std::size_t bigram_min_count) {
  if (sentences.empty()) throw EmptyInputError("cannot build a vocabulary from an empty corpus");
  std::unordered_map<char32_t, std::uint64_t> counts;
  std::unordered_map<Bigram, std::uint64_t, BigramHash> bigram_counts;
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.chars.size(); ++i) {
      ++counts[s.chars[i]];
      if (!with_bigrams) continue;
      ++bigram_counts[{i ? s.chars[i - 1] : kBoundaryChar, s.chars[i]}];
      if (i + 1 == s.chars.size()) ++bigram_counts[{s.chars[i], kBoundaryChar}];
    }
  }

  Vocab v;
  v.min_count_ = min_count;
  v.bigram_min_count_ = bigram_min_count;
  for (const auto& [c, n] : counts)
    if (n >= min_count) v.chars_.emplace_back(c, n);
  for (const auto& [b, n] : bigram_counts)
    if (n >= bigram_min_count) v.bigrams_.emplace_back(b, n);

  auto by_freq = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  std::sort(v.chars_.begin(), v.chars_.end(), by_freq);
  std::sort(v.bigrams_.begin(), v.bigrams_.end(), by_freq);
  v.reindex();
  return v;
}

Vocab Vocab::from_entries(std::vector<std::pair<char32_t, std::uint64_t>> chars,
                          std::vector<std::pair<Bigram, std::uint64_t>> bigrams,
                          std::size_t min_count, std::size_t bigram_min_count) {
  Vocab v;
  v.chars_ = std::move(chars);
  v.bigrams_ = std::move(bigrams);
  v.min_count_ = min_count;
  v.bigram_min_count_ = bigram_min_count;
  v.reindex();
  return v;
}

void Vocab::reindex() {
  char_index_.clear();
  bigram_index_.clear();
  for (std::size_t i = 0; i < chars_.size(); ++i)
    char_index_[chars_[i].first] = static_cast<std::int32_t>(i + 2);
  for (std::size_t i = 0; i < bigrams_.size(); ++i)
    bigram_index_[bigrams_[i].first] = static_cast<std::int32_t>(i + 2);
}

std::int32_t Vocab::index(char32_t c) const {
  const auto it = char_index_.find(c);
  return it == char_index_.end() ? kUnk : it->second;
}

std::int32_t Vocab::bigram_index(char32_t a, char32_t b) const {
  const auto it = bigram_index_.find({a, b});
  return it == bigram_index_.end() ? kUnk : it->second;
}

CharIndices Vocab::encode(const std::u32string& chars, bool with_bigrams) const {
  CharIndices out;
  const std::size_t n = chars.size();
  out.unigram.reserve(n);
  for (char32_t c : chars) out.unigram.push_back(index(c));
  if (with_bigrams) {
    for (std::size_t i = 0; i < n; ++i) {
      out.bigram_left.push_back(bigram_index(i ? chars[i - 1] : kBoundaryChar, chars[i]));
      out.bigram_right.push_back(bigram_index(chars[i], i + 1 < n ? chars[i + 1] : kBoundaryChar));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// TagSet

TagSet TagSet::build(const std::vector<Sentence>& sentences, bool observed_only) {
  if (sentences.empty()) throw EmptyInputError("cannot build a tag set from an empty corpus");
  std::set<std::string> labels;
  std::set<JointTag> seen;
  for (const auto& s : sentences) {
    if (!s.tags) continue;
    for (const auto& t : *s.tags) {
      labels.insert(t.pos);
      seen.insert(t);
    }
  }
  if (labels.empty()) throw EmptyInputError("corpus carries no POS labels");
  std::vector<JointTag> tags;
  for (const auto& pos : labels) {
    for (Seg seg : {Seg::kB, Seg::kM, Seg::kE, Seg::kS}) {
      JointTag t{seg, pos};
      if (!observed_only || seen.count(t)) tags.push_back(std::move(t));
    }
  }
  return from_tags(std::move(tags), observed_only);
}

TagSet TagSet::from_tags(std::vector<JointTag> tags, bool observed_only) {
  TagSet ts;
  ts.tags_ = std::move(tags);
  ts.observed_only_ = observed_only;
  for (std::size_t i = 0; i < ts.tags_.size(); ++i) {
    if (!ts.index_.emplace(ts.tags_[i], static_cast<int>(i)).second)
      throw ConfigError("duplicate joint tag " + ts.tags_[i].str());
  }
  return ts;
}

std::optional<int> TagSet::find(const JointTag& t) const {
  const auto it = index_.find(t);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int TagSet::index(const JointTag& t) const {
  const auto found = find(t);
  if (!found) throw ConfigError("joint tag " + t.str() + " is not in the tag set");
  return *found;
}

std::vector<std::string> TagSet::pos_labels() const {
  std::vector<std::string> out;
  for (const auto& t : tags_)
    if (out.empty() || out.back() != t.pos) out.push_back(t.pos);
  return out;
}

std::vector<int> TagSet::encode(const std::vector<JointTag>& tags) const {
  std::vector<int> out;
  out.reserve(tags.size());
  for (const auto& t : tags) out.push_back(index(t));
  return out;
}

std::vector<JointTag> TagSet::decode(std::span<const int> ids) const {
  std::vector<JointTag> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(tag(id));
  return out;
}

std::vector<std::uint8_t> TagSet::segmentation_mask() const {
  const std::size_t T = tags_.size();
  std::vector<std::uint8_t> allowed(T * T, 0);
  for (std::size_t a = 0; a < T; ++a) {
    for (std::size_t b = 0; b < T; ++b) {
      const JointTag& from = tags_[a];
      const JointTag& to = tags_[b];
      bool ok;
      if (from.seg == Seg::kB || from.seg == Seg::kM)
        ok = (to.seg == Seg::kM || to.seg == Seg::kE) && to.pos == from.pos;
      else
        ok = to.seg == Seg::kB || to.seg == Seg::kS;
      allowed[a * T + b] = ok;
    }
  }
  return allowed;
}

// ---------------------------------------------------------------------------
// Pre-trained embeddings

template <typename Real>
EmbeddingLoadStats load_pretrained_embeddings(std::istream& in, const Vocab& vocab,
                                              EmbeddingTable<Real>& table, std::size_t dim) {
  if (table.unigram.value.cols() != dim)
    throw DimensionError("embedding table width " + std::to_string(table.unigram.value.cols()) +
                         " differs from model dimension " + std::to_string(dim));
  std::string line;
  if (!std::getline(in, line)) throw ParseError("embedding file is empty", 1);
  const auto header = split_ascii(line);
  std::size_t declared = 0, file_dim = 0;
  auto parse_size = [&](const std::string& s, std::size_t& out) {
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
  };
  if (header.size() != 2 || !parse_size(header[0], declared) || !parse_size(header[1], file_dim))
    throw ParseError("expected header '<count> <dim>'", 1);
  if (file_dim != dim)
    throw DimensionError("embedding file has dimension " + std::to_string(file_dim) +
                         " but the model uses " + std::to_string(dim));

  EmbeddingLoadStats stats;
  stats.vocab_size = vocab.char_entries().size();
  std::set<std::int32_t> seen_uni, seen_bi;
  std::vector<Real> row(dim);
  std::size_t line_no = 1, entries = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ascii(line);
    if (fields.empty()) continue;
    ++entries;
    if (fields.size() != dim + 1)
      throw ParseError("expected a token and " + std::to_string(dim) + " values, got " +
                           std::to_string(fields.size() - 1) + " values",
                       line_no);
    for (std::size_t j = 0; j < dim; ++j) {
      const std::string& f = fields[j + 1];
      double v = 0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v))
        throw ParseError("malformed number '" + f + "'", line_no);
      row[j] = static_cast<Real>(v);
    }
    std::u32string token;
    try {
      token = utf8::decode(fields[0]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }

    Parameter<Real>* target = nullptr;
    std::int32_t idx = Vocab::kUnk;
    bool bigram = false;
    if (token.size() == 1) {
      idx = vocab.index(token[0]);
      target = &table.unigram;
    } else if (token.size() == 2 && table.bigram) {
      idx = vocab.bigram_index(token[0], token[1]);
      target = &*table.bigram;
      bigram = true;
    }
    if (!target || idx == Vocab::kUnk ||
        static_cast<std::size_t>(idx) >= target->value.rows()) {
      ++stats.skipped;
      continue;
    }
    std::copy(row.begin(), row.end(), target->value.row(static_cast<std::size_t>(idx)).begin());
    if (bigram ? seen_bi.insert(idx).second : seen_uni.insert(idx).second)
      ++(bigram ? stats.bigrams_matched : stats.matched);
  }
  if (entries != declared)
    throw ParseError("header declares " + std::to_string(declared) + " vectors but " +
                         std::to_string(entries) + " were found",
                     1);
  return stats;
}

template <typename Real>
EmbeddingLoadStats load_pretrained_embeddings(const std::string& path, const Vocab& vocab,
                                              EmbeddingTable<Real>& table, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file '" + path + "'");
  return load_pretrained_embeddings(in, vocab, table, dim);
}

template EmbeddingLoadStats load_pretrained_embeddings<float>(std::istream&, const Vocab&,
                                                              EmbeddingTable<float>&, std::size_t);
template EmbeddingLoadStats load_pretrained_embeddings<double>(std::istream&, const Vocab&,
                                                               EmbeddingTable<double>&,
                                                               std::size_t);
template EmbeddingLoadStats load_pretrained_embeddings<float>(const std::string&, const Vocab&,
                                                              EmbeddingTable<float>&, std::size_t);
template EmbeddingLoadStats load_pretrained_embeddings<double>(const std::string&, const Vocab&,
                                                               EmbeddingTable<double>&,
                                                               std::size_t);

}  // namespace jointseg
