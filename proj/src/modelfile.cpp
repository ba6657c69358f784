#include "jointseg/modelfile.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>

#include "jointseg/errors.hpp"
#include "jointseg/settings.hpp"

namespace jointseg {

namespace {

using Kind = ModelFormatError::Kind;

[[noreturn]] void corrupt(const std::string& what) {
  throw ModelFormatError(Kind::kCorruption, "corrupt model file: " + what);
}

class Writer {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  // Element counts are bounded by the bytes left so a damaged length field
  // cannot trigger a huge allocation.
  std::uint32_t count(std::size_t min_bytes_each) {
    const std::uint32_t n = u32();
    if (min_bytes_each && static_cast<std::uint64_t>(n) * min_bytes_each > remaining())
      corrupt("element count exceeds file size");
    return n;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) corrupt("unexpected end of data");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

template <typename Real>
std::vector<std::uint8_t> serialize_model(const Model<Real>& model) {
  Writer w;
  w.bytes(kModelMagic);
  w.u32(kModelFormatVersion);
  w.str(encoder_config_text(model.encoder_config));
  w.str(train_config_text(model.train_config));

  const Vocab& v = model.vocab;
  w.u64(v.min_count());
  w.u64(v.bigram_min_count());
  w.u32(static_cast<std::uint32_t>(v.char_entries().size()));
  for (const auto& [c, n] : v.char_entries()) {
    w.u32(static_cast<std::uint32_t>(c));
    w.u64(n);
  }
  w.u32(static_cast<std::uint32_t>(v.bigram_entries().size()));
  for (const auto& [b, n] : v.bigram_entries()) {
    w.u32(static_cast<std::uint32_t>(b.first));
    w.u32(static_cast<std::uint32_t>(b.second));
    w.u64(n);
  }

  w.u8(model.tagset.observed_only());
  w.u32(static_cast<std::uint32_t>(model.tagset.size()));
  for (const auto& t : model.tagset.tags()) {
    w.u8(static_cast<std::uint8_t>(t.seg));
    w.str(t.pos);
  }
  w.u8(model.transitions.constrained());

  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t dim : p->value.shape()) w.u32(static_cast<std::uint32_t>(dim));
    for (Real x : p->value.values()) w.f32(static_cast<float>(x));
  }
  w.u32(crc_of(w.buffer()));
  return std::move(w.buffer());
}

Model<float> deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kModelMagic.size()) corrupt("file too short");
  if (!std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin()))
    throw ModelFormatError(Kind::kWrongFormat, "not a model file (bad magic)");
  Reader header(bytes.subspan(kModelMagic.size()));
  const std::uint32_t version = header.u32();
  if (version > kModelFormatVersion)
    throw ModelFormatError(Kind::kVersion, "model format version " + std::to_string(version) +
                                               " is newer than supported version " +
                                               std::to_string(kModelFormatVersion));
  if (version == 0) corrupt("version 0");
  if (bytes.size() < kModelMagic.size() + 8) corrupt("file too short");

  const auto body = bytes.first(bytes.size() - 4);
  Reader trailer(bytes.last(4));
  if (crc_of(body) != trailer.u32()) corrupt("checksum mismatch");

  Reader r(body.subspan(kModelMagic.size() + 4));
  Model<float> m;
  EncoderConfig cfg;
  TrainConfig train;
  try {
    cfg = parse_encoder_config_text(r.str());
    train = parse_train_config_text(r.str());
  } catch (const ModelFormatError&) {
    throw;
  } catch (const Error& e) {
    corrupt(std::string("configuration block: ") + e.what());
  }

  const std::size_t min_count = r.u64();
  const std::size_t bigram_min_count = r.u64();
  std::vector<std::pair<char32_t, std::uint64_t>> chars(r.count(12));
  for (auto& [c, n] : chars) {
    c = static_cast<char32_t>(r.u32());
    n = r.u64();
  }
  std::vector<std::pair<Vocab::Bigram, std::uint64_t>> bigrams(r.count(16));
  for (auto& [b, n] : bigrams) {
    b.first = static_cast<char32_t>(r.u32());
    b.second = static_cast<char32_t>(r.u32());
    n = r.u64();
  }
  Vocab vocab = Vocab::from_entries(std::move(chars), std::move(bigrams), min_count,
                                    bigram_min_count);

  const bool observed_only = r.u8() != 0;
  std::vector<JointTag> tags(r.count(5));
  for (auto& t : tags) {
    const std::uint8_t seg = r.u8();
    if (seg > 3) corrupt("segment code out of range");
    t.seg = static_cast<Seg>(seg);
    t.pos = r.str();
  }
  TagSet tagset;
  try {
    tagset = TagSet::from_tags(std::move(tags), observed_only);
  } catch (const Error& e) {
    corrupt(e.what());
  }
  const bool constrained = r.u8() != 0;

  const auto manifest = parameter_manifest(cfg, vocab.size(), vocab.bigram_size(), tagset.size());
  const std::uint32_t n_params = r.u32();
  if (n_params != manifest.size())
    corrupt("expected " + std::to_string(manifest.size()) + " parameter blocks, found " +
            std::to_string(n_params));

  std::mt19937_64 unused(0);
  EncoderConfig skeleton_cfg = cfg;
  m = Model<float>::create(skeleton_cfg, std::move(vocab), std::move(tagset), constrained, unused);
  m.train_config = train;
  auto params = m.parameters();
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const std::string name = r.str();
    if (name != manifest[i].first || name != params[i].name)
      corrupt("parameter " + std::to_string(i) + " is '" + name + "', expected '" +
              manifest[i].first + "'");
    numerics::Shape shape(r.count(4));
    for (auto& d : shape) d = r.u32();
    if (shape != manifest[i].second)
      corrupt("parameter '" + name + "' has shape " + numerics::shape_string(shape) +
              ", expected " + numerics::shape_string(manifest[i].second));
    auto values = params[i].param->value.values();
    if (static_cast<std::uint64_t>(values.size()) * 4 > r.remaining())
      corrupt("parameter '" + name + "' is truncated");
    for (float& x : values) x = r.f32();
  }
  if (r.remaining() != 0) corrupt("trailing bytes after parameter blocks");
  return m;
}

template <typename Real>
std::uint32_t save_model(const Model<Real>& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelFormatError(Kind::kIo, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw ModelFormatError(Kind::kIo, "failed writing model to '" + path + "'");
  Reader trailer(std::span<const std::uint8_t>(bytes).last(4));
  return trailer.u32();
}

Model<float> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError(Kind::kIo, "cannot open model file '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (in.bad()) throw ModelFormatError(Kind::kIo, "failed reading model file '" + path + "'");
  return deserialize_model(bytes);
}

template std::vector<std::uint8_t> serialize_model<float>(const Model<float>&);
template std::vector<std::uint8_t> serialize_model<double>(const Model<double>&);
template std::uint32_t save_model<float>(const Model<float>&, const std::string&);
template std::uint32_t save_model<double>(const Model<double>&, const std::string&);

}  // namespace jointseg
