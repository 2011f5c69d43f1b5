#include "skillrouter/io/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace skillrouter::io {

namespace {

constexpr std::string_view kMagic = "SKRCKPT1";
constexpr std::size_t kDigestBytes = 32;

std::array<unsigned char, kDigestBytes> sha256(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, kDigestBytes> out{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != kDigestBytes) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  return out;
}

std::string hex(const unsigned char* p, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(digits[p[i] >> 4]);
    out.push_back(digits[p[i] & 15]);
  }
  return out;
}

template <class U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t pos() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError(source_ + ": " + what + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated ") + what);
  }

  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) out += w + '\n';
  return out;
}

nlohmann::json header_json(const Checkpoint& ckpt) {
  const auto& m = ckpt.model;
  nlohmann::json h;
  h["format_version"] = kCheckpointVersion;
  h["variant"] = personalization::to_string(m.spec.variant);
  h["mode"] = personalization::to_string(m.spec.mode);
  h["encoder"] = {{"char_emb_dim", m.spec.encoder.char_emb_dim},
                  {"char_hidden", m.spec.encoder.char_hidden},
                  {"word_emb_dim", m.spec.encoder.word_emb_dim},
                  {"word_hidden", m.spec.encoder.word_hidden}};
  h["embedding_dim"] = m.spec.embedding_dim;
  h["skills"] = m.skills;
  h["words"] = m.vocab.words();
  h["words_sha256"] = sha256_hex(join_words(m.vocab.words()));
  h["chars_sha256"] = sha256_hex(join_words(encoder::CharVocab().symbols()));
  h["extra"] = ckpt.extra;
  return h;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  const auto d = sha256(bytes);
  return hex(d.data(), d.size());
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.model.spec.validate();
  std::string out(kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string header = header_json(ckpt).dump();
  put<std::uint64_t>(out, header.size());
  out += header;
  put<std::uint64_t>(out, ckpt.model.params.size());
  for (const auto& [path, p] : ckpt.model.params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(path.size()));
    out += path;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(out, d);
    for (double x : p.value.data()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
  const auto digest = sha256(out);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return out;
}

std::string checkpoint_digest(std::string_view bytes) {
  if (bytes.size() < kDigestBytes) throw CheckpointError("checkpoint too short for a digest");
  return hex(reinterpret_cast<const unsigned char*>(bytes.data() + bytes.size() - kDigestBytes), kDigestBytes);
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  if (bytes.size() < kMagic.size() + kDigestBytes) throw CheckpointError(source + ": file too short");
  const auto body = bytes.substr(0, bytes.size() - kDigestBytes);
  const auto expected = sha256(body);
  if (std::memcmp(expected.data(), bytes.data() + body.size(), kDigestBytes) != 0) {
    throw CheckpointError(source + ": digest mismatch (file corrupted or truncated)");
  }
  Reader r(body, source);
  if (r.take(kMagic.size(), "magic") != kMagic) r.fail("not a skillrouter checkpoint");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) r.fail("unsupported format version " + std::to_string(version));
  const auto header_len = r.get<std::uint64_t>("header length");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.take(header_len, "header"));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad header JSON: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    auto& spec = ckpt.model.spec;
    spec.variant = personalization::parse_variant(h.at("variant").get<std::string>());
    spec.mode = personalization::parse_mode(h.at("mode").get<std::string>());
    const auto& e = h.at("encoder");
    spec.encoder = {e.at("char_emb_dim").get<int>(), e.at("char_hidden").get<int>(), e.at("word_emb_dim").get<int>(),
                    e.at("word_hidden").get<int>()};
    spec.embedding_dim = h.at("embedding_dim").get<int>();
    spec.validate();
    ckpt.model.skills = h.at("skills").get<std::vector<std::string>>();
    auto words = h.at("words").get<std::vector<std::string>>();
    if (sha256_hex(join_words(words)) != h.at("words_sha256").get<std::string>()) {
      r.fail("word vocabulary digest mismatch");
    }
    if (sha256_hex(join_words(encoder::CharVocab().symbols())) != h.at("chars_sha256").get<std::string>()) {
      r.fail("character vocabulary differs from this build");
    }
    ckpt.model.vocab = encoder::WordVocab(std::move(words));
    ckpt.extra = h.value("extra", nlohmann::json::object());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    r.fail(std::string("bad header: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>("record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto path_len = r.get<std::uint32_t>("path length");
    std::string path(r.take(path_len, "path"));
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 2) r.fail("parameter " + path + " has rank " + std::to_string(rank));
    std::vector<std::size_t> shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("shape")));
    const std::size_t n = numeric::shape_product(shape);
    if (n > (body.size() - r.pos()) / 8) r.fail("parameter " + path + " payload exceeds the file");
    std::vector<double> values(n);
    for (auto& x : values) x = std::bit_cast<double>(r.get<std::uint64_t>("payload"));
    if (ckpt.model.params.contains(path)) r.fail("duplicate parameter " + path);
    ckpt.model.params.add(path, numeric::Tensor(std::move(shape), std::move(values)));
  }
  if (r.pos() != body.size()) r.fail("trailing bytes before the digest");
  // Every parameter the spec implies must be present with the right shape.
  auto fresh = personalization::Model::create(ckpt.model.spec, ckpt.model.skills, ckpt.model.vocab, 0);
  for (const auto& [path, p] : fresh.params) {
    if (!ckpt.model.params.contains(path)) throw CheckpointError(source + ": missing parameter " + path);
    if (!ckpt.model.params.at(path).value.same_shape(p.value)) {
      throw CheckpointError(source + ": parameter " + path + " has shape " +
                            ckpt.model.params.at(path).value.shape_string() + ", expected " + p.value.shape_string());
    }
  }
  if (fresh.params.size() != ckpt.model.params.size()) throw CheckpointError(source + ": unexpected extra parameters");
  return ckpt;
}

std::string save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
  return checkpoint_digest(bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str(), path.string());
}

}  // namespace skillrouter::io
