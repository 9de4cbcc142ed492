#include "ovc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace ovc {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'O', 'V', 'C', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kFloat64 = 1;

class Writer {
 public:
  template <class T>
  void pod(const T& value) {
    out_.append(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void bytes(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_ += s;
  }
  void raw(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <class T>
  T pod() {
    T value;
    raw(&value, sizeof(T));
    return value;
  }
  std::string bytes() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error("checkpoint is truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return {{"d_word", c.d_word},
          {"d_hidden", c.d_hidden},
          {"n_heads", c.n_heads},
          {"d_obj", c.d_obj},
          {"variant", std::string(variant_name(c.variant))},
          {"source_vocab", c.source_vocab},
          {"target_vocab", c.target_vocab},
          {"seed", c.seed},
          {"residual", c.residual},
          {"max_objects", c.max_objects}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.d_word = j.at("d_word").get<int>();
  c.d_hidden = j.at("d_hidden").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_obj = j.at("d_obj").get<int>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.source_vocab = j.at("source_vocab").get<int>();
  c.target_vocab = j.at("target_vocab").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.residual = j.value("residual", false);
  c.max_objects = j.value("max_objects", std::size_t{20});
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod(kVersion);
  w.bytes(model_config_to_json(ckpt.config).dump());
  w.bytes(ckpt.metadata.dump());
  w.bytes(ckpt.source_vocab.serialize());
  w.bytes(ckpt.target_vocab.serialize());
  std::uint32_t count = 0;
  ckpt.params.visit([&](const std::string&, const auto&) { ++count; });
  w.pod(count);
  ckpt.params.visit([&](const std::string& name, const auto& t) {
    w.pod(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.pod(static_cast<std::uint64_t>(t.rows()));
    w.pod(static_cast<std::uint64_t>(t.cols()));
    w.pod(kFloat64);
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = t;
    w.raw(row_major.data(), sizeof(Scalar) * static_cast<std::size_t>(row_major.size()));
  });
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("not a checkpoint file (bad magic)");
  if (const auto version = r.pod<std::uint32_t>(); version != kVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config = model_config_from_json(json::parse(r.bytes()));
  ckpt.metadata = json::parse(r.bytes());
  ckpt.source_vocab = Vocabulary::deserialize(r.bytes());
  ckpt.target_vocab = Vocabulary::deserialize(r.bytes());
  ckpt.params = ModelParams::zeros(ckpt.config);

  const auto count = r.pod<std::uint32_t>();
  std::uint32_t expected = 0;
  ckpt.params.visit([&](const std::string&, const auto&) { ++expected; });
  if (count != expected) throw Error("checkpoint has " + std::to_string(count) + " tensors, expected " + std::to_string(expected));
  ckpt.params.visit([&](const std::string& name, auto& t) {
    std::string stored(r.pod<std::uint32_t>(), '\0');
    r.raw(stored.data(), stored.size());
    if (stored != name) throw Error("checkpoint tensor '" + stored + "' found where '" + name + "' was expected");
    const auto rows = r.pod<std::uint64_t>();
    const auto cols = r.pod<std::uint64_t>();
    if (rows != static_cast<std::uint64_t>(t.rows()) || cols != static_cast<std::uint64_t>(t.cols())) {
      throw Error("checkpoint tensor '" + name + "' has the wrong shape");
    }
    if (r.pod<std::uint8_t>() != kFloat64) throw Error("checkpoint tensor '" + name + "' has unsupported dtype");
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major(t.rows(), t.cols());
    r.raw(row_major.data(), sizeof(Scalar) * static_cast<std::size_t>(row_major.size()));
    t = row_major;
  });
  if (!r.done()) throw Error("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace ovc
