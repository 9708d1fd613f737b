// SPDX-License-Identifier: Apache-2.0
#include "advt/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "advt/rng.hpp"

namespace advt {

namespace {

constexpr std::string_view kMagic = "ADVT";

class Writer {
 public:
  void bytes(std::string_view b) { out_.append(b); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void name(std::string_view n) {
    u32(static_cast<std::uint32_t>(n.size()));
    bytes(n);
  }
  void tensor(std::string_view n, const Tensor& t) {
    name(n);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (double x : t.data()) f64(x);
  }
  std::string& str() { return out_; }

 private:
  void put(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::string_view bytes(std::size_t n) {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated at byte " + std::to_string(pos_));
    const std::string_view out = in_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string name() { return std::string(bytes(u32())); }
  Tensor tensor_body() {
    const std::uint32_t rank = u32();
    if (rank > 8) throw CheckpointError("checkpoint tensor has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = u64();
      if (d != 0 && count > (in_.size() - pos_) / d) throw CheckpointError("checkpoint is truncated inside a tensor");
      count *= d;
    }
    if (count > (in_.size() - pos_) / 8) throw CheckpointError("checkpoint is truncated inside a tensor");
    std::vector<double> data(count);
    for (double& x : data) x = f64();
    return Tensor(std::move(shape), std::move(data));
  }
  std::size_t position() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == in_.size(); }

 private:
  std::uint64_t get(int width) {
    const std::string_view b = bytes(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t Checkpoint::config_fingerprint() const { return fnv1a64(model.config.describe()); }

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u64(ckpt.step);
  w.u64(ckpt.vocab_fingerprint);
  w.u64(ckpt.config_fingerprint());
  const ModelConfig& c = ckpt.model.config;
  for (std::size_t v : {c.vocab_rows, c.embedding_dim, c.hidden_dim, c.classifier_hidden, c.num_classes}) w.u64(v);
  w.u64(c.bidirectional ? 1 : 0);
  const OptimizerState& o = ckpt.optimizer;
  w.u64(o.step);
  for (double v : {o.base_lr, o.decay, o.beta1, o.beta2, o.epsilon}) w.f64(v);

  const std::size_t records = 1 + ckpt.model.params.size() + o.first_moment.size() + o.second_moment.size();
  w.u32(static_cast<std::uint32_t>(records));
  w.tensor("frequencies", Tensor(Shape{ckpt.model.frequencies.size()}, ckpt.model.frequencies));
  for (const auto& [name, t] : ckpt.model.params) w.tensor("param/" + name, t);
  for (const auto& [name, t] : o.first_moment) w.tensor("adam.m/" + name, t);
  for (const auto& [name, t] : o.second_moment) w.tensor("adam.v/" + name, t);
  const std::uint64_t checksum = fnv1a64(w.str());
  w.u64(checksum);
  return std::move(w.str());
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8) throw CheckpointError("checkpoint is truncated");
  Reader r(bytes);
  if (r.bytes(4) != kMagic) throw CheckpointError("not a checkpoint (bad magic bytes)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  if (bytes.size() < 16) throw CheckpointError("checkpoint is truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  const bool checksum_ok = tail.u64() == fnv1a64(body);

  Checkpoint ckpt;
  Reader in(body);
  in.bytes(8);
  try {
    ckpt.step = in.u64();
    ckpt.vocab_fingerprint = in.u64();
    const std::uint64_t config_fp = in.u64();
    ModelConfig& c = ckpt.model.config;
    c.vocab_rows = in.u64();
    c.embedding_dim = in.u64();
    c.hidden_dim = in.u64();
    c.classifier_hidden = in.u64();
    c.num_classes = in.u64();
    c.bidirectional = in.u64() != 0;
    OptimizerState& o = ckpt.optimizer;
    o.step = in.u64();
    o.base_lr = in.f64();
    o.decay = in.f64();
    o.beta1 = in.f64();
    o.beta2 = in.f64();
    o.epsilon = in.f64();
    const std::uint32_t records = in.u32();
    for (std::uint32_t i = 0; i < records; ++i) {
      const std::string name = in.name();
      Tensor t = in.tensor_body();
      if (name == "frequencies") {
        ckpt.model.frequencies = std::move(t.storage());
      } else if (name.starts_with("param/")) {
        ckpt.model.params.emplace(name.substr(6), std::move(t));
      } else if (name.starts_with("adam.m/")) {
        o.first_moment.emplace(name.substr(7), std::move(t));
      } else if (name.starts_with("adam.v/")) {
        o.second_moment.emplace(name.substr(7), std::move(t));
      } else {
        throw CheckpointError("unknown checkpoint record '" + name + "'");
      }
    }
    if (!in.done()) throw CheckpointError("checkpoint has trailing bytes");
    if (!checksum_ok) throw CheckpointError("checkpoint checksum mismatch (corrupt file)");
    if (config_fp != ckpt.config_fingerprint()) throw CheckpointError("checkpoint config fingerprint mismatch");
  } catch (const CheckpointError& e) {
    // A damaged file usually surfaces as a parse failure; report it as such.
    if (!checksum_ok) throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
    throw;
  }
  if (ckpt.model.frequencies.size() + 1 != ckpt.model.config.vocab_rows) {
    throw CheckpointError("checkpoint frequencies do not match its vocabulary size");
  }
  const auto emb = ckpt.model.params.find(param::kEmbedding);
  if (emb == ckpt.model.params.end() ||
      emb->second.shape() != Shape{ckpt.model.config.vocab_rows, ckpt.model.config.embedding_dim}) {
    throw CheckpointError("checkpoint embedding matrix is missing or misshapen");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_vocab_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Checkpoint ckpt = parse_checkpoint(ss.str());
  if (expected_vocab_fingerprint && *expected_vocab_fingerprint != ckpt.vocab_fingerprint) {
    throw CheckpointError("checkpoint " + path.string() + " was built for a different vocabulary");
  }
  return ckpt;
}

std::filesystem::path vocab_path_for(const std::filesystem::path& checkpoint_path) {
  std::filesystem::path p = checkpoint_path;
  p += ".vocab";
  return p;
}

}  // namespace advt
