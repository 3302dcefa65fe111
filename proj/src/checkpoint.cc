#include "doorrl/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace doorrl {
namespace {

constexpr char kMagic[4] = {'D', 'R', 'C', 'K'};

void PutU32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void PutU64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void PutString(std::vector<uint8_t>& out, const std::string& s) {
  PutU32(out, static_cast<uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Cursor {
 public:
  explicit Cursor(const std::vector<uint8_t>& b) : b_(b) {}
  uint32_t U32() {
    Need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{b_[pos_++]} << (8 * i);
    return v;
  }
  uint64_t U64() {
    Need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t{b_[pos_++]} << (8 * i);
    return v;
  }
  std::string String() {
    const uint32_t n = U32();
    Need(n);
    std::string s(b_.begin() + pos_, b_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  bool AtEnd() const { return pos_ == b_.size(); }

 private:
  void Need(size_t n) {
    if (pos_ + n > b_.size()) throw std::runtime_error("checkpoint: truncated");
  }
  const std::vector<uint8_t>& b_;
  size_t pos_ = 0;
};

void AppendMlp(const std::string& prefix, const Mlp& net, Checkpoint& ckpt) {
  const auto& layers = net.layers();
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    ckpt.tensors.push_back({base + ".w", layers[l].w});
    ckpt.tensors.push_back({base + ".b", Matrix(layers[l].b)});
  }
  ckpt.meta[prefix + ".layers"] = std::to_string(layers.size());
}

Mlp ExtractMlp(const std::string& prefix, const Checkpoint& ckpt) {
  auto it = ckpt.meta.find(prefix + ".layers");
  if (it == ckpt.meta.end()) {
    throw std::runtime_error("checkpoint: missing " + prefix);
  }
  const int n = std::stoi(it->second);
  std::vector<Matrix> ws;
  std::vector<Vector> bs;
  for (int l = 0; l < n; ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    ws.push_back(ckpt.Get(base + ".w"));
    const Matrix& b = ckpt.Get(base + ".b");
    if (b.cols() != 1 || b.rows() != ws.back().rows()) {
      throw std::runtime_error("checkpoint: bad bias shape in " + base);
    }
    bs.push_back(b.col(0));
  }
  std::vector<int> hidden;
  for (int l = 0; l + 1 < n; ++l) hidden.push_back(ws[l].rows());
  Mlp net(ws.front().cols(), hidden, ws.back().rows());
  for (int l = 0; l < n; ++l) {
    DenseLayer& layer = net.mutable_layers()[l];
    if (layer.w.rows() != ws[l].rows() || layer.w.cols() != ws[l].cols()) {
      throw std::runtime_error("checkpoint: inconsistent layer shapes");
    }
    layer.w = ws[l];
    layer.b = bs[l];
  }
  return net;
}

}  // namespace

const Matrix& Checkpoint::Get(const std::string& name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw std::runtime_error("checkpoint: missing tensor " + name);
}

std::vector<uint8_t> SerializeCheckpoint(const Checkpoint& ckpt) {
  std::vector<uint8_t> out(kMagic, kMagic + 4);
  PutU32(out, kCheckpointVersion);
  PutU32(out, static_cast<uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    PutString(out, k);
    PutString(out, v);
  }
  PutU32(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const NamedTensor& t : ckpt.tensors) {
    PutString(out, t.name);
    PutU32(out, static_cast<uint32_t>(t.value.rows()));
    PutU32(out, static_cast<uint32_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      PutU64(out, std::bit_cast<uint64_t>(t.value.data()[i]));
    }
  }
  return out;
}

Checkpoint DeserializeCheckpoint(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  Cursor c(bytes);
  c.U32();  // magic
  const uint32_t version = c.U32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  }
  Checkpoint ckpt;
  const uint32_t n_meta = c.U32();
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string k = c.String();
    ckpt.meta[k] = c.String();
  }
  const uint32_t n_tensors = c.U32();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = c.String();
    const uint32_t rows = c.U32();
    const uint32_t cols = c.U32();
    t.value.resize(rows, cols);
    for (Eigen::Index j = 0; j < t.value.size(); ++j) {
      t.value.data()[j] = std::bit_cast<double>(c.U64());
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (!c.AtEnd()) throw std::runtime_error("checkpoint: trailing bytes");
  return ckpt;
}

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::vector<uint8_t> bytes = SerializeCheckpoint(ckpt);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  std::ofstream man(path + ".manifest");
  if (!man) throw std::runtime_error("cannot write " + path + ".manifest");
  man << "format=doorrl-checkpoint\nversion=" << kCheckpointVersion << "\n";
  for (const auto& [k, v] : ckpt.meta) man << "meta." << k << "=" << v << "\n";
  for (const NamedTensor& t : ckpt.tensors) {
    man << "tensor." << t.name << "=" << t.value.rows() << "x"
        << t.value.cols() << "\n";
  }
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return DeserializeCheckpoint(bytes);
}

void AppendPolicy(const PolicyParams& params, Checkpoint& ckpt) {
  AppendMlp("actor", params.actor.mean, ckpt);
  ckpt.tensors.push_back({"actor.log_std", Matrix(params.actor.log_std)});
  if (params.critic) AppendMlp("critic", *params.critic, ckpt);
  ckpt.meta["obs_dim"] = std::to_string(params.actor.obs_dim());
  ckpt.meta["act_dim"] = std::to_string(params.actor.act_dim());
}

PolicyParams ExtractPolicy(const Checkpoint& ckpt) {
  PolicyParams p;
  p.actor.mean = ExtractMlp("actor", ckpt);
  const Matrix& ls = ckpt.Get("actor.log_std");
  if (ls.cols() != 1 || ls.rows() != p.actor.mean.out_dim()) {
    throw std::runtime_error("checkpoint: bad log_std shape");
  }
  p.actor.log_std = ls.col(0);
  if (ckpt.meta.count("critic.layers")) p.critic = ExtractMlp("critic", ckpt);
  return p;
}

}  // namespace doorrl
