#include "dgrl/checkpoint.hpp"

#include "dgrl/errors.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace dgrl::io {
namespace {

constexpr char kMagic[8] = {'D', 'G', 'R', 'L', 'C', 'K', 'P', 'T'};

template <typename U>
void put_uint(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_f64(std::string& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }

void put_f64s(std::string& out, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) put_f64(out, data[i]);
}

void put_string(std::string& out, const std::string& s) {
  put_uint(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Cursor {
 public:
  explicit Cursor(const std::string& data) : data_(data) {}

  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  void f64s(double* out, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) out[i] = f64();
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return bytes(uint<std::uint32_t>()); }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw ConfigError("checkpoint: truncated data");
  }
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

void CheckpointWriter::add(SectionKind kind, const std::string& name, std::string payload) {
  for (const auto& s : sections_) {
    if (s.name == name) throw UsageError("checkpoint: duplicate section '" + name + "'");
  }
  sections_.push_back({kind, name, std::move(payload)});
}

void CheckpointWriter::add_mlp(const std::string& name, const nn::Mlp& model) {
  std::string p;
  put_uint(p, static_cast<std::uint64_t>(model.param_count()));
  put_uint(p, static_cast<std::uint32_t>(model.layers().size()));
  for (const auto& l : model.layers()) {
    put_uint(p, static_cast<std::uint32_t>(l.out_dim()));
    put_uint(p, static_cast<std::uint32_t>(l.in_dim()));
    put_uint(p, static_cast<std::uint32_t>(l.activation));
    put_f64s(p, l.weights.data(), l.weights.size());
    put_f64s(p, l.bias.data(), l.bias.size());
  }
  add(SectionKind::mlp, name, std::move(p));
}

void CheckpointWriter::add_codebook(const std::string& name, const vq::Codebook& cb) {
  std::string p;
  put_uint(p, static_cast<std::uint32_t>(cb.size()));
  put_uint(p, static_cast<std::uint32_t>(cb.seg_dim()));
  put_f64(p, cb.eta());
  put_f64s(p, cb.codes().data(), cb.codes().size());
  put_f64s(p, cb.ema_cluster_size().data(), cb.ema_cluster_size().size());
  put_f64s(p, cb.ema_code_sum().data(), cb.ema_code_sum().size());
  for (auto k : cb.idle_updates()) put_uint(p, static_cast<std::uint64_t>(k));
  add(SectionKind::codebook, name, std::move(p));
}

void CheckpointWriter::add_scalars(const std::string& name,
                                   const std::map<std::string, double>& values) {
  std::string p;
  put_uint(p, static_cast<std::uint32_t>(values.size()));
  for (const auto& [k, v] : values) {
    put_string(p, k);
    put_f64(p, v);
  }
  add(SectionKind::scalars, name, std::move(p));
}

std::string CheckpointWriter::bytes() const {
  std::string out(kMagic, sizeof(kMagic));
  put_uint(out, kCheckpointVersion);
  put_uint(out, static_cast<std::uint32_t>(sections_.size()));
  for (const auto& s : sections_) {
    put_uint(out, static_cast<std::uint32_t>(s.kind));
    put_string(out, s.name);
    put_uint(out, static_cast<std::uint64_t>(s.payload.size()));
    out += s.payload;
  }
  return out;
}

void CheckpointWriter::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write checkpoint " + path.string());
  const auto b = bytes();
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
}

CheckpointReader CheckpointReader::from_bytes(const std::string& bytes) {
  Cursor c(bytes);
  if (c.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ConfigError("checkpoint: bad magic");
  }
  const auto version = c.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  }
  CheckpointReader r;
  const auto n = c.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto kind = static_cast<SectionKind>(c.uint<std::uint32_t>());
    auto name = c.str();
    const auto len = c.uint<std::uint64_t>();
    r.sections_[name] = {kind, c.bytes(static_cast<std::size_t>(len))};
  }
  if (!c.done()) throw ConfigError("checkpoint: trailing bytes");
  return r;
}

CheckpointReader CheckpointReader::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_bytes(ss.str());
}

const std::string& CheckpointReader::payload(const std::string& name, SectionKind kind) const {
  auto it = sections_.find(name);
  if (it == sections_.end()) throw ConfigError("checkpoint: missing section '" + name + "'");
  if (it->second.first != kind) throw ConfigError("checkpoint: section '" + name + "' has wrong kind");
  return it->second.second;
}

nn::Mlp CheckpointReader::mlp(const std::string& name) const {
  Cursor c(payload(name, SectionKind::mlp));
  const auto declared = c.uint<std::uint64_t>();
  const auto n_layers = c.uint<std::uint32_t>();
  std::vector<nn::DenseLayer> layers;
  std::uint64_t counted = 0;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    nn::DenseLayer l;
    const auto rows = c.uint<std::uint32_t>();
    const auto cols = c.uint<std::uint32_t>();
    const auto act = c.uint<std::uint32_t>();
    if (act > 2) throw ConfigError("checkpoint: unknown activation code in '" + name + "'");
    l.activation = static_cast<nn::Activation>(act);
    l.weights.resize(rows, cols);
    c.f64s(l.weights.data(), l.weights.size());
    l.bias.resize(rows);
    c.f64s(l.bias.data(), l.bias.size());
    counted += static_cast<std::uint64_t>(rows) * cols + rows;
    layers.push_back(std::move(l));
  }
  if (!c.done()) throw ConfigError("checkpoint: trailing bytes in '" + name + "'");
  if (counted != declared) {
    throw ConfigError("checkpoint: '" + name + "' declares " + std::to_string(declared) +
                      " parameters but holds " + std::to_string(counted));
  }
  return nn::Mlp(std::move(layers));
}

vq::Codebook CheckpointReader::codebook(const std::string& name) const {
  Cursor c(payload(name, SectionKind::codebook));
  const auto size = static_cast<int>(c.uint<std::uint32_t>());
  const auto d = static_cast<int>(c.uint<std::uint32_t>());
  const double eta = c.f64();
  vq::Codebook cb(size, d, eta);
  c.f64s(cb.mutable_codes().data(), cb.codes().size());
  c.f64s(cb.mutable_cluster_size().data(), cb.ema_cluster_size().size());
  c.f64s(cb.mutable_code_sum().data(), cb.ema_code_sum().size());
  for (auto& k : cb.mutable_idle_updates()) k = static_cast<std::int64_t>(c.uint<std::uint64_t>());
  if (!c.done()) throw ConfigError("checkpoint: trailing bytes in '" + name + "'");
  return cb;
}

std::map<std::string, double> CheckpointReader::scalars(const std::string& name) const {
  Cursor c(payload(name, SectionKind::scalars));
  std::map<std::string, double> out;
  const auto n = c.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto k = c.str();
    out[k] = c.f64();
  }
  return out;
}

}  // namespace dgrl::io
