#include "dgrl/checkpoint.hpp"
#include "dgrl/errors.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>

using namespace dgrl;

namespace {

nn::Mlp sample_mlp() {
  Rng rng(17);
  const std::vector<int> sizes{5, 4, 3};
  return nn::Mlp::make(sizes, nn::Activation::tanh, nn::Activation::identity, rng);
}

vq::Codebook sample_codebook() {
  nn::DenseMatrix codes(3, 2);
  codes << 0.5, -1.0, 2.25, 3.0, -0.125, 7.0;
  auto cb = vq::Codebook::from_codes(codes, 0.9);
  cb.mutable_cluster_size() << 1.0, 0.5, 0.0;
  cb.mutable_idle_updates() = {0, 2, 9};
  return cb;
}

std::uint32_t read_u32(const std::string& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

}  // namespace

TEST_CASE("round trip of networks, codebooks and scalars") {
  io::CheckpointWriter w;
  const auto mlp = sample_mlp();
  const auto cb = sample_codebook();
  w.add_mlp("net", mlp);
  w.add_codebook("book", cb);
  w.add_scalars("meta", {{"alpha", 0.25}, {"count", 3.0}});
  const auto r = io::CheckpointReader::from_bytes(w.bytes());
  CHECK(r.mlp("net") == mlp);
  const auto back = r.codebook("book");
  CHECK(back.codes() == cb.codes());
  CHECK(back.ema_cluster_size() == cb.ema_cluster_size());
  CHECK(back.ema_code_sum() == cb.ema_code_sum());
  CHECK(back.idle_updates() == cb.idle_updates());
  CHECK(back.eta() == 0.9);
  const auto meta = r.scalars("meta");
  CHECK(meta.at("alpha") == 0.25);
  CHECK(meta.at("count") == 3.0);
}

TEST_CASE("header layout is little-endian with a param count") {
  io::CheckpointWriter w;
  const auto mlp = sample_mlp();
  w.add_mlp("net", mlp);
  const auto b = w.bytes();
  CHECK(b.substr(0, 8) == "DGRLCKPT");
  CHECK(read_u32(b, 8) == io::kCheckpointVersion);
  CHECK(read_u32(b, 12) == 1u);
  CHECK(read_u32(b, 16) == static_cast<std::uint32_t>(io::SectionKind::mlp));
  // kind | name length | "net" | u64 payload length | u64 param count
  const std::size_t payload_at = 16 + 4 + 4 + 3 + 8;
  CHECK(read_u32(b, payload_at) == static_cast<std::uint32_t>(mlp.param_count()));
}

TEST_CASE("writing is deterministic and file round trip works") {
  io::CheckpointWriter a, b;
  a.add_mlp("net", sample_mlp());
  b.add_mlp("net", sample_mlp());
  CHECK(a.bytes() == b.bytes());
  const auto path = std::filesystem::temp_directory_path() / "dgrl_test_checkpoint.ckpt";
  a.save(path);
  CHECK(io::CheckpointReader::load(path).mlp("net") == sample_mlp());
  std::filesystem::remove(path);
}

TEST_CASE("corrupted containers are rejected") {
  io::CheckpointWriter w;
  w.add_mlp("net", sample_mlp());
  auto b = w.bytes();
  CHECK_THROWS_AS(io::CheckpointReader::from_bytes(b.substr(0, b.size() - 3)), ConfigError);
  auto bad_magic = b;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(io::CheckpointReader::from_bytes(bad_magic), ConfigError);
  auto bad_version = b;
  bad_version[8] = 99;
  CHECK_THROWS_AS(io::CheckpointReader::from_bytes(bad_version), ConfigError);
  const auto r = io::CheckpointReader::from_bytes(b);
  CHECK_THROWS_AS(r.mlp("missing"), ConfigError);
  CHECK_THROWS_AS(r.codebook("net"), ConfigError);
  CHECK_THROWS_AS(w.add_mlp("net", sample_mlp()), UsageError);
}

TEST_CASE("a wrong declared param count is rejected") {
  io::CheckpointWriter w;
  w.add_mlp("net", sample_mlp());
  auto b = w.bytes();
  const std::size_t payload_at = 16 + 4 + 4 + 3 + 8;
  b[payload_at] = static_cast<char>(b[payload_at] + 1);
  const auto r = io::CheckpointReader::from_bytes(b);
  CHECK_THROWS_AS(r.mlp("net"), ConfigError);
}
