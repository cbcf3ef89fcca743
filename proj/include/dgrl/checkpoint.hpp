#pragma once

// Versioned binary container for model parameters.
//
//   "DGRLCKPT" | u32 version | u32 section count | sections...
//   section:  u32 kind | u32 name length | name | u64 payload length | payload
//
// All integers and reals are little-endian; reals are IEEE-754 binary64.
// An MLP payload leads with its total parameter count so readers can
// validate the layer table against it.

#include "dgrl/nn.hpp"
#include "dgrl/vq.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dgrl::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class SectionKind : std::uint32_t { mlp = 1, codebook = 2, scalars = 3 };

class CheckpointWriter {
 public:
  void add_mlp(const std::string& name, const nn::Mlp& model);
  void add_codebook(const std::string& name, const vq::Codebook& codebook);
  void add_scalars(const std::string& name, const std::map<std::string, double>& values);

  std::string bytes() const;
  void save(const std::filesystem::path& path) const;

 private:
  struct Section {
    SectionKind kind;
    std::string name;
    std::string payload;
  };
  void add(SectionKind kind, const std::string& name, std::string payload);
  std::vector<Section> sections_;
};

class CheckpointReader {
 public:
  static CheckpointReader from_bytes(const std::string& bytes);
  static CheckpointReader load(const std::filesystem::path& path);

  bool has(const std::string& name) const { return sections_.count(name) != 0; }
  nn::Mlp mlp(const std::string& name) const;
  vq::Codebook codebook(const std::string& name) const;
  std::map<std::string, double> scalars(const std::string& name) const;

 private:
  const std::string& payload(const std::string& name, SectionKind kind) const;
  std::map<std::string, std::pair<SectionKind, std::string>> sections_;
};

}  // namespace dgrl::io
