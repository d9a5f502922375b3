#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nn/network.hpp"
#include "nn/tensor.hpp"

namespace discorl::io {

// Versioned binary artifact container. Layout:
//   magic "DCRL" | u32 version | kind string | metadata JSON |
//   sections (name + little-endian f64 payload)
// Weight files use kind "weights" with the layer descriptor list in the
// metadata and the parameters in declaration order in section "params".
struct Container {
  static constexpr uint32_t kVersion = 1;

  std::string kind;
  nlohmann::json meta;
  std::vector<std::pair<std::string, std::vector<double>>> sections;

  void add_section(std::string name, std::vector<double> data) {
    sections.emplace_back(std::move(name), std::move(data));
  }
  const std::vector<double>& section(const std::string& name) const;
  bool has_section(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);
};

// Write-temp-then-rename.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

// FNV-1a content hash of a file.
uint64_t hash_file(const std::filesystem::path& path);

nlohmann::json layer_to_json(const nn::LayerSpec& l);
nn::LayerSpec layer_from_json(const nlohmann::json& j);

void save_network(const std::filesystem::path& path, const nn::Network& net);
nn::Network load_network(const std::filesystem::path& path);

void save_tensor(const std::filesystem::path& path, const nn::Tensor& t);
nn::Tensor load_tensor(const std::filesystem::path& path);

}  // namespace discorl::io
