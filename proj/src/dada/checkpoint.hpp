#pragma once

// Self-describing model container shared by every trained model:
//
//   bytes 0..7    magic "DADACKPT"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..19  header length H, uint64 little-endian
//   next H bytes  UTF-8 JSON header (kind, arch, schedule, meta, tensor table)
//   remainder     tensor payload, float32 little-endian, offsets from the table

#include <torch/torch.h>

#include <filesystem>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

namespace dada {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  std::uint32_t format_version = kCheckpointFormatVersion;
  std::string kind;
  nlohmann::json arch = nlohmann::json::object();
  nlohmann::json schedule = nlohmann::json::object();
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends every parameter and buffer of `module` under `prefix`.
void export_module(const torch::nn::Module& module, const std::string& prefix, Checkpoint& ckpt);
/// Copies tensors back into `module`; every parameter and buffer must be present.
void import_module(torch::nn::Module& module, const std::string& prefix, const Checkpoint& ckpt);

}  // namespace dada
