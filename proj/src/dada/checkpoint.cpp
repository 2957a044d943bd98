#include "dada/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "dada/error.hpp"

namespace dada {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'A', 'D', 'A', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& out, T v) {
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!in) fail(ErrorKind::kData, "checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = ckpt.format_version;
  header["kind"] = ckpt.kind;
  header["arch"] = ckpt.arch;
  header["schedule"] = ckpt.schedule;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();

  std::vector<torch::Tensor> payload;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    auto flat = t.detach().to(torch::kFloat32).contiguous().cpu();
    const std::uint64_t nbytes = static_cast<std::uint64_t>(flat.numel()) * sizeof(float);
    header["tensors"].push_back(
        {{"name", name}, {"shape", flat.sizes().vec()}, {"dtype", "f32"}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
    payload.push_back(flat);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kData, "cannot write checkpoint " + path.string());
  const std::string text = header.dump();
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, ckpt.format_version);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : payload) {
    // x86-64 and aarch64 hosts are little-endian, so the raw float bytes are the wire format.
    out.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) fail(ErrorKind::kData, "short write on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kData, "cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) fail(ErrorKind::kData, path.string() + " is not a checkpoint");
  Checkpoint ckpt;
  ckpt.format_version = get_le<std::uint32_t>(in);
  if (ckpt.format_version != kCheckpointFormatVersion)
    fail(ErrorKind::kData, "unsupported checkpoint version " + std::to_string(ckpt.format_version));
  const auto hlen = get_le<std::uint64_t>(in);
  std::string text(hlen, '\0');
  in.read(text.data(), static_cast<std::streamsize>(hlen));
  if (!in) fail(ErrorKind::kData, "checkpoint header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("checkpoint header: ") + e.what());
  }
  ckpt.kind = header.value("kind", "");
  ckpt.arch = header.value("arch", nlohmann::json::object());
  ckpt.schedule = header.value("schedule", nlohmann::json::object());
  ckpt.meta = header.value("meta", nlohmann::json::object());

  const auto blob_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    auto shape = entry.at("shape").get<std::vector<int64_t>>();
    auto t = torch::empty(shape, torch::kFloat32);
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(t.numel()) * sizeof(float))
      fail(ErrorKind::kData, "tensor size mismatch for " + entry.at("name").get<std::string>());
    in.seekg(blob_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(nbytes));
    if (!in) fail(ErrorKind::kData, "checkpoint payload truncated");
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), t);
  }
  return ckpt;
}

void export_module(const torch::nn::Module& module, const std::string& prefix, Checkpoint& ckpt) {
  for (const auto& item : module.named_parameters(true)) ckpt.tensors.emplace_back(prefix + item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) ckpt.tensors.emplace_back(prefix + item.key(), item.value());
}

void import_module(torch::nn::Module& module, const std::string& prefix, const Checkpoint& ckpt) {
  torch::NoGradGuard guard;
  auto copy_in = [&](const std::string& key, torch::Tensor& dst) {
    const auto* src = ckpt.find(prefix + key);
    if (src == nullptr) fail(ErrorKind::kData, "checkpoint lacks tensor " + prefix + key);
    if (src->sizes() != dst.sizes()) fail(ErrorKind::kData, "shape mismatch for " + prefix + key);
    dst.copy_(*src);
  };
  for (auto& item : module.named_parameters(true)) copy_in(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) copy_in(item.key(), item.value());
}

}  // namespace dada
