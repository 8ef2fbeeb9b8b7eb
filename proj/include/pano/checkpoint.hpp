#pragma once

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pano/adam.hpp"
#include "pano/nets.hpp"

namespace pano {

/// Checkpoint container: magic, 32-bit header length, JSON header (profile,
/// entry shapes, step count, sections), then raw little-endian float32 blobs
/// in parameter declaration order. Optimizer moments follow as extra sections
/// when saved mid-training.
inline constexpr char kCheckpointMagic[4] = {'P', 'A', 'N', 'O'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckpt_detail {

template <typename S>
void write_blob(std::ostream& os, const Tensor<S>& t) {
  std::vector<float> buf(static_cast<size_t>(t.size()));
  for (std::int64_t i = 0; i < t.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

template <typename S>
void read_blob(std::istream& is, Tensor<S>& t) {
  std::vector<float> buf(static_cast<size_t>(t.size()));
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw std::runtime_error("checkpoint: truncated parameter blob");
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(buf[static_cast<size_t>(i)]);
}

}  // namespace ckpt_detail

struct CheckpointInfo {
  std::string profile_name;
  int class_count = 0;
  std::int64_t step = 0;
  bool has_adam = false;
};

template <typename S>
void save_checkpoint(const std::string& path, const ModelParams<S>& model, std::int64_t step,
                     Adam<S>* adam = nullptr) {
  nlohmann::ordered_json header;
  header["version"] = kCheckpointVersion;
  header["profile"] = {{"name", model.profile.name},
                       {"image_h", model.profile.image_h},
                       {"image_w", model.profile.image_w},
                       {"block", model.profile.block},
                       {"class_count", model.profile.class_count}};
  header["step"] = step;
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  auto& store = const_cast<ParamStore<S>&>(model.store);
  for (std::size_t i = 0; i < store.entry_count(); ++i) {
    const auto& e = store.entry(i);
    entries.push_back({{"name", e.name}, {"shape", e.value.shape()}});
  }
  header["entries"] = std::move(entries);
  header["sections"] = adam ? nlohmann::ordered_json::array({"params", "adam_m", "adam_v"})
                            : nlohmann::ordered_json::array({"params"});
  if (adam) header["adam_t"] = adam->t();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  const std::string hs = header.dump();
  os.write(kCheckpointMagic, 4);
  const std::uint32_t version = kCheckpointVersion;
  os.write(reinterpret_cast<const char*>(&version), 4);
  const auto hlen = static_cast<std::uint32_t>(hs.size());
  os.write(reinterpret_cast<const char*>(&hlen), 4);
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (std::size_t i = 0; i < store.entry_count(); ++i) ckpt_detail::write_blob(os, store.entry(i).value);
  if (adam) {
    for (auto& m : adam->moments_m()) ckpt_detail::write_blob(os, m);
    for (auto& v : adam->moments_v()) ckpt_detail::write_blob(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

/// Read only the header (to construct a matching model before loading).
inline CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  std::uint32_t version = 0, hlen = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&version), 4);
  is.read(reinterpret_cast<char*>(&hlen), 4);
  if (!is || std::string(magic, 4) != std::string(kCheckpointMagic, 4))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(hs);
  CheckpointInfo info;
  info.profile_name = header.at("profile").at("name").get<std::string>();
  info.class_count = header.at("profile").at("class_count").get<int>();
  info.step = header.at("step").get<std::int64_t>();
  for (const auto& s : header.at("sections"))
    if (s.get<std::string>() == "adam_m") info.has_adam = true;
  return info;
}

/// Load parameters (and optimizer state when present and requested) into a
/// model whose architecture must match the header exactly.
template <typename S>
std::int64_t load_checkpoint(const std::string& path, ModelParams<S>& model, Adam<S>* adam = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  std::uint32_t version = 0, hlen = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&version), 4);
  is.read(reinterpret_cast<char*>(&hlen), 4);
  if (!is || std::string(magic, 4) != std::string(kCheckpointMagic, 4))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(hs);

  if (header.at("profile").at("name").get<std::string>() != model.profile.name ||
      header.at("profile").at("class_count").get<int>() != model.profile.class_count)
    throw std::runtime_error("checkpoint: profile mismatch (" +
                             header.at("profile").at("name").get<std::string>() + " vs " + model.profile.name + ")");
  const auto& entries = header.at("entries");
  if (entries.size() != model.store.entry_count()) throw std::runtime_error("checkpoint: entry count mismatch");
  for (std::size_t i = 0; i < model.store.entry_count(); ++i) {
    auto& e = model.store.entry(i);
    if (entries[i].at("name").get<std::string>() != e.name)
      throw std::runtime_error("checkpoint: entry name mismatch at index " + std::to_string(i));
    if (entries[i].at("shape").get<std::vector<int>>() != e.value.shape())
      throw std::runtime_error("checkpoint: entry shape mismatch for " + e.name);
    ckpt_detail::read_blob(is, e.value);
  }
  bool has_adam = false;
  for (const auto& s : header.at("sections"))
    if (s.get<std::string>() == "adam_m") has_adam = true;
  if (adam && has_adam) {
    for (auto& m : adam->moments_m()) ckpt_detail::read_blob(is, m);
    for (auto& v : adam->moments_v()) ckpt_detail::read_blob(is, v);
    adam->set_t(header.at("adam_t").get<std::int64_t>());
  }
  return header.at("step").get<std::int64_t>();
}

}  // namespace pano
