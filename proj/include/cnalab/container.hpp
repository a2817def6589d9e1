#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace cnalab {

// On-disk layout:
//   "CNAW" | u32 LE version (=1) | u64 LE header length | UTF-8 JSON header | payload
// The header maps tensor name -> {"dtype":"f32","shape":[...],"offset":bytes}
// where offset is relative to the start of the payload. Non-tensor header keys
// ("config", "vocab", "adapter") are carried through verbatim in `meta`.
inline constexpr char kContainerMagic[4] = {'C', 'N', 'A', 'W'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct StoredTensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t numel() const;
};

struct Container {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, StoredTensor> tensors;
};

// Throws DataError on any structural problem.
Container read_container(const std::filesystem::path& path);
Container parse_container(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> serialize_container(const Container& c);
// Writes to a sibling temp file and renames over the target.
void write_container(const std::filesystem::path& path, const Container& c);

}  // namespace cnalab
