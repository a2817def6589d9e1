#include "cnalab/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "cnalab/errors.hpp"

namespace cnalab {

namespace {

const char* const kReservedKeys[] = {"config", "vocab", "adapter", "__metadata__"};

bool is_reserved(const std::string& key) {
  for (const char* r : kReservedKeys)
    if (key == r) return true;
  return false;
}

template <typename T>
T byte_swapped(T v) {
  auto* p = reinterpret_cast<std::uint8_t*>(&v);
  std::reverse(p, p + sizeof(T));
  return v;
}

template <typename T>
T load_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) v = byte_swapped(v);
  return v;
}

template <typename T>
void store_le(std::vector<std::uint8_t>& out, T v) {
  if constexpr (std::endian::native == std::endian::big) v = byte_swapped(v);
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

std::size_t StoredTensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Container parse_container(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kPrefix = 4 + 4 + 8;
  if (bytes.size() < kPrefix) throw DataError("container: file too short");
  if (std::memcmp(bytes.data(), kContainerMagic, 4) != 0) throw DataError("container: bad magic");
  const auto version = load_le<std::uint32_t>(bytes.data() + 4);
  if (version != kContainerVersion) throw DataError("container: unsupported version " + std::to_string(version));
  const auto header_len = load_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - kPrefix) throw DataError("container: header length exceeds file size");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPrefix, bytes.begin() + kPrefix + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("container: malformed header: ") + e.what());
  }
  if (!header.is_object()) throw DataError("container: header is not a JSON object");

  const std::size_t payload_start = kPrefix + header_len;
  const std::size_t payload_size = bytes.size() - payload_start;

  Container c;
  for (auto& [key, value] : header.items()) {
    if (is_reserved(key)) {
      c.meta[key] = value;
      continue;
    }
    StoredTensor t;
    std::size_t offset = 0;
    try {
      if (value.at("dtype").get<std::string>() != "f32")
        throw DataError("container: tensor '" + key + "' has unsupported dtype");
      t.shape = value.at("shape").get<std::vector<std::size_t>>();
      offset = value.at("offset").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("container: malformed entry for '" + key + "': " + e.what());
    }
    const std::size_t n = t.numel();
    if (n > payload_size / sizeof(float) || offset > payload_size - n * sizeof(float))
      throw DataError("container: tensor '" + key + "' extends past end of payload");
    if (offset % sizeof(float) != 0) throw DataError("container: tensor '" + key + "' is misaligned");
    t.data.resize(n);
    const std::uint8_t* src = bytes.data() + payload_start + offset;
    for (std::size_t i = 0; i < n; ++i) {
      const auto bits = load_le<std::uint32_t>(src + i * sizeof(float));
      t.data[i] = std::bit_cast<float>(bits);
    }
    c.tensors.emplace(key, std::move(t));
  }
  return c;
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("container: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_container(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> serialize_container(const Container& c) {
  nlohmann::json header = c.meta.is_null() ? nlohmann::json::object() : c.meta;
  std::size_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    if (is_reserved(name)) throw DataError("container: tensor name '" + name + "' is reserved");
    if (t.numel() != t.data.size()) throw DataError("container: tensor '" + name + "' data does not match shape");
    header[name] = {{"dtype", "f32"}, {"shape", t.shape}, {"offset", offset}};
    offset += t.data.size() * sizeof(float);
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + offset);
  out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
  store_le<std::uint32_t>(out, kContainerVersion);
  store_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : c.tensors)
    for (float f : t.data) store_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  const auto bytes = serialize_container(c);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("container: cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("container: write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("container: rename to " + path.string() + " failed: " + ec.message());
}

}  // namespace cnalab
