#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "hmrk/tensor.hpp"

namespace hmrk {

// On-disk layout shared by model files, checkpoints and datasets:
//
//   bytes 0..7    magic "HMRKCNT1"
//   bytes 8..15   manifest length L (uint64, little-endian)
//   next L bytes  UTF-8 JSON manifest
//   remainder     blob of raw little-endian arrays
//
// The manifest holds {"format_version", "kind", "kind_version", "meta",
// "arrays": [{"name","dtype","shape","offset","nbytes"}], "blob_bytes",
// "checksum"}. dtype is one of "f64", "i32", "u8"; offsets are relative to
// the blob start; checksum is FNV-1a 64 of the blob, as a hex string.
class Container {
 public:
  using Array = std::variant<std::vector<double>, std::vector<std::int32_t>, std::vector<std::uint8_t>>;

  static constexpr int kFormatVersion = 1;

  Container() = default;
  Container(std::string kind, int kind_version) : kind_(std::move(kind)), kind_version_(kind_version) {}

  const std::string& kind() const noexcept { return kind_; }
  int kind_version() const noexcept { return kind_version_; }
  nlohmann::json& meta() noexcept { return meta_; }
  const nlohmann::json& meta() const noexcept { return meta_; }

  void put(const std::string& name, const ad::Tensor& t);
  void put_f64(const std::string& name, ad::Shape shape, std::vector<double> data);
  void put_i32(const std::string& name, ad::Shape shape, std::vector<std::int32_t> data);
  void put_u8(const std::string& name, ad::Shape shape, std::vector<std::uint8_t> data);

  bool has(const std::string& name) const { return arrays_.count(name) != 0; }
  const ad::Shape& shape(const std::string& name) const;
  ad::Tensor tensor(const std::string& name) const;
  const std::vector<double>& f64(const std::string& name) const;
  const std::vector<std::int32_t>& i32(const std::string& name) const;
  const std::vector<std::uint8_t>& u8(const std::string& name) const;
  // Names of arrays starting with `prefix`, with the prefix stripped.
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::vector<std::string> names() const;

  void save(const std::filesystem::path& path) const;
  // Validates magic, manifest, sizes and checksum; when `expected_kind` is
  // non-empty the kind and kind_version must match.
  static Container load(const std::filesystem::path& path, const std::string& expected_kind = {},
                        int expected_version = 0);

 private:
  struct Entry {
    ad::Shape shape;
    Array data;
  };
  const Entry& entry(const std::string& name) const;

  std::string kind_;
  int kind_version_ = 0;
  nlohmann::json meta_ = nlohmann::json::object();
  std::map<std::string, Entry> arrays_;
};

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

}  // namespace hmrk
