#include "hmrk/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hmrk/error.hpp"

static_assert(std::endian::native == std::endian::little, "container format assumes a little-endian host");

namespace hmrk {

namespace {

constexpr char kMagic[8] = {'H', 'M', 'R', 'K', 'C', 'N', 'T', '1'};

template <class T>
const char* dtype_of() {
  if constexpr (std::is_same_v<T, double>) return "f64";
  else if constexpr (std::is_same_v<T, std::int32_t>) return "i32";
  else return "u8";
}

template <class T>
void check_count(const std::string& name, const ad::Shape& shape, const std::vector<T>& data) {
  if (ad::numel(shape) != data.size()) {
    fail(ErrorKind::kShapeMismatch, "array '" + name + "': shape " + ad::shape_str(shape) + " vs " +
                                        std::to_string(data.size()) + " values");
  }
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Container::put(const std::string& name, const ad::Tensor& t) {
  put_f64(name, t.shape(), t.storage());
}

void Container::put_f64(const std::string& name, ad::Shape shape, std::vector<double> data) {
  check_count(name, shape, data);
  arrays_[name] = Entry{std::move(shape), std::move(data)};
}

void Container::put_i32(const std::string& name, ad::Shape shape, std::vector<std::int32_t> data) {
  check_count(name, shape, data);
  arrays_[name] = Entry{std::move(shape), std::move(data)};
}

void Container::put_u8(const std::string& name, ad::Shape shape, std::vector<std::uint8_t> data) {
  check_count(name, shape, data);
  arrays_[name] = Entry{std::move(shape), std::move(data)};
}

const Container::Entry& Container::entry(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) fail(ErrorKind::kCorrupt, "container of kind '" + kind_ + "' lacks array '" + name + "'");
  return it->second;
}

const ad::Shape& Container::shape(const std::string& name) const { return entry(name).shape; }

ad::Tensor Container::tensor(const std::string& name) const {
  const Entry& e = entry(name);
  return ad::Tensor(e.shape, f64(name));
}

const std::vector<double>& Container::f64(const std::string& name) const {
  const Entry& e = entry(name);
  if (auto* p = std::get_if<std::vector<double>>(&e.data)) return *p;
  fail(ErrorKind::kCorrupt, "array '" + name + "' is not f64");
}

const std::vector<std::int32_t>& Container::i32(const std::string& name) const {
  const Entry& e = entry(name);
  if (auto* p = std::get_if<std::vector<std::int32_t>>(&e.data)) return *p;
  fail(ErrorKind::kCorrupt, "array '" + name + "' is not i32");
}

const std::vector<std::uint8_t>& Container::u8(const std::string& name) const {
  const Entry& e = entry(name);
  if (auto* p = std::get_if<std::vector<std::uint8_t>>(&e.data)) return *p;
  fail(ErrorKind::kCorrupt, "array '" + name + "' is not u8");
}

std::vector<std::string> Container::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = arrays_.lower_bound(prefix); it != arrays_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first.substr(prefix.size()));
  }
  return out;
}

std::vector<std::string> Container::names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : arrays_) out.push_back(name);
  return out;
}

void Container::save(const std::filesystem::path& path) const {
  std::vector<std::uint8_t> blob;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& [name, e] : arrays_) {
    std::visit(
        [&](const auto& vec) {
          using T = typename std::decay_t<decltype(vec)>::value_type;
          const std::size_t nbytes = vec.size() * sizeof(T);
          const std::size_t offset = blob.size();
          blob.resize(offset + nbytes);
          if (nbytes) std::memcpy(blob.data() + offset, vec.data(), nbytes);
          arrays.push_back({{"name", name}, {"dtype", dtype_of<T>()}, {"shape", e.shape}, {"offset", offset},
                            {"nbytes", nbytes}});
        },
        e.data);
  }
  nlohmann::json manifest = {{"format_version", kFormatVersion},
                             {"kind", kind_},
                             {"kind_version", kind_version_},
                             {"meta", meta_},
                             {"arrays", arrays},
                             {"blob_bytes", blob.size()},
                             {"checksum", hex64(fnv1a64(blob.data(), blob.size()))}};
  const std::string text = manifest.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  const std::uint64_t len = text.size();
  os.write(kMagic, sizeof(kMagic));
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!os) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

Container Container::load(const std::filesystem::path& path, const std::string& expected_kind,
                          int expected_version) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string where = "'" + path.string() + "': ";
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorKind::kCorrupt, where + "missing container header");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (len > bytes.size() - 16) fail(ErrorKind::kCorrupt, where + "truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCorrupt, where + "manifest is not valid JSON (" + e.what() + ")");
  }
  try {
    if (manifest.at("format_version").get<int>() != kFormatVersion) {
      fail(ErrorKind::kVersion, where + "unsupported container format version " +
                                    manifest.at("format_version").dump());
    }
    Container c(manifest.at("kind").get<std::string>(), manifest.at("kind_version").get<int>());
    if (!expected_kind.empty() && c.kind_ != expected_kind) {
      fail(ErrorKind::kCorrupt, where + "expected a '" + expected_kind + "' file, found '" + c.kind_ + "'");
    }
    if (!expected_kind.empty() && c.kind_version_ != expected_version) {
      fail(ErrorKind::kVersion, where + c.kind_ + " version " + std::to_string(c.kind_version_) +
                                    " is not supported (expected " + std::to_string(expected_version) + ")");
    }
    c.meta_ = manifest.at("meta");
    const std::size_t blob_start = 16 + len;
    const std::uint64_t blob_bytes = manifest.at("blob_bytes").get<std::uint64_t>();
    if (bytes.size() - blob_start != blob_bytes) {
      fail(ErrorKind::kCorrupt, where + "blob holds " + std::to_string(bytes.size() - blob_start) +
                                    " bytes, manifest declares " + std::to_string(blob_bytes) + " (truncated?)");
    }
    const std::uint8_t* blob = bytes.data() + blob_start;
    if (hex64(fnv1a64(blob, blob_bytes)) != manifest.at("checksum").get<std::string>()) {
      fail(ErrorKind::kCorrupt, where + "checksum mismatch");
    }
    for (const auto& a : manifest.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto dtype = a.at("dtype").get<std::string>();
      const auto shape = a.at("shape").get<ad::Shape>();
      const auto offset = a.at("offset").get<std::size_t>();
      const auto nbytes = a.at("nbytes").get<std::size_t>();
      if (offset > blob_bytes || nbytes > blob_bytes - offset) {
        fail(ErrorKind::kCorrupt, where + "array '" + name + "' extends past the blob");
      }
      auto read = [&](auto tag) {
        using T = decltype(tag);
        if (nbytes != ad::numel(shape) * sizeof(T)) {
          fail(ErrorKind::kCorrupt, where + "array '" + name + "' size does not match its shape");
        }
        std::vector<T> v(ad::numel(shape));
        if (nbytes) std::memcpy(v.data(), blob + offset, nbytes);
        c.arrays_[name] = Entry{shape, std::move(v)};
      };
      if (dtype == "f64") read(double{});
      else if (dtype == "i32") read(std::int32_t{});
      else if (dtype == "u8") read(std::uint8_t{});
      else fail(ErrorKind::kCorrupt, where + "array '" + name + "' has unknown dtype '" + dtype + "'");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCorrupt, where + "malformed manifest (" + e.what() + ")");
  }
}

}  // namespace hmrk
