#include "mrsr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mrsr/errors.hpp"

namespace mrsr {

static_assert(std::endian::native == std::endian::little,
              "tensor archives are written in native little-endian order");

namespace {

constexpr char kMagic[8] = {'M', 'R', 'S', 'R', 'A', 'R', 'C', 'H'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) {
    return "f32";
  } else {
    static_assert(std::is_same_v<T, double>);
    return "f64";
  }
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

template <typename T>
void TensorArchive::put_raw(const std::string& name, std::vector<std::int64_t> shape,
                            std::span<const T> values) {
  Entry e;
  e.dtype = dtype_name<T>();
  e.shape = std::move(shape);
  e.bytes.resize(values.size_bytes());
  std::memcpy(e.bytes.data(), values.data(), values.size_bytes());
  entries_[name] = std::move(e);
}

template void TensorArchive::put_raw<float>(const std::string&, std::vector<std::int64_t>,
                                            std::span<const float>);
template void TensorArchive::put_raw<double>(const std::string&, std::vector<std::int64_t>,
                                             std::span<const double>);

std::vector<std::string> TensorArchive::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

const TensorArchive::Entry& TensorArchive::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw IoError("archive has no tensor named '" + name + "'");
  return it->second;
}

std::vector<std::int64_t> TensorArchive::shape_of(const std::string& name) const {
  return entry(name).shape;
}

template <typename T>
std::vector<T> TensorArchive::get_vector(const std::string& name) const {
  const Entry& e = entry(name);
  const auto count = static_cast<std::size_t>(element_count(e.shape));
  std::vector<T> out(count);
  if (e.dtype == "f32") {
    std::vector<float> tmp(count);
    std::memcpy(tmp.data(), e.bytes.data(), count * sizeof(float));
    std::copy(tmp.begin(), tmp.end(), out.begin());
  } else if (e.dtype == "f64") {
    std::vector<double> tmp(count);
    std::memcpy(tmp.data(), e.bytes.data(), count * sizeof(double));
    std::copy(tmp.begin(), tmp.end(), out.begin());
  } else {
    throw IoError("unsupported dtype '" + e.dtype + "' for tensor " + name);
  }
  return out;
}

template <typename T>
Tensor<T> TensorArchive::get_tensor(const std::string& name) const {
  const Entry& e = entry(name);
  Shape4 s{1, 1, 1, 1};
  const auto& d = e.shape;
  if (d.size() > 4) throw ShapeError("tensor " + name + " has more than 4 dimensions");
  // Right-align lower-rank shapes: (C,) -> (C,1,1,1) for biases, (O,I,K,K) as-is.
  if (d.size() == 4) {
    s = {static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2]),
         static_cast<int>(d[3])};
  } else if (d.size() == 1) {
    s = {static_cast<int>(d[0]), 1, 1, 1};
  } else if (d.size() == 2) {
    s = {static_cast<int>(d[0]), static_cast<int>(d[1]), 1, 1};
  } else if (d.size() == 3) {
    s = {1, static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])};
  }
  return Tensor<T>(s, get_vector<T>(name));
}

template std::vector<float> TensorArchive::get_vector<float>(const std::string&) const;
template std::vector<double> TensorArchive::get_vector<double>(const std::string&) const;
template Tensor<float> TensorArchive::get_tensor<float>(const std::string&) const;
template Tensor<double> TensorArchive::get_tensor<double>(const std::string&) const;

void TensorArchive::save(const std::filesystem::path& path) const {
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, e] : entries_) {
    index.push_back({{"name", name},
                     {"dtype", e.dtype},
                     {"shape", e.shape},
                     {"offset", offset},
                     {"nbytes", e.bytes.size()}});
    offset += e.bytes.size();
  }
  const nlohmann::json header = {{"metadata", metadata}, {"tensors", index}};
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [_, e] : entries_) {
      out.write(reinterpret_cast<const char*>(e.bytes.data()),
                static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + " is not a tensor archive");
  }
  if (version != kVersion) {
    throw IoError(path.string() + ": unsupported archive version " + std::to_string(version));
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(path.string() + ": truncated header");

  TensorArchive ar;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": corrupt header: " + e.what());
  }
  ar.metadata = header.value("metadata", nlohmann::json::object());
  const std::streamoff payload = in.tellg();
  for (const auto& t : header.at("tensors")) {
    Entry e;
    e.dtype = t.at("dtype").get<std::string>();
    e.shape = t.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto nbytes = t.at("nbytes").get<std::uint64_t>();
    const std::size_t width = e.dtype == "f64" ? 8 : 4;
    if (nbytes != static_cast<std::uint64_t>(element_count(e.shape)) * width) {
      throw IoError(path.string() + ": size mismatch for " + t.at("name").get<std::string>());
    }
    e.bytes.resize(nbytes);
    in.seekg(payload + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(e.bytes.data()), static_cast<std::streamsize>(nbytes));
    if (!in) throw IoError(path.string() + ": truncated payload");
    ar.entries_[t.at("name").get<std::string>()] = std::move(e);
  }
  return ar;
}

std::string file_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace mrsr
