#include "otcg/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "otcg/errors.hpp"

namespace otcg::io {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'O', 'T', 'C', 'G', 'A', 'R', 'R', '\0'};

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const fs::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw FileError("truncated array file: " + path.string());
  return v;
}

}  // namespace

void write_array(const fs::path& path, const Array& a, DType dtype) {
  std::uint64_t count = 1;
  for (auto d : a.dims) count *= d;
  if (count != a.data.size()) throw DimensionError("write_array: dims do not match data size");
  if (a.dims.size() > 255) throw DimensionError("write_array: rank too large");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot write " + path.string());
  os.write(kMagic, sizeof kMagic);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
  put<std::uint8_t>(os, static_cast<std::uint8_t>(a.dims.size()));
  const char reserved[6] = {};
  os.write(reserved, sizeof reserved);
  for (auto d : a.dims) put<std::uint64_t>(os, d);
  if (dtype == DType::f64) {
    os.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * 8));
  } else {
    std::vector<float> f(a.data.begin(), a.data.end());
    os.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
  }
  if (!os) throw FileError("write failed: " + path.string());
}

Array read_array(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("file not found: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw FileError("not an array container: " + path.string());
  const auto dtype = get<std::uint8_t>(is, path);
  const auto rank = get<std::uint8_t>(is, path);
  char reserved[6];
  is.read(reserved, sizeof reserved);
  if (dtype != static_cast<std::uint8_t>(DType::f32) && dtype != static_cast<std::uint8_t>(DType::f64))
    throw FileError("unknown dtype " + std::to_string(dtype) + " in " + path.string());
  Array a;
  std::uint64_t count = 1;
  for (int k = 0; k < rank; ++k) {
    a.dims.push_back(get<std::uint64_t>(is, path));
    count *= a.dims.back();
  }
  a.data.resize(count);
  if (dtype == static_cast<std::uint8_t>(DType::f64)) {
    is.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(count * 8));
  } else {
    std::vector<float> f(count);
    is.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(count * 4));
    std::copy(f.begin(), f.end(), a.data.begin());
  }
  if (!is) throw FileError("truncated array file: " + path.string());
  return a;
}

void write_tensor(const fs::path& path, const Tensor& t, DType dtype) {
  const Shape s = t.shape();
  write_array(path, {{std::uint64_t(s.n), std::uint64_t(s.c), std::uint64_t(s.h), std::uint64_t(s.w)}, t.storage()},
              dtype);
}

Tensor read_tensor(const fs::path& path) {
  Array a = read_array(path);
  if (a.dims.size() != 4) throw FileError("expected a rank-4 tensor in " + path.string());
  const Shape s{static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]), static_cast<int>(a.dims[2]),
                static_cast<int>(a.dims[3])};
  return Tensor(s, std::move(a.data));
}

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  p += ".json";
  return p;
}

void write_sidecar(const fs::path& path, const nlohmann::json& meta) { write_json(sidecar_path(path), meta); }

nlohmann::json read_sidecar(const fs::path& path) {
  const fs::path p = sidecar_path(path);
  if (!fs::exists(p)) return nlohmann::json::object();
  return read_json(p);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw FileError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FileError("file not found: " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace otcg::io
