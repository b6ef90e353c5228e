#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "otcg/tensor.hpp"

/// Binary array container shared by masks, datasets and checkpoints.
///
///   bytes 0-7   magic "OTCGARR\0"
///   byte  8     dtype (1 = float32, 2 = float64)
///   byte  9     rank
///   bytes 10-15 reserved, zero
///   rank x u64  dims
///   data        little-endian, row-major
///
/// Metadata goes to a JSON sidecar next to the file ("<name>.json").
namespace otcg::io {

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

struct Array {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

void write_array(const std::filesystem::path& path, const Array& a, DType dtype = DType::f64);
Array read_array(const std::filesystem::path& path);

/// Rank-4 NCHW.
void write_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::f64);
Tensor read_tensor(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);
void write_sidecar(const std::filesystem::path& path, const nlohmann::json& meta);
/// Empty object when there is no sidecar.
nlohmann::json read_sidecar(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace otcg::io
