#pragma once

#include <string>

#include "frn/dataset.hpp"

namespace frn {

/// Feature-tensor container, see docs/formats.md.
///
///   offset 0   8 bytes  magic "FRNTNSR\0"
///          8   u32      version (1)
///         12   u32      dtype tag (1 = f32, 2 = f64)
///         16   u32      rank (3)
///         20   u32[3]   dims: items, r, d
///         32   payload  items*r*d values, row-major, little-endian
///        end   u32      CRC32 of every preceding byte
///
/// Labels live in a sidecar CSV (`<path>.csv`) with header
/// `item_index,class_id` and one row per item.
inline constexpr char kTensorMagic[8] = {'F', 'R', 'N', 'T', 'N', 'S', 'R', '\0'};
inline constexpr std::uint32_t kTensorVersion = 1;

enum class DType : std::uint32_t { f32 = 1, f64 = 2 };

std::string manifest_path(const std::string& tensor_path);

/// Items are written class by class in dataset order.
void write_dataset(const std::string& path, const Dataset& ds, DType dtype = DType::f64);

/// Reads the container and its manifest. Classes appear in order of first
/// occurrence in the manifest.
Dataset ingest(const std::string& path);

}  // namespace frn
