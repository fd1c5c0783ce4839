#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gramnet/train.hpp"

namespace gramnet::io {

// Binary image container:
//   magic "GAF1" | u32 version | u32 count | u32 n | u8 num_classes
//   | num_classes tag bytes in index order
//   | count x ( u8 label, n*n float32 little-endian row-major )
// Payload is exactly count * (1 + 4*n*n) bytes.
constexpr std::uint32_t kArchiveVersion = 1;

void write_archive(const std::filesystem::path& path, const train::Dataset& dataset);
train::Dataset read_archive(const std::filesystem::path& path);

} // namespace gramnet::io
