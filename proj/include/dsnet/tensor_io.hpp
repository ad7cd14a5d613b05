#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsnet/errors.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet {

// Raw tensor dump: "DST1", four little-endian uint32 dims (N, C, H, W),
// then N*C*H*W little-endian float64 values in row-major order.

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace dsnet
