#pragma once

#include <filesystem>
#include <iosfwd>

#include "advkit/tensor.hpp"

// Binary tensor format, little-endian: "TNSR", u32 rank, u32 dims[rank],
// then numel real32 values. Real64 builds narrow to real32 on write.

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
