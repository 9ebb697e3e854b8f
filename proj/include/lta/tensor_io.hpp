#pragma once

#include <filesystem>
#include <iosfwd>

#include "lta/tensor.hpp"

namespace lta {

// Binary tensor container, format "LTA1":
//   bytes 0..3   magic "LTA1"
//   u32 LE       rank (1..8)
//   u32 LE * r   dims
//   f32 LE * n   row-major payload
// Round-trips bit-exactly. Reader rejects bad magic, truncated payloads,
// trailing bytes and dim products that overflow.
void write_tensor(const Tensor& t, std::ostream& os);
void write_tensor(const Tensor& t, const std::filesystem::path& path);

Tensor read_tensor(std::istream& is);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace lta
