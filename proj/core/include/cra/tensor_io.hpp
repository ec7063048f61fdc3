#pragma once

#include <filesystem>

#include "cra/tensor.hpp"

namespace cra {

// CRAT tensor container.
// Layout: magic 'C' 'R' 'A' 'T', u32-le version (=1), u8 dtype
// (0 = float64-le, 1 = float32-le), u32-le ndim, ndim x u32-le dims,
// then the row-major payload. float64 round-trips bit-exactly.
enum class CratDtype : std::uint8_t { F64 = 0, F32 = 1 };

void save_crat(const std::filesystem::path& path, const Tensor& t,
               CratDtype dtype = CratDtype::F64);
Tensor load_crat(const std::filesystem::path& path);

}  // namespace cra
