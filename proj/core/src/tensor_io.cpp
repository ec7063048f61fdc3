#include "cra/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "cra/error.hpp"

namespace cra {

namespace {

static_assert(std::endian::native == std::endian::little,
              "CRAT I/O assumes a little-endian host");

constexpr char kMagic[4] = {0x43, 0x52, 0x41, 0x54};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

void save_crat(const std::filesystem::path& path, const Tensor& t, CratDtype dtype) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("save_crat: cannot open " + path.string() + " for writing");
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    const std::uint8_t dt = static_cast<std::uint8_t>(dtype);
    os.write(reinterpret_cast<const char*>(&dt), 1);
    const auto& shape = t.shape();
    write_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) write_u32(os, static_cast<std::uint32_t>(d));
    const auto vals = t.values();
    if (dtype == CratDtype::F64) {
        os.write(reinterpret_cast<const char*>(vals.data()),
                 static_cast<std::streamsize>(vals.size() * sizeof(double)));
    } else {
        std::vector<float> f(vals.begin(), vals.end());
        os.write(reinterpret_cast<const char*>(f.data()),
                 static_cast<std::streamsize>(f.size() * sizeof(float)));
    }
    if (!os) throw IoError("save_crat: write failed for " + path.string());
}

Tensor load_crat(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_crat: cannot open " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("load_crat: bad magic in " + path.string());
    }
    const std::uint32_t version = read_u32(is);
    if (version != kVersion) {
        throw IoError("load_crat: unsupported version " + std::to_string(version) +
                      " in " + path.string());
    }
    std::uint8_t dt = 0;
    is.read(reinterpret_cast<char*>(&dt), 1);
    if (dt > 1) throw IoError("load_crat: unknown dtype code in " + path.string());
    const std::uint32_t ndim = read_u32(is);
    if (ndim > 8) throw IoError("load_crat: implausible ndim in " + path.string());
    Shape shape(ndim);
    for (auto& d : shape) d = read_u32(is);
    const std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    if (dt == 0) {
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
    } else {
        std::vector<float> f(n);
        is.read(reinterpret_cast<char*>(f.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        std::copy(f.begin(), f.end(), data.begin());
    }
    if (!is) throw IoError("load_crat: truncated payload in " + path.string());
    return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace cra
