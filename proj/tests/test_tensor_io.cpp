#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cra/error.hpp"
#include "cra/rng.hpp"
#include "cra/tensor.hpp"
#include "cra/tensor_io.hpp"

using namespace cra;

namespace {

std::filesystem::path tmp_file(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "cra_io_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("float64 round trip is bit-exact, including the file bytes") {
    Rng rng(1234);
    std::vector<double> data(2 * 3 * 4);
    for (auto& v : data) v = rng.normal(0.0, 10.0);
    data[0] = -0.0;
    const Tensor t = Tensor::from_data({2, 3, 4}, data);
    const auto p1 = tmp_file("a.crat");
    const auto p2 = tmp_file("b.crat");
    save_crat(p1, t);
    const Tensor back = load_crat(p1);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < data.size(); ++i) {
        // bitwise, not approximate
        CHECK(std::memcmp(&back.values()[i], &data[i], sizeof(double)) == 0);
    }
    save_crat(p2, back);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("header layout: magic, version, dtype, dims") {
    const Tensor t = Tensor::from_data({2, 5}, std::vector<double>(10, 1.5));
    const auto p = tmp_file("hdr.crat");
    save_crat(p, t);
    const auto bytes = slurp(p);
    REQUIRE(bytes.size() == 4 + 4 + 1 + 4 + 2 * 4 + 10 * 8);
    CHECK(bytes[0] == 0x43);  // C
    CHECK(bytes[1] == 0x52);  // R
    CHECK(bytes[2] == 0x41);  // A
    CHECK(bytes[3] == 0x54);  // T
    CHECK(bytes[4] == 1);     // version u32-le
    CHECK(bytes[8] == 0);     // dtype f64
    CHECK(bytes[9] == 2);     // ndim u32-le
    CHECK(bytes[13] == 2);    // dim0
    CHECK(bytes[17] == 5);    // dim1
}

TEST_CASE("float32 payloads load and re-save identically") {
    Rng rng(99);
    std::vector<double> data(6);
    for (auto& v : data) v = rng.uniform(-2.0, 2.0);
    const Tensor t = Tensor::from_data({6}, data);
    const auto p1 = tmp_file("f32a.crat");
    const auto p2 = tmp_file("f32b.crat");
    save_crat(p1, t, CratDtype::F32);
    const Tensor back = load_crat(p1);
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back.values()[i] ==
              doctest::Approx(data[i]).epsilon(1e-6));  // f32 precision
    }
    save_crat(p2, back, CratDtype::F32);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("corrupt magic and truncation are rejected") {
    const auto p = tmp_file("bad.crat");
    {
        std::ofstream os(p, std::ios::binary | std::ios::trunc);
        os << "NOPE" << std::string(40, '\0');
    }
    CHECK_THROWS_AS(load_crat(p), IoError);

    const auto q = tmp_file("trunc.crat");
    save_crat(q, Tensor::from_data({4}, {1, 2, 3, 4}));
    const auto bytes = slurp(q);
    {
        std::ofstream os(q, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
    }
    CHECK_THROWS_AS(load_crat(q), IoError);

    CHECK_THROWS_AS(load_crat(tmp_file("missing.crat")), IoError);
}
