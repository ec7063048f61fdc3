#include <doctest.h>

#include <cmath>

#include "cra/error.hpp"
#include "cra/rng.hpp"
#include "cra/tensor.hpp"

using namespace cra;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(v));
}

// Values bounded away from zero so relu stays FD-friendly.
Tensor random_nonzero(Rng& rng, Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        const double mag = rng.uniform(0.2, 1.2);
        x = rng.uniform() < 0.5 ? -mag : mag;
    }
    return Tensor::from_data(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("relu matches its definition") {
    const Tensor x = Tensor::from_data({3}, {-1.0, 0.0, 2.0});
    const Tensor y = relu(x);
    CHECK(y.values()[0] == 0.0);
    CHECK(y.values()[1] == 0.0);
    CHECK(y.values()[2] == 2.0);
}

TEST_CASE("softmax of equal logits is uniform and normalized") {
    const std::size_t k = 19;
    const Tensor z = Tensor::full({1, k, 2, 2}, 0.37);
    const Tensor p = softmax_channels(z);
    for (double v : p.values()) CHECK(v == doctest::Approx(1.0 / 19.0).epsilon(1e-12));
    const auto pv = p.values();
    for (std::size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) s += pv[c * 4 + i];
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("conv2d with identity 1x1 kernel is the identity") {
    Rng rng(7);
    const Tensor x = random_tensor(rng, {2, 3, 5, 4});
    std::vector<double> w(3 * 3, 0.0);
    for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
    const Tensor kernel = Tensor::from_data({3, 3, 1, 1}, std::move(w));
    const Tensor y = conv2d(x, kernel);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("conv2d with zero kernel returns zeros") {
    Rng rng(8);
    const Tensor x = random_tensor(rng, {1, 2, 6, 6});
    const Tensor kernel = Tensor::zeros({4, 2, 3, 3});
    const Tensor y = conv2d(x, kernel);
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("conv2d against a direct nested-loop evaluation") {
    Rng rng(9);
    const std::size_t B = 1, Ci = 2, Co = 3, H = 5, W = 4;
    const Tensor x = random_tensor(rng, {B, Ci, H, W});
    const Tensor w = random_tensor(rng, {Co, Ci, 3, 3});
    const Tensor b = random_tensor(rng, {Co});
    const Tensor y = conv2d(x, w, b);
    const auto xv = x.values();
    const auto wv = w.values();
    for (std::size_t oc = 0; oc < Co; ++oc)
        for (std::size_t yy = 0; yy < H; ++yy)
            for (std::size_t xx = 0; xx < W; ++xx) {
                double acc = b.values()[oc];
                for (std::size_t ic = 0; ic < Ci; ++ic)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sy = static_cast<int>(yy) + ky - 1;
                            const int sx = static_cast<int>(xx) + kx - 1;
                            if (sy < 0 || sy >= static_cast<int>(H) || sx < 0 ||
                                sx >= static_cast<int>(W))
                                continue;
                            acc += wv[((oc * Ci + ic) * 3 + ky) * 3 + kx] *
                                   xv[(ic * H + sy) * W + sx];
                        }
                CHECK(y.values()[(oc * H + yy) * W + xx] ==
                      doctest::Approx(acc).epsilon(1e-12));
            }
}

TEST_CASE("backward of sum gives all-ones gradient") {
    Rng rng(10);
    Tensor w = random_tensor(rng, {2, 3});
    w.set_requires_grad(true);
    backward(sum(w));
    for (double g : w.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of mean(w*w) for w=[3] gives [6]") {
    Tensor w = Tensor::from_data({1}, {3.0}, true);
    backward(mean(mul(w, w)));
    CHECK(w.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("leaf gradients accumulate across backward calls until zeroed") {
    Tensor w = Tensor::from_data({2}, {1.0, 2.0}, true);
    backward(sum(w));
    backward(sum(w));
    CHECK(w.grad()[0] == 2.0);
    CHECK(w.grad()[1] == 2.0);
    w.zero_grad();
    backward(sum(w));
    CHECK(w.grad()[0] == 1.0);
}

TEST_CASE("backward is deterministic on identical graphs") {
    Rng rng(11);
    Tensor x = random_tensor(rng, {2, 4, 6, 6});
    x.set_requires_grad(true);
    const Tensor w = random_tensor(rng, {3, 4, 3, 3});
    auto build = [&] {
        return sum(mul(softmax_channels(conv2d(x, w)), relu(conv2d(x, w))));
    };
    backward(build());
    std::vector<double> g1(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(build());
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(x.grad()[i] == g1[i]);
}

TEST_CASE("backward requires a scalar loss") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(mul(x, x)), ShapeError);
}

TEST_CASE("gradient checks per op on seeded random inputs") {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        Rng rng(Rng::derive(0x0bc1, trial));
        const Tensor a = random_tensor(rng, {2, 3, 4, 4});
        const Tensor b = random_tensor(rng, {2, 3, 4, 4});
        const Tensor mask = random_tensor(rng, {2, 1, 4, 4});
        const Tensor kern = random_tensor(rng, {4, 3, 3, 3}, -0.5, 0.5);
        const Tensor kern1 = random_tensor(rng, {4, 3, 1, 1}, -0.5, 0.5);
        const Tensor bias = random_tensor(rng, {4});
        const Tensor m2 = random_tensor(rng, {3, 5});
        const Tensor positive = random_tensor(rng, {2, 3, 4, 4}, 0.2, 2.0);

        CHECK(grad_check([&](const Tensor& t) { return sum(add(t, b)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(mul(t, b)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(mul(t, mask)); }, a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(mul(a, t)); }, mask) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(scale(t, -2.5)); }, a) <
              1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(matmul(t, m2)); },
                         random_tensor(rng, {4, 3})) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(matmul(m2, t)); },
                         random_tensor(rng, {5, 2})) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(conv2d(t, kern, bias)); },
                         a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(conv2d(a, t, bias)); },
                         kern) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(conv2d(a, kern1, t)); },
                         bias) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(conv2d(t, kern1)); }, a) <
              1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(relu(t)); },
                         random_nonzero(rng, {2, 3, 4, 4})) < 1e-4);
        CHECK(grad_check(
                  [&](const Tensor& t) { return sum(mul(b, softmax_channels(t))); },
                  a) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(log(t)); }, positive) <
              1e-4);
        CHECK(grad_check([&](const Tensor& t) { return sum(clamped_log(t)); },
                         positive) < 1e-4);
        CHECK(grad_check([&](const Tensor& t) { return mean(mul(t, t)); }, a) < 1e-4);
        CHECK(grad_check(
                  [&](const Tensor& t) { return sum(mul(mask, sum_channels(t))); },
                  a) < 1e-4);
        CHECK(grad_check(
                  [&](const Tensor& t) {
                      return sum(mul(reshape(t, {2, 48}), reshape(b, {2, 48})));
                  },
                  a) < 1e-4);
    }
}

TEST_CASE("shape errors name the op and both shapes") {
    const Tensor x = Tensor::zeros({2, 4, 8, 8});
    const Tensor w = Tensor::zeros({16, 3, 3, 3});
    try {
        conv2d(x, w);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("conv2d") != std::string::npos);
        CHECK(msg.find("[2, 4, 8, 8]") != std::string::npos);
        CHECK(msg.find("[16, 3, 3, 3]") != std::string::npos);
    }
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), ShapeError);
    CHECK_THROWS_AS(add(Tensor::zeros({2, 2}), Tensor::zeros({3, 2})), ShapeError);
    CHECK_THROWS_AS(reshape(Tensor::zeros({4}), {3}), ShapeError);
}

TEST_CASE("checked mode rejects non-finite values at op boundaries") {
    REQUIRE(checked());
    CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), NumericalError);
    const Tensor zero = Tensor::zeros({2});
    CHECK_THROWS_AS(log(zero), NumericalError);  // log(0) = -inf
    CHECK(clamped_log(zero).values()[0] == doctest::Approx(std::log(1e-12)));
    set_checked(false);
    const Tensor inf_log = log(zero);
    CHECK(std::isinf(inf_log.values()[0]));
    set_checked(true);
}

TEST_CASE("detach produces a gradient-isolated leaf") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    const Tensor frozen = mul(x, x).detach();
    CHECK_FALSE(frozen.requires_grad());
    backward(sum(mul(frozen, x)));
    // gradient flows only through the explicit x factor
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("grad_check is exact for linear functions") {
    Rng rng(12);
    const Tensor x = random_tensor(rng, {3, 3});
    CHECK(grad_check([](const Tensor& t) { return sum(t); }, x) < 1e-9);
}
