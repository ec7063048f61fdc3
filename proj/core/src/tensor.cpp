#include "cra/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "cra/error.hpp"

namespace cra {

namespace {

std::atomic<bool> g_checked{true};

void check_finite(const char* op, const std::vector<double>& v) {
    if (!g_checked.load(std::memory_order_relaxed)) return;
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericalError(std::string("op '") + op +
                                 "' produced a non-finite value");
        }
    }
}

using NodePtr = std::shared_ptr<detail::Node>;

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return n;
}

NodePtr make_op_node(const char* op, Shape shape, std::vector<double> value,
                     std::vector<NodePtr> inputs) {
    check_finite(op, value);
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    n->inputs = std::move(inputs);
    for (const auto& in : n->inputs) {
        if (in->requires_grad) n->requires_grad = true;
    }
    return n;
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ValueError(std::string(op) + ": undefined tensor argument");
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                     shape_str(b) + " do not conform");
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void set_checked(bool on) { g_checked.store(on, std::memory_order_relaxed); }
bool checked() { return g_checked.load(std::memory_order_relaxed); }

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    if (!std::isfinite(v) && checked()) {
        throw NumericalError("Tensor::full: non-finite fill value");
    }
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("Tensor::from_data: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    }
    check_finite("from_data", data);
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

const Shape& Tensor::shape() const {
    if (!node_) throw ValueError("shape(): undefined tensor");
    return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->size() : 0; }
std::size_t Tensor::ndim() const { return shape().size(); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double Tensor::item() const {
    if (size() != 1) {
        throw ShapeError("item(): tensor of shape " + shape_str(shape()) +
                         " is not a scalar");
    }
    return node_->value[0];
}

std::span<const double> Tensor::values() const {
    if (!node_) throw ValueError("values(): undefined tensor");
    return node_->value;
}

std::span<double> Tensor::values_mut() {
    if (!node_) throw ValueError("values_mut(): undefined tensor");
    return node_->value;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ValueError("grad(): no gradient buffer present");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_) throw ValueError("zero_grad(): undefined tensor");
    node_->grad.assign(node_->value.size(), 0.0);
}

void Tensor::clear_grad() {
    if (node_) node_->grad.clear();
}

void Tensor::set_requires_grad(bool on) {
    if (!node_) throw ValueError("set_requires_grad(): undefined tensor");
    node_->requires_grad = on;
}

Tensor Tensor::detach() const {
    if (!node_) throw ValueError("detach(): undefined tensor");
    return Tensor(make_leaf(node_->shape, node_->value, false));
}

Tensor Tensor::clone() const {
    if (!node_) throw ValueError("clone(): undefined tensor");
    return Tensor(make_leaf(node_->shape, node_->value, node_->requires_grad));
}

// ---- elementwise ops ----------------------------------------------------

namespace {

// Classifies the operand pair for mul/add: equal shapes, or a [B,1,H,W]
// pixel map broadcast across the channels of a [B,C,H,W] stack.
enum class PairKind { Equal, BroadcastB, BroadcastA };

PairKind classify_pair(const char* op, const Shape& a, const Shape& b) {
    if (a == b) return PairKind::Equal;
    auto chan_broadcast = [](const Shape& big, const Shape& small) {
        return big.size() == 4 && small.size() == 4 && small[1] == 1 &&
               big[0] == small[0] && big[2] == small[2] && big[3] == small[3];
    };
    if (chan_broadcast(a, b)) return PairKind::BroadcastB;
    if (chan_broadcast(b, a)) return PairKind::BroadcastA;
    shape_fail(op, a, b);
}

// index mapping for the broadcast operand
inline std::size_t bcast_index(std::size_t i, std::size_t chw, std::size_t hw) {
    // i indexes [B,C,H,W]; the broadcast side is [B,1,H,W]
    const std::size_t b = i / chw;
    const std::size_t rem = i % chw;
    return b * hw + rem % hw;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_defined(a, "add");
    require_defined(b, "add");
    const PairKind kind = classify_pair("add", a.shape(), b.shape());
    const auto& big = (kind == PairKind::BroadcastA) ? b : a;
    const auto& small = (kind == PairKind::BroadcastA) ? a : b;
    const auto& bv = big.values();
    const auto& sv = small.values();
    std::vector<double> out(bv.size());
    if (kind == PairKind::Equal) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = bv[i] + sv[i];
    } else {
        const std::size_t chw = big.shape()[1] * big.shape()[2] * big.shape()[3];
        const std::size_t hw = big.shape()[2] * big.shape()[3];
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = bv[i] + sv[bcast_index(i, chw, hw)];
    }
    auto n = make_op_node("add", big.shape(), std::move(out), {a.node(), b.node()});
    const bool need_a = a.node()->requires_grad;
    const bool need_b = b.node()->requires_grad;
    n->backward_fn = [need_a, need_b, kind](detail::Node& self) {
        auto scatter = [&](const NodePtr& dst, bool broadcast) {
            dst->ensure_grad();
            if (!broadcast) {
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    dst->grad[i] += self.grad[i];
            } else {
                const std::size_t chw = self.shape[1] * self.shape[2] * self.shape[3];
                const std::size_t hw = self.shape[2] * self.shape[3];
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    dst->grad[bcast_index(i, chw, hw)] += self.grad[i];
            }
        };
        if (need_a) scatter(self.inputs[0], kind == PairKind::BroadcastA);
        if (need_b) scatter(self.inputs[1], kind == PairKind::BroadcastB);
    };
    return Tensor(std::move(n));
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
    require_defined(a, "mul");
    require_defined(b, "mul");
    const PairKind kind = classify_pair("mul", a.shape(), b.shape());
    const auto& big = (kind == PairKind::BroadcastA) ? b : a;
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(big.size());
    const std::size_t chw =
        big.ndim() == 4 ? big.shape()[1] * big.shape()[2] * big.shape()[3] : 0;
    const std::size_t hw = big.ndim() == 4 ? big.shape()[2] * big.shape()[3] : 0;
    if (kind == PairKind::Equal) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    } else if (kind == PairKind::BroadcastB) {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = av[i] * bv[bcast_index(i, chw, hw)];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = av[bcast_index(i, chw, hw)] * bv[i];
    }
    auto n = make_op_node("mul", big.shape(), std::move(out), {a.node(), b.node()});
    const bool need_a = a.node()->requires_grad;
    const bool need_b = b.node()->requires_grad;
    n->backward_fn = [need_a, need_b, kind, chw, hw](detail::Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        auto scatter = [&](const NodePtr& dst, const std::vector<double>& other,
                           bool dst_bcast, bool other_bcast) {
            dst->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double o =
                    other_bcast ? other[bcast_index(i, chw, hw)] : other[i];
                const std::size_t di = dst_bcast ? bcast_index(i, chw, hw) : i;
                dst->grad[di] += self.grad[i] * o;
            }
        };
        if (need_a)
            scatter(self.inputs[0], bv, kind == PairKind::BroadcastA,
                    kind == PairKind::BroadcastB);
        if (need_b)
            scatter(self.inputs[1], av, kind == PairKind::BroadcastB,
                    kind == PairKind::BroadcastA);
    };
    return Tensor(std::move(n));
}

Tensor scale(const Tensor& a, double c) {
    require_defined(a, "scale");
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    auto n = make_op_node("scale", a.shape(), std::move(out), {a.node()});
    const bool need = a.node()->requires_grad;
    n->backward_fn = [need, c](detail::Node& self) {
        if (!need) return;
        auto& in = self.inputs[0];
        in->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            in->grad[i] += c * self.grad[i];
    };
    return Tensor(std::move(n));
}

Tensor relu(const Tensor& a) {
    require_defined(a, "relu");
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    auto n = make_op_node("relu", a.shape(), std::move(out), {a.node()});
    const bool need = a.node()->requires_grad;
    n->backward_fn = [need](detail::Node& self) {
        if (!need) return;
        auto& in = self.inputs[0];
        in->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (in->value[i] > 0.0) in->grad[i] += self.grad[i];
    };
    return Tensor(std::move(n));
}

Tensor log(const Tensor& a) {
    require_defined(a, "log");
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(av[i]);
    auto n = make_op_node("log", a.shape(), std::move(out), {a.node()});
    const bool need = a.node()->requires_grad;
    n->backward_fn = [need](detail::Node& self) {
        if (!need) return;
        auto& in = self.inputs[0];
        in->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            in->grad[i] += self.grad[i] / in->value[i];
    };
    return Tensor(std::move(n));
}

Tensor clamped_log(const Tensor& a, double eps) {
    require_defined(a, "clamped_log");
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::log(av[i] > eps ? av[i] : eps);
    auto n = make_op_node("clamped_log", a.shape(), std::move(out), {a.node()});
    const bool need = a.node()->requires_grad;
    n->backward_fn = [need, eps](detail::Node& self) {
        if (!need) return;
        auto& in = self.inputs[0];
        in->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (in->value[i] > eps) in->grad[i] += self.grad[i] / in->value[i];
    };
    return Tensor(std::move(n));
}

Tensor sum(const Tensor& a) {
    require_defined(a, "sum");
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    auto n = make_op_node("sum", {1}, {acc}, {a.node()});
    const bool need = a.node()->requires_grad;
    n->backward_fn = [need](detail::Node& self) {
        if (!need) return;
        auto& in = self.inputs[0];
        in->ensure_grad();
        const double g = self.grad[0];
        for (auto& gi : in->grad) gi += g;
    };
    return Tensor(std::move(n));
}

Tensor mean(const Tensor& a) {
    require_defined(a, "mean");
    if (a.size() == 0) throw ShapeError("mean: empty tensor");
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    const double inv_n = 1.0 / static_cast<double>(a.size());
    auto n = make_op_node("mean", {1}, {acc * inv_n}, {a.node()});
    const bool need = a.node()->requires_grad;
    n->backward_fn = [need, inv_n](detail::Node& self) {
        if (!need) return;
        auto& in = self.inputs[0];
        in->ensure_grad();
        const double g = self.grad[0] * inv_n;
        for (auto& gi : in->grad) gi += g;
    };
    return Tensor(std::move(n));
}

Tensor sum_channels(const Tensor& a) {
    require_defined(a, "sum_channels");
    if (a.ndim() != 4) {
        throw ShapeError("sum_channels: expected [B,C,H,W], got " + shape_str(a.shape()));
    }
    const auto& s = a.shape();
    const std::size_t B = s[0], C = s[1], HW = s[2] * s[3];
    std::vector<double> out(B * HW, 0.0);
    const auto& av = a.values();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double* src = av.data() + (b * C + c) * HW;
            double* dst = out.data() + b * HW;
            for (std::size_t i = 0; i < HW; ++i) dst[i] += src[i];
        }
    auto n = make_op_node("sum_channels", {B, 1, s[2], s[3]}, std::move(out), {a.node()});
    const bool need = a.node()->requires_grad;
    n->backward_fn = [need, B, C, HW](detail::Node& self) {
        if (!need) return;
        auto& in = self.inputs[0];
        in->ensure_grad();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                double* dst = in->grad.data() + (b * C + c) * HW;
                const double* src = self.grad.data() + b * HW;
                for (std::size_t i = 0; i < HW; ++i) dst[i] += src[i];
            }
    };
    return Tensor(std::move(n));
}

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined(a, "reshape");
    if (shape_numel(shape) != a.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape) + " (element counts differ)");
    }
    std::vector<double> out(a.values().begin(), a.values().end());
    auto n = make_op_node("reshape", std::move(shape), std::move(out), {a.node()});
    const bool need = a.node()->requires_grad;
    n->backward_fn = [need](detail::Node& self) {
        if (!need) return;
        auto& in = self.inputs[0];
        in->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            in->grad[i] += self.grad[i];
    };
    return Tensor(std::move(n));
}

Tensor softmax_channels(const Tensor& z) {
    require_defined(z, "softmax_channels");
    if (z.ndim() < 2) {
        throw ShapeError("softmax_channels: expected [N,C,...], got " +
                         shape_str(z.shape()));
    }
    const auto& s = z.shape();
    const std::size_t N = s[0], C = s[1];
    std::size_t inner = 1;
    for (std::size_t d = 2; d < s.size(); ++d) inner *= s[d];
    const auto& zv = z.values();
    std::vector<double> out(zv.size());
    for (std::size_t n0 = 0; n0 < N; ++n0) {
        const std::size_t base = n0 * C * inner;
        for (std::size_t i = 0; i < inner; ++i) {
            double mx = zv[base + i];
            for (std::size_t c = 1; c < C; ++c)
                mx = std::max(mx, zv[base + c * inner + i]);
            double denom = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                const double e = std::exp(zv[base + c * inner + i] - mx);
                out[base + c * inner + i] = e;
                denom += e;
            }
            const double inv = 1.0 / denom;
            for (std::size_t c = 0; c < C; ++c) out[base + c * inner + i] *= inv;
        }
    }
    auto n = make_op_node("softmax_channels", s, std::move(out), {z.node()});
    const bool need = z.node()->requires_grad;
    n->backward_fn = [need, N, C, inner](detail::Node& self) {
        if (!need) return;
        auto& in = self.inputs[0];
        in->ensure_grad();
        const auto& p = self.value;
        const auto& g = self.grad;
        for (std::size_t n0 = 0; n0 < N; ++n0) {
            const std::size_t base = n0 * C * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                double dot = 0.0;
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t k = base + c * inner + i;
                    dot += g[k] * p[k];
                }
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t k = base + c * inner + i;
                    in->grad[k] += p[k] * (g[k] - dot);
                }
            }
        }
    };
    return Tensor(std::move(n));
}

// ---- matmul -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
        shape_fail("matmul", a.shape(), b.shape());
    }
    const std::size_t M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(M * N, 0.0);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
            const double aik = av[i * K + k];
            const double* brow = bv.data() + k * N;
            double* orow = out.data() + i * N;
            for (std::size_t j = 0; j < N; ++j) orow[j] += aik * brow[j];
        }
    auto n = make_op_node("matmul", {M, N}, std::move(out), {a.node(), b.node()});
    const bool need_a = a.node()->requires_grad;
    const bool need_b = b.node()->requires_grad;
    n->backward_fn = [need_a, need_b, M, K, N](detail::Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        const auto& g = self.grad;
        if (need_a) {
            auto& in = self.inputs[0];
            in->ensure_grad();
            // dA = g . B^T
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    double acc = 0.0;
                    const double* grow = g.data() + i * N;
                    const double* brow = bv.data() + k * N;
                    for (std::size_t j = 0; j < N; ++j) acc += grow[j] * brow[j];
                    in->grad[i * K + k] += acc;
                }
        }
        if (need_b) {
            auto& in = self.inputs[1];
            in->ensure_grad();
            // dB = A^T . g
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t i = 0; i < M; ++i) {
                    const double aik = av[i * K + k];
                    const double* grow = g.data() + i * N;
                    double* drow = in->grad.data() + k * N;
                    for (std::size_t j = 0; j < N; ++j) drow[j] += aik * grow[j];
                }
        }
    };
    return Tensor(std::move(n));
}

// ---- conv2d -------------------------------------------------------------

namespace {

struct ConvDims {
    std::size_t B, Cin, H, W, Cout, k;
    std::ptrdiff_t pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w) {
    if (x.ndim() != 4) {
        throw ShapeError("conv2d: input must be [B,C,H,W], got " + shape_str(x.shape()));
    }
    if (w.ndim() != 4 || w.shape()[2] != w.shape()[3] ||
        (w.shape()[2] != 1 && w.shape()[2] != 3)) {
        throw ShapeError("conv2d: kernel must be [Cout,Cin,k,k] with k in {1,3}, got " +
                         shape_str(w.shape()));
    }
    if (x.shape()[1] != w.shape()[1]) {
        throw ShapeError("conv2d: input channels " + std::to_string(x.shape()[1]) +
                         " do not match kernel channels " + std::to_string(w.shape()[1]) +
                         " (input " + shape_str(x.shape()) + ", kernel " +
                         shape_str(w.shape()) + ")");
    }
    ConvDims d;
    d.B = x.shape()[0];
    d.Cin = x.shape()[1];
    d.H = x.shape()[2];
    d.W = x.shape()[3];
    d.Cout = w.shape()[0];
    d.k = w.shape()[2];
    d.pad = static_cast<std::ptrdiff_t>(d.k / 2);
    return d;
}

// out[y][x] += wv * in[y+dy][x+dx] over the in-bounds window.
inline void shifted_axpy(double wv, const double* in, double* out, std::size_t H,
                         std::size_t W, std::ptrdiff_t dy, std::ptrdiff_t dx) {
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(H);
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(W);
    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
    const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(h, h - dy);
    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, w - dx);
    for (std::ptrdiff_t y = y0; y < y1; ++y) {
        double* orow = out + y * w;
        const double* irow = in + (y + dy) * w + dx;
        for (std::ptrdiff_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
    }
}

// dot of out-plane row windows: sum over valid (y,x) of a[y][x] * b[y+dy][x+dx].
inline double shifted_dot(const double* a, const double* b, std::size_t H,
                          std::size_t W, std::ptrdiff_t dy, std::ptrdiff_t dx) {
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(H);
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(W);
    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
    const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(h, h - dy);
    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, w - dx);
    double acc = 0.0;
    for (std::ptrdiff_t y = y0; y < y1; ++y) {
        const double* arow = a + y * w;
        const double* brow = b + (y + dy) * w + dx;
        for (std::ptrdiff_t x = x0; x < x1; ++x) acc += arow[x] * brow[x];
    }
    return acc;
}

Tensor conv2d_impl(const Tensor& x, const Tensor& w, const Tensor* bias) {
    const ConvDims d = conv_dims(x, w);
    if (bias && (bias->ndim() != 1 || bias->shape()[0] != d.Cout)) {
        throw ShapeError("conv2d: bias must be [Cout] = [" + std::to_string(d.Cout) +
                         "], got " + shape_str(bias->shape()));
    }
    const std::size_t HW = d.H * d.W;
    const auto& xv = x.values();
    const auto& wv = w.values();
    std::vector<double> out(d.B * d.Cout * HW, 0.0);
    for (std::size_t b = 0; b < d.B; ++b) {
        for (std::size_t oc = 0; oc < d.Cout; ++oc) {
            double* oplane = out.data() + (b * d.Cout + oc) * HW;
            if (bias) {
                const double bv = bias->values()[oc];
                for (std::size_t i = 0; i < HW; ++i) oplane[i] = bv;
            }
            for (std::size_t ic = 0; ic < d.Cin; ++ic) {
                const double* iplane = xv.data() + (b * d.Cin + ic) * HW;
                const double* wbase = wv.data() + (oc * d.Cin + ic) * d.k * d.k;
                for (std::size_t ky = 0; ky < d.k; ++ky)
                    for (std::size_t kx = 0; kx < d.k; ++kx) {
                        shifted_axpy(wbase[ky * d.k + kx], iplane, oplane, d.H, d.W,
                                     static_cast<std::ptrdiff_t>(ky) - d.pad,
                                     static_cast<std::ptrdiff_t>(kx) - d.pad);
                    }
            }
        }
    }
    std::vector<NodePtr> inputs{x.node(), w.node()};
    if (bias) inputs.push_back(bias->node());
    auto n = make_op_node("conv2d", {d.B, d.Cout, d.H, d.W}, std::move(out),
                          std::move(inputs));
    const bool need_x = x.node()->requires_grad;
    const bool need_w = w.node()->requires_grad;
    const bool need_b = bias && bias->node()->requires_grad;
    n->backward_fn = [need_x, need_w, need_b, d, HW](detail::Node& self) {
        const auto& xv = self.inputs[0]->value;
        const auto& wv = self.inputs[1]->value;
        const auto& g = self.grad;
        if (need_x) {
            auto& in = self.inputs[0];
            in->ensure_grad();
            for (std::size_t b = 0; b < d.B; ++b)
                for (std::size_t ic = 0; ic < d.Cin; ++ic) {
                    double* dplane = in->grad.data() + (b * d.Cin + ic) * HW;
                    for (std::size_t oc = 0; oc < d.Cout; ++oc) {
                        const double* gplane = g.data() + (b * d.Cout + oc) * HW;
                        const double* wbase = wv.data() + (oc * d.Cin + ic) * d.k * d.k;
                        for (std::size_t ky = 0; ky < d.k; ++ky)
                            for (std::size_t kx = 0; kx < d.k; ++kx) {
                                // transpose of the forward shift
                                shifted_axpy(wbase[ky * d.k + kx], gplane, dplane, d.H,
                                             d.W,
                                             d.pad - static_cast<std::ptrdiff_t>(ky),
                                             d.pad - static_cast<std::ptrdiff_t>(kx));
                            }
                    }
                }
        }
        if (need_w) {
            auto& wn = self.inputs[1];
            wn->ensure_grad();
            for (std::size_t oc = 0; oc < d.Cout; ++oc)
                for (std::size_t ic = 0; ic < d.Cin; ++ic) {
                    double* dw = wn->grad.data() + (oc * d.Cin + ic) * d.k * d.k;
                    for (std::size_t b = 0; b < d.B; ++b) {
                        const double* gplane = g.data() + (b * d.Cout + oc) * HW;
                        const double* iplane = xv.data() + (b * d.Cin + ic) * HW;
                        for (std::size_t ky = 0; ky < d.k; ++ky)
                            for (std::size_t kx = 0; kx < d.k; ++kx) {
                                dw[ky * d.k + kx] += shifted_dot(
                                    gplane, iplane, d.H, d.W,
                                    static_cast<std::ptrdiff_t>(ky) - d.pad,
                                    static_cast<std::ptrdiff_t>(kx) - d.pad);
                            }
                    }
                }
        }
        if (need_b) {
            auto& bn = self.inputs[2];
            bn->ensure_grad();
            for (std::size_t b = 0; b < d.B; ++b)
                for (std::size_t oc = 0; oc < d.Cout; ++oc) {
                    const double* gplane = g.data() + (b * d.Cout + oc) * HW;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < HW; ++i) acc += gplane[i];
                    bn->grad[oc] += acc;
                }
        }
    };
    return Tensor(std::move(n));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w) { return conv2d_impl(x, w, nullptr); }

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
    return conv2d_impl(x, w, &bias);
}

// ---- backward -----------------------------------------------------------

void backward(const Tensor& loss) {
    require_defined(loss, "backward");
    if (loss.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    // Topological order by iterative post-order DFS. Traversal follows the
    // structural input order, so repeated runs on one graph are identical.
    std::vector<detail::Node*> topo;
    std::unordered_set<detail::Node*> seen;
    struct Frame {
        detail::Node* node;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    detail::Node* root = loss.node().get();
    if (seen.insert(root).second) stack.push_back({root, 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_input < f.node->inputs.size()) {
            detail::Node* child = f.node->inputs[f.next_input++].get();
            if (seen.insert(child).second) stack.push_back({child, 0});
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }
    // Interior grads are per-call scratch; leaf grads persist and accumulate.
    for (detail::Node* n : topo) {
        if (!n->is_leaf() && n->requires_grad) n->grad.assign(n->value.size(), 0.0);
    }
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
    }
}

// ---- finite differences ---------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double h) {
    if (h <= 0.0) throw ValueError("grad_check: step size must be positive");
    std::vector<double> base(x.values().begin(), x.values().end());

    Tensor var = Tensor::from_data(x.shape(), base, true);
    Tensor out = f(var);
    if (out.size() != 1) {
        throw ShapeError("grad_check: f must be scalar-valued, got " +
                         shape_str(out.shape()));
    }
    backward(out);
    std::vector<double> analytic(var.grad().begin(), var.grad().end());

    auto eval = [&](const std::vector<double>& v) {
        Tensor t = Tensor::from_data(x.shape(), v, false);
        const double r = f(t).item();
        if (!std::isfinite(r)) {
            throw NumericalError("grad_check: non-finite function value");
        }
        return r;
    };

    double worst = 0.0;
    std::vector<double> probe = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
        probe[i] = base[i] + h;
        const double fp = eval(probe);
        probe[i] = base[i] - h;
        const double fm = eval(probe);
        probe[i] = base[i];
        const double numeric = (fp - fm) / (2.0 * h);
        const double denom = std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace cra
