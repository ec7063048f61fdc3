#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cra {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

// One node of the computation DAG. Leaves have no inputs; interior nodes
// carry a backward closure that scatters this node's grad into its inputs.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first needed
    bool requires_grad = false;
    const char* op = "";  // empty for leaves
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    std::size_t size() const { return value.size(); }
    bool is_leaf() const { return inputs.empty(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Dense n-dimensional float64 tensor with reverse-mode gradient tracking.
// Copying a Tensor copies the handle; both handles refer to one node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t ndim() const;
    bool requires_grad() const;

    // Scalar extraction; throws ShapeError unless size() == 1.
    double item() const;

    std::span<const double> values() const;
    // In-place mutation of a leaf (optimizer updates, data staging).
    std::span<double> values_mut();

    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();   // allocates if absent
    void clear_grad();  // drops the buffer

    // Toggling requires_grad on a leaf controls which edges future ops
    // record; it has no effect on graphs already built.
    void set_requires_grad(bool on);

    // Leaf copy of the values with requires_grad = false.
    Tensor detach() const;
    // Leaf copy of the values preserving requires_grad.
    Tensor clone() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

// Checked mode gates NaN/Inf rejection at op boundaries and value-level
// validation inside loss functions. On by default.
void set_checked(bool on);
bool checked();

// ---- op set -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Elementwise product. Shapes must match, or one operand may be
// [B,1,H,W] against [B,C,H,W] (per-pixel mask against a channel stack).
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
// 2-D convolution, stride 1, zero padding that preserves H x W.
// x: [B,Cin,H,W], w: [Cout,Cin,k,k] with k in {1,3}. Optional bias [Cout].
Tensor conv2d(const Tensor& x, const Tensor& w);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor relu(const Tensor& a);
// Softmax along axis 1 of an [N,C,...] tensor.
Tensor softmax_channels(const Tensor& z);
Tensor log(const Tensor& a);
// log(max(a, eps)); gradient is zero where the clamp is active. Used by the
// loss functions so that one-hot distributions stay finite.
Tensor clamped_log(const Tensor& a, double eps = 1e-12);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Sum over axis 1 with keepdim: [B,C,H,W] -> [B,1,H,W].
Tensor sum_channels(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Reverse pass from a scalar loss. Leaf grads accumulate across calls until
// zeroed; interior grads are scratch. Deterministic: identical graphs give
// bitwise-identical gradients.
void backward(const Tensor& loss);

// Central finite differences against the analytic gradient of f at x.
// Returns max over elements of |analytic - numeric| / max(1, |analytic|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double h = 1e-5);

}  // namespace cra
