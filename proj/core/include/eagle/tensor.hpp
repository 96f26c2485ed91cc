#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace eagle::ad {

// Global engine precision: f32 rounds every forward result through float
// (training mode); f64 keeps full doubles (gradient verification mode).
enum class Precision { f32, f64 };
void set_precision(Precision p);
Precision precision();

struct TensorImpl {
    std::vector<size_t> shape;
    std::vector<double> v;
    bool requires_grad = false;
    std::vector<double> g;  // sized lazily during backward
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void()> backward_fn;

    size_t size() const { return v.size(); }
    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), 0.0);
    }
};

// Value-semantics handle on an immutable dense tensor node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<size_t> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<size_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<size_t>& shape() const { return impl_->shape; }
    size_t size() const { return impl_->v.size(); }
    const std::vector<double>& values() const { return impl_->v; }
    std::vector<double>& mutable_values() { return impl_->v; }  // leaves only
    const std::vector<double>& grad() const { return impl_->g; }
    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void zero_grad() { impl_->g.assign(impl_->v.size(), 0.0); }
    double item() const;

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Reverse pass from a scalar loss; visits each tape node once in reverse
// topological order and accumulates (sums) gradients across fan-out.
// The tape is released afterwards.
void backward(const Tensor& loss);

// Core ops. Elementwise ops broadcast numpy-style (size-1 axes stretch,
// missing leading axes are implicit).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor concat(const std::vector<Tensor>& parts, size_t axis);
Tensor slice(const Tensor& a, size_t axis, size_t start, size_t end);
Tensor reshape(const Tensor& a, std::vector<size_t> new_shape);
Tensor transpose2d(const Tensor& a);
Tensor sum(const Tensor& a, size_t axis);
Tensor mean(const Tensor& a, size_t axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Nonlinearities (elementwise; layer_norm normalizes the last axis).
Tensor leaky_relu(const Tensor& a, double slope);
Tensor relu(const Tensor& a);
Tensor elu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Graph / segment ops.
Tensor gather_rows(const Tensor& a, const std::vector<int32_t>& idx);
Tensor scatter_sum(const Tensor& a, const std::vector<int32_t>& idx, size_t n_out);
// Max-stabilized softmax within each segment of a 1-D score vector.
Tensor segment_softmax(const Tensor& scores, const std::vector<int32_t>& segments,
                       size_t n_segments);

// Multi-head scaled-dot self-attention over B sequences of S tokens packed as
// a (B*S, d) matrix.
Tensor batched_attention(const Tensor& q, const Tensor& k, const Tensor& v, size_t batch,
                         size_t seq, size_t heads);

// Huber(pred - target) elementwise: 0.5 r^2 for |r| <= delta, else
// delta * (|r| - delta/2).
Tensor huber(const Tensor& pred, const Tensor& target, double delta);

// Inverted-scale dropout; identity when rate == 0.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng);

// Central-difference gradient oracle. Runs f once analytically, then probes
// every coordinate of every param; returns the max relative error with
// denominator max(|analytic|, |numeric|, 1e-8). Use in f64 mode.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  std::vector<Tensor>& params, double eps = 1e-5);

}  // namespace eagle::ad
