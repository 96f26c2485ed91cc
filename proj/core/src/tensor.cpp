#include "eagle/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "eagle/errors.hpp"

namespace eagle::ad {
namespace {

Precision g_precision = Precision::f32;

std::string shape_str(const std::vector<size_t>& s) {
    std::ostringstream out;
    out << '[';
    for (size_t i = 0; i < s.size(); ++i) out << (i ? "x" : "") << s[i];
    out << ']';
    return out.str();
}

size_t numel(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

void round_f32(std::vector<double>& v) {
    if (g_precision == Precision::f32)
        for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

std::shared_ptr<TensorImpl> make_node(std::vector<size_t> shape, std::vector<double> values,
                                      std::vector<std::shared_ptr<TensorImpl>> parents) {
    auto node = std::make_shared<TensorImpl>();
    node->shape = std::move(shape);
    round_f32(values);
    node->v = std::move(values);
    for (const auto& p : parents)
        if (p->requires_grad) node->requires_grad = true;
    if (node->requires_grad) node->parents = std::move(parents);
    return node;
}

// Strides with 0 where an axis is broadcast (size 1 against a larger size).
struct BcastPlan {
    std::vector<size_t> out_shape;
    std::vector<size_t> sa, sb;  // per-axis input strides into a and b
};

BcastPlan broadcast_plan(const std::vector<size_t>& a, const std::vector<size_t>& b,
                         const char* opname) {
    size_t rank = std::max(a.size(), b.size());
    BcastPlan plan;
    plan.out_shape.resize(rank);
    std::vector<size_t> pa(rank, 1), pb(rank, 1);
    std::copy(a.begin(), a.end(), pa.begin() + static_cast<long>(rank - a.size()));
    std::copy(b.begin(), b.end(), pb.begin() + static_cast<long>(rank - b.size()));
    for (size_t i = 0; i < rank; ++i) {
        if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1)
            throw data_error(std::string(opname) + ": shape mismatch " + shape_str(a) + " vs " +
                             shape_str(b));
        plan.out_shape[i] = std::max(pa[i], pb[i]);
    }
    auto strides = [&](const std::vector<size_t>& padded) {
        std::vector<size_t> st(rank, 0);
        size_t acc = 1;
        for (size_t i = rank; i-- > 0;) {
            st[i] = padded[i] == 1 ? 0 : acc;
            acc *= padded[i];
        }
        return st;
    };
    plan.sa = strides(pa);
    plan.sb = strides(pb);
    return plan;
}

// Calls fn(out_linear, a_offset, b_offset) for every output element.
template <typename Fn>
void for_broadcast(const BcastPlan& plan, Fn&& fn) {
    size_t rank = plan.out_shape.size();
    size_t total = numel(plan.out_shape);
    std::vector<size_t> idx(rank, 0);
    size_t oa = 0, ob = 0;
    for (size_t lin = 0; lin < total; ++lin) {
        fn(lin, oa, ob);
        for (size_t i = rank; i-- > 0;) {
            idx[i]++;
            oa += plan.sa[i];
            ob += plan.sb[i];
            if (idx[i] < plan.out_shape[i]) break;
            oa -= plan.sa[i] * plan.out_shape[i];
            ob -= plan.sb[i] * plan.out_shape[i];
            idx[i] = 0;
        }
    }
}

template <typename FwdFn, typename BwdFn>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, const char* name, FwdFn fwd,
                        BwdFn bwd) {
    auto pa = a.impl(), pb = b.impl();
    BcastPlan plan = broadcast_plan(pa->shape, pb->shape, name);
    std::vector<double> out(numel(plan.out_shape));
    for_broadcast(plan, [&](size_t lin, size_t oa, size_t ob) {
        out[lin] = fwd(pa->v[oa], pb->v[ob]);
    });
    auto node = make_node(plan.out_shape, std::move(out), {pa, pb});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa, pb, plan, bwd]() {
            if (pa->requires_grad) pa->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            for_broadcast(plan, [&](size_t lin, size_t oa, size_t ob) {
                double ga, gb;
                bwd(pa->v[oa], pb->v[ob], self->g[lin], ga, gb);
                if (pa->requires_grad) pa->g[oa] += ga;
                if (pb->requires_grad) pb->g[ob] += gb;
            });
        };
    }
    return Tensor(node);
}

template <typename FwdFn, typename DerivFn>
Tensor unary_op(const Tensor& a, FwdFn fwd, DerivFn deriv) {
    auto pa = a.impl();
    std::vector<double> out(pa->size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(pa->v[i]);
    auto node = make_node(pa->shape, std::move(out), {pa});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa, deriv]() {
            pa->ensure_grad();
            for (size_t i = 0; i < pa->size(); ++i)
                pa->g[i] += self->g[i] * deriv(pa->v[i], self->v[i]);
        };
    }
    return Tensor(node);
}

}  // namespace

void set_precision(Precision p) { g_precision = p; }
Precision precision() { return g_precision; }

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
    return from(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(std::vector<size_t> shape, double value, bool requires_grad) {
    std::vector<double> v(numel(shape), value);
    return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from(std::vector<size_t> shape, std::vector<double> values, bool requires_grad) {
    auto node = std::make_shared<TensorImpl>();
    size_t n = numel(shape);
    if (values.empty()) values.assign(n, 0.0);
    if (values.size() != n)
        throw data_error("tensor init: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
    node->shape = std::move(shape);
    round_f32(values);
    node->v = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(node);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

double Tensor::item() const {
    if (size() != 1) throw data_error("item(): tensor has shape " + shape_str(shape()));
    return impl_->v[0];
}

void backward(const Tensor& loss) {
    auto root = loss.impl();
    if (!root || root->size() != 1)
        throw data_error("backward: loss must be a scalar tensor");
    // Iterative postorder DFS.
    std::vector<std::shared_ptr<TensorImpl>> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<std::shared_ptr<TensorImpl>, size_t>> stack{{root, 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            auto next = node->parents[child++];
            if (next->requires_grad && visited.insert(next.get()).second)
                stack.emplace_back(next, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->g[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto& node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn();
        }
    }
    // Consume the tape.
    for (auto& node : order) {
        node->backward_fn = nullptr;
        node->parents.clear();
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    auto pa = a.impl(), pb = b.impl();
    if (pa->shape.size() != 2 || pb->shape.size() != 2 || pa->shape[1] != pb->shape[0])
        throw data_error("matmul: incompatible shapes " + shape_str(pa->shape) + " and " +
                         shape_str(pb->shape));
    size_t m = pa->shape[0], k = pa->shape[1], n = pb->shape[1];
    std::vector<double> out(m * n, 0.0);
    for (size_t i = 0; i < m; ++i)
        for (size_t kk = 0; kk < k; ++kk) {
            double av = pa->v[i * k + kk];
            if (av == 0.0) continue;
            const double* brow = &pb->v[kk * n];
            double* orow = &out[i * n];
            for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    auto node = make_node({m, n}, std::move(out), {pa, pb});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa, pb, m, k, n]() {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < n; ++j) {
                        double gv = self->g[i * n + j];
                        if (gv == 0.0) continue;
                        for (size_t kk = 0; kk < k; ++kk)
                            pa->g[i * k + kk] += gv * pb->v[kk * n + j];
                    }
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < m; ++i)
                    for (size_t kk = 0; kk < k; ++kk) {
                        double av = pa->v[i * k + kk];
                        if (av == 0.0) continue;
                        for (size_t j = 0; j < n; ++j)
                            pb->g[kk * n + j] += av * self->g[i * n + j];
                    }
            }
        };
    }
    return Tensor(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
    return broadcast_binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double g, double& ga, double& gb) { ga = g; gb = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return broadcast_binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double g, double& ga, double& gb) { ga = g; gb = -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return broadcast_binary(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& ga, double& gb) { ga = g * y; gb = g * x; });
}

Tensor scale(const Tensor& a, double c) {
    return unary_op(a, [c](double x) { return c * x; },
                    [c](double, double) { return c; });
}

Tensor concat(const std::vector<Tensor>& parts, size_t axis) {
    if (parts.empty()) throw data_error("concat: no inputs");
    const auto& base = parts[0].shape();
    if (axis >= base.size()) throw data_error("concat: axis out of range");
    size_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= base[i];
    for (size_t i = axis + 1; i < base.size(); ++i) inner *= base[i];
    size_t total_axis = 0;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != base.size())
            throw data_error("concat: rank mismatch " + shape_str(s) + " vs " + shape_str(base));
        for (size_t i = 0; i < s.size(); ++i)
            if (i != axis && s[i] != base[i])
                throw data_error("concat: shape mismatch " + shape_str(s) + " vs " +
                                 shape_str(base));
        total_axis += s[axis];
        parents.push_back(p.impl());
    }
    std::vector<size_t> out_shape = base;
    out_shape[axis] = total_axis;
    std::vector<double> out(outer * total_axis * inner);
    size_t off = 0;
    for (const auto& p : parents) {
        size_t ax = p->shape[axis];
        for (size_t o = 0; o < outer; ++o)
            std::copy(p->v.begin() + static_cast<long>(o * ax * inner),
                      p->v.begin() + static_cast<long>((o + 1) * ax * inner),
                      out.begin() + static_cast<long>((o * total_axis + off) * inner));
        off += ax;
    }
    auto node = make_node(out_shape, std::move(out), parents);
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), parents, axis, outer, inner, total_axis]() {
            size_t off2 = 0;
            for (const auto& p : parents) {
                size_t ax = p->shape[axis];
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (size_t o = 0; o < outer; ++o)
                        for (size_t i = 0; i < ax * inner; ++i)
                            p->g[o * ax * inner + i] +=
                                self->g[(o * total_axis + off2) * inner + i];
                }
                off2 += ax;
            }
        };
    }
    return Tensor(node);
}

Tensor slice(const Tensor& a, size_t axis, size_t start, size_t end) {
    auto pa = a.impl();
    const auto& s = pa->shape;
    if (axis >= s.size() || start > end || end > s[axis])
        throw data_error("slice: bad range on shape " + shape_str(s));
    size_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    size_t len = end - start, ax = s[axis];
    std::vector<size_t> out_shape = s;
    out_shape[axis] = len;
    std::vector<double> out(outer * len * inner);
    for (size_t o = 0; o < outer; ++o)
        std::copy(pa->v.begin() + static_cast<long>((o * ax + start) * inner),
                  pa->v.begin() + static_cast<long>((o * ax + end) * inner),
                  out.begin() + static_cast<long>(o * len * inner));
    auto node = make_node(out_shape, std::move(out), {pa});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa, outer, inner, len, ax, start]() {
            pa->ensure_grad();
            for (size_t o = 0; o < outer; ++o)
                for (size_t i = 0; i < len * inner; ++i)
                    pa->g[(o * ax + start) * inner + i] += self->g[o * len * inner + i];
        };
    }
    return Tensor(node);
}

Tensor reshape(const Tensor& a, std::vector<size_t> new_shape) {
    auto pa = a.impl();
    if (numel(new_shape) != pa->size())
        throw data_error("reshape: cannot view " + shape_str(pa->shape) + " as " +
                         shape_str(new_shape));
    auto node = make_node(std::move(new_shape), pa->v, {pa});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa]() {
            pa->ensure_grad();
            for (size_t i = 0; i < pa->size(); ++i) pa->g[i] += self->g[i];
        };
    }
    return Tensor(node);
}

Tensor transpose2d(const Tensor& a) {
    auto pa = a.impl();
    if (pa->shape.size() != 2)
        throw data_error("transpose2d: expected rank 2, got " + shape_str(pa->shape));
    size_t m = pa->shape[0], n = pa->shape[1];
    std::vector<double> out(m * n);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out[j * m + i] = pa->v[i * n + j];
    auto node = make_node({n, m}, std::move(out), {pa});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa, m, n]() {
            pa->ensure_grad();
            for (size_t i = 0; i < m; ++i)
                for (size_t j = 0; j < n; ++j) pa->g[i * n + j] += self->g[j * m + i];
        };
    }
    return Tensor(node);
}

namespace {

Tensor reduce_axis(const Tensor& a, size_t axis, bool take_mean) {
    auto pa = a.impl();
    const auto& s = pa->shape;
    if (axis >= s.size()) throw data_error("reduce: axis out of range for " + shape_str(s));
    size_t outer = 1, inner = 1, ax = s[axis];
    for (size_t i = 0; i < axis; ++i) outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    std::vector<size_t> out_shape;
    for (size_t i = 0; i < s.size(); ++i)
        if (i != axis) out_shape.push_back(s[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    double denom = take_mean ? static_cast<double>(ax) : 1.0;
    std::vector<double> out(outer * inner, 0.0);
    for (size_t o = 0; o < outer; ++o)
        for (size_t k = 0; k < ax; ++k)
            for (size_t i = 0; i < inner; ++i)
                out[o * inner + i] += pa->v[(o * ax + k) * inner + i];
    for (double& x : out) x /= denom;
    auto node = make_node(out_shape, std::move(out), {pa});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa, outer, inner, ax, denom]() {
            pa->ensure_grad();
            for (size_t o = 0; o < outer; ++o)
                for (size_t k = 0; k < ax; ++k)
                    for (size_t i = 0; i < inner; ++i)
                        pa->g[(o * ax + k) * inner + i] += self->g[o * inner + i] / denom;
        };
    }
    return Tensor(node);
}

}  // namespace

Tensor sum(const Tensor& a, size_t axis) { return reduce_axis(a, axis, false); }
Tensor mean(const Tensor& a, size_t axis) { return reduce_axis(a, axis, true); }

Tensor sum_all(const Tensor& a) {
    auto pa = a.impl();
    double total = 0;
    for (double x : pa->v) total += x;
    auto node = make_node({1}, {total}, {pa});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa]() {
            pa->ensure_grad();
            for (size_t i = 0; i < pa->size(); ++i) pa->g[i] += self->g[0];
        };
    }
    return Tensor(node);
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.size())); }

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary_op(a, [slope](double x) { return x > 0 ? x : slope * x; },
                    [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor relu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0 ? x : 0.0; },
                    [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor elu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0 ? x : std::expm1(x); },
                    [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a,
                    [](double x) {
                        return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                      : std::exp(x) / (1.0 + std::exp(x));
                    },
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
    // Overflow-safe: max(x,0) + log1p(exp(-|x|)).
    return unary_op(a,
                    [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
                    [](double x, double) {
                        return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                      : std::exp(x) / (1.0 + std::exp(x));
                    });
}

Tensor gelu(const Tensor& a) {
    constexpr double kInvSqrt2 = 0.7071067811865476;
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    return unary_op(a,
                    [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
                    [](double x, double) {
                        double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                        return cdf + x * pdf;
                    });
}

Tensor exp(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double x : a.values())
        if (x <= 0.0) throw numeric_error("log: non-positive input " + std::to_string(x));
    return unary_op(a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary_op(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                    [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    auto px = x.impl(), pg = gain.impl(), pb = bias.impl();
    const auto& s = px->shape;
    size_t d = s.back();
    if (pg->size() != d || pb->size() != d)
        throw data_error("layer_norm: gain/bias size must match last axis " + shape_str(s));
    size_t rows = px->size() / d;
    std::vector<double> out(px->size());
    auto stats = std::make_shared<std::vector<double>>(rows * 2);  // mean, inv_std per row
    for (size_t r = 0; r < rows; ++r) {
        const double* xr = &px->v[r * d];
        double mu = 0;
        for (size_t i = 0; i < d; ++i) mu += xr[i];
        mu /= static_cast<double>(d);
        double var = 0;
        for (size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<double>(d);
        double inv = 1.0 / std::sqrt(var + eps);
        (*stats)[r * 2] = mu;
        (*stats)[r * 2 + 1] = inv;
        for (size_t i = 0; i < d; ++i)
            out[r * d + i] = pg->v[i] * (xr[i] - mu) * inv + pb->v[i];
    }
    auto node = make_node(s, std::move(out), {px, pg, pb});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), px, pg, pb, stats, rows, d]() {
            if (px->requires_grad) px->ensure_grad();
            if (pg->requires_grad) pg->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            double dd = static_cast<double>(d);
            for (size_t r = 0; r < rows; ++r) {
                const double* xr = &px->v[r * d];
                const double* go = &self->g[r * d];
                double mu = (*stats)[r * 2], inv = (*stats)[r * 2 + 1];
                double sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (size_t i = 0; i < d; ++i) {
                    double xhat = (xr[i] - mu) * inv;
                    double dxhat = go[i] * pg->v[i];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    if (pg->requires_grad) pg->g[i] += go[i] * xhat;
                    if (pb->requires_grad) pb->g[i] += go[i];
                }
                if (px->requires_grad) {
                    for (size_t i = 0; i < d; ++i) {
                        double xhat = (xr[i] - mu) * inv;
                        double dxhat = go[i] * pg->v[i];
                        px->g[r * d + i] +=
                            inv * (dxhat - sum_dxhat / dd - xhat * sum_dxhat_xhat / dd);
                    }
                }
            }
        };
    }
    return Tensor(node);
}

Tensor gather_rows(const Tensor& a, const std::vector<int32_t>& idx) {
    auto pa = a.impl();
    if (pa->shape.size() != 2)
        throw data_error("gather_rows: expected rank 2, got " + shape_str(pa->shape));
    size_t n = pa->shape[0], d = pa->shape[1];
    std::vector<double> out(idx.size() * d);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<size_t>(idx[i]) >= n)
            throw data_error("gather_rows: index " + std::to_string(idx[i]) + " out of range");
        std::copy_n(&pa->v[static_cast<size_t>(idx[i]) * d], d, &out[i * d]);
    }
    auto node = make_node({idx.size(), d}, std::move(out), {pa});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa, idx, d]() {
            pa->ensure_grad();
            for (size_t i = 0; i < idx.size(); ++i)
                for (size_t j = 0; j < d; ++j)
                    pa->g[static_cast<size_t>(idx[i]) * d + j] += self->g[i * d + j];
        };
    }
    return Tensor(node);
}

Tensor scatter_sum(const Tensor& a, const std::vector<int32_t>& idx, size_t n_out) {
    auto pa = a.impl();
    if (pa->shape.size() != 2 || pa->shape[0] != idx.size())
        throw data_error("scatter_sum: rows of " + shape_str(pa->shape) +
                         " must match index count " + std::to_string(idx.size()));
    size_t d = pa->shape[1];
    std::vector<double> out(n_out * d, 0.0);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<size_t>(idx[i]) >= n_out)
            throw data_error("scatter_sum: segment " + std::to_string(idx[i]) + " out of range");
        for (size_t j = 0; j < d; ++j)
            out[static_cast<size_t>(idx[i]) * d + j] += pa->v[i * d + j];
    }
    auto node = make_node({n_out, d}, std::move(out), {pa});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa, idx, d]() {
            pa->ensure_grad();
            for (size_t i = 0; i < idx.size(); ++i)
                for (size_t j = 0; j < d; ++j)
                    pa->g[i * d + j] += self->g[static_cast<size_t>(idx[i]) * d + j];
        };
    }
    return Tensor(node);
}

Tensor segment_softmax(const Tensor& scores, const std::vector<int32_t>& segments,
                       size_t n_segments) {
    auto pa = scores.impl();
    if (pa->shape.size() != 1 || pa->size() != segments.size())
        throw data_error("segment_softmax: scores must be 1-D and match segment ids");
    size_t m = pa->size();
    std::vector<double> seg_max(n_segments, -std::numeric_limits<double>::infinity());
    for (size_t i = 0; i < m; ++i) {
        if (segments[i] < 0 || static_cast<size_t>(segments[i]) >= n_segments)
            throw data_error("segment_softmax: segment id out of range");
        seg_max[static_cast<size_t>(segments[i])] =
            std::max(seg_max[static_cast<size_t>(segments[i])], pa->v[i]);
    }
    std::vector<double> out(m), seg_sum(n_segments, 0.0);
    for (size_t i = 0; i < m; ++i) {
        out[i] = std::exp(pa->v[i] - seg_max[static_cast<size_t>(segments[i])]);
        seg_sum[static_cast<size_t>(segments[i])] += out[i];
    }
    for (size_t i = 0; i < m; ++i) out[i] /= seg_sum[static_cast<size_t>(segments[i])];
    auto node = make_node({m}, std::move(out), {pa});
    if (node->requires_grad) {
        // Saves outputs only; ds_i = y_i * (g_i - sum_seg(g * y)).
        node->backward_fn = [self = node.get(), pa, segments, n_segments, m]() {
            pa->ensure_grad();
            std::vector<double> seg_dot(n_segments, 0.0);
            for (size_t i = 0; i < m; ++i)
                seg_dot[static_cast<size_t>(segments[i])] += self->g[i] * self->v[i];
            for (size_t i = 0; i < m; ++i)
                pa->g[i] += self->v[i] * (self->g[i] - seg_dot[static_cast<size_t>(segments[i])]);
        };
    }
    return Tensor(node);
}

Tensor batched_attention(const Tensor& q, const Tensor& k, const Tensor& v, size_t batch,
                         size_t seq, size_t heads) {
    auto pq = q.impl(), pk = k.impl(), pv = v.impl();
    if (pq->shape != pk->shape || pq->shape != pv->shape || pq->shape.size() != 2 ||
        pq->shape[0] != batch * seq || pq->shape[1] % heads != 0)
        throw data_error("batched_attention: bad shapes " + shape_str(pq->shape));
    size_t d = pq->shape[1], dh = d / heads;
    double scale_f = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> out(pq->size(), 0.0);
    auto attn = std::make_shared<std::vector<double>>(batch * heads * seq * seq);
    for (size_t b = 0; b < batch; ++b)
        for (size_t h = 0; h < heads; ++h) {
            double* A = &(*attn)[(b * heads + h) * seq * seq];
            for (size_t i = 0; i < seq; ++i) {
                const double* qi = &pq->v[(b * seq + i) * d + h * dh];
                double mx = -std::numeric_limits<double>::infinity();
                for (size_t j = 0; j < seq; ++j) {
                    const double* kj = &pk->v[(b * seq + j) * d + h * dh];
                    double s = 0;
                    for (size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                    A[i * seq + j] = s * scale_f;
                    mx = std::max(mx, A[i * seq + j]);
                }
                double sum = 0;
                for (size_t j = 0; j < seq; ++j) {
                    A[i * seq + j] = std::exp(A[i * seq + j] - mx);
                    sum += A[i * seq + j];
                }
                for (size_t j = 0; j < seq; ++j) A[i * seq + j] /= sum;
                double* oi = &out[(b * seq + i) * d + h * dh];
                for (size_t j = 0; j < seq; ++j) {
                    const double* vj = &pv->v[(b * seq + j) * d + h * dh];
                    for (size_t c = 0; c < dh; ++c) oi[c] += A[i * seq + j] * vj[c];
                }
            }
        }
    auto node = make_node(pq->shape, std::move(out), {pq, pk, pv});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pq, pk, pv, attn, batch, seq, heads, d, dh,
                             scale_f]() {
            pq->ensure_grad();
            pk->ensure_grad();
            pv->ensure_grad();
            std::vector<double> dA(seq * seq), dS(seq * seq);
            for (size_t b = 0; b < batch; ++b)
                for (size_t h = 0; h < heads; ++h) {
                    const double* A = &(*attn)[(b * heads + h) * seq * seq];
                    for (size_t i = 0; i < seq; ++i) {
                        const double* go = &self->g[(b * seq + i) * d + h * dh];
                        for (size_t j = 0; j < seq; ++j) {
                            const double* vj = &pv->v[(b * seq + j) * d + h * dh];
                            double* gvj = &pv->g[(b * seq + j) * d + h * dh];
                            double s = 0;
                            for (size_t c = 0; c < dh; ++c) {
                                s += go[c] * vj[c];
                                gvj[c] += A[i * seq + j] * go[c];
                            }
                            dA[i * seq + j] = s;
                        }
                        double row_dot = 0;
                        for (size_t j = 0; j < seq; ++j)
                            row_dot += dA[i * seq + j] * A[i * seq + j];
                        for (size_t j = 0; j < seq; ++j)
                            dS[i * seq + j] = A[i * seq + j] * (dA[i * seq + j] - row_dot);
                        const double* qi = &pq->v[(b * seq + i) * d + h * dh];
                        double* gqi = &pq->g[(b * seq + i) * d + h * dh];
                        for (size_t j = 0; j < seq; ++j) {
                            const double* kj = &pk->v[(b * seq + j) * d + h * dh];
                            double* gkj = &pk->g[(b * seq + j) * d + h * dh];
                            double ds = dS[i * seq + j] * scale_f;
                            for (size_t c = 0; c < dh; ++c) {
                                gqi[c] += ds * kj[c];
                                gkj[c] += ds * qi[c];
                            }
                        }
                    }
                }
        };
    }
    return Tensor(node);
}

Tensor huber(const Tensor& pred, const Tensor& target, double delta) {
    return broadcast_binary(
        pred, target, "huber",
        [delta](double p, double t) {
            double r = std::abs(p - t);
            return r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
        },
        [delta](double p, double t, double g, double& ga, double& gb) {
            double r = p - t;
            double d = std::abs(r) <= delta ? r : (r > 0 ? delta : -delta);
            ga = g * d;
            gb = -g * d;
        });
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw data_error("dropout: rate must be < 1");
    auto pa = a.impl();
    double keep = 1.0 - rate;
    auto mask = std::make_shared<std::vector<double>>(pa->size());
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> out(pa->size());
    for (size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = uni(rng) < keep ? 1.0 / keep : 0.0;
        out[i] = pa->v[i] * (*mask)[i];
    }
    auto node = make_node(pa->shape, std::move(out), {pa});
    if (node->requires_grad) {
        node->backward_fn = [self = node.get(), pa, mask]() {
            pa->ensure_grad();
            for (size_t i = 0; i < pa->size(); ++i) pa->g[i] += self->g[i] * (*mask)[i];
        };
    }
    return Tensor(node);
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  std::vector<Tensor>& params, double eps) {
    for (auto& p : params) p.zero_grad();
    Tensor y = f(params);
    if (y.size() != 1) throw data_error("grad_check: f must return a scalar");
    backward(y);
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) analytic.push_back(p.grad());
    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].mutable_values();
        for (size_t i = 0; i < vals.size(); ++i) {
            double orig = vals[i];
            vals[i] = orig + eps;
            double fp = f(params).item();
            vals[i] = orig - eps;
            double fm = f(params).item();
            vals[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw numeric_error("grad_check: non-finite value during probing");
            double numeric = (fp - fm) / (2.0 * eps);
            double a = analytic[pi].empty() ? 0.0 : analytic[pi][i];
            double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace eagle::ad
