#include "vlogdesk/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "vlogdesk/errors.hpp"

namespace vlogdesk {

namespace {

std::atomic<uint64_t> g_seq{1};
thread_local bool g_grad_enabled = true;

int64_t shape_product(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (i + 1 < shape.size()) s += ",";
    }
    return s + ")";
}

NodePtr make_node(std::vector<int> shape) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    for (int d : n->shape) {
        if (d <= 0) fail_data("tensor dimension must be positive, got shape " + shape_str(n->shape));
    }
    n->value.assign(shape_product(n->shape), 0.0);
    n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
    return n;
}

}  // namespace

void TensorNode::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- Tensor handle ----------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(make_node(std::move(shape))); }

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.node->value.begin(), t.node->value.end(), v);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
    Tensor t(make_node(std::move(shape)));
    if (static_cast<int64_t>(data.size()) != t.size())
        fail_data("data length " + std::to_string(data.size()) + " does not match shape " +
                  shape_str(t.shape()));
    t.node->value = std::move(data);
    return t;
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.node->value) v = rng.normal() * stddev;
    return t;
}

Tensor Tensor::uniform(std::vector<int> shape, Rng& rng, double lo, double hi) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.node->value) v = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::param(std::vector<int> shape, std::vector<double> data, std::string name) {
    Tensor t = from_data(std::move(shape), std::move(data));
    t.node->requires_grad = true;
    t.node->name = std::move(name);
    return t;
}

const std::vector<int>& Tensor::shape() const { return node->shape; }
int64_t Tensor::size() const { return node->size(); }
std::vector<double>& Tensor::data() { return node->value; }
const std::vector<double>& Tensor::data() const { return node->value; }

double Tensor::item() const {
    if (size() != 1) fail_data("item() requires a size-1 tensor, shape is " + shape_str(shape()));
    return node->value[0];
}

bool Tensor::requires_grad() const { return node->requires_grad; }

void Tensor::set_requires_grad(bool v, std::string name) {
    node->requires_grad = v;
    if (!name.empty()) node->name = std::move(name);
}

bool Tensor::has_grad() const { return !node->grad.empty(); }

std::vector<double>& Tensor::grad() {
    node->ensure_grad();
    return node->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (node->grad.empty()) fail_data("tensor has no gradient buffer");
    return node->grad;
}

void Tensor::zero_grad() {
    if (!node->grad.empty()) std::fill(node->grad.begin(), node->grad.end(), 0.0);
}

const std::string& Tensor::name() const { return node->name; }

Tensor Tensor::detach() const {
    Tensor t(make_node(shape()));
    t.node->value = node->value;
    return t;
}

// ---- autodiff recording -----------------------------------------------------

namespace detail {

bool any_requires_grad(const std::vector<Tensor>& parents) {
    for (const auto& p : parents)
        if (p.node->requires_grad) return true;
    return false;
}

// Attach the op record to `out` when gradients are being tracked.
void record(Tensor& out, std::vector<Tensor> parents, std::function<void(TensorNode&)> backprop) {
    if (!grad_enabled() || !any_requires_grad(parents)) return;
    out.node->requires_grad = true;
    out.node->is_leaf = false;
    out.node->parents.reserve(parents.size());
    for (auto& p : parents) out.node->parents.push_back(p.node);
    out.node->backprop = std::move(backprop);
}

}  // namespace detail

ComputeGraph ComputeGraph::from(const Tensor& output) {
    ComputeGraph g;
    g.root_ = output.node;
    // Parents are created strictly before children, so sorting the reachable
    // set by descending creation index yields a reverse topological order.
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack{output.node.get()};
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        g.order_.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad) stack.push_back(p.get());
    }
    std::sort(g.order_.begin(), g.order_.end(),
              [](const TensorNode* a, const TensorNode* b) { return a->seq > b->seq; });
    return g;
}

void ComputeGraph::backward() {
    if (root_->size() != 1)
        fail_data("backward() requires a scalar loss, got shape " + shape_str(root_->shape));
    root_->ensure_grad();
    root_->grad[0] = 1.0;
    for (TensorNode* n : order_) {
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
        if (!n->is_leaf) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

void backward(const Tensor& loss) { ComputeGraph::from(loss).backward(); }

// ---- elementwise ops --------------------------------------------------------

namespace {

// Validates equal shapes or suffix broadcast of b onto a. Returns the number
// of leading elements of `a` per full copy of `b` (1 when shapes match).
int64_t broadcast_outer(const Tensor& a, const Tensor& b, const char* op) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (bs.size() > as.size())
        fail_data(std::string(op) + ": shape mismatch " + shape_str(as) + " vs " + shape_str(bs));
    const size_t off = as.size() - bs.size();
    for (size_t i = 0; i < bs.size(); ++i) {
        if (as[off + i] != bs[i])
            fail_data(std::string(op) + ": shape mismatch " + shape_str(as) + " vs " + shape_str(bs));
    }
    return a.size() / std::max<int64_t>(1, b.size());
}

void accumulate_suffix(std::vector<double>& dst, const std::vector<double>& src, int64_t outer) {
    const int64_t inner = static_cast<int64_t>(dst.size());
    for (int64_t o = 0; o < outer; ++o) {
        const double* s = src.data() + o * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += s[i];
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    const int64_t outer = broadcast_outer(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    const int64_t inner = b.size();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i)
            out.node->value[o * inner + i] = a.node->value[o * inner + i] + b.node->value[i];
    detail::record(out, {a, b}, [outer, inner](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            (void)inner;
            accumulate_suffix(pb.grad, self.grad, outer);
        }
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const int64_t outer = broadcast_outer(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    const int64_t inner = b.size();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i)
            out.node->value[o * inner + i] = a.node->value[o * inner + i] - b.node->value[i];
    detail::record(out, {a, b}, [outer, inner](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i) pb.grad[i] -= self.grad[o * inner + i];
        }
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const int64_t outer = broadcast_outer(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    const int64_t inner = b.size();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i)
            out.node->value[o * inner + i] = a.node->value[o * inner + i] * b.node->value[i];
    detail::record(out, {a, b}, [outer, inner](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i)
                    pa.grad[o * inner + i] += self.grad[o * inner + i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i)
                    pb.grad[i] += self.grad[o * inner + i] * pa.value[o * inner + i];
        }
    });
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    const int64_t outer = broadcast_outer(a, b, "div");
    Tensor out = Tensor::zeros(a.shape());
    const int64_t inner = b.size();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i)
            out.node->value[o * inner + i] = a.node->value[o * inner + i] / b.node->value[i];
    detail::record(out, {a, b}, [outer, inner](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i)
                    pa.grad[o * inner + i] += self.grad[o * inner + i] / pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i) {
                    const double bi = pb.value[i];
                    pb.grad[i] -= self.grad[o * inner + i] * pa.value[o * inner + i] / (bi * bi);
                }
        }
    });
    return out;
}

namespace {

Tensor unary_op(const Tensor& a, const std::function<double(double)>& f,
                const std::function<double(double, double)>& dfdx_from_x_y) {
    Tensor out = Tensor::zeros(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) out.node->value[i] = f(a.node->value[i]);
    detail::record(out, {a}, [dfdx_from_x_y](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            p.grad[i] += self.grad[i] * dfdx_from_x_y(p.value[i], self.value[i]);
    });
    return out;
}

}  // namespace

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor square(const Tensor& a) {
    return unary_op(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sin_op(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sin(x); },
                    [](double x, double) { return std::cos(x); });
}

Tensor cos_op(const Tensor& a) {
    return unary_op(a, [](double x) { return std::cos(x); },
                    [](double x, double) { return -std::sin(x); });
}

Tensor sqrt_op(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

Tensor exp_op(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log_op(const Tensor& a) {
    return unary_op(a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor silu(const Tensor& a) {
    return unary_op(
        a,
        [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Tensor gelu(const Tensor& a) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    return unary_op(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            return cdf + x * pdf;
        });
}

// ---- reductions -------------------------------------------------------------

Tensor sum(const Tensor& a) {
    Tensor out = Tensor::zeros({1});
    double acc = 0.0;
    for (double v : a.node->value) acc += v;
    out.node->value[0] = acc;
    detail::record(out, {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = self.grad[0];
        for (auto& pg : p.grad) pg += g;
    });
    return out;
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    Tensor out = Tensor::zeros({1});
    double acc = 0.0;
    for (double v : a.node->value) acc += v;
    out.node->value[0] = acc * inv;
    detail::record(out, {a}, [inv](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = self.grad[0] * inv;
        for (auto& pg : p.grad) pg += g;
    });
    return out;
}

// ---- shape ops --------------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (shape_product(shape) != a.size())
        fail_data("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    Tensor out(make_node(std::move(shape)));
    out.node->value = a.node->value;
    detail::record(out, {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    });
    return out;
}

namespace {

std::vector<int64_t> strides_of(const std::vector<int>& shape) {
    std::vector<int64_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * shape[i + 1];
    return st;
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
    const auto& as = a.shape();
    if (axes.size() != as.size()) fail_data("permute: axes rank mismatch for " + shape_str(as));
    std::vector<int> out_shape(as.size());
    std::vector<bool> used(as.size(), false);
    for (size_t i = 0; i < axes.size(); ++i) {
        const int ax = axes[i];
        if (ax < 0 || ax >= static_cast<int>(as.size()) || used[ax])
            fail_data("permute: invalid axes for " + shape_str(as));
        used[ax] = true;
        out_shape[i] = as[ax];
    }
    Tensor out = Tensor::zeros(out_shape);
    const auto in_st = strides_of(as);
    const auto out_st = strides_of(out_shape);
    const int rank = static_cast<int>(as.size());
    const int64_t n = a.size();
    std::vector<int64_t> src_stride_for_out(rank);
    for (int i = 0; i < rank; ++i) src_stride_for_out[i] = in_st[axes[i]];
    for (int64_t o = 0; o < n; ++o) {
        int64_t rem = o;
        int64_t src = 0;
        for (int i = 0; i < rank; ++i) {
            const int64_t idx = rem / out_st[i];
            rem -= idx * out_st[i];
            src += idx * src_stride_for_out[i];
        }
        out.node->value[o] = a.node->value[src];
    }
    detail::record(out, {a}, [out_st, src_stride_for_out, rank](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const int64_t n = self.size();
        for (int64_t o = 0; o < n; ++o) {
            int64_t rem = o;
            int64_t src = 0;
            for (int i = 0; i < rank; ++i) {
                const int64_t idx = rem / out_st[i];
                rem -= idx * out_st[i];
                src += idx * src_stride_for_out[i];
            }
            p.grad[src] += self.grad[o];
        }
    });
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) fail_data("concat: no inputs");
    const auto& s0 = parts[0].shape();
    if (axis < 0 || axis >= static_cast<int>(s0.size())) fail_data("concat: bad axis");
    std::vector<int> out_shape = s0;
    int total_axis = 0;
    for (const auto& p : parts) {
        const auto& ps = p.shape();
        if (ps.size() != s0.size()) fail_data("concat: rank mismatch");
        for (size_t i = 0; i < ps.size(); ++i)
            if (static_cast<int>(i) != axis && ps[i] != s0[i])
                fail_data("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(ps));
        total_axis += ps[axis];
    }
    out_shape[axis] = total_axis;
    Tensor out = Tensor::zeros(out_shape);

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[i];
    for (size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

    std::vector<int> part_axis(parts.size());
    for (size_t k = 0; k < parts.size(); ++k) part_axis[k] = parts[k].shape()[axis];

    int64_t axis_off = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
        const auto& pv = parts[k].node->value;
        const int64_t pa = part_axis[k];
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t x = 0; x < pa; ++x)
                std::copy(pv.begin() + (o * pa + x) * inner, pv.begin() + (o * pa + x + 1) * inner,
                          out.node->value.begin() + ((o * total_axis) + axis_off + x) * inner);
        axis_off += pa;
    }
    detail::record(out, parts, [outer, inner, total_axis, part_axis](TensorNode& self) {
        int64_t axis_off = 0;
        for (size_t k = 0; k < self.parents.size(); ++k) {
            auto& p = *self.parents[k];
            const int64_t pa = part_axis[k];
            if (p.requires_grad) {
                p.ensure_grad();
                for (int64_t o = 0; o < outer; ++o)
                    for (int64_t x = 0; x < pa; ++x) {
                        const double* g = self.grad.data() + ((o * total_axis) + axis_off + x) * inner;
                        double* dst = p.grad.data() + (o * pa + x) * inner;
                        for (int64_t i = 0; i < inner; ++i) dst[i] += g[i];
                    }
            }
            axis_off += pa;
        }
    });
    return out;
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
    const auto& as = a.shape();
    if (axis < 0 || axis >= static_cast<int>(as.size())) fail_data("slice: bad axis");
    if (start < 0 || len <= 0 || start + len > as[axis])
        fail_data("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                  ") out of bounds for " + shape_str(as));
    std::vector<int> out_shape = as;
    out_shape[axis] = len;
    Tensor out = Tensor::zeros(out_shape);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= as[i];
    for (size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
    const int64_t in_axis = as[axis];
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t x = 0; x < len; ++x)
            std::copy(a.node->value.begin() + (o * in_axis + start + x) * inner,
                      a.node->value.begin() + (o * in_axis + start + x + 1) * inner,
                      out.node->value.begin() + (o * len + x) * inner);
    detail::record(out, {a}, [outer, inner, in_axis, start, len](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t x = 0; x < len; ++x) {
                const double* g = self.grad.data() + (o * len + x) * inner;
                double* dst = p.grad.data() + (o * in_axis + start + x) * inner;
                for (int64_t i = 0; i < inner; ++i) dst[i] += g[i];
            }
    });
    return out;
}

Tensor spread(const Tensor& a, const std::vector<int>& extra) {
    std::vector<int> out_shape = a.shape();
    int64_t rep = 1;
    for (int d : extra) {
        out_shape.push_back(d);
        rep *= d;
    }
    Tensor out = Tensor::zeros(out_shape);
    for (int64_t i = 0; i < a.size(); ++i)
        std::fill(out.node->value.begin() + i * rep, out.node->value.begin() + (i + 1) * rep,
                  a.node->value[i]);
    detail::record(out, {a}, [rep](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < p.grad.size(); ++i) {
            double acc = 0.0;
            const double* g = self.grad.data() + i * rep;
            for (int64_t r = 0; r < rep; ++r) acc += g[r];
            p.grad[i] += acc;
        }
    });
    return out;
}

// ---- misc helpers -----------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    const auto& xs = x.shape();
    const int c = xs.back();
    const int64_t rows = x.size() / c;
    Tensor flat = reshape(x, {static_cast<int>(rows), c});
    Tensor y = matmul(flat, w);
    if (b.defined()) y = add(y, b);
    std::vector<int> out_shape = xs;
    out_shape.back() = w.shape()[1];
    return reshape(y, out_shape);
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

Tensor causal_mask(int n) {
    Tensor m = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m.node->value[i * n + j] = -1e30;
    return m;
}

std::vector<double> sinusoidal_embedding(double pos, int dim) {
    std::vector<double> e(dim, 0.0);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        e[2 * i] = std::sin(pos * freq);
        e[2 * i + 1] = std::cos(pos * freq);
    }
    return e;
}

// ---- gradcheck ---------------------------------------------------------------

GradcheckReport gradcheck(const std::function<Tensor()>& fn, const std::vector<Tensor>& inputs,
                          double step, int max_coords_per_tensor, uint64_t seed) {
    for (auto& t : inputs) t.node->requires_grad = true;
    for (auto& t : inputs) {
        t.node->grad.clear();
        t.node->ensure_grad();
    }
    Tensor loss = fn();
    if (!std::isfinite(loss.item())) fail_numeric("gradcheck: loss is not finite");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto& t : inputs) analytic.push_back(t.node->grad);

    Rng rng(seed ^ 0x6c6f676465736bULL);
    GradcheckReport report;
    for (size_t ti = 0; ti < inputs.size(); ++ti) {
        auto& t = inputs[ti];
        const int64_t n = t.size();
        std::vector<int64_t> coords;
        if (max_coords_per_tensor < 0 || n <= max_coords_per_tensor) {
            coords.resize(n);
            for (int64_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            std::vector<int64_t> all(n);
            for (int64_t i = 0; i < n; ++i) all[i] = i;
            for (int k = 0; k < max_coords_per_tensor; ++k) {
                const int64_t j = rng.uniform_int(k, n - 1);
                std::swap(all[k], all[j]);
                coords.push_back(all[k]);
            }
        }
        for (int64_t c : coords) {
            const double orig = t.node->value[c];
            double fp, fm;
            {
                NoGradGuard ng;
                t.node->value[c] = orig + step;
                fp = fn().item();
                t.node->value[c] = orig - step;
                fm = fn().item();
                t.node->value[c] = orig;
            }
            if (!std::isfinite(fp) || !std::isfinite(fm))
                fail_numeric("gradcheck: non-finite value at tensor " + std::to_string(ti) +
                             " coord " + std::to_string(c));
            const double numeric = (fp - fm) / (2.0 * step);
            const double an = analytic[ti][c];
            const double rel =
                std::abs(an - numeric) / std::max({1.0, std::abs(an), std::abs(numeric)});
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                const std::string label = t.name().empty() ? ("input" + std::to_string(ti)) : t.name();
                report.worst = label + "[" + std::to_string(c) + "]";
            }
        }
    }
    return report;
}

}  // namespace vlogdesk
