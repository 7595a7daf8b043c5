#ifndef VLOGDESK_TENSOR_HPP
#define VLOGDESK_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vlogdesk/rng.hpp"

namespace vlogdesk {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// Dense double-precision tensor node. Value semantics live in the Tensor
// handle below; nodes also carry the autodiff record (parents + backprop
// closure) when gradients are being tracked.
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until touched by backward / marked param
    bool requires_grad = false;
    bool is_leaf = true;
    std::string name;  // set for named parameters, used in diagnostics

    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backprop;  // reads this grad, accumulates into parents
    uint64_t seq = 0;                           // creation order; parents always precede children

    int64_t size() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data);
    static Tensor scalar(double v);
    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0);
    static Tensor uniform(std::vector<int> shape, Rng& rng, double lo, double hi);
    // Leaf with requires_grad set; `name` shows up in optimizer errors.
    static Tensor param(std::vector<int> shape, std::vector<double> data, std::string name = "");

    bool defined() const { return node != nullptr; }
    const std::vector<int>& shape() const;
    int ndim() const { return static_cast<int>(shape().size()); }
    int dim(int i) const { return shape()[static_cast<size_t>(i)]; }
    int64_t size() const;

    std::vector<double>& data();
    const std::vector<double>& data() const;
    double item() const;  // requires size()==1

    bool requires_grad() const;
    void set_requires_grad(bool v, std::string name = "");
    bool has_grad() const;
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();
    const std::string& name() const;

    Tensor detach() const;  // same data, fresh constant leaf

    NodePtr node;
};

// Thread-local toggle: when off, ops do not record autodiff info.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// The operation records reachable from a loss value, in topological order.
// backward() visits each record exactly once in reverse, accumulating leaf
// gradients and dropping intermediate ones as soon as they are consumed.
class ComputeGraph {
public:
    static ComputeGraph from(const Tensor& output);
    void backward();  // output must be scalar
    size_t node_count() const { return order_.size(); }

private:
    NodePtr root_;
    std::vector<TensorNode*> order_;
};

void backward(const Tensor& loss);

// ---- op library ------------------------------------------------------------
// Elementwise binary ops accept equal shapes, or a right operand whose shape
// matches a suffix of the left's (leading-batch broadcast). Anything else is
// a shape error; reshape explicitly.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sin_op(const Tensor& a);
Tensor cos_op(const Tensor& a);
Tensor sqrt_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor gelu(const Tensor& a);

// (M,K)x(K,N), (B,M,K)x(B,K,N) or (B,M,K)x(K,N).
Tensor matmul(const Tensor& a, const Tensor& b);

// x:(B,C,L) w:(OC,C,K) bias:(OC) -> (B,OC,L') with L' = (L+2p-K)/stride+1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride = 1, int pad = 0);
// x:(N,C,H,W) w:(OC,C,K) bias:(OC): 1D convolution across the frame axis at
// every spatial location, same padding (the temporal layer of the video
// model).
Tensor temporal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias);
// x:(B,C,H,W) w:(OC,C,KH,KW) bias:(OC).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride = 1, int pad = 0);
// x:(B,C,H,W) w:(C,OC,KH,KW) bias:(OC) -> (B,OC,(H-1)s-2p+KH, ...).
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride = 2, int pad = 1);

// x:(B,C,...spatial) normalized per (batch, group); gamma/beta per channel.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Normalizes over the last dimension.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Over the last dimension.
Tensor softmax(const Tensor& x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
// Result shape = a.shape ++ extra; every source element is replicated across
// the appended dims. Pairs with suffix broadcast to express prefix-style
// expansion without general broadcasting.
Tensor spread(const Tensor& a, const std::vector<int>& extra);

// Scaled dot-product attention with an additive mask.
// q,k,v: (N,C) or (B,N,C); mask: (N,N) added to the scores (0 = allowed,
// large negative = blocked) or undefined for none. heads must divide C.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask, int heads);

// x:(...,C) @ w:(C,D) + b:(D); leading dims flattened and restored.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor mse(const Tensor& a, const Tensor& b);

// Additive causal mask: row i admits columns <= i, blocks the rest with -1e30
// (absorbing in double precision, so future frames have exactly zero effect).
Tensor causal_mask(int n);

// Sinusoidal embedding of a nonnegative scalar position into `dim` channels.
std::vector<double> sinusoidal_embedding(double pos, int dim);

// ---- gradcheck -------------------------------------------------------------
// Central finite differences against analytic gradients for a scalar-valued
// function of `inputs`. Error metric per coordinate:
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
// max_coords_per_tensor < 0 checks every coordinate; otherwise a seeded
// random subset of that size per tensor.
struct GradcheckReport {
    double max_rel_err = 0.0;
    std::string worst;  // "<tensor name or index>[coord]"
};

GradcheckReport gradcheck(const std::function<Tensor()>& fn, const std::vector<Tensor>& inputs,
                          double step = 1e-5, int max_coords_per_tensor = -1, uint64_t seed = 0);

}  // namespace vlogdesk

#endif
