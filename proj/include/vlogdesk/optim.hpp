#ifndef VLOGDESK_OPTIM_HPP
#define VLOGDESK_OPTIM_HPP

#include <string>
#include <unordered_map>
#include <vector>

#include "vlogdesk/tensor.hpp"

namespace vlogdesk {

// Ordered, named parameter collection. Order is the optimizer iteration and
// checkpoint serialization order, so it must be construction-deterministic.
struct ParamSet {
    std::vector<std::pair<std::string, Tensor>> items;

    Tensor& add(const std::string& name, Tensor t) {
        t.set_requires_grad(true, name);
        items.emplace_back(name, std::move(t));
        return items.back().second;
    }

    Tensor* find(const std::string& name) {
        for (auto& [n, t] : items)
            if (n == name) return &t;
        return nullptr;
    }

    void append(const ParamSet& other) {
        for (const auto& it : other.items) items.push_back(it);
    }

    void zero_grad() {
        for (auto& [n, t] : items) t.zero_grad();
    }

    void set_requires_grad(bool v) {
        for (auto& [n, t] : items) t.set_requires_grad(v, n);
    }

    size_t size() const { return items.size(); }
    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& [k, t] : items) n += t.size();
        return n;
    }
};

// Bias-corrected adaptive-moment optimizer. Moment buffers are keyed by the
// parameter node, so one instance can drive disjoint ParamSets across stages.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Applies one update from the accumulated gradients. Parameters with no
    // gradient buffer are skipped (frozen or unused this step). Non-finite
    // gradients raise a numeric error naming the parameter.
    void step(ParamSet& params);

    int64_t step_count() const { return step_; }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    struct Moments {
        std::vector<double> m, v;
    };

    double lr_, beta1_, beta2_, eps_;
    int64_t step_ = 0;
    std::unordered_map<TensorNode*, Moments> moments_;
};

}  // namespace vlogdesk

#endif
