#include "vlogdesk/optim.hpp"

#include <cmath>

#include "vlogdesk/errors.hpp"

namespace vlogdesk {

void Adam::step(ParamSet& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (auto& [name, p] : params.items) {
        if (!p.has_grad()) continue;
        auto& g = p.node->grad;
        auto& val = p.node->value;
        auto& mom = moments_[p.node.get()];
        if (mom.m.empty()) {
            mom.m.assign(val.size(), 0.0);
            mom.v.assign(val.size(), 0.0);
        }
        for (size_t i = 0; i < val.size(); ++i) {
            if (!std::isfinite(g[i]))
                fail_numeric("adam: non-finite gradient in parameter '" + name + "' at index " +
                             std::to_string(i));
            mom.m[i] = beta1_ * mom.m[i] + (1.0 - beta1_) * g[i];
            mom.v[i] = beta2_ * mom.v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace vlogdesk
