#include "vlogdesk/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "vlogdesk/errors.hpp"

namespace vlogdesk {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

DiffusionSchedule DiffusionSchedule::cosine(int steps) {
    DiffusionSchedule s;
    s.steps = steps;
    const double off = 0.008;
    auto f = [&](double t) {
        const double v = std::cos((t / steps + off) / (1.0 + off) * kPi / 2.0);
        return v * v;
    };
    const double f0 = f(0.0);
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double prev_ab = 1.0;
    for (int t = 0; t < steps; ++t) {
        const double ab = std::max(f(t + 1.0) / f0, 1e-12);
        double b = 1.0 - ab / prev_ab;
        b = std::clamp(b, 1e-8, 0.999);
        s.beta[t] = b;
        s.alpha[t] = 1.0 - b;
        s.alpha_bar[t] = prev_ab * s.alpha[t];
        prev_ab = s.alpha_bar[t];
    }
    s.validate();
    return s;
}

DiffusionSchedule DiffusionSchedule::linear(int steps) {
    DiffusionSchedule s;
    s.steps = steps;
    const double b0 = 1e-4, b1 = 0.02;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double ab = 1.0;
    for (int t = 0; t < steps; ++t) {
        s.beta[t] = b0 + (b1 - b0) * t / std::max(1, steps - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        ab *= s.alpha[t];
        s.alpha_bar[t] = ab;
    }
    s.validate();
    return s;
}

DiffusionSchedule DiffusionSchedule::make(const std::string& kind, int steps) {
    if (kind == "cosine") return cosine(steps);
    if (kind == "linear") return linear(steps);
    fail_data("unknown schedule kind '" + kind + "' (expected cosine or linear)");
}

void DiffusionSchedule::validate() const {
    if (steps <= 0) fail_data("schedule: steps must be positive");
    double prev = 1.0;
    for (int t = 0; t < steps; ++t) {
        if (!(beta[t] > 0.0 && beta[t] < 1.0))
            fail_data("schedule: beta out of (0,1) at step " + std::to_string(t));
        if (!(alpha_bar[t] > 0.0 && alpha_bar[t] < prev))
            fail_data("schedule: alpha_bar not strictly decreasing at step " + std::to_string(t));
        prev = alpha_bar[t];
    }
}

std::vector<int> DiffusionSchedule::strided(int n) const {
    if (n <= 0 || n > steps) fail_data("schedule: invalid stride count " + std::to_string(n));
    std::vector<int> kept;
    for (int i = 0; i < n; ++i)
        kept.push_back(static_cast<int>(static_cast<int64_t>(i) * steps / n));
    std::sort(kept.begin(), kept.end(), std::greater<int>());
    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
    return kept;
}

DiffusionSchedule::Posterior DiffusionSchedule::posterior(int t, int t_prev) const {
    if (t < 0 || t >= steps || t_prev >= t)
        fail_data("schedule: bad posterior query t=" + std::to_string(t) +
                  " t_prev=" + std::to_string(t_prev));
    const double ab_t = alpha_bar[t];
    const double ab_prev = t_prev < 0 ? 1.0 : alpha_bar[t_prev];
    const double a_eff = ab_t / ab_prev;
    const double b_eff = 1.0 - a_eff;
    Posterior p;
    p.x0_coef = std::sqrt(ab_prev) * b_eff / (1.0 - ab_t);
    p.xt_coef = std::sqrt(a_eff) * (1.0 - ab_prev) / (1.0 - ab_t);
    const double var = (1.0 - ab_prev) / (1.0 - ab_t) * b_eff;
    p.sigma = std::sqrt(std::max(var, 0.0));
    return p;
}

std::vector<double> forward_diffuse(const std::vector<double>& x0, int t,
                                    const std::vector<double>& noise,
                                    const DiffusionSchedule& sched) {
    if (t < 0 || t >= sched.steps)
        fail_data("forward_diffuse: step " + std::to_string(t) + " out of range [0," +
                  std::to_string(sched.steps) + ")");
    if (x0.size() != noise.size()) fail_data("forward_diffuse: x0/noise size mismatch");
    const double sa = std::sqrt(sched.alpha_bar[t]);
    const double sn = std::sqrt(1.0 - sched.alpha_bar[t]);
    std::vector<double> out(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) out[i] = sa * x0[i] + sn * noise[i];
    return out;
}

}  // namespace vlogdesk
