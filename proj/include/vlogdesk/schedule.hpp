#ifndef VLOGDESK_SCHEDULE_HPP
#define VLOGDESK_SCHEDULE_HPP

#include <string>
#include <vector>

namespace vlogdesk {

// Noise schedule shared by both diffusion stages. Steps are indexed
// t in [0, T); alpha_bar[t] is the cumulative signal fraction after t+1
// noising steps.
struct DiffusionSchedule {
    int steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    static DiffusionSchedule cosine(int steps);
    static DiffusionSchedule linear(int steps);
    static DiffusionSchedule make(const std::string& kind, int steps);

    void validate() const;

    // Evenly strided subset for sampling, descending (first element is the
    // noisiest step).
    std::vector<int> strided(int n) const;

    struct Posterior {
        double x0_coef = 0, xt_coef = 0, sigma = 0;
    };
    // Coefficients of q(x_prev | x_t, x0) when jumping from kept step t to
    // kept step t_prev (t_prev == -1 denotes the clean sample).
    Posterior posterior(int t, int t_prev) const;
};

// Closed form x_t = sqrt(a_bar_t) x0 + sqrt(1 - a_bar_t) noise.
std::vector<double> forward_diffuse(const std::vector<double>& x0, int t,
                                    const std::vector<double>& noise,
                                    const DiffusionSchedule& sched);

}  // namespace vlogdesk

#endif
