#include <cmath>

#include "mobilab/estimators.hpp"

namespace mobilab::estimators {

std::optional<double> crossing_age(const std::vector<int>& ages, const std::vector<double>& lambda) {
    if (ages.empty() || ages.size() != lambda.size()) return std::nullopt;
    if (lambda[0] >= 1.0 - 1e-12) return static_cast<double>(ages[0]);
    for (std::size_t k = 1; k < ages.size(); ++k) {
        if (lambda[k - 1] < 1.0 && lambda[k] >= 1.0) {
            double w = (1.0 - lambda[k - 1]) / (lambda[k] - lambda[k - 1]);
            return ages[k - 1] + w * (ages[k] - ages[k - 1]);
        }
    }
    return std::nullopt;
}

GeivResult geiv_diagnostics(const Panel& p, const std::vector<int>& ages) {
    if (ages.size() < 2) throw EstimationError("GEiV diagnostics need at least 2 ages");
    auto life = lifetime_incomes(p);
    GeivResult g;
    g.ages = ages;
    g.benchmark = estimate_benchmark(p).slope;
    for (int age : ages) {
        std::vector<double> par, lt, y;
        for (std::size_t i = 0; i < p.n_persons(); ++i) {
            double pr = p.persons()[i].parent_log_income;
            if (std::isnan(life[i]) || std::isnan(pr)) continue;
            for (const auto& o : p.observations_of(i)) {
                if (o.age != age) continue;
                par.push_back(pr);
                lt.push_back(life[i]);
                y.push_back(panel::log_income(o));
            }
        }
        if (y.size() < 3) throw EstimationError("GEiV: fewer than 3 persons observed at age " + std::to_string(age));
        auto lam = regression::simple_ols(lt, y);
        auto bet = regression::simple_ols(par, y);
        auto bench = regression::simple_ols(par, lt);
        // beta_t = lambda_t * bench + slope(u_t on parent) on the same rows
        std::vector<double> u(y.size());
        for (std::size_t k = 0; k < y.size(); ++k) u[k] = y[k] - lam.intercept - lam.slope * lt[k];
        auto uo = regression::simple_ols(par, u);
        g.lambda.push_back(lam.slope);
        g.lambda_se.push_back(lam.se);
        g.beta.push_back(bet.slope);
        g.beta_se.push_back(bet.se);
        g.ratio.push_back(bet.slope / lam.slope);
        g.gap.push_back(bet.slope / lam.slope - bench.slope);
        g.gap_se.push_back(uo.se / std::abs(lam.slope));
        g.n.push_back(y.size());
    }
    g.t_star = crossing_age(ages, g.lambda);
    return g;
}

}  // namespace mobilab::estimators
