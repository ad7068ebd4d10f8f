#include <algorithm>
#include <cmath>
#include <set>

#include "mobilab/estimators.hpp"

namespace mobilab::estimators {

namespace {

std::size_t group_slot(const CreedyModel& m, int g) {
    auto it = std::lower_bound(m.groups.begin(), m.groups.end(), g);
    if (it == m.groups.end() || *it != g) throw EstimationError("Creedy: education group " + std::to_string(g) + " not in model");
    return static_cast<std::size_t>(it - m.groups.begin());
}

double log_sum_exp(const std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

}  // namespace

CreedyModel creedy_fit(const Panel& p, CreedyMode mode) {
    const auto& meta = p.metadata();
    const int A = meta.age_max - meta.age_min + 1;
    std::set<int> gs;
    for (const auto& r : p.persons()) gs.insert(r.educ_group);
    CreedyModel m;
    m.mode = mode;
    m.age_min = meta.age_min;
    m.groups.assign(gs.begin(), gs.end());
    const std::size_t G = m.groups.size();

    // per group and age: count, sum, sum of squares around a running shift
    std::vector<std::vector<double>> n(G, std::vector<double>(A, 0.0)), s1 = n, s2 = n;
    std::vector<std::vector<double>> shift(G, std::vector<double>(A, panel::kMissing));
    for (std::size_t i = 0; i < p.n_persons(); ++i) {
        std::size_t g = group_slot(m, p.persons()[i].educ_group);
        for (const auto& o : p.observations_of(i)) {
            auto a = static_cast<std::size_t>(o.age - meta.age_min);
            double y = panel::log_income(o);
            if (std::isnan(shift[g][a])) shift[g][a] = y;
            double d = y - shift[g][a];
            n[g][a] += 1.0;
            s1[g][a] += d;
            s2[g][a] += d * d;
        }
    }

    m.mu.assign(G, std::vector<double>(A, panel::kMissing));
    m.sigma = m.mu;
    for (std::size_t g = 0; g < G; ++g) {
        std::vector<double> h, mean, var;
        for (int a = 0; a < A; ++a) {
            double c = n[g][a];
            if (c < 2.0) continue;
            double mu = s1[g][a] / c;
            h.push_back(a);
            mean.push_back(shift[g][a] + mu);
            var.push_back((s2[g][a] - c * mu * mu) / (c - 1.0));
        }
        if (h.size() < 3) {
            throw EstimationError("Creedy: education group " + std::to_string(m.groups[g]) +
                                  " has fewer than 3 ages with at least 2 observations");
        }
        if (mode == CreedyMode::nonparametric) {
            for (std::size_t k = 0; k < h.size(); ++k) {
                auto a = static_cast<std::size_t>(h[k]);
                m.mu[g][a] = mean[k];
                m.sigma[g][a] = var[k] > 0.0 ? std::sqrt(var[k]) : panel::kMissing;
            }
            continue;
        }
        const auto K = static_cast<Eigen::Index>(h.size());
        Eigen::MatrixXd Q(K, 3), L(K, 2);
        Eigen::VectorXd ym(K), yv(K);
        for (Eigen::Index k = 0; k < K; ++k) {
            double x = h[static_cast<std::size_t>(k)];
            Q.row(k) << 1.0, x, x * x;
            L.row(k) << 1.0, x;
            ym(k) = mean[static_cast<std::size_t>(k)];
            yv(k) = var[static_cast<std::size_t>(k)];
        }
        Eigen::Vector3d cm = Q.colPivHouseholderQr().solve(ym);
        Eigen::Vector2d cv = L.colPivHouseholderQr().solve(yv);
        for (int a = 0; a < A; ++a) {
            double x = a;
            m.mu[g][static_cast<std::size_t>(a)] = cm(0) + cm(1) * x + cm(2) * x * x;
            double v = cv(0) + cv(1) * x;
            m.sigma[g][static_cast<std::size_t>(a)] = v > 0.0 ? std::sqrt(v) : panel::kMissing;
        }
    }
    return m;
}

LifetimePrediction creedy_lifetimes(const Panel& p, const CreedyModel& m, int observed_age, AgeWindow target) {
    target.validate();
    auto cell = [&](const std::vector<std::vector<double>>& t, std::size_t g, int age) {
        int a = age - m.age_min;
        if (a < 0 || a >= static_cast<int>(t[g].size())) return panel::kMissing;
        return t[g][static_cast<std::size_t>(a)];
    };
    auto need_sigma = [&](std::size_t g, int age) {
        double s = cell(m.sigma, g, age);
        double mu = cell(m.mu, g, age);
        if (std::isnan(s) || std::isnan(mu)) {
            throw EstimationError("Creedy: no positive variance for education group " + std::to_string(m.groups[g]) +
                                  " at age " + std::to_string(age) +
                                  (m.mode == CreedyMode::parametric ? "; use the nonparametric mode" : ""));
        }
        return s;
    };
    LifetimePrediction out;
    std::vector<double> prof(static_cast<std::size_t>(target.length()));
    for (std::size_t i = 0; i < p.n_persons(); ++i) {
        const panel::IncomeObs* at = nullptr;
        for (const auto& o : p.observations_of(i))
            if (o.age == observed_age) at = &o;
        if (!at) {
            out.excluded.push_back(i);
            continue;
        }
        std::size_t g = group_slot(m, p.persons()[i].educ_group);
        double so = need_sigma(g, observed_age);
        double z = (panel::log_income(*at) - cell(m.mu, g, observed_age)) / so;
        for (int t = target.lo; t <= target.hi; ++t) {
            double st = need_sigma(g, t);
            prof[static_cast<std::size_t>(t - target.lo)] = cell(m.mu, g, t) + z * st;
        }
        out.persons.push_back(i);
        out.log_lifetime.push_back(log_sum_exp(prof));
    }
    return out;
}

IgeEstimate creedy_estimate(const Panel& p, const CreedyModel& m, int observed_age, AgeWindow target) {
    auto lp = creedy_lifetimes(p, m, observed_age, target);
    SecondStep s;
    for (std::size_t k = 0; k < lp.persons.size(); ++k) {
        double par = p.persons()[lp.persons[k]].parent_log_income;
        if (std::isnan(par)) continue;
        s.persons.push_back(lp.persons[k]);
        s.parent.push_back(par);
        s.child.push_back(lp.log_lifetime[k]);
    }
    IgeEstimate e = second_step(s);
    e.window = {observed_age, observed_age};
    e.spec.variant = Variant::Creedy;
    e.spec.prediction_ages = target;
    e.n_excluded = lp.excluded.size();
    return e;
}

}  // namespace mobilab::estimators
