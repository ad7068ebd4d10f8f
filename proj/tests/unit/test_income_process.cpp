#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mobilab/estimators.hpp"
#include "mobilab/income_process.hpp"

using namespace mobilab;
using namespace mobilab::income;

namespace {

double logsumexp(std::span<const panel::IncomeObs> obs) {
    double m = -1e300;
    for (const auto& o : obs) m = std::max(m, std::log(o.income_level));
    double s = 0.0;
    for (const auto& o : obs) s += std::exp(std::log(o.income_level) - m);
    return m + std::log(s);
}

}  // namespace

TEST_CASE("simulate: row counts follow the age range") {
    SimConfig c;
    c.n_persons = 10;
    auto p = simulate_panel(c);
    CHECK(p.n_persons() == 10);
    CHECK(p.n_obs() == 34 * 10);
    c.age_min = 30;
    c.age_max = 39;
    CHECK(simulate_panel(c).n_obs() == 100);
}

TEST_CASE("simulate: deterministic under the seed") {
    SimConfig c;
    c.n_persons = 50;
    c.seed = 9;
    auto a = simulate_panel(c), b = simulate_panel(c);
    c.seed = 10;
    auto d = simulate_panel(c);
    bool same = true, differ = false;
    for (std::size_t k = 0; k < a.n_obs(); ++k) {
        same = same && a.observations()[k].income_level == b.observations()[k].income_level;
        differ = differ || a.observations()[k].income_level != d.observations()[k].income_level;
    }
    CHECK(same);
    CHECK(differ);
}

TEST_CASE("simulate: stored truth is the log of summed levels") {
    SimConfig c;
    c.n_persons = 200;
    auto p = simulate_panel(c);
    for (std::size_t i = 0; i < p.n_persons(); ++i)
        CHECK(std::abs(*p.persons()[i].true_log_lifetime - logsumexp(p.observations_of(i))) < 1e-10);
    auto life = estimators::lifetime_incomes(p);
    CHECK(life[3] == *p.persons()[3].true_log_lifetime);
}

TEST_CASE("simulate: parent income moments and education gradient") {
    SimConfig c;
    c.n_persons = 20000;
    c.age_min = 25;
    c.age_max = 26;
    auto p = simulate_panel(c);
    double s = 0.0, ss = 0.0;
    std::map<int, std::pair<double, int>> educ_by_q;
    std::vector<double> par;
    for (const auto& r : p.persons()) par.push_back(r.parent_log_income);
    auto sorted = par;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& r : p.persons()) {
        s += r.parent_log_income;
        ss += r.parent_log_income * r.parent_log_income;
        auto rank = std::lower_bound(sorted.begin(), sorted.end(), r.parent_log_income) - sorted.begin();
        int q = static_cast<int>(4 * rank / static_cast<long>(sorted.size()));
        educ_by_q[q].first += r.educ_group;
        educ_by_q[q].second++;
        CHECK(r.educ_group >= 0);
        CHECK(r.educ_group <= 3);
    }
    double n = static_cast<double>(p.n_persons());
    double mean = s / n, var = ss / n - mean * mean;
    CHECK(mean == doctest::Approx(15.5).epsilon(0.002));
    CHECK(var == doctest::Approx(0.25).epsilon(0.05));
    // expected education by quartile from the default probabilities: 0.70, 1.10, 1.60, 2.25
    const double expect[] = {0.70, 1.10, 1.60, 2.25};
    for (int q = 0; q < 4; ++q) CHECK(educ_by_q[q].first / educ_by_q[q].second == doctest::Approx(expect[q]).epsilon(0.05));
}

TEST_CASE("simulate: extras are integer-coded within their ranges") {
    SimConfig c;
    c.n_persons = 2000;
    c.extras = true;
    c.age_max = 30;
    auto p = simulate_panel(c);
    std::set<double> cog;
    for (const auto& r : p.persons()) {
        double fs = r.extra(panel::Extra::family_size), bo = r.extra(panel::Extra::birth_order);
        CHECK(fs >= 1);
        CHECK(fs <= 12);
        CHECK(bo >= 1);
        CHECK(bo <= fs);
        for (auto e : {panel::Extra::skill_cog, panel::Extra::skill_noncog}) {
            double v = r.extra(e);
            CHECK(v == std::round(v));
            CHECK(v >= 1);
            CHECK(v <= 9);
        }
        cog.insert(r.extra(panel::Extra::skill_cog));
    }
    CHECK(cog.size() >= 7);
    c.extras = false;
    CHECK(std::isnan(simulate_panel(c).persons()[0].extra(panel::Extra::immigrant)));
}

TEST_CASE("simulate: last observed year truncates observations") {
    SimConfig c;
    c.n_persons = 300;
    c.trend.last_observed_year = 1995;
    auto p = simulate_panel(c);
    for (const auto& o : p.observations()) CHECK(o.year <= 1995);
    // truth is still the full-profile value
    for (const auto& r : p.persons()) CHECK(r.true_log_lifetime.has_value());
}

TEST_CASE("families: father lifetime equals the child's parental income") {
    SimConfig c;
    c.n_persons = 100;
    auto f = simulate_families(c);
    REQUIRE(f.fathers.n_persons() == f.children.n_persons());
    for (std::size_t i = 0; i < f.children.n_persons(); ++i) {
        const auto& ch = f.children.persons()[i];
        const auto& fa = f.fathers.persons()[i];
        CHECK(ch.family_id == fa.family_id);
        CHECK(fa.educ_group == ch.parent_educ_group);
        CHECK(std::abs(logsumexp(f.fathers.observations_of(i)) - ch.parent_log_income) < 1e-9);
        CHECK(fa.cohort == ch.cohort - 30);
    }
}

TEST_CASE("config validation rejects bad inputs") {
    SimConfig c;
    c.link.educ_probs_by_parent[0] = {0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS(c.validate());
    SimConfig d;
    d.hip.rho = 1.5;
    CHECK_THROWS(d.validate());
    SimConfig e;
    e.cohort_min = 1960;
    e.cohort_max = 1950;
    CHECK_THROWS(e.validate());
    SimConfig f;
    f.hip.sigma_alpha_beta = 1.0;  // covariance matrix not positive definite
    CHECK_THROWS(f.validate());
}

TEST_CASE("errors-in-variables generator: annual equals lifetime when lambda = 1 and u = 0") {
    GeivSimConfig g;
    g.n_persons = 500;
    g.sigma_u = 0.0;
    g.lambda.assign(34, 1.0);
    g.mu.assign(34, g.c);
    auto p = simulate_geiv_panel(g);
    for (std::size_t i = 0; i < p.n_persons(); ++i)
        for (const auto& o : p.observations_of(i)) CHECK(std::abs(std::log(o.income_level) - *p.persons()[i].true_log_lifetime) < 1e-12);
    auto r = estimators::geiv_diagnostics(p, {28, 35, 42});
    for (double l : r.lambda) CHECK(l == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("growth tables: one row per bin") {
    SimConfig c;
    c.n_persons = 3000;
    auto f = simulate_families(c);
    auto g = growth_gradient_table(f.children);
    CHECK(g.size() == 6);
    CHECK(g[0].label == "25-30");
    // the parental growth loading is positive early in the career
    CHECK(g[0].coef > 0.0);
    auto gg = growth_on_growth_table(f.children, f.fathers);
    CHECK(gg.size() == 3);
}
