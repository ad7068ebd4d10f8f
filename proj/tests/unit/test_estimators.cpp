#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "mobilab/estimators.hpp"
#include "mobilab/income_process.hpp"
#include "support.hpp"

using namespace mobilab;
using namespace mobilab::estimators;

namespace {

double lse(const std::vector<double>& v) {
    double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// z scores standardized within each education group: sample mean 0, variance 1
std::vector<double> standardized_z(std::size_t n, int groups, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N;
    std::vector<double> z(n);
    for (auto& v : z) v = N(rng);
    for (int g = 0; g < groups; ++g) {
        double s = 0.0, ss = 0.0, c = 0.0;
        for (std::size_t i = static_cast<std::size_t>(g); i < n; i += static_cast<std::size_t>(groups)) s += z[i], c += 1.0;
        double m = s / c;
        for (std::size_t i = static_cast<std::size_t>(g); i < n; i += static_cast<std::size_t>(groups)) ss += (z[i] - m) * (z[i] - m);
        double sd = std::sqrt(ss / (c - 1.0));
        for (std::size_t i = static_cast<std::size_t>(g); i < n; i += static_cast<std::size_t>(groups)) z[i] = (z[i] - m) / sd;
    }
    return z;
}

}  // namespace

TEST_CASE("second step is plain OLS of child on parent") {
    SecondStep s;
    s.parent = {1, 2, 3, 4};
    s.child = {2.1, 2.9, 4.2, 4.8};
    s.persons = {0, 1, 2, 3};
    auto e = second_step(s);
    auto r = regression::simple_ols(s.parent, s.child);
    CHECK(e.slope == r.slope);
    CHECK(e.se == r.se);
    CHECK(e.n_persons == 4);
    s.parent.resize(2);
    s.child.resize(2);
    CHECK_THROWS_AS(second_step(s), EstimationError);
}

TEST_CASE("Creedy recovers lifetime income exactly on rank-preserving profiles") {
    // log y = mu_g(a) + z * sigma_g(a) with mu quadratic and sigma^2 linear in age
    const std::size_t n = 400;
    const int G = 3;
    auto z = standardized_z(n, G, 11);
    auto mu = [](int g, int a) { double h = a - 25; return 10.0 + 0.2 * g + (0.06 + 0.01 * g) * h - 0.0012 * h * h; };
    auto sd = [](int g, int a) { return std::sqrt(0.05 + 0.02 * g + 0.004 * (a - 25)); };
    auto p = testing::build(n, 25, 58, [&](std::size_t i, int a) { return mu(static_cast<int>(i % G), a) + z[i] * sd(static_cast<int>(i % G), a); },
                            [&](std::size_t i, panel::PersonRecord& r) {
                                r.educ_group = static_cast<int>(i % G);
                                r.parent_log_income = 15.0 + 0.5 * z[i] + 0.01 * static_cast<double>(i % 13);
                            });
    for (auto mode : {CreedyMode::parametric, CreedyMode::nonparametric}) {
        auto m = creedy_fit(p, mode);
        for (int age : {30, 40, 50}) {
            auto lp = creedy_lifetimes(p, m, age, {25, 58});
            REQUIRE(lp.persons.size() == n);
            double worst = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                std::size_t i = lp.persons[k];
                std::vector<double> prof;
                for (int a = 25; a <= 58; ++a) prof.push_back(mu(static_cast<int>(i % G), a) + z[i] * sd(static_cast<int>(i % G), a));
                worst = std::max(worst, std::abs(lp.log_lifetime[k] - lse(prof)));
            }
            CHECK(worst < 1e-10);
            CHECK(creedy_estimate(p, m, age, {25, 58}).slope == doctest::Approx(estimate_benchmark(p).slope).epsilon(1e-9));
        }
    }
}

TEST_CASE("Creedy: missing observed age excludes the person, missing group is an error") {
    auto p = testing::build(30, 25, 35, [](std::size_t i, int a) { return 10.0 + 0.02 * a + 0.01 * static_cast<double>(i); });
    auto m = creedy_fit(p, CreedyMode::nonparametric);
    auto lp = creedy_lifetimes(p, m, 35, {25, 35});
    CHECK(lp.persons.size() == 30);
    CHECK(creedy_lifetimes(p, m, 40, {25, 35}).excluded.size() == 30);
    // nonparametric variance is missing outside the observed ages
    CHECK_THROWS_AS(creedy_lifetimes(p, m, 30, {25, 40}), EstimationError);
}

TEST_CASE("lifecycle estimator recovers the benchmark on a noise-free quadratic profile") {
    // every person shares a quadratic age profile; levels depend on parental income.
    // without the split the window must identify the quartic age terms
    const std::size_t n = 300;
    auto plevel = [](std::size_t i) { return 15.0 + 0.3 * std::sin(static_cast<double>(i)); };
    auto logy = [&](std::size_t i, int a) {
        double h = a - 41.5;
        return 2.0 + 0.4 * plevel(i) + 0.05 * std::cos(3.0 * static_cast<double>(i)) + 0.03 * h - 0.0008 * h * h;
    };
    auto p = testing::build(n, 25, 58, logy, [&](std::size_t i, panel::PersonRecord& r) {
        r.parent_log_income = plevel(i);
        r.educ_group = static_cast<int>(i % 2);
    });
    double bench = estimate_benchmark(p).slope;
    for (auto v : {Variant::BaselineFE, Variant::ParentalQuadFE}) {
        auto spec = EstimatorSpec::for_variant(v);
        spec.smearing = false;
        spec.split = false;
        auto e = estimate(p, spec, {25, 31});
        CHECK(std::abs(e.slope - bench) < 1e-8);
        CHECK(e.n_persons == n);
    }
    // with the young/old split the profile comes from older persons, still exact
    auto spec = EstimatorSpec::for_variant(Variant::BaselineFE);
    spec.smearing = false;
    spec.seed = 4;
    auto e = estimate(p, spec, {25, 30});
    CHECK(e.n_persons < n);
    bool split = false;
    auto est = estimation_panel(p, spec, {25, 30}, split);
    CHECK(split);
    auto life = lifetime_incomes(p);
    std::vector<double> x, y;
    for (const auto& r : est.persons()) {
        if (r.group_tag != panel::GroupTag::young) continue;
        auto i = *p.find(r.person_id);
        x.push_back(p.persons()[i].parent_log_income);
        y.push_back(life[i]);
    }
    CHECK(x.size() == e.n_persons);
    CHECK(std::abs(e.slope - regression::simple_ols(x, y).slope) < 1e-8);
}

TEST_CASE("smearing matches the lognormal correction") {
    // log y = person level + N(0, 0.5^2); E exp(e) = exp(0.125)
    const double sigma = 0.5;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N(0.0, sigma);
    std::vector<std::vector<double>> e(2000, std::vector<double>(34));
    for (auto& row : e)
        for (auto& v : row) v = N(rng);
    auto p = testing::build(2000, 25, 58, [&](std::size_t i, int a) { return 10.0 + 0.001 * static_cast<double>(i) + e[i][static_cast<std::size_t>(a - 25)]; });
    auto sm = smearing_factors(p, {25, 58});
    double s = 0.0;
    for (double v : sm) s += v / 34.0;
    double mean = s / static_cast<double>(sm.size());
    // within-person demeaning plus the quartic age terms shrink the residual variance by (T - 1)/T
    double expect = std::exp(0.5 * sigma * sigma * 33.0 / 34.0);
    CHECK(mean == doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("levels mode sums predicted levels") {
    auto p = testing::build(60, 25, 58, [](std::size_t i, int) { return 9.0 + 0.01 * static_cast<double>(i % 20); },
                            [](std::size_t i, panel::PersonRecord& r) { r.parent_log_income = 15.0 + 0.01 * static_cast<double>(i % 20); });
    auto spec = EstimatorSpec::for_variant(Variant::BaselineFE);
    spec.mode = Mode::levels;
    spec.smearing = false;
    spec.split = false;
    auto e = estimate(p, spec, {25, 30});
    CHECK(e.slope == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("spec validation") {
    auto s = EstimatorSpec::for_variant(Variant::ParentalQuadNoFE);
    CHECK_FALSE(s.fe);
    CHECK_NOTHROW(s.validate());
    s.fe = true;
    CHECK_THROWS(s.validate());
    auto b = EstimatorSpec::for_variant(Variant::BaselineFE);
    b.fe = false;
    CHECK_THROWS(b.validate());
    auto l = EstimatorSpec::for_variant(Variant::ParentalQuadFE);
    l.mode = Mode::levels;
    CHECK_THROWS(l.validate());
    l.smearing = false;
    CHECK_NOTHROW(l.validate());
    l.parent_income_degree = 5;
    CHECK_THROWS(l.validate());
    CHECK(parse_variant("ParentalQuadFE") == Variant::ParentalQuadFE);
    CHECK_FALSE(parse_variant("nope"));
    CHECK(variant_name(Variant::SlopeLevelQuad) == "SlopeLevelQuad");
}

TEST_CASE("crossing age interpolates the first crossing of one") {
    CHECK(*crossing_age({28, 32, 36}, {0.6, 0.8, 1.2}) == doctest::Approx(34.0));
    CHECK(*crossing_age({28, 32}, {1.0, 1.1}) == 28.0);
    CHECK_FALSE(crossing_age({28, 32}, {0.5, 0.9}));
    CHECK(*crossing_age({28, 32, 36, 40}, {0.9, 1.1, 0.8, 1.3}) == doctest::Approx(30.0));
}

TEST_CASE("thinning keeps at most max_obs inside the window and leaves the rest") {
    auto p = testing::build(50, 25, 58, [](std::size_t, int a) { return 10.0 + 0.01 * a; });
    auto q = thin_observations(p, 3, {25, 35}, 7);
    for (std::size_t i = 0; i < q.n_persons(); ++i) {
        int in = 0, out = 0;
        std::set<int> ages;
        for (const auto& o : q.observations_of(i)) {
            (o.age <= 35 ? in : out)++;
            ages.insert(o.age);
        }
        CHECK(in == 3);
        CHECK(out == 23);
        CHECK(ages.size() == 26u);
    }
    auto r = thin_observations(p, 3, {25, 35}, 7);
    for (std::size_t k = 0; k < q.n_obs(); ++k) CHECK(q.observations()[k].age == r.observations()[k].age);
    CHECK_THROWS(thin_observations(p, 1, {25, 35}, 7));
}

TEST_CASE("subsampling draws distinct persons, one substream per draw") {
    auto p = testing::build(640, 25, 26, [](std::size_t, int) { return 10.0; });
    auto a = subsample(p, 64, 1, 0), b = subsample(p, 64, 1, 0), c = subsample(p, 64, 1, 1);
    CHECK(a.n_persons() == 10);
    std::set<std::string> ids;
    for (const auto& r : a.persons()) ids.insert(r.person_id);
    CHECK(ids.size() == 10);
    bool same = true, differ = false;
    for (std::size_t i = 0; i < 10; ++i) {
        same = same && a.persons()[i].person_id == b.persons()[i].person_id;
        differ = differ || a.persons()[i].person_id != c.persons()[i].person_id;
    }
    CHECK(same);
    CHECK(differ);
    CHECK_THROWS(subsample(p, 0, 1, 0));
    CHECK_THROWS(subsample(p, 10000, 1, 0));
}

TEST_CASE("summary statistics") {
    auto s = summarize({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == 2.5);
    CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(summarize({}).n == 0);
}

TEST_CASE("trends: one estimate per cohort group and a normalized profile") {
    income::SimConfig c;
    c.n_persons = 3000;
    c.cohort_min = 1950;
    c.cohort_max = 1969;
    c.seed = 2;
    auto p = income::simulate_panel(c);
    TrendsSpec t;
    t.cohort_breaks = {1955, 1960, 1965};
    auto r = estimate_trends(p, t);
    REQUIRE(r.groups.size() == 4);
    for (const auto& g : r.groups) {
        CHECK(g.truth.has_value());
        CHECK(g.estimate.n_persons > 500);
        CHECK(std::abs(g.estimate.slope - *g.truth) < 0.15);
    }
    CHECK(r.profile.size() == 34);
    CHECK(r.profile[0] == 0.0);
    CHECK(*std::max_element(r.profile.begin(), r.profile.end()) == doctest::Approx(1.0));
    CHECK(r.interactions.size() == 3);
    auto d = direct_by_group(p, t.cohort_breaks, {35, 40});
    CHECK(d.size() == 4);
    t.cohort_breaks.clear();
    CHECK_THROWS_AS(estimate_trends(p, t), EstimationError);
}

TEST_CASE("geiv diagnostics on simulated data") {
    income::GeivSimConfig g;
    g.n_persons = 4000;
    auto p = income::simulate_geiv_panel(g);
    auto r = estimate_benchmark(p);
    auto d = geiv_diagnostics(p, {28, 35, 45, 52});
    CHECK(d.benchmark == r.slope);
    CHECK(d.lambda.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) CHECK(d.ratio[k] == doctest::Approx(d.beta[k] / d.lambda[k]));
    CHECK(d.lambda.front() < d.lambda.back());
    CHECK_THROWS(geiv_diagnostics(p, {30}));
}
