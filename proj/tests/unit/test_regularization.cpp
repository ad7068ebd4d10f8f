#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "mobilab/income_process.hpp"
#include "mobilab/regularization.hpp"

using namespace mobilab;
using namespace mobilab::regularization;

namespace {

struct Problem {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::string> names;
};

// Correlated columns with uneven scales; y depends on the first three.
Problem make(int n, int p, unsigned seed, double signal = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N;
    Problem d;
    d.X.resize(n, p);
    d.y.resize(n);
    for (int r = 0; r < n; ++r) {
        double common = N(rng);
        for (int j = 0; j < p; ++j) d.X(r, j) = (0.5 * common + N(rng)) * (1.0 + j);
        d.y(r) = signal * (1.0 * d.X(r, 0) - 0.3 * d.X(r, 1) + 0.1 * d.X(r, 2)) + N(rng);
    }
    for (int j = 0; j < p; ++j) d.names.push_back("x" + std::to_string(j));
    return d;
}

}  // namespace

TEST_CASE("config validation") {
    PenaltyConfig c;
    CHECK_NOTHROW(c.validate());
    c.lambda = -1.0;
    CHECK_THROWS(c.validate());
    c.lambda = 0.1;
    c.alpha = 1.5;
    CHECK_THROWS(c.validate());
    c.alpha = 1.0;
    c.tol = 0.0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("Gram statistics add and subtract") {
    auto d = make(60, 4, 1);
    auto all = Gram::from_data(d.X, d.y, d.names);
    auto top = Gram::from_data(d.X.topRows(25), d.y.head(25), d.names);
    auto rest = Gram::from_data(d.X.bottomRows(35), d.y.tail(35), d.names);
    auto sum = top + rest;
    CHECK((sum.xx - all.xx).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(sum.yy - all.yy) < 1e-9);
    CHECK(sum.n == 60.0);
    auto diff = all - top;
    CHECK((diff.xy - rest.xy).cwiseAbs().maxCoeff() < 1e-9);
    top.add(d.X.bottomRows(35), d.y.tail(35));
    CHECK((top.xx - all.xx).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("lambda = 0 matches OLS") {
    auto d = make(300, 6, 2);
    PenaltyConfig c;
    auto f = cd_fit(d.X, d.y, d.names, c);
    Eigen::VectorXd ols = d.X.colPivHouseholderQr().solve(d.y);
    CHECK((f.coef - ols).cwiseAbs().maxCoeff() < 1e-8);
    auto r = regression::fit(d.X, d.y, nullptr, 0, d.names);
    CHECK((f.coef - r.coef).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(f.n_selected == 6);
}

TEST_CASE("single standardized predictor is soft-thresholded") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N;
    const int n = 200;
    Eigen::MatrixXd X(n, 1);
    Eigen::VectorXd y(n);
    for (int r = 0; r < n; ++r) {
        X(r, 0) = N(rng);
        y(r) = 0.4 * X(r, 0) + N(rng);
    }
    X /= std::sqrt(X.squaredNorm() / n);  // x'x/n = 1
    double ols = X.col(0).dot(y) / X.squaredNorm();
    for (double lam : {0.0, 0.05, 0.2, 0.39, 1.0}) {
        PenaltyConfig c;
        c.lambda = lam;
        auto f = cd_fit(X, y, {"x"}, c);
        double expect = std::copysign(std::max(std::abs(ols) - lam, 0.0), ols);
        CHECK(std::abs(f.coef(0) - expect) < 1e-10);
    }
}

TEST_CASE("KKT conditions hold for lasso and elastic net") {
    auto d = make(400, 12, 4);
    auto g = Gram::from_data(d.X, d.y, d.names);
    for (double alpha : {1.0, 0.75, 0.5, 0.1}) {
        for (bool standardize : {true, false}) {
            PenaltyConfig c;
            c.alpha = alpha;
            c.standardize = standardize;
            c.unpenalized = {"x5"};
            double lmax = lambda_max(g, c);
            for (double frac : {0.5, 0.1, 0.01}) {
                c.lambda = frac * lmax;
                auto f = cd_fit(g, c);
                CHECK(kkt_residual(g, c, f.coef) <= 1e-6);
                // penalty-exempt column always unconstrained: its gradient is zero
                std::size_t nz = 0;
                for (std::size_t j = 0; j < f.names.size(); ++j)
                    if (f.penalized[j] && f.coef(static_cast<Eigen::Index>(j)) != 0.0) ++nz;
                CHECK(nz == f.n_selected);
                CHECK(f.selected.size() == f.n_selected);
            }
        }
    }
}

TEST_CASE("null threshold zeroes every penalized coefficient exactly") {
    auto d = make(250, 8, 5);
    auto g = Gram::from_data(d.X, d.y, d.names);
    PenaltyConfig c;
    c.unpenalized = {"x0"};
    double lmax = lambda_max(g, c);
    c.lambda = lmax;
    auto f = cd_fit(g, c);
    CHECK(f.n_selected == 0);
    for (Eigen::Index j = 1; j < 8; ++j) CHECK(f.coef(j) == 0.0);
    CHECK(f.coef(0) != 0.0);
    c.lambda = 0.98 * lmax;
    CHECK(cd_fit(g, c).n_selected >= 1);

    // unstandardized, no exempt columns: threshold is max |x'y|/n
    PenaltyConfig raw;
    raw.standardize = false;
    double m = (d.X.transpose() * d.y).cwiseAbs().maxCoeff() / 250.0;
    CHECK(lambda_max(g, raw) == doctest::Approx(m).epsilon(1e-12));
    raw.lambda = m;
    auto z = cd_fit(g, raw);
    CHECK(z.coef.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("warm-started path: each objective at most the previous solution's") {
    auto d = make(300, 10, 6);
    auto g = Gram::from_data(d.X, d.y, d.names);
    PenaltyConfig c;
    c.alpha = 0.75;
    auto grid = lambda_grid(lambda_max(g, c), 30, 1e-3);
    CHECK(grid.size() == 30);
    CHECK(grid.back() == doctest::Approx(grid.front() * 1e-3));
    auto path = lasso_path(g, c, grid);
    REQUIRE(path.size() == grid.size());
    for (std::size_t k = 1; k < path.size(); ++k) {
        PenaltyConfig at = c;
        at.lambda = grid[k];
        CHECK(path[k].objective <= objective(g, at, path[k - 1].coef) + 1e-12);
        CHECK(kkt_residual(g, at, path[k].coef) <= 1e-6);
    }
    CHECK(path.front().n_selected == 0);
    CHECK(path.back().n_selected == 10);
}

TEST_CASE("selection is invariant to rescaling a penalized column") {
    auto d = make(300, 8, 7);
    PenaltyConfig c;
    auto g = Gram::from_data(d.X, d.y, d.names);
    c.lambda = 0.05 * lambda_max(g, c);
    auto a = cd_fit(d.X, d.y, d.names, c);
    Eigen::MatrixXd Xs = d.X;
    Xs.col(3) *= 1000.0;
    Xs.col(5) *= 1e-3;
    auto b = cd_fit(Xs, d.y, d.names, c);
    CHECK(a.selected == b.selected);
    CHECK(std::abs(a.coef(3) - 1000.0 * b.coef(3)) < 1e-8);
    CHECK(std::abs(a.coef(5) - 1e-3 * b.coef(5)) < 1e-8);
}

TEST_CASE("zero-variance columns are inert") {
    auto d = make(100, 3, 8);
    Eigen::MatrixXd X(100, 4);
    X << d.X, Eigen::VectorXd::Zero(100);
    PenaltyConfig c;
    c.lambda = 0.01;
    auto f = cd_fit(X, d.y, {"a", "b", "c", "zero"}, c);
    CHECK(f.inert[3]);
    CHECK(f.coef(3) == 0.0);
    CHECK(kept_columns(f).size() <= 3);
}

TEST_CASE("non-convergence reports the last iterate and trace") {
    auto d = make(200, 10, 9);
    PenaltyConfig c;
    c.lambda = 1e-4;
    c.max_iter = 1;
    c.tol = 1e-14;
    try {
        cd_fit(d.X, d.y, d.names, c);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.last_iterate.size() == 10);
        CHECK_FALSE(e.objective_trace.empty());
    }
}

TEST_CASE("folds: deterministic, balanced, seeded") {
    auto a = assign_folds(23, 5, 1), b = assign_folds(23, 5, 1), c = assign_folds(23, 5, 2);
    CHECK(a == b);
    CHECK(a != c);
    std::vector<int> count(5, 0);
    for (int f : a) count[static_cast<std::size_t>(f)]++;
    CHECK(*std::min_element(count.begin(), count.end()) == 4);
    CHECK(*std::max_element(count.begin(), count.end()) == 5);
    CHECK_THROWS(assign_folds(10, 1, 1));
}

TEST_CASE("cross-validation: one-point grid, person-level folds, empty fold") {
    auto d = make(200, 5, 10);
    std::vector<std::size_t> groups(200);
    for (std::size_t r = 0; r < 200; ++r) groups[r] = r / 4;  // 50 persons, 4 rows each
    PenaltyConfig c;
    auto one = cv_select(d.X, d.y, groups, 50, d.names, c, {0.3}, {0.5}, 5, 3);
    CHECK(one.lambda == 0.3);
    CHECK(one.alpha == 0.5);
    CHECK(one.mse.size() == 1);
    CHECK(one.mse[0].size() == 1);
    CHECK(one.fold_of_group.size() == 50);
    // fewer persons than folds leaves a fold without rows
    std::vector<std::size_t> few(200);
    for (std::size_t r = 0; r < 200; ++r) few[r] = r % 3;
    CHECK_THROWS(cv_select(d.X, d.y, few, 3, d.names, c, {0.3}, {1.0}, 5, 3));

    // the fold surface equals explicit held-out error
    auto full = cv_select(d.X, d.y, groups, 50, d.names, c, {0.2, 0.02}, {1.0}, 5, 3);
    double sse = 0.0;
    for (int k = 0; k < 5; ++k) {
        std::vector<Eigen::Index> tr, te;
        for (std::size_t r = 0; r < 200; ++r) (full.fold_of_group[groups[r]] == k ? te : tr).push_back(static_cast<Eigen::Index>(r));
        PenaltyConfig at = c;
        at.lambda = 0.02;
        auto f = cd_fit(d.X(tr, Eigen::all), d.y(tr), d.names, at);
        sse += (d.y(te) - d.X(te, Eigen::all) * f.coef).squaredNorm();
    }
    CHECK(full.mse[0][1] == doctest::Approx(sse / 200.0).epsilon(1e-7));
}

TEST_CASE("pure-noise response selects a lambda at or near the grid maximum") {
    // near: among the 5 largest of 50 grid points (at least 0.47 lambda_max)
    int hits = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        auto d = make(300, 10, 100 + static_cast<unsigned>(s), 0.0);
        std::vector<std::size_t> groups(300);
        for (std::size_t r = 0; r < 300; ++r) groups[r] = r / 3;
        PenaltyConfig c;
        auto g = Gram::from_data(d.X, d.y, d.names);
        auto grid = lambda_grid(lambda_max(g, c), 50, 1e-4);
        auto cv = cv_select(d.X, d.y, groups, 100, d.names, c, grid, {1.0}, 5, static_cast<std::uint64_t>(s));
        if (cv.lambda >= grid[4]) ++hits;
    }
    MESSAGE("null selections: " << hits << " of " << seeds);
    CHECK(hits >= 16);
}

TEST_CASE("postselection OLS") {
    auto d = make(250, 6, 11);
    // all columns: plain OLS
    auto all = postselection_ols(d.X, d.y, d.names, {0, 1, 2, 3, 4, 5});
    auto ols = regression::fit(d.X, d.y, nullptr, 0, d.names);
    CHECK((all.coef - ols.coef).cwiseAbs().maxCoeff() < 1e-12);
    // selection from a lambda = 0 fit reproduces its coefficients
    PenaltyConfig c;
    auto f = cd_fit(d.X, d.y, d.names, c);
    auto ps = postselection_ols(d.X, d.y, d.names, kept_columns(f));
    CHECK((ps.coef - f.coef).cwiseAbs().maxCoeff() < 1e-8);
    // nothing penalized survives: only the exempt columns remain
    c.unpenalized = {"x1", "x2"};
    auto g = Gram::from_data(d.X, d.y, d.names);
    c.lambda = lambda_max(g, c);
    auto z = cd_fit(g, c);
    auto keep = kept_columns(z);
    CHECK(keep == std::vector<std::size_t>{1, 2});
    auto red = postselection_ols(d.X, d.y, d.names, keep);
    auto direct = regression::fit(d.X(Eigen::all, std::vector<Eigen::Index>{1, 2}), d.y, nullptr, 0, {"x1", "x2"});
    CHECK((red.coef - direct.coef).cwiseAbs().maxCoeff() < 1e-12);
    // collinear selection is a regression error
    Eigen::MatrixXd Xc(250, 3);
    Xc << d.X.leftCols(2), d.X.col(0) + d.X.col(1);
    CHECK_THROWS_AS(postselection_ols(Xc, d.y, {"a", "b", "c"}, {0, 1, 2}), regression::CollinearityError);
}

TEST_CASE("default candidate set has 233 columns on the young window") {
    income::SimConfig c;
    c.n_persons = 3000;
    c.extras = true;
    c.age_min = 25;
    c.age_max = 27;
    auto p = income::simulate_panel(c);
    int cmin = p.persons()[0].cohort;
    for (const auto& r : p.persons()) cmin = std::min(cmin, r.cohort);
    auto cat = default_catalog(cmin);
    CHECK(cat.size() == 9);
    auto d = regression::build_design(p, candidate_design(cat));
    CHECK(d.X.cols() == 233);
    CHECK(d.layout.names[0] == "age");
    CHECK(d.layout.names[1] == "age^2");
    std::set<std::string> names(d.layout.names.begin(), d.layout.names.end());
    CHECK(names.size() == 233);
    CHECK(names.count("parent_log_income:age"));
    CHECK(names.count("parent_log_income:age^2"));
}
