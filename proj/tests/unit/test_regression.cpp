#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "mobilab/regression.hpp"
#include "support.hpp"

using namespace mobilab::regression;

namespace {

struct FeData {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::size_t> g;
    std::size_t G;
};

FeData fe_data(std::size_t G, std::size_t per, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N;
    FeData d;
    d.G = G;
    const auto n = static_cast<Eigen::Index>(G * per);
    d.X.resize(n, 2);
    d.y.resize(n);
    for (std::size_t i = 0; i < G; ++i) {
        double a = 2.0 * N(rng);
        for (std::size_t t = 0; t < per; ++t) {
            auto r = static_cast<Eigen::Index>(i * per + t);
            d.X(r, 0) = N(rng) + 0.5 * a;
            d.X(r, 1) = N(rng) * (1.0 + 0.2 * t);
            d.y(r) = a + 0.7 * d.X(r, 0) - 0.3 * d.X(r, 1) + N(rng) * (0.5 + std::abs(d.X(r, 0)));
            d.g.push_back(i);
        }
    }
    return d;
}

// Full dummy-variable design [X | D] for the LSDV oracle.
Eigen::MatrixXd lsdv(const FeData& d) {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(d.X.rows(), d.X.cols() + static_cast<Eigen::Index>(d.G));
    Z.leftCols(d.X.cols()) = d.X;
    for (Eigen::Index r = 0; r < d.X.rows(); ++r) Z(r, d.X.cols() + static_cast<Eigen::Index>(d.g[static_cast<std::size_t>(r)])) = 1.0;
    return Z;
}

Eigen::VectorXd hc1(const Eigen::MatrixXd& Z, const Eigen::VectorXd& e) {
    const double n = static_cast<double>(Z.rows()), k = static_cast<double>(Z.cols());
    Eigen::MatrixXd A = (Z.transpose() * Z).inverse();
    Eigen::MatrixXd meat = Z.transpose() * e.array().square().matrix().asDiagonal() * Z;
    Eigen::MatrixXd V = A * meat * A * n / (n - k);
    return V.diagonal().cwiseSqrt();
}

}  // namespace

TEST_CASE("within estimator equals LSDV on 50 persons x 5 obs") {
    auto d = fe_data(50, 5, 1);
    auto f = fit(d.X, d.y, &d.g, d.G, {"x1", "x2"});
    Eigen::MatrixXd Z = lsdv(d);
    Eigen::VectorXd b = Z.colPivHouseholderQr().solve(d.y);
    for (int j = 0; j < 2; ++j) CHECK(f.coef(j) == doctest::Approx(b(j)).epsilon(1e-10));
    for (std::size_t i = 0; i < d.G; ++i) CHECK(std::abs(f.fixed_effects[i] - b(2 + static_cast<Eigen::Index>(i))) < 1e-8);
    // slope block of the LSDV sandwich, k counting every dummy
    Eigen::VectorXd e = d.y - Z * b;
    Eigen::VectorXd se = hc1(Z, e);
    for (int j = 0; j < 2; ++j) CHECK(std::abs(f.se(j) - se(j)) < 1e-8);
    CHECK(f.n_params == 52);
}

TEST_CASE("residualized slopes equal the joint fit (FWL)") {
    auto d = fe_data(40, 6, 2);
    auto joint = fit(d.X, d.y, &d.g, d.G, {"x1", "x2"});
    auto r = residualize(d.X, d.y, d.g, d.G);
    Eigen::VectorXd b = r.X.colPivHouseholderQr().solve(r.y);
    CHECK(std::abs(joint.coef(0) - b(0)) < 1e-8);
    CHECK(std::abs(joint.coef(1) - b(1)) < 1e-8);
    // residualized columns have zero mean within each group
    for (std::size_t i = 0; i < d.G; ++i) CHECK(std::abs(r.X.middleRows(static_cast<Eigen::Index>(i * 6), 6).col(0).sum()) < 1e-10);
}

TEST_CASE("HC1 standard errors match a brute-force sandwich") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N;
    const int n = 400;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int r = 0; r < n; ++r) {
        X(r, 0) = 1.0;
        X(r, 1) = N(rng);
        X(r, 2) = N(rng) + X(r, 1);
        y(r) = 1.0 + 2.0 * X(r, 1) - X(r, 2) + N(rng) * std::exp(0.5 * X(r, 1));
    }
    auto f = fit(X, y, nullptr, 0, {"(Intercept)", "a", "b"});
    Eigen::VectorXd b = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    Eigen::VectorXd se = hc1(X, y - X * b);
    for (int j = 0; j < 3; ++j) {
        CHECK(std::abs(f.coef(j) - b(j)) < 1e-10);
        CHECK(std::abs(f.se(j) - se(j)) < 1e-8);
    }
    auto plain = fit(X, y, nullptr, 0, {"(Intercept)", "a", "b"}, false);
    Eigen::VectorXd e = y - X * b;
    Eigen::VectorXd cl = ((X.transpose() * X).inverse() * e.squaredNorm() / (n - 3)).diagonal().cwiseSqrt();
    for (int j = 0; j < 3; ++j) CHECK(std::abs(plain.se(j) - cl(j)) < 1e-10);
}

TEST_CASE("collinear columns are named in the error") {
    auto d = fe_data(10, 4, 4);
    Eigen::MatrixXd X(d.X.rows(), 3);
    X << d.X, 2.0 * d.X.col(0) - d.X.col(1);
    try {
        fit(X, d.y, &d.g, d.G, {"x1", "x2", "combo"});
        FAIL("expected CollinearityError");
    } catch (const CollinearityError& e) {
        CHECK(e.columns.size() == 3);
    }
    // a time-invariant column is absorbed by the person effects
    Eigen::MatrixXd Xc(d.X.rows(), 3);
    Xc << d.X, Eigen::VectorXd::Zero(d.X.rows());
    for (Eigen::Index r = 0; r < Xc.rows(); ++r) Xc(r, 2) = static_cast<double>(d.g[static_cast<std::size_t>(r)] % 3);
    CHECK_THROWS_AS(fit(Xc, d.y, &d.g, d.G, {"x1", "x2", "z"}), CollinearityError);
}

TEST_CASE("fewer rows than parameters is an error") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(2, 3);
    Eigen::VectorXd y = Eigen::VectorXd::Random(2);
    CHECK_THROWS_AS(fit(X, y, nullptr, 0, {"a", "b", "c"}), RegressionError);
}

TEST_CASE("simple OLS on an exact line") {
    std::vector<double> x = {1, 2, 3, 4, 5}, y;
    for (double v : x) y.push_back(3.0 - 0.5 * v);
    auto s = simple_ols(x, y);
    CHECK(s.slope == doctest::Approx(-0.5));
    CHECK(s.intercept == doctest::Approx(3.0));
    CHECK(s.r2 == doctest::Approx(1.0));
    CHECK(s.n == 5);
}

TEST_CASE("design columns: counts and names") {
    auto p = testing::build(30, 25, 40, [](std::size_t i, int a) { return 10.0 + 0.01 * a + 0.001 * i; },
                            [](std::size_t i, mobilab::panel::PersonRecord& r) {
                                r.educ_group = static_cast<int>(i % 4);
                                r.parent_educ_group = static_cast<int>((i / 4) % 3);
                                r.parent_log_income = 15.0 + 0.01 * static_cast<double>(i);
                            });
    DesignSpec s;
    s.fe = FeKind::person;
    s.terms.push_back({{Factor::age(4)}});
    s.terms.push_back({{Factor::cat(Variable::educ_group), Factor::age(4)}});
    s.terms.push_back({{Factor::num(Variable::parent_log_income), Factor::age(2)}});
    s.terms.push_back({{Factor::cat(Variable::parent_educ_group), Factor::age(1)}});
    auto d = build_design(p, s);
    // 4 + 3 non-reference education levels x 4 + 2 + 2 non-reference parental levels x 1
    CHECK(d.X.cols() == 4 + 3 * 4 + 2 + 2);
    CHECK(d.layout.names[0] == "age");
    CHECK(d.layout.names[3] == "age^4");
    CHECK(d.layout.names[4] == "educ_group=1:age");
    CHECK(d.X.rows() == 30 * 16);
    CHECK(d.layout.age_center == doctest::Approx(41.5));

    DesignSpec bad = s;
    bad.terms.push_back({{Factor::age(4)}});
    CHECK_THROWS(bad.validate());
    DesignSpec deg;
    deg.terms.push_back({{Factor::age(9)}});
    CHECK_THROWS(deg.validate());
}

TEST_CASE("prediction reproduces an exact polynomial profile") {
    // y = person effect + 0.05 h - 0.001 h^2 with h = age - 41.5
    auto logy = [](std::size_t i, int a) {
        double h = a - 41.5;
        return 10.0 + 0.1 * static_cast<double>(i % 7) + 0.05 * h - 0.001 * h * h;
    };
    auto p = testing::build(20, 25, 35, logy);
    DesignSpec s;
    s.fe = FeKind::person;
    s.terms.push_back({{Factor::age(2)}});
    auto d = build_design(p, s);
    auto f = fit(d, p.n_persons());
    CHECK(f.coefficient("age") == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(f.coefficient("age^2") == doctest::Approx(-0.001).epsilon(1e-9));
    std::vector<std::size_t> who = {0, 3, 19};
    std::vector<int> ages = {25, 45, 58};
    auto pr = predict(f, p, who, ages);
    for (std::size_t r = 0; r < who.size(); ++r)
        for (std::size_t k = 0; k < ages.size(); ++k)
            CHECK(std::abs(pr.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) - logy(who[r], ages[k])) < 1e-9);
}
