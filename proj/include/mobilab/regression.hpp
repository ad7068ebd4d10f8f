#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mobilab/panel.hpp"

namespace mobilab::regression {

using panel::Panel;

enum class Variable {
    age,
    educ_group,
    parent_educ_group,
    cohort_group,
    cohort,
    year,
    parent_log_income,
    estimated_intercept,
    standard_profile,
    family_size,
    birth_order,
    immigrant,
    skill_cog,
    skill_noncog,
};

std::string_view variable_name(Variable v);

enum class FactorKind { age_poly, categorical, continuous };

struct Factor {
    FactorKind kind = FactorKind::continuous;
    Variable var = Variable::age;
    int degree = 1;          // age_poly: powers 1..degree
    std::vector<int> levels; // categorical: levels that get a dummy; empty = observed levels minus the first

    static Factor age(int degree) { return {FactorKind::age_poly, Variable::age, degree, {}}; }
    static Factor cat(Variable v, std::vector<int> levels = {}) { return {FactorKind::categorical, v, 1, std::move(levels)}; }
    static Factor num(Variable v) { return {FactorKind::continuous, v, 1, {}}; }
};

// A main effect (one factor) or an interaction (two or three factors).
struct Term {
    std::vector<Factor> factors;
};

enum class FeKind { none, person, parent_income_intercept };
enum class Response { log_income, level_income };

struct DesignSpec {
    Response response = Response::log_income;
    std::vector<Term> terms;
    FeKind fe = FeKind::none;
    bool robust = true;

    void validate() const;
};

struct DesignContext {
    std::optional<double> age_center;          // default: panel mid-age
    std::vector<double> estimated_intercepts;  // by person index
    std::vector<double> standard_profile;      // by age, starting at profile_age_min
    int profile_age_min = 0;
    std::vector<int> cohort_breaks;            // lower bounds of groups 1..G-1

    int cohort_group(int cohort) const;
    double profile(int age) const;
};

// Everything needed to rebuild a design row outside the estimation sample.
struct Layout {
    DesignSpec spec;
    std::vector<std::string> names;
    bool intercept = false;
    bool parent_intercept = false;
    double age_center = 0.0;
    std::vector<std::vector<std::vector<int>>> levels;  // [term][factor] resolved categorical levels
};

struct Design {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::size_t> obs_rows;  // panel observation index per row
    std::vector<std::size_t> person;    // person index per row
    std::size_t n_skipped = 0;          // rows dropped for missing covariates
    Layout layout;
};

// `rows` restricts the design to those observation indices; empty means all.
Design build_design(const Panel& p, const DesignSpec& spec, const DesignContext& ctx = {},
                    const std::vector<std::size_t>& rows = {});

// One design row for (person, age). Without a year, year dummies are zero.
void design_row(const Layout& layout, const Panel& p, std::size_t person, int age, std::optional<int> year,
                const DesignContext& ctx, double* out);

class RegressionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CollinearityError : public RegressionError {
public:
    CollinearityError(const std::string& what, std::vector<std::string> cols)
        : RegressionError(what), columns(std::move(cols)) {}
    std::vector<std::string> columns;
};

struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
    std::vector<double> fixed_effects;  // by group (person) index; NaN when absent; empty without FE
    Eigen::VectorXd residuals;
    double r2 = 0.0;
    std::size_t n_obs = 0;
    std::size_t n_params = 0;  // slopes plus absorbed effects
    Layout layout;

    std::optional<std::size_t> index_of(std::string_view name) const;
    double coefficient(std::string_view name) const;
    double std_error(std::string_view name) const;
};

// groups == nullptr: plain OLS. Otherwise one-way fixed effects absorbed
// by demeaning within group ids in [0, n_groups).
FitResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::size_t>* groups,
              std::size_t n_groups, std::vector<std::string> names, bool robust = true);

FitResult fit(const Design& d, std::size_t n_persons);

struct Residualized {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};
Residualized residualize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::size_t>& groups,
                         std::size_t n_groups);

struct Prediction {
    std::vector<std::size_t> persons;  // rows of `values`
    std::vector<int> ages;             // columns of `values`
    Eigen::MatrixXd values;
    std::vector<std::size_t> excluded;  // persons without an estimated fixed effect
};

Prediction predict(const FitResult& fit, const Panel& p, const std::vector<std::size_t>& persons,
                   const std::vector<int>& ages, const DesignContext& ctx = {});

// Slope-only convenience: OLS of y on (1, x) with HC1 standard errors.
struct SimpleOls {
    double intercept = 0.0;
    double slope = 0.0;
    double se = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};
SimpleOls simple_ols(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mobilab::regression
