#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mobilab/panel.hpp"

namespace mobilab::income {

using panel::Panel;

struct HipParams {
    std::array<double, 4> theta = {12.0, 0.06, -0.0015, 0.0};  // cubic in experience
    double sigma2_alpha = 0.03;
    double sigma2_beta = 0.0002;
    double sigma_alpha_beta = -0.001;
    double rho = 0.9;
    std::vector<double> pi;   // by calendar year from the first simulated year; empty or short = 1
    std::vector<double> phi;  // same indexing as pi
    double sigma2_eta = 0.01;
    double sigma2_eps = 0.02;

    void validate() const;  // throws std::invalid_argument
};

struct EducProfile {
    double level = 0.0;
    double linear = 0.0;
    double quad = 0.0;
    double noise_scale = 1.0;  // multiplies the persistent and transitory components
};

struct FamilyLink {
    double parent_mean = 15.5;  // parental log lifetime income
    double parent_var = 0.25;
    double load_intercept = 0.071;
    double load_growth_linear = 0.010;
    double load_growth_quad = -0.00021;
    // rows: parental-income quartile, columns: education group
    std::vector<std::vector<double>> educ_probs_by_parent = {
        {0.55, 0.25, 0.15, 0.05}, {0.35, 0.30, 0.25, 0.10}, {0.15, 0.30, 0.35, 0.20}, {0.05, 0.15, 0.30, 0.50}};
    std::vector<EducProfile> educ_profiles = {
        {0.0, 0.0, 0.0, 1.5}, {0.05, 0.004, -0.00008, 1.25}, {0.10, 0.008, -0.00016, 1.0}, {0.15, 0.014, -0.00028, 0.75}};

    void validate() const;
};

// Cohort-varying parental growth loadings, for trend experiments.
struct CohortTrend {
    std::vector<int> breaks;                // lower bounds of cohort groups 1..G-1
    std::vector<double> growth_multiplier;  // per group; multiplies both growth loadings
    std::optional<int> last_observed_year;  // drop observations after this year
};

struct SimConfig {
    std::size_t n_persons = 20000;
    int cohort_min = 1950;
    int cohort_max = 1959;
    int age_min = 25;
    int age_max = 58;
    std::uint64_t seed = 1;
    HipParams hip;
    FamilyLink link;
    CohortTrend trend;
    bool extras = false;  // family size, birth order, immigrant flag, skill scores

    void validate() const;
    int n_cohort_groups() const { return static_cast<int>(trend.breaks.size()) + 1; }
    int cohort_group(int cohort) const;
};

Panel simulate_panel(const SimConfig& config);

struct Families {
    Panel children;
    Panel fathers;  // one father per child, sharing family_id; log lifetime equals the child's parent_log_income
};
Families simulate_families(const SimConfig& config);

// Deterministic lifetime profile value at experience h (no shocks, no person effects).
double common_profile(const HipParams& hip, double h);

// Linear projection model: y_t = mu_t + lambda_t (y* - c) + u_t, with
// y* = c + beta (p - mean) + v. Truth is stored as y*.
struct GeivSimConfig {
    std::size_t n_persons = 20000;
    int age_min = 25;
    int age_max = 58;
    std::uint64_t seed = 1;
    double c = 15.5;
    double beta = 0.25;
    double parent_mean = 15.5;
    double parent_sd = 0.5;
    double sigma_v = 0.5;
    std::vector<double> mu;      // by age; empty = common profile
    std::vector<double> lambda;  // by age; empty = linear from 0.5 to 1.5
    double sigma_u = 0.3;
    double u_parent_loading = 0.0;
};
Panel simulate_geiv_panel(const GeivSimConfig& config);

// ---------------------------------------------------------------------------
// Growth regressions
// ---------------------------------------------------------------------------

enum class GrowthControl { none, education };

struct GrowthRow {
    std::string label;  // e.g. "25-30"
    int age_from = 0;
    int age_to = 0;
    double coef = 0.0;
    double se = 0.0;
    std::size_t n = 0;
    bool empty = false;
};

struct GrowthOptions {
    std::vector<int> end_ages = {30, 35, 40, 45, 50, 55};
    int span = 5;
    GrowthControl control = GrowthControl::none;
    double median_share = 0.2;   // drop incomes below this share of the yearly median
    bool remove_year_effects = true;
};

// Δ log income over `span` years on parent log income / 100, interacted with age bins.
std::vector<GrowthRow> growth_gradient_table(const Panel& children, const GrowthOptions& opt = {});

struct GrowthOnGrowthOptions {
    std::vector<AgeWindow> windows = {{25, 30}, {30, 35}, {35, 40}};
    bool control_parent_level = false;  // father log lifetime income and education
};

// Child Δ log income on father Δ log income over the same ages, linked by family_id.
std::vector<GrowthRow> growth_on_growth_table(const Panel& children, const Panel& fathers,
                                              const GrowthOnGrowthOptions& opt = {});

}  // namespace mobilab::income
