#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mobilab/panel.hpp"
#include "mobilab/regression.hpp"

namespace mobilab::estimators {

using panel::Panel;

enum class Variant {
    DirectAnnual,
    Benchmark,
    BaselineFE,
    ParentalLinearFE,
    ParentalQuadFE,
    ParentalQuadNoFE,
    SlopeLevelQuad,
    Creedy,
    Trends,
};
std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view s);

enum class Mode { logs, levels };

class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EstimatorSpec {
    Variant variant = Variant::ParentalQuadFE;
    Mode mode = Mode::logs;
    bool parental_income = true;  // used by the parental variants
    bool parental_educ = true;
    int parent_income_degree = 2;
    int parent_educ_degree = 1;
    bool fe = true;
    bool smearing = true;
    AgeWindow prediction_ages{25, 58};
    std::optional<double> bottom_code_predictions;  // levels mode
    int slope_level_iterations = 1;
    bool split = true;  // young/old split at the window's upper age
    panel::SplitMode split_mode = panel::SplitMode::random_assign;
    std::uint64_t seed = 0;
    std::size_t bootstrap_reps = 0;

    // Spec with the variant's fixed settings applied (degrees, fe flag).
    static EstimatorSpec for_variant(Variant v);
    void validate() const;
};

struct IgeEstimate {
    double slope = 0.0;
    double se = 0.0;
    double r2_second_step = 0.0;
    std::optional<double> r2_first_step_lifetime;
    std::size_t n_persons = 0;
    std::size_t n_excluded = 0;  // persons without usable observations or predictions
    std::size_t n_dropped_nonpositive = 0;  // levels mode
    AgeWindow window;
    EstimatorSpec spec;
    std::optional<double> bootstrap_se;
    std::vector<std::string> flags;
};

// Lifetime-income regressor and regressand pairs used in a second step.
struct SecondStep {
    std::vector<std::size_t> persons;
    std::vector<double> parent;
    std::vector<double> child;
};
IgeEstimate second_step(const SecondStep& s);

// True log lifetime income per person: the stored truth, or the log of the
// summed levels when the person has every age in the panel bounds.
std::vector<double> lifetime_incomes(const Panel& p);

IgeEstimate estimate_benchmark(const Panel& p);
IgeEstimate estimate_direct_annual(const Panel& p, AgeWindow window);

struct ProfileFit {
    regression::FitResult fit;
    regression::DesignContext ctx;
    EstimatorSpec spec;
    AgeWindow window;
};

regression::DesignSpec first_step_design(const EstimatorSpec& spec);
ProfileFit first_step_fit(const Panel& p, const EstimatorSpec& spec, AgeWindow window);
ProfileFit slope_level_fit(const Panel& p, const EstimatorSpec& spec, AgeWindow window);

struct LifetimePrediction {
    std::vector<std::size_t> persons;
    std::vector<double> log_lifetime;
    std::vector<double> smearing;  // SM per person (sum over prediction ages); empty without smearing
    std::vector<std::size_t> excluded;
    std::size_t n_dropped_nonpositive = 0;
};

// `persons`: which persons to predict (all when empty).
LifetimePrediction predict_lifetime(const ProfileFit& pf, const Panel& p, const std::vector<std::size_t>& persons = {});

// Smearing sums from the auxiliary quartic-age × education + person FE model.
std::vector<double> smearing_factors(const Panel& p, AgeWindow prediction_ages);

// Young persons inside the window plus old persons above it; `split` reports
// whether a young/old split was made.
Panel estimation_panel(const Panel& p, const EstimatorSpec& spec, AgeWindow window, bool& split);

IgeEstimate estimate_lifecycle(const Panel& p, const EstimatorSpec& spec, AgeWindow window);

// Dispatches on spec.variant. Creedy uses the window's upper age as the observed age.
IgeEstimate estimate(const Panel& p, const EstimatorSpec& spec, AgeWindow window);

// ---------------------------------------------------------------------------
// GEiV diagnostics
// ---------------------------------------------------------------------------

struct GeivResult {
    std::vector<int> ages;
    std::vector<double> lambda, lambda_se;
    std::vector<double> beta, beta_se;
    std::vector<double> ratio;        // beta / lambda
    std::vector<double> gap, gap_se;  // ratio minus benchmark on the same persons, with its SE
    std::vector<std::size_t> n;
    double benchmark = 0.0;
    std::optional<double> t_star;
};
GeivResult geiv_diagnostics(const Panel& p, const std::vector<int>& ages);

// First crossing of 1 by linear interpolation; the first age if it starts at 1.
std::optional<double> crossing_age(const std::vector<int>& ages, const std::vector<double>& lambda);

// ---------------------------------------------------------------------------
// Creedy rescaling
// ---------------------------------------------------------------------------

enum class CreedyMode { parametric, nonparametric };

struct CreedyModel {
    CreedyMode mode = CreedyMode::parametric;
    int age_min = 0;
    std::vector<int> groups;                       // education group ids
    std::vector<std::vector<double>> mu, sigma;    // [group][age - age_min]
};

CreedyModel creedy_fit(const Panel& p, CreedyMode mode);
// Rebuilds each person's profile from the single observation at observed_age.
LifetimePrediction creedy_lifetimes(const Panel& p, const CreedyModel& m, int observed_age, AgeWindow target_ages);
IgeEstimate creedy_estimate(const Panel& p, const CreedyModel& m, int observed_age, AgeWindow target_ages);

// ---------------------------------------------------------------------------
// Cohort trends
// ---------------------------------------------------------------------------

struct TrendsSpec {
    std::vector<int> cohort_breaks;  // lower bounds of groups 1..G-1
    bool fe = true;                  // false: parental-income intercepts
    bool parent_age_quadratic = true;
    bool smearing = false;
    AgeWindow prediction_ages{25, 58};
};

struct TrendsGroup {
    int group = 0;
    IgeEstimate estimate;
    std::optional<double> truth;  // per-group benchmark when lifetime incomes are known
    bool extrapolated = false;    // no observations at the oldest prediction ages
};

struct TrendsResult {
    std::vector<TrendsGroup> groups;
    std::vector<double> profile;  // standardized profile by age from prediction_ages.lo
    std::map<std::string, double> interactions;  // cohort × parent × profile coefficients
};

// Cross-person mean of year-effect-removed log income by age, quartic-smoothed,
// normalized to 0 at the first age and 1 at its maximum.
std::vector<double> standardized_profile(const Panel& p, AgeWindow ages);

TrendsResult estimate_trends(const Panel& p, const TrendsSpec& spec);

// Direct pooled-annual estimate per cohort group over a fixed window.
std::vector<IgeEstimate> direct_by_group(const Panel& p, const std::vector<int>& cohort_breaks, AgeWindow window);

// ---------------------------------------------------------------------------
// Robustness
// ---------------------------------------------------------------------------

// Keeps at most max_obs observations per person inside window; others untouched.
Panel thin_observations(const Panel& p, int max_obs, AgeWindow window, std::uint64_t seed);

// Draws round(n/k) persons without replacement; draw index selects the substream.
Panel subsample(const Panel& p, int k, std::uint64_t seed, std::uint64_t draw);

struct Summary {
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};
Summary summarize(const std::vector<double>& v);

// Bootstrap over persons of the full two-step estimator.
double bootstrap_se(const Panel& p, const EstimatorSpec& spec, AgeWindow window);

}  // namespace mobilab::estimators
