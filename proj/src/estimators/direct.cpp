#include <cmath>

#include "mobilab/estimators.hpp"

namespace mobilab::estimators {

namespace {

constexpr std::pair<Variant, std::string_view> kNames[] = {
    {Variant::DirectAnnual, "DirectAnnual"},         {Variant::Benchmark, "Benchmark"},
    {Variant::BaselineFE, "BaselineFE"},             {Variant::ParentalLinearFE, "ParentalLinearFE"},
    {Variant::ParentalQuadFE, "ParentalQuadFE"},     {Variant::ParentalQuadNoFE, "ParentalQuadNoFE"},
    {Variant::SlopeLevelQuad, "SlopeLevelQuad"},     {Variant::Creedy, "Creedy"},
    {Variant::Trends, "Trends"},
};

bool is_first_step_variant(Variant v) {
    return v == Variant::BaselineFE || v == Variant::ParentalLinearFE || v == Variant::ParentalQuadFE ||
           v == Variant::ParentalQuadNoFE || v == Variant::SlopeLevelQuad;
}

}  // namespace

std::string_view variant_name(Variant v) {
    for (const auto& [k, n] : kNames)
        if (k == v) return n;
    return "?";
}

std::optional<Variant> parse_variant(std::string_view s) {
    for (const auto& [k, n] : kNames)
        if (n == s) return k;
    return std::nullopt;
}

EstimatorSpec EstimatorSpec::for_variant(Variant v) {
    EstimatorSpec s;
    s.variant = v;
    switch (v) {
        case Variant::BaselineFE:
        case Variant::SlopeLevelQuad:
            s.parental_income = s.parental_educ = false;
            break;
        case Variant::ParentalLinearFE:
            s.parent_income_degree = 1;
            break;
        case Variant::ParentalQuadNoFE:
            s.fe = false;
            break;
        default: break;
    }
    return s;
}

void EstimatorSpec::validate() const {
    prediction_ages.validate();
    if (variant == Variant::ParentalQuadNoFE && fe) throw std::invalid_argument("ParentalQuadNoFE requires fe = false");
    if (is_first_step_variant(variant) && variant != Variant::ParentalQuadNoFE && !fe)
        throw std::invalid_argument(std::string(variant_name(variant)) + " requires fe = true");
    if (mode == Mode::levels && smearing) throw std::invalid_argument("levels mode excludes smearing");
    if (parent_income_degree < 1 || parent_income_degree > 4 || parent_educ_degree < 1 || parent_educ_degree > 4)
        throw std::invalid_argument("parental interaction degrees must be in [1, 4]");
    if (slope_level_iterations < 1) throw std::invalid_argument("slope_level_iterations must be >= 1");
    if (bottom_code_predictions && !(*bottom_code_predictions > 0.0))
        throw std::invalid_argument("bottom_code_predictions must be > 0");
}

IgeEstimate second_step(const SecondStep& s) {
    if (s.child.size() < 3) throw EstimationError("second step needs at least 3 persons");
    auto r = regression::simple_ols(s.parent, s.child);
    IgeEstimate e;
    e.slope = r.slope;
    e.se = r.se;
    e.r2_second_step = r.r2;
    e.n_persons = r.n;
    return e;
}

std::vector<double> lifetime_incomes(const Panel& p) {
    const auto& m = p.metadata();
    const std::size_t full = static_cast<std::size_t>(m.age_max - m.age_min + 1);
    std::vector<double> out(p.n_persons(), panel::kMissing);
    for (std::size_t i = 0; i < p.n_persons(); ++i) {
        const auto& r = p.persons()[i];
        if (r.true_log_lifetime) {
            out[i] = *r.true_log_lifetime;
            continue;
        }
        auto obs = p.observations_of(i);
        if (obs.size() == full) {
            bool ok = true;
            for (const auto& o : obs) ok = ok && o.income_level > 0.0;
            if (ok) out[i] = panel::true_lifetime(obs);
        }
    }
    return out;
}

IgeEstimate estimate_benchmark(const Panel& p) {
    auto life = lifetime_incomes(p);
    SecondStep s;
    std::size_t missing = 0;
    for (std::size_t i = 0; i < p.n_persons(); ++i) {
        double par = p.persons()[i].parent_log_income;
        if (std::isnan(life[i]) || std::isnan(par)) {
            ++missing;
            continue;
        }
        s.persons.push_back(i);
        s.parent.push_back(par);
        s.child.push_back(life[i]);
    }
    if (s.persons.empty()) throw EstimationError("benchmark: no person has lifetime income information");
    IgeEstimate e = second_step(s);
    e.n_excluded = missing;
    e.window = {p.metadata().age_min, p.metadata().age_max};
    e.spec.variant = Variant::Benchmark;
    return e;
}

IgeEstimate estimate_direct_annual(const Panel& p, AgeWindow window) {
    window.validate();
    std::vector<double> x, y;
    std::size_t persons = 0;
    for (std::size_t i = 0; i < p.n_persons(); ++i) {
        double par = p.persons()[i].parent_log_income;
        if (std::isnan(par)) continue;
        bool any = false;
        for (const auto& o : p.observations_of(i)) {
            if (!window.contains(o.age)) continue;
            x.push_back(par);
            y.push_back(panel::log_income(o));
            any = true;
        }
        persons += any;
    }
    if (x.empty()) throw EstimationError("direct annual: no observations in window " + to_string(window));
    auto r = regression::simple_ols(x, y);
    IgeEstimate e;
    e.slope = r.slope;
    e.se = r.se;
    e.r2_second_step = r.r2;
    e.n_persons = persons;
    e.n_excluded = p.n_persons() - persons;
    e.window = window;
    e.spec.variant = Variant::DirectAnnual;
    return e;
}

IgeEstimate estimate(const Panel& p, const EstimatorSpec& spec, AgeWindow window) {
    spec.validate();
    switch (spec.variant) {
        case Variant::Benchmark: {
            auto e = estimate_benchmark(p);
            e.spec = spec;
            return e;
        }
        case Variant::DirectAnnual: {
            auto e = estimate_direct_annual(p, window);
            e.spec = spec;
            return e;
        }
        case Variant::Creedy: {
            auto m = creedy_fit(p, CreedyMode::parametric);
            auto e = creedy_estimate(p, m, window.hi, spec.prediction_ages);
            e.window = window;
            e.spec = spec;
            return e;
        }
        case Variant::Trends:
            throw EstimationError("Trends estimates are per cohort group; use the trends command");
        default: return estimate_lifecycle(p, spec, window);
    }
}

}  // namespace mobilab::estimators
