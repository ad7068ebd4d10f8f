#include <cmath>

#include "mobilab/estimators.hpp"

namespace mobilab::estimators {

using namespace regression;

namespace {

std::vector<std::size_t> rows_in(const Panel& p, AgeWindow w) {
    std::vector<std::size_t> rows;
    const auto& obs = p.observations();
    for (std::size_t k = 0; k < obs.size(); ++k)
        if (w.contains(obs[k].age)) rows.push_back(k);
    if (rows.empty()) throw EstimationError("first step: no observations in window " + to_string(w));
    return rows;
}

DesignSpec baseline_terms(Response response) {
    DesignSpec d;
    d.response = response;
    d.fe = FeKind::person;
    d.terms.push_back({{Factor::age(4)}});
    d.terms.push_back({{Factor::cat(Variable::educ_group), Factor::age(4)}});
    return d;
}

}  // namespace

DesignSpec first_step_design(const EstimatorSpec& spec) {
    DesignSpec d = baseline_terms(spec.mode == Mode::levels ? Response::level_income : Response::log_income);
    const bool parental = spec.variant == Variant::ParentalLinearFE || spec.variant == Variant::ParentalQuadFE ||
                          spec.variant == Variant::ParentalQuadNoFE;
    if (parental && spec.parental_income)
        d.terms.push_back({{Factor::num(Variable::parent_log_income), Factor::age(spec.parent_income_degree)}});
    if (parental && spec.parental_educ)
        d.terms.push_back({{Factor::cat(Variable::parent_educ_group), Factor::age(spec.parent_educ_degree)}});
    if (!spec.fe) {
        d.fe = FeKind::parent_income_intercept;
        d.terms.push_back({{Factor::cat(Variable::educ_group)}});
        if (parental && spec.parental_educ) d.terms.push_back({{Factor::cat(Variable::parent_educ_group)}});
    }
    return d;
}

ProfileFit first_step_fit(const Panel& p, const EstimatorSpec& spec, AgeWindow window) {
    if (spec.variant == Variant::SlopeLevelQuad) return slope_level_fit(p, spec, window);
    ProfileFit pf;
    pf.spec = spec;
    pf.window = window;
    Design d = build_design(p, first_step_design(spec), pf.ctx, rows_in(p, window));
    pf.fit = fit(d, p.n_persons());
    return pf;
}

ProfileFit slope_level_fit(const Panel& p, const EstimatorSpec& spec, AgeWindow window) {
    const auto rows = rows_in(p, window);
    const Response resp = spec.mode == Mode::levels ? Response::level_income : Response::log_income;
    ProfileFit pf;
    pf.spec = spec;
    pf.window = window;

    // pass 1: fixed effects without the growth interaction
    Design d1 = build_design(p, baseline_terms(resp), pf.ctx, rows);
    FitResult f = fit(d1, p.n_persons());

    DesignSpec ds = baseline_terms(resp);
    ds.terms.push_back({{Factor::num(Variable::estimated_intercept), Factor::age(2)}});
    for (int it = 0; it < spec.slope_level_iterations; ++it) {
        pf.ctx.estimated_intercepts = f.fixed_effects;
        Design d = build_design(p, ds, pf.ctx, rows);
        f = fit(d, p.n_persons());
    }
    pf.fit = std::move(f);
    return pf;
}

}  // namespace mobilab::estimators
