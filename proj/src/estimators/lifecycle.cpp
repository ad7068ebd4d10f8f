#include <cmath>

#include "mobilab/estimators.hpp"
#include "mobilab/random.hpp"

namespace mobilab::estimators {

// Estimation sample: young persons inside the window plus old persons above it.
Panel estimation_panel(const Panel& p, const EstimatorSpec& spec, AgeWindow window, bool& split) {
    split = spec.split && window.hi < p.metadata().age_max;
    if (!split) return panel::restrict_window(p, window).panel;
    Panel s = panel::split_young_old(p, window.hi, spec.split_mode, spec.seed).panel;
    std::vector<panel::PersonRecord> persons;
    std::vector<panel::IncomeObs> obs;
    for (std::size_t i = 0; i < s.n_persons(); ++i) {
        const auto& r = s.persons()[i];
        std::size_t before = obs.size();
        for (const auto& o : s.observations_of(i)) {
            if (r.group_tag == panel::GroupTag::young && o.age < window.lo) continue;
            obs.push_back(o);
            obs.back().person = persons.size();
        }
        if (obs.size() == before) continue;
        persons.push_back(r);
    }
    auto meta = s.metadata();
    meta.provenance.push_back("estimation_sample(" + to_string(window) + ")");
    return Panel::create(std::move(persons), std::move(obs), std::move(meta));
}

IgeEstimate estimate_lifecycle(const Panel& p, const EstimatorSpec& spec, AgeWindow window) {
    spec.validate();
    window.validate();
    bool split = false;
    Panel est = estimation_panel(p, spec, window, split);

    ProfileFit pf = first_step_fit(est, spec, {window.lo, est.metadata().age_max});

    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < est.n_persons(); ++i) {
        const auto& r = est.persons()[i];
        if (split && r.group_tag != panel::GroupTag::young) continue;
        if (std::isnan(r.parent_log_income)) continue;
        targets.push_back(i);
    }
    LifetimePrediction lp = predict_lifetime(pf, est, targets);

    SecondStep s;
    std::vector<double> truth_x, truth_y;
    for (std::size_t k = 0; k < lp.persons.size(); ++k) {
        const auto& r = est.persons()[lp.persons[k]];
        s.persons.push_back(lp.persons[k]);
        s.parent.push_back(r.parent_log_income);
        s.child.push_back(lp.log_lifetime[k]);
        if (r.true_log_lifetime) {
            truth_x.push_back(lp.log_lifetime[k]);
            truth_y.push_back(*r.true_log_lifetime);
        }
    }
    IgeEstimate e = second_step(s);
    if (truth_x.size() >= 3) e.r2_first_step_lifetime = regression::simple_ols(truth_x, truth_y).r2;
    e.window = window;
    e.spec = spec;
    e.n_excluded = lp.excluded.size();
    e.n_dropped_nonpositive = lp.n_dropped_nonpositive;
    if (lp.n_dropped_nonpositive) e.flags.push_back("nonpositive lifetime sums dropped");
    if (spec.bootstrap_reps > 0) e.bootstrap_se = bootstrap_se(p, spec, window);
    return e;
}

double bootstrap_se(const Panel& p, const EstimatorSpec& spec, AgeWindow window) {
    EstimatorSpec inner = spec;
    inner.bootstrap_reps = 0;
    std::vector<double> slopes;
    for (std::size_t b = 0; b < spec.bootstrap_reps; ++b) {
        Rng rng = make_rng(spec.seed, streams::bootstrap, b);
        std::uniform_int_distribution<std::size_t> pick(0, p.n_persons() - 1);
        std::vector<std::size_t> chosen(p.n_persons());
        for (auto& c : chosen) c = pick(rng);
        Panel q = panel::select_persons(p, chosen, "bootstrap(" + std::to_string(b) + ")");
        slopes.push_back(estimate(q, inner, window).slope);
    }
    return summarize(slopes).sd;
}

}  // namespace mobilab::estimators
