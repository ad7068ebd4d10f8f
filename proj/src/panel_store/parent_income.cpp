#include <algorithm>
#include <cmath>
#include <set>

#include "mobilab/panel.hpp"
#include "mobilab/random.hpp"
#include "mobilab/regression.hpp"

namespace mobilab::panel {

ParentIncomeResult build_parent_income(const Panel& fathers, const ParentIncomeOptions& opt) {
    using namespace regression;
    opt.age_range.validate();
    if (opt.n_obs_max < 1) throw std::invalid_argument("build_parent_income: n_obs_max must be >= 1");

    ParentIncomeResult out;
    std::vector<std::size_t> rows;
    std::vector<std::size_t> n_sel(fathers.n_persons(), 0);
    for (std::size_t i = 0; i < fathers.n_persons(); ++i) {
        std::vector<std::size_t> cand;
        std::size_t base = fathers.first_obs(i);
        auto obs = fathers.observations_of(i);
        for (std::size_t k = 0; k < obs.size(); ++k)
            if (opt.age_range.contains(obs[k].age)) cand.push_back(base + k);
        std::vector<std::size_t> pick;
        Rng rng = make_rng(opt.seed, streams::parent_income, fnv1a(fathers.persons()[i].person_id));
        std::sample(cand.begin(), cand.end(), std::back_inserter(pick), static_cast<std::size_t>(opt.n_obs_max), rng);
        n_sel[i] = pick.size();
        out.n_selected[fathers.persons()[i].person_id] = static_cast<int>(pick.size());
        if (pick.size() >= 2) rows.insert(rows.end(), pick.begin(), pick.end());
    }

    std::set<int> cohorts, educs;
    for (std::size_t r : rows) {
        const auto& rec = fathers.persons()[fathers.observations()[r].person];
        cohorts.insert(rec.cohort);
        educs.insert(rec.educ_group);
    }

    std::optional<FitResult> f;
    if (!rows.empty()) {
        DesignContext ctx;
        ctx.age_center = opt.target_age;
        auto attempt = [&](std::vector<Term> terms) -> std::optional<FitResult> {
            DesignSpec spec;
            spec.fe = FeKind::person;
            spec.terms = std::move(terms);
            spec.robust = false;
            try {
                Design d = build_design(fathers, spec, ctx, rows);
                return fit(d, fathers.n_persons());
            } catch (const RegressionError&) {
                return std::nullopt;
            }
        };
        std::vector<int> cl(cohorts.begin(), cohorts.end()), el(educs.begin(), educs.end());
        f = attempt({Term{{Factor::cat(Variable::cohort, cl), Factor::cat(Variable::educ_group, el), Factor::age(2)}}});
        if (!f) {
            out.reduced_spec = true;
            f = attempt({Term{{Factor::cat(Variable::educ_group, el), Factor::age(2)}}});
        }
        if (!f) f = attempt({Term{{Factor::age(1)}}});
    }

    for (std::size_t i = 0; i < fathers.n_persons(); ++i) {
        const auto& id = fathers.persons()[i].person_id;
        // centered at the target age, so the prediction is the fixed effect itself
        if (n_sel[i] >= 2 && f && i < f->fixed_effects.size() && !std::isnan(f->fixed_effects[i])) {
            out.predicted[id] = f->fixed_effects[i];
            continue;
        }
        auto obs = fathers.observations_of(i);
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& o : obs) {
            if (opt.age_range.contains(o.age) || n_sel[i] == 0) {
                if (o.income_level > 0.0) {
                    s += std::log(o.income_level);
                    ++n;
                }
            }
        }
        if (n == 0) continue;
        out.predicted[id] = s / static_cast<double>(n);
        out.fallback.push_back(id);
    }
    return out;
}

}  // namespace mobilab::panel
