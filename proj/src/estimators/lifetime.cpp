#include <algorithm>
#include <cmath>
#include <numeric>

#include "mobilab/estimators.hpp"

namespace mobilab::estimators {

using namespace regression;

std::vector<double> smearing_factors(const Panel& p, AgeWindow prediction_ages) {
    DesignSpec d;
    d.fe = FeKind::person;
    d.robust = false;
    d.terms.push_back({{Factor::age(4)}});
    d.terms.push_back({{Factor::cat(Variable::educ_group), Factor::age(4)}});
    Design des = build_design(p, d);
    FitResult f = fit(des, p.n_persons());
    std::vector<double> sum(p.n_persons(), 0.0), cnt(p.n_persons(), 0.0);
    for (std::size_t r = 0; r < des.person.size(); ++r) {
        sum[des.person[r]] += std::exp(f.residuals(static_cast<Eigen::Index>(r)));
        cnt[des.person[r]] += 1.0;
    }
    const double T = prediction_ages.length();
    std::vector<double> out(p.n_persons(), panel::kMissing);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (cnt[i] > 0.0) out[i] = T * sum[i] / cnt[i];
    return out;
}

LifetimePrediction predict_lifetime(const ProfileFit& pf, const Panel& p, const std::vector<std::size_t>& persons) {
    const auto& spec = pf.spec;
    std::vector<std::size_t> who = persons;
    if (who.empty()) {
        who.resize(p.n_persons());
        std::iota(who.begin(), who.end(), std::size_t{0});
    }
    std::vector<int> ages;
    for (int a = spec.prediction_ages.lo; a <= spec.prediction_ages.hi; ++a) ages.push_back(a);
    Prediction pr = predict(pf.fit, p, who, ages, pf.ctx);

    LifetimePrediction out;
    out.excluded = pr.excluded;
    std::vector<double> sm;
    const bool smear = spec.mode == Mode::logs && spec.smearing;
    if (smear) {
        // auxiliary model on the same observed rows as the main fit
        std::vector<panel::IncomeObs> obs;
        for (const auto& o : p.observations())
            if (pf.window.contains(o.age)) obs.push_back(o);
        Panel sub = Panel::create(p.persons(), std::move(obs), p.metadata());
        sm = smearing_factors(sub, spec.prediction_ages);
    }
    const double T = static_cast<double>(ages.size());
    for (std::size_t r = 0; r < pr.persons.size(); ++r) {
        const std::size_t i = pr.persons[r];
        double total = 0.0;
        if (spec.mode == Mode::logs) {
            const double m = pr.values.row(static_cast<Eigen::Index>(r)).maxCoeff();
            for (std::size_t a = 0; a < ages.size(); ++a) total += std::exp(pr.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) - m);
            double life = m + std::log(total);
            if (smear) {
                if (std::isnan(sm[i])) {
                    out.excluded.push_back(i);
                    continue;
                }
                life += std::log(sm[i] / T);
                out.smearing.push_back(sm[i]);
            }
            out.persons.push_back(i);
            out.log_lifetime.push_back(life);
        } else {
            for (std::size_t a = 0; a < ages.size(); ++a) {
                double v = pr.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a));
                if (spec.bottom_code_predictions) v = std::max(v, *spec.bottom_code_predictions);
                total += v;
            }
            if (!(total > 0.0)) {
                ++out.n_dropped_nonpositive;
                continue;
            }
            out.persons.push_back(i);
            out.log_lifetime.push_back(std::log(total));
        }
    }
    return out;
}

}  // namespace mobilab::estimators
