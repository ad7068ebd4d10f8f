#include <cmath>
#include <set>

#include "mobilab/estimators.hpp"

namespace mobilab::estimators {

using namespace regression;

std::vector<double> standardized_profile(const Panel& p, AgeWindow ages) {
    ages.validate();
    Panel q = panel::remove_year_effects(p);
    const auto A = static_cast<std::size_t>(ages.length());
    std::vector<double> sum(A, 0.0), cnt(A, 0.0);
    for (const auto& o : q.observations()) {
        if (!ages.contains(o.age)) continue;
        auto a = static_cast<std::size_t>(o.age - ages.lo);
        sum[a] += panel::log_income(o);
        cnt[a] += 1.0;
    }
    std::vector<double> h, m;
    for (std::size_t a = 0; a < A; ++a) {
        if (cnt[a] == 0.0) continue;
        h.push_back(static_cast<double>(a));
        m.push_back(sum[a] / cnt[a]);
    }
    if (h.size() < 5) throw EstimationError("standardized profile needs at least 5 observed ages");
    const auto K = static_cast<Eigen::Index>(h.size());
    const double c = 0.5 * (A - 1);
    Eigen::MatrixXd X(K, 5);
    Eigen::VectorXd y(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        double x = h[static_cast<std::size_t>(k)] - c;
        X.row(k) << 1.0, x, x * x, x * x * x, x * x * x * x;
        y(k) = m[static_cast<std::size_t>(k)];
    }
    Eigen::VectorXd b = X.colPivHouseholderQr().solve(y);
    std::vector<double> f(A);
    for (std::size_t a = 0; a < A; ++a) {
        double x = static_cast<double>(a) - c;
        f[a] = b(0) + x * (b(1) + x * (b(2) + x * (b(3) + x * b(4))));
    }
    double base = f[0], top = *std::max_element(f.begin(), f.end());
    if (!(top - base > 0.0)) throw EstimationError("standardized profile never rises above its starting value");
    for (auto& v : f) v = (v - base) / (top - base);
    return f;
}

TrendsResult estimate_trends(const Panel& p, const TrendsSpec& spec) {
    spec.prediction_ages.validate();
    const int G = static_cast<int>(spec.cohort_breaks.size()) + 1;
    if (G < 2) throw EstimationError("trends need at least 2 cohort groups");
    DesignContext ctx;
    ctx.cohort_breaks = spec.cohort_breaks;
    std::vector<std::size_t> group_obs(static_cast<std::size_t>(G), 0);
    std::set<int> years;
    for (const auto& o : p.observations()) {
        ++group_obs[static_cast<std::size_t>(ctx.cohort_group(p.persons()[o.person].cohort))];
        years.insert(o.year);
    }
    for (int g = 0; g < G; ++g)
        if (!group_obs[static_cast<std::size_t>(g)]) throw EstimationError("cohort group " + std::to_string(g) + " has no observations");

    TrendsResult res;
    res.profile = standardized_profile(p, spec.prediction_ages);
    ctx.standard_profile = res.profile;
    ctx.profile_age_min = spec.prediction_ages.lo;

    std::vector<int> nonref;
    for (int g = 1; g < G; ++g) nonref.push_back(g);
    std::vector<int> year_levels(years.begin(), years.end());
    if (!year_levels.empty()) year_levels.erase(year_levels.begin());
    // with person effects, cohort is absorbed and a linear age-year trend is not identified
    if (spec.fe && !year_levels.empty()) year_levels.pop_back();

    DesignSpec d;
    d.fe = spec.fe ? FeKind::person : FeKind::parent_income_intercept;
    d.terms.push_back({{Factor::age(4)}});
    d.terms.push_back({{Factor::cat(Variable::educ_group), Factor::age(4)}});
    if (spec.parent_age_quadratic) d.terms.push_back({{Factor::num(Variable::parent_log_income), Factor::age(2)}});
    d.terms.push_back({{Factor::cat(Variable::cohort_group, nonref), Factor::num(Variable::standard_profile)}});
    d.terms.push_back({{Factor::cat(Variable::cohort_group, nonref), Factor::num(Variable::parent_log_income),
                        Factor::num(Variable::standard_profile)}});
    if (!year_levels.empty()) d.terms.push_back({{Factor::cat(Variable::year, year_levels)}});
    if (!spec.fe) {
        d.terms.push_back({{Factor::cat(Variable::educ_group)}});
        d.terms.push_back({{Factor::cat(Variable::cohort_group, nonref)}});
        d.terms.push_back({{Factor::cat(Variable::cohort_group, nonref), Factor::num(Variable::parent_log_income)}});
    }

    ProfileFit pf;
    pf.ctx = ctx;
    pf.window = {p.metadata().age_min, p.metadata().age_max};
    pf.spec.variant = Variant::Trends;
    pf.spec.fe = spec.fe;
    pf.spec.smearing = spec.smearing;
    pf.spec.prediction_ages = spec.prediction_ages;
    {
        Design des = build_design(p, d, ctx);
        pf.fit = fit(des, p.n_persons());
    }
    for (std::size_t k = 0; k < pf.fit.names.size(); ++k) {
        const auto& n = pf.fit.names[k];
        if (n.find("parent_log_income:standard_profile") != std::string::npos) res.interactions[n] = pf.fit.coef(static_cast<Eigen::Index>(k));
    }

    std::vector<std::size_t> who;
    for (std::size_t i = 0; i < p.n_persons(); ++i)
        if (!std::isnan(p.persons()[i].parent_log_income) && !p.observations_of(i).empty()) who.push_back(i);
    LifetimePrediction lp = predict_lifetime(pf, p, who);
    auto life = lifetime_incomes(p);

    std::vector<SecondStep> steps(static_cast<std::size_t>(G));
    std::vector<SecondStep> truth(static_cast<std::size_t>(G));
    for (std::size_t k = 0; k < lp.persons.size(); ++k) {
        const auto& r = p.persons()[lp.persons[k]];
        auto g = static_cast<std::size_t>(ctx.cohort_group(r.cohort));
        steps[g].persons.push_back(lp.persons[k]);
        steps[g].parent.push_back(r.parent_log_income);
        steps[g].child.push_back(lp.log_lifetime[k]);
    }
    std::vector<int> oldest(static_cast<std::size_t>(G), -1);
    for (std::size_t i = 0; i < p.n_persons(); ++i) {
        const auto& r = p.persons()[i];
        auto g = static_cast<std::size_t>(ctx.cohort_group(r.cohort));
        for (const auto& o : p.observations_of(i)) oldest[g] = std::max(oldest[g], o.age);
        if (!std::isnan(life[i]) && !std::isnan(r.parent_log_income)) {
            truth[g].parent.push_back(r.parent_log_income);
            truth[g].child.push_back(life[i]);
        }
    }
    for (int g = 0; g < G; ++g) {
        auto gi = static_cast<std::size_t>(g);
        TrendsGroup tg;
        tg.group = g;
        tg.estimate = second_step(steps[gi]);
        tg.estimate.spec = pf.spec;
        tg.estimate.window = pf.window;
        tg.extrapolated = oldest[gi] < spec.prediction_ages.hi;
        if (tg.extrapolated) tg.estimate.flags.push_back("profile extrapolated beyond age " + std::to_string(oldest[gi]));
        if (truth[gi].child.size() >= 3) tg.truth = regression::simple_ols(truth[gi].parent, truth[gi].child).slope;
        res.groups.push_back(std::move(tg));
    }
    return res;
}

std::vector<IgeEstimate> direct_by_group(const Panel& p, const std::vector<int>& cohort_breaks, AgeWindow window) {
    DesignContext ctx;
    ctx.cohort_breaks = cohort_breaks;
    const std::size_t G = cohort_breaks.size() + 1;
    std::vector<std::vector<double>> x(G), y(G);
    std::vector<std::set<std::size_t>> who(G);
    for (const auto& o : p.observations()) {
        const auto& r = p.persons()[o.person];
        if (!window.contains(o.age) || std::isnan(r.parent_log_income)) continue;
        auto g = static_cast<std::size_t>(ctx.cohort_group(r.cohort));
        x[g].push_back(r.parent_log_income);
        y[g].push_back(panel::log_income(o));
        who[g].insert(o.person);
    }
    std::vector<IgeEstimate> out;
    for (std::size_t g = 0; g < G; ++g) {
        if (x[g].size() < 3) throw EstimationError("direct_by_group: too few observations for cohort group " + std::to_string(g));
        auto r = regression::simple_ols(x[g], y[g]);
        IgeEstimate e;
        e.slope = r.slope;
        e.se = r.se;
        e.r2_second_step = r.r2;
        e.n_persons = who[g].size();
        e.window = window;
        e.spec.variant = Variant::DirectAnnual;
        out.push_back(e);
    }
    return out;
}

}  // namespace mobilab::estimators
