#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mobilab/income_process.hpp"
#include "mobilab/regression.hpp"

namespace mobilab::income {

namespace {

// level income by age for one person; NaN where unobserved
std::vector<double> levels_by_age(const Panel& p, std::size_t i) {
    const auto& m = p.metadata();
    std::vector<double> out(static_cast<std::size_t>(m.age_max - m.age_min + 1), panel::kMissing);
    for (const auto& o : p.observations_of(i)) out[static_cast<std::size_t>(o.age - m.age_min)] = o.income_level;
    return out;
}

double level_at(const std::vector<double>& v, const Panel& p, int age) {
    int k = age - p.metadata().age_min;
    if (k < 0 || k >= static_cast<int>(v.size())) return panel::kMissing;
    return v[static_cast<std::size_t>(k)];
}

std::string bin_label(int a, int b) { return std::to_string(a) + "-" + std::to_string(b); }

}  // namespace

std::vector<GrowthRow> growth_gradient_table(const Panel& children, const GrowthOptions& opt) {
    if (opt.span < 1) throw std::invalid_argument("growth span must be >= 1");
    Panel q = opt.remove_year_effects ? panel::remove_year_effects(children) : children;

    // yearly in-sample medians
    std::map<int, std::vector<double>> by_year;
    for (const auto& o : q.observations()) by_year[o.year].push_back(o.income_level);
    std::map<int, double> floor_of;
    for (auto& [year, v] : by_year) {
        auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
        std::nth_element(v.begin(), mid, v.end());
        double med = *mid;
        if (v.size() % 2 == 0) med = 0.5 * (med + *std::max_element(v.begin(), mid));
        floor_of[year] = opt.median_share * med;
    }

    struct Row {
        std::size_t bin;
        double dy, p;
        int educ;
    };
    std::vector<Row> rows;
    const std::size_t B = opt.end_ages.size();
    for (std::size_t i = 0; i < q.n_persons(); ++i) {
        const auto& r = q.persons()[i];
        if (std::isnan(r.parent_log_income)) continue;
        auto lv = levels_by_age(q, i);
        for (std::size_t b = 0; b < B; ++b) {
            int t = opt.end_ages[b];
            double y1 = level_at(lv, q, t), y0 = level_at(lv, q, t - opt.span);
            if (std::isnan(y1) || std::isnan(y0)) continue;
            int yr1 = r.cohort + t, yr0 = r.cohort + t - opt.span;
            // recover the calendar year from the observation when cohort is not year-aligned
            for (const auto& o : q.observations_of(i)) {
                if (o.age == t) yr1 = o.year;
                if (o.age == t - opt.span) yr0 = o.year;
            }
            if (!(y1 >= floor_of[yr1]) || !(y0 >= floor_of[yr0]) || y1 <= 0.0 || y0 <= 0.0) continue;
            rows.push_back({b, std::log(y1) - std::log(y0), r.parent_log_income / 100.0, r.educ_group});
        }
    }

    std::vector<std::size_t> count(B, 0);
    for (const auto& r : rows) ++count[r.bin];
    std::set<int> educ_levels;
    for (const auto& r : rows) educ_levels.insert(r.educ);
    std::vector<int> ctrl(educ_levels.begin(), educ_levels.end());
    if (!ctrl.empty()) ctrl.erase(ctrl.begin());

    // columns: per active bin a dummy, a parental slope, and optional education dummies
    std::vector<long> col_dummy(B, -1), col_slope(B, -1);
    std::vector<std::string> names;
    for (std::size_t b = 0; b < B; ++b) {
        if (!count[b]) continue;
        std::string lab = bin_label(opt.end_ages[b] - opt.span, opt.end_ages[b]);
        col_dummy[b] = static_cast<long>(names.size());
        names.push_back("bin=" + lab);
        col_slope[b] = static_cast<long>(names.size());
        names.push_back("parent_log_income/100:bin=" + lab);
        if (opt.control == GrowthControl::education)
            for (int e : ctrl) names.push_back("educ_group=" + std::to_string(e) + ":bin=" + lab);
    }

    std::vector<GrowthRow> out;
    regression::FitResult f;
    bool fitted = false;
    if (!rows.empty()) {
        Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
        Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto& r = rows[k];
            auto ik = static_cast<Eigen::Index>(k);
            X(ik, col_dummy[r.bin]) = 1.0;
            X(ik, col_slope[r.bin]) = r.p;
            if (opt.control == GrowthControl::education) {
                for (std::size_t c = 0; c < ctrl.size(); ++c)
                    if (r.educ == ctrl[c]) X(ik, col_slope[r.bin] + 1 + static_cast<long>(c)) = 1.0;
            }
            y(ik) = r.dy;
        }
        f = regression::fit(X, y, nullptr, 0, names, true);
        fitted = true;
    }
    for (std::size_t b = 0; b < B; ++b) {
        GrowthRow g;
        g.age_from = opt.end_ages[b] - opt.span;
        g.age_to = opt.end_ages[b];
        g.label = bin_label(g.age_from, g.age_to);
        g.n = count[b];
        if (!count[b] || !fitted) {
            g.empty = true;
            g.coef = g.se = panel::kMissing;
        } else {
            g.coef = f.coef(col_slope[b]);
            g.se = f.se(col_slope[b]);
        }
        out.push_back(g);
    }
    return out;
}

std::vector<GrowthRow> growth_on_growth_table(const Panel& children, const Panel& fathers, const GrowthOnGrowthOptions& opt) {
    std::map<std::string, std::size_t> father_of;
    for (std::size_t i = 0; i < fathers.n_persons(); ++i) father_of.emplace(fathers.persons()[i].family_id, i);

    std::vector<GrowthRow> out;
    for (const auto& w : opt.windows) {
        w.validate();
        std::vector<double> dc, df, pl;
        std::vector<int> fe;
        for (std::size_t i = 0; i < children.n_persons(); ++i) {
            auto it = father_of.find(children.persons()[i].family_id);
            if (it == father_of.end()) continue;
            auto cl = levels_by_age(children, i);
            auto fl = levels_by_age(fathers, it->second);
            double c0 = level_at(cl, children, w.lo), c1 = level_at(cl, children, w.hi);
            double f0 = level_at(fl, fathers, w.lo), f1 = level_at(fl, fathers, w.hi);
            if (!(c0 > 0.0 && c1 > 0.0 && f0 > 0.0 && f1 > 0.0)) continue;
            double pli = children.persons()[i].parent_log_income;
            if (opt.control_parent_level && std::isnan(pli)) continue;
            dc.push_back(std::log(c1) - std::log(c0));
            df.push_back(std::log(f1) - std::log(f0));
            pl.push_back(pli);
            fe.push_back(fathers.persons()[it->second].educ_group);
        }
        GrowthRow g;
        g.age_from = w.lo;
        g.age_to = w.hi;
        g.label = bin_label(w.lo, w.hi);
        g.n = dc.size();
        if (dc.size() < 3) {
            g.empty = true;
            g.coef = g.se = panel::kMissing;
            out.push_back(g);
            continue;
        }
        std::vector<std::string> names = {"(Intercept)", "father_growth"};
        std::vector<int> lv;
        if (opt.control_parent_level) {
            names.push_back("father_log_lifetime");
            std::set<int> s(fe.begin(), fe.end());
            lv.assign(s.begin(), s.end());
            if (!lv.empty()) lv.erase(lv.begin());
            for (int e : lv) names.push_back("father_educ=" + std::to_string(e));
        }
        Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dc.size()), static_cast<Eigen::Index>(names.size()));
        Eigen::VectorXd y(static_cast<Eigen::Index>(dc.size()));
        for (std::size_t k = 0; k < dc.size(); ++k) {
            auto ik = static_cast<Eigen::Index>(k);
            X(ik, 0) = 1.0;
            X(ik, 1) = df[k];
            if (opt.control_parent_level) {
                X(ik, 2) = pl[k];
                for (std::size_t c = 0; c < lv.size(); ++c)
                    if (fe[k] == lv[c]) X(ik, 3 + static_cast<Eigen::Index>(c)) = 1.0;
            }
            y(ik) = dc[k];
        }
        auto f = regression::fit(X, y, nullptr, 0, names, true);
        g.coef = f.coef(1);
        g.se = f.se(1);
        out.push_back(g);
    }
    return out;
}

}  // namespace mobilab::income
