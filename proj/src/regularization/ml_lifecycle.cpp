#include <algorithm>
#include <cmath>
#include <set>

#include "mobilab/regularization.hpp"

namespace mobilab::regularization {

using namespace regression;

std::vector<CandidateVar> default_catalog(int cohort_min) {
    auto range = [](int lo, int hi) {
        std::vector<int> v;
        for (int k = lo; k <= hi; ++k) v.push_back(k);
        return v;
    };
    std::vector<CandidateVar> c;
    c.push_back({Variable::educ_group, true, range(1, 14)});
    c.push_back({Variable::parent_educ_group, true, range(1, 14)});
    c.push_back({Variable::parent_log_income, false, {}});
    c.push_back({Variable::immigrant, true, {1}});
    c.push_back({Variable::family_size, true, range(2, 12)});
    c.push_back({Variable::birth_order, true, range(2, 12)});
    c.push_back({Variable::skill_cog, true, range(2, 9)});
    c.push_back({Variable::skill_noncog, true, range(2, 9)});
    c.push_back({Variable::cohort, true, range(cohort_min + 1, cohort_min + 9)});
    return c;
}

DesignSpec candidate_design(const std::vector<CandidateVar>& catalog) {
    DesignSpec d;
    d.fe = FeKind::person;
    d.terms.push_back({{Factor::age(2)}});
    for (const auto& v : catalog) {
        if (v.categorical && v.levels.empty()) throw std::invalid_argument("candidate set: categorical variable without levels");
        Factor f = v.categorical ? Factor::cat(v.var, v.levels) : Factor::num(v.var);
        d.terms.push_back({{f}});
        d.terms.push_back({{f, Factor::age(2)}});
    }
    d.validate();
    return d;
}

namespace {

// Person-demeaned sufficient statistics, accumulated in person blocks.
struct Streamed {
    Gram total;
    std::vector<Gram> folds;
    Layout layout;
    Eigen::MatrixXd xbar;           // per person, rows of persons with data
    std::vector<double> ybar;
    std::vector<std::size_t> who;   // est person index per xbar row
};

Streamed stream(const Panel& est, const DesignSpec& d, const std::vector<int>* fold_of, int k_folds,
                std::size_t block) {
    Streamed s;
    std::size_t p = 0;
    std::vector<Eigen::MatrixXd> rows_x;
    for (std::size_t start = 0; start < est.n_persons(); start += block) {
        const std::size_t stop = std::min(est.n_persons(), start + block);
        std::vector<std::size_t> rows;
        for (std::size_t i = start; i < stop; ++i)
            for (std::size_t k = 0; k < est.observations_of(i).size(); ++k) rows.push_back(est.first_obs(i) + k);
        if (rows.empty()) continue;
        Design des = build_design(est, d, {}, rows);
        if (s.total.names.empty()) {
            s.layout = des.layout;
            p = des.layout.names.size();
            s.total = Gram::from_data(Eigen::MatrixXd::Zero(0, static_cast<Eigen::Index>(p)), Eigen::VectorXd(0), des.layout.names);
            if (fold_of) s.folds.assign(static_cast<std::size_t>(k_folds), s.total);
            s.xbar.resize(0, static_cast<Eigen::Index>(p));
        }
        // rows of one person are contiguous
        const auto n = static_cast<Eigen::Index>(des.person.size());
        Eigen::Index a = 0;
        while (a < n) {
            Eigen::Index b = a;
            while (b < n && des.person[static_cast<std::size_t>(b)] == des.person[static_cast<std::size_t>(a)]) ++b;
            const std::size_t i = des.person[static_cast<std::size_t>(a)];
            const Eigen::Index m = b - a;
            Eigen::RowVectorXd mx = des.X.middleRows(a, m).colwise().mean();
            double my = des.y.segment(a, m).mean();
            des.X.middleRows(a, m).rowwise() -= mx;
            // time-invariant columns must come out exactly zero
            for (Eigen::Index j = 0; j < des.X.cols(); ++j) {
                auto col = des.X.col(j).segment(a, m);
                if (col.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + std::abs(mx(j)))) col.setZero();
            }
            des.y.segment(a, m).array() -= my;
            s.who.push_back(i);
            s.ybar.push_back(my);
            rows_x.push_back(mx);
            if (fold_of) s.folds[static_cast<std::size_t>((*fold_of)[i])].add(des.X.middleRows(a, m), des.y.segment(a, m));
            a = b;
        }
        if (!fold_of) s.total.add(des.X, des.y);
    }
    if (s.total.names.empty()) throw estimators::EstimationError("ML lifecycle: no usable observations");
    if (fold_of) {
        s.total = s.folds[0];
        for (std::size_t f = 1; f < s.folds.size(); ++f) s.total = s.total + s.folds[f];
    }
    s.xbar.resize(static_cast<Eigen::Index>(rows_x.size()), static_cast<Eigen::Index>(p));
    for (std::size_t r = 0; r < rows_x.size(); ++r) s.xbar.row(static_cast<Eigen::Index>(r)) = rows_x[r];
    return s;
}

std::vector<std::string> unpenalized_names(const std::vector<std::string>& names, bool parental) {
    std::vector<std::string> out;
    std::set<std::string> want = {"age", "age^2"};
    if (parental) {
        want.insert("parent_log_income:age");
        want.insert("parent_log_income:age^2");
    }
    for (const auto& n : names)
        if (want.count(n)) out.push_back(n);
    return out;
}

}  // namespace

MlEstimate ml_lifecycle_estimate(const Panel& p, AgeWindow window, const MlConfig& cfg) {
    window.validate();
    cfg.penalty.validate();
    const auto& spec = cfg.prediction;
    spec.validate();
    if (cfg.block_persons == 0) throw std::invalid_argument("ML lifecycle: block_persons must be > 0");
    if (cfg.cross_validate && cfg.cv_alphas.empty()) throw std::invalid_argument("ML lifecycle: empty alpha grid");

    bool split = false;
    Panel est = estimators::estimation_panel(p, spec, window, split);
    int cohort_min = 0;
    if (cfg.catalog.empty()) {
        if (p.n_persons() == 0) throw estimators::EstimationError("ML lifecycle: empty panel");
        cohort_min = p.persons()[0].cohort;
        for (const auto& r : p.persons()) cohort_min = std::min(cohort_min, r.cohort);
    }
    auto catalog = cfg.catalog.empty() ? default_catalog(cohort_min) : cfg.catalog;
    DesignSpec d = candidate_design(catalog);

    std::vector<int> fold_of;
    if (cfg.cross_validate) fold_of = assign_folds(est.n_persons(), cfg.k_folds, spec.seed);
    Streamed s = stream(est, d, cfg.cross_validate ? &fold_of : nullptr, cfg.k_folds, cfg.block_persons);

    MlEstimate out;
    out.n_candidates = s.total.names.size();
    PenaltyConfig pc = cfg.penalty;
    pc.unpenalized = unpenalized_names(s.total.names, cfg.unpenalize_parental);
    for (const auto& u : cfg.penalty.unpenalized)
        if (std::find(pc.unpenalized.begin(), pc.unpenalized.end(), u) == pc.unpenalized.end()) pc.unpenalized.push_back(u);

    if (cfg.cross_validate) {
        PenaltyConfig c = pc;
        c.alpha = *std::min_element(cfg.cv_alphas.begin(), cfg.cv_alphas.end());
        auto grid = lambda_grid(lambda_max(s.total, c), cfg.cv_points);
        CvResult cv = cv_select(s.folds, pc, grid, cfg.cv_alphas);
        cv.fold_of_group = fold_of;
        pc.lambda = cv.lambda;
        pc.alpha = cv.alpha;
        out.cv = std::move(cv);
        out.lambda_max = lambda_max(s.total, pc);
    } else {
        out.lambda_max = lambda_max(s.total, pc);
        if (cfg.lambda_relative) pc.lambda = cfg.penalty.lambda * out.lambda_max;
    }
    PenalizedFit pf = cd_fit(s.total, pc);
    out.lambda = pc.lambda;
    out.alpha = pc.alpha;
    out.n_selected = pf.n_selected;

    Eigen::VectorXd coef = pf.coef;
    if (cfg.postselection) {
        auto keep = kept_columns(pf);
        const auto k = static_cast<Eigen::Index>(keep.size());
        Eigen::MatrixXd M(k, k);
        Eigen::VectorXd r(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index b = 0; b < k; ++b) M(a, b) = s.total.xx(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(a)]), static_cast<Eigen::Index>(keep[static_cast<std::size_t>(b)]));
            r(a) = s.total.xy(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(a)]));
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
        if (qr.rank() < k) throw CollinearityError("ML lifecycle: post-selection columns are collinear", {});
        Eigen::VectorXd x = qr.solve(r);
        coef.setZero();
        for (Eigen::Index a = 0; a < k; ++a) coef(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(a)])) = x(a);
    }

    estimators::ProfileFit prof;
    prof.fit.names = s.total.names;
    prof.fit.coef = coef;
    prof.fit.layout = s.layout;
    prof.fit.n_obs = static_cast<std::size_t>(s.total.n);
    prof.fit.fixed_effects.assign(est.n_persons(), panel::kMissing);
    for (std::size_t r = 0; r < s.who.size(); ++r)
        prof.fit.fixed_effects[s.who[r]] = s.ybar[r] - s.xbar.row(static_cast<Eigen::Index>(r)).dot(coef);
    prof.spec = spec;
    prof.window = {window.lo, est.metadata().age_max};

    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < est.n_persons(); ++i) {
        const auto& r = est.persons()[i];
        if (split && r.group_tag != panel::GroupTag::young) continue;
        if (std::isnan(r.parent_log_income)) continue;
        targets.push_back(i);
    }
    auto lp = estimators::predict_lifetime(prof, est, targets);
    estimators::SecondStep st;
    for (std::size_t k = 0; k < lp.persons.size(); ++k) {
        st.persons.push_back(lp.persons[k]);
        st.parent.push_back(est.persons()[lp.persons[k]].parent_log_income);
        st.child.push_back(lp.log_lifetime[k]);
    }
    out.estimate = estimators::second_step(st);
    out.estimate.window = window;
    out.estimate.spec = spec;
    out.estimate.n_excluded = lp.excluded.size();
    out.estimate.flags.push_back("selected " + std::to_string(pf.n_selected) + " of " + std::to_string(out.n_candidates));
    return out;
}

}  // namespace mobilab::regularization
