#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "mobilab/cli.hpp"

namespace mobilab::cli {

namespace {

using estimators::EstimatorSpec;
using estimators::Variant;

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
    throw ConfigError(where.empty() ? msg : where + ": " + msg);
}

void check_keys(const toml::table& t, const std::string& where, std::set<std::string> allowed) {
    for (const auto& [k, v] : t) {
        (void)v;
        if (!allowed.count(std::string(k.str()))) fail(where, "unknown key '" + std::string(k.str()) + "'");
    }
}

const toml::table* sub(const toml::table& t, const char* key, const std::string& where) {
    const auto* n = t.get(key);
    if (!n) return nullptr;
    if (!n->is_table()) fail(where, std::string("'") + key + "' must be a table");
    return n->as_table();
}

template <typename T>
void get(const toml::table& t, const char* key, const std::string& where, T& out) {
    const auto* n = t.get(key);
    if (!n) return;
    if constexpr (std::is_same_v<T, bool>) {
        if (auto v = n->value<bool>()) { out = *v; return; }
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (auto v = n->value<std::string>()) { out = *v; return; }
    } else if constexpr (std::is_floating_point_v<T>) {
        if (auto v = n->value<double>()) { out = *v; return; }
    } else if constexpr (std::is_unsigned_v<T>) {
        if (auto v = n->value<std::int64_t>()) {
            if (*v < 0) fail(where, std::string("'") + key + "' must be >= 0");
            out = static_cast<T>(*v);
            return;
        }
    } else {
        if (auto v = n->value<std::int64_t>()) { out = static_cast<T>(*v); return; }
    }
    fail(where, std::string("'") + key + "' has the wrong type");
}

template <typename T>
void get_list(const toml::table& t, const char* key, const std::string& where, std::vector<T>& out) {
    const auto* n = t.get(key);
    if (!n) return;
    const auto* a = n->as_array();
    if (!a) fail(where, std::string("'") + key + "' must be an array");
    out.clear();
    for (const auto& e : *a) {
        std::optional<T> v;
        if constexpr (std::is_same_v<T, bool>) v = e.value<bool>();
        else if constexpr (std::is_same_v<T, std::string>) v = e.value<std::string>();
        else if constexpr (std::is_floating_point_v<T>) v = e.value<double>();
        else if (auto i = e.value<std::int64_t>()) v = static_cast<T>(*i);
        if (!v) fail(where, std::string("'") + key + "' has an element of the wrong type");
        out.push_back(*v);
    }
}

AgeWindow window_from(const toml::node& n, const std::string& where) {
    const auto* a = n.as_array();
    if (!a || a->size() != 2) fail(where, "age window must be [lo, hi]");
    auto lo = (*a)[0].value<std::int64_t>(), hi = (*a)[1].value<std::int64_t>();
    if (!lo || !hi) fail(where, "age window bounds must be integers");
    AgeWindow w{static_cast<int>(*lo), static_cast<int>(*hi)};
    if (w.lo > w.hi) fail(where, "age window lo > hi");
    return w;
}

void get_window(const toml::table& t, const char* key, const std::string& where, AgeWindow& out) {
    if (const auto* n = t.get(key)) out = window_from(*n, where + "." + key);
}

void get_windows(const toml::table& t, const char* key, const std::string& where, std::vector<AgeWindow>& out) {
    const auto* n = t.get(key);
    if (!n) return;
    const auto* a = n->as_array();
    if (!a || a->empty()) fail(where, std::string("'") + key + "' must be a non-empty array of [lo, hi]");
    out.clear();
    for (const auto& e : *a) out.push_back(window_from(e, where + "." + key));
}

void parse_simulation(const toml::table& t, income::SimConfig& s) {
    const std::string w = "simulation";
    check_keys(t, w, {"n_persons", "cohort_min", "cohort_max", "age_min", "age_max", "extras", "process", "family", "trend"});
    get(t, "n_persons", w, s.n_persons);
    get(t, "cohort_min", w, s.cohort_min);
    get(t, "cohort_max", w, s.cohort_max);
    get(t, "age_min", w, s.age_min);
    get(t, "age_max", w, s.age_max);
    get(t, "extras", w, s.extras);
    if (const auto* p = sub(t, "process", w)) {
        const std::string pw = w + ".process";
        check_keys(*p, pw, {"theta", "sigma2_alpha", "sigma2_beta", "sigma_alpha_beta", "rho", "pi", "phi", "sigma2_eta", "sigma2_eps"});
        std::vector<double> theta;
        get_list(*p, "theta", pw, theta);
        if (!theta.empty()) {
            if (theta.size() != 4) fail(pw, "theta must have 4 entries");
            std::copy(theta.begin(), theta.end(), s.hip.theta.begin());
        }
        get(*p, "sigma2_alpha", pw, s.hip.sigma2_alpha);
        get(*p, "sigma2_beta", pw, s.hip.sigma2_beta);
        get(*p, "sigma_alpha_beta", pw, s.hip.sigma_alpha_beta);
        get(*p, "rho", pw, s.hip.rho);
        get_list(*p, "pi", pw, s.hip.pi);
        get_list(*p, "phi", pw, s.hip.phi);
        get(*p, "sigma2_eta", pw, s.hip.sigma2_eta);
        get(*p, "sigma2_eps", pw, s.hip.sigma2_eps);
    }
    if (const auto* f = sub(t, "family", w)) {
        const std::string fw = w + ".family";
        check_keys(*f, fw, {"parent_mean", "parent_var", "load_intercept", "load_growth_linear", "load_growth_quad",
                            "educ_probs_by_parent", "educ_profiles"});
        get(*f, "parent_mean", fw, s.link.parent_mean);
        get(*f, "parent_var", fw, s.link.parent_var);
        get(*f, "load_intercept", fw, s.link.load_intercept);
        get(*f, "load_growth_linear", fw, s.link.load_growth_linear);
        get(*f, "load_growth_quad", fw, s.link.load_growth_quad);
        if (const auto* n = f->get("educ_probs_by_parent")) {
            const auto* a = n->as_array();
            if (!a) fail(fw, "educ_probs_by_parent must be an array of arrays");
            s.link.educ_probs_by_parent.clear();
            for (const auto& row : *a) {
                const auto* r = row.as_array();
                if (!r) fail(fw, "educ_probs_by_parent must be an array of arrays");
                std::vector<double> v;
                for (const auto& x : *r) {
                    auto d = x.value<double>();
                    if (!d) fail(fw, "educ_probs_by_parent entries must be numbers");
                    v.push_back(*d);
                }
                s.link.educ_probs_by_parent.push_back(std::move(v));
            }
        }
        if (const auto* n = f->get("educ_profiles")) {
            const auto* a = n->as_array();
            if (!a) fail(fw, "educ_profiles must be an array of tables");
            s.link.educ_profiles.clear();
            for (const auto& e : *a) {
                const auto* et = e.as_table();
                if (!et) fail(fw, "educ_profiles must be an array of tables");
                check_keys(*et, fw + ".educ_profiles", {"level", "linear", "quad", "noise_scale"});
                income::EducProfile ep;
                get(*et, "level", fw, ep.level);
                get(*et, "linear", fw, ep.linear);
                get(*et, "quad", fw, ep.quad);
                get(*et, "noise_scale", fw, ep.noise_scale);
                s.link.educ_profiles.push_back(ep);
            }
        }
    }
    if (const auto* tr = sub(t, "trend", w)) {
        const std::string tw = w + ".trend";
        check_keys(*tr, tw, {"breaks", "growth_multiplier", "last_observed_year"});
        get_list(*tr, "breaks", tw, s.trend.breaks);
        get_list(*tr, "growth_multiplier", tw, s.trend.growth_multiplier);
        if (tr->get("last_observed_year")) {
            int y = 0;
            get(*tr, "last_observed_year", tw, y);
            s.trend.last_observed_year = y;
        }
    }
}

void parse_geiv_sim(const toml::table& t, income::GeivSimConfig& g) {
    const std::string w = "geiv_simulation";
    check_keys(t, w, {"n_persons", "age_min", "age_max", "c", "beta", "parent_mean", "parent_sd", "sigma_v", "mu",
                      "lambda", "sigma_u", "u_parent_loading"});
    get(t, "n_persons", w, g.n_persons);
    get(t, "age_min", w, g.age_min);
    get(t, "age_max", w, g.age_max);
    get(t, "c", w, g.c);
    get(t, "beta", w, g.beta);
    get(t, "parent_mean", w, g.parent_mean);
    get(t, "parent_sd", w, g.parent_sd);
    get(t, "sigma_v", w, g.sigma_v);
    get_list(t, "mu", w, g.mu);
    get_list(t, "lambda", w, g.lambda);
    get(t, "sigma_u", w, g.sigma_u);
    get(t, "u_parent_loading", w, g.u_parent_loading);
}

EstimatorSpec parse_estimator(const toml::table& t, const std::string& w) {
    check_keys(t, w, {"variant", "mode", "smearing", "fe", "parental_income", "parental_educ", "parent_income_degree",
                      "parent_educ_degree", "prediction_ages", "bottom_code", "slope_level_iterations", "split",
                      "split_mode", "bootstrap_reps"});
    std::string name;
    get(t, "variant", w, name);
    if (name.empty()) fail(w, "'variant' is required");
    auto v = estimators::parse_variant(name);
    if (!v) fail(w, "unknown variant '" + name + "'");
    EstimatorSpec s = EstimatorSpec::for_variant(*v);
    std::string mode = "logs";
    get(t, "mode", w, mode);
    if (mode == "levels") {
        s.mode = estimators::Mode::levels;
        s.smearing = false;
    } else if (mode != "logs") {
        fail(w, "mode must be 'logs' or 'levels'");
    }
    get(t, "smearing", w, s.smearing);
    get(t, "fe", w, s.fe);
    get(t, "parental_income", w, s.parental_income);
    get(t, "parental_educ", w, s.parental_educ);
    get(t, "parent_income_degree", w, s.parent_income_degree);
    get(t, "parent_educ_degree", w, s.parent_educ_degree);
    get_window(t, "prediction_ages", w, s.prediction_ages);
    if (t.get("bottom_code")) {
        double b = 0.0;
        get(t, "bottom_code", w, b);
        s.bottom_code_predictions = b;
    }
    get(t, "slope_level_iterations", w, s.slope_level_iterations);
    get(t, "split", w, s.split);
    std::string sm = "random_assign";
    get(t, "split_mode", w, sm);
    if (sm == "duplicate") s.split_mode = panel::SplitMode::duplicate;
    else if (sm != "random_assign") fail(w, "split_mode must be 'random_assign' or 'duplicate'");
    get(t, "bootstrap_reps", w, s.bootstrap_reps);
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        fail(w, e.what());
    }
    return s;
}

std::vector<EstimatorSpec> default_estimators() {
    std::vector<EstimatorSpec> out;
    for (auto v : {Variant::Benchmark, Variant::DirectAnnual, Variant::BaselineFE, Variant::ParentalLinearFE,
                   Variant::ParentalQuadFE, Variant::ParentalQuadNoFE, Variant::SlopeLevelQuad})
        out.push_back(EstimatorSpec::for_variant(v));
    return out;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
    toml::table root;
    try {
        root = toml::parse(text, origin);
    } catch (const toml::parse_error& e) {
        std::ostringstream m;
        m << origin << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
        throw ConfigError(m.str());
    }
    check_keys(root, "", {"run", "panel", "simulation", "geiv_simulation", "estimate", "geiv", "creedy", "trends", "lasso", "growth"});
    RunConfig c;
    if (const auto* t = sub(root, "run", "")) {
        check_keys(*t, "run", {"seed", "out", "formats", "repetitions"});
        if (t->get("seed")) {
            std::uint64_t s = 0;
            get(*t, "seed", "run", s);
            c.seed = s;
        }
        get(*t, "out", "run", c.out);
        std::vector<std::string> f;
        get_list(*t, "formats", "run", f);
        if (t->get("formats")) {
            c.formats.clear();
            for (const auto& x : f) {
                if (x == "csv") c.formats.push_back(Format::csv);
                else if (x == "md" || x == "markdown") c.formats.push_back(Format::md);
                else fail("run", "unknown format '" + x + "'");
            }
        }
        get(*t, "repetitions", "run", c.repetitions);
        if (c.repetitions < 1) fail("run", "repetitions must be >= 1");
    }
    if (const auto* t = sub(root, "panel", "")) {
        check_keys(*t, "panel", {"source", "persons", "incomes", "fathers_persons", "fathers_incomes", "strict"});
        std::string src = "simulate";
        get(*t, "source", "panel", src);
        if (src == "simulate") c.panel.kind = SourceKind::simulate;
        else if (src == "families") c.panel.kind = SourceKind::families;
        else if (src == "geiv") c.panel.kind = SourceKind::geiv;
        else if (src == "csv") c.panel.kind = SourceKind::csv;
        else fail("panel", "source must be simulate, families, geiv or csv");
        get(*t, "persons", "panel", c.panel.persons_csv);
        get(*t, "incomes", "panel", c.panel.incomes_csv);
        get(*t, "fathers_persons", "panel", c.panel.fathers_persons_csv);
        get(*t, "fathers_incomes", "panel", c.panel.fathers_incomes_csv);
        get(*t, "strict", "panel", c.panel.csv.strict);
        if (c.panel.kind == SourceKind::csv && (c.panel.persons_csv.empty() || c.panel.incomes_csv.empty()))
            fail("panel", "csv source needs 'persons' and 'incomes'");
    }
    if (const auto* t = sub(root, "simulation", "")) parse_simulation(*t, c.panel.sim);
    if (const auto* t = sub(root, "geiv_simulation", "")) parse_geiv_sim(*t, c.panel.geiv);

    c.estimators = default_estimators();
    if (const auto* t = sub(root, "estimate", "")) {
        check_keys(*t, "estimate", {"windows", "estimators"});
        get_windows(*t, "windows", "estimate", c.windows);
        if (const auto* n = t->get("estimators")) {
            const auto* a = n->as_array();
            if (!a || a->empty()) fail("estimate", "'estimators' must be a non-empty array of tables");
            c.estimators.clear();
            for (std::size_t k = 0; k < a->size(); ++k) {
                const auto* et = (*a)[k].as_table();
                if (!et) fail("estimate", "'estimators' must be an array of tables");
                c.estimators.push_back(parse_estimator(*et, "estimate.estimators[" + std::to_string(k) + "]"));
            }
        }
    }
    if (const auto* t = sub(root, "geiv", "")) {
        check_keys(*t, "geiv", {"ages"});
        get_list(*t, "ages", "geiv", c.geiv_ages);
    }
    if (const auto* t = sub(root, "creedy", "")) {
        check_keys(*t, "creedy", {"ages", "mode", "target"});
        get_list(*t, "ages", "creedy", c.creedy_ages);
        std::string m = "parametric";
        get(*t, "mode", "creedy", m);
        if (m == "nonparametric") c.creedy_mode = estimators::CreedyMode::nonparametric;
        else if (m != "parametric") fail("creedy", "mode must be 'parametric' or 'nonparametric'");
        get_window(*t, "target", "creedy", c.creedy_target);
    }
    if (const auto* t = sub(root, "trends", "")) {
        check_keys(*t, "trends", {"cohort_breaks", "fe", "parent_age_quadratic", "smearing", "prediction_ages", "direct_window"});
        get_list(*t, "cohort_breaks", "trends", c.trends.cohort_breaks);
        get_list(*t, "fe", "trends", c.trends_fe);
        if (c.trends_fe.empty()) fail("trends", "'fe' must list at least one setting");
        get(*t, "parent_age_quadratic", "trends", c.trends.parent_age_quadratic);
        get(*t, "smearing", "trends", c.trends.smearing);
        get_window(*t, "prediction_ages", "trends", c.trends.prediction_ages);
        get_window(*t, "direct_window", "trends", c.trends_direct_window);
    }
    if (const auto* t = sub(root, "lasso", "")) {
        check_keys(*t, "lasso", {"window", "k_folds", "cv_points", "cv_alphas", "columns"});
        get_window(*t, "window", "lasso", c.lasso_window);
        get(*t, "k_folds", "lasso", c.lasso_k_folds);
        get(*t, "cv_points", "lasso", c.lasso_cv_points);
        get_list(*t, "cv_alphas", "lasso", c.lasso_cv_alphas);
        if (const auto* n = t->get("columns")) {
            const auto* a = n->as_array();
            if (!a || a->empty()) fail("lasso", "'columns' must be a non-empty array of tables");
            for (std::size_t k = 0; k < a->size(); ++k) {
                const std::string w = "lasso.columns[" + std::to_string(k) + "]";
                const auto* ct = (*a)[k].as_table();
                if (!ct) fail(w, "must be a table");
                check_keys(*ct, w, {"label", "lambda", "alpha", "lambda_relative", "unpenalize_parental", "postselection", "cross_validate"});
                LassoColumn col;
                get(*ct, "label", w, col.label);
                get(*ct, "lambda", w, col.lambda);
                get(*ct, "alpha", w, col.alpha);
                get(*ct, "lambda_relative", w, col.lambda_relative);
                get(*ct, "unpenalize_parental", w, col.unpenalize_parental);
                get(*ct, "postselection", w, col.postselection);
                get(*ct, "cross_validate", w, col.cross_validate);
                if (col.label.empty()) col.label = "column " + std::to_string(k + 1);
                c.lasso.push_back(col);
            }
        }
    }
    if (const auto* t = sub(root, "growth", "")) {
        check_keys(*t, "growth", {"end_ages", "span", "control", "median_share", "remove_year_effects", "windows", "control_parent_level"});
        get_list(*t, "end_ages", "growth", c.growth.end_ages);
        get(*t, "span", "growth", c.growth.span);
        std::string ctl = "none";
        get(*t, "control", "growth", ctl);
        if (ctl == "education") c.growth.control = income::GrowthControl::education;
        else if (ctl != "none") fail("growth", "control must be 'none' or 'education'");
        get(*t, "median_share", "growth", c.growth.median_share);
        get(*t, "remove_year_effects", "growth", c.growth.remove_year_effects);
        get_windows(*t, "windows", "growth", c.growth_on_growth.windows);
        get(*t, "control_parent_level", "growth", c.growth_on_growth.control_parent_level);
    }
    if (c.lasso.empty()) {
        c.lasso.push_back({"Lasso", 0.01, 1.0, true, false, false, false});
        c.lasso.push_back({"Lasso (not pen.)", 0.01, 1.0, true, true, false, false});
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return parse_config(s.str(), path);
}

}  // namespace mobilab::cli
