#include <cmath>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <map>
#include <sstream>

#include "mobilab/cli.hpp"
#include "mobilab/csv.hpp"
#include "mobilab/parallel.hpp"
#include "mobilab/random.hpp"

namespace mobilab::cli {

namespace fs = std::filesystem;
using panel::Panel;
using estimators::EstimatorSpec;
using estimators::IgeEstimate;
using estimators::Variant;

namespace {

struct Loaded {
    Panel children;
    std::optional<Panel> fathers;
};

std::uint64_t rep_seed(std::uint64_t seed, std::size_t rep) {
    return rep == 0 ? seed : derive_seed(seed, streams::repetition, rep);
}

Loaded load_panel(const PanelSource& src, std::uint64_t seed, std::vector<CellError>& errors) {
    Loaded l;
    switch (src.kind) {
        case SourceKind::simulate: {
            auto c = src.sim;
            c.seed = seed;
            l.children = income::simulate_panel(c);
            break;
        }
        case SourceKind::families: {
            auto c = src.sim;
            c.seed = seed;
            auto f = income::simulate_families(c);
            l.children = std::move(f.children);
            l.fathers = std::move(f.fathers);
            break;
        }
        case SourceKind::geiv: {
            auto c = src.geiv;
            c.seed = seed;
            l.children = income::simulate_geiv_panel(c);
            break;
        }
        case SourceKind::csv: {
            auto r = panel::load_csv(src.persons_csv, src.incomes_csv, src.csv);
            for (const auto& e : r.errors)
                errors.push_back({"input " + e.file + ":" + std::to_string(e.line), e.message});
            l.children = std::move(r.panel);
            if (!src.fathers_persons_csv.empty()) {
                auto f = panel::load_csv(src.fathers_persons_csv, src.fathers_incomes_csv, src.csv);
                for (const auto& e : f.errors)
                    errors.push_back({"input " + e.file + ":" + std::to_string(e.line), e.message});
                l.fathers = std::move(f.panel);
            }
            break;
        }
    }
    return l;
}

std::string window_label(AgeWindow w) { return std::to_string(w.lo) + "-" + std::to_string(w.hi); }

Cell num(double v) { return v; }
Cell opt(const std::optional<double>& v) { return v ? Cell{*v} : Cell{}; }
Cell count(std::size_t n) { return static_cast<long long>(n); }

std::string rounded(double v) { return cell_text(Cell{v}, true); }

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? sep : "") + v[k];
    return out;
}

// ---------------------------------------------------------------------------

CommandResult cmd_simulate(const RunConfig& cfg) {
    CommandResult r;
    Loaded l = load_panel(cfg.panel, *cfg.seed, r.errors);
    auto pp = (fs::path(cfg.out) / "persons.csv").string();
    auto ip = (fs::path(cfg.out) / "incomes.csv").string();
    panel::write_csv(l.children, pp, ip);
    r.files = {pp, ip};
    if (l.fathers) {
        auto fp = (fs::path(cfg.out) / "fathers_persons.csv").string();
        auto fi = (fs::path(cfg.out) / "fathers_incomes.csv").string();
        panel::write_csv(*l.fathers, fp, fi);
        r.files.push_back(fp);
        r.files.push_back(fi);
    }
    return r;
}

struct CellOut {
    std::optional<IgeEstimate> est;
    std::string error;
};

std::string spec_label(const EstimatorSpec& s) {
    std::string n(estimators::variant_name(s.variant));
    if (s.mode == estimators::Mode::levels) n += " (levels)";
    return n;
}

// estimate and grid share the cell loop; grid aggregates across repetitions
CommandResult cmd_estimates(const RunConfig& cfg, bool grid) {
    CommandResult r;
    const std::size_t W = cfg.windows.size(), E = cfg.estimators.size(), R = cfg.repetitions;
    std::vector<CellOut> cells(R * W * E);
    std::vector<double> bench(R, panel::kMissing);
    for (std::size_t rep = 0; rep < R; ++rep) {
        const std::uint64_t seed = rep_seed(*cfg.seed, rep);
        Loaded l;
        try {
            l = load_panel(cfg.panel, seed, r.errors);
        } catch (const std::exception& e) {
            r.errors.push_back({"rep=" + std::to_string(rep) + " panel", e.what()});
            for (std::size_t k = 0; k < W * E; ++k) cells[rep * W * E + k].error = "panel unavailable";
            continue;
        }
        try {
            bench[rep] = estimators::estimate_benchmark(l.children).slope;
        } catch (const std::exception&) {
        }
        parallel_for(W * E, [&](std::size_t k) {
            const std::size_t w = k / E, e = k % E;
            EstimatorSpec s = cfg.estimators[e];
            s.seed = seed;
            auto& out = cells[rep * W * E + k];
            try {
                out.est = estimators::estimate(l.children, s, cfg.windows[w]);
            } catch (const std::exception& ex) {
                out.error = ex.what();
            }
        });
        for (std::size_t k = 0; k < W * E; ++k) {
            const auto& c = cells[rep * W * E + k];
            if (!c.est && c.error != "panel unavailable")
                r.errors.push_back({"rep=" + std::to_string(rep) + " window=" + window_label(cfg.windows[k / E]) +
                                        " estimator=" + spec_label(cfg.estimators[k % E]),
                                    c.error});
        }
    }

    Table t;
    if (!grid) {
        t.name = "estimates";
        t.title = "IGE estimates";
        t.columns = {"rep", "window", "estimator", "slope", "se", "r2_second_step", "r2_first_step_lifetime",
                     "n_persons", "n_excluded", "benchmark", "bootstrap_se", "flags"};
        for (std::size_t rep = 0; rep < R; ++rep)
            for (std::size_t k = 0; k < W * E; ++k) {
                const auto& c = cells[rep * W * E + k];
                std::vector<Cell> row = {count(rep), window_label(cfg.windows[k / E]), spec_label(cfg.estimators[k % E])};
                if (c.est) {
                    const auto& e = *c.est;
                    row.insert(row.end(), {num(e.slope), num(e.se), num(e.r2_second_step), opt(e.r2_first_step_lifetime),
                                           count(e.n_persons), count(e.n_excluded), num(bench[rep]),
                                           opt(e.bootstrap_se), join(e.flags, "; ")});
                } else {
                    row.insert(row.end(), {Cell{}, Cell{}, Cell{}, Cell{}, Cell{}, Cell{}, num(bench[rep]), Cell{}, "error: " + c.error});
                }
                t.rows.push_back(std::move(row));
            }
        r.tables.push_back(std::move(t));
        return r;
    }

    t.name = "grid";
    t.title = "Lifecycle estimator grid";
    t.columns = {"window", "estimator", "slope_mean", "slope_sd", "se_mean", "r2_second_step", "r2_first_step_lifetime",
                 "n_persons", "n_ok", "repetitions", "benchmark_mean"};
    auto bsum = estimators::summarize([&] {
        std::vector<double> v;
        for (double b : bench)
            if (!std::isnan(b)) v.push_back(b);
        return v;
    }());
    std::vector<std::vector<std::string>> md(W, std::vector<std::string>(E));
    for (std::size_t k = 0; k < W * E; ++k) {
        std::vector<double> sl, se, r2, r1, np;
        for (std::size_t rep = 0; rep < R; ++rep) {
            const auto& c = cells[rep * W * E + k];
            if (!c.est) continue;
            sl.push_back(c.est->slope);
            se.push_back(c.est->se);
            r2.push_back(c.est->r2_second_step);
            if (c.est->r2_first_step_lifetime) r1.push_back(*c.est->r2_first_step_lifetime);
            np.push_back(static_cast<double>(c.est->n_persons));
        }
        std::vector<Cell> row = {window_label(cfg.windows[k / E]), spec_label(cfg.estimators[k % E])};
        if (sl.empty()) {
            row.insert(row.end(), {Cell{}, Cell{}, Cell{}, Cell{}, Cell{}, Cell{}, count(0), count(R), num(bsum.mean)});
            md[k / E][k % E] = "n/a";
        } else {
            auto s = estimators::summarize(sl);
            row.insert(row.end(), {num(s.mean), sl.size() > 1 ? num(s.sd) : Cell{}, num(estimators::summarize(se).mean),
                                   num(estimators::summarize(r2).mean), r1.empty() ? Cell{} : num(estimators::summarize(r1).mean),
                                   num(estimators::summarize(np).mean), count(sl.size()), count(R), num(bsum.mean)});
            md[k / E][k % E] = rounded(s.mean) + " (" + rounded(sl.size() > 1 ? s.sd : estimators::summarize(se).mean) + ")";
        }
        t.rows.push_back(std::move(row));
    }
    std::ostringstream m;
    m << "### " << t.title << "\n\n| Window |";
    for (const auto& e : cfg.estimators) m << ' ' << spec_label(e) << " |";
    m << "\n| --- |";
    for (std::size_t e = 0; e < E; ++e) m << " --- |";
    m << "\n";
    for (std::size_t w = 0; w < W; ++w) {
        m << "| " << window_label(cfg.windows[w]) << " |";
        for (std::size_t e = 0; e < E; ++e) m << ' ' << md[w][e] << " |";
        m << "\n";
    }
    m << "\n- " << (R > 1 ? "mean across repetitions with the standard deviation in parentheses"
                          : "point estimate with the standard error in parentheses")
      << "\n- benchmark (true lifetime IGE): " << rounded(bsum.mean) << "\n";
    t.markdown = m.str();
    r.tables.push_back(std::move(t));
    return r;
}

CommandResult cmd_geiv(const RunConfig& cfg) {
    CommandResult r;
    Table t;
    t.name = "geiv";
    t.title = "Lifecycle bias and the errors-in-variables model";
    t.columns = {"rep", "age", "lambda", "lambda_se", "beta", "beta_se", "beta_over_lambda", "gap", "gap_se", "n",
                 "benchmark", "t_star"};
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
        try {
            Loaded l = load_panel(cfg.panel, rep_seed(*cfg.seed, rep), r.errors);
            std::vector<int> ages = cfg.geiv_ages;
            if (ages.empty())
                for (int a = l.children.metadata().age_min; a <= l.children.metadata().age_max; ++a) ages.push_back(a);
            auto g = estimators::geiv_diagnostics(l.children, ages);
            for (std::size_t k = 0; k < ages.size(); ++k)
                t.rows.push_back({count(rep), static_cast<long long>(ages[k]), num(g.lambda[k]), num(g.lambda_se[k]),
                                  num(g.beta[k]), num(g.beta_se[k]), num(g.ratio[k]), num(g.gap[k]), num(g.gap_se[k]),
                                  count(g.n[k]), num(g.benchmark), opt(g.t_star)});
        } catch (const std::exception& e) {
            r.errors.push_back({"rep=" + std::to_string(rep), e.what()});
        }
    }
    r.tables.push_back(std::move(t));
    return r;
}

CommandResult cmd_creedy(const RunConfig& cfg) {
    CommandResult r;
    Table t;
    t.name = "creedy";
    t.title = "Creedy lifetime-income estimator";
    t.columns = {"rep", "observed_age", "slope", "se", "n_persons", "n_excluded", "benchmark"};
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
        Loaded l;
        estimators::CreedyModel m;
        double bench = panel::kMissing;
        try {
            l = load_panel(cfg.panel, rep_seed(*cfg.seed, rep), r.errors);
            m = estimators::creedy_fit(l.children, cfg.creedy_mode);
            bench = estimators::estimate_benchmark(l.children).slope;
        } catch (const std::exception& e) {
            if (l.children.n_persons() == 0 || m.groups.empty()) {
                r.errors.push_back({"rep=" + std::to_string(rep), e.what()});
                continue;
            }
        }
        for (int age : cfg.creedy_ages) {
            try {
                auto e = estimators::creedy_estimate(l.children, m, age, cfg.creedy_target);
                t.rows.push_back({count(rep), static_cast<long long>(age), num(e.slope), num(e.se), count(e.n_persons),
                                  count(e.n_excluded), num(bench)});
            } catch (const std::exception& e) {
                r.errors.push_back({"rep=" + std::to_string(rep) + " age=" + std::to_string(age), e.what()});
            }
        }
    }
    r.tables.push_back(std::move(t));
    return r;
}

CommandResult cmd_trends(const RunConfig& cfg) {
    CommandResult r;
    if (cfg.trends.cohort_breaks.empty()) throw ConfigError("trends: 'cohort_breaks' must list at least one break");
    Table t;
    t.name = "trends";
    t.title = "IGE trends by cohort group";
    t.columns = {"rep", "estimator", "cohort_group", "slope", "se", "n_persons", "truth", "extrapolated"};
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
        Loaded l;
        try {
            l = load_panel(cfg.panel, rep_seed(*cfg.seed, rep), r.errors);
        } catch (const std::exception& e) {
            r.errors.push_back({"rep=" + std::to_string(rep) + " panel", e.what()});
            continue;
        }
        std::vector<std::optional<double>> truth;
        for (bool fe : cfg.trends_fe) {
            std::string label = fe ? "Trends FE" : "Trends no FE";
            try {
                auto spec = cfg.trends;
                spec.fe = fe;
                auto res = estimators::estimate_trends(l.children, spec);
                truth.clear();
                for (const auto& g : res.groups) {
                    truth.push_back(g.truth);
                    t.rows.push_back({count(rep), label, static_cast<long long>(g.group), num(g.estimate.slope),
                                      num(g.estimate.se), count(g.estimate.n_persons), opt(g.truth),
                                      std::string(g.extrapolated ? "yes" : "no")});
                }
            } catch (const std::exception& e) {
                r.errors.push_back({"rep=" + std::to_string(rep) + " estimator=" + label, e.what()});
            }
        }
        try {
            auto d = estimators::direct_by_group(l.children, cfg.trends.cohort_breaks, cfg.trends_direct_window);
            for (std::size_t g = 0; g < d.size(); ++g)
                t.rows.push_back({count(rep), "Direct " + window_label(cfg.trends_direct_window), static_cast<long long>(g),
                                  num(d[g].slope), num(d[g].se), count(d[g].n_persons),
                                  g < truth.size() ? opt(truth[g]) : Cell{}, std::string("no")});
        } catch (const std::exception& e) {
            r.errors.push_back({"rep=" + std::to_string(rep) + " estimator=Direct", e.what()});
        }
    }
    r.tables.push_back(std::move(t));
    return r;
}

CommandResult cmd_lasso(const RunConfig& cfg) {
    CommandResult r;
    Table t;
    t.name = "lasso";
    t.title = "ML estimation of lifecycle profiles";
    t.columns = {"rep", "estimator", "slope", "se", "# vars", "# vars selected", "lambda", "lambda_max", "alpha", "n_persons"};
    struct Col {
        std::string label;
        std::vector<double> slope, se, vars, sel, lambda;
    };
    std::vector<Col> cols(cfg.lasso.size() + 1);
    cols[0].label = "ParentalQuadFE";
    for (std::size_t k = 0; k < cfg.lasso.size(); ++k) cols[k + 1].label = cfg.lasso[k].label;
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
        const auto seed = rep_seed(*cfg.seed, rep);
        Loaded l;
        try {
            auto src = cfg.panel;
            src.sim.extras = true;
            l = load_panel(src, seed, r.errors);
        } catch (const std::exception& e) {
            r.errors.push_back({"rep=" + std::to_string(rep) + " panel", e.what()});
            continue;
        }
        auto base = EstimatorSpec::for_variant(Variant::ParentalQuadFE);
        base.seed = seed;
        try {
            auto e = estimators::estimate(l.children, base, cfg.lasso_window);
            t.rows.push_back({count(rep), cols[0].label, num(e.slope), num(e.se), Cell{}, Cell{}, Cell{}, Cell{}, Cell{},
                              count(e.n_persons)});
            cols[0].slope.push_back(e.slope);
            cols[0].se.push_back(e.se);
        } catch (const std::exception& e) {
            r.errors.push_back({"rep=" + std::to_string(rep) + " estimator=" + cols[0].label, e.what()});
        }
        for (std::size_t k = 0; k < cfg.lasso.size(); ++k) {
            const auto& c = cfg.lasso[k];
            regularization::MlConfig m;
            m.penalty.lambda = c.lambda;
            m.penalty.alpha = c.alpha;
            m.lambda_relative = c.lambda_relative;
            m.unpenalize_parental = c.unpenalize_parental;
            m.postselection = c.postselection;
            m.cross_validate = c.cross_validate;
            m.cv_alphas = cfg.lasso_cv_alphas;
            m.cv_points = cfg.lasso_cv_points;
            m.k_folds = cfg.lasso_k_folds;
            m.prediction = base;
            try {
                auto e = regularization::ml_lifecycle_estimate(l.children, cfg.lasso_window, m);
                t.rows.push_back({count(rep), c.label, num(e.estimate.slope), num(e.estimate.se), count(e.n_candidates),
                                  count(e.n_selected), num(e.lambda), num(e.lambda_max), num(e.alpha),
                                  count(e.estimate.n_persons)});
                auto& col = cols[k + 1];
                col.slope.push_back(e.estimate.slope);
                col.se.push_back(e.estimate.se);
                col.vars.push_back(static_cast<double>(e.n_candidates));
                col.sel.push_back(static_cast<double>(e.n_selected));
                col.lambda.push_back(e.lambda);
            } catch (const std::exception& e) {
                r.errors.push_back({"rep=" + std::to_string(rep) + " estimator=" + c.label, e.what()});
            }
        }
    }
    auto mean_or = [](const std::vector<double>& v, bool integer) -> std::string {
        if (v.empty()) return "";
        double m = estimators::summarize(v).mean;
        if (integer) return std::to_string(static_cast<long long>(std::llround(m)));
        return rounded(m);
    };
    std::ostringstream m;
    m << "### " << t.title << " (window " << window_label(cfg.lasso_window) << ")\n\n| |";
    for (const auto& c : cols) m << ' ' << c.label << " |";
    m << "\n| --- |";
    for (std::size_t k = 0; k < cols.size(); ++k) m << " --- |";
    m << "\n| IGE |";
    for (const auto& c : cols) m << ' ' << mean_or(c.slope, false) << " |";
    m << "\n| |";
    for (const auto& c : cols) m << " (" << mean_or(c.se, false) << ") |";
    m << "\n| # vars |";
    for (const auto& c : cols) m << ' ' << mean_or(c.vars, true) << " |";
    m << "\n| # vars selected |";
    for (const auto& c : cols) m << ' ' << mean_or(c.sel, true) << " |";
    m << "\n| λ |";
    for (const auto& c : cols) {
        std::string s;
        if (!c.lambda.empty()) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3g", estimators::summarize(c.lambda).mean);
            s = buf;
        }
        m << ' ' << s << " |";
    }
    m << "\n";
    t.markdown = m.str();
    r.tables.push_back(std::move(t));
    return r;
}

CommandResult cmd_growth(const RunConfig& cfg) {
    CommandResult r;
    Table a, b;
    a.name = "growth_gradient";
    a.title = "Income growth by parental income";
    b.name = "growth_on_growth";
    b.title = "Child income growth on father income growth";
    a.columns = b.columns = {"rep", "ages", "coef", "se", "n", "empty"};
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
        Loaded l;
        try {
            l = load_panel(cfg.panel, rep_seed(*cfg.seed, rep), r.errors);
        } catch (const std::exception& e) {
            r.errors.push_back({"rep=" + std::to_string(rep) + " panel", e.what()});
            continue;
        }
        auto add = [&](Table& t, const std::vector<income::GrowthRow>& rows) {
            for (const auto& g : rows)
                t.rows.push_back({count(rep), g.label, g.empty ? Cell{} : num(g.coef), g.empty ? Cell{} : num(g.se),
                                  count(g.n), std::string(g.empty ? "yes" : "no")});
        };
        try {
            add(a, income::growth_gradient_table(l.children, cfg.growth));
        } catch (const std::exception& e) {
            r.errors.push_back({"rep=" + std::to_string(rep) + " table=growth_gradient", e.what()});
        }
        if (!l.fathers) {
            r.errors.push_back({"rep=" + std::to_string(rep) + " table=growth_on_growth",
                                "needs fathers: use source = \"families\" or give fathers csv paths"});
            continue;
        }
        try {
            add(b, income::growth_on_growth_table(l.children, *l.fathers, cfg.growth_on_growth));
        } catch (const std::exception& e) {
            r.errors.push_back({"rep=" + std::to_string(rep) + " table=growth_on_growth", e.what()});
        }
    }
    r.tables.push_back(std::move(a));
    r.tables.push_back(std::move(b));
    return r;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"simulate", "estimate", "grid",  "geiv",
                                                   "creedy",   "trends",   "lasso", "growth"};
    return names;
}

bool is_stochastic(const std::string& command, const RunConfig& cfg) {
    if (cfg.panel.kind != SourceKind::csv) return true;
    if (command == "estimate" || command == "grid" || command == "lasso") {
        if (command == "lasso") return true;
        for (const auto& e : cfg.estimators)
            if (e.split || e.bootstrap_reps > 0) return true;
    }
    return false;
}

CommandResult run_command(const std::string& command, const RunConfig& in) {
    const auto& names = command_names();
    if (std::find(names.begin(), names.end(), command) == names.end())
        throw ConfigError("unknown command '" + command + "'");
    RunConfig cfg = in;
    if (!cfg.seed) {
        if (is_stochastic(command, cfg)) throw ConfigError(command + ": a seed is required (run.seed or --seed)");
        cfg.seed = 0;
    }
    fs::create_directories(cfg.out);

    CommandResult r;
    if (command == "simulate") r = cmd_simulate(cfg);
    else if (command == "estimate") r = cmd_estimates(cfg, false);
    else if (command == "grid") r = cmd_estimates(cfg, true);
    else if (command == "geiv") r = cmd_geiv(cfg);
    else if (command == "creedy") r = cmd_creedy(cfg);
    else if (command == "trends") r = cmd_trends(cfg);
    else if (command == "lasso") r = cmd_lasso(cfg);
    else r = cmd_growth(cfg);

    for (const auto& t : r.tables) {
        for (Format f : cfg.formats) {
            fs::path p = fs::path(cfg.out) / (t.name + (f == Format::csv ? ".csv" : ".md"));
            write_text(p, f == Format::csv ? to_csv(t) : to_markdown(t));
            r.files.push_back(p.string());
        }
    }
    Table err;
    err.columns = {"cell", "message"};
    for (const auto& e : r.errors) err.rows.push_back({e.cell, e.message});
    fs::path ep = fs::path(cfg.out) / "errors.csv";
    write_text(ep, to_csv(err));
    r.files.push_back(ep.string());
    return r;
}

int exit_code(const CommandResult& r) { return r.errors.empty() ? 0 : 1; }

}  // namespace mobilab::cli
