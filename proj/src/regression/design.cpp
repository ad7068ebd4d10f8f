#include <algorithm>
#include <cmath>
#include <set>

#include "mobilab/regression.hpp"

namespace mobilab::regression {

std::string_view variable_name(Variable v) {
    switch (v) {
        case Variable::age: return "age";
        case Variable::educ_group: return "educ_group";
        case Variable::parent_educ_group: return "parent_educ_group";
        case Variable::cohort_group: return "cohort_group";
        case Variable::cohort: return "cohort";
        case Variable::year: return "year";
        case Variable::parent_log_income: return "parent_log_income";
        case Variable::estimated_intercept: return "estimated_intercept";
        case Variable::standard_profile: return "standard_profile";
        case Variable::family_size: return "family_size";
        case Variable::birth_order: return "birth_order";
        case Variable::immigrant: return "immigrant";
        case Variable::skill_cog: return "skill_cog";
        case Variable::skill_noncog: return "skill_noncog";
    }
    return "?";
}

namespace {

bool same_factor(const Factor& a, const Factor& b) {
    return a.kind == b.kind && a.var == b.var && a.degree == b.degree && a.levels == b.levels;
}

bool same_term(const Term& a, const Term& b) {
    if (a.factors.size() != b.factors.size()) return false;
    for (std::size_t i = 0; i < a.factors.size(); ++i)
        if (!same_factor(a.factors[i], b.factors[i])) return false;
    return true;
}

// Scalar value of a non-polynomial variable; NaN when unavailable.
double variable_value(Variable v, const Panel& p, std::size_t person, int age, std::optional<int> year,
                      const DesignContext& ctx) {
    const auto& r = p.persons()[person];
    switch (v) {
        case Variable::age: return age;
        case Variable::educ_group: return r.educ_group;
        case Variable::parent_educ_group: return r.parent_educ_group;
        case Variable::cohort_group: return ctx.cohort_group(r.cohort);
        case Variable::cohort: return r.cohort;
        case Variable::year: return year ? static_cast<double>(*year) : panel::kMissing;
        case Variable::parent_log_income: return r.parent_log_income;
        case Variable::estimated_intercept:
            return person < ctx.estimated_intercepts.size() ? ctx.estimated_intercepts[person] : panel::kMissing;
        case Variable::standard_profile: return ctx.profile(age);
        case Variable::family_size: return r.extra(panel::Extra::family_size);
        case Variable::birth_order: return r.extra(panel::Extra::birth_order);
        case Variable::immigrant: return r.extra(panel::Extra::immigrant);
        case Variable::skill_cog: return r.extra(panel::Extra::skill_cog);
        case Variable::skill_noncog: return r.extra(panel::Extra::skill_noncog);
    }
    return panel::kMissing;
}

std::size_t factor_width(const Factor& f, const std::vector<int>& levels) {
    switch (f.kind) {
        case FactorKind::age_poly: return static_cast<std::size_t>(f.degree);
        case FactorKind::categorical: return levels.size();
        case FactorKind::continuous: return 1;
    }
    return 0;
}

std::vector<std::string> factor_names(const Factor& f, const std::vector<int>& levels) {
    std::vector<std::string> out;
    std::string base(variable_name(f.var));
    switch (f.kind) {
        case FactorKind::age_poly:
            for (int d = 1; d <= f.degree; ++d) out.push_back(d == 1 ? "age" : "age^" + std::to_string(d));
            break;
        case FactorKind::categorical:
            for (int l : levels) out.push_back(base + "=" + std::to_string(l));
            break;
        case FactorKind::continuous: out.push_back(base); break;
    }
    return out;
}

// Writes the factor's columns into out; returns false if a needed value is missing.
bool factor_values(const Factor& f, const std::vector<int>& levels, const Panel& p, std::size_t person, int age,
                   std::optional<int> year, const DesignContext& ctx, double center, double* out) {
    switch (f.kind) {
        case FactorKind::age_poly: {
            double c = age - center, v = 1.0;
            for (int d = 0; d < f.degree; ++d) {
                v *= c;
                out[d] = v;
            }
            return true;
        }
        case FactorKind::categorical: {
            if (f.var == Variable::year && !year) {
                std::fill(out, out + levels.size(), 0.0);
                return true;
            }
            double v = variable_value(f.var, p, person, age, year, ctx);
            if (std::isnan(v)) return false;
            int iv = static_cast<int>(std::lround(v));
            for (std::size_t k = 0; k < levels.size(); ++k) out[k] = levels[k] == iv ? 1.0 : 0.0;
            return true;
        }
        case FactorKind::continuous: {
            double v = variable_value(f.var, p, person, age, year, ctx);
            if (std::isnan(v)) return false;
            out[0] = v;
            return true;
        }
    }
    return false;
}

std::size_t column_count(const Layout& l) { return l.names.size(); }

// Fills one row; returns false when a covariate is missing.
bool fill_row(const Layout& l, const Panel& p, std::size_t person, int age, std::optional<int> year,
              const DesignContext& ctx, double* out) {
    std::size_t col = 0;
    if (l.intercept) out[col++] = 1.0;
    if (l.parent_intercept) {
        double v = p.persons()[person].parent_log_income;
        if (std::isnan(v)) return false;
        out[col++] = v;
    }
    double fbuf[3][64];
    double prod[256];
    for (std::size_t t = 0; t < l.spec.terms.size(); ++t) {
        const auto& term = l.spec.terms[t];
        std::size_t width = 1;
        prod[0] = 1.0;
        for (std::size_t k = 0; k < term.factors.size(); ++k) {
            const auto& f = term.factors[k];
            const auto& lv = l.levels[t][k];
            std::size_t w = factor_width(f, lv);
            if (!factor_values(f, lv, p, person, age, year, ctx, l.age_center, fbuf[k])) return false;
            // outer product, earlier factors vary slowest
            for (std::size_t a = width; a-- > 0;) {
                double pa = prod[a];
                for (std::size_t b = 0; b < w; ++b) prod[a * w + b] = pa * fbuf[k][b];
            }
            width *= w;
        }
        for (std::size_t a = 0; a < width; ++a) out[col++] = prod[a];
    }
    return true;
}

}  // namespace

int DesignContext::cohort_group(int cohort) const {
    return static_cast<int>(std::upper_bound(cohort_breaks.begin(), cohort_breaks.end(), cohort) - cohort_breaks.begin());
}

double DesignContext::profile(int age) const {
    int k = age - profile_age_min;
    if (standard_profile.empty() || k < 0 || k >= static_cast<int>(standard_profile.size())) return panel::kMissing;
    return standard_profile[static_cast<std::size_t>(k)];
}

void DesignSpec::validate() const {
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const auto& t = terms[i];
        if (t.factors.empty() || t.factors.size() > 3) throw std::invalid_argument("term arity must be 1, 2 or 3");
        for (const auto& f : t.factors) {
            if (f.kind == FactorKind::age_poly && (f.degree < 1 || f.degree > 8))
                throw std::invalid_argument("age polynomial degree must be in [1, 8]");
            if (f.kind == FactorKind::categorical && f.var == Variable::age)
                throw std::invalid_argument("age enters through age polynomials");
            if (fe == FeKind::parent_income_intercept && t.factors.size() == 1 && f.kind == FactorKind::continuous &&
                f.var == Variable::parent_log_income)
                throw std::invalid_argument("parent-income intercept already includes parent_log_income");
        }
        for (std::size_t j = 0; j < i; ++j)
            if (same_term(terms[i], terms[j])) throw std::invalid_argument("duplicate term in design spec");
    }
}

Design build_design(const Panel& p, const DesignSpec& spec, const DesignContext& ctx, const std::vector<std::size_t>& rows) {
    spec.validate();
    Design d;
    Layout& l = d.layout;
    l.spec = spec;
    l.intercept = spec.fe != FeKind::person;
    l.parent_intercept = spec.fe == FeKind::parent_income_intercept;
    l.age_center = ctx.age_center.value_or(0.5 * (p.metadata().age_min + p.metadata().age_max));

    const auto& obs = p.observations();
    std::vector<std::size_t> all;
    const std::vector<std::size_t>* use = &rows;
    if (rows.empty()) {
        all.resize(obs.size());
        for (std::size_t i = 0; i < obs.size(); ++i) all[i] = i;
        use = &all;
    }

    // resolve categorical levels from the rows in use
    l.levels.resize(spec.terms.size());
    for (std::size_t t = 0; t < spec.terms.size(); ++t) {
        const auto& term = spec.terms[t];
        l.levels[t].resize(term.factors.size());
        for (std::size_t k = 0; k < term.factors.size(); ++k) {
            const auto& f = term.factors[k];
            if (f.kind != FactorKind::categorical) continue;
            if (!f.levels.empty()) {
                l.levels[t][k] = f.levels;
                continue;
            }
            std::set<int> seen;
            for (std::size_t r : *use) {
                const auto& o = obs[r];
                double v = variable_value(f.var, p, o.person, o.age, o.year, ctx);
                if (!std::isnan(v)) seen.insert(static_cast<int>(std::lround(v)));
            }
            std::vector<int> lv(seen.begin(), seen.end());
            if (!lv.empty()) lv.erase(lv.begin());
            l.levels[t][k] = std::move(lv);
        }
    }

    if (l.intercept) l.names.push_back("(Intercept)");
    if (l.parent_intercept) l.names.push_back("parent_log_income");
    for (std::size_t t = 0; t < spec.terms.size(); ++t) {
        std::vector<std::string> names = {""};
        for (std::size_t k = 0; k < spec.terms[t].factors.size(); ++k) {
            auto fn = factor_names(spec.terms[t].factors[k], l.levels[t][k]);
            std::vector<std::string> next;
            for (const auto& a : names)
                for (const auto& b : fn) next.push_back(a.empty() ? b : a + ":" + b);
            names = std::move(next);
        }
        if (names.size() > 256) throw std::invalid_argument("term expands to more than 256 columns");
        for (auto& n : names) l.names.push_back(std::move(n));
    }

    const std::size_t pcols = column_count(l);
    d.X.resize(static_cast<Eigen::Index>(use->size()), static_cast<Eigen::Index>(pcols));
    d.y.resize(static_cast<Eigen::Index>(use->size()));
    d.obs_rows.reserve(use->size());
    d.person.reserve(use->size());
    std::vector<double> buf(pcols);
    Eigen::Index n = 0;
    for (std::size_t r : *use) {
        const auto& o = obs[r];
        if (!fill_row(l, p, o.person, o.age, o.year, ctx, buf.data())) {
            ++d.n_skipped;
            continue;
        }
        for (std::size_t c = 0; c < pcols; ++c) d.X(n, static_cast<Eigen::Index>(c)) = buf[c];
        d.y(n) = spec.response == Response::log_income ? panel::log_income(o) : o.income_level;
        d.obs_rows.push_back(r);
        d.person.push_back(o.person);
        ++n;
    }
    d.X.conservativeResize(n, Eigen::NoChange);
    d.y.conservativeResize(n);
    return d;
}

void design_row(const Layout& layout, const Panel& p, std::size_t person, int age, std::optional<int> year,
                const DesignContext& ctx, double* out) {
    if (!fill_row(layout, p, person, age, year, ctx, out)) {
        std::fill(out, out + layout.names.size(), panel::kMissing);
    }
}

}  // namespace mobilab::regression
