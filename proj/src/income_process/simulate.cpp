#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "mobilab/income_process.hpp"
#include "mobilab/parallel.hpp"
#include "mobilab/random.hpp"

namespace mobilab::income {

namespace {

std::string make_id(char prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%07zu", prefix, i + 1);
    return buf;
}

double at_or_one(const std::vector<double>& v, long k) {
    if (k < 0 || static_cast<std::size_t>(k) >= v.size()) return 1.0;
    return v[static_cast<std::size_t>(k)];
}

int draw_category(const std::vector<double>& probs, double u) {
    double c = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        c += probs[k];
        if (u < c) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size()) - 1;
}

// Theoretical quartile of a normal draw.
int normal_quartile(double z) {
    constexpr double q = 0.6744897501960817;
    return z < -q ? 0 : z < 0.0 ? 1 : z < q ? 2 : 3;
}

struct Draw {
    panel::PersonRecord rec;
    std::vector<double> log_y;  // one per age
};

// Person effects plus shocks for one profile. `p_dev` is parental income
// relative to its mean; growth loadings are scaled by `growth_mult`.
std::vector<double> draw_profile(const SimConfig& c, Rng& rng, int cohort, int educ, double p_dev, bool linked,
                                 double growth_mult) {
    const auto& hip = c.hip;
    const auto& link = c.link;
    std::normal_distribution<double> N(0.0, 1.0);
    const double sa = std::sqrt(hip.sigma2_alpha);
    const double l21 = sa > 0.0 ? hip.sigma_alpha_beta / sa : 0.0;
    const double l22 = std::sqrt(std::max(hip.sigma2_beta - l21 * l21, 0.0));
    const double n1 = N(rng), n2 = N(rng);
    const double alpha = sa * n1;
    const double beta = l21 * n1 + l22 * n2;
    const auto& ep = link.educ_profiles[static_cast<std::size_t>(educ)];
    const double s_eta = std::sqrt(hip.sigma2_eta), s_eps = std::sqrt(hip.sigma2_eps);
    const int T = c.age_max - c.age_min + 1;
    const int first_year = c.cohort_min + c.age_min;
    std::vector<double> out(static_cast<std::size_t>(T));
    double z = 0.0;
    for (int t = 0; t < T; ++t) {
        const double h = t;
        const int year = cohort + c.age_min + t;
        const double eta = N(rng), eps = N(rng);
        if (t > 0) z = hip.rho * z + at_or_one(hip.pi, year - first_year) * s_eta * eta;
        double y = common_profile(hip, h) + ep.level + ep.linear * h + ep.quad * h * h + alpha + beta * h;
        if (linked) {
            y += p_dev * (link.load_intercept +
                          growth_mult * (link.load_growth_linear * h + link.load_growth_quad * h * h));
        }
        y += ep.noise_scale * (z + at_or_one(hip.phi, year - first_year) * s_eps * eps);
        out[static_cast<std::size_t>(t)] = y;
    }
    return out;
}

double log_sum_exp(const std::vector<double>& v) {
    double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

void fill_extras(const SimConfig& c, std::size_t i, panel::PersonRecord& r, double z_parent) {
    Rng rng = make_rng(c.seed, "extras", i);
    std::normal_distribution<double> N(0.0, 1.0);
    std::poisson_distribution<int> kids(1.5);
    std::bernoulli_distribution imm(0.1);
    int fs = std::min(1 + kids(rng), 12);
    std::uniform_int_distribution<int> order(1, fs);
    int bo = order(rng);
    bool im = imm(rng);
    // stanine scores from latent normals
    auto stanine = [](double z) { return std::clamp(std::round(2.0 * z + 5.0), 1.0, 9.0); };
    double cog = stanine(0.4 * z_parent + 0.3 * (r.educ_group - 1.5) + 0.8 * N(rng));
    double noncog = stanine(0.3 * z_parent + 0.9 * N(rng));
    using panel::Extra;
    r.extras[static_cast<std::size_t>(Extra::family_size)] = fs;
    r.extras[static_cast<std::size_t>(Extra::birth_order)] = bo;
    r.extras[static_cast<std::size_t>(Extra::immigrant)] = im ? 1.0 : 0.0;
    r.extras[static_cast<std::size_t>(Extra::skill_cog)] = cog;
    r.extras[static_cast<std::size_t>(Extra::skill_noncog)] = noncog;
}

Panel assemble(const SimConfig& c, std::vector<Draw>& draws, std::string step, bool truncate) {
    std::vector<panel::PersonRecord> persons;
    std::vector<panel::IncomeObs> obs;
    persons.reserve(draws.size());
    obs.reserve(draws.size() * static_cast<std::size_t>(c.age_max - c.age_min + 1));
    for (std::size_t i = 0; i < draws.size(); ++i) {
        auto& d = draws[i];
        for (std::size_t t = 0; t < d.log_y.size(); ++t) {
            int age = c.age_min + static_cast<int>(t);
            int year = d.rec.cohort + age;
            if (truncate && c.trend.last_observed_year && year > *c.trend.last_observed_year) continue;
            obs.push_back({i, year, age, std::exp(d.log_y[t])});
        }
        persons.push_back(std::move(d.rec));
    }
    panel::PanelMetadata meta;
    meta.age_min = c.age_min;
    meta.age_max = c.age_max;
    meta.n_educ_groups = static_cast<int>(c.link.educ_profiles.size());
    meta.n_parent_educ_groups = meta.n_educ_groups;
    meta.provenance.push_back(std::move(step));
    return Panel::create(std::move(persons), std::move(obs), std::move(meta));
}

std::vector<Draw> draw_children(const SimConfig& c) {
    std::vector<Draw> draws(c.n_persons);
    const double psd = std::sqrt(c.link.parent_var);
    parallel_for(c.n_persons, [&](std::size_t i) {
        Rng rng = make_rng(c.seed, streams::simulation, i);
        std::uniform_int_distribution<int> coh(c.cohort_min, c.cohort_max);
        std::normal_distribution<double> N(0.0, 1.0);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        Draw& d = draws[i];
        auto& r = d.rec;
        r.person_id = make_id('C', i);
        r.family_id = make_id('F', i);
        r.cohort = coh(rng);
        const double zp = N(rng);
        r.parent_log_income = c.link.parent_mean + psd * zp;
        const int q = normal_quartile(zp);
        r.educ_group = draw_category(c.link.educ_probs_by_parent[static_cast<std::size_t>(q)], U(rng));
        r.parent_educ_group = draw_category(c.link.educ_probs_by_parent[static_cast<std::size_t>(q)], U(rng));
        double mult = 1.0;
        if (!c.trend.growth_multiplier.empty())
            mult = c.trend.growth_multiplier[static_cast<std::size_t>(c.cohort_group(r.cohort))];
        d.log_y = draw_profile(c, rng, r.cohort, r.educ_group, psd * zp, true, mult);
        r.true_log_lifetime = log_sum_exp(d.log_y);
        if (c.extras) fill_extras(c, i, r, zp);
    });
    return draws;
}

}  // namespace

double common_profile(const HipParams& hip, double h) {
    const auto& t = hip.theta;
    return t[0] + h * (t[1] + h * (t[2] + h * t[3]));
}

void HipParams::validate() const {
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be finite and >= 0");
    };
    nonneg(sigma2_alpha, "sigma2_alpha");
    nonneg(sigma2_beta, "sigma2_beta");
    nonneg(sigma2_eta, "sigma2_eta");
    nonneg(sigma2_eps, "sigma2_eps");
    if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("rho must satisfy |rho| < 1");
    double det = sigma2_alpha * sigma2_beta - sigma_alpha_beta * sigma_alpha_beta;
    if (det < -1e-15 * std::max(1.0, sigma2_alpha * sigma2_beta)) {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "heterogeneity covariance [[%g, %g], [%g, %g]] is not positive semidefinite (determinant %g)",
                      sigma2_alpha, sigma_alpha_beta, sigma_alpha_beta, sigma2_beta, det);
        throw std::invalid_argument(buf);
    }
    for (double v : pi) nonneg(v, "pi");
    for (double v : phi) nonneg(v, "phi");
}

void FamilyLink::validate() const {
    if (!(parent_var >= 0.0)) throw std::invalid_argument("parent_var must be >= 0");
    if (educ_profiles.empty()) throw std::invalid_argument("educ_profiles must be non-empty");
    if (educ_probs_by_parent.size() != 4) throw std::invalid_argument("educ_probs_by_parent needs one row per parental quartile");
    for (const auto& row : educ_probs_by_parent) {
        if (row.size() != educ_profiles.size())
            throw std::invalid_argument("educ_probs_by_parent rows must have one entry per education group");
        double s = 0.0;
        for (double v : row) {
            if (!(v >= 0.0)) throw std::invalid_argument("education probabilities must be >= 0");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("education probability row does not sum to 1");
    }
    for (const auto& e : educ_profiles)
        if (!(e.noise_scale >= 0.0)) throw std::invalid_argument("noise_scale must be >= 0");
}

void SimConfig::validate() const {
    if (n_persons == 0) throw std::invalid_argument("n_persons must be > 0");
    if (!(age_min < age_max)) throw std::invalid_argument("age_min must be < age_max");
    if (cohort_min > cohort_max) throw std::invalid_argument("cohort_min must be <= cohort_max");
    if (!std::is_sorted(trend.breaks.begin(), trend.breaks.end()))
        throw std::invalid_argument("cohort breaks must be sorted");
    if (!trend.growth_multiplier.empty() && trend.growth_multiplier.size() != trend.breaks.size() + 1)
        throw std::invalid_argument("growth_multiplier needs one entry per cohort group");
    hip.validate();
    link.validate();
}

int SimConfig::cohort_group(int cohort) const {
    return static_cast<int>(std::upper_bound(trend.breaks.begin(), trend.breaks.end(), cohort) - trend.breaks.begin());
}

Panel simulate_panel(const SimConfig& config) {
    config.validate();
    auto draws = draw_children(config);
    return assemble(config, draws, "simulate_panel(seed=" + std::to_string(config.seed) + ")", true);
}

Families simulate_families(const SimConfig& config) {
    config.validate();
    auto kids = draw_children(config);
    std::vector<Draw> dads(config.n_persons);
    parallel_for(config.n_persons, [&](std::size_t i) {
        Rng rng = make_rng(config.seed, streams::fathers, i);
        const auto& child = kids[i].rec;
        Draw& d = dads[i];
        d.rec.person_id = make_id('P', i);
        d.rec.family_id = child.family_id;
        d.rec.cohort = child.cohort - 30;
        d.rec.educ_group = child.parent_educ_group;
        d.rec.parent_educ_group = 0;
        d.log_y = draw_profile(config, rng, d.rec.cohort, d.rec.educ_group, 0.0, false, 1.0);
        // shift so the father's log lifetime income is the child's regressor
        double shift = child.parent_log_income - log_sum_exp(d.log_y);
        for (double& v : d.log_y) v += shift;
        d.rec.true_log_lifetime = child.parent_log_income;
    });
    Families f;
    f.children = assemble(config, kids, "simulate_families(seed=" + std::to_string(config.seed) + ")", true);
    SimConfig fc = config;
    fc.trend.last_observed_year.reset();
    f.fathers = assemble(fc, dads, "simulate_fathers(seed=" + std::to_string(config.seed) + ")", false);
    return f;
}

Panel simulate_geiv_panel(const GeivSimConfig& c) {
    if (c.n_persons == 0 || c.age_min >= c.age_max) throw std::invalid_argument("invalid GEiV simulation size");
    const int T = c.age_max - c.age_min + 1;
    std::vector<double> mu = c.mu, lambda = c.lambda;
    HipParams hip;
    if (mu.empty())
        for (int t = 0; t < T; ++t) mu.push_back(common_profile(hip, t));
    if (lambda.empty())
        for (int t = 0; t < T; ++t) lambda.push_back(0.5 + static_cast<double>(t) / (T - 1));
    if (static_cast<int>(mu.size()) != T || static_cast<int>(lambda.size()) != T)
        throw std::invalid_argument("mu and lambda need one entry per age");

    std::vector<Draw> draws(c.n_persons);
    parallel_for(c.n_persons, [&](std::size_t i) {
        Rng rng = make_rng(c.seed, streams::simulation, i);
        std::normal_distribution<double> N(0.0, 1.0);
        Draw& d = draws[i];
        d.rec.person_id = make_id('C', i);
        d.rec.family_id = make_id('F', i);
        d.rec.cohort = 1960;
        const double pdev = c.parent_sd * N(rng);
        d.rec.parent_log_income = c.parent_mean + pdev;
        const double ystar = c.c + c.beta * pdev + c.sigma_v * N(rng);
        d.rec.true_log_lifetime = ystar;
        d.log_y.resize(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            double u = c.sigma_u * N(rng) + c.u_parent_loading * pdev;
            d.log_y[static_cast<std::size_t>(t)] = mu[static_cast<std::size_t>(t)] + lambda[static_cast<std::size_t>(t)] * (ystar - c.c) + u;
        }
    });
    SimConfig shape;
    shape.age_min = c.age_min;
    shape.age_max = c.age_max;
    shape.link.educ_profiles.resize(1);
    return assemble(shape, draws, "simulate_geiv_panel(seed=" + std::to_string(c.seed) + ")", false);
}

}  // namespace mobilab::income
