#include <algorithm>
#include <cmath>

#include "mobilab/regression.hpp"

namespace mobilab::regression {

namespace {

constexpr double kRankTol = 1e-10;

struct GroupMeans {
    std::vector<double> count;
    Eigen::MatrixXd x;  // n_groups × p
    Eigen::VectorXd y;
};

GroupMeans group_means(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::size_t>& g,
                       std::size_t n_groups) {
    GroupMeans m;
    const Eigen::Index p = X.cols();
    m.count.assign(n_groups, 0.0);
    m.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_groups), p);
    m.y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_groups));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        std::size_t k = g[static_cast<std::size_t>(i)];
        if (k >= n_groups) throw RegressionError("group id out of range");
        m.count[k] += 1.0;
        m.y(static_cast<Eigen::Index>(k)) += y(i);
    }
    // column-major friendly accumulation
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < X.rows(); ++i) m.x(static_cast<Eigen::Index>(g[static_cast<std::size_t>(i)]), j) += X(i, j);
    for (std::size_t k = 0; k < n_groups; ++k) {
        if (m.count[k] == 0.0) continue;
        m.x.row(static_cast<Eigen::Index>(k)) /= m.count[k];
        m.y(static_cast<Eigen::Index>(k)) /= m.count[k];
    }
    return m;
}

void demean_into(const Eigen::MatrixXd& X, const std::vector<std::size_t>& g, const Eigen::MatrixXd& means,
                 Eigen::MatrixXd& out) {
    out.resize(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            out(i, j) = X(i, j) - means(static_cast<Eigen::Index>(g[static_cast<std::size_t>(i)]), j);
}

std::string name_of(const std::vector<std::string>& names, Eigen::Index j) {
    return static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)] : "x" + std::to_string(j);
}

}  // namespace

std::optional<std::size_t> FitResult::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    return std::nullopt;
}

double FitResult::coefficient(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw std::out_of_range("no coefficient named '" + std::string(name) + "'");
    return coef(static_cast<Eigen::Index>(*i));
}

double FitResult::std_error(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw std::out_of_range("no coefficient named '" + std::string(name) + "'");
    return se(static_cast<Eigen::Index>(*i));
}

FitResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::size_t>* groups,
              std::size_t n_groups, std::vector<std::string> names, bool robust) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (y.size() != n) throw RegressionError("response length does not match design rows");
    if (groups && groups->size() != static_cast<std::size_t>(n)) throw RegressionError("group vector length mismatch");
    if (!names.empty() && names.size() != static_cast<std::size_t>(p)) throw RegressionError("name count mismatch");
    if (names.empty())
        for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));

    FitResult r;
    r.names = names;
    r.n_obs = static_cast<std::size_t>(n);

    GroupMeans gm;
    std::size_t g_used = 0;
    Eigen::MatrixXd Xd;
    Eigen::VectorXd yd;
    if (groups) {
        gm = group_means(X, y, *groups, n_groups);
        for (double c : gm.count) g_used += c > 0.0;
        demean_into(X, *groups, gm.x, Xd);
        yd.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) yd(i) = y(i) - gm.y(static_cast<Eigen::Index>((*groups)[static_cast<std::size_t>(i)]));
    } else {
        Xd = X;
        yd = y;
    }
    const std::size_t k = static_cast<std::size_t>(p) + g_used;
    r.n_params = k;
    if (static_cast<std::size_t>(n) <= k) {
        throw RegressionError("need more observations than parameters (n = " + std::to_string(n) +
                              ", k = " + std::to_string(k) + ")");
    }

    Eigen::VectorXd scale(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        scale(j) = Xd.col(j).norm();
        if (!(scale(j) > 0.0)) {
            throw CollinearityError("column '" + name_of(names, j) + "' is identically zero" +
                                        (groups ? " after fixed-effect absorption" : ""),
                                    {name_of(names, j)});
        }
        Xd.col(j) /= scale(j);
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd Ainv;  // (X'X)^-1 on the scaled columns
    if (p > 0) {
        // in place; the threshold only affects rank() and solve()
        Eigen::ColPivHouseholderQR<Eigen::Ref<Eigen::MatrixXd>> qr(Xd);
        qr.setThreshold(kRankTol);
        const Eigen::Index rank = qr.rank();
        const auto& perm = qr.colsPermutation().indices();
        if (rank < p) {
            // first rejected pivot column, expressed in the accepted ones
            Eigen::MatrixXd R = qr.matrixR().topLeftCorner(rank, rank).triangularView<Eigen::Upper>();
            Eigen::VectorXd rhs = qr.matrixR().block(0, rank, rank, 1);
            Eigen::VectorXd c = R.triangularView<Eigen::Upper>().solve(rhs);
            std::vector<std::string> cols = {name_of(names, perm(rank))};
            double cmax = c.size() ? c.cwiseAbs().maxCoeff() : 0.0;
            for (Eigen::Index a = 0; a < rank; ++a)
                if (std::abs(c(a)) > 1e-8 * std::max(cmax, 1.0)) cols.push_back(name_of(names, perm(a)));
            std::sort(cols.begin() + 1, cols.end());
            std::string msg = "exact collinearity among columns:";
            for (const auto& s : cols) msg += " '" + s + "'";
            throw CollinearityError(msg, cols);
        }
        beta = qr.solve(yd);
        Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
        Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
        Eigen::MatrixXd RRt = Rinv * Rinv.transpose();
        Ainv.resize(p, p);
        for (Eigen::Index a = 0; a < p; ++a)
            for (Eigen::Index b = 0; b < p; ++b) Ainv(perm(a), perm(b)) = RRt(a, b);
    }

    // residuals and fixed effects from the original columns
    Eigen::VectorXd fitted = p > 0 ? Eigen::VectorXd(X * (beta.array() / scale.array()).matrix()) : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd raw = y - fitted;
    if (groups) {
        std::vector<double> fe(n_groups, 0.0);
        for (Eigen::Index i = 0; i < n; ++i) fe[(*groups)[static_cast<std::size_t>(i)]] += raw(i);
        for (std::size_t g = 0; g < n_groups; ++g) fe[g] = gm.count[g] > 0.0 ? fe[g] / gm.count[g] : panel::kMissing;
        r.residuals.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) r.residuals(i) = raw(i) - fe[(*groups)[static_cast<std::size_t>(i)]];
        r.fixed_effects = std::move(fe);
    } else {
        r.residuals = raw;
    }

    Eigen::VectorXd cov_diag = Eigen::VectorXd::Zero(p);
    if (p > 0) {
        const double dof = static_cast<double>(n) - static_cast<double>(k);
        if (robust) {
            // rebuild the scaled demeaned design for the meat
            if (groups) demean_into(X, *groups, gm.x, Xd);
            else Xd = X;
            for (Eigen::Index j = 0; j < p; ++j) Xd.col(j).array() *= r.residuals.array().abs() / scale(j);
            Eigen::MatrixXd meat = Xd.transpose() * Xd;
            Eigen::MatrixXd V = Ainv * meat * Ainv * (static_cast<double>(n) / dof);
            cov_diag = V.diagonal();
        } else {
            double s2 = r.residuals.squaredNorm() / dof;
            cov_diag = Ainv.diagonal() * s2;
        }
    }
    r.coef = beta.array() / scale.array();
    r.se = (cov_diag.array().max(0.0).sqrt() / scale.array()).matrix();

    double ybar = n > 0 ? y.mean() : 0.0;
    double sst = (y.array() - ybar).square().sum();
    double ssr = r.residuals.squaredNorm();
    r.r2 = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 1.0;
    return r;
}

FitResult fit(const Design& d, std::size_t n_persons) {
    FitResult r = fit(d.X, d.y, d.layout.spec.fe == FeKind::person ? &d.person : nullptr, n_persons, d.layout.names,
                      d.layout.spec.robust);
    r.layout = d.layout;
    return r;
}

Residualized residualize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::size_t>& groups,
                         std::size_t n_groups) {
    if (groups.size() != static_cast<std::size_t>(X.rows()) || y.size() != X.rows())
        throw RegressionError("residualize: size mismatch");
    GroupMeans gm = group_means(X, y, groups, n_groups);
    Residualized out;
    demean_into(X, groups, gm.x, out.X);
    out.y.resize(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) out.y(i) = y(i) - gm.y(static_cast<Eigen::Index>(groups[static_cast<std::size_t>(i)]));
    return out;
}

Prediction predict(const FitResult& f, const Panel& p, const std::vector<std::size_t>& persons,
                   const std::vector<int>& ages, const DesignContext& ctx) {
    Prediction out;
    out.ages = ages;
    const bool with_fe = f.layout.spec.fe == FeKind::person;
    const std::size_t k = f.layout.names.size();
    if (k != static_cast<std::size_t>(f.coef.size())) throw RegressionError("predict: fit has no design layout");
    std::vector<double> row(k);
    std::vector<std::vector<double>> rows;
    for (std::size_t i : persons) {
        double fe = 0.0;
        if (with_fe) {
            fe = i < f.fixed_effects.size() ? f.fixed_effects[i] : panel::kMissing;
            if (std::isnan(fe)) {
                out.excluded.push_back(i);
                continue;
            }
        }
        std::vector<double> vals(ages.size());
        bool ok = true;
        for (std::size_t a = 0; a < ages.size() && ok; ++a) {
            design_row(f.layout, p, i, ages[a], std::nullopt, ctx, row.data());
            double v = fe;
            for (std::size_t c = 0; c < k; ++c) v += row[c] * f.coef(static_cast<Eigen::Index>(c));
            if (std::isnan(v)) ok = false;
            vals[a] = v;
        }
        if (!ok) {
            out.excluded.push_back(i);
            continue;
        }
        out.persons.push_back(i);
        rows.push_back(std::move(vals));
    }
    out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ages.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t a = 0; a < ages.size(); ++a) out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) = rows[r][a];
    return out;
}

SimpleOls simple_ols(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw RegressionError("simple_ols: size mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw RegressionError("simple_ols: need at least 3 observations");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw CollinearityError("simple_ols: regressor has no variation", {"x"});
    SimpleOls r;
    r.n = n;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double meat = 0.0, ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = y[i] - r.intercept - r.slope * x[i];
        double dx = x[i] - mx;
        meat += dx * dx * e * e;
        ssr += e * e;
    }
    double nd = static_cast<double>(n);
    r.se = std::sqrt(meat / (sxx * sxx) * nd / (nd - 2.0));
    r.r2 = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
    return r;
}

}  // namespace mobilab::regression
