#include <algorithm>
#include <cmath>
#include <set>

#include "mobilab/regularization.hpp"

namespace mobilab::regularization {

void PenaltyConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("penalty: lambda must be finite and >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("penalty: alpha must be in [0, 1]");
    if (max_iter < 1) throw std::invalid_argument("penalty: max_iter must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("penalty: tol must be > 0");
}

Gram Gram::from_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::string> names) {
    if (X.rows() != y.size()) throw std::invalid_argument("Gram: X and y row counts differ");
    if (static_cast<std::size_t>(X.cols()) != names.size()) throw std::invalid_argument("Gram: names do not match columns");
    Gram g;
    g.xx = Eigen::MatrixXd::Zero(X.cols(), X.cols());
    g.xy = Eigen::VectorXd::Zero(X.cols());
    g.names = std::move(names);
    g.add(X, y);
    return g;
}

void Gram::add(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.cols() != xx.cols() || X.rows() != y.size()) throw std::invalid_argument("Gram::add: shape mismatch");
    if (X.rows() == 0) return;
    xx.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
    xx.triangularView<Eigen::StrictlyUpper>() = xx.transpose();
    xy.noalias() += X.transpose() * y;
    yy += y.squaredNorm();
    n += static_cast<double>(X.rows());
}

Gram Gram::operator-(const Gram& o) const {
    if (o.xx.cols() != xx.cols()) throw std::invalid_argument("Gram: shape mismatch");
    Gram g{xx - o.xx, xy - o.xy, yy - o.yy, n - o.n, names};
    return g;
}

Gram Gram::operator+(const Gram& o) const {
    if (o.xx.cols() != xx.cols()) throw std::invalid_argument("Gram: shape mismatch");
    Gram g{xx + o.xx, xy + o.xy, yy + o.yy, n + o.n, names};
    return g;
}

namespace {

// Standardized problem: G = D⁻¹(X'X/n)D⁻¹, c = D⁻¹X'y/n, b = D·coef.
struct Problem {
    Eigen::MatrixXd G;
    Eigen::VectorXd c;
    Eigen::VectorXd s;
    std::vector<bool> pen, inert;
    double la = 0.0, lr = 0.0;
};

Problem make_problem(const Gram& g, const PenaltyConfig& cfg) {
    cfg.validate();
    if (g.n <= 0.0) throw std::invalid_argument("penalized fit: empty Gram");
    const auto p = g.xx.cols();
    if (static_cast<std::size_t>(p) != g.names.size()) throw std::invalid_argument("penalized fit: names do not match Gram");
    std::set<std::string> known(g.names.begin(), g.names.end());
    for (const auto& u : cfg.unpenalized)
        if (!known.count(u)) throw std::invalid_argument("penalized fit: unknown unpenalized column '" + u + "'");
    std::set<std::string> unpen(cfg.unpenalized.begin(), cfg.unpenalized.end());

    Problem pr;
    pr.s.resize(p);
    pr.pen.resize(static_cast<std::size_t>(p));
    pr.inert.resize(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) {
        double m2 = g.xx(j, j) / g.n;
        auto ju = static_cast<std::size_t>(j);
        pr.inert[ju] = !(m2 > 1e-300);
        pr.s(j) = pr.inert[ju] ? 1.0 : (cfg.standardize ? std::sqrt(m2) : 1.0);
        pr.pen[ju] = !unpen.count(g.names[ju]);
    }
    Eigen::VectorXd inv = pr.s.cwiseInverse();
    pr.G = inv.asDiagonal() * (g.xx / g.n) * inv.asDiagonal();
    pr.c = inv.asDiagonal() * (g.xy / g.n);
    pr.la = cfg.lambda * cfg.alpha;
    pr.lr = cfg.lambda * (1.0 - cfg.alpha);
    return pr;
}

double soft(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

double std_objective(const Problem& pr, double yyn, const Eigen::VectorXd& b) {
    double loss = 0.5 * (yyn - 2.0 * b.dot(pr.c) + b.dot(pr.G * b));
    double l1 = 0.0, l2 = 0.0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        if (!pr.pen[static_cast<std::size_t>(j)]) continue;
        l1 += std::abs(b(j));
        l2 += b(j) * b(j);
    }
    return loss + pr.la * l1 + 0.5 * pr.lr * l2;
}

double std_kkt(const Problem& pr, const Eigen::VectorXd& b) {
    Eigen::VectorXd g = pr.c - pr.G * b;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        auto ju = static_cast<std::size_t>(j);
        if (pr.inert[ju]) continue;
        double v;
        if (!pr.pen[ju]) v = std::abs(g(j));
        else if (b(j) == 0.0) v = std::max(0.0, std::abs(g(j)) - pr.la);
        else v = std::abs(g(j) - pr.lr * b(j) - pr.la * (b(j) > 0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
    }
    return worst;
}

// Solve the stationarity equations on the current support with signs held fixed.
// Accepted only if signs survive and every excluded penalized column satisfies KKT.
bool polish(const Problem& pr, Eigen::VectorXd& b) {
    std::vector<Eigen::Index> A;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        auto ju = static_cast<std::size_t>(j);
        if (pr.inert[ju]) continue;
        if (!pr.pen[ju] || b(j) != 0.0) A.push_back(j);
    }
    if (A.empty()) return false;
    const auto k = static_cast<Eigen::Index>(A.size());
    Eigen::MatrixXd M(k, k);
    Eigen::VectorXd r(k);
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index c = 0; c < k; ++c) M(a, c) = pr.G(A[a], A[c]);
        r(a) = pr.c(A[a]);
        if (pr.pen[static_cast<std::size_t>(A[a])]) {
            M(a, a) += pr.lr;
            r(a) -= pr.la * (b(A[a]) > 0 ? 1.0 : -1.0);
        }
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    Eigen::VectorXd x = ldlt.solve(r);
    if (!x.allFinite() || (M * x - r).norm() > 1e-9 * (1.0 + r.norm())) return false;
    Eigen::VectorXd nb = b;
    for (Eigen::Index a = 0; a < k; ++a) {
        Eigen::Index j = A[a];
        if (pr.pen[static_cast<std::size_t>(j)] && (x(a) > 0) != (b(j) > 0)) return false;
        nb(j) = x(a);
    }
    Eigen::VectorXd g = pr.c - pr.G * nb;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        auto ju = static_cast<std::size_t>(j);
        if (pr.inert[ju] || !pr.pen[ju] || nb(j) != 0.0) continue;
        if (std::abs(g(j)) > pr.la * (1.0 + 1e-12) + 1e-14) return false;
    }
    b = nb;
    return true;
}

PenalizedFit finish(const Gram& g, const PenaltyConfig& cfg, const Problem& pr, const Eigen::VectorXd& b, int iters) {
    PenalizedFit f;
    f.coef = b.cwiseQuotient(pr.s);
    f.names = g.names;
    f.penalized = pr.pen;
    f.inert = pr.inert;
    f.lambda = cfg.lambda;
    f.alpha = cfg.alpha;
    for (Eigen::Index j = 0; j < b.size(); ++j)
        if (pr.pen[static_cast<std::size_t>(j)] && b(j) != 0.0) f.selected.push_back(static_cast<std::size_t>(j));
    f.n_selected = f.selected.size();
    f.objective = std_objective(pr, g.yy / g.n, b);
    f.iterations = iters;
    return f;
}

}  // namespace

PenalizedFit cd_fit(const Gram& g, const PenaltyConfig& cfg, const Eigen::VectorXd* warm) {
    Problem pr = make_problem(g, cfg);
    const auto p = pr.G.cols();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    if (warm) {
        if (warm->size() != p) throw std::invalid_argument("cd_fit: warm start has wrong length");
        b = warm->cwiseProduct(pr.s);
        for (Eigen::Index j = 0; j < p; ++j)
            if (pr.inert[static_cast<std::size_t>(j)] || !std::isfinite(b(j))) b(j) = 0.0;
    }
    Eigen::VectorXd grad = pr.c - pr.G * b;
    const double yyn = g.yy / g.n;
    std::vector<double> trace;
    constexpr std::size_t kTraceCap = 1000;
    constexpr int kPolishEvery = 25;

    for (int it = 1; it <= cfg.max_iter; ++it) {
        double maxd = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            auto ju = static_cast<std::size_t>(j);
            if (pr.inert[ju]) continue;
            double gjj = pr.G(j, j);
            double z = grad(j) + gjj * b(j);
            double nb = pr.pen[ju] ? soft(z, pr.la) / (gjj + pr.lr) : z / gjj;
            double d = nb - b(j);
            if (d == 0.0) continue;
            b(j) = nb;
            grad.noalias() -= d * pr.G.col(j);
            maxd = std::max(maxd, std::abs(d));
        }
        if (trace.size() == kTraceCap) trace.erase(trace.begin());
        trace.push_back(std_objective(pr, yyn, b));
        if (!std::isfinite(trace.back())) throw ConvergenceError("cd_fit: objective is not finite", b.cwiseQuotient(pr.s), trace);
        if (maxd < cfg.tol || it % kPolishEvery == 0) {
            Eigen::VectorXd cand = b;
            if (polish(pr, cand) && std_objective(pr, yyn, cand) <= trace.back() + 1e-14) {
                b = cand;
                grad = pr.c - pr.G * b;
                maxd = 0.0;
            } else if (maxd >= cfg.tol) {
                continue;
            }
            grad = pr.c - pr.G * b;
            return finish(g, cfg, pr, b, it);
        }
    }
    throw ConvergenceError("cd_fit: no convergence after " + std::to_string(cfg.max_iter) + " sweeps",
                           b.cwiseQuotient(pr.s), trace);
}

PenalizedFit cd_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& names,
                    const PenaltyConfig& cfg) {
    return cd_fit(Gram::from_data(X, y, names), cfg);
}

double objective(const Gram& g, const PenaltyConfig& cfg, const Eigen::VectorXd& coef) {
    Problem pr = make_problem(g, cfg);
    return std_objective(pr, g.yy / g.n, coef.cwiseProduct(pr.s));
}

double kkt_residual(const Gram& g, const PenaltyConfig& cfg, const Eigen::VectorXd& coef) {
    Problem pr = make_problem(g, cfg);
    return std_kkt(pr, coef.cwiseProduct(pr.s));
}

double lambda_max(const Gram& g, const PenaltyConfig& cfg) {
    PenaltyConfig c = cfg;
    c.lambda = 0.0;
    Problem pr = make_problem(g, c);
    const auto p = pr.G.cols();
    std::vector<Eigen::Index> U;
    for (Eigen::Index j = 0; j < p; ++j) {
        auto ju = static_cast<std::size_t>(j);
        if (!pr.pen[ju] && !pr.inert[ju]) U.push_back(j);
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    if (!U.empty()) {
        const auto k = static_cast<Eigen::Index>(U.size());
        Eigen::MatrixXd M(k, k);
        Eigen::VectorXd r(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index d = 0; d < k; ++d) M(a, d) = pr.G(U[a], U[d]);
            r(a) = pr.c(U[a]);
        }
        Eigen::VectorXd x = M.colPivHouseholderQr().solve(r);
        for (Eigen::Index a = 0; a < k; ++a) b(U[a]) = x(a);
    }
    Eigen::VectorXd grad = pr.c - pr.G * b;
    double m = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
        auto ju = static_cast<std::size_t>(j);
        if (pr.pen[ju] && !pr.inert[ju]) m = std::max(m, std::abs(grad(j)));
    }
    return m / std::max(cfg.alpha, 1e-3);
}

std::vector<double> lambda_grid(double lmax, std::size_t points, double ratio) {
    if (!(lmax > 0.0)) throw std::invalid_argument("lambda_grid: lambda_max must be > 0");
    if (points < 1) throw std::invalid_argument("lambda_grid: need at least one point");
    if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("lambda_grid: ratio must be in (0, 1)");
    std::vector<double> out(points);
    if (points == 1) return {lmax};
    const double step = std::log(ratio) / static_cast<double>(points - 1);
    for (std::size_t k = 0; k < points; ++k) out[k] = lmax * std::exp(step * static_cast<double>(k));
    return out;
}

std::vector<PenalizedFit> lasso_path(const Gram& g, const PenaltyConfig& cfg, const std::vector<double>& lambdas) {
    std::vector<PenalizedFit> out;
    out.reserve(lambdas.size());
    PenaltyConfig c = cfg;
    for (double l : lambdas) {
        c.lambda = l;
        out.push_back(cd_fit(g, c, out.empty() ? nullptr : &out.back().coef));
    }
    return out;
}

}  // namespace mobilab::regularization
