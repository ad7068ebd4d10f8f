#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mobilab/parallel.hpp"
#include "mobilab/random.hpp"
#include "mobilab/regularization.hpp"

namespace mobilab::regularization {

std::vector<int> assign_folds(std::size_t n_groups, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("assign_folds: need at least 2 folds");
    if (n_groups < static_cast<std::size_t>(k)) throw std::invalid_argument("assign_folds: fewer groups than folds");
    std::vector<std::size_t> order(n_groups);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(seed, streams::folds);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold(n_groups);
    for (std::size_t r = 0; r < n_groups; ++r) fold[order[r]] = static_cast<int>(r % static_cast<std::size_t>(k));
    return fold;
}

CvResult cv_select(const std::vector<Gram>& folds, const PenaltyConfig& base, const std::vector<double>& lambdas,
                   const std::vector<double>& alphas) {
    if (folds.size() < 2) throw std::invalid_argument("cv_select: need at least 2 folds");
    if (lambdas.empty() || alphas.empty()) throw std::invalid_argument("cv_select: empty lambda or alpha grid");
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (!(folds[f].n > 0.0)) throw std::invalid_argument("cv_select: fold " + std::to_string(f) + " is empty");
    Gram total = folds[0];
    for (std::size_t f = 1; f < folds.size(); ++f) total = total + folds[f];

    const std::size_t A = alphas.size(), L = lambdas.size(), F = folds.size();
    // sse[f][a][l]
    std::vector<std::vector<std::vector<double>>> sse(F, std::vector<std::vector<double>>(A, std::vector<double>(L)));
    parallel_for(F, [&](std::size_t f) {
        Gram train = total - folds[f];
        const Gram& test = folds[f];
        for (std::size_t a = 0; a < A; ++a) {
            PenaltyConfig c = base;
            c.alpha = alphas[a];
            auto path = lasso_path(train, c, lambdas);
            for (std::size_t l = 0; l < L; ++l) {
                const auto& b = path[l].coef;
                sse[f][a][l] = test.yy - 2.0 * b.dot(test.xy) + b.dot(test.xx * b);
            }
        }
    });

    CvResult r;
    r.lambdas = lambdas;
    r.alphas = alphas;
    r.mse.assign(A, std::vector<double>(L, 0.0));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < A; ++a) {
        for (std::size_t l = 0; l < L; ++l) {
            double s = 0.0;
            for (std::size_t f = 0; f < F; ++f) s += sse[f][a][l];
            r.mse[a][l] = s / total.n;
            if (r.mse[a][l] < best) {
                best = r.mse[a][l];
                r.lambda = lambdas[l];
                r.alpha = alphas[a];
            }
        }
    }
    return r;
}

CvResult cv_select(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::size_t>& groups,
                   std::size_t n_groups, const std::vector<std::string>& names, const PenaltyConfig& base,
                   std::vector<double> lambdas, const std::vector<double>& alphas, int k_folds, std::uint64_t seed) {
    if (groups.size() != static_cast<std::size_t>(X.rows())) throw std::invalid_argument("cv_select: groups do not match rows");
    auto fold = assign_folds(n_groups, k_folds, seed);
    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(k_folds));
    for (std::size_t r = 0; r < groups.size(); ++r) rows[static_cast<std::size_t>(fold.at(groups[r]))].push_back(static_cast<Eigen::Index>(r));
    std::vector<Gram> grams;
    for (const auto& rs : rows) grams.push_back(Gram::from_data(X(rs, Eigen::all), y(rs), names));
    if (lambdas.empty()) {
        Gram total = Gram::from_data(X, y, names);
        PenaltyConfig c = base;
        c.alpha = *std::min_element(alphas.begin(), alphas.end());
        lambdas = lambda_grid(lambda_max(total, c), 20);
    }
    CvResult r = cv_select(grams, base, lambdas, alphas);
    r.fold_of_group = std::move(fold);
    return r;
}

regression::FitResult postselection_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        const std::vector<std::string>& names, const std::vector<std::size_t>& keep,
                                        const std::vector<std::size_t>* groups, std::size_t n_groups) {
    std::vector<Eigen::Index> cols;
    std::vector<std::string> kn;
    for (auto k : keep) {
        if (k >= names.size()) throw std::invalid_argument("postselection_ols: column index out of range");
        cols.push_back(static_cast<Eigen::Index>(k));
        kn.push_back(names[k]);
    }
    Eigen::MatrixXd Xk = X(Eigen::all, cols);
    return regression::fit(Xk, y, groups, n_groups, std::move(kn), true);
}

std::vector<std::size_t> kept_columns(const PenalizedFit& f) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < f.names.size(); ++j) {
        bool inert = j < f.inert.size() && f.inert[j];
        if (inert) continue;
        if (!f.penalized[j] || f.coef(static_cast<Eigen::Index>(j)) != 0.0) out.push_back(j);
    }
    return out;
}

}  // namespace mobilab::regularization
