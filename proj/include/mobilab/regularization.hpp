#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mobilab/estimators.hpp"
#include "mobilab/panel.hpp"
#include "mobilab/regression.hpp"

namespace mobilab::regularization {

using panel::Panel;

struct PenaltyConfig {
    double lambda = 0.0;
    double alpha = 1.0;  // 1 = lasso, 0 = ridge
    std::vector<std::string> unpenalized;
    bool standardize = true;
    int max_iter = 100000;  // full sweeps
    double tol = 1e-10;

    void validate() const;
};

// Sufficient statistics of a least-squares problem: sums, not means.
struct Gram {
    Eigen::MatrixXd xx;  // X'X
    Eigen::VectorXd xy;  // X'y
    double yy = 0.0;     // y'y
    double n = 0.0;
    std::vector<std::string> names;

    static Gram from_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::string> names);
    void add(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);
    Gram operator-(const Gram& o) const;
    Gram operator+(const Gram& o) const;
};

struct PenalizedFit {
    Eigen::VectorXd coef;  // original scale
    std::vector<std::string> names;
    std::vector<std::size_t> selected;  // nonzero penalized columns
    std::vector<bool> penalized;
    std::vector<bool> inert;  // zero-variance columns, held at 0
    double lambda = 0.0;
    double alpha = 1.0;
    std::size_t n_selected = 0;
    double objective = 0.0;
    int iterations = 0;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd last, std::vector<double> trace)
        : std::runtime_error(what), last_iterate(std::move(last)), objective_trace(std::move(trace)) {}
    Eigen::VectorXd last_iterate;
    std::vector<double> objective_trace;
};

// Coordinate descent on ½‖y − Xb‖²/n + λ[α‖b_pen‖₁ + (1−α)/2‖b_pen‖²],
// with the penalty applied on the standardized scale when requested.
// `warm` is an optional starting point on the original scale.
PenalizedFit cd_fit(const Gram& g, const PenaltyConfig& cfg, const Eigen::VectorXd* warm = nullptr);
PenalizedFit cd_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& names,
                    const PenaltyConfig& cfg);

// Objective of `coef` (original scale) under cfg.
double objective(const Gram& g, const PenaltyConfig& cfg, const Eigen::VectorXd& coef);

// Largest KKT violation at `coef`, on the scale the penalty is applied.
double kkt_residual(const Gram& g, const PenaltyConfig& cfg, const Eigen::VectorXd& coef);

// Smallest λ at which every penalized coefficient is zero.
double lambda_max(const Gram& g, const PenaltyConfig& cfg);

// Log-spaced grid from lambda_max down to ratio · lambda_max.
std::vector<double> lambda_grid(double lmax, std::size_t points = 50, double ratio = 1e-4);

// Warm-started path in the order given (should be decreasing).
std::vector<PenalizedFit> lasso_path(const Gram& g, const PenaltyConfig& cfg, const std::vector<double>& lambdas);

struct CvResult {
    double lambda = 0.0;
    double alpha = 1.0;
    std::vector<double> lambdas;
    std::vector<double> alphas;
    std::vector<std::vector<double>> mse;  // [alpha][lambda], mean out-of-fold squared error
    std::vector<int> fold_of_group;        // fold per group id
};

// Person-level folds: every row of a group lands in the same fold.
std::vector<int> assign_folds(std::size_t n_groups, int k, std::uint64_t seed);

CvResult cv_select(const std::vector<Gram>& folds, const PenaltyConfig& base, const std::vector<double>& lambdas,
                   const std::vector<double>& alphas);
CvResult cv_select(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::size_t>& groups,
                   std::size_t n_groups, const std::vector<std::string>& names, const PenaltyConfig& base,
                   std::vector<double> lambdas, const std::vector<double>& alphas, int k_folds, std::uint64_t seed);

// OLS on the selected plus unpenalized columns; FE absorbed when groups are given.
regression::FitResult postselection_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        const std::vector<std::string>& names, const std::vector<std::size_t>& keep,
                                        const std::vector<std::size_t>* groups = nullptr, std::size_t n_groups = 0);
std::vector<std::size_t> kept_columns(const PenalizedFit& f);

// ---------------------------------------------------------------------------
// Candidate set and the ML lifecycle estimator
// ---------------------------------------------------------------------------

struct CandidateVar {
    regression::Variable var;
    bool categorical = true;
    std::vector<int> levels;  // declared dummy levels (reference excluded)
};

// Education and parental education (15 levels), parental log income,
// immigrant flag, family size and birth order (1-12), two stanine skill
// scores (1-9) and ten birth cohorts starting at cohort_min. Each enters as
// main effect and interacted with age and age squared, plus age and age squared.
std::vector<CandidateVar> default_catalog(int cohort_min);
regression::DesignSpec candidate_design(const std::vector<CandidateVar>& catalog);

struct MlConfig {
    PenaltyConfig penalty;
    bool lambda_relative = true;  // penalty.lambda is a fraction of lambda_max
    bool unpenalize_parental = false;  // parent income × age and × age² exempt
    bool postselection = false;
    bool cross_validate = false;
    std::vector<double> cv_alphas = {0.5, 0.75, 1.0};
    std::size_t cv_points = 20;
    int k_folds = 5;
    std::size_t block_persons = 2000;
    std::vector<CandidateVar> catalog;  // empty: default_catalog(panel cohort min)
    estimators::EstimatorSpec prediction;  // split, smearing and prediction ages
};

struct MlEstimate {
    estimators::IgeEstimate estimate;
    std::size_t n_candidates = 0;
    std::size_t n_selected = 0;
    double lambda = 0.0;
    double lambda_max = 0.0;
    double alpha = 1.0;
    std::optional<CvResult> cv;
};

MlEstimate ml_lifecycle_estimate(const Panel& p, AgeWindow window, const MlConfig& cfg);

}  // namespace mobilab::regularization
