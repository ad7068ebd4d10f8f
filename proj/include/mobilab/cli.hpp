#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mobilab/estimators.hpp"
#include "mobilab/income_process.hpp"
#include "mobilab/regularization.hpp"

namespace mobilab::cli {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

// Empty cell, number, integer count or text.
using Cell = std::variant<std::monostate, double, long long, std::string>;

struct Table {
    std::string name;   // file stem
    std::string title;  // markdown heading
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    std::vector<std::string> notes;
    std::optional<std::string> markdown;  // replaces the default rendering
};

enum class Format { csv, md };

std::string to_csv(const Table& t);       // full precision
std::string to_markdown(const Table& t);  // 3 decimals
std::string cell_text(const Cell& c, bool rounded);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class SourceKind { simulate, families, geiv, csv };

struct PanelSource {
    SourceKind kind = SourceKind::simulate;
    income::SimConfig sim;
    income::GeivSimConfig geiv;
    std::string persons_csv, incomes_csv;
    std::string fathers_persons_csv, fathers_incomes_csv;  // growth on csv input
    panel::CsvOptions csv;
};

struct LassoColumn {
    std::string label;
    double lambda = 0.01;
    double alpha = 1.0;
    bool lambda_relative = true;
    bool unpenalize_parental = false;
    bool postselection = false;
    bool cross_validate = false;
};

struct RunConfig {
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::vector<Format> formats = {Format::csv};
    std::size_t repetitions = 1;
    PanelSource panel;

    // estimate / grid
    std::vector<AgeWindow> windows = {{25, 27}};
    std::vector<estimators::EstimatorSpec> estimators;

    // geiv
    std::vector<int> geiv_ages;

    // creedy
    std::vector<int> creedy_ages = {30, 35, 40, 45, 50};
    estimators::CreedyMode creedy_mode = estimators::CreedyMode::parametric;
    AgeWindow creedy_target{25, 58};

    // trends
    estimators::TrendsSpec trends;
    std::vector<bool> trends_fe = {true, false};
    AgeWindow trends_direct_window{25, 30};

    // lasso
    AgeWindow lasso_window{25, 27};
    std::vector<LassoColumn> lasso;
    int lasso_k_folds = 5;
    std::size_t lasso_cv_points = 20;
    std::vector<double> lasso_cv_alphas = {0.5, 0.75, 1.0};

    // growth
    income::GrowthOptions growth;
    income::GrowthOnGrowthOptions growth_on_growth;
};

// Parses a TOML file; unknown keys are errors.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& toml_text, const std::string& origin = "<string>");

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct CellError {
    std::string cell;
    std::string message;
};

struct CommandResult {
    std::vector<Table> tables;
    std::vector<CellError> errors;
    std::vector<std::string> files;  // written outputs, in order
};

const std::vector<std::string>& command_names();
// True when the command draws random numbers under this configuration.
bool is_stochastic(const std::string& command, const RunConfig& cfg);

// Runs a subcommand and writes its tables plus errors.csv into cfg.out.
CommandResult run_command(const std::string& command, const RunConfig& cfg);

// Exit code: 0 when no cell errors, 1 otherwise.
int exit_code(const CommandResult& r);

}  // namespace mobilab::cli
