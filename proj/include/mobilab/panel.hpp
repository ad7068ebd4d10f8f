#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mobilab {

struct AgeWindow {
    int lo = 25;
    int hi = 58;

    bool contains(int age) const { return age >= lo && age <= hi; }
    int length() const { return hi - lo + 1; }
    void validate() const {
        if (lo > hi) throw std::invalid_argument("age window lo > hi");
    }
    bool operator==(const AgeWindow&) const = default;
};

std::string to_string(const AgeWindow& w);

}  // namespace mobilab

namespace mobilab::panel {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

enum class GroupTag { none, young, old };

// Optional person-level covariates used by the candidate builder.
enum class Extra { family_size, birth_order, immigrant, skill_cog, skill_noncog };
inline constexpr std::size_t kExtraCount = 5;
inline constexpr std::array<std::string_view, kExtraCount> kExtraNames = {
    "family_size", "birth_order", "immigrant", "skill_cog", "skill_noncog"};

struct PersonRecord {
    std::string person_id;
    std::string family_id;
    int cohort = 0;
    int sex = 0;
    int educ_group = 0;
    int parent_educ_group = 0;
    double parent_log_income = kMissing;
    std::optional<double> true_log_lifetime;
    GroupTag group_tag = GroupTag::none;
    std::array<double, kExtraCount> extras = {kMissing, kMissing, kMissing, kMissing, kMissing};

    double extra(Extra e) const { return extras[static_cast<std::size_t>(e)]; }
};

struct IncomeObs {
    std::size_t person = 0;  // index into Panel::persons()
    int year = 0;
    int age = 0;
    double income_level = 0.0;
};

struct PanelMetadata {
    int age_min = 25;
    int age_max = 58;
    int n_educ_groups = 4;
    int n_parent_educ_groups = 4;
    std::vector<std::string> provenance;
};

// Immutable panel. Observations are sorted by (person, age) and indexed
// per person.
class Panel {
public:
    Panel() = default;

    // Validates invariants; throws std::invalid_argument naming the problem.
    static Panel create(std::vector<PersonRecord> persons, std::vector<IncomeObs> obs, PanelMetadata meta);

    const std::vector<PersonRecord>& persons() const { return persons_; }
    const std::vector<IncomeObs>& observations() const { return obs_; }
    std::span<const IncomeObs> observations_of(std::size_t person) const;
    std::size_t first_obs(std::size_t person) const { return offsets_[person]; }
    std::size_t n_persons() const { return persons_.size(); }
    std::size_t n_obs() const { return obs_.size(); }
    std::optional<std::size_t> find(std::string_view person_id) const;
    const PanelMetadata& metadata() const { return meta_; }

    // Copy with one more provenance entry.
    Panel with_provenance(std::string step) const;

private:
    std::vector<PersonRecord> persons_;
    std::vector<IncomeObs> obs_;
    std::vector<std::size_t> offsets_;
    std::unordered_map<std::string, std::size_t> index_;
    PanelMetadata meta_;
};

// Natural log of an observed level; levels must be strictly positive.
double log_income(const IncomeObs& o);

// Log of summed levels over the whole person profile.
double true_lifetime(std::span<const IncomeObs> obs);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RowError {
    std::string file;
    std::size_t line = 0;
    std::string message;
};

struct CsvOptions {
    bool strict = true;
    std::optional<int> age_min;
    std::optional<int> age_max;
    int n_educ_groups = 0;         // 0: infer from data
    int n_parent_educ_groups = 0;  // 0: infer from data
};

struct LoadResult {
    Panel panel;
    std::vector<RowError> errors;
};

LoadResult load_csv(const std::string& persons_path, const std::string& incomes_path, const CsvOptions& opt = {});
void write_csv(const Panel& p, const std::string& persons_path, const std::string& incomes_path);

// ---------------------------------------------------------------------------
// Transforms. All are pure and append to the provenance chain.
// ---------------------------------------------------------------------------

struct BottomCodeResult {
    Panel panel;
    std::size_t n_changed = 0;
};
BottomCodeResult bottom_code(const Panel& p, double floor);

struct WindowResult {
    Panel panel;
    std::size_t n_dropped_persons = 0;
};
WindowResult restrict_window(const Panel& p, AgeWindow window);

enum class SplitMode { random_assign, duplicate };

struct SplitResult {
    Panel panel;
    std::size_t n_dropped = 0;
};
SplitResult split_young_old(const Panel& p, int threshold_age, SplitMode mode, std::uint64_t seed);

Panel remove_year_effects(const Panel& p);

// Keeps only the listed persons (in the given order, repeats allowed).
// Repeated persons get suffixed ids so the result stays valid.
Panel select_persons(const Panel& p, const std::vector<std::size_t>& persons, std::string_view step);

// Replaces parent_log_income using a map keyed by family_id.
Panel with_parent_income(const Panel& p, const std::map<std::string, double>& by_family);

struct ParentIncomeOptions {
    int n_obs_max = 5;
    AgeWindow age_range{40, 55};
    int target_age = 50;
    std::uint64_t seed = 0;
};

struct ParentIncomeResult {
    std::map<std::string, double> predicted;  // person_id -> log income at target age
    std::vector<std::string> fallback;        // persons given their mean log income
    std::map<std::string, int> n_selected;
    bool reduced_spec = false;                // cell polynomial was not estimable
};
ParentIncomeResult build_parent_income(const Panel& fathers, const ParentIncomeOptions& opt);

}  // namespace mobilab::panel
