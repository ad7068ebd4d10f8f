#include "mobilab/panel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mobilab {

std::string to_string(const AgeWindow& w) {
    return std::to_string(w.lo) + "-" + std::to_string(w.hi);
}

}  // namespace mobilab

namespace mobilab::panel {

Panel Panel::create(std::vector<PersonRecord> persons, std::vector<IncomeObs> obs, PanelMetadata meta) {
    if (meta.age_min > meta.age_max) throw std::invalid_argument("panel age_min > age_max");
    Panel p;
    p.index_.reserve(persons.size());
    for (std::size_t i = 0; i < persons.size(); ++i) {
        const auto& r = persons[i];
        if (!p.index_.emplace(r.person_id, i).second) {
            throw std::invalid_argument("duplicate person_id '" + r.person_id + "'");
        }
        if (r.educ_group < 0 || r.educ_group >= meta.n_educ_groups) {
            throw std::invalid_argument("person '" + r.person_id + "': educ_group " + std::to_string(r.educ_group) +
                                        " outside [0, " + std::to_string(meta.n_educ_groups) + ")");
        }
        if (r.parent_educ_group < 0 || r.parent_educ_group >= meta.n_parent_educ_groups) {
            throw std::invalid_argument("person '" + r.person_id + "': parent_educ_group out of range");
        }
    }
    for (const auto& o : obs) {
        if (o.person >= persons.size()) throw std::invalid_argument("observation references unknown person");
        if (o.age < meta.age_min || o.age > meta.age_max) {
            throw std::invalid_argument("person '" + persons[o.person].person_id + "': age " + std::to_string(o.age) +
                                        " outside panel bounds");
        }
        if (!(o.income_level >= 0.0) || !std::isfinite(o.income_level)) {
            throw std::invalid_argument("person '" + persons[o.person].person_id + "': income_level must be finite and >= 0");
        }
    }
    std::stable_sort(obs.begin(), obs.end(), [](const IncomeObs& a, const IncomeObs& b) {
        return a.person != b.person ? a.person < b.person : a.age < b.age;
    });
    for (std::size_t k = 1; k < obs.size(); ++k) {
        if (obs[k].person == obs[k - 1].person && obs[k].age == obs[k - 1].age) {
            throw std::invalid_argument("duplicate (person_id, age) = (" + persons[obs[k].person].person_id + ", " +
                                        std::to_string(obs[k].age) + ")");
        }
    }
    p.offsets_.assign(persons.size() + 1, 0);
    for (const auto& o : obs) ++p.offsets_[o.person + 1];
    std::partial_sum(p.offsets_.begin(), p.offsets_.end(), p.offsets_.begin());
    p.persons_ = std::move(persons);
    p.obs_ = std::move(obs);
    p.meta_ = std::move(meta);
    return p;
}

std::span<const IncomeObs> Panel::observations_of(std::size_t person) const {
    return std::span<const IncomeObs>(obs_.data() + offsets_[person], offsets_[person + 1] - offsets_[person]);
}

std::optional<std::size_t> Panel::find(std::string_view person_id) const {
    auto it = index_.find(std::string(person_id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Panel Panel::with_provenance(std::string step) const {
    Panel q = *this;
    q.meta_.provenance.push_back(std::move(step));
    return q;
}

double log_income(const IncomeObs& o) {
    if (!(o.income_level > 0.0)) {
        throw std::domain_error("nonpositive income level at age " + std::to_string(o.age) +
                                "; apply bottom_code before taking logs");
    }
    return std::log(o.income_level);
}

double true_lifetime(std::span<const IncomeObs> obs) {
    if (obs.empty()) throw std::invalid_argument("true_lifetime: empty observation sequence");
    double s = 0.0;
    for (const auto& o : obs) {
        if (!(o.income_level > 0.0)) throw std::invalid_argument("true_lifetime: nonpositive income level");
        s += o.income_level;
    }
    return std::log(s);
}

}  // namespace mobilab::panel
