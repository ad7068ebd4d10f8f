#include <cstdio>
#include <cmath>
#include <map>
#include <random>

#include "mobilab/panel.hpp"
#include "mobilab/random.hpp"

namespace mobilab::panel {

namespace {

PanelMetadata next_meta(const Panel& p, std::string step) {
    PanelMetadata m = p.metadata();
    m.provenance.push_back(std::move(step));
    return m;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

BottomCodeResult bottom_code(const Panel& p, double floor) {
    if (!(floor > 0.0)) throw std::invalid_argument("bottom_code: floor must be > 0");
    std::vector<IncomeObs> obs = p.observations();
    std::size_t n = 0;
    for (auto& o : obs) {
        if (o.income_level < floor) {
            o.income_level = floor;
            ++n;
        }
    }
    return {Panel::create(p.persons(), std::move(obs), next_meta(p, "bottom_code(" + fmt(floor) + ")")), n};
}

WindowResult restrict_window(const Panel& p, AgeWindow window) {
    window.validate();
    const auto& meta = p.metadata();
    if (window.lo < meta.age_min || window.hi > meta.age_max) {
        throw std::invalid_argument("restrict_window: window " + to_string(window) + " outside panel bounds");
    }
    std::vector<PersonRecord> persons;
    std::vector<IncomeObs> obs;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < p.n_persons(); ++i) {
        std::size_t before = obs.size();
        for (const auto& o : p.observations_of(i)) {
            if (window.contains(o.age)) {
                obs.push_back(o);
                obs.back().person = persons.size();
            }
        }
        if (obs.size() == before) {
            ++dropped;
            continue;
        }
        persons.push_back(p.persons()[i]);
    }
    if (obs.empty()) throw std::invalid_argument("restrict_window: no observations in window " + to_string(window));
    auto meta2 = next_meta(p, "restrict_window(" + to_string(window) + ")");
    return {Panel::create(std::move(persons), std::move(obs), std::move(meta2)), dropped};
}

SplitResult split_young_old(const Panel& p, int threshold_age, SplitMode mode, std::uint64_t seed) {
    const auto& meta = p.metadata();
    if (threshold_age <= meta.age_min || threshold_age >= meta.age_max) {
        throw std::invalid_argument("split_young_old: threshold must lie strictly inside panel bounds");
    }
    std::vector<PersonRecord> persons;
    std::vector<IncomeObs> obs;
    std::size_t dropped = 0;
    auto emit = [&](std::size_t i, GroupTag tag, std::string id) {
        std::size_t before = obs.size();
        for (const auto& o : p.observations_of(i)) {
            bool keep = tag == GroupTag::young ? o.age <= threshold_age : o.age > threshold_age;
            if (keep) {
                obs.push_back(o);
                obs.back().person = persons.size();
            }
        }
        if (obs.size() == before) {
            ++dropped;
            return;
        }
        PersonRecord r = p.persons()[i];
        r.person_id = std::move(id);
        r.group_tag = tag;
        persons.push_back(std::move(r));
    };
    for (std::size_t i = 0; i < p.n_persons(); ++i) {
        const auto& r = p.persons()[i];
        if (mode == SplitMode::duplicate) {
            emit(i, GroupTag::young, r.person_id + "#young");
            emit(i, GroupTag::old, r.person_id + "#old");
        } else {
            // keyed on the id so the assignment does not depend on row order
            Rng rng = make_rng(seed, streams::splitting, fnv1a(r.person_id));
            std::bernoulli_distribution coin(0.5);
            emit(i, coin(rng) ? GroupTag::young : GroupTag::old, r.person_id);
        }
    }
    std::string step = std::string("split_young_old(") + std::to_string(threshold_age) + ", " +
                       (mode == SplitMode::duplicate ? "duplicate" : "random_assign") + ")";
    return {Panel::create(std::move(persons), std::move(obs), next_meta(p, step)), dropped};
}

Panel remove_year_effects(const Panel& p) {
    std::map<int, std::pair<double, std::size_t>> by_year;
    double grand = 0.0;
    for (const auto& o : p.observations()) {
        double l = log_income(o);
        auto& acc = by_year[o.year];
        acc.first += l;
        acc.second += 1;
        grand += l;
    }
    if (p.n_obs() == 0) return p.with_provenance("remove_year_effects");
    grand /= static_cast<double>(p.n_obs());
    std::vector<IncomeObs> obs = p.observations();
    for (auto& o : obs) {
        const auto& acc = by_year[o.year];
        double mean = acc.first / static_cast<double>(acc.second);
        o.income_level = std::exp(std::log(o.income_level) - mean + grand);
    }
    return Panel::create(p.persons(), std::move(obs), next_meta(p, "remove_year_effects"));
}

Panel select_persons(const Panel& p, const std::vector<std::size_t>& chosen, std::string_view step) {
    std::vector<PersonRecord> persons;
    std::vector<IncomeObs> obs;
    std::vector<int> times(p.n_persons(), 0);
    persons.reserve(chosen.size());
    for (std::size_t i : chosen) {
        if (i >= p.n_persons()) throw std::out_of_range("select_persons: person index out of range");
        PersonRecord r = p.persons()[i];
        int k = times[i]++;
        if (k > 0) r.person_id += "#" + std::to_string(k);
        for (const auto& o : p.observations_of(i)) {
            obs.push_back(o);
            obs.back().person = persons.size();
        }
        persons.push_back(std::move(r));
    }
    return Panel::create(std::move(persons), std::move(obs), next_meta(p, std::string(step)));
}

Panel with_parent_income(const Panel& p, const std::map<std::string, double>& by_family) {
    std::vector<PersonRecord> persons = p.persons();
    for (auto& r : persons) {
        auto it = by_family.find(r.family_id);
        r.parent_log_income = it == by_family.end() ? kMissing : it->second;
    }
    return Panel::create(std::move(persons), p.observations(), next_meta(p, "with_parent_income"));
}

}  // namespace mobilab::panel
