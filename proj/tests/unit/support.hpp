#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mobilab/panel.hpp"

namespace testing {

using mobilab::panel::IncomeObs;
using mobilab::panel::Panel;
using mobilab::panel::PersonRecord;

inline std::string pid(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "P%05zu", i);
    return buf;
}

// Builds a panel where person i is observed at every age in [lo, hi] with
// income exp(logy(i, age)). `person` may adjust each record.
inline Panel build(std::size_t n, int lo, int hi, const std::function<double(std::size_t, int)>& logy,
                   const std::function<void(std::size_t, PersonRecord&)>& person = {}, int age_min = 25,
                   int age_max = 58) {
    std::vector<PersonRecord> ps;
    std::vector<IncomeObs> obs;
    for (std::size_t i = 0; i < n; ++i) {
        PersonRecord r;
        r.person_id = pid(i);
        r.family_id = "F" + r.person_id;
        r.cohort = 1950;
        r.parent_log_income = 15.5;
        if (person) person(i, r);
        ps.push_back(r);
        for (int a = lo; a <= hi; ++a) obs.push_back({i, r.cohort + a, a, std::exp(logy(i, a))});
    }
    mobilab::panel::PanelMetadata m;
    m.age_min = age_min;
    m.age_max = age_max;
    return Panel::create(std::move(ps), std::move(obs), m);
}

}  // namespace testing
