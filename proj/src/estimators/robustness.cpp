#include <algorithm>
#include <cmath>
#include <numeric>

#include "mobilab/estimators.hpp"
#include "mobilab/random.hpp"

namespace mobilab::estimators {

Panel thin_observations(const Panel& p, int max_obs, AgeWindow window, std::uint64_t seed) {
    if (max_obs < 2) throw std::invalid_argument("thin_observations: max_obs must be >= 2");
    window.validate();
    std::vector<panel::IncomeObs> obs;
    obs.reserve(p.n_obs());
    for (std::size_t i = 0; i < p.n_persons(); ++i) {
        std::vector<panel::IncomeObs> inside;
        for (const auto& o : p.observations_of(i)) {
            if (window.contains(o.age)) inside.push_back(o);
            else obs.push_back(o);
        }
        Rng rng = make_rng(seed, streams::thinning, fnv1a(p.persons()[i].person_id));
        std::sample(inside.begin(), inside.end(), std::back_inserter(obs), static_cast<std::size_t>(max_obs), rng);
    }
    auto meta = p.metadata();
    meta.provenance.push_back("thin_observations(" + std::to_string(max_obs) + ", " + to_string(window) + ")");
    return Panel::create(p.persons(), std::move(obs), std::move(meta));
}

Panel subsample(const Panel& p, int k, std::uint64_t seed, std::uint64_t draw) {
    if (k < 1) throw std::invalid_argument("subsample: k must be >= 1");
    std::size_t m = static_cast<std::size_t>(std::llround(static_cast<double>(p.n_persons()) / k));
    if (m == 0) throw std::invalid_argument("subsample: fraction leaves no persons");
    std::vector<std::size_t> all(p.n_persons()), pick;
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng rng = make_rng(seed, streams::subsample, draw);
    std::sample(all.begin(), all.end(), std::back_inserter(pick), m, rng);
    return panel::select_persons(p, pick, "subsample(1/" + std::to_string(k) + ", draw " + std::to_string(draw) + ")");
}

Summary summarize(const std::vector<double>& v) {
    Summary s;
    s.n = v.size();
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

}  // namespace mobilab::estimators
