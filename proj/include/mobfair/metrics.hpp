#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mobfair/domain.hpp"

namespace mobfair {

// One evaluated user: home region, 1-week lookahead hit at the metric k.
struct UserHit {
    UserId user_id;
    RegionId region_id;
    int hit;   // 0 or 1
};

struct RegionAccuracy {
    RegionId region_id;
    double a_r;
    std::size_t n_r;
};

struct GroupAccuracyReport {
    std::vector<double> z;        // per group; meaningful only where defined
    std::vector<bool> defined;    // false when the group had no mass
    std::vector<double> C;        // expected correct count
    std::vector<double> N;        // expected population
    double tdpv = 0.0;            // over defined groups
    bool tdpv_defined = false;    // at least two defined groups
    int step = -1;
};

// POIs the user actually visits inside [split_time, split_time + eval_window).
inline std::unordered_set<PoiId> eval_window_pois(const Trajectory& traj, Timestamp split_time,
                                                  Timestamp eval_window) {
    std::unordered_set<PoiId> out;
    for (const Visit& v : traj.visits)
        if (v.timestamp >= split_time && v.timestamp < split_time + eval_window)
            out.insert(v.poi_id);
    return out;
}

inline int acc_at_k(const std::vector<PoiId>& predicted, const std::unordered_set<PoiId>& actual,
                    int k) {
    if (static_cast<int>(predicted.size()) > k)
        throw ValidationError("metrics: more predictions than k");
    for (PoiId p : predicted)
        if (actual.count(p)) return 1;
    return 0;
}

// Per-user hits for every world user with a non-empty eval window. `predict`
// is called as predict(user_id, k) -> ranked POI ids. Users without eval
// activity are skipped, not scored 0.
template <typename PredictFn>
std::vector<UserHit> compute_hits(const World& world, PredictFn&& predict, int k) {
    if (k < 1) throw ValidationError("metrics: k must be >= 1");
    std::vector<UserHit> hits;
    hits.reserve(world.trajectories.size());
    for (const Trajectory& traj : world.trajectories) {
        const auto actual = eval_window_pois(traj, world.split_time, world.eval_window);
        if (actual.empty()) continue;
        const std::vector<PoiId> predicted = predict(traj.user_id, k);
        hits.push_back({traj.user_id, traj.home_region_id, acc_at_k(predicted, actual, k)});
    }
    return hits;
}

inline double overall_accuracy(const std::vector<UserHit>& hits) {
    if (hits.empty()) return 0.0;
    double s = 0.0;
    for (const UserHit& h : hits) s += h.hit;
    return s / static_cast<double>(hits.size());
}

// Mean hit per home region; regions without evaluable users are omitted.
// Output ordered by region id.
inline std::vector<RegionAccuracy> region_accuracies(const std::vector<UserHit>& hits) {
    std::unordered_map<RegionId, std::pair<double, std::size_t>> acc;
    for (const UserHit& h : hits) {
        auto& slot = acc[h.region_id];
        slot.first += h.hit;
        slot.second += 1;
    }
    std::vector<RegionAccuracy> out;
    out.reserve(acc.size());
    for (const auto& [region, slot] : acc)
        out.push_back({region, slot.first / static_cast<double>(slot.second), slot.second});
    std::sort(out.begin(), out.end(),
              [](const RegionAccuracy& a, const RegionAccuracy& b) {
                  return a.region_id < b.region_id;
              });
    return out;
}

inline double tdpv(const std::vector<double>& z) {
    if (z.size() < 2) throw ValidationError("metrics: tdpv needs at least 2 groups");
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
        for (std::size_t j = i + 1; j < z.size(); ++j) s += std::abs(z[i] - z[j]);
    return s;
}

namespace detail {

inline void finish_report(GroupAccuracyReport& rep) {
    std::vector<double> defined_z;
    for (std::size_t g = 0; g < rep.z.size(); ++g)
        if (rep.defined[g]) defined_z.push_back(rep.z[g]);
    if (defined_z.size() >= 2) {
        rep.tdpv = tdpv(defined_z);
        rep.tdpv_defined = true;
    }
}

}  // namespace detail

// Census-prior group accuracy: region accuracies reweighted by each region's
// group proportions. C_g = sum_r a_r * n_r * p_{g,r}; N_g = sum_r n_r * p_{g,r};
// z_g = C_g / N_g.
inline GroupAccuracyReport group_accuracy(const std::vector<RegionAccuracy>& region_acc,
                                          const std::vector<Region>& regions) {
    if (regions.empty()) throw ValidationError("metrics: no regions");
    const std::size_t G = regions.front().group_proportions.size();
    std::unordered_map<RegionId, const Region*> by_id;
    for (const Region& r : regions) by_id.emplace(r.id, &r);

    GroupAccuracyReport rep;
    rep.z.assign(G, 0.0);
    rep.defined.assign(G, false);
    rep.C.assign(G, 0.0);
    rep.N.assign(G, 0.0);

    for (const RegionAccuracy& ra : region_acc) {
        const auto it = by_id.find(ra.region_id);
        if (it == by_id.end())
            throw ValidationError("metrics: accuracy for unknown region " +
                                  std::to_string(ra.region_id));
        const Region& region = *it->second;
        for (std::size_t g = 0; g < G; ++g) {
            const double mass = static_cast<double>(ra.n_r) * region.group_proportions[g];
            rep.C[g] += ra.a_r * mass;
            rep.N[g] += mass;
        }
    }
    for (std::size_t g = 0; g < G; ++g) {
        if (rep.N[g] > 0.0) {
            rep.z[g] = rep.C[g] / rep.N[g];
            rep.defined[g] = true;
        }
    }
    detail::finish_report(rep);
    return rep;
}

// Group accuracy from explicit per-user labels (the in-loop variant, where
// proxy labels exist). hits and labels are aligned; label -1 excludes a user.
inline GroupAccuracyReport group_accuracy_direct(const std::vector<int>& hits,
                                                 const std::vector<int>& labels,
                                                 std::size_t n_groups) {
    if (hits.size() != labels.size())
        throw ValidationError("metrics: hits/labels size mismatch");
    GroupAccuracyReport rep;
    rep.z.assign(n_groups, 0.0);
    rep.defined.assign(n_groups, false);
    rep.C.assign(n_groups, 0.0);
    rep.N.assign(n_groups, 0.0);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (labels[i] < 0) continue;
        const auto g = static_cast<std::size_t>(labels[i]);
        if (g >= n_groups) throw ValidationError("metrics: label out of range");
        rep.C[g] += hits[i];
        rep.N[g] += 1.0;
    }
    for (std::size_t g = 0; g < n_groups; ++g) {
        if (rep.N[g] > 0.0) {
            rep.z[g] = rep.C[g] / rep.N[g];
            rep.defined[g] = true;
        }
    }
    detail::finish_report(rep);
    return rep;
}

// Population variance of the group accuracies times the region's population
// weight. Fewer than two defined groups scores 0.
inline double region_disparity_score(const std::vector<double>& z, double population_weight) {
    if (z.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(z.size());
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    var /= static_cast<double>(z.size());
    return var * population_weight;
}

}  // namespace mobfair
