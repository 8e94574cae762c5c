#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mobfair/domain.hpp"
#include "mobfair/rng.hpp"

namespace mobfair {

struct FeatureMatrix {
    std::vector<UserId> user_ids;
    Matrix X;
    // Users whose pre-split history is empty (zero rows).
    std::vector<UserId> empty_history_users;
};

namespace detail {

// Sign entry of the random projection, keyed by POI id rather than column
// index so the mapping is stable under any POI subset or ordering.
inline double projection_entry(std::uint64_t seed, PoiId poi, int dim, double scale) {
    const std::uint64_t h =
        splitmix64(derive_seed(seed, hash_tag("feature_projection"), poi, dim));
    return (h & 1u) ? scale : -scale;
}

}  // namespace detail

// Per-user visit-count histograms over POIs (pre-split visits only),
// L1-normalized, then reduced to d dimensions with a seeded +-1/sqrt(d)
// projection. Users with no pre-split visits get a zero row.
inline FeatureMatrix build_user_features(const std::vector<Trajectory>& trajectories,
                                         Timestamp split_time, int d, std::uint64_t seed) {
    if (d < 2) throw ValidationError("features: d must be >= 2");
    if (trajectories.empty()) throw ValidationError("features: no trajectories");

    FeatureMatrix fm;
    const std::size_t U = trajectories.size();
    fm.user_ids.resize(U);
    fm.X = Matrix(U, static_cast<std::size_t>(d));
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    std::unordered_map<PoiId, double> hist;
    for (std::size_t u = 0; u < U; ++u) {
        const Trajectory& traj = trajectories[u];
        fm.user_ids[u] = traj.user_id;

        hist.clear();
        double total = 0.0;
        for (const Visit& v : traj.visits) {
            if (v.timestamp >= split_time) continue;
            hist[v.poi_id] += 1.0;
            total += 1.0;
        }
        if (total == 0.0) {
            fm.empty_history_users.push_back(traj.user_id);
            continue;
        }
        // Accumulate in sorted POI order so identical visit multisets produce
        // bit-identical rows (summation order is part of the contract).
        std::vector<std::pair<PoiId, double>> sorted_hist(hist.begin(), hist.end());
        std::sort(sorted_hist.begin(), sorted_hist.end());
        auto row = fm.X.row(u);
        for (const auto& [poi, count] : sorted_hist) {
            const double mass = count / total;
            for (int j = 0; j < d; ++j)
                row[j] += mass * detail::projection_entry(seed, poi, j, scale);
        }
    }
    return fm;
}

inline FeatureMatrix build_user_features(const World& world, int d, std::uint64_t seed) {
    return build_user_features(world.trajectories, world.split_time, d, seed);
}

}  // namespace mobfair
