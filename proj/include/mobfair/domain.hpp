#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace mobfair {

// Thrown for invalid inputs: bad config values, malformed files, dangling
// references. The CLI maps it to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using UserId = std::int64_t;
using PoiId = std::int64_t;
using RegionId = std::int64_t;
using Timestamp = std::int64_t;  // seconds since epoch

constexpr Timestamp kSecondsPerDay = 86400;

struct GroupId {
    int index = 0;
    std::string name;
};

struct Poi {
    PoiId id = 0;
    RegionId region_id = 0;
    int category = 0;  // synth bookkeeping tag, unused by algorithms
};

struct Visit {
    UserId user_id = 0;
    PoiId poi_id = 0;
    Timestamp timestamp = 0;
};

// Time-ordered visit history of one user. Never empty; visits sorted
// non-decreasing by timestamp.
struct Trajectory {
    UserId user_id = 0;
    RegionId home_region_id = 0;
    std::vector<Visit> visits;
};

// Geographic unit carrying census group proportions and a population weight.
struct Region {
    RegionId id = 0;
    double population_weight = 0.0;
    std::vector<double> group_proportions;  // index-aligned to World::groups
};

// Immutable after construction; safe to share across concurrent readers.
struct World {
    std::vector<GroupId> groups;
    std::vector<Region> regions;
    std::vector<Poi> pois;
    std::vector<Trajectory> trajectories;
    Timestamp split_time = 0;                      // train history ends here
    Timestamp eval_window = 7 * kSecondsPerDay;    // lookahead past split_time

    std::size_t n_groups() const { return groups.size(); }
    std::size_t n_users() const { return trajectories.size(); }
};

// Minimal row-major matrix; enough for feature/centroid math.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool operator==(const Matrix&) const = default;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Cross-reference checks: every visit resolves to a poi, every poi to a
// region, every home region exists, proportions well-formed, split_time
// strictly inside the data time span.
inline void validate_world(const World& world) {
    if (world.groups.size() < 2) throw ValidationError("world needs at least 2 groups");
    std::unordered_set<RegionId> region_ids;
    for (const Region& r : world.regions) {
        if (!region_ids.insert(r.id).second)
            throw ValidationError("duplicate region id " + std::to_string(r.id));
        if (r.group_proportions.size() != world.groups.size())
            throw ValidationError("region " + std::to_string(r.id) + " has " +
                                  std::to_string(r.group_proportions.size()) +
                                  " proportions, expected " + std::to_string(world.groups.size()));
        double sum = 0.0;
        for (double p : r.group_proportions) {
            if (p < 0.0 || p > 1.0)
                throw ValidationError("region " + std::to_string(r.id) + " proportion out of [0,1]");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ValidationError("region " + std::to_string(r.id) + " proportions sum to " +
                                  std::to_string(sum));
        if (r.population_weight < 0.0)
            throw ValidationError("region " + std::to_string(r.id) + " has negative population weight");
    }
    std::unordered_set<PoiId> poi_ids;
    for (const Poi& p : world.pois) {
        if (!poi_ids.insert(p.id).second)
            throw ValidationError("duplicate poi id " + std::to_string(p.id));
        if (!region_ids.count(p.region_id))
            throw ValidationError("poi " + std::to_string(p.id) + " references missing region " +
                                  std::to_string(p.region_id));
    }
    Timestamp min_ts = std::numeric_limits<Timestamp>::max();
    Timestamp max_ts = std::numeric_limits<Timestamp>::min();
    std::unordered_set<UserId> user_ids;
    for (const Trajectory& t : world.trajectories) {
        if (!user_ids.insert(t.user_id).second)
            throw ValidationError("duplicate user id " + std::to_string(t.user_id));
        if (t.visits.empty())
            throw ValidationError("user " + std::to_string(t.user_id) + " has no visits");
        if (!region_ids.count(t.home_region_id))
            throw ValidationError("user " + std::to_string(t.user_id) +
                                  " references missing home region " +
                                  std::to_string(t.home_region_id));
        Timestamp prev = std::numeric_limits<Timestamp>::min();
        for (const Visit& v : t.visits) {
            if (v.timestamp < 0) throw ValidationError("negative timestamp");
            if (v.timestamp < prev)
                throw ValidationError("user " + std::to_string(t.user_id) +
                                      " visits not sorted by timestamp");
            prev = v.timestamp;
            if (v.user_id != t.user_id)
                throw ValidationError("visit user mismatch in trajectory " +
                                      std::to_string(t.user_id));
            if (!poi_ids.count(v.poi_id))
                throw ValidationError("visit references missing poi " + std::to_string(v.poi_id));
            min_ts = std::min(min_ts, v.timestamp);
            max_ts = std::max(max_ts, v.timestamp);
        }
    }
    if (!world.trajectories.empty()) {
        if (world.split_time <= min_ts || world.split_time >= max_ts)
            throw ValidationError("split_time " + std::to_string(world.split_time) +
                                  " not strictly inside data time span [" +
                                  std::to_string(min_ts) + ", " + std::to_string(max_ts) + "]");
    }
    if (world.eval_window <= 0) throw ValidationError("eval_window must be positive");
}

inline std::unordered_map<RegionId, const Region*> region_index(const World& world) {
    std::unordered_map<RegionId, const Region*> idx;
    idx.reserve(world.regions.size());
    for (const Region& r : world.regions) idx.emplace(r.id, &r);
    return idx;
}

inline std::unordered_map<UserId, const Trajectory*> trajectory_index(const World& world) {
    std::unordered_map<UserId, const Trajectory*> idx;
    idx.reserve(world.trajectories.size());
    for (const Trajectory& t : world.trajectories) idx.emplace(t.user_id, &t);
    return idx;
}

}  // namespace mobfair
