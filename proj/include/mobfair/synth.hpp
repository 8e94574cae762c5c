#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mobfair/domain.hpp"
#include "mobfair/rng.hpp"

namespace mobfair {

// Synthetic mobility worlds with group-dependent POI preferences. Each group
// owns a disjoint pool of POIs whose size scales with the group's overall
// share of the population; users draw `group_affinity` of their visits from
// their own pool and the rest from a shared pool. Smaller groups therefore
// generate less traffic on their pool, which is what makes global-popularity
// style predictors underperform on them.
struct SynthConfig {
    int n_groups = 4;
    int n_regions = 20;
    int n_pois = 2000;
    int n_users = 2000;
    std::vector<std::string> group_names;          // defaults to group0..G-1
    std::vector<double> global_proportions;        // defaults to uniform
    // Explicit per-region proportions (R x G). When empty, per-region targets
    // are jittered around global_proportions with log-normal noise of scale
    // proportion_jitter.
    std::vector<std::vector<double>> region_proportions;
    double proportion_jitter = 0.5;
    int min_visits_per_user = 30;
    int max_visits_per_user = 60;
    double group_affinity = 0.8;    // alpha: fraction of visits from own pool
    double noise_fraction = 0.0;    // fraction of visits drawn uniformly over all POIs
    int period_days = 42;           // total data span
    int eval_window_days = 7;       // lookahead window at the end of the span
    double group_pool_fraction = 0.7;  // share of POIs owned by group pools
    double zipf_exponent = 1.0;     // within-pool popularity skew
    // When > 0, visits concentrate on the first active_pool_size POIs of each
    // group pool. Pools still differ in size, but every group's visit
    // distribution has the same shape, so accuracy differences come from how
    // visible a pool is in training data rather than from pool concentration.
    int active_pool_size = 0;
    std::uint64_t seed = 1;
};

struct SynthOutput {
    World world;
    // Latent true group per user, aligned with world.trajectories. Evaluation
    // oracle only: SAKM and the sampler never see it.
    std::vector<int> true_group_by_user;
};

namespace detail {

inline std::vector<double> zipf_cumulative(std::size_t n, double exponent) {
    std::vector<double> cum(n);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        acc += std::pow(static_cast<double>(j + 1), -exponent);
        cum[j] = acc;
    }
    return cum;
}

}  // namespace detail

inline void validate_config(const SynthConfig& c) {
    if (c.n_groups < 2) throw ValidationError("synth: n_groups must be >= 2");
    if (c.n_regions < 1 || c.n_users < 1 || c.n_pois < 1)
        throw ValidationError("synth: counts must be positive");
    if (c.n_pois < c.n_groups)
        throw ValidationError("synth: n_pois < n_groups, group pools cannot be disjoint");
    if (c.group_affinity < 0.0 || c.group_affinity > 1.0)
        throw ValidationError("synth: group_affinity must be in [0,1]");
    if (c.noise_fraction < 0.0 || c.noise_fraction > 1.0)
        throw ValidationError("synth: noise_fraction must be in [0,1]");
    if (c.min_visits_per_user < 1 || c.max_visits_per_user < c.min_visits_per_user)
        throw ValidationError("synth: bad visits_per_user range");
    if (c.eval_window_days < 1 || c.period_days <= c.eval_window_days)
        throw ValidationError("synth: period_days must exceed eval_window_days");
    if (c.group_pool_fraction <= 0.0 || c.group_pool_fraction > 1.0)
        throw ValidationError("synth: group_pool_fraction must be in (0,1]");
    if (c.active_pool_size < 0)
        throw ValidationError("synth: active_pool_size must be >= 0");
    if (!c.global_proportions.empty()) {
        if (static_cast<int>(c.global_proportions.size()) != c.n_groups)
            throw ValidationError("synth: global_proportions size != n_groups");
        double s = 0.0;
        for (double p : c.global_proportions) {
            if (p <= 0.0) throw ValidationError("synth: global proportions must be positive");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw ValidationError("synth: global_proportions must sum to 1");
    }
    if (!c.region_proportions.empty()) {
        if (static_cast<int>(c.region_proportions.size()) != c.n_regions)
            throw ValidationError("synth: region_proportions rows != n_regions");
        for (const auto& row : c.region_proportions) {
            if (static_cast<int>(row.size()) != c.n_groups)
                throw ValidationError("synth: region_proportions row size != n_groups");
            double s = 0.0;
            for (double p : row) {
                if (p < 0.0) throw ValidationError("synth: negative region proportion");
                s += p;
            }
            if (std::abs(s - 1.0) > 1e-9)
                throw ValidationError("synth: region proportions must sum to 1");
        }
    }
}

inline SynthOutput generate_world(const SynthConfig& config, std::uint64_t seed) {
    validate_config(config);
    const int G = config.n_groups;
    const int R = config.n_regions;
    const int P = config.n_pois;
    const int U = config.n_users;

    SynthOutput out;
    World& world = out.world;

    world.groups.resize(G);
    for (int g = 0; g < G; ++g) {
        world.groups[g].index = g;
        world.groups[g].name = g < static_cast<int>(config.group_names.size())
                                   ? config.group_names[g]
                                   : "group" + std::to_string(g);
    }

    std::vector<double> global_props = config.global_proportions;
    if (global_props.empty()) global_props.assign(G, 1.0 / G);

    // Region targets: explicit matrix, or jittered copies of the global mix.
    std::vector<std::vector<double>> props = config.region_proportions;
    if (props.empty()) {
        props.resize(R);
        for (int r = 0; r < R; ++r) {
            Rng rng = make_rng(derive_seed(seed, hash_tag("region_props"), r));
            props[r].resize(G);
            double sum = 0.0;
            for (int g = 0; g < G; ++g) {
                double w = global_props[g] * std::exp(config.proportion_jitter * normal(rng));
                props[r][g] = std::max(w, 1e-4);
                sum += props[r][g];
            }
            for (double& p : props[r]) p /= sum;
        }
    }

    // Region attraction weights drive where users live.
    std::vector<double> region_weight(R);
    {
        Rng rng = make_rng(derive_seed(seed, hash_tag("region_weights")));
        for (int r = 0; r < R; ++r) region_weight[r] = 0.5 + uniform_real(rng);
    }
    std::vector<double> region_cum(R);
    {
        double acc = 0.0;
        for (int r = 0; r < R; ++r) {
            acc += region_weight[r];
            region_cum[r] = acc;
        }
    }

    // Disjoint group pools sized by global share, then a shared pool.
    const int pool_total = std::max(G, static_cast<int>(std::floor(config.group_pool_fraction * P)));
    std::vector<int> pool_size(G);
    {
        int assigned = 0;
        for (int g = 0; g < G; ++g) {
            pool_size[g] = std::max(1, static_cast<int>(std::floor(global_props[g] * pool_total)));
            assigned += pool_size[g];
        }
        // Trim overshoot from the largest pools so the shared pool stays nonempty.
        while (assigned > pool_total) {
            int largest = static_cast<int>(std::max_element(pool_size.begin(), pool_size.end()) -
                                           pool_size.begin());
            if (pool_size[largest] <= 1) break;
            --pool_size[largest];
            --assigned;
        }
    }

    std::vector<std::vector<PoiId>> group_pool(G);
    std::vector<PoiId> shared_pool;
    world.pois.resize(P);
    {
        Rng rng = make_rng(derive_seed(seed, hash_tag("poi_regions")));
        PoiId next = 0;
        for (int g = 0; g < G; ++g) {
            for (int j = 0; j < pool_size[g]; ++j) {
                world.pois[next] = Poi{next, static_cast<RegionId>(uniform_index(rng, R)), 1 + g};
                group_pool[g].push_back(next);
                ++next;
            }
        }
        for (; next < P; ++next) {
            world.pois[next] = Poi{next, static_cast<RegionId>(uniform_index(rng, R)), 0};
            shared_pool.push_back(next);
        }
    }

    std::vector<std::vector<double>> pool_cum(G);
    for (int g = 0; g < G; ++g) {
        std::size_t support = group_pool[g].size();
        if (config.active_pool_size > 0)
            support = std::min(support, static_cast<std::size_t>(config.active_pool_size));
        pool_cum[g] = detail::zipf_cumulative(support, config.zipf_exponent);
    }
    std::vector<double> shared_cum =
        shared_pool.empty() ? std::vector<double>{}
                            : detail::zipf_cumulative(shared_pool.size(), config.zipf_exponent);

    const Timestamp period = static_cast<Timestamp>(config.period_days) * kSecondsPerDay;
    const Timestamp eval_window = static_cast<Timestamp>(config.eval_window_days) * kSecondsPerDay;
    world.split_time = period - eval_window;
    world.eval_window = eval_window;

    world.trajectories.resize(U);
    out.true_group_by_user.resize(U);
    std::vector<double> region_users(R, 0.0);

    for (int u = 0; u < U; ++u) {
        Rng rng = make_rng(derive_seed(seed, hash_tag("user"), u));
        const int r = static_cast<int>(sample_cumulative(region_cum, rng));
        region_users[r] += 1.0;

        // Latent true group: drawn from the home region's proportions.
        int g = 0;
        {
            double target = uniform_real(rng);
            double acc = 0.0;
            for (int j = 0; j < G; ++j) {
                acc += props[r][j];
                if (target < acc) {
                    g = j;
                    break;
                }
                g = j;
            }
        }
        out.true_group_by_user[u] = g;

        const int n_visits = static_cast<int>(
            uniform_int(rng, config.min_visits_per_user, config.max_visits_per_user));
        std::vector<Timestamp> times(n_visits);
        for (int v = 0; v < n_visits; ++v)
            times[v] = static_cast<Timestamp>(rng() % static_cast<std::uint64_t>(period));
        std::sort(times.begin(), times.end());

        Trajectory& traj = world.trajectories[u];
        traj.user_id = u;
        traj.home_region_id = r;
        traj.visits.resize(n_visits);
        for (int v = 0; v < n_visits; ++v) {
            PoiId poi;
            const double roll = uniform_real(rng);
            if (roll < config.noise_fraction) {
                poi = static_cast<PoiId>(uniform_index(rng, P));
            } else if (uniform_real(rng) < config.group_affinity) {
                poi = group_pool[g][sample_cumulative(pool_cum[g], rng)];
            } else if (!shared_pool.empty()) {
                poi = shared_pool[sample_cumulative(shared_cum, rng)];
            } else {
                poi = group_pool[g][sample_cumulative(pool_cum[g], rng)];
            }
            traj.visits[v] = Visit{traj.user_id, poi, times[v]};
        }
    }

    world.regions.resize(R);
    for (int r = 0; r < R; ++r) {
        world.regions[r].id = r;
        world.regions[r].population_weight = region_users[r];
        world.regions[r].group_proportions = props[r];
    }

    validate_world(world);
    return out;
}

inline SynthOutput generate_world(const SynthConfig& config) {
    return generate_world(config, config.seed);
}

// The latent labels recorded at generation. Only tests and reports may use
// this; worlds loaded from files have no key (see world_io).
inline const std::vector<int>& answer_key(const SynthOutput& out) {
    return out.true_group_by_user;
}

}  // namespace mobfair
