#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "mobfair/domain.hpp"
#include "mobfair/features.hpp"
#include "mobfair/rng.hpp"

namespace mobfair {

// Size-aware k-means: Lloyd iterations with per-cluster Lagrangian penalties
// that steer cluster sizes toward target proportions, wrapped in a search
// over all permutations of those targets. The run with minimum inertia wins.
struct SakmConfig {
    int k = 4;
    std::vector<double> pi;        // target proportions, length k
    double eta = 5.0;              // multiplier step size; 0 disables size pressure
    double tau = 1e-4;             // centroid-shift convergence tolerance
    int T = 50;                    // max inner iterations
    int n_init = 2;                // random restarts
    int max_permutations = 720;    // refuse k! beyond this
    std::uint64_t seed = 0;
};

struct InnerLoopResult {
    std::vector<int> assignments;
    Matrix centroids;
    std::vector<double> lambdas;
    std::vector<std::size_t> counts;
    double inertia = 0.0;
    int iterations = 0;
};

struct ClusteringResult {
    std::vector<int> assignments;        // cluster index per row of X
    Matrix centroids;
    double inertia = 0.0;
    std::vector<double> achieved;        // n_j / N per cluster
    std::vector<int> group_of_cluster;   // winning permutation: cluster j labels group
    int iterations = 0;
    int restart = 0;
    int permutation_index = 0;
};

inline void validate_sakm_config(const SakmConfig& c) {
    if (c.k < 1) throw ValidationError("sakm: k must be >= 1");
    if (static_cast<int>(c.pi.size()) != c.k)
        throw ValidationError("sakm: pi length must equal k");
    double s = 0.0;
    for (double p : c.pi) {
        if (p < 0.0) throw ValidationError("sakm: pi entries must be >= 0");
        s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("sakm: pi must sum to 1");
    if (c.eta < 0.0) throw ValidationError("sakm: eta must be >= 0");
    if (c.tau <= 0.0) throw ValidationError("sakm: tau must be > 0");
    if (c.T < 1) throw ValidationError("sakm: T must be >= 1");
    if (c.n_init < 1) throw ValidationError("sakm: n_init must be >= 1");
}

namespace detail {

inline void require_finite(const Matrix& m, const char* what) {
    for (double v : m.data)
        if (!std::isfinite(v)) throw ValidationError(std::string("sakm: non-finite ") + what);
}

// Shared assignment pass. With deficit_ties, exact cost ties go to the
// cluster furthest below its target size at that point of the scan (then
// lowest index); otherwise ties go to the lowest index. The deficit rule
// only matters on degenerate geometry where whole cost vectors coincide,
// e.g. all points identical; it is what lets size pressure split such
// regions instead of piling everyone into cluster 0.
inline std::vector<int> assign_pass(const Matrix& X, const Matrix& centroids,
                                    const std::vector<double>& lambdas,
                                    const std::vector<double>& pi, bool deficit_ties) {
    const std::size_t U = X.rows;
    const std::size_t k = centroids.rows;
    std::vector<int> z(U, 0);
    std::vector<double> running(k, 0.0);
    const double N = static_cast<double>(U);
    for (std::size_t i = 0; i < U; ++i) {
        const auto xi = X.row(i);
        int best = 0;
        double best_cost = squared_distance(xi, centroids.row(0)) + lambdas[0];
        for (std::size_t j = 1; j < k; ++j) {
            const double cost = squared_distance(xi, centroids.row(j)) + lambdas[j];
            if (cost < best_cost) {
                best_cost = cost;
                best = static_cast<int>(j);
            } else if (deficit_ties && cost == best_cost) {
                const double deficit_j = pi[j] * N - running[j];
                const double deficit_b = pi[best] * N - running[best];
                if (deficit_j > deficit_b) best = static_cast<int>(j);
            }
        }
        z[i] = best;
        running[best] += 1.0;
    }
    return z;
}

inline std::vector<std::size_t> cluster_counts(const std::vector<int>& z, std::size_t k) {
    std::vector<std::size_t> n(k, 0);
    for (int c : z) ++n[static_cast<std::size_t>(c)];
    return n;
}

inline double total_inertia(const Matrix& X, const Matrix& centroids,
                            const std::vector<int>& z) {
    double s = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i)
        s += squared_distance(X.row(i), centroids.row(static_cast<std::size_t>(z[i])));
    return s;
}

inline Matrix kmeanspp_init(const Matrix& X, int k, std::uint64_t seed) {
    const std::size_t U = X.rows;
    Rng rng = make_rng(seed);
    Matrix centroids(static_cast<std::size_t>(k), X.cols);
    std::vector<double> d2(U);

    std::size_t first = uniform_index(rng, U);
    std::copy_n(X.row(first).data(), X.cols, centroids.row(0).data());
    for (std::size_t i = 0; i < U; ++i) d2[i] = squared_distance(X.row(i), centroids.row(0));

    for (int j = 1; j < k; ++j) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick;
        if (total > 0.0) {
            const double target = uniform_real(rng) * total;
            double acc = 0.0;
            pick = U - 1;
            for (std::size_t i = 0; i < U; ++i) {
                acc += d2[i];
                if (target < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = uniform_index(rng, U);
        }
        std::copy_n(X.row(pick).data(), X.cols, centroids.row(static_cast<std::size_t>(j)).data());
        for (std::size_t i = 0; i < U; ++i)
            d2[i] = std::min(d2[i], squared_distance(X.row(i), centroids.row(static_cast<std::size_t>(j))));
    }
    return centroids;
}

}  // namespace detail

// Penalized nearest-centroid assignment; cost(i,j) = ||x_i - mu_j||^2 + lambda_j.
// Ties break toward the lowest cluster index.
inline std::vector<int> assign_step(const Matrix& X, const Matrix& centroids,
                                    const std::vector<double>& lambdas) {
    if (centroids.rows != lambdas.size())
        throw ValidationError("sakm: centroid count != lambda count");
    detail::require_finite(X, "feature entry");
    detail::require_finite(centroids, "centroid entry");
    return detail::assign_pass(X, centroids, lambdas, {}, false);
}

// Mean of each cluster's members; empty clusters keep their previous centroid.
inline Matrix update_centroids(const Matrix& X, const std::vector<int>& assignments,
                               const Matrix& previous) {
    const std::size_t k = previous.rows;
    Matrix out(k, previous.cols);
    std::vector<std::size_t> n(k, 0);
    for (std::size_t i = 0; i < X.rows; ++i) {
        const auto j = static_cast<std::size_t>(assignments[i]);
        ++n[j];
        auto row = out.row(j);
        const auto xi = X.row(i);
        for (std::size_t c = 0; c < X.cols; ++c) row[c] += xi[c];
    }
    for (std::size_t j = 0; j < k; ++j) {
        auto row = out.row(j);
        if (n[j] == 0) {
            std::copy_n(previous.row(j).data(), previous.cols, row.data());
        } else {
            for (double& v : row) v /= static_cast<double>(n[j]);
        }
    }
    return out;
}

// lambda_j += eta * (n_j/N - pi_j)
inline std::vector<double> update_multipliers(const std::vector<double>& lambdas,
                                              const std::vector<std::size_t>& counts,
                                              std::size_t N, const std::vector<double>& pi,
                                              double eta) {
    if (N == 0) throw ValidationError("sakm: multiplier update with N = 0");
    std::vector<double> out(lambdas);
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] += eta * (static_cast<double>(counts[j]) / static_cast<double>(N) - pi[j]);
    return out;
}

using InnerLoopTrace = std::vector<std::vector<int>>;

// Assignment / centroid / multiplier updates until centroids move less than
// tau or T iterations elapse. `trace`, when given, records the assignment
// vector of every iteration.
inline InnerLoopResult run_inner_loop(const Matrix& X, const Matrix& init_centroids,
                                      const std::vector<double>& pi, const SakmConfig& config,
                                      InnerLoopTrace* trace = nullptr) {
    detail::require_finite(X, "feature entry");
    detail::require_finite(init_centroids, "centroid entry");
    const std::size_t k = init_centroids.rows;
    const std::size_t U = X.rows;
    const bool deficit_ties = config.eta > 0.0;

    InnerLoopResult r;
    r.centroids = init_centroids;
    r.lambdas.assign(k, 0.0);

    for (int it = 1; it <= config.T; ++it) {
        r.assignments = detail::assign_pass(X, r.centroids, r.lambdas, pi, deficit_ties);
        r.counts = detail::cluster_counts(r.assignments, k);
        Matrix next = update_centroids(X, r.assignments, r.centroids);
        double shift = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            shift = std::max(shift, std::sqrt(squared_distance(next.row(j), r.centroids.row(j))));
        r.centroids = std::move(next);
        r.lambdas = update_multipliers(r.lambdas, r.counts, U, pi, config.eta);
        r.iterations = it;
        if (trace) trace->push_back(r.assignments);
        if (shift < config.tau) break;
    }
    r.inertia = detail::total_inertia(X, r.centroids, r.assignments);
    return r;
}

// Full fit: n_init seeded k-means++ restarts, inner loop per permutation of
// pi, minimum inertia wins. Exact inertia ties (permutations whose penalties
// never flipped any assignment produce bit-identical runs) go to the
// candidate whose cluster sizes best match its permuted targets, then to
// restart and permutation order.
inline ClusteringResult sakm_fit(const Matrix& X, const SakmConfig& config) {
    validate_sakm_config(config);
    if (X.rows < static_cast<std::size_t>(config.k))
        throw ValidationError("sakm: fewer points than clusters");

    double n_perms = 1.0;
    for (int j = 2; j <= config.k; ++j) n_perms *= j;
    if (n_perms > static_cast<double>(config.max_permutations))
        throw ValidationError("sakm: k! = " + std::to_string(static_cast<long long>(n_perms)) +
                              " permutations exceeds limit " +
                              std::to_string(config.max_permutations) + "; use smaller k");

    ClusteringResult best;
    bool have_best = false;
    double best_dev = 0.0;

    for (int restart = 0; restart < config.n_init; ++restart) {
        const Matrix init = detail::kmeanspp_init(
            X, config.k, derive_seed(config.seed, hash_tag("kmeanspp"), restart));

        std::vector<int> perm(static_cast<std::size_t>(config.k));
        std::iota(perm.begin(), perm.end(), 0);
        int perm_idx = 0;
        do {
            std::vector<double> pi_prime(perm.size());
            for (std::size_t j = 0; j < perm.size(); ++j)
                pi_prime[j] = config.pi[static_cast<std::size_t>(perm[j])];

            InnerLoopResult r = run_inner_loop(X, init, pi_prime, config);
            double dev = 0.0;
            for (std::size_t j = 0; j < perm.size(); ++j)
                dev += std::abs(static_cast<double>(r.counts[j]) /
                                    static_cast<double>(X.rows) -
                                pi_prime[j]);
            if (!have_best || r.inertia < best.inertia ||
                (r.inertia == best.inertia && dev < best_dev)) {
                best.assignments = std::move(r.assignments);
                best.centroids = std::move(r.centroids);
                best.inertia = r.inertia;
                best.iterations = r.iterations;
                best.restart = restart;
                best.permutation_index = perm_idx;
                best.group_of_cluster = perm;
                best.achieved.assign(perm.size(), 0.0);
                for (std::size_t j = 0; j < perm.size(); ++j)
                    best.achieved[j] =
                        static_cast<double>(r.counts[j]) / static_cast<double>(X.rows);
                best_dev = dev;
                have_best = true;
            }
            ++perm_idx;
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
    return best;
}

enum class ProxyMode { per_region, global };

struct RegionFitSummary {
    RegionId region_id = -1;   // -1 marks the pooled global fit
    std::size_t n_users = 0;
    double inertia = 0.0;
    std::vector<double> achieved_by_group;
    std::vector<int> group_of_cluster;
    int iterations = 0;
    bool fallback = false;     // region too small, labeled by the global fit
};

struct ProxyLabelResult {
    std::vector<int> group_by_user;   // aligned with feature rows
    std::vector<RegionFitSummary> summaries;
};

namespace detail {

inline std::vector<double> population_weighted_proportions(const World& world) {
    const std::size_t G = world.groups.size();
    std::vector<double> pi(G, 0.0);
    double total = 0.0;
    for (const Region& r : world.regions) {
        for (std::size_t g = 0; g < G; ++g)
            pi[g] += r.population_weight * r.group_proportions[g];
        total += r.population_weight;
    }
    if (total <= 0.0) throw ValidationError("sakm: total population weight is zero");
    for (double& p : pi) p /= total;
    return pi;
}

inline Matrix gather_rows(const Matrix& X, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), X.cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(X.row(rows[i]).data(), X.cols, out.row(i).data());
    return out;
}

}  // namespace detail

// Census-calibrated proxy group labels. per_region fits each region with its
// own proportions as targets; regions with fewer users than clusters fall
// back to a pooled fit over all users. global runs the pooled fit alone with
// population-weighted average proportions.
inline ProxyLabelResult proxy_labels(const World& world, const FeatureMatrix& features,
                                     ProxyMode mode, SakmConfig config) {
    const std::size_t G = world.groups.size();
    config.k = static_cast<int>(G);
    const std::size_t U = features.user_ids.size();
    if (features.X.rows != U) throw ValidationError("sakm: feature matrix shape mismatch");

    std::unordered_map<UserId, std::size_t> row_of_user;
    row_of_user.reserve(U);
    for (std::size_t i = 0; i < U; ++i) row_of_user.emplace(features.user_ids[i], i);

    ProxyLabelResult out;
    out.group_by_user.assign(U, -1);

    // Pooled fit over all users with population-weighted average proportions.
    // Serves global mode directly and labels per_region fallback users.
    const auto run_global = [&](const std::vector<std::size_t>& label_rows, bool fallback) {
        SakmConfig c = config;
        c.pi = detail::population_weighted_proportions(world);
        c.seed = derive_seed(config.seed, hash_tag("proxy_global"));
        const ClusteringResult res = sakm_fit(features.X, c);
        RegionFitSummary s;
        s.region_id = -1;
        s.n_users = label_rows.size();
        s.inertia = res.inertia;
        s.iterations = res.iterations;
        s.group_of_cluster = res.group_of_cluster;
        s.achieved_by_group.assign(G, 0.0);
        for (std::size_t j = 0; j < G; ++j)
            s.achieved_by_group[static_cast<std::size_t>(res.group_of_cluster[j])] =
                res.achieved[j];
        s.fallback = fallback;
        out.summaries.push_back(std::move(s));
        for (std::size_t row : label_rows)
            out.group_by_user[row] =
                res.group_of_cluster[static_cast<std::size_t>(res.assignments[row])];
    };

    if (mode == ProxyMode::global) {
        std::vector<std::size_t> all(U);
        std::iota(all.begin(), all.end(), 0);
        run_global(all, false);
        return out;
    }

    const auto regions = region_index(world);
    std::unordered_map<RegionId, std::vector<std::size_t>> rows_by_region;
    for (std::size_t u = 0; u < U; ++u) {
        const Trajectory& traj = world.trajectories[u];
        const auto it = row_of_user.find(traj.user_id);
        if (it == row_of_user.end())
            throw ValidationError("sakm: trajectory user missing from feature matrix");
        rows_by_region[traj.home_region_id].push_back(it->second);
    }

    std::vector<std::size_t> fallback_rows;
    for (const Region& region : world.regions) {
        const auto it = rows_by_region.find(region.id);
        if (it == rows_by_region.end()) continue;   // empty region, nothing to label
        const std::vector<std::size_t>& rows = it->second;
        if (rows.size() < G) {
            fallback_rows.insert(fallback_rows.end(), rows.begin(), rows.end());
            RegionFitSummary s;
            s.region_id = region.id;
            s.n_users = rows.size();
            s.fallback = true;
            out.summaries.push_back(std::move(s));
            continue;
        }
        SakmConfig c = config;
        c.pi = region.group_proportions;
        c.seed = derive_seed(config.seed, hash_tag("proxy_region"), region.id);
        const Matrix sub = detail::gather_rows(features.X, rows);
        const ClusteringResult res = sakm_fit(sub, c);
        RegionFitSummary s;
        s.region_id = region.id;
        s.n_users = rows.size();
        s.inertia = res.inertia;
        s.iterations = res.iterations;
        s.group_of_cluster = res.group_of_cluster;
        s.achieved_by_group.assign(G, 0.0);
        for (std::size_t j = 0; j < G; ++j)
            s.achieved_by_group[static_cast<std::size_t>(res.group_of_cluster[j])] =
                res.achieved[j];
        out.summaries.push_back(std::move(s));
        for (std::size_t i = 0; i < rows.size(); ++i)
            out.group_by_user[rows[i]] =
                res.group_of_cluster[static_cast<std::size_t>(res.assignments[i])];
    }

    if (!fallback_rows.empty()) run_global(fallback_rows, true);
    return out;
}

}  // namespace mobfair
