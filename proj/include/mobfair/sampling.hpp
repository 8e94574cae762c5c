#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <unordered_set>
#include <vector>

#include "mobfair/domain.hpp"
#include "mobfair/metrics.hpp"
#include "mobfair/predictor.hpp"
#include "mobfair/rng.hpp"

namespace mobfair {

struct FgisConfig {
    double beta = 0.0;
    int batch_size = 1000;     // B
    int mini_batch = 50;       // m
    int rounds = 10;           // n
    double z_init = 0.1;
    double z_floor = 0.01;     // accuracy estimates are clamped here before weighting
    std::uint64_t seed = 0;
};

inline void validate_fgis_config(const FgisConfig& c) {
    if (c.beta < 0.0) throw ValidationError("fgis: beta must be >= 0");
    if (c.mini_batch < 1 || c.mini_batch > c.batch_size)
        throw ValidationError("fgis: need 1 <= mini_batch <= batch_size");
    if (c.rounds < 1) throw ValidationError("fgis: rounds must be >= 1");
    if (c.z_init <= 0.0 || c.z_init > 1.0) throw ValidationError("fgis: z_init must be in (0,1]");
    if (c.z_floor <= 0.0) throw ValidationError("fgis: z_floor must be > 0");
}

struct Candidate {
    UserId user;
    int group;
};

struct SamplerState {
    std::vector<double> z;         // clamped accuracy estimates
    std::vector<std::int64_t> x;   // cumulative sampled count per group
    int t = 0;
};

// Group selection probabilities, proportional to [z_g * (x_g + 1)]^(-beta),
// computed in the log domain with a max shift so beta up to 100 stays finite.
// Groups without remaining candidates get probability 0.
inline std::vector<double> group_weights(const std::vector<double>& z,
                                         const std::vector<double>& x, double beta,
                                         const std::vector<bool>& has_candidates) {
    const std::size_t G = z.size();
    if (x.size() != G || has_candidates.size() != G)
        throw ValidationError("fgis: weight input length mismatch");

    std::vector<double> logw(G, 0.0);
    double max_logw = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t g = 0; g < G; ++g) {
        if (!has_candidates[g]) continue;
        if (z[g] <= 0.0) throw ValidationError("fgis: z must be positive after clamping");
        if (x[g] < 0.0) throw ValidationError("fgis: negative sampled count");
        logw[g] = -beta * (std::log(z[g]) + std::log(x[g] + 1.0));
        max_logw = std::max(max_logw, logw[g]);
        any = true;
    }
    if (!any) throw ValidationError("fgis: no group has candidates");

    std::vector<double> w(G, 0.0);
    double total = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
        if (!has_candidates[g]) continue;
        w[g] = std::exp(logw[g] - max_logw);
        total += w[g];
    }
    for (double& v : w) v /= total;
    return w;
}

struct BatchResult {
    std::vector<UserId> selected;   // in draw order
    bool short_batch = false;
};

// Draw up to batch_size users from the pool without replacement. Group
// weights refresh once per mini_batch draws (only x moves inside a round);
// within a mini-batch each remaining candidate u carries weight
// p_{g(u)} / max_g p_g, so with beta = 0 every weight is exactly 1 and the
// draw sequence is that of a plain uniform sampler. Selected candidates are
// removed from the pool; state.x is updated after every mini-batch.
inline BatchResult sample_batch(std::vector<Candidate>& pool, SamplerState& state,
                                const FgisConfig& config, Rng& rng) {
    validate_fgis_config(config);
    const std::size_t G = state.z.size();
    BatchResult result;
    result.selected.reserve(static_cast<std::size_t>(config.batch_size));

    while (static_cast<int>(result.selected.size()) < config.batch_size) {
        if (pool.empty()) {
            result.short_batch = true;
            break;
        }
        std::vector<bool> has(G, false);
        for (const Candidate& c : pool) has[static_cast<std::size_t>(c.group)] = true;
        std::vector<double> x_real(state.x.begin(), state.x.end());
        const std::vector<double> p = group_weights(state.z, x_real, config.beta, has);
        double p_max = 0.0;
        for (double v : p) p_max = std::max(p_max, v);

        const int want = std::min<int>(config.mini_batch,
                                       config.batch_size - static_cast<int>(result.selected.size()));
        std::vector<std::int64_t> taken(G, 0);
        for (int d = 0; d < want && !pool.empty(); ++d) {
            double total = 0.0;
            for (const Candidate& c : pool) total += p[static_cast<std::size_t>(c.group)] / p_max;
            const double target = uniform_real(rng) * total;
            double acc = 0.0;
            std::size_t pick = pool.size() - 1;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                acc += p[static_cast<std::size_t>(pool[i].group)] / p_max;
                if (acc > target) {
                    pick = i;
                    break;
                }
            }
            const Candidate chosen = pool[pick];
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
            result.selected.push_back(chosen.user);
            ++taken[static_cast<std::size_t>(chosen.group)];
        }
        for (std::size_t g = 0; g < G; ++g) state.x[g] += taken[g];
    }
    return result;
}

struct StepRecord {
    int t = 0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> z;                    // measured this round; carry-over if not
    std::vector<bool> measured;
    double acc_overall = 0.0;
    double tdpv = 0.0;
    std::vector<std::int64_t> sampled_counts; // cumulative per group
    bool short_batch = false;
    double wall_clock_s = 0.0;                // informational only, never serialized
};

struct LoopResult {
    std::vector<StepRecord> steps;
    std::vector<UserId> sampled;   // final training set in draw order
    bool exhausted_early = false;
};

// The incremental sampling loop: per round, draw a batch, grow the training
// set, train a fresh model from scratch, evaluate on the fixed held-out pool,
// and feed the measured per-group accuracies back into the sampler.
inline LoopResult run_loop(const World& world, std::shared_ptr<const HistoryIndex> histories,
                           const std::vector<Candidate>& candidates,
                           const std::vector<Candidate>& eval_pool, std::size_t n_groups,
                           const PredictorSpec& predictor_spec, const FgisConfig& config,
                           int metric_k) {
    validate_fgis_config(config);
    validate_predictor_spec(predictor_spec);
    if (metric_k < 1) throw ValidationError("fgis: metric k must be >= 1");
    for (const Candidate& c : candidates)
        if (c.group < 0 || static_cast<std::size_t>(c.group) >= n_groups)
            throw ValidationError("fgis: candidate without a valid group label");

    // Fixed evaluation set: eval-pool users with eval-window activity.
    const auto traj_of = trajectory_index(world);
    std::vector<Candidate> evaluable;
    std::vector<std::unordered_set<PoiId>> actuals;
    for (const Candidate& c : eval_pool) {
        const auto it = traj_of.find(c.user);
        if (it == traj_of.end()) throw ValidationError("fgis: eval user has no trajectory");
        auto pois = eval_window_pois(*it->second, world.split_time, world.eval_window);
        if (pois.empty()) continue;
        evaluable.push_back(c);
        actuals.push_back(std::move(pois));
    }

    LoopResult out;
    SamplerState state;
    state.z.assign(n_groups, config.z_init);
    state.x.assign(n_groups, 0);

    std::vector<Candidate> pool = candidates;
    Rng rng = make_rng(config.seed);

    for (int t = 1; t <= config.rounds; ++t) {
        if (pool.empty()) {
            out.exhausted_early = true;
            break;
        }
        const auto round_start = std::chrono::steady_clock::now();
        BatchResult batch = sample_batch(pool, state, config, rng);
        out.sampled.insert(out.sampled.end(), batch.selected.begin(), batch.selected.end());

        const TrainedModel model = train(predictor_spec, histories, out.sampled);

        std::vector<int> hits(evaluable.size());
        std::vector<int> groups(evaluable.size());
        for (std::size_t i = 0; i < evaluable.size(); ++i) {
            const auto predicted = predict_top_k(model, evaluable[i].user, metric_k);
            hits[i] = acc_at_k(predicted, actuals[i], metric_k);
            groups[i] = evaluable[i].group;
        }
        const GroupAccuracyReport rep = group_accuracy_direct(hits, groups, n_groups);

        StepRecord rec;
        rec.t = t;
        rec.beta = config.beta;
        rec.seed = config.seed;
        rec.z.assign(n_groups, 0.0);
        rec.measured.assign(n_groups, false);
        for (std::size_t g = 0; g < n_groups; ++g) {
            if (rep.defined[g]) {
                rec.z[g] = rep.z[g];
                rec.measured[g] = true;
                state.z[g] = std::max(config.z_floor, rep.z[g]);
            } else {
                rec.z[g] = state.z[g];   // carry the working estimate
            }
        }
        double hit_sum = 0.0;
        for (int h : hits) hit_sum += h;
        rec.acc_overall = hits.empty() ? 0.0 : hit_sum / static_cast<double>(hits.size());
        rec.tdpv = rep.tdpv;
        rec.sampled_counts.assign(state.x.begin(), state.x.end());
        rec.short_batch = batch.short_batch;
        rec.wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - round_start).count();
        state.t = t;
        out.steps.push_back(std::move(rec));

        if (batch.short_batch && pool.empty() && t < config.rounds) {
            out.exhausted_early = true;
            break;
        }
    }
    return out;
}

}  // namespace mobfair
