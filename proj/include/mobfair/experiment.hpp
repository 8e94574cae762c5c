#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobfair/features.hpp"
#include "mobfair/metrics.hpp"
#include "mobfair/predictor.hpp"
#include "mobfair/rng.hpp"
#include "mobfair/run_config.hpp"
#include "mobfair/sampling.hpp"
#include "mobfair/size_aware_kmeans.hpp"
#include "mobfair/synth.hpp"
#include "mobfair/world_io.hpp"

namespace mobfair {

// A cell is one (beta, replicate seed) run of the sampling loop. Replicates
// share their world, proxy labels, candidate/eval split, and sampling seed
// across betas, so arms are paired.
struct CellResult {
    double beta = 0.0;
    int seed = 0;
    std::vector<StepRecord> steps;
    bool from_cache = false;
};

namespace detail {

inline std::string beta_tag(double beta) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", beta);
    std::string s(buf);
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

}  // namespace detail

inline std::filesystem::path cell_path(const std::filesystem::path& results_dir, double beta,
                                       int seed) {
    return results_dir /
           ("cell_b" + detail::beta_tag(beta) + "_s" + std::to_string(seed) + ".jsonl");
}

inline nlohmann::ordered_json step_to_json(const StepRecord& rec) {
    nlohmann::ordered_json j;
    j["t"] = rec.t;
    j["beta"] = rec.beta;
    j["seed"] = rec.seed;
    j["z"] = rec.z;
    j["acc_overall"] = rec.acc_overall;
    j["tdpv"] = rec.tdpv;
    j["counts"] = rec.sampled_counts;
    return j;
}

// Complete cells are written atomically: tmp file, then rename. A file that
// exists is a finished cell, which is what makes interrupted runs resumable.
inline void write_cell(const std::filesystem::path& path, const std::vector<StepRecord>& steps) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + tmp);
        for (const StepRecord& rec : steps) out << step_to_json(rec).dump() << "\n";
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<StepRecord> read_cell(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<StepRecord> steps;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            StepRecord rec;
            rec.t = j.at("t").get<int>();
            rec.beta = j.at("beta").get<double>();
            rec.seed = j.at("seed").get<std::uint64_t>();
            rec.z = j.at("z").get<std::vector<double>>();
            rec.acc_overall = j.at("acc_overall").get<double>();
            rec.tdpv = j.at("tdpv").get<double>();
            rec.sampled_counts = j.at("counts").get<std::vector<std::int64_t>>();
            rec.measured.assign(rec.z.size(), true);
            steps.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": " +
                                  e.what());
        }
    }
    return steps;
}

// Everything a replicate shares across beta arms.
struct ReplicateEnv {
    World world;
    std::shared_ptr<const HistoryIndex> histories;
    std::vector<Candidate> candidates;   // sorted by user id
    std::vector<Candidate> eval_pool;    // sorted by user id
    std::uint64_t sampling_seed = 0;
};

inline ReplicateEnv build_replicate(const ExperimentConfig& cfg, int seed_idx) {
    ReplicateEnv env;
    SynthOutput synth = generate_world(
        cfg.synth, derive_seed(cfg.base_seed, hash_tag("world"), cfg.synth.seed, seed_idx));
    env.world = std::move(synth.world);

    const FeatureMatrix features = build_user_features(
        env.world, cfg.feature_d,
        derive_seed(cfg.base_seed, hash_tag("features"), cfg.feature_seed, seed_idx));

    SakmConfig sakm = cfg.sakm;
    sakm.seed = derive_seed(cfg.base_seed, hash_tag("sakm"), cfg.sakm.seed, seed_idx);
    const ProxyLabelResult proxy = proxy_labels(env.world, features, cfg.mode, sakm);

    const std::size_t U = env.world.trajectories.size();
    std::vector<std::size_t> order(U);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = make_rng(derive_seed(cfg.base_seed, hash_tag("split"), seed_idx));
    shuffle(order, split_rng);
    const auto eval_count =
        static_cast<std::size_t>(std::llround(cfg.eval_fraction * static_cast<double>(U)));
    if (eval_count == 0 || eval_count >= U)
        throw ValidationError("experiment: eval split leaves an empty pool");

    for (std::size_t i = 0; i < U; ++i) {
        const std::size_t row = order[i];
        const Candidate c{env.world.trajectories[row].user_id, proxy.group_by_user[row]};
        if (i < eval_count) env.eval_pool.push_back(c);
        else env.candidates.push_back(c);
    }
    const auto by_user = [](const Candidate& a, const Candidate& b) { return a.user < b.user; };
    std::sort(env.eval_pool.begin(), env.eval_pool.end(), by_user);
    std::sort(env.candidates.begin(), env.candidates.end(), by_user);

    env.histories = std::make_shared<HistoryIndex>(build_history_index(env.world));
    env.sampling_seed = derive_seed(cfg.base_seed, hash_tag("sampling"), seed_idx);
    return env;
}

inline std::vector<StepRecord> run_cell(const ExperimentConfig& cfg, const ReplicateEnv& env,
                                        double beta, int seed_idx) {
    FgisConfig fgis = cfg.fgis;
    fgis.beta = beta;
    fgis.seed = env.sampling_seed;
    LoopResult loop =
        run_loop(env.world, env.histories, env.candidates, env.eval_pool,
                 env.world.groups.size(), cfg.predictor, fgis, cfg.metric_k);
    for (StepRecord& rec : loop.steps) rec.seed = static_cast<std::uint64_t>(seed_idx);
    return std::move(loop.steps);
}

// Run (or resume) every (beta, seed) cell, writing one JSONL file per cell
// into <output_dir>/results. Cells whose file already exists are read back,
// not recomputed.
inline std::vector<CellResult> run_experiment(const ExperimentConfig& cfg) {
    const auto results_dir = cfg.output_dir / "results";
    std::filesystem::create_directories(results_dir);

    std::vector<CellResult> cells;
    for (int seed_idx = 0; seed_idx < cfg.seeds; ++seed_idx) {
        std::vector<double> missing;
        for (double beta : cfg.betas)
            if (!std::filesystem::exists(cell_path(results_dir, beta, seed_idx)))
                missing.push_back(beta);

        ReplicateEnv env;
        if (!missing.empty()) env = build_replicate(cfg, seed_idx);

        for (double beta : cfg.betas) {
            const auto path = cell_path(results_dir, beta, seed_idx);
            CellResult cell;
            cell.beta = beta;
            cell.seed = seed_idx;
            if (std::filesystem::exists(path)) {
                cell.steps = read_cell(path);
                cell.from_cache = true;
            } else {
                cell.steps = run_cell(cfg, env, beta, seed_idx);
                write_cell(path, cell.steps);
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

inline std::vector<CellResult> load_cells(const std::filesystem::path& results_dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(results_dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind("cell_", 0) == 0 &&
            entry.path().extension() == ".jsonl")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<CellResult> cells;
    for (const auto& f : files) {
        CellResult cell;
        cell.steps = read_cell(f);
        cell.from_cache = true;
        if (cell.steps.empty()) continue;
        cell.beta = cell.steps.front().beta;
        cell.seed = static_cast<int>(cell.steps.front().seed);
        cells.push_back(std::move(cell));
    }
    if (cells.empty()) throw ValidationError("no result cells under " + results_dir.string());
    return cells;
}

struct ReportRow {
    double beta = 0.0;
    int t = 0;
    std::size_t n_seeds = 0;
    double tdpv_median = 0.0, tdpv_lo = 0.0, tdpv_hi = 0.0;
    double acc_median = 0.0, acc_lo = 0.0, acc_hi = 0.0;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 95% percentile bootstrap of the median.
inline std::pair<double, double> bootstrap_ci(const std::vector<double>& v, int resamples,
                                              Rng& rng) {
    std::vector<double> medians(static_cast<std::size_t>(resamples));
    std::vector<double> draw(v.size());
    for (int r = 0; r < resamples; ++r) {
        for (std::size_t i = 0; i < v.size(); ++i) draw[i] = v[uniform_index(rng, v.size())];
        medians[static_cast<std::size_t>(r)] = median(draw);
    }
    std::sort(medians.begin(), medians.end());
    const auto rank = [&](double q) {
        return medians[static_cast<std::size_t>(
            std::llround(q * static_cast<double>(medians.size() - 1)))];
    };
    return {rank(0.025), rank(0.975)};
}

}  // namespace detail

inline std::vector<ReportRow> aggregate_report(const std::vector<CellResult>& cells,
                                               int bootstrap_resamples = 1000,
                                               std::uint64_t seed = 1234) {
    struct Key {
        double beta;
        int t;
        bool operator<(const Key& o) const { return beta != o.beta ? beta < o.beta : t < o.t; }
    };
    std::map<Key, std::pair<std::vector<double>, std::vector<double>>> grouped;
    for (const CellResult& cell : cells)
        for (const StepRecord& rec : cell.steps) {
            auto& slot = grouped[{cell.beta, rec.t}];
            slot.first.push_back(rec.tdpv);
            slot.second.push_back(rec.acc_overall);
        }

    std::vector<ReportRow> rows;
    for (const auto& [key, slot] : grouped) {
        ReportRow row;
        row.beta = key.beta;
        row.t = key.t;
        row.n_seeds = slot.first.size();
        row.tdpv_median = detail::median(slot.first);
        row.acc_median = detail::median(slot.second);
        Rng rng = make_rng(derive_seed(seed, hash_tag("bootstrap"),
                                       static_cast<std::int64_t>(key.beta * 1000), key.t));
        auto [tlo, thi] = detail::bootstrap_ci(slot.first, bootstrap_resamples, rng);
        auto [alo, ahi] = detail::bootstrap_ci(slot.second, bootstrap_resamples, rng);
        row.tdpv_lo = tlo;
        row.tdpv_hi = thi;
        row.acc_lo = alo;
        row.acc_hi = ahi;
        rows.push_back(row);
    }
    return rows;
}

inline void write_report_csv(const std::vector<ReportRow>& rows,
                             const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "beta,t,n_seeds,tdpv_median,tdpv_lo,tdpv_hi,acc_median,acc_lo,acc_hi\n";
    for (const ReportRow& r : rows) {
        char line[256];
        std::snprintf(line, sizeof line, "%g,%d,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      r.beta, r.t, r.n_seeds, r.tdpv_median, r.tdpv_lo, r.tdpv_hi, r.acc_median,
                      r.acc_lo, r.acc_hi);
        out << line;
    }
}

}  // namespace mobfair
