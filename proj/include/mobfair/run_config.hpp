#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "mobfair/domain.hpp"
#include "mobfair/predictor.hpp"
#include "mobfair/sampling.hpp"
#include "mobfair/size_aware_kmeans.hpp"
#include "mobfair/synth.hpp"

namespace mobfair {

// One config file drives every command. Unknown keys are errors, so typos
// fail loudly instead of silently running defaults.
struct ExperimentConfig {
    SynthConfig synth;
    int feature_d = 16;
    std::uint64_t feature_seed = 7;
    SakmConfig sakm;                  // pi is filled from region data at run time
    ProxyMode mode = ProxyMode::per_region;
    PredictorSpec predictor;
    FgisConfig fgis;                  // beta is overridden per experiment cell
    int metric_k = 20;
    double eval_fraction = 0.2;
    std::filesystem::path output_dir = "out";
    std::vector<double> betas{0.0};
    int seeds = 1;
    std::uint64_t base_seed = 42;
};

namespace detail {

inline void require_keys(const nlohmann::json& j, const std::string& section,
                         std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError("config: " + section + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw ValidationError("config: unknown key '" + it.key() + "' in " + section);
    }
}

template <typename T>
void read_into(const nlohmann::json& j, const char* key, T& slot, const std::string& section) {
    if (!j.contains(key)) return;
    try {
        slot = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError("config: bad value for '" + std::string(key) + "' in " + section);
    }
}

inline void parse_synth(const nlohmann::json& j, SynthConfig& c) {
    require_keys(j, "synth",
                 {"n_groups", "n_regions", "n_pois", "n_users", "group_names",
                  "global_proportions", "region_proportions", "proportion_jitter",
                  "min_visits_per_user", "max_visits_per_user", "group_affinity",
                  "noise_fraction", "period_days", "eval_window_days", "group_pool_fraction",
                  "zipf_exponent", "active_pool_size", "seed"});
    read_into(j, "n_groups", c.n_groups, "synth");
    read_into(j, "n_regions", c.n_regions, "synth");
    read_into(j, "n_pois", c.n_pois, "synth");
    read_into(j, "n_users", c.n_users, "synth");
    read_into(j, "group_names", c.group_names, "synth");
    read_into(j, "global_proportions", c.global_proportions, "synth");
    read_into(j, "region_proportions", c.region_proportions, "synth");
    read_into(j, "proportion_jitter", c.proportion_jitter, "synth");
    read_into(j, "min_visits_per_user", c.min_visits_per_user, "synth");
    read_into(j, "max_visits_per_user", c.max_visits_per_user, "synth");
    read_into(j, "group_affinity", c.group_affinity, "synth");
    read_into(j, "noise_fraction", c.noise_fraction, "synth");
    read_into(j, "period_days", c.period_days, "synth");
    read_into(j, "eval_window_days", c.eval_window_days, "synth");
    read_into(j, "group_pool_fraction", c.group_pool_fraction, "synth");
    read_into(j, "zipf_exponent", c.zipf_exponent, "synth");
    read_into(j, "active_pool_size", c.active_pool_size, "synth");
    read_into(j, "seed", c.seed, "synth");
}

inline void parse_sakm(const nlohmann::json& j, SakmConfig& c, ProxyMode& mode) {
    require_keys(j, "sakm", {"eta", "tau", "T", "n_init", "max_permutations", "seed", "mode"});
    read_into(j, "eta", c.eta, "sakm");
    read_into(j, "tau", c.tau, "sakm");
    read_into(j, "T", c.T, "sakm");
    read_into(j, "n_init", c.n_init, "sakm");
    read_into(j, "max_permutations", c.max_permutations, "sakm");
    read_into(j, "seed", c.seed, "sakm");
    if (j.contains("mode")) {
        const auto m = j.at("mode").get<std::string>();
        if (m == "per_region") mode = ProxyMode::per_region;
        else if (m == "global") mode = ProxyMode::global;
        else throw ValidationError("config: sakm mode must be per_region or global");
    }
}

inline void parse_predictor(const nlohmann::json& j, PredictorSpec& s) {
    require_keys(j, "predictor", {"kind", "blend_weight", "n_neighbors", "k_predictions"});
    if (j.contains("kind")) {
        const auto k = j.at("kind").get<std::string>();
        if (k == "freq_blend") s.kind = PredictorKind::freq_blend;
        else if (k == "covisit_knn") s.kind = PredictorKind::covisit_knn;
        else throw ValidationError("config: predictor kind must be freq_blend or covisit_knn");
    }
    read_into(j, "blend_weight", s.blend_weight, "predictor");
    read_into(j, "n_neighbors", s.n_neighbors, "predictor");
    read_into(j, "k_predictions", s.k_predictions, "predictor");
}

inline void parse_fgis(const nlohmann::json& j, FgisConfig& c) {
    require_keys(j, "fgis",
                 {"beta", "batch_size", "mini_batch", "rounds", "z_init", "z_floor", "seed"});
    read_into(j, "beta", c.beta, "fgis");
    read_into(j, "batch_size", c.batch_size, "fgis");
    read_into(j, "mini_batch", c.mini_batch, "fgis");
    read_into(j, "rounds", c.rounds, "fgis");
    read_into(j, "z_init", c.z_init, "fgis");
    read_into(j, "z_floor", c.z_floor, "fgis");
    read_into(j, "seed", c.seed, "fgis");
}

}  // namespace detail

inline ExperimentConfig parse_run_config(const nlohmann::json& j) {
    detail::require_keys(j, "config root",
                         {"synth", "features", "sakm", "predictor", "fgis", "metric_k",
                          "eval_fraction", "output_dir", "betas", "seeds", "base_seed"});
    ExperimentConfig cfg;
    if (j.contains("synth")) detail::parse_synth(j.at("synth"), cfg.synth);
    if (j.contains("features")) {
        const auto& f = j.at("features");
        detail::require_keys(f, "features", {"d", "seed"});
        detail::read_into(f, "d", cfg.feature_d, "features");
        detail::read_into(f, "seed", cfg.feature_seed, "features");
    }
    if (j.contains("sakm")) detail::parse_sakm(j.at("sakm"), cfg.sakm, cfg.mode);
    if (j.contains("predictor")) detail::parse_predictor(j.at("predictor"), cfg.predictor);
    if (j.contains("fgis")) detail::parse_fgis(j.at("fgis"), cfg.fgis);
    detail::read_into(j, "metric_k", cfg.metric_k, "config root");
    detail::read_into(j, "eval_fraction", cfg.eval_fraction, "config root");
    if (j.contains("output_dir"))
        cfg.output_dir = j.at("output_dir").get<std::string>();
    detail::read_into(j, "betas", cfg.betas, "config root");
    detail::read_into(j, "seeds", cfg.seeds, "config root");
    detail::read_into(j, "base_seed", cfg.base_seed, "config root");

    if (cfg.metric_k < 1) throw ValidationError("config: metric_k must be >= 1");
    if (cfg.eval_fraction <= 0.0 || cfg.eval_fraction >= 1.0)
        throw ValidationError("config: eval_fraction must be in (0,1)");
    if (cfg.seeds < 1) throw ValidationError("config: seeds must be >= 1");
    if (cfg.betas.empty()) throw ValidationError("config: betas must be non-empty");
    for (double b : cfg.betas)
        if (b < 0.0) throw ValidationError("config: betas must be >= 0");
    validate_predictor_spec(cfg.predictor);
    if (cfg.feature_d < 2) throw ValidationError("config: features.d must be >= 2");
    return cfg;
}

inline ExperimentConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

}  // namespace mobfair
