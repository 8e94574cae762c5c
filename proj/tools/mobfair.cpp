#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "mobfair/mobfair.hpp"

namespace fs = std::filesystem;
using namespace mobfair;

namespace {

int log_level() {
    const char* env = std::getenv("MOBFAIR_LOG");
    if (env == nullptr) return 1;
    const std::string v(env);
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << msg << "\n";
}

int cmd_generate(const std::string& config_path) {
    const ExperimentConfig cfg = load_run_config(config_path);
    const SynthOutput synth = generate_world(cfg.synth);
    const fs::path world_dir = cfg.output_dir / "world";
    write_world(synth.world, world_dir);
    write_answer_key(synth, world_dir);
    log_info("world: " + std::to_string(synth.world.trajectories.size()) + " users, " +
             std::to_string(synth.world.pois.size()) + " pois, " +
             std::to_string(synth.world.regions.size()) + " regions");
    std::cout << world_dir.string() << "\n";
    return 0;
}

int cmd_cluster(const std::string& config_path, std::string mode_flag, std::string world_flag) {
    ExperimentConfig cfg = load_run_config(config_path);
    if (mode_flag == "per_region") cfg.mode = ProxyMode::per_region;
    else if (mode_flag == "global") cfg.mode = ProxyMode::global;
    else if (!mode_flag.empty()) throw ValidationError("mode must be per_region or global");

    const fs::path world_dir = world_flag.empty() ? cfg.output_dir / "world" : fs::path(world_flag);
    const LoadedWorld loaded = load_world(world_dir);
    const FeatureMatrix features =
        build_user_features(loaded.world, cfg.feature_d, cfg.feature_seed);
    if (!features.empty_history_users.empty())
        log_info(std::to_string(features.empty_history_users.size()) +
                 " users have no pre-split visits (zero feature rows)");

    const ProxyLabelResult proxy = proxy_labels(loaded.world, features, cfg.mode, cfg.sakm);
    fs::create_directories(cfg.output_dir);
    write_labels_csv(features.user_ids, proxy.group_by_user, cfg.output_dir / "labels.csv");
    write_features_csv(features, cfg.output_dir / "features.csv");

    nlohmann::ordered_json summary;
    summary["mode"] = cfg.mode == ProxyMode::per_region ? "per_region" : "global";
    summary["fits"] = proxy_summary_json(proxy);
    summary["empty_history_users"] = features.empty_history_users.size();
    std::ofstream out(cfg.output_dir / "sakm_summary.json", std::ios::trunc);
    out << summary.dump(2) << "\n";

    std::size_t fallbacks = 0;
    for (const RegionFitSummary& s : proxy.summaries)
        if (s.fallback && s.region_id >= 0) ++fallbacks;
    if (fallbacks > 0)
        log_info(std::to_string(fallbacks) + " regions below cluster count, labeled globally");
    std::cout << (cfg.output_dir / "labels.csv").string() << "\n";
    return 0;
}

int cmd_audit(const std::string& world_flag, const std::string& hits_flag,
              const std::string& labels_flag, const std::string& out_flag) {
    const LoadedWorld loaded = load_world(world_flag);
    const World& world = loaded.world;
    const auto hits_rows = load_hits_csv(hits_flag);
    const auto traj_of = trajectory_index(world);

    std::vector<UserHit> hits;
    hits.reserve(hits_rows.size());
    for (const auto& [user, hit] : hits_rows) {
        const auto it = traj_of.find(user);
        if (it == traj_of.end())
            throw ValidationError("hits reference unknown user " + std::to_string(user));
        hits.push_back({user, it->second->home_region_id, hit});
    }
    const auto region_acc = region_accuracies(hits);
    const GroupAccuracyReport report = group_accuracy(region_acc, world.regions);

    std::unordered_map<UserId, int> label_of;
    const bool have_labels = !labels_flag.empty();
    if (have_labels)
        for (const auto& [user, group] : load_labels_csv(labels_flag)) label_of[user] = group;

    const fs::path out_dir(out_flag);
    fs::create_directories(out_dir);
    const std::size_t G = world.groups.size();
    {
        std::ofstream out(out_dir / "region_audit.csv", std::ios::trunc);
        out << "region_id,a_r,n_r";
        if (have_labels) {
            for (const GroupId& g : world.groups) out << ",z_" << g.name;
            out << ",score";
        }
        out << "\n";
        const auto regions = region_index(world);
        for (const RegionAccuracy& ra : region_acc) {
            char head[96];
            std::snprintf(head, sizeof head, "%lld,%.10g,%zu", static_cast<long long>(ra.region_id),
                          ra.a_r, ra.n_r);
            out << head;
            if (have_labels) {
                std::vector<double> sums(G, 0.0), counts(G, 0.0);
                for (const UserHit& h : hits) {
                    if (h.region_id != ra.region_id) continue;
                    const auto it = label_of.find(h.user_id);
                    if (it == label_of.end() || it->second < 0) continue;
                    sums[static_cast<std::size_t>(it->second)] += h.hit;
                    counts[static_cast<std::size_t>(it->second)] += 1.0;
                }
                std::vector<double> defined;
                for (std::size_t g = 0; g < G; ++g) {
                    if (counts[g] > 0.0) {
                        char buf[32];
                        std::snprintf(buf, sizeof buf, ",%.10g", sums[g] / counts[g]);
                        out << buf;
                        defined.push_back(sums[g] / counts[g]);
                    } else {
                        out << ",";
                    }
                }
                const double pop = regions.at(ra.region_id)->population_weight;
                char buf[32];
                std::snprintf(buf, sizeof buf, ",%.10g", region_disparity_score(defined, pop));
                out << buf;
            }
            out << "\n";
        }
    }
    {
        nlohmann::ordered_json j;
        j["z"] = report.z;
        j["defined"] = report.defined;
        j["C"] = report.C;
        j["N"] = report.N;
        j["tdpv"] = report.tdpv;
        j["tdpv_defined"] = report.tdpv_defined;
        j["scored_users"] = hits.size();
        j["unscored_users"] = world.trajectories.size() - hits.size();
        if (have_labels) {
            std::vector<int> hit_vals, label_vals;
            for (const UserHit& h : hits) {
                const auto it = label_of.find(h.user_id);
                hit_vals.push_back(h.hit);
                label_vals.push_back(it == label_of.end() ? -1 : it->second);
            }
            const auto direct = group_accuracy_direct(hit_vals, label_vals, G);
            j["z_direct"] = direct.z;
            j["tdpv_direct"] = direct.tdpv;
        }
        std::ofstream out(out_dir / "group_report.json", std::ios::trunc);
        out << j.dump(2) << "\n";
    }
    char line[64];
    std::snprintf(line, sizeof line, "tdpv %.10g", report.tdpv);
    std::cout << line << "\n";
    return 0;
}

int cmd_experiment(const std::string& config_path, std::vector<double> betas, int seeds) {
    ExperimentConfig cfg = load_run_config(config_path);
    if (!betas.empty()) cfg.betas = std::move(betas);
    if (seeds > 0) cfg.seeds = seeds;
    const auto cells = run_experiment(cfg);
    std::size_t fresh = 0;
    for (const CellResult& c : cells)
        if (!c.from_cache) ++fresh;
    log_info(std::to_string(cells.size()) + " cells (" + std::to_string(fresh) + " computed, " +
             std::to_string(cells.size() - fresh) + " cached)");
    const auto rows = aggregate_report(cells);
    write_report_csv(rows, cfg.output_dir / "report.csv");
    std::cout << (cfg.output_dir / "report.csv").string() << "\n";
    return 0;
}

int cmd_report(const std::string& results_flag, const std::string& out_flag, int resamples,
               std::uint64_t seed) {
    const auto cells = load_cells(results_flag);
    const auto rows = aggregate_report(cells, resamples, seed);
    write_report_csv(rows, out_flag);
    std::cout << out_flag << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fairness audit and fairness-guided sampling for mobility prediction"};
    app.require_subcommand(1);

    std::string config_path, mode_flag, world_flag, hits_flag, labels_flag;
    std::string out_flag = ".";
    std::string report_out = "report.csv";
    std::vector<double> betas;
    int seeds = 0;
    int resamples = 1000;
    std::uint64_t report_seed = 1234;

    auto* generate = app.add_subcommand("generate", "Generate a synthetic world");
    generate->add_option("--config", config_path, "Run config JSON")->required();

    auto* cluster = app.add_subcommand("cluster", "Compute proxy group labels");
    cluster->add_option("--config", config_path, "Run config JSON")->required();
    cluster->add_option("--mode", mode_flag, "per_region or global");
    cluster->add_option("--world", world_flag, "World directory (default <output_dir>/world)");

    auto* audit = app.add_subcommand("audit", "Group accuracy audit from per-user hits");
    audit->add_option("--world", world_flag, "World directory")->required();
    audit->add_option("--hits", hits_flag, "CSV user_id,hit")->required();
    audit->add_option("--labels", labels_flag, "CSV user_id,group (adds per-region group stats)");
    audit->add_option("--out", out_flag, "Output directory (default .)");

    auto* experiment = app.add_subcommand("experiment", "Run the sampling loop over betas x seeds");
    experiment->add_option("--config", config_path, "Run config JSON")->required();
    experiment->add_option("--betas", betas, "Comma-separated beta list")->delimiter(',');
    experiment->add_option("--seeds", seeds, "Replicate count");

    auto* report = app.add_subcommand("report", "Aggregate result cells into a summary CSV");
    report->add_option("--results", world_flag, "Results directory")->required();
    report->add_option("--out", report_out, "Output CSV path");
    report->add_option("--resamples", resamples, "Bootstrap resamples");
    report->add_option("--seed", report_seed, "Bootstrap seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (generate->parsed()) return cmd_generate(config_path);
        if (cluster->parsed()) return cmd_cluster(config_path, mode_flag, world_flag);
        if (audit->parsed()) return cmd_audit(world_flag, hits_flag, labels_flag, out_flag);
        if (experiment->parsed()) return cmd_experiment(config_path, betas, seeds);
        if (report->parsed()) return cmd_report(world_flag, report_out, resamples, report_seed);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
