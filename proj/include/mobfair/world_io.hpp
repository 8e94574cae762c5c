#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mobfair/domain.hpp"
#include "mobfair/features.hpp"
#include "mobfair/size_aware_kmeans.hpp"
#include "mobfair/synth.hpp"

namespace mobfair {

// World directory layout:
//   regions.csv  region_id, pop_weight, p_<group0>, ..., p_<groupG-1>
//   users.csv    user_id, home_region_id
//   pois.csv     poi_id, region_id, category
//   visits.csv   user_id, poi_id, timestamp
//   meta.json    group names, split_time, eval_window
//   answer_key.csv (synthetic worlds only)  user_id, group

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::int64_t parse_i64(const std::string& s, const std::string& file, std::size_t line) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError(file + " line " + std::to_string(line) + ": bad integer '" + s + "'");
    }
}

inline double parse_f64(const std::string& s, const std::string& file, std::size_t line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError(file + " line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    return out;
}

}  // namespace detail

inline void write_world(const World& world, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto out = detail::open_out(dir / "regions.csv");
        out << "region_id,pop_weight";
        for (const GroupId& g : world.groups) out << ",p_" << g.name;
        out << "\n";
        for (const Region& r : world.regions) {
            out << r.id << "," << detail::fmt_double(r.population_weight);
            for (double p : r.group_proportions) out << "," << detail::fmt_double(p);
            out << "\n";
        }
    }
    {
        auto out = detail::open_out(dir / "users.csv");
        out << "user_id,home_region_id\n";
        for (const Trajectory& t : world.trajectories)
            out << t.user_id << "," << t.home_region_id << "\n";
    }
    {
        auto out = detail::open_out(dir / "pois.csv");
        out << "poi_id,region_id,category\n";
        for (const Poi& p : world.pois)
            out << p.id << "," << p.region_id << "," << p.category << "\n";
    }
    {
        auto out = detail::open_out(dir / "visits.csv");
        out << "user_id,poi_id,timestamp\n";
        for (const Trajectory& t : world.trajectories)
            for (const Visit& v : t.visits)
                out << v.user_id << "," << v.poi_id << "," << v.timestamp << "\n";
    }
    {
        nlohmann::ordered_json meta;
        meta["groups"] = nlohmann::json::array();
        for (const GroupId& g : world.groups) meta["groups"].push_back(g.name);
        meta["split_time"] = world.split_time;
        meta["eval_window"] = world.eval_window;
        auto out = detail::open_out(dir / "meta.json");
        out << meta.dump(2) << "\n";
    }
}

struct LoadedWorld {
    World world;
    std::vector<RegionId> renormalized;   // regions whose proportions were nudged
    bool split_inferred = false;          // no meta.json; split placed one window before the end
};

inline LoadedWorld load_world(const std::filesystem::path& dir) {
    LoadedWorld out;
    World& world = out.world;

    const std::string regions_file = (dir / "regions.csv").string();
    const auto region_lines = detail::read_lines(dir / "regions.csv");
    if (region_lines.empty()) throw ValidationError(regions_file + ": empty");
    const auto header = detail::split_csv(region_lines[0]);
    if (header.size() < 3 || header[0] != "region_id" || header[1] != "pop_weight")
        throw ValidationError(regions_file + " line 1: expected region_id,pop_weight,p_<group>...");
    const std::size_t G = header.size() - 2;
    for (std::size_t g = 0; g < G; ++g) {
        const std::string& col = header[g + 2];
        if (col.rfind("p_", 0) != 0)
            throw ValidationError(regions_file + " line 1: proportion column '" + col +
                                  "' must start with p_");
        world.groups.push_back({static_cast<int>(g), col.substr(2)});
    }
    for (std::size_t i = 1; i < region_lines.size(); ++i) {
        if (region_lines[i].empty()) continue;
        const auto f = detail::split_csv(region_lines[i]);
        if (f.size() != G + 2)
            throw ValidationError(regions_file + " line " + std::to_string(i + 1) +
                                  ": expected " + std::to_string(G + 2) + " fields");
        Region r;
        r.id = detail::parse_i64(f[0], regions_file, i + 1);
        r.population_weight = detail::parse_f64(f[1], regions_file, i + 1);
        double sum = 0.0;
        for (std::size_t g = 0; g < G; ++g) {
            r.group_proportions.push_back(detail::parse_f64(f[g + 2], regions_file, i + 1));
            sum += r.group_proportions.back();
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw ValidationError(regions_file + " line " + std::to_string(i + 1) +
                                  ": proportions for region " + std::to_string(r.id) +
                                  " sum to " + detail::fmt_double(sum));
        if (sum != 1.0) {
            for (double& p : r.group_proportions) p /= sum;
            out.renormalized.push_back(r.id);
        }
        world.regions.push_back(std::move(r));
    }

    const std::string pois_file = (dir / "pois.csv").string();
    const auto poi_lines = detail::read_lines(dir / "pois.csv");
    for (std::size_t i = 1; i < poi_lines.size(); ++i) {
        if (poi_lines[i].empty()) continue;
        const auto f = detail::split_csv(poi_lines[i]);
        if (f.size() != 3)
            throw ValidationError(pois_file + " line " + std::to_string(i + 1) +
                                  ": expected 3 fields");
        world.pois.push_back({detail::parse_i64(f[0], pois_file, i + 1),
                              detail::parse_i64(f[1], pois_file, i + 1),
                              static_cast<int>(detail::parse_i64(f[2], pois_file, i + 1))});
    }

    const std::string users_file = (dir / "users.csv").string();
    const auto user_lines = detail::read_lines(dir / "users.csv");
    std::unordered_map<UserId, std::size_t> traj_of;
    for (std::size_t i = 1; i < user_lines.size(); ++i) {
        if (user_lines[i].empty()) continue;
        const auto f = detail::split_csv(user_lines[i]);
        if (f.size() != 2)
            throw ValidationError(users_file + " line " + std::to_string(i + 1) +
                                  ": expected 2 fields");
        Trajectory t;
        t.user_id = detail::parse_i64(f[0], users_file, i + 1);
        t.home_region_id = detail::parse_i64(f[1], users_file, i + 1);
        if (!traj_of.emplace(t.user_id, world.trajectories.size()).second)
            throw ValidationError(users_file + " line " + std::to_string(i + 1) +
                                  ": duplicate user " + std::to_string(t.user_id));
        world.trajectories.push_back(std::move(t));
    }

    const std::string visits_file = (dir / "visits.csv").string();
    const auto visit_lines = detail::read_lines(dir / "visits.csv");
    Timestamp max_ts = std::numeric_limits<Timestamp>::min();
    for (std::size_t i = 1; i < visit_lines.size(); ++i) {
        if (visit_lines[i].empty()) continue;
        const auto f = detail::split_csv(visit_lines[i]);
        if (f.size() != 3)
            throw ValidationError(visits_file + " line " + std::to_string(i + 1) +
                                  ": expected 3 fields");
        Visit v{detail::parse_i64(f[0], visits_file, i + 1),
                detail::parse_i64(f[1], visits_file, i + 1),
                detail::parse_i64(f[2], visits_file, i + 1)};
        const auto it = traj_of.find(v.user_id);
        if (it == traj_of.end())
            throw ValidationError(visits_file + " line " + std::to_string(i + 1) +
                                  ": visit for unknown user " + std::to_string(v.user_id));
        max_ts = std::max(max_ts, v.timestamp);
        world.trajectories[it->second].visits.push_back(v);
    }

    const auto meta_path = dir / "meta.json";
    if (std::filesystem::exists(meta_path)) {
        std::ifstream in(meta_path);
        nlohmann::json meta;
        try {
            in >> meta;
        } catch (const std::exception& e) {
            throw ValidationError(meta_path.string() + ": " + e.what());
        }
        if (meta.contains("groups")) {
            const auto names = meta["groups"].get<std::vector<std::string>>();
            if (names.size() != world.groups.size())
                throw ValidationError(meta_path.string() + ": group count disagrees with regions.csv");
            for (std::size_t g = 0; g < names.size(); ++g)
                if (names[g] != world.groups[g].name)
                    throw ValidationError(meta_path.string() + ": group names disagree with regions.csv");
        }
        world.split_time = meta.at("split_time").get<Timestamp>();
        world.eval_window = meta.at("eval_window").get<Timestamp>();
    } else {
        world.eval_window = 7 * kSecondsPerDay;
        world.split_time = max_ts - world.eval_window + 1;
        out.split_inferred = true;
    }

    validate_world(world);
    return out;
}

inline void write_answer_key(const SynthOutput& synth, const std::filesystem::path& dir) {
    auto out = detail::open_out(dir / "answer_key.csv");
    out << "user_id,group\n";
    for (std::size_t u = 0; u < synth.world.trajectories.size(); ++u)
        out << synth.world.trajectories[u].user_id << "," << synth.true_group_by_user[u] << "\n";
}

// Latent labels exist only for generated worlds; anything else has no key.
inline std::vector<std::pair<UserId, int>> load_answer_key(const std::filesystem::path& dir) {
    const auto path = dir / "answer_key.csv";
    if (!std::filesystem::exists(path))
        throw ValidationError("no answer key for world at " + dir.string());
    const std::string file = path.string();
    const auto lines = detail::read_lines(path);
    std::vector<std::pair<UserId, int>> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = detail::split_csv(lines[i]);
        if (f.size() != 2)
            throw ValidationError(file + " line " + std::to_string(i + 1) + ": expected 2 fields");
        out.emplace_back(detail::parse_i64(f[0], file, i + 1),
                         static_cast<int>(detail::parse_i64(f[1], file, i + 1)));
    }
    return out;
}

inline void write_features_csv(const FeatureMatrix& fm, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << "user_id";
    for (std::size_t j = 0; j < fm.X.cols; ++j) out << ",f" << j;
    out << "\n";
    for (std::size_t i = 0; i < fm.user_ids.size(); ++i) {
        out << fm.user_ids[i];
        for (double v : fm.X.row(i)) out << "," << detail::fmt_double(v);
        out << "\n";
    }
}

inline void write_labels_csv(const std::vector<UserId>& users, const std::vector<int>& labels,
                             const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << "user_id,group\n";
    for (std::size_t i = 0; i < users.size(); ++i) out << users[i] << "," << labels[i] << "\n";
}

inline void write_clustering_csv(const ClusteringResult& result,
                                 const std::vector<UserId>& users,
                                 const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << "user_id,cluster,group_label\n";
    for (std::size_t i = 0; i < users.size(); ++i) {
        const int c = result.assignments[i];
        out << users[i] << "," << c << ","
            << result.group_of_cluster[static_cast<std::size_t>(c)] << "\n";
    }
}

inline nlohmann::ordered_json clustering_summary_json(const ClusteringResult& r) {
    nlohmann::ordered_json j;
    j["inertia"] = r.inertia;
    j["achieved_proportions"] = r.achieved;
    j["permutation"] = r.group_of_cluster;
    j["iterations"] = r.iterations;
    return j;
}

inline nlohmann::ordered_json proxy_summary_json(const ProxyLabelResult& r) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const RegionFitSummary& s : r.summaries) {
        nlohmann::ordered_json j;
        j["region_id"] = s.region_id;
        j["n_users"] = s.n_users;
        j["inertia"] = s.inertia;
        j["achieved_proportions"] = s.achieved_by_group;
        j["permutation"] = s.group_of_cluster;
        j["iterations"] = s.iterations;
        j["fallback"] = s.fallback;
        arr.push_back(std::move(j));
    }
    return arr;
}

inline std::vector<std::pair<UserId, int>> load_hits_csv(const std::filesystem::path& path) {
    const std::string file = path.string();
    const auto lines = detail::read_lines(path);
    if (lines.empty() || detail::split_csv(lines[0]) != std::vector<std::string>{"user_id", "hit"})
        throw ValidationError(file + ": expected header user_id,hit");
    std::vector<std::pair<UserId, int>> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = detail::split_csv(lines[i]);
        if (f.size() != 2)
            throw ValidationError(file + " line " + std::to_string(i + 1) + ": expected 2 fields");
        const auto hit = detail::parse_i64(f[1], file, i + 1);
        if (hit != 0 && hit != 1)
            throw ValidationError(file + " line " + std::to_string(i + 1) + ": hit must be 0 or 1");
        out.emplace_back(detail::parse_i64(f[0], file, i + 1), static_cast<int>(hit));
    }
    return out;
}

inline std::vector<std::pair<UserId, int>> load_labels_csv(const std::filesystem::path& path) {
    const std::string file = path.string();
    const auto lines = detail::read_lines(path);
    if (lines.empty() || detail::split_csv(lines[0]) != std::vector<std::string>{"user_id", "group"})
        throw ValidationError(file + ": expected header user_id,group");
    std::vector<std::pair<UserId, int>> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = detail::split_csv(lines[i]);
        if (f.size() != 2)
            throw ValidationError(file + " line " + std::to_string(i + 1) + ": expected 2 fields");
        out.emplace_back(detail::parse_i64(f[0], file, i + 1),
                         static_cast<int>(detail::parse_i64(f[1], file, i + 1)));
    }
    return out;
}

}  // namespace mobfair
