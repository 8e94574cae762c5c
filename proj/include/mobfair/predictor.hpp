#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mobfair/domain.hpp"

namespace mobfair {

enum class PredictorKind { freq_blend, covisit_knn };

struct PredictorSpec {
    PredictorKind kind = PredictorKind::freq_blend;
    double blend_weight = 0.5;   // rho: personal/neighbor term vs global popularity
    int n_neighbors = 10;        // covisit_knn only
    int k_predictions = 20;
};

inline void validate_predictor_spec(const PredictorSpec& s) {
    if (s.blend_weight < 0.0 || s.blend_weight > 1.0)
        throw ValidationError("predictor: blend_weight must be in [0,1]");
    if (s.n_neighbors < 1) throw ValidationError("predictor: n_neighbors must be >= 1");
    if (s.k_predictions < 1) throw ValidationError("predictor: k_predictions must be >= 1");
}

// A user's pre-split visit counts, sorted by POI id.
struct UserHistory {
    std::vector<std::pair<PoiId, double>> counts;
    double total = 0.0;
};

// Pre-split histories of every world user. Built once per world; models keep
// a shared reference. Evaluation-time personal signal comes from here, the
// learned statistics below never do.
struct HistoryIndex {
    std::unordered_map<UserId, UserHistory> by_user;
};

inline HistoryIndex build_history_index(const World& world) {
    HistoryIndex index;
    index.by_user.reserve(world.trajectories.size());
    std::unordered_map<PoiId, double> counts;
    for (const Trajectory& traj : world.trajectories) {
        counts.clear();
        for (const Visit& v : traj.visits)
            if (v.timestamp < world.split_time) counts[v.poi_id] += 1.0;
        UserHistory h;
        h.counts.assign(counts.begin(), counts.end());
        std::sort(h.counts.begin(), h.counts.end());
        for (const auto& [poi, c] : h.counts) h.total += c;
        index.by_user.emplace(traj.user_id, std::move(h));
    }
    return index;
}

struct TrainedModel {
    PredictorSpec spec;
    std::shared_ptr<const HistoryIndex> histories;
    std::unordered_set<UserId> training_set;
    // Global popularity over training users' pre-split visits.
    std::vector<std::pair<PoiId, double>> global_ranked;   // (count desc, id asc)
    std::unordered_map<PoiId, double> global_share;        // count / total
    double global_total = 0.0;
    // covisit_knn: POI -> training users who visited it (sorted).
    std::unordered_map<PoiId, std::vector<UserId>> users_by_poi;
};

inline TrainedModel train(const PredictorSpec& spec,
                          std::shared_ptr<const HistoryIndex> histories,
                          const std::vector<UserId>& training_users) {
    validate_predictor_spec(spec);
    TrainedModel m;
    m.spec = spec;
    m.histories = std::move(histories);

    std::vector<UserId> users = training_users;
    std::sort(users.begin(), users.end());
    std::unordered_map<PoiId, double> counts;
    for (UserId u : users) {
        const auto it = m.histories->by_user.find(u);
        if (it == m.histories->by_user.end())
            throw ValidationError("predictor: training user " + std::to_string(u) +
                                  " has no history entry");
        m.training_set.insert(u);
        for (const auto& [poi, c] : it->second.counts) {
            counts[poi] += c;
            m.global_total += c;
            if (spec.kind == PredictorKind::covisit_knn) {
                auto& list = m.users_by_poi[poi];
                if (list.empty() || list.back() != u) list.push_back(u);
            }
        }
    }
    m.global_ranked.assign(counts.begin(), counts.end());
    std::sort(m.global_ranked.begin(), m.global_ranked.end(),
              [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second > b.second;
                  return a.first < b.first;
              });
    if (m.global_total > 0.0)
        for (const auto& [poi, c] : counts) m.global_share.emplace(poi, c / m.global_total);
    return m;
}

inline TrainedModel train(const PredictorSpec& spec, const World& world,
                          const std::vector<UserId>& training_users) {
    return train(spec, std::make_shared<HistoryIndex>(build_history_index(world)),
                 training_users);
}

namespace detail {

inline std::vector<PoiId> rank_top_k(std::vector<std::pair<PoiId, double>>& scored, int k) {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<PoiId> out;
    out.reserve(std::min<std::size_t>(scored.size(), static_cast<std::size_t>(k)));
    for (const auto& [poi, score] : scored) {
        if (static_cast<int>(out.size()) == k) break;
        out.push_back(poi);
    }
    return out;
}

// Blend a sparse L1-normalized personal/neighbor term with global popularity
// and rank. Candidates: the sparse term's support plus enough of the global
// head that nothing outside can reach the top k.
inline std::vector<PoiId> blend_and_rank(const TrainedModel& m,
                                         const std::unordered_map<PoiId, double>& sparse,
                                         double rho, int k) {
    std::vector<std::pair<PoiId, double>> scored;
    scored.reserve(sparse.size() + static_cast<std::size_t>(k) + sparse.size());
    for (const auto& [poi, mass] : sparse) {
        const auto it = m.global_share.find(poi);
        const double g = it == m.global_share.end() ? 0.0 : it->second;
        scored.emplace_back(poi, rho * mass + (1.0 - rho) * g);
    }
    const std::size_t head = static_cast<std::size_t>(k) + sparse.size();
    for (std::size_t i = 0; i < m.global_ranked.size() && i < head; ++i) {
        const auto& [poi, count] = m.global_ranked[i];
        if (sparse.count(poi)) continue;
        scored.emplace_back(poi, (1.0 - rho) * count / m.global_total);
    }
    return rank_top_k(scored, k);
}

inline std::vector<PoiId> global_top_k(const TrainedModel& m, int k) {
    std::vector<PoiId> out;
    out.reserve(static_cast<std::size_t>(k));
    for (const auto& [poi, count] : m.global_ranked) {
        if (static_cast<int>(out.size()) == k) break;
        out.push_back(poi);
    }
    return out;
}

inline std::size_t sorted_intersection_size(const std::vector<PoiId>& a,
                                            const std::vector<PoiId>& b) {
    std::size_t i = 0, j = 0, n = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) ++i;
        else if (b[j] < a[i]) ++j;
        else { ++n; ++i; ++j; }
    }
    return n;
}

inline std::vector<PoiId> covisit_predict(const TrainedModel& m, UserId user,
                                          const UserHistory* history, int k) {
    if (history == nullptr || history->counts.empty()) return global_top_k(m, k);

    std::vector<PoiId> query;
    query.reserve(history->counts.size());
    for (const auto& [poi, c] : history->counts) query.push_back(poi);

    std::unordered_set<UserId> seen;
    std::vector<UserId> candidates;
    for (PoiId p : query) {
        const auto it = m.users_by_poi.find(p);
        if (it == m.users_by_poi.end()) continue;
        for (UserId v : it->second) {
            if (v == user) continue;   // never your own neighbor
            if (seen.insert(v).second) candidates.push_back(v);
        }
    }
    if (candidates.empty()) return global_top_k(m, k);
    std::sort(candidates.begin(), candidates.end());

    std::vector<std::pair<double, UserId>> sims;
    sims.reserve(candidates.size());
    for (UserId v : candidates) {
        const UserHistory& hv = m.histories->by_user.at(v);
        std::vector<PoiId> sv;
        sv.reserve(hv.counts.size());
        for (const auto& [poi, c] : hv.counts) sv.push_back(poi);
        const std::size_t inter = sorted_intersection_size(query, sv);
        if (inter == 0) continue;
        const double uni = static_cast<double>(query.size() + sv.size() - inter);
        sims.emplace_back(static_cast<double>(inter) / uni, v);
    }
    if (sims.empty()) return global_top_k(m, k);
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    if (static_cast<int>(sims.size()) > m.spec.n_neighbors)
        sims.resize(static_cast<std::size_t>(m.spec.n_neighbors));

    // Similarity-weighted neighbor frequencies, L1-normalized.
    std::unordered_map<PoiId, double> neighbor_term;
    double mass = 0.0;
    for (const auto& [sim, v] : sims) {
        const UserHistory& hv = m.histories->by_user.at(v);
        for (const auto& [poi, c] : hv.counts) {
            const double w = sim * c / hv.total;
            neighbor_term[poi] += w;
            mass += w;
        }
    }
    if (mass > 0.0)
        for (auto& [poi, w] : neighbor_term) w /= mass;
    return blend_and_rank(m, neighbor_term, m.spec.blend_weight, k);
}

}  // namespace detail

// Ranked top-k POI predictions. Deterministic; score ties break toward the
// lower POI id. Users with empty or unknown histories fall back to global
// popularity alone; an untrained model predicts nothing.
inline std::vector<PoiId> predict_top_k(const TrainedModel& m, UserId user, int k) {
    if (k < 1) throw ValidationError("predictor: k must be >= 1");
    if (m.training_set.empty() || m.global_total <= 0.0) return {};

    const auto it = m.histories->by_user.find(user);
    const UserHistory* history =
        it == m.histories->by_user.end() || it->second.counts.empty() ? nullptr : &it->second;

    if (m.spec.kind == PredictorKind::covisit_knn)
        return detail::covisit_predict(m, user, history, k);

    if (history == nullptr) return detail::global_top_k(m, k);
    std::unordered_map<PoiId, double> personal;
    personal.reserve(history->counts.size());
    for (const auto& [poi, c] : history->counts) personal.emplace(poi, c / history->total);
    return detail::blend_and_rank(m, personal, m.spec.blend_weight, k);
}

inline std::vector<PoiId> predict_top_k(const TrainedModel& m, UserId user) {
    return predict_top_k(m, user, m.spec.k_predictions);
}

}  // namespace mobfair
