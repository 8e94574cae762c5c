#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <unordered_map>
#include <vector>

#include "mobfair/metrics.hpp"
#include "mobfair/predictor.hpp"
#include "mobfair/synth.hpp"
#include "support/builders.hpp"

using namespace mobfair;

namespace {

// Histories built directly, bypassing worlds. counts must end up sorted by poi.
std::shared_ptr<const HistoryIndex> make_index(
    const std::map<UserId, std::vector<std::pair<PoiId, double>>>& entries) {
    auto idx = std::make_shared<HistoryIndex>();
    for (const auto& [user, counts] : entries) {
        UserHistory h;
        h.counts = counts;
        std::sort(h.counts.begin(), h.counts.end());
        for (const auto& [poi, c] : h.counts) h.total += c;
        idx->by_user.emplace(user, std::move(h));
    }
    return idx;
}

// Scores every poi the model knows about plus the user's own support, using
// the same blend arithmetic, with no candidate pruning.
std::vector<PoiId> full_vocab_oracle(const TrainedModel& m, UserId user, int k) {
    std::unordered_map<PoiId, double> sparse;
    const auto it = m.histories->by_user.find(user);
    if (it != m.histories->by_user.end() && !it->second.counts.empty())
        for (const auto& [poi, c] : it->second.counts)
            sparse.emplace(poi, c / it->second.total);

    const double rho = m.spec.blend_weight;
    std::vector<std::pair<PoiId, double>> scored;
    if (sparse.empty()) {
        for (const auto& [poi, count] : m.global_ranked)
            scored.emplace_back(poi, count / m.global_total);
    } else {
        for (const auto& [poi, mass] : sparse) {
            const auto g = m.global_share.find(poi);
            const double share = g == m.global_share.end() ? 0.0 : g->second;
            scored.emplace_back(poi, rho * mass + (1.0 - rho) * share);
        }
        for (const auto& [poi, count] : m.global_ranked) {
            if (sparse.count(poi)) continue;
            scored.emplace_back(poi, (1.0 - rho) * count / m.global_total);
        }
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<PoiId> out;
    for (const auto& [poi, s] : scored) {
        if (static_cast<int>(out.size()) == k) break;
        out.push_back(poi);
    }
    return out;
}

}  // namespace

TEST_CASE("history index counts pre-split visits only") {
    const World w = testworld::make_world(
        {{0.5, 0.5}}, {1.0}, {{0, 0}, {1, 0}, {2, 0}},
        {{0, 0, {{0, 1}, {0, 5}, {1, 9}, {2, 30}, {2, 31}}},
         {1, 0, {{1, 2}, {0, 40}}}},
        20, 20);
    const HistoryIndex idx = build_history_index(w);

    const UserHistory& h0 = idx.by_user.at(0);
    REQUIRE(h0.counts == std::vector<std::pair<PoiId, double>>{{0, 2.0}, {1, 1.0}});
    REQUIRE(h0.total == 3.0);
    const UserHistory& h1 = idx.by_user.at(1);
    REQUIRE(h1.counts == std::vector<std::pair<PoiId, double>>{{1, 1.0}});
    REQUIRE(h1.total == 1.0);
}

TEST_CASE("training on one user reproduces that user's histogram") {
    const auto idx = make_index({{7, {{4, 3.0}, {9, 1.0}, {2, 1.0}}}});
    PredictorSpec spec;
    const TrainedModel m = train(spec, idx, {7});

    REQUIRE(m.global_total == 5.0);
    REQUIRE(m.global_ranked ==
            std::vector<std::pair<PoiId, double>>{{4, 3.0}, {2, 1.0}, {9, 1.0}});
    REQUIRE(m.global_share.at(4) == 0.6);
    REQUIRE(m.global_share.at(2) == 0.2);
    REQUIRE(m.training_set.count(7) == 1);
}

TEST_CASE("training is invariant to the order of the user list") {
    const auto idx = make_index({{1, {{0, 2.0}, {3, 1.0}}},
                                 {2, {{3, 4.0}, {5, 1.0}}},
                                 {3, {{0, 1.0}}}});
    PredictorSpec spec;
    const TrainedModel a = train(spec, idx, {1, 2, 3});
    const TrainedModel b = train(spec, idx, {3, 1, 2});
    REQUIRE(a.global_ranked == b.global_ranked);
    REQUIRE(a.global_total == b.global_total);
    for (UserId u : {1, 2, 3, 99})
        REQUIRE(predict_top_k(a, u, 3) == predict_top_k(b, u, 3));
}

TEST_CASE("training rejects users without histories") {
    const auto idx = make_index({{1, {{0, 1.0}}}});
    PredictorSpec spec;
    REQUIRE_THROWS_WITH(train(spec, idx, {1, 5}),
                        Catch::Matchers::ContainsSubstring("no history"));
}

TEST_CASE("an untrained model predicts nothing") {
    const auto idx = make_index({{1, {{0, 1.0}}}});
    PredictorSpec spec;
    const TrainedModel m = train(spec, idx, {});
    REQUIRE(predict_top_k(m, 1, 5).empty());
}

TEST_CASE("pure personal blending ranks by own frequency") {
    const auto idx = make_index({{7, {{4, 3.0}, {9, 1.0}}}});
    PredictorSpec spec;
    spec.blend_weight = 1.0;
    const TrainedModel m = train(spec, idx, {7});
    REQUIRE(predict_top_k(m, 7, 2) == std::vector<PoiId>{4, 9});
}

TEST_CASE("pure global blending ignores personal history") {
    const auto idx = make_index({{1, {{0, 5.0}, {9, 1.0}}},
                                 {2, {{3, 4.0}}},
                                 {3, {{9, 1.0}, {3, 1.0}}},
                                 {4, {{9, 6.0}}}});
    PredictorSpec spec;
    spec.blend_weight = 0.0;
    const TrainedModel m = train(spec, idx, {1, 2, 3, 4});

    const auto global = detail::global_top_k(m, 4);
    for (UserId u : {1, 2, 3, 4, 777})
        REQUIRE(predict_top_k(m, u, 4) == global);
}

TEST_CASE("score ties break toward the lower poi id") {
    const auto idx = make_index({{1, {{7, 2.0}, {3, 2.0}}}});
    PredictorSpec spec;
    spec.blend_weight = 1.0;
    const TrainedModel m = train(spec, idx, {1});
    REQUIRE(predict_top_k(m, 1, 2) == std::vector<PoiId>{3, 7});
}

TEST_CASE("prediction size and argument validation") {
    const auto idx = make_index({{1, {{0, 1.0}, {1, 1.0}}}});
    PredictorSpec spec;
    const TrainedModel m = train(spec, idx, {1});
    REQUIRE_THROWS_AS(predict_top_k(m, 1, 0), ValidationError);

    const auto out = predict_top_k(m, 1, 50);
    REQUIRE(out.size() == 2);
    REQUIRE(std::set<PoiId>(out.begin(), out.end()).size() == out.size());
}

TEST_CASE("predictions are invariant to uniform count scaling") {
    const auto idx1 = make_index({{1, {{0, 3.0}, {4, 1.0}}}, {2, {{4, 2.0}, {8, 2.0}}}});
    const auto idx5 = make_index({{1, {{0, 15.0}, {4, 5.0}}}, {2, {{4, 10.0}, {8, 10.0}}}});
    PredictorSpec spec;
    const TrainedModel m1 = train(spec, idx1, {1, 2});
    const TrainedModel m5 = train(spec, idx5, {1, 2});
    for (UserId u : {1, 2, 9}) REQUIRE(predict_top_k(m1, u, 3) == predict_top_k(m5, u, 3));
}

TEST_CASE("candidate pruning never changes the ranking") {
    Rng rng = make_rng(555);
    const double rhos[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (int inst = 0; inst < 30; ++inst) {
        const std::size_t n_users = 3 + uniform_index(rng, 10);
        const std::size_t n_pois = 5 + uniform_index(rng, 28);
        std::map<UserId, std::vector<std::pair<PoiId, double>>> entries;
        for (std::size_t u = 0; u < n_users; ++u) {
            std::map<PoiId, double> hist;
            const std::size_t n_visits = 1 + uniform_index(rng, 8);
            for (std::size_t v = 0; v < n_visits; ++v)
                hist[static_cast<PoiId>(uniform_index(rng, n_pois))] += 1.0;
            entries[static_cast<UserId>(u)].assign(hist.begin(), hist.end());
        }
        const auto idx = make_index(entries);

        PredictorSpec spec;
        spec.blend_weight = rhos[uniform_index(rng, 5)];
        std::vector<UserId> users;
        for (std::size_t u = 0; u < n_users; ++u)
            if (uniform_real(rng) < 0.7) users.push_back(static_cast<UserId>(u));
        if (users.empty()) users.push_back(0);
        const TrainedModel m = train(spec, idx, users);

        const int k = 1 + static_cast<int>(uniform_index(rng, 6));
        INFO("instance " << inst << " rho=" << spec.blend_weight << " k=" << k);
        for (std::size_t u = 0; u < n_users; ++u)
            REQUIRE(predict_top_k(m, static_cast<UserId>(u), k) ==
                    full_vocab_oracle(m, static_cast<UserId>(u), k));
    }
}

TEST_CASE("covisit neighbors carry their frequency ranking") {
    // B shares A's poi set exactly; with one neighbor and full neighbor
    // weight, B inherits A's ordering.
    const auto idx = make_index({{1, {{1, 3.0}, {2, 1.0}}},
                                 {2, {{1, 1.0}, {2, 1.0}}}});
    PredictorSpec spec;
    spec.kind = PredictorKind::covisit_knn;
    spec.blend_weight = 1.0;
    spec.n_neighbors = 1;
    const TrainedModel m = train(spec, idx, {1});
    REQUIRE(predict_top_k(m, 2, 2) == std::vector<PoiId>{1, 2});
}

TEST_CASE("covisit never counts a user as their own neighbor") {
    const auto idx = make_index({{1, {{1, 3.0}, {2, 1.0}}},
                                 {3, {{2, 2.0}, {3, 1.0}}}});
    PredictorSpec spec;
    spec.kind = PredictorKind::covisit_knn;
    spec.blend_weight = 1.0;
    const TrainedModel m = train(spec, idx, {1, 3});
    // User 1's only other-user neighbor is 3 (shared poi 2).
    REQUIRE(predict_top_k(m, 1, 2) == std::vector<PoiId>{2, 3});
}

TEST_CASE("covisit falls back to global popularity") {
    const auto idx = make_index({{1, {{1, 3.0}, {2, 1.0}}},
                                 {9, {{40, 2.0}}}});
    PredictorSpec spec;
    spec.kind = PredictorKind::covisit_knn;
    const TrainedModel m = train(spec, idx, {1});
    const auto global = detail::global_top_k(m, 2);

    SECTION("unknown user") { REQUIRE(predict_top_k(m, 123, 2) == global); }
    SECTION("no candidate shares a poi") { REQUIRE(predict_top_k(m, 9, 2) == global); }
}

TEST_CASE("covisit keeps only the closest neighbors") {
    // Query user 5 overlaps user 1 (Jaccard 1) and user 2 (Jaccard 1/3).
    const auto idx = make_index({{1, {{1, 1.0}, {2, 1.0}}},
                                 {2, {{2, 1.0}, {6, 5.0}}},
                                 {5, {{1, 2.0}, {2, 1.0}}}});
    PredictorSpec spec;
    spec.kind = PredictorKind::covisit_knn;
    spec.blend_weight = 1.0;
    spec.n_neighbors = 1;
    const TrainedModel m = train(spec, idx, {1, 2});
    // Only user 1 survives the cut, so poi 6 cannot reach the top two.
    const auto out = predict_top_k(m, 5, 2);
    REQUIRE(out == std::vector<PoiId>{1, 2});
}

TEST_CASE("training mass from a group improves that group's accuracy") {
    SynthConfig cfg;
    cfg.n_groups = 2;
    cfg.n_regions = 4;
    cfg.n_pois = 150;
    cfg.n_users = 400;
    cfg.global_proportions = {0.75, 0.25};
    cfg.proportion_jitter = 0.2;
    cfg.group_affinity = 1.0;
    cfg.min_visits_per_user = 20;
    cfg.max_visits_per_user = 40;

    std::vector<double> diffs;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const SynthOutput out = generate_world(cfg, seed);
        const auto traj_by_user = trajectory_index(out.world);

        std::vector<UserId> group0, group1;
        for (std::size_t i = 0; i < out.world.trajectories.size(); ++i) {
            const UserId u = out.world.trajectories[i].user_id;
            (out.true_group_by_user[i] == 0 ? group0 : group1).push_back(u);
        }
        REQUIRE(group0.size() >= 150);
        REQUIRE(group1.size() >= 60);

        std::vector<UserId> train_a(group0.begin(), group0.begin() + 150);
        std::vector<UserId> train_b = train_a;
        train_b.insert(train_b.end(), group1.begin(), group1.begin() + 50);
        const std::vector<UserId> held_out(group1.begin() + 50, group1.end());

        auto idx = std::make_shared<HistoryIndex>(build_history_index(out.world));
        PredictorSpec spec;
        const TrainedModel ma = train(spec, idx, train_a);
        const TrainedModel mb = train(spec, idx, train_b);

        double acc_a = 0.0, acc_b = 0.0;
        std::size_t n_eval = 0;
        for (UserId u : held_out) {
            const auto actual = eval_window_pois(*traj_by_user.at(u), out.world.split_time,
                                                 out.world.eval_window);
            if (actual.empty()) continue;
            ++n_eval;
            acc_a += acc_at_k(predict_top_k(ma, u, 10), actual, 10);
            acc_b += acc_at_k(predict_top_k(mb, u, 10), actual, 10);
        }
        REQUIRE(n_eval >= 20);
        diffs.push_back((acc_b - acc_a) / static_cast<double>(n_eval));
    }

    std::sort(diffs.begin(), diffs.end());
    REQUIRE(diffs[2] > 0.0);                 // median across the five seeds
    REQUIRE(diffs.front() >= -0.02);
}
