#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mobfair/metrics.hpp"
#include "mobfair/rng.hpp"
#include "support/builders.hpp"

using namespace mobfair;

TEST_CASE("eval window is half-open on both ends") {
    Trajectory t;
    t.user_id = 0;
    t.visits = {{0, 10, 99}, {0, 11, 100}, {0, 12, 149}, {0, 13, 150}};
    const auto pois = eval_window_pois(t, 100, 50);
    REQUIRE(pois == std::unordered_set<PoiId>{11, 12});
}

TEST_CASE("acc_at_k is intersection emptiness over the prediction list") {
    REQUIRE(acc_at_k({1, 2, 3}, {3}, 5) == 1);
    REQUIRE(acc_at_k({1, 2, 3}, {9}, 5) == 0);
    REQUIRE(acc_at_k({}, {9}, 5) == 0);
    REQUIRE_THROWS_AS(acc_at_k({1, 2, 3}, {1}, 2), ValidationError);

    // Every subset of a 5-poi universe as the actual set, vs a fixed list.
    const std::vector<PoiId> predicted{0, 3};
    for (unsigned mask = 0; mask < 32; ++mask) {
        std::unordered_set<PoiId> actual;
        for (PoiId p = 0; p < 5; ++p)
            if (mask & (1u << p)) actual.insert(p);
        const int expect = (actual.count(0) || actual.count(3)) ? 1 : 0;
        REQUIRE(acc_at_k(predicted, actual, 2) == expect);
    }
}

TEST_CASE("compute_hits scores exactly the users with eval activity") {
    const World w = testworld::make_world(
        {{0.5, 0.5}, {0.5, 0.5}}, {1.0, 2.0}, {{0, 0}, {1, 0}, {2, 1}},
        {{0, 0, {{0, 1}, {1, 95}}},       // eval visit to poi 1
         {1, 1, {{2, 2}, {2, 96}}},       // eval visit to poi 2
         {2, 0, {{1, 3}, {1, 50}}}},      // nothing in the eval window
        90, 10);

    std::unordered_map<UserId, std::vector<PoiId>> canned{
        {0, {1, 0}}, {1, {0, 1}}, {2, {0, 1}}};
    const auto predict = [&](UserId u, int) { return canned.at(u); };

    const auto hits = compute_hits(w, predict, 2);
    REQUIRE(hits.size() == 2);
    REQUIRE(hits[0].user_id == 0);
    REQUIRE(hits[0].region_id == 0);
    REQUIRE(hits[0].hit == 1);
    REQUIRE(hits[1].user_id == 1);
    REQUIRE(hits[1].region_id == 1);
    REQUIRE(hits[1].hit == 0);

    REQUIRE_THROWS_AS(compute_hits(w, predict, 0), ValidationError);
    REQUIRE(overall_accuracy(hits) == 0.5);
    REQUIRE(overall_accuracy({}) == 0.0);
}

TEST_CASE("region accuracies aggregate hits by home region, sorted") {
    const std::vector<UserHit> hits{
        {0, 5, 1}, {1, 5, 0}, {2, 2, 1}, {3, 2, 1}, {4, 2, 1}};
    const auto acc = region_accuracies(hits);
    REQUIRE(acc.size() == 2);
    REQUIRE(acc[0].region_id == 2);
    REQUIRE(acc[0].a_r == 1.0);
    REQUIRE(acc[0].n_r == 3);
    REQUIRE(acc[1].region_id == 5);
    REQUIRE(acc[1].a_r == 0.5);
    REQUIRE(acc[1].n_r == 2);
}

TEST_CASE("region accuracies match a direct tally on random hit lists") {
    Rng rng = make_rng(60);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<UserHit> hits;
        std::map<RegionId, std::pair<double, std::size_t>> tally;
        const std::size_t n = 1 + uniform_index(rng, 40);
        for (std::size_t i = 0; i < n; ++i) {
            const RegionId r = static_cast<RegionId>(uniform_index(rng, 5));
            const int hit = uniform_real(rng) < 0.5 ? 1 : 0;
            hits.push_back({static_cast<UserId>(i), r, hit});
            tally[r].first += hit;
            tally[r].second += 1;
        }
        const auto acc = region_accuracies(hits);
        REQUIRE(acc.size() == tally.size());
        std::size_t i = 0;
        for (const auto& [r, cell] : tally) {
            REQUIRE(acc[i].region_id == r);
            REQUIRE(acc[i].n_r == cell.second);
            REQUIRE(acc[i].a_r == cell.first / static_cast<double>(cell.second));
            ++i;
        }
    }
}

TEST_CASE("pairwise variation sums absolute gaps") {
    SECTION("reference points") {
        REQUIRE_THAT(tdpv({0.390, 0.355, 0.346, 0.335}),
                     Catch::Matchers::WithinAbs(0.174, 1e-9));
        REQUIRE_THAT(tdpv({0.383, 0.359, 0.353, 0.351}),
                     Catch::Matchers::WithinAbs(0.102, 1e-9));
    }
    SECTION("degenerate and invalid input") {
        REQUIRE(tdpv({0.7, 0.7, 0.7}) == 0.0);
        REQUIRE(tdpv({0.25, 0.75}) == 0.5);
        REQUIRE_THROWS_AS(tdpv({0.5}), ValidationError);
    }
    SECTION("permutation and translation invariance") {
        std::vector<double> z{0.12, 0.47, 0.31, 0.255};
        const double base = tdpv(z);
        std::sort(z.begin(), z.end());
        do {
            REQUIRE_THAT(tdpv(z), Catch::Matchers::WithinAbs(base, 1e-12));
        } while (std::next_permutation(z.begin(), z.end()));

        std::vector<double> shifted;
        for (double v : z) shifted.push_back(v + 0.2);
        REQUIRE_THAT(tdpv(shifted), Catch::Matchers::WithinAbs(base, 1e-12));
    }
    SECTION("bounded below by the extreme gap") {
        REQUIRE_THAT(tdpv({0.1, 0.2, 0.3}), Catch::Matchers::WithinAbs(0.4, 1e-12));
        REQUIRE(tdpv({0.1, 0.2, 0.3}) > 0.3 - 0.1);
    }
}

TEST_CASE("census-prior group accuracy on the two-region example") {
    const std::vector<RegionAccuracy> acc{{1, 0.5, 10}, {2, 0.3, 10}};
    const std::vector<Region> regions{{1, 1.0, {0.8, 0.2}}, {2, 1.0, {0.2, 0.8}}};
    const auto rep = group_accuracy(acc, regions);
    REQUIRE_THAT(rep.z[0], Catch::Matchers::WithinAbs(0.46, 1e-12));
    REQUIRE_THAT(rep.z[1], Catch::Matchers::WithinAbs(0.34, 1e-12));
    REQUIRE(rep.defined == std::vector<bool>{true, true});
    REQUIRE_THAT(rep.tdpv, Catch::Matchers::WithinAbs(0.12, 1e-12));
}

TEST_CASE("single-region audits collapse to that region's accuracy") {
    const std::vector<RegionAccuracy> acc{{0, 0.42, 25}};
    const std::vector<Region> regions{{0, 1.0, {0.6, 0.3, 0.1}}};
    const auto rep = group_accuracy(acc, regions);
    for (std::size_t g = 0; g < 3; ++g) {
        REQUIRE(rep.defined[g]);
        REQUIRE_THAT(rep.z[g], Catch::Matchers::WithinAbs(0.42, 1e-12));
    }
}

TEST_CASE("groups with no census mass are flagged undefined") {
    const std::vector<RegionAccuracy> acc{{0, 0.9, 10}, {1, 0.1, 10}};
    const std::vector<Region> regions{{0, 1.0, {0.5, 0.5, 0.0}},
                                      {1, 1.0, {0.5, 0.5, 0.0}}};
    const auto rep = group_accuracy(acc, regions);
    REQUIRE(rep.defined == std::vector<bool>{true, true, false});
    REQUIRE(rep.tdpv_defined);
    REQUIRE_THAT(rep.tdpv, Catch::Matchers::WithinAbs(0.0, 1e-12));   // z0 == z1 = 0.5
}

TEST_CASE("group accuracy rejects or ignores pathological regions") {
    const std::vector<Region> regions{{0, 1.0, {0.5, 0.5}}};
    REQUIRE_THROWS_WITH(group_accuracy({{7, 0.5, 10}}, regions),
                        Catch::Matchers::ContainsSubstring("unknown region 7"));
    REQUIRE_THROWS_AS(group_accuracy({{0, 0.5, 10}}, {}), ValidationError);

    // A region with zero scored users adds nothing.
    const auto with = group_accuracy({{0, 0.5, 10}, {0, 0.9, 0}}, regions);
    const auto without = group_accuracy({{0, 0.5, 10}}, regions);
    REQUIRE(with.z == without.z);
}

TEST_CASE("census-prior accuracy stays inside the region accuracy range") {
    Rng rng = make_rng(909);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t R = 1 + uniform_index(rng, 8);
        const std::size_t G = 2 + uniform_index(rng, 4);
        std::vector<Region> regions;
        std::vector<RegionAccuracy> acc;
        double lo = 1.0, hi = 0.0;
        for (std::size_t r = 0; r < R; ++r) {
            std::vector<double> p(G);
            double s = 0.0;
            for (double& v : p) s += (v = 0.05 + uniform_real(rng));
            for (double& v : p) v /= s;
            regions.push_back({static_cast<RegionId>(r), 1.0, p});
            const double a = uniform_real(rng);
            lo = std::min(lo, a);
            hi = std::max(hi, a);
            acc.push_back({static_cast<RegionId>(r), a, 1 + uniform_index(rng, 50)});
        }
        const auto rep = group_accuracy(acc, regions);
        for (std::size_t g = 0; g < G; ++g) {
            REQUIRE(rep.defined[g]);
            REQUIRE(rep.z[g] >= lo - 1e-12);
            REQUIRE(rep.z[g] <= hi + 1e-12);
        }
    }
}

TEST_CASE("per-user group accuracy averages hits within labels") {
    SECTION("basic split") {
        const auto rep = group_accuracy_direct({1, 1, 0, 0}, {0, 1, 0, 1}, 2);
        REQUIRE(rep.z == std::vector<double>{0.5, 0.5});
        REQUIRE(rep.tdpv == 0.0);
        REQUIRE(rep.N == std::vector<double>{2.0, 2.0});
    }
    SECTION("negative labels are excluded") {
        const auto rep = group_accuracy_direct({1, 1, 0, 0}, {0, -1, 1, -1}, 2);
        REQUIRE(rep.z == std::vector<double>{1.0, 0.0});
        REQUIRE(rep.N == std::vector<double>{1.0, 1.0});
    }
    SECTION("an unrepresented group is undefined") {
        const auto rep = group_accuracy_direct({1, 0}, {0, 1}, 3);
        REQUIRE(rep.defined == std::vector<bool>{true, true, false});
        REQUIRE(rep.tdpv_defined);
        REQUIRE(rep.tdpv == 1.0);
    }
    SECTION("validation") {
        REQUIRE_THROWS_AS(group_accuracy_direct({1}, {0, 1}, 2), ValidationError);
        REQUIRE_THROWS_AS(group_accuracy_direct({1, 0}, {0, 2}, 2), ValidationError);
    }
}

TEST_CASE("one-hot regions make both accuracy paths agree") {
    // Regions fully owned by one group each: the census reweighting reduces
    // to per-label averaging.
    const std::vector<Region> regions{{0, 1.0, {1.0, 0.0}}, {1, 1.0, {0.0, 1.0}}};
    Rng rng = make_rng(31337);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<UserHit> hits;
        std::vector<int> flat_hits, labels;
        for (std::size_t i = 0; i < 30; ++i) {
            const RegionId r = static_cast<RegionId>(uniform_index(rng, 2));
            const int hit = uniform_real(rng) < 0.6 ? 1 : 0;
            hits.push_back({static_cast<UserId>(i), r, hit});
            flat_hits.push_back(hit);
            labels.push_back(static_cast<int>(r));
        }
        const auto census = group_accuracy(region_accuracies(hits), regions);
        const auto direct = group_accuracy_direct(flat_hits, labels, 2);
        for (std::size_t g = 0; g < 2; ++g) {
            REQUIRE(census.defined[g] == direct.defined[g]);
            if (census.defined[g])
                REQUIRE_THAT(census.z[g], Catch::Matchers::WithinAbs(direct.z[g], 1e-12));
        }
    }
}

TEST_CASE("region disparity is population-weighted accuracy variance") {
    REQUIRE_THAT(region_disparity_score({0.4, 0.2}, 100.0),
                 Catch::Matchers::WithinAbs(1.0, 1e-9));
    REQUIRE(region_disparity_score({0.5, 0.5, 0.5}, 10.0) == 0.0);
    REQUIRE(region_disparity_score({0.7}, 10.0) == 0.0);
    REQUIRE(region_disparity_score({}, 10.0) == 0.0);

    Rng rng = make_rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t G = 2 + uniform_index(rng, 4);
        std::vector<double> z(G);
        for (double& v : z) v = uniform_real(rng);
        const double w = 50.0 * uniform_real(rng);

        double mean = 0.0;
        for (double v : z) mean += v;
        mean /= static_cast<double>(G);
        double var = 0.0;
        for (double v : z) var += (v - mean) * (v - mean);
        var /= static_cast<double>(G);
        REQUIRE_THAT(region_disparity_score(z, w),
                     Catch::Matchers::WithinAbs(var * w, 1e-12));
    }
}
