#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "cmo/algorithms.hpp"

using namespace cmo;

namespace {

Dataset random_dataset(uint64_t n, uint64_t seed) {
    Dataset d;
    d.values.resize(n);
    std::mt19937_64 rng(seed);
    for (auto& v : d.values) v = static_cast<int64_t>(rng() % 100000);
    return d;
}

Dataset sorted_dataset(uint64_t n, uint64_t seed) {
    Dataset d = random_dataset(n, seed);
    std::sort(d.values.begin(), d.values.end());
    return d;
}

const std::vector<AlgoMode> kAllModes = {AlgoMode::CmoDynamic, AlgoMode::CmoStatic,
                                         AlgoMode::ScanBaseline, AlgoMode::PlainUnprotected};

}  // namespace

// -- melbourne shuffle -------------------------------------------------------

TEST_CASE("mshuffle applies the paper example") {
    // mshuffle({x,y,z},{1,0,2}) = {y,x,z}
    Dataset d;
    d.values = {111, 222, 333};  // x, y, z
    Permutation p;
    p.mapping = {1, 0, 2};
    SimContext sim;
    TxTrace trace;
    Dataset out = melbourne_shuffle(sim, trace, d, p, AlgoMode::CmoDynamic, 1);
    CHECK(out.values == std::vector<int64_t>{222, 111, 333});
    trace.validate_nesting();
}

TEST_CASE("identity permutation returns the input") {
    Dataset d = random_dataset(100, 3);
    SimContext sim;
    TxTrace trace;
    Dataset out =
        melbourne_shuffle(sim, trace, d, Permutation::identity(100), AlgoMode::CmoDynamic, 7);
    CHECK(out.values == d.values);
}

TEST_CASE("random permutations match the direct scatter oracle") {
    std::mt19937_64 rng(99);
    for (int round = 0; round < 200; ++round) {
        const uint64_t n = 256;
        Dataset d = random_dataset(n, rng());
        Permutation p = Permutation::random(n, rng());
        SimContext sim;
        TxTrace trace;
        Dataset out = melbourne_shuffle(sim, trace, d, p, AlgoMode::CmoDynamic, rng());
        std::vector<int64_t> expect(n);
        for (uint64_t i = 0; i < n; ++i) expect[p.mapping[i]] = d.values[i];
        REQUIRE(out.values == expect);
        REQUIRE(trace.abort_count() == 0);
    }
}

TEST_CASE("shuffle modes agree") {
    Dataset d = random_dataset(144, 5);
    Permutation p = Permutation::random(144, 6);
    std::vector<std::vector<int64_t>> results;
    for (AlgoMode m : kAllModes) {
        SimContext sim;
        TxTrace trace;
        results.push_back(melbourne_shuffle(sim, trace, d, p, m, 17).values);
    }
    for (size_t i = 1; i < results.size(); ++i) CHECK(results[i] == results[0]);
}

TEST_CASE("undersized bucket capacity exhausts retries") {
    Dataset d = random_dataset(64, 8);
    Permutation p = Permutation::random(64, 9);
    AlgoConfig cfg;
    cfg.shuffle_pad_factor = 0.5;  // capacity below sqrt(N): every attempt overflows
    cfg.retry_cap = 3;
    SimContext sim;
    TxTrace trace;
    CHECK_THROWS_AS(melbourne_shuffle(sim, trace, d, p, AlgoMode::CmoDynamic, 1, cfg),
                    OverflowError);
}

// -- oblivious merge sort ----------------------------------------------------

TEST_CASE("already-sorted input is unchanged") {
    Dataset d = sorted_dataset(256, 11);
    SimContext sim;
    TxTrace trace;
    Dataset out = oblivious_merge_sort(sim, trace, d, AlgoMode::CmoDynamic, 21);
    CHECK(out.values == d.values);
}

TEST_CASE("reverse-sorted input sorts and preserves the multiset") {
    Dataset d;
    d.values.resize(1024);
    for (int i = 0; i < 1024; ++i) d.values[i] = 1024 - i;
    SimContext sim;
    TxTrace trace;
    Dataset out = oblivious_merge_sort(sim, trace, d, AlgoMode::CmoDynamic, 33);
    std::vector<int64_t> expect = d.values;
    std::sort(expect.begin(), expect.end());
    CHECK(out.values == expect);
    CHECK(trace.abort_count() == 0);
}

TEST_CASE("merge sort modes agree on random inputs") {
    std::mt19937_64 rng(123);
    for (int round = 0; round < 20; ++round) {
        Dataset d = random_dataset(100 + rng() % 400, rng());
        std::vector<int64_t> expect = d.values;
        std::sort(expect.begin(), expect.end());
        for (AlgoMode m : kAllModes) {
            SimContext sim;
            TxTrace trace;
            Dataset out = oblivious_merge_sort(sim, trace, d, m, 5);
            REQUIRE(out.values == expect);
        }
    }
}

TEST_CASE("merge sort beyond its stash bound is infeasible") {
    Dataset d = random_dataset(1 << 15, 2);
    SimContext sim;
    TxTrace trace;
    CHECK_THROWS_AS(oblivious_merge_sort(sim, trace, d, AlgoMode::CmoDynamic, 3),
                    InfeasibleError);
}

TEST_CASE("merge sort at the documented upper bound stays feasible") {
    Dataset d = random_dataset(1 << 14, 4);
    SimContext sim;
    TxTrace trace;
    Dataset out = oblivious_merge_sort(sim, trace, d, AlgoMode::CmoDynamic, 5);
    CHECK(std::is_sorted(out.values.begin(), out.values.end()));
    CHECK(trace.abort_count() == 0);
}

// -- streaming binary search -------------------------------------------------

TEST_CASE("empty query stream yields an empty result") {
    Dataset data = sorted_dataset(64, 1);
    Dataset queries;
    SimContext sim;
    TxTrace trace;
    auto r = streaming_binary_search(sim, trace, data, queries, AlgoMode::CmoDynamic);
    CHECK(r.empty());
}

TEST_CASE("query equal to the first element finds index 0") {
    Dataset data = sorted_dataset(64, 2);
    Dataset queries;
    queries.values = {data.values[0]};
    SimContext sim;
    TxTrace trace;
    auto r = streaming_binary_search(sim, trace, data, queries, AlgoMode::CmoDynamic);
    REQUIRE(r.size() == 1);
    CHECK(r[0] == 0);
}

TEST_CASE("random queries match the linear-scan oracle") {
    Dataset data = sorted_dataset(4096, 3);
    Dataset queries = random_dataset(10000, 4);
    SimContext sim;
    TxTrace trace;
    auto r = streaming_binary_search(sim, trace, data, queries, AlgoMode::CmoDynamic);
    REQUIRE(r.size() == queries.size());
    for (uint64_t j = 0; j < queries.size(); ++j) {
        int64_t expect = -1;
        for (uint64_t i = 0; i < data.size(); ++i)
            if (data.values[i] == queries.values[j]) {
                expect = static_cast<int64_t>(i);
                break;
            }
        REQUIRE(r[j] == expect);
    }
    CHECK(trace.abort_count() == 0);
}

TEST_CASE("binary search modes agree") {
    Dataset data = sorted_dataset(512, 5);
    Dataset queries = random_dataset(200, 6);
    std::vector<std::vector<int64_t>> results;
    for (AlgoMode m : kAllModes) {
        SimContext sim;
        TxTrace trace;
        results.push_back(streaming_binary_search(sim, trace, data, queries, m));
    }
    for (size_t i = 1; i < results.size(); ++i) CHECK(results[i] == results[0]);
}

// -- k-means -----------------------------------------------------------------

TEST_CASE("k=1 centroid is the arithmetic mean after one iteration") {
    PointSet ps;
    ps.dims = 2;
    ps.coords = {0, 0, 2, 2, 4, 1};
    SimContext sim;
    TxTrace trace;
    auto r = kmeans(sim, trace, ps, 1, 1, AlgoMode::CmoDynamic, 7);
    CHECK(r.centroids[0] == 2.0);
    CHECK(r.centroids[1] == 1.0);
}

TEST_CASE("two well-separated clusters recover their means") {
    PointSet ps;
    ps.dims = 2;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> noise(-0.5, 0.5);
    for (int i = 0; i < 64; ++i) {
        ps.coords.push_back(0.0 + noise(rng));
        ps.coords.push_back(0.0 + noise(rng));
    }
    for (int i = 0; i < 64; ++i) {
        ps.coords.push_back(100.0 + noise(rng));
        ps.coords.push_back(100.0 + noise(rng));
    }
    SimContext sim;
    TxTrace trace;
    auto r = kmeans(sim, trace, ps, 2, 10, AlgoMode::CmoDynamic, 3);

    // Reference: means of the two clusters.
    double m0x = 0, m0y = 0, m1x = 0, m1y = 0;
    for (int i = 0; i < 64; ++i) {
        m0x += ps.coords[2 * i];
        m0y += ps.coords[2 * i + 1];
        m1x += ps.coords[128 + 2 * i];
        m1y += ps.coords[128 + 2 * i + 1];
    }
    m0x /= 64;
    m0y /= 64;
    m1x /= 64;
    m1y /= 64;
    const bool first_is_low = r.centroids[0] < 50;
    const double c0x = r.centroids[first_is_low ? 0 : 2], c0y = r.centroids[first_is_low ? 1 : 3];
    const double c1x = r.centroids[first_is_low ? 2 : 0], c1y = r.centroids[first_is_low ? 3 : 1];
    CHECK(std::abs(c0x - m0x) < 1e-9);
    CHECK(std::abs(c0y - m0y) < 1e-9);
    CHECK(std::abs(c1x - m1x) < 1e-9);
    CHECK(std::abs(c1y - m1y) < 1e-9);
}

TEST_CASE("cmo k-means output is bit-identical to the plain run") {
    std::mt19937_64 rng(29);
    for (int round = 0; round < 10; ++round) {
        PointSet ps;
        ps.dims = 3;
        const uint64_t n = 50 + rng() % 200;
        for (uint64_t i = 0; i < n * ps.dims; ++i)
            ps.coords.push_back(double(int64_t(rng() % 1000)) / 7.0);
        const uint64_t k = 1 + rng() % 8;
        const uint64_t seed = rng();

        std::vector<KmeansResult> results;
        for (AlgoMode m : kAllModes) {
            SimContext sim;
            TxTrace trace;
            results.push_back(kmeans(sim, trace, ps, k, 4, m, seed));
        }
        for (size_t i = 1; i < results.size(); ++i) {
            REQUIRE(results[i].centroids == results[0].centroids);  // bit-exact doubles
            REQUIRE(results[i].assignment == results[0].assignment);
        }
    }
}

TEST_CASE("k beyond the leaky capacity is infeasible") {
    PointSet ps;
    ps.dims = 2;
    for (int i = 0; i < 2000; ++i) {
        ps.coords.push_back(i);
        ps.coords.push_back(i);
    }
    SimContext sim;
    TxTrace trace;
    CHECK_THROWS_AS(kmeans(sim, trace, ps, 600, 1, AlgoMode::CmoDynamic, 1), InfeasibleError);
}

// -- sorting baselines -------------------------------------------------------

TEST_CASE("word-oblivious bubble sort sorts and matches the reference") {
    Dataset d = random_dataset(512, 31);
    SimContext sim;
    TxTrace trace;
    Dataset out = word_oblivious_sort(sim, trace, d);
    std::vector<int64_t> expect = d.values;
    std::sort(expect.begin(), expect.end());
    CHECK(out.values == expect);
}

TEST_CASE("bubble sort trace depends only on the input length") {
    auto run = [](uint64_t seed) {
        Dataset d = random_dataset(256, seed);
        SimContext sim;
        TxTrace trace;
        word_oblivious_sort(sim, trace, d);
        return trace;
    };
    const TxTrace t0 = run(1);
    for (uint64_t seed = 2; seed < 6; ++seed) CHECK(run(seed) == t0);
}

TEST_CASE("manual quicksort completes within the cache and fails beyond it") {
    {
        Dataset d = random_dataset(256, 41);  // 256 lines fit the 512-line L1
        SimContext sim;
        TxTrace trace;
        Dataset out = manual_quicksort(sim, trace, d);
        CHECK(std::is_sorted(out.values.begin(), out.values.end()));
        CHECK(trace.abort_count() == 0);
    }
    {
        Dataset d = random_dataset(4096, 42);  // beyond any feasible A2 allotment
        SimContext sim;
        TxTrace trace;
        CHECK_THROWS_AS(manual_quicksort(sim, trace, d), CannotCompleteError);
        CHECK(trace.abort_count() > 0);
    }
}

TEST_CASE("shuffle-then-quicksort sorts") {
    Dataset d = random_dataset(400, 51);
    SimContext sim;
    TxTrace trace;
    Dataset out = shuffle_then_quicksort(sim, trace, d, AlgoMode::CmoDynamic, 77);
    std::vector<int64_t> expect = d.values;
    std::sort(expect.begin(), expect.end());
    CHECK(out.values == expect);
}
