#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cmo/cache_sim.hpp"
#include "cmo/cost_model.hpp"
#include "cmo/geometry.hpp"
#include "oracle_lru.hpp"

using namespace cmo;

namespace {
MemRef rd(uint64_t a) { return {a, AccessKind::Read}; }
MemRef wr(uint64_t a) { return {a, AccessKind::Write}; }
}  // namespace

TEST_CASE("line_of maps addresses to lines and sets") {
    CacheGeometry g;  // 64B lines, 64 L1 sets
    auto a = line_of(0, g);
    CHECK(a.line_address == 0);
    CHECK(a.l1_set == 0);

    auto b = line_of(130, g);
    CHECK(b.line_address == 128);
    CHECK(b.l1_set == 2);

    auto c = line_of(64 * 64, g);
    CHECK(c.line_address == 4096);
    CHECK(c.l1_set == 0);  // wraps around the 64 sets
}

TEST_CASE("geometry validation") {
    CacheGeometry g;
    CHECK_NOTHROW(g.validate());
    CHECK(g.llc_lines_per_l1_set() == 2048);

    CacheGeometry bad = g;
    bad.line_size_bytes = 48;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = g;
    bad.llc_sets = 4;
    bad.llc_ways = 4;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("repeated access hits L1") {
    CacheSim sim;
    CHECK(sim.access(rd(0x1000)).level == HitLevel::Miss);
    CHECK(sim.access(rd(0x1000)).level == HitLevel::L1);
    CHECK(sim.access(rd(0x1010)).level == HitLevel::L1);  // same line
}

TEST_CASE("ninth line in an 8-way L1 set falls back to LLC") {
    CacheSim sim;
    const CacheGeometry& g = sim.geometry();
    const uint64_t stride = g.l1_sets * g.line_size_bytes;  // same L1 set
    for (int i = 0; i < 9; ++i) sim.access(rd(i * stride));
    auto out = sim.access(rd(0));  // evicted from L1, retained in 16-way LLC
    CHECK(out.level == HitLevel::LLC);
}

TEST_CASE("random traces match the brute-force LRU oracle") {
    // Small geometry stresses evictions and back-invalidation.
    CacheGeometry g;
    g.line_size_bytes = 64;
    g.l1_sets = 4;
    g.l1_ways = 2;
    g.llc_sets = 8;
    g.llc_ways = 4;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        CacheSim sim(g);
        cmo_test::LruOracle oracle(g);
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<uint64_t> addr(0, 64 * 64);
        for (int i = 0; i < 10000; ++i) {
            const uint64_t a = addr(rng);
            const bool write = rng() & 1;
            auto out = sim.access(write ? wr(a) : rd(a));
            auto expect = oracle.access(a);
            REQUIRE(out.level == expect);
        }
    }
}

TEST_CASE("inclusion: every L1-resident line is LLC-resident") {
    CacheGeometry g;
    g.l1_sets = 4;
    g.l1_ways = 2;
    g.llc_sets = 8;
    g.llc_ways = 2;
    CacheSim sim(g);
    std::mt19937_64 rng(7);
    for (int i = 0; i < 20000; ++i) {
        const uint64_t a = (rng() % 512) * g.line_size_bytes;
        sim.access(rng() & 1 ? wr(a) : rd(a));
        if (i % 100 == 0) {
            if (sim.resident_l1(a)) CHECK(sim.resident_llc(a));
        }
    }
}

TEST_CASE("transaction begin/end lifecycle") {
    CacheSim sim;
    sim.tx_begin();
    CHECK_THROWS_AS(sim.tx_begin(), std::logic_error);
    CHECK_THROWS_AS(sim.access(rd(0)), std::logic_error);
    sim.tx_access(rd(0));
    auto rec = sim.tx_end();
    CHECK(rec.accesses == 1);
    CHECK(rec.read_set_lines == 1);
    CHECK_THROWS_AS(sim.tx_access(rd(0)), std::logic_error);
    sim.tx_begin();  // re-begin after commit is fine
    sim.tx_end();
}

TEST_CASE("nine dirty lines in one 8-way L1 set abort the transaction") {
    CacheSim sim;
    const uint64_t stride = sim.geometry().l1_sets * sim.geometry().line_size_bytes;
    sim.tx_begin();
    AccessOutcome out;
    for (int i = 0; i < 9; ++i) out = sim.tx_access(wr(i * stride));
    CHECK(out.caused_abort());
    CHECK(out.abort_cause == AbortCause::DirtyL1Eviction);
    CHECK(sim.current_tx()->status == TxStatus::Aborted);
    CHECK_THROWS_AS(sim.tx_access(rd(0)), std::logic_error);
    CHECK_THROWS_AS(sim.tx_end(), std::logic_error);
}

TEST_CASE("read-only L1 replacement does not abort") {
    CacheSim sim;
    const CacheGeometry& g = sim.geometry();
    const uint64_t stride = g.l1_sets * g.line_size_bytes;
    // Make the lines LLC-resident first.
    for (int i = 0; i < 9; ++i) sim.access(rd(i * stride));
    sim.tx_begin();
    AccessOutcome out;
    for (int i = 0; i < 9; ++i) {
        out = sim.tx_access(rd(i * stride));
        CHECK_FALSE(out.caused_abort());
    }
    auto rec = sim.tx_end();
    CHECK(rec.read_set_lines == 9);
    CHECK(rec.misses == 0);
}

TEST_CASE("seventeen read lines in one 16-way LLC set abort the transaction") {
    CacheSim sim;
    const CacheGeometry& g = sim.geometry();
    const uint64_t stride = g.llc_sets * g.line_size_bytes;  // same LLC set
    sim.tx_begin();
    AccessOutcome out;
    for (int i = 0; i < 17; ++i) out = sim.tx_access(rd(i * stride));
    CHECK(out.caused_abort());
    CHECK(out.abort_cause == AbortCause::ReadsetExceedsLlc);
}

TEST_CASE("abort point is deterministic") {
    for (int run = 0; run < 3; ++run) {
        CacheSim sim;
        const uint64_t stride = sim.geometry().l1_sets * sim.geometry().line_size_bytes;
        sim.tx_begin();
        int abort_at = -1;
        for (int i = 0; i < 32 && abort_at < 0; ++i)
            if (sim.tx_access(wr(i * stride)).caused_abort()) abort_at = i;
        CHECK(abort_at == 8);
    }
}

TEST_CASE("read and write sets grow monotonically") {
    CacheSim sim;
    std::mt19937_64 rng(3);
    sim.tx_begin();
    uint64_t last_r = 0, last_w = 0;
    for (int i = 0; i < 200; ++i) {
        const uint64_t a = (rng() % 64) * 64;
        auto out = sim.tx_access(rng() & 1 ? wr(a) : rd(a));
        REQUIRE_FALSE(out.caused_abort());
        const TxContext* tx = sim.current_tx();
        CHECK(tx->read_set_size() >= last_r);
        CHECK(tx->write_set_size() >= last_w);
        last_r = tx->read_set_size();
        last_w = tx->write_set_size();
    }
    // A line is tracked once even when both read and written.
    CHECK(sim.current_tx()->read_set_size() <= 64);
}

TEST_CASE("cost model arithmetic") {
    CostModel m;  // defaults {1, 100, 200}
    TxTrace empty;
    CHECK(cost_of(empty, m) == 0);

    TxTrace one_tx;
    one_tx.push(events::TxBegin{1});
    one_tx.push(events::TxEnd{1, 10, 10, 0});
    CHECK(cost_of(one_tx, m) == 10 + 200);

    TxTrace retried;
    retried.push(events::TxBegin{1});
    retried.push(events::TxAbort{1, AbortCause::DirtyL1Eviction, 10, 0});
    retried.push(events::TxBegin{2});
    retried.push(events::TxEnd{2, 10, 10, 0});
    CHECK(cost_of(retried, m) == 2 * (10 + 200));
}

TEST_CASE("trace serialization and nesting checks") {
    TxTrace t;
    t.push(events::TxBegin{1});
    CHECK_THROWS_AS(t.validate_nesting(), std::runtime_error);
    t.push(events::TxEnd{1, 2, 2, 0});
    CHECK_NOTHROW(t.validate_nesting());

    std::ostringstream os;
    t.write_records(os);
    CHECK(os.str() == "tx_begin id=1\ntx_end id=1 accesses=2 hits=2 in_tx_misses=0\n");

    TxTrace bad;
    bad.push(events::TxBegin{1});
    bad.push(events::Preload{0, {}});
    bad.push(events::TxEnd{1, 0, 0, 0});
    CHECK_THROWS_AS(bad.validate_nesting(), std::runtime_error);
}

TEST_CASE("address run lists compress arithmetic sequences") {
    AddressRunList l;
    for (uint64_t a = 0; a < 10 * 64; a += 64) l.append(a);
    l.append(4096);
    l.append(100000);
    CHECK(l.size() == 12);
    CHECK(l.runs().size() <= 3);
    CHECK(l.at(0) == 0);
    CHECK(l.at(9) == 9 * 64);
    CHECK(l.at(11) == 100000);

    AddressRunList pages = l.projected(12);
    CHECK(pages.size() == 12);
    CHECK(pages.at(0) == 0);
    CHECK(pages.at(11) == 100000 >> 12);
}
