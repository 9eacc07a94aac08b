#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "runtime.hpp"

namespace cmo {

// ---------------------------------------------------------------------------
// Shared table/stream shims. Each algorithm core is a template over these,
// so every mode runs the identical value-level logic.
// ---------------------------------------------------------------------------
namespace detail {

template <typename T>
struct CmoTable {  // NobRW-backed random access
    NobRW<T>& h;
    T read_at(uint64_t i) { return h.read_at(i); }
    void write_at(uint64_t i, T v) { h.write_at(i, v); }
};

template <typename T>
struct CmoRoTable {  // NobRO-backed random access
    NobRO<T>& h;
    T read_at(uint64_t i) { return h.read_at(i); }
};

template <typename T>
struct CmoSeqIn {
    ObRO<T>& h;
    T next() { return h.read_next(); }
};

template <typename T>
struct CmoSeqOut {
    ObRW<T>& h;
    void next(T v) { h.write_next(v); }
};

template <typename T>
struct PlainTable {
    PlainScope& ps;
    PlainArray<T>& a;
    T read_at(uint64_t i) { return a.read(ps, i); }
    void write_at(uint64_t i, T v) { a.write(ps, i, v); }
};

template <typename T>
struct ScanTable {  // leaky accesses replaced by full-array scans
    PlainScope& ps;
    PlainArray<T>& a;
    T read_at(uint64_t i) { return a.scan_read(ps, i); }
    void write_at(uint64_t i, T v) { a.scan_write(ps, i, v); }
};

template <typename T>
struct PlainSeqIn {
    PlainScope& ps;
    PlainArray<T>& a;
    uint64_t i = 0;
    T next() { return a.read(ps, i++); }
};

template <typename T>
struct PlainSeqOut {
    PlainScope& ps;
    PlainArray<T>& a;
    uint64_t i = 0;
    void next(T v) { a.write(ps, i++, v); }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Streaming binary search
// ---------------------------------------------------------------------------
namespace detail {

/// Branchless search with a probe count that depends only on n: the loop
/// always runs ceil(log2(n)) halvings plus one verification probe.
template <class Tbl>
int64_t fixed_probe_search(Tbl&& data, uint64_t n, int64_t q) {
    uint64_t base = 0, len = n;
    while (len > 1) {
        const uint64_t half = len / 2;
        const int64_t v = data.read_at(base + half - 1);
        base += (v < q) ? half : 0;
        len -= half;
    }
    const int64_t v = data.read_at(base);
    return v == q ? static_cast<int64_t>(base) : -1;
}

template <class Tbl, class SeqIn, class SeqOut>
void search_core(Tbl&& data, uint64_t n, SeqIn&& queries, uint64_t q_count, SeqOut&& out) {
    for (uint64_t j = 0; j < q_count; ++j) {
        const int64_t q = queries.next();
        out.next(n == 0 ? -1 : fixed_probe_search(data, n, q));
    }
}

}  // namespace detail

/// Looks every query up in the sorted dataset. Returns the match index per
/// query or -1. The data array is the leaky table (NobRO); the query stream
/// and the result stream are sequential.
inline std::vector<int64_t> streaming_binary_search(SimContext& sim, TxTrace& trace,
                                                    const Dataset& data, const Dataset& queries,
                                                    AlgoMode mode, const AlgoConfig& cfg = {}) {
    const uint64_t n = data.size(), q = queries.size();
    std::vector<int64_t> result(q, -1);
    if (mode == AlgoMode::WordOblivious)
        throw std::invalid_argument("word_oblivious is defined only for sort");

    if (is_cmo(mode)) {
        LeakySection sec(sim, trace, cfg.policy_for(mode));
        auto h_data = sec.nob_ro(std::span<const int64_t>(data.values), data.record_bytes);
        auto h_q = sec.ob_ro(std::span<const int64_t>(queries.values), queries.record_bytes);
        auto h_out = sec.ob_rw(std::span<int64_t>(result), sizeof(int64_t));
        sec.begin_leaky();
        detail::search_core(detail::CmoRoTable<int64_t>{h_data}, n,
                            detail::CmoSeqIn<int64_t>{h_q}, q, detail::CmoSeqOut<int64_t>{h_out});
        sec.end_leaky();
        return result;
    }

    detail::PlainArray<int64_t> a_data(sim, data.values, data.record_bytes);
    detail::PlainArray<int64_t> a_q(sim, queries.values, queries.record_bytes);
    detail::PlainArray<int64_t> a_out(sim, result, sizeof(int64_t));
    PlainScope ps(sim, trace, "binary_search");
    if (mode == AlgoMode::ScanBaseline)
        detail::search_core(detail::ScanTable<int64_t>{ps, a_data}, n,
                            detail::PlainSeqIn<int64_t>{ps, a_q}, q,
                            detail::PlainSeqOut<int64_t>{ps, a_out});
    else
        detail::search_core(detail::PlainTable<int64_t>{ps, a_data}, n,
                            detail::PlainSeqIn<int64_t>{ps, a_q}, q,
                            detail::PlainSeqOut<int64_t>{ps, a_out});
    return result;
}

// ---------------------------------------------------------------------------
// K-means with a fixed iteration budget
// ---------------------------------------------------------------------------

struct PointRec {
    double c[8] = {};
};
static_assert(sizeof(PointRec) == 64);

struct AccRec {
    double sums[7] = {};
    int64_t count = 0;
};
static_assert(sizeof(AccRec) == 64);

struct KmeansResult {
    std::vector<double> centroids;  // k x dims, row-major
    std::vector<int64_t> assignment;
};

namespace detail {

inline double sq_dist(const PointRec& a, const PointRec& b, uint64_t dims) {
    double d = 0;
    for (uint64_t i = 0; i < dims; ++i) {
        const double t = a.c[i] - b.c[i];
        d += t * t;
    }
    return d;
}

/// One assignment-and-accumulate pass. Exactly k centroid probes per point
/// (ties to the lowest index), one accumulator read+write, one assignment
/// write.
template <class CentTbl, class AccTbl, class PtsIn, class AsgOut>
void kmeans_pass(CentTbl&& cent, AccTbl&& acc, PtsIn&& pts, AsgOut&& asg, uint64_t n,
                 uint64_t k, uint64_t dims) {
    for (uint64_t i = 0; i < n; ++i) {
        const PointRec p = pts.next();
        uint64_t best = 0;
        double best_d = sq_dist(p, cent.read_at(0), dims);
        for (uint64_t j = 1; j < k; ++j) {
            const double dj = sq_dist(p, cent.read_at(j), dims);
            const bool better = dj < best_d;
            best = better ? j : best;
            best_d = better ? dj : best_d;
        }
        AccRec a = acc.read_at(best);
        for (uint64_t d = 0; d < dims; ++d) a.sums[d] += p.c[d];
        a.count += 1;
        acc.write_at(best, a);
        asg.next(static_cast<int64_t>(best));
    }
}

}  // namespace detail

/// Fixed-iteration Lloyd clustering. Every iteration runs one leaky section:
/// the centroid array is the leaky read-only table, the accumulators the
/// leaky read-write table, points stream in and assignments stream out.
/// Empty clusters keep their previous centroid.
inline KmeansResult kmeans(SimContext& sim, TxTrace& trace, const PointSet& points, uint64_t k,
                           uint64_t iterations, AlgoMode mode, uint64_t seed,
                           const AlgoConfig& cfg = {}) {
    const uint64_t n = points.count(), dims = points.dims;
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (n == 0) throw std::invalid_argument("kmeans: no points");
    if (dims == 0 || dims > 7) throw std::invalid_argument("kmeans: dims must be in [1, 7]");
    if (mode == AlgoMode::WordOblivious)
        throw std::invalid_argument("word_oblivious is defined only for sort");

    std::vector<PointRec> pts(n);
    for (uint64_t i = 0; i < n; ++i)
        for (uint64_t d = 0; d < dims; ++d) pts[i].c[d] = points.coords[i * dims + d];

    // Seeded initial centroids: k distinct point indices.
    std::vector<PointRec> cent(k);
    {
        std::vector<uint64_t> idx(n);
        for (uint64_t i = 0; i < n; ++i) idx[i] = i;
        std::mt19937_64 rng(seed);
        for (uint64_t j = 0; j < k && j < n; ++j) std::swap(idx[j], idx[j + rng() % (n - j)]);
        for (uint64_t j = 0; j < k; ++j) cent[j] = pts[j < n ? idx[j] : 0];
    }
    std::vector<AccRec> acc(k);
    std::vector<int64_t> assignment(n, 0);

    detail::PlainArray<PointRec> a_pts(sim, pts, sizeof(PointRec));
    detail::PlainArray<PointRec> a_cent(sim, cent, sizeof(PointRec));
    detail::PlainArray<AccRec> a_acc(sim, acc, sizeof(AccRec));
    detail::PlainArray<int64_t> a_asg(sim, assignment, sizeof(int64_t));

    for (uint64_t it = 0; it < iterations; ++it) {
        std::fill(acc.begin(), acc.end(), AccRec{});
        if (is_cmo(mode)) {
            LeakySection sec(sim, trace, cfg.policy_for(mode));
            auto h_cent = sec.nob_ro(std::span<const PointRec>(cent), sizeof(PointRec),
                                     a_cent.base());
            auto h_acc = sec.nob_rw(std::span<AccRec>(acc), sizeof(AccRec), a_acc.base());
            auto h_pts = sec.ob_ro(std::span<const PointRec>(pts), sizeof(PointRec),
                                   a_pts.base());
            auto h_asg = sec.ob_rw(std::span<int64_t>(assignment), sizeof(int64_t),
                                   a_asg.base());
            sec.begin_leaky();
            detail::kmeans_pass(detail::CmoRoTable<PointRec>{h_cent},
                                detail::CmoTable<AccRec>{h_acc},
                                detail::CmoSeqIn<PointRec>{h_pts},
                                detail::CmoSeqOut<int64_t>{h_asg}, n, k, dims);
            sec.end_leaky();
        } else {
            PlainScope ps(sim, trace, "kmeans_pass");
            if (mode == AlgoMode::ScanBaseline)
                detail::kmeans_pass(detail::ScanTable<PointRec>{ps, a_cent},
                                    detail::ScanTable<AccRec>{ps, a_acc},
                                    detail::PlainSeqIn<PointRec>{ps, a_pts},
                                    detail::PlainSeqOut<int64_t>{ps, a_asg}, n, k, dims);
            else
                detail::kmeans_pass(detail::PlainTable<PointRec>{ps, a_cent},
                                    detail::PlainTable<AccRec>{ps, a_acc},
                                    detail::PlainSeqIn<PointRec>{ps, a_pts},
                                    detail::PlainSeqOut<int64_t>{ps, a_asg}, n, k, dims);
        }
        // Centroid update, sequential over k; empty clusters keep their
        // previous position (selected branchlessly).
        PlainScope ps(sim, trace, "centroid_update");
        for (uint64_t j = 0; j < k; ++j) {
            const AccRec a = a_acc.read(ps, j);
            PointRec cur = a_cent.read(ps, j);
            const bool empty = a.count == 0;
            for (uint64_t d = 0; d < dims; ++d) {
                const double mean = a.sums[d] / (empty ? 1.0 : double(a.count));
                cur.c[d] = empty ? cur.c[d] : mean;
            }
            a_cent.write(ps, j, cur);
        }
    }

    KmeansResult out;
    out.centroids.resize(k * dims);
    for (uint64_t j = 0; j < k; ++j)
        for (uint64_t d = 0; d < dims; ++d) out.centroids[j * dims + d] = cent[j].c[d];
    out.assignment = std::move(assignment);
    return out;
}

// ---------------------------------------------------------------------------
// Melbourne shuffle
// ---------------------------------------------------------------------------

struct ShuffleNode {
    int64_t value = 0;
    int64_t dest = 0;
    int64_t next = -1;
    int64_t tag = 0;  // 1 = real record, 0 = dummy
};
static_assert(sizeof(ShuffleNode) == 32);

namespace detail {

/// Distribution round, first leaky section: streams the (pre-scrambled)
/// input and links each record into its destination bucket's list. No dummy
/// elements are written; bucket heads live in the leaky stash.
template <class SeqD, class SeqP, class LogOut, class Heads>
void shuffle_distribute(SeqD&& data, SeqP&& perm, LogOut&& log, Heads&& heads, uint64_t n2,
                        uint64_t b) {
    for (uint64_t j = 0; j < n2; ++j) {
        const int64_t v = data.next();
        const int64_t dest = perm.next();
        const uint64_t bucket = static_cast<uint64_t>(dest) / b;
        const int64_t old = heads.read_at(bucket);
        log.next(ShuffleNode{v, dest, old, 1});
        heads.write_at(bucket, static_cast<int64_t>(j));
    }
}

/// Distribution round, second leaky section: walks each bucket's list
/// through the leaky log table and pads the bucket to its fixed public
/// capacity with dummy records.
template <class LogTbl, class Heads, class BucketOut>
bool shuffle_pad(LogTbl&& log, Heads&& heads, BucketOut&& out, uint64_t b, uint64_t cap) {
    if (cap < b) return false;  // bucket cannot hold its records
    for (uint64_t bucket = 0; bucket < b; ++bucket) {
        int64_t ptr = heads.read_at(bucket);
        for (uint64_t step = 0; step < b; ++step) {
            const bool valid = ptr >= 0;
            const ShuffleNode node = log.read_at(valid ? static_cast<uint64_t>(ptr) : 0);
            if (!valid) return false;  // short list: not a bijection
            out.next(ShuffleNode{node.value, node.dest, -1, 1});
            ptr = node.next;
        }
        if (ptr >= 0) return false;  // long list: not a bijection
        for (uint64_t d = b; d < cap; ++d) out.next(ShuffleNode{0, 0, -1, 0});
    }
    return true;
}

/// Cleanup round: reads the padded buckets sequentially, drops dummies into
/// a trash slot, arranges each bucket in the stash and emits it in final order.
template <class BucketIn, class Stash, class FinalOut>
bool shuffle_cleanup(BucketIn&& in, Stash&& stash, FinalOut&& out, uint64_t b, uint64_t cap) {
    for (uint64_t bucket = 0; bucket < b; ++bucket) {
        const uint64_t lo = bucket * b;
        for (uint64_t s = 0; s < cap; ++s) {
            const ShuffleNode node = in.next();
            const bool real = node.tag == 1;
            const uint64_t rel = static_cast<uint64_t>(node.dest) - lo;
            if (real && rel >= b) return false;  // routed to the wrong bucket
            stash.write_at(real ? rel : b, node.value);  // slot b is the trash slot
        }
        for (uint64_t s = 0; s < b; ++s) out.next(stash.read_at(s));
    }
    return true;
}

}  // namespace detail

/// Applies `perm` to `data` (output[perm[i]] = data[i]) with an external
/// oblivious two-round shuffle: bucketize into sqrt(N) buckets keyed by the
/// destination bucket, then clean each bucket into final order. The
/// per-record processing order is scrambled by a seed-driven public
/// permutation; bucket overflow retries with fresh randomness.
inline Dataset melbourne_shuffle(SimContext& sim, TxTrace& trace, const Dataset& data,
                                 const Permutation& perm, AlgoMode mode, uint64_t seed,
                                 const AlgoConfig& cfg = {}) {
    const uint64_t n = data.size();
    if (perm.size() != n) throw std::invalid_argument("mshuffle: |perm| != |data|");
    if (mode == AlgoMode::WordOblivious)
        throw std::invalid_argument("word_oblivious is defined only for sort");
    if (n == 0) return {.values = {}, .record_bytes = data.record_bytes};

    if (mode == AlgoMode::PlainUnprotected) {  // direct scatter oracle
        std::vector<int64_t> out(n, 0);
        detail::PlainArray<int64_t> a_in(sim, data.values, data.record_bytes);
        detail::PlainArray<int64_t> a_out(sim, out, data.record_bytes);
        PlainScope ps(sim, trace, "plain_scatter");
        for (uint64_t i = 0; i < n; ++i) a_out.write(ps, perm.mapping[i], a_in.read(ps, i));
        return {.values = std::move(out), .record_bytes = data.record_bytes};
    }

    const uint64_t b = detail::isqrt_ceil(n);
    const uint64_t n2 = b * b;
    const uint64_t cap = static_cast<uint64_t>(cfg.shuffle_pad_factor * double(b));

    for (uint64_t attempt = 0;; ++attempt) {
        const uint64_t rho_seed = seed + attempt * 0x9e3779b97f4a7c15ull;
        const Permutation rho = Permutation::random(n2, rho_seed);

        std::vector<int64_t> scr_data(n2, 0);
        std::vector<int64_t> scr_dest(n2, 0);
        std::vector<ShuffleNode> log(n2);
        std::vector<int64_t> heads(b, -1);
        std::vector<ShuffleNode> buckets(b * cap);
        std::vector<int64_t> stash(b + 1, 0);
        std::vector<int64_t> final_out(n2, 0);

        detail::PlainArray<int64_t> a_data(sim, data.values, data.record_bytes);
        detail::PlainArray<int64_t> a_scrd(sim, scr_data, data.record_bytes);
        detail::PlainArray<int64_t> a_scrp(sim, scr_dest, sizeof(int64_t));
        detail::PlainArray<ShuffleNode> a_log(sim, log, sizeof(ShuffleNode));
        detail::PlainArray<int64_t> a_heads(sim, heads, sizeof(int64_t));
        detail::PlainArray<ShuffleNode> a_buckets(sim, buckets, sizeof(ShuffleNode));
        detail::PlainArray<int64_t> a_stash(sim, stash, 64);
        detail::PlainArray<int64_t> a_final(sim, final_out, data.record_bytes);

        // Public pre-pass: pad to a perfect square and scramble the
        // processing order by rho (pad records keep their identity slot).
        {
            PlainScope ps(sim, trace, "shuffle_prescramble");
            for (uint64_t j = 0; j < n2; ++j) {
                const uint64_t src = rho.mapping[j];
                const int64_t v = src < n ? a_data.read(ps, src) : 0;
                const int64_t dest =
                    src < n ? static_cast<int64_t>(perm.mapping[src]) : static_cast<int64_t>(src);
                a_scrd.write(ps, j, v);
                a_scrp.write(ps, j, dest);
            }
        }

        bool ok = false;
        try {
            if (is_cmo(mode)) {
                {  // leaky section 1: distribute into linked lists
                    LeakySection sec(sim, trace, cfg.policy_for(mode));
                    auto h_d = sec.ob_ro(std::span<const int64_t>(scr_data), data.record_bytes,
                                         a_scrd.base());
                    auto h_p = sec.ob_ro(std::span<const int64_t>(scr_dest), sizeof(int64_t),
                                         a_scrp.base());
                    auto h_log =
                        sec.ob_rw(std::span<ShuffleNode>(log), sizeof(ShuffleNode), a_log.base());
                    auto h_heads =
                        sec.nob_rw(std::span<int64_t>(heads), sizeof(int64_t), a_heads.base());
                    sec.begin_leaky();
                    detail::shuffle_distribute(detail::CmoSeqIn<int64_t>{h_d},
                                               detail::CmoSeqIn<int64_t>{h_p},
                                               detail::CmoSeqOut<ShuffleNode>{h_log},
                                               detail::CmoTable<int64_t>{h_heads}, n2, b);
                    sec.end_leaky();
                }
                {  // leaky section 2: pad buckets to their public size
                    LeakySection sec(sim, trace, cfg.policy_for(mode));
                    auto h_log = sec.nob_ro(std::span<const ShuffleNode>(log),
                                            sizeof(ShuffleNode), a_log.base());
                    auto h_heads = sec.nob_ro(std::span<const int64_t>(heads), sizeof(int64_t),
                                              a_heads.base());
                    auto h_out = sec.ob_rw(std::span<ShuffleNode>(buckets), sizeof(ShuffleNode),
                                           a_buckets.base());
                    sec.begin_leaky();
                    ok = detail::shuffle_pad(detail::CmoRoTable<ShuffleNode>{h_log},
                                             detail::CmoRoTable<int64_t>{h_heads},
                                             detail::CmoSeqOut<ShuffleNode>{h_out}, b, cap);
                    sec.end_leaky();
                }
                if (ok) {  // cleanup round
                    LeakySection sec(sim, trace, cfg.policy_for(mode));
                    auto h_in = sec.ob_ro(std::span<const ShuffleNode>(buckets),
                                          sizeof(ShuffleNode), a_buckets.base());
                    auto h_stash = sec.nob_rw(std::span<int64_t>(stash), 64, a_stash.base());
                    auto h_out = sec.ob_rw(std::span<int64_t>(final_out), data.record_bytes,
                                           a_final.base());
                    sec.begin_leaky();
                    if (stash.size() > cfg.shuffle_stash_factor * b)
                        throw std::logic_error("shuffle stash exceeds its configured bound");
                    ok = detail::shuffle_cleanup(detail::CmoSeqIn<ShuffleNode>{h_in},
                                                 detail::CmoTable<int64_t>{h_stash},
                                                 detail::CmoSeqOut<int64_t>{h_out}, b, cap);
                    sec.end_leaky();
                }
            } else {  // scan baseline: leaky tables become full-array scans
                {
                    PlainScope ps(sim, trace, "shuffle_distribute");
                    detail::shuffle_distribute(detail::PlainSeqIn<int64_t>{ps, a_scrd},
                                               detail::PlainSeqIn<int64_t>{ps, a_scrp},
                                               detail::PlainSeqOut<ShuffleNode>{ps, a_log},
                                               detail::ScanTable<int64_t>{ps, a_heads}, n2, b);
                }
                {
                    PlainScope ps(sim, trace, "shuffle_pad");
                    ok = detail::shuffle_pad(detail::ScanTable<ShuffleNode>{ps, a_log},
                                             detail::ScanTable<int64_t>{ps, a_heads},
                                             detail::PlainSeqOut<ShuffleNode>{ps, a_buckets}, b,
                                             cap);
                }
                if (ok) {
                    PlainScope ps(sim, trace, "shuffle_cleanup");
                    ok = detail::shuffle_cleanup(detail::PlainSeqIn<ShuffleNode>{ps, a_buckets},
                                                 detail::ScanTable<int64_t>{ps, a_stash},
                                                 detail::PlainSeqOut<int64_t>{ps, a_final}, b, cap);
                }
            }
        } catch (const OverflowError&) {
            ok = false;
        }

        if (ok) {
            final_out.resize(n);
            return {.values = std::move(final_out), .record_bytes = data.record_bytes};
        }
        if (attempt + 1 >= cfg.retry_cap)
            throw OverflowError("melbourne shuffle: bucket overflow after " +
                                std::to_string(cfg.retry_cap) + " attempts");
    }
}

// ---------------------------------------------------------------------------
// Word-oblivious bubble sort and the quicksort baselines
// ---------------------------------------------------------------------------
namespace detail {

/// Full bubble sort with unconditional compare-exchange: (n-1)^2 exchanges
/// whose access sequence depends on n alone.
template <class Tbl>
void bubble_sort(Tbl&& t, uint64_t n) {
    if (n < 2) return;
    for (uint64_t pass = 0; pass + 1 < n; ++pass) {
        for (uint64_t j = 0; j + 1 < n; ++j) {
            const int64_t a = t.read_at(j);
            const int64_t b = t.read_at(j + 1);
            const bool swap = b < a;
            t.write_at(j, swap ? b : a);
            t.write_at(j + 1, swap ? a : b);
        }
    }
}

/// Hoare-partition quicksort; the baseline whose access pattern leaks.
template <class Tbl>
void quicksort(Tbl&& t, uint64_t n) {
    if (n < 2) return;
    std::vector<std::pair<int64_t, int64_t>> stack{{0, static_cast<int64_t>(n) - 1}};
    while (!stack.empty()) {
        auto [lo, hi] = stack.back();
        stack.pop_back();
        while (lo < hi) {
            const int64_t pivot = t.read_at(static_cast<uint64_t>(lo + (hi - lo) / 2));
            int64_t i = lo - 1, j = hi + 1;
            for (;;) {
                do ++i;
                while (t.read_at(static_cast<uint64_t>(i)) < pivot);
                do --j;
                while (t.read_at(static_cast<uint64_t>(j)) > pivot);
                if (i >= j) break;
                const int64_t a = t.read_at(static_cast<uint64_t>(i));
                const int64_t b = t.read_at(static_cast<uint64_t>(j));
                t.write_at(static_cast<uint64_t>(i), b);
                t.write_at(static_cast<uint64_t>(j), a);
            }
            if (j - lo < hi - j - 1) {
                stack.push_back({j + 1, hi});
                hi = j;
            } else {
                stack.push_back({lo, j});
                lo = j + 1;
            }
        }
    }
}

}  // namespace detail

/// Bubble sort with unconditional compare-exchange; the word-oblivious
/// baseline (no transactions needed, the access sequence is a function of
/// N alone).
inline Dataset word_oblivious_sort(SimContext& sim, TxTrace& trace, const Dataset& data) {
    std::vector<int64_t> out = data.values;
    detail::PlainArray<int64_t> a(sim, out, data.record_bytes);
    PlainScope ps(sim, trace, "bubble_sort");
    detail::bubble_sort(detail::PlainTable<int64_t>{ps, a}, out.size());
    return {.values = std::move(out), .record_bytes = data.record_bytes};
}

/// Unprotected quicksort with access accounting; the deliberately leaky
/// audit control and the plain sorting oracle.
inline Dataset plain_quicksort(SimContext& sim, TxTrace& trace, const Dataset& data) {
    std::vector<int64_t> out = data.values;
    detail::PlainArray<int64_t> a(sim, out, data.record_bytes);
    PlainScope ps(sim, trace, "quicksort");
    detail::quicksort(detail::PlainTable<int64_t>{ps, a}, out.size());
    return {.values = std::move(out), .record_bytes = data.record_bytes};
}

/// Cloak-style baseline: quicksort over a NobRW table inside one manual
/// transaction. Working sets beyond the cache bounds abort deterministically
/// and surface as CannotCompleteError.
inline Dataset manual_quicksort(SimContext& sim, TxTrace& trace, const Dataset& data,
                                const AlgoConfig& cfg = {}) {
    (void)cfg;
    std::vector<int64_t> out = data.values;
    LeakySection sec(sim, trace, PartitionPolicy::manual());
    auto h = sec.nob_rw(std::span<int64_t>(out), data.record_bytes);
    sec.begin_leaky();
    detail::quicksort(detail::CmoTable<int64_t>{h}, out.size());
    sec.end_leaky();
    return {.values = std::move(out), .record_bytes = data.record_bytes};
}

/// Scramble-then-compute sort: an external-oblivious shuffle to a random
/// secret permutation, then an unprotected quicksort over the scrambled
/// array.
inline Dataset shuffle_then_quicksort(SimContext& sim, TxTrace& trace, const Dataset& data,
                                      AlgoMode mode, uint64_t seed, const AlgoConfig& cfg = {}) {
    const uint64_t n = data.size();
    if (n < 2) return data;
    const Permutation target = Permutation::random(n, seed ^ 0xc2b2ae3d27d4eb4full);
    Dataset scrambled = melbourne_shuffle(sim, trace, data, target, mode, seed, cfg);
    return plain_quicksort(sim, trace, scrambled);
}

// ---------------------------------------------------------------------------
// Oblivious merge sort
// ---------------------------------------------------------------------------
namespace detail {

/// Binary min-heap over a leaky table with data-independent access counts:
/// every operation walks a fixed number of levels, continuing with dummy
/// reads/writes after the real sift settles.
template <class Tbl>
class FixedDepthHeap {
public:
    FixedDepthHeap(Tbl& t, uint64_t capacity)
        : t_(t), cap_(capacity), levels_(ceil_log2(capacity + 1)) {}

    uint64_t size() const { return size_; }

    void insert(int64_t v) {
        if (size_ >= cap_) throw std::logic_error("heap overflow");
        uint64_t slot = size_++;
        t_.write_at(slot, v);
        for (uint64_t l = 0; l < levels_; ++l) {
            const uint64_t parent = slot ? (slot - 1) / 2 : 0;
            const int64_t pv = t_.read_at(parent);
            const int64_t sv = t_.read_at(slot);
            const bool swap = slot != 0 && sv < pv;
            t_.write_at(parent, swap ? sv : pv);
            t_.write_at(slot, swap ? pv : sv);
            slot = swap ? parent : slot;
        }
    }

    int64_t extract_min() {
        if (size_ == 0) throw std::logic_error("heap underflow");
        const int64_t min = t_.read_at(0);
        const int64_t last = t_.read_at(size_ - 1);
        --size_;
        t_.write_at(0, last);
        uint64_t slot = 0;
        for (uint64_t l = 0; l < levels_; ++l) {
            const uint64_t li = 2 * slot + 1, ri = 2 * slot + 2;
            const bool has_l = li < size_, has_r = ri < size_;
            const int64_t lv = t_.read_at(has_l ? li : slot);
            const int64_t rv = t_.read_at(has_r ? ri : slot);
            const bool pick_r = has_r && rv < lv;
            const uint64_t child = pick_r ? ri : (has_l ? li : slot);
            const int64_t cv = pick_r ? rv : lv;
            const int64_t sv = t_.read_at(slot);
            const bool swap = child != slot && cv < sv;
            t_.write_at(slot, swap ? cv : sv);
            t_.write_at(child, swap ? sv : cv);
            slot = swap ? child : slot;
        }
        return min;
    }

private:
    Tbl& t_;
    uint64_t cap_;
    uint64_t levels_;
    uint64_t size_ = 0;
};

/// Merges runs [lo, mid) and [mid, hi) reading both inputs at a fixed
/// 1:1 rate and smoothing the data-dependent consumption imbalance through
/// the heap. Emission follows a fixed schedule after a priming delay; an
/// element is only safe to emit when no unread input can undercut it;
/// otherwise the randomized attempt fails and the caller re-shuffles.
template <class SeqIn, class SeqOut, class Stash>
bool lockstep_merge(SeqIn&& in_a, SeqIn&& in_b, SeqOut&& out, Stash&& stash, uint64_t m1,
                    uint64_t m2, uint64_t stash_cap) {
    FixedDepthHeap<Stash> heap(stash, stash_cap);
    const uint64_t total = m1 + m2;
    const uint64_t delay = std::min(total, stash_cap > 2 ? stash_cap - 2 : 1);
    uint64_t ra = 0, rb = 0;
    int64_t last_a = 0, last_b = 0;
    for (uint64_t step = 0; step < total + delay; ++step) {
        if (step < total) {
            const bool from_a = rb == m2 || (ra < m1 && step % 2 == 0);
            if (from_a) {
                last_a = in_a.next();
                ++ra;
                heap.insert(last_a);
            } else {
                last_b = in_b.next();
                ++rb;
                heap.insert(last_b);
            }
        }
        if (step >= delay) {
            const int64_t v = heap.extract_min();
            const bool unsafe = (ra < m1 && v > last_a) || (rb < m2 && v > last_b);
            if (unsafe) return false;
            out.next(v);
        }
    }
    return true;
}

/// Merges short adjacent runs entirely inside the stash: the pair is read
/// sequentially, merged with two clamped reads per output, and streamed out.
template <class SeqIn, class SeqOut, class Stash>
void in_stash_merge_pass(SeqIn&& in, SeqOut&& out, Stash&& stash, uint64_t n, uint64_t m) {
    for (uint64_t lo = 0; lo < n; lo += 2 * m) {
        const uint64_t hi = std::min(lo + 2 * m, n);
        const uint64_t mid = std::min(lo + m, hi);
        const uint64_t len = hi - lo, left = mid - lo;
        for (uint64_t t = 0; t < len; ++t) stash.write_at(t, in.next());
        uint64_t i = 0, j = left;
        for (uint64_t t = 0; t < len; ++t) {
            const int64_t a = stash.read_at(std::min(i, left ? left - 1 : 0));
            const int64_t b = stash.read_at(std::min(j, len - 1));
            const bool take_left = j >= len || (i < left && a <= b);
            out.next(take_left ? a : b);
            i += take_left ? 1 : 0;
            j += take_left ? 0 : 1;
        }
    }
}

}  // namespace detail

/// Randomized external-oblivious merge sort: a public seeded pre-shuffle,
/// then bottom-up merge passes. Runs that fit the stash merge inside it in
/// one leaky section per pass; longer runs use the lockstep randomized merge,
/// one leaky section per pair. The stash is c2*sqrt(N) lines; inputs whose
/// stash does not fit the cache raise InfeasibleError, and an unlucky
/// interleaving retries with a fresh shuffle.
inline Dataset oblivious_merge_sort(SimContext& sim, TxTrace& trace, const Dataset& data,
                                    AlgoMode mode, uint64_t seed, const AlgoConfig& cfg = {}) {
    const uint64_t n = data.size();
    if (mode == AlgoMode::WordOblivious)
        throw std::invalid_argument("use word_oblivious_sort for the bubble baseline");
    if (n < 2) return data;

    if (mode == AlgoMode::PlainUnprotected) return plain_quicksort(sim, trace, data);

    const uint64_t stash_elems = cfg.merge_stash_factor * detail::isqrt_ceil(n);

    for (uint64_t attempt = 0;; ++attempt) {
        const uint64_t shuffle_seed = seed + attempt * 0x9e3779b97f4a7c15ull;
        const Permutation sigma = Permutation::random(n, shuffle_seed);

        std::vector<int64_t> src(n), dst(n, 0), stash(stash_elems + 1, 0);
        detail::PlainArray<int64_t> a_orig(sim, data.values, data.record_bytes);
        detail::PlainArray<int64_t> a_src(sim, src, data.record_bytes);
        detail::PlainArray<int64_t> a_dst(sim, dst, data.record_bytes);
        detail::PlainArray<int64_t> a_stash(sim, stash, 64);

        {
            PlainScope ps(sim, trace, "sort_preshuffle");
            for (uint64_t i = 0; i < n; ++i)
                a_src.write(ps, sigma.mapping[i], a_orig.read(ps, i));
        }

        bool ok = true;
        bool flipped = false;
        for (uint64_t m = 1; m < n && ok; m *= 2, flipped = !flipped) {
            auto& cur_src = flipped ? dst : src;
            auto& cur_dst = flipped ? src : dst;
            auto& pa_src = flipped ? a_dst : a_src;
            auto& pa_dst = flipped ? a_src : a_dst;
            if (2 * m + 2 <= stash_elems) {
                if (is_cmo(mode)) {
                    LeakySection sec(sim, trace, cfg.policy_for(mode));
                    auto h_in = sec.ob_ro(std::span<const int64_t>(cur_src), data.record_bytes,
                                          pa_src.base());
                    auto h_out = sec.ob_rw(std::span<int64_t>(cur_dst), data.record_bytes,
                                           pa_dst.base());
                    auto h_st = sec.nob_rw(std::span<int64_t>(stash), 64, a_stash.base());
                    sec.begin_leaky();
                    detail::in_stash_merge_pass(detail::CmoSeqIn<int64_t>{h_in},
                                                detail::CmoSeqOut<int64_t>{h_out},
                                                detail::CmoTable<int64_t>{h_st}, n, m);
                    sec.end_leaky();
                } else {
                    PlainScope ps(sim, trace, "merge_pass");
                    auto stash_tbl = detail::ScanTable<int64_t>{ps, a_stash};
                    auto plain_tbl = detail::PlainTable<int64_t>{ps, a_stash};
                    if (mode == AlgoMode::ScanBaseline)
                        detail::in_stash_merge_pass(detail::PlainSeqIn<int64_t>{ps, pa_src},
                                                    detail::PlainSeqOut<int64_t>{ps, pa_dst},
                                                    stash_tbl, n, m);
                    else
                        detail::in_stash_merge_pass(detail::PlainSeqIn<int64_t>{ps, pa_src},
                                                    detail::PlainSeqOut<int64_t>{ps, pa_dst},
                                                    plain_tbl, n, m);
                }
            } else {
                for (uint64_t lo = 0; lo < n && ok; lo += 2 * m) {
                    const uint64_t hi = std::min(lo + 2 * m, n);
                    const uint64_t mid = std::min(lo + m, hi);
                    if (mid == hi) {  // lone tail run: copy through
                        PlainScope ps(sim, trace, "merge_tail_copy");
                        for (uint64_t i = lo; i < hi; ++i)
                            pa_dst.write(ps, i, pa_src.read(ps, i));
                        continue;
                    }
                    if (is_cmo(mode)) {
                        LeakySection sec(sim, trace, cfg.policy_for(mode));
                        auto h_a = sec.ob_ro(
                            std::span<const int64_t>(cur_src).subspan(lo, mid - lo),
                            data.record_bytes, pa_src.address_of(lo));
                        auto h_b = sec.ob_ro(
                            std::span<const int64_t>(cur_src).subspan(mid, hi - mid),
                            data.record_bytes, pa_src.address_of(mid));
                        auto h_out = sec.ob_rw(std::span<int64_t>(cur_dst).subspan(lo, hi - lo),
                                               data.record_bytes, pa_dst.address_of(lo));
                        auto h_st = sec.nob_rw(std::span<int64_t>(stash), 64, a_stash.base());
                        sec.begin_leaky();
                        ok = detail::lockstep_merge(detail::CmoSeqIn<int64_t>{h_a},
                                                    detail::CmoSeqIn<int64_t>{h_b},
                                                    detail::CmoSeqOut<int64_t>{h_out},
                                                    detail::CmoTable<int64_t>{h_st}, mid - lo,
                                                    hi - mid, stash_elems);
                        sec.end_leaky();
                    } else {
                        PlainScope ps(sim, trace, "lockstep_merge");
                        detail::PlainSeqIn<int64_t> in_a{ps, pa_src, lo};
                        detail::PlainSeqIn<int64_t> in_b{ps, pa_src, mid};
                        detail::PlainSeqOut<int64_t> mo{ps, pa_dst, lo};
                        if (mode == AlgoMode::ScanBaseline) {
                            auto st = detail::ScanTable<int64_t>{ps, a_stash};
                            ok = detail::lockstep_merge(in_a, in_b, mo, st, mid - lo, hi - mid,
                                                        stash_elems);
                        } else {
                            auto st = detail::PlainTable<int64_t>{ps, a_stash};
                            ok = detail::lockstep_merge(in_a, in_b, mo, st, mid - lo, hi - mid,
                                                        stash_elems);
                        }
                    }
                }
            }
        }
        if (ok) {
            auto& result = flipped ? dst : src;
            return {.values = std::move(result), .record_bytes = data.record_bytes};
        }
        if (attempt + 1 >= cfg.retry_cap)
            throw OverflowError("oblivious merge: stash overflow after " +
                                std::to_string(cfg.retry_cap) + " attempts");
    }
}

}  // namespace cmo
