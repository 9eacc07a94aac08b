#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "algorithms.hpp"
#include "checker.hpp"
#include "config.hpp"
#include "cost_model.hpp"
#include "dataset.hpp"
#include "runtime.hpp"

namespace cmo {

struct ExperimentSpec {
    std::string experiment;  // tx_sweep | algo_compare | oblivious_audit
    std::string algorithm;   // shuffle | msort | bsearch | kmeans | sort | quicksort_control
    std::vector<AlgoMode> modes = {AlgoMode::CmoDynamic};
    std::vector<uint64_t> n_values = {1024};
    std::vector<uint64_t> tx_sizes = {1, 2, 4, 8, 16, 32, 64, 256, 1024, 4096};
    std::vector<uint64_t> seeds = {1};
    uint64_t k = 4;           // kmeans centroid count
    uint64_t queries = 256;   // bsearch query stream length
    uint64_t iterations = 3;  // kmeans iterations
    uint64_t pairs = 100;     // audit pairs per algorithm
    CacheGeometry geometry;
    CostModel cost;
    AlgoConfig algo;
    bool full_scale = false;

    std::string echo() const {
        std::ostringstream os;
        os << "experiment=" << experiment << "\nalgorithm=" << algorithm << "\nmodes=";
        for (size_t i = 0; i < modes.size(); ++i) os << (i ? "," : "") << to_string(modes[i]);
        os << "\nn=";
        for (size_t i = 0; i < n_values.size(); ++i) os << (i ? "," : "") << n_values[i];
        os << "\ntx_sizes=";
        for (size_t i = 0; i < tx_sizes.size(); ++i) os << (i ? "," : "") << tx_sizes[i];
        os << "\nseeds=";
        for (size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
        os << "\nk=" << k << "\nqueries=" << queries << "\niterations=" << iterations
           << "\npairs=" << pairs << "\nfull_scale=" << (full_scale ? 1 : 0) << "\n";
        return os.str();
    }
};

struct ResultRow {
    std::string experiment;
    std::string algorithm;
    std::string mode;
    uint64_t n = 0;
    uint64_t t = 0;  // tx_sweep transaction size; 0 elsewhere
    uint64_t k = 0;
    uint64_t q = 0;
    uint64_t seed = 0;
    uint64_t accesses = 0;
    uint64_t cost = 0;
    double cost_per_access = 0;
    uint64_t tx_count = 0;
    double mean_tx_size = 0;
    uint64_t abort_count = 0;
    bool completed = true;
    bool output_ok = true;
    std::string reason;
};

namespace detail {

inline uint64_t trace_accesses(const TxTrace& trace) {
    uint64_t total = 0;
    for (const auto& ev : trace.events()) {
        if (const auto* e = std::get_if<events::TxEnd>(&ev)) total += e->accesses;
        else if (const auto* a = std::get_if<events::TxAbort>(&ev)) total += a->accesses;
        else if (const auto* r = std::get_if<events::Reload>(&ev)) total += r->accesses;
        else if (const auto* p = std::get_if<events::Preload>(&ev)) total += p->accesses;
        else if (const auto* pl = std::get_if<events::PlainPhase>(&ev)) total += pl->accesses;
    }
    return total;
}

inline void fill_tx_stats(ResultRow& row, const TxTrace& trace) {
    uint64_t committed = 0, committed_accesses = 0;
    for (const auto& ev : trace.events()) {
        if (const auto* e = std::get_if<events::TxEnd>(&ev)) {
            ++committed;
            committed_accesses += e->accesses;
        }
    }
    row.tx_count = committed;
    row.mean_tx_size = committed ? double(committed_accesses) / double(committed) : 0.0;
    row.abort_count = trace.abort_count();
    row.accesses = trace_accesses(trace);
}

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// tx_sweep: t consecutive line writes per transaction, raw (no shadow
// memory), after a non-transactional warm-up pass over the array.
// ---------------------------------------------------------------------------

inline ResultRow sweep_cell(const ExperimentSpec& spec, uint64_t n_lines, uint64_t t) {
    CacheSim cs(spec.geometry);
    const uint64_t line = spec.geometry.line_size_bytes;
    const uint64_t base = 0x100000000ull;

    // Warm-up models the excluded initial data loading.
    for (uint64_t i = 0; i < n_lines; ++i) cs.access({base + i * line, AccessKind::Read});

    TxTrace trace;
    ResultRow row;
    row.experiment = "tx_sweep";
    row.algorithm = "array_write";
    row.mode = "static_raw";
    row.n = n_lines;
    row.t = t;

    for (uint64_t w = 0; w < n_lines && row.completed; w += t) {
        const uint64_t hi = std::min(w + t, n_lines);
        bool committed = false;
        for (uint64_t attempt = 0; attempt < 9 && !committed; ++attempt) {
            const TxContext& tx = cs.tx_begin();
            trace.push(events::TxBegin{tx.id});
            bool aborted = false;
            for (uint64_t i = w; i < hi; ++i) {
                const AccessOutcome out = cs.tx_access({base + i * line, AccessKind::Write});
                if (out.caused_abort()) {
                    const TxContext* cur = cs.current_tx();
                    trace.push(events::TxAbort{cur->id, out.abort_cause, cur->accesses,
                                               cur->misses});
                    aborted = true;
                    break;
                }
            }
            if (!aborted) {
                const CommitRecord rec = cs.tx_end();
                trace.push(events::TxEnd{rec.tx_id, rec.accesses,
                                         rec.l1_hits + rec.llc_hits, rec.misses});
                committed = true;
            }
        }
        if (!committed) {
            row.completed = false;
            row.reason = "cannot complete: deterministic abort";
        }
    }

    detail::fill_tx_stats(row, trace);
    row.cost = cost_of(trace, spec.cost);
    row.cost_per_access = n_lines ? double(row.cost) / double(n_lines) : 0.0;
    return row;
}

/// Dynamic-policy run of the same streaming-write workload, for the
/// transaction-size comparison.
inline ResultRow sweep_dynamic_cell(const ExperimentSpec& spec, uint64_t n_lines) {
    SimContext sim(spec.geometry);
    TxTrace trace;
    ResultRow row;
    row.experiment = "tx_sweep";
    row.algorithm = "array_write";
    row.mode = "dynamic";
    row.n = n_lines;

    std::vector<int64_t> out(n_lines, 0);
    LeakySection sec(sim, trace, PartitionPolicy::dynamic());
    auto h = sec.ob_rw(std::span<int64_t>(out), spec.geometry.line_size_bytes);
    sec.begin_leaky();
    for (uint64_t i = 0; i < n_lines; ++i) h.write_next(static_cast<int64_t>(i));
    sec.end_leaky();

    detail::fill_tx_stats(row, trace);
    row.cost = cost_of(trace, spec.cost);
    row.cost_per_access = n_lines ? double(row.cost) / double(n_lines) : 0.0;
    return row;
}

inline std::vector<ResultRow> run_tx_sweep(const ExperimentSpec& spec) {
    std::vector<ResultRow> rows;
    for (uint64_t n : spec.n_values) {
        for (uint64_t t : spec.tx_sizes) rows.push_back(sweep_cell(spec, n, t));
        rows.push_back(sweep_dynamic_cell(spec, n));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// algo_compare: one row per (mode, N, seed) with the simulated cost and
// an inline output-equivalence check against the plain run.
// ---------------------------------------------------------------------------

namespace detail {

inline Dataset gen_dataset(uint64_t n, uint64_t seed) {
    Dataset d;
    d.values.resize(n);
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 1);
    for (auto& v : d.values) v = static_cast<int64_t>(rng() % 1000000);
    return d;
}

inline PointSet gen_points(uint64_t n, uint64_t seed) {
    PointSet p;
    p.dims = 2;
    p.coords.resize(n * p.dims);
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 2);
    for (auto& c : p.coords) c = double(int64_t(rng() % 100000)) / 13.0;
    return p;
}

struct AlgoOutput {
    std::vector<int64_t> ints;
    std::vector<double> doubles;
};

/// Runs one (algorithm, mode, n, seed) cell and returns its functional
/// output; the trace accumulates into `trace`.
inline AlgoOutput run_algo(const ExperimentSpec& spec, const std::string& algo, AlgoMode mode,
                           uint64_t n, uint64_t seed, SimContext& sim, TxTrace& trace) {
    AlgoOutput out;
    if (algo == "shuffle") {
        Dataset d = gen_dataset(n, seed);
        Permutation p = Permutation::random(n, seed ^ 0x5851f42d4c957f2dull);
        out.ints = melbourne_shuffle(sim, trace, d, p, mode, seed, spec.algo).values;
    } else if (algo == "msort") {
        Dataset d = gen_dataset(n, seed);
        out.ints = oblivious_merge_sort(sim, trace, d, mode, seed, spec.algo).values;
    } else if (algo == "bsearch") {
        Dataset d = gen_dataset(n, seed);
        std::sort(d.values.begin(), d.values.end());
        Dataset q = gen_dataset(spec.queries, seed + 17);
        out.ints = streaming_binary_search(sim, trace, d, q, mode, spec.algo);
    } else if (algo == "kmeans") {
        PointSet p = gen_points(n, seed);
        KmeansResult r = kmeans(sim, trace, p, spec.k, spec.iterations, mode, seed, spec.algo);
        out.ints = std::move(r.assignment);
        out.doubles = std::move(r.centroids);
    } else if (algo == "sort") {
        Dataset d = gen_dataset(n, seed);
        switch (mode) {
            case AlgoMode::CmoDynamic:
            case AlgoMode::CmoStatic:
                out.ints = shuffle_then_quicksort(sim, trace, d, mode, seed, spec.algo).values;
                break;
            case AlgoMode::CmoManual:
                out.ints = manual_quicksort(sim, trace, d, spec.algo).values;
                break;
            case AlgoMode::WordOblivious:
                out.ints = word_oblivious_sort(sim, trace, d).values;
                break;
            case AlgoMode::PlainUnprotected:
                out.ints = plain_quicksort(sim, trace, d).values;
                break;
            default:
                throw std::invalid_argument("sort does not support mode " +
                                            std::string(to_string(mode)));
        }
    } else if (algo == "quicksort_control") {
        Dataset d = gen_dataset(n, seed);
        out.ints = plain_quicksort(sim, trace, d).values;
    } else {
        throw std::invalid_argument("unknown algorithm: " + algo);
    }
    return out;
}

inline bool outputs_match(const AlgoOutput& a, const AlgoOutput& b) {
    if (a.ints != b.ints) return false;
    if (a.doubles.size() != b.doubles.size()) return false;
    for (size_t i = 0; i < a.doubles.size(); ++i) {
        const double x = a.doubles[i], y = b.doubles[i];
        const double scale = std::max({std::abs(x), std::abs(y), 1.0});
        if (std::abs(x - y) > 1e-9 * scale) return false;
    }
    return true;
}

}  // namespace detail

inline std::vector<ResultRow> run_algo_compare(const ExperimentSpec& spec) {
    std::vector<ResultRow> rows;
    for (uint64_t n : spec.n_values) {
        for (uint64_t seed : spec.seeds) {
            // The plain reference output for this (n, seed).
            detail::AlgoOutput reference;
            bool have_reference = false;
            {
                SimContext sim(spec.geometry);
                TxTrace trace;
                try {
                    reference = detail::run_algo(spec, spec.algorithm,
                                                 AlgoMode::PlainUnprotected, n, seed, sim, trace);
                    have_reference = true;
                } catch (const std::exception&) {
                }
            }
            for (AlgoMode mode : spec.modes) {
                ResultRow row;
                row.experiment = "algo_compare";
                row.algorithm = spec.algorithm;
                row.mode = to_string(mode);
                row.n = n;
                row.k = spec.algorithm == "kmeans" ? spec.k : 0;
                row.q = spec.algorithm == "bsearch" ? spec.queries : 0;
                row.seed = seed;
                SimContext sim(spec.geometry);
                TxTrace trace;
                try {
                    detail::AlgoOutput out =
                        detail::run_algo(spec, spec.algorithm, mode, n, seed, sim, trace);
                    row.output_ok = !have_reference || detail::outputs_match(out, reference);
                    if (!row.output_ok) row.reason = "output mismatch vs plain";
                } catch (const InfeasibleError& e) {
                    row.completed = false;
                    row.reason = e.what();
                } catch (const CannotCompleteError& e) {
                    row.completed = false;
                    row.reason = e.what();
                } catch (const OverflowError& e) {
                    row.completed = false;
                    row.reason = e.what();
                } catch (const std::invalid_argument& e) {
                    row.completed = false;
                    row.reason = e.what();
                }
                detail::fill_tx_stats(row, trace);
                row.cost = cost_of(trace, spec.cost);
                row.cost_per_access =
                    row.accesses ? double(row.cost) / double(row.accesses) : 0.0;
                rows.push_back(row);
            }
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// oblivious_audit: pairwise trace-equality over random equal-shape inputs.
// ---------------------------------------------------------------------------

struct AuditResult {
    std::string algorithm;
    std::string mode;
    uint64_t pairs = 0;
    uint64_t failures = 0;
    uint64_t first_divergence = 0;
    std::string detail;
};

inline AuditResult run_oblivious_audit_one(const ExperimentSpec& spec, const std::string& algo,
                                           AlgoMode mode) {
    AuditResult res;
    res.algorithm = algo;
    res.mode = to_string(mode);
    res.pairs = spec.pairs;
    const uint64_t n = spec.n_values.empty() ? 1024 : spec.n_values[0];
    for (uint64_t pair = 0; pair < spec.pairs; ++pair) {
        const uint64_t seed = spec.seeds.empty() ? pair : spec.seeds[0] + pair;
        // The data generator seed differs per side; the algorithm seed
        // (public randomness) is shared by the pair.
        auto run = [&](int which) {
            SimContext sim(spec.geometry);
            TxTrace trace;
            const uint64_t data_seed = seed * 2 + which + 1000;
            if (algo == "shuffle") {
                Dataset d = detail::gen_dataset(n, data_seed);
                Permutation p = Permutation::random(n, data_seed ^ 0x5851f42d4c957f2dull);
                melbourne_shuffle(sim, trace, d, p, mode, seed, spec.algo);
            } else if (algo == "msort") {
                Dataset d = detail::gen_dataset(n, data_seed);
                oblivious_merge_sort(sim, trace, d, mode, seed, spec.algo);
            } else if (algo == "bsearch") {
                Dataset d = detail::gen_dataset(n, data_seed);
                std::sort(d.values.begin(), d.values.end());
                Dataset q = detail::gen_dataset(spec.queries, data_seed + 17);
                streaming_binary_search(sim, trace, d, q, mode, spec.algo);
            } else if (algo == "kmeans") {
                PointSet p = detail::gen_points(n, data_seed);
                kmeans(sim, trace, p, spec.k, spec.iterations, mode, seed, spec.algo);
            } else if (algo == "word_sort") {
                Dataset d = detail::gen_dataset(n, data_seed);
                word_oblivious_sort(sim, trace, d);
            } else if (algo == "quicksort_control") {
                Dataset d = detail::gen_dataset(n, data_seed);
                plain_quicksort(sim, trace, d);
            } else {
                throw std::invalid_argument("audit: unknown algorithm " + algo);
            }
            return trace;
        };
        const std::vector<uint64_t> shape{n, spec.k, spec.queries};
        const Verdict v = check_pairwise(run, shape, shape);
        if (!v.pass) {
            if (res.failures == 0) {
                res.first_divergence = v.divergence_index;
                res.detail = v.detail;
            }
            ++res.failures;
        }
    }
    return res;
}

inline std::vector<AuditResult> run_oblivious_audit(const ExperimentSpec& spec,
                                                    std::ostream* warn = nullptr) {
    std::vector<AuditResult> out;
    if (spec.pairs == 0 && warn)
        *warn << "warning: pairs=0, audit passes vacuously\n";
    std::vector<std::string> algos;
    if (spec.algorithm == "all")
        algos = {"shuffle", "msort", "bsearch", "kmeans", "word_sort"};
    else
        algos = {spec.algorithm};
    for (const std::string& algo : algos)
        for (AlgoMode mode : spec.modes)
            out.push_back(run_oblivious_audit_one(spec, algo,
                                                  algo == "word_sort" || algo == "quicksort_control"
                                                      ? AlgoMode::PlainUnprotected
                                                      : mode));
    return out;
}

// ---------------------------------------------------------------------------
// Output writers
// ---------------------------------------------------------------------------

inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
    os << "experiment,algorithm,mode,n,t,k,q,seed,accesses,cost,cost_per_access,tx_count,"
          "mean_tx_size,abort_count,completed,output_ok,reason\n";
    for (const ResultRow& r : rows) {
        os << r.experiment << ',' << r.algorithm << ',' << r.mode << ',' << r.n << ',' << r.t
           << ',' << r.k << ',' << r.q << ',' << r.seed << ',' << r.accesses << ',' << r.cost
           << ',' << detail::fmt_double(r.cost_per_access) << ',' << r.tx_count << ','
           << detail::fmt_double(r.mean_tx_size) << ',' << r.abort_count << ','
           << (r.completed ? 1 : 0) << ',' << (r.output_ok ? 1 : 0) << ',' << r.reason << '\n';
    }
}

inline void write_audit_csv(std::ostream& os, const std::vector<AuditResult>& rows) {
    os << "algorithm,mode,pairs,failures,first_divergence,detail\n";
    for (const AuditResult& r : rows)
        os << r.algorithm << ',' << r.mode << ',' << r.pairs << ',' << r.failures << ','
           << r.first_divergence << ',' << r.detail << '\n';
}

inline void write_manifest(std::ostream& os, const ExperimentSpec& spec) {
    os << "tool=cmo_bench 0.1.0\n";
    os << spec.echo();
    const CacheGeometry& g = spec.geometry;
    os << "line_size=" << g.line_size_bytes << "\nl1_sets=" << g.l1_sets
       << "\nl1_ways=" << g.l1_ways << "\nllc_sets=" << g.llc_sets
       << "\nllc_ways=" << g.llc_ways << "\n";
    os << "hit_cost=" << spec.cost.hit_cost << "\nmiss_cost=" << spec.cost.miss_cost
       << "\ntx_overhead=" << spec.cost.tx_overhead << "\n";
}

}  // namespace cmo
