#pragma once

#include <array>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

#include "geometry.hpp"
#include "trace.hpp"

namespace cmo {

/// Line counts of the four data classes for one leaky section. A1/A2 are
/// totals (leaky data is never partitioned); A3/A4 are streamed through
/// the P3/P4 partitions.
struct SizeSpec {
    uint64_t a1_lines = 0;
    uint64_t a2_lines = 0;
    uint64_t a3_lines = 0;
    uint64_t a4_lines = 0;
};

enum class LayoutConstraint : uint8_t { C1a, C1b };

inline const char* to_string(LayoutConstraint c) {
    return c == LayoutConstraint::C1a ? "C1a" : "C1b";
}

struct InfeasibleError : std::runtime_error {
    InfeasibleError(LayoutConstraint c, const std::string& what)
        : std::runtime_error(std::string(to_string(c)) + ": " + what), constraint(c) {}
    LayoutConstraint constraint;
};

struct SetRange {
    uint64_t first = 0;
    uint64_t count = 0;
    bool contains(uint64_t set) const { return set >= first && set < first + count; }
};

/// The planned in-transaction memory layout: disjoint L1 set ranges for the
/// four classes plus the chosen P3/P4 partition sizes.
///
/// The shadow arena places class-internal line i of a class with range
/// [first, first+count) at set first + i % count, depth i / count. Walking
/// depth advances the LLC set by l1_sets each step, so a single L1 set can
/// hold up to L = llc_lines/l1_sets lines without exceeding any LLC set's
/// associativity. Read-only classes (A1, P3) use that to keep an L1
/// footprint of one way-row per set while staying LLC-resident; read-write
/// classes (A2, P4) stay within l1_ways per set so dirty lines are never
/// evicted.
struct ShadowLayout {
    static constexpr uint64_t kArenaBase = 0x40000000ull;

    CacheGeometry geometry;
    SizeSpec sizes;
    std::array<SetRange, 4> ranges{};  // indexed by DataClass
    uint64_t p3_lines = 0;
    uint64_t p4_lines = 0;
    uint64_t big_l = 0;  // max LLC lines mappable to one L1 set

    const SetRange& range_of(DataClass c) const { return ranges[static_cast<size_t>(c)]; }

    uint64_t class_capacity_lines(DataClass c) const {
        switch (c) {
            case DataClass::A1: return sizes.a1_lines;
            case DataClass::A2: return sizes.a2_lines;
            case DataClass::A3: return p3_lines;
            default: return p4_lines;
        }
    }

    /// Arena byte address whose L1 set lies inside the class's range.
    /// `logical_index` is a line index within the class (for A3/A4: within
    /// the current partition).
    uint64_t shadow_address(DataClass c, uint64_t logical_index) const {
        const SetRange& r = range_of(c);
        if (r.count == 0 || logical_index >= class_capacity_lines(c))
            throw std::out_of_range("shadow_address: index outside class capacity");
        const uint64_t set = r.first + logical_index % r.count;
        const uint64_t depth = logical_index / r.count;
        return kArenaBase + (depth * geometry.l1_sets + set) * geometry.line_size_bytes;
    }

    uint64_t partition_count(DataClass c) const {
        if (c == DataClass::A3)
            return sizes.a3_lines == 0 ? 0 : (sizes.a3_lines + p3_lines - 1) / p3_lines;
        if (c == DataClass::A4)
            return sizes.a4_lines == 0 ? 0 : (sizes.a4_lines + p4_lines - 1) / p4_lines;
        throw std::logic_error("partition_count: only A3/A4 are partitioned");
    }

    /// Joint Ob capacity: P3 and P4 partitions counted together.
    uint64_t joint_ob_capacity_lines() const { return p3_lines + p4_lines; }

    std::string report() const {
        std::ostringstream os;
        os << "shadow layout (line=" << geometry.line_size_bytes << "B, L1=" << geometry.l1_sets
           << "x" << geometry.l1_ways << ", LLC=" << geometry.llc_sets << "x" << geometry.llc_ways
           << ", L=" << big_l << ")\n";
        const char* names[4] = {"A1", "A2", "A3/P3", "A4/P4"};
        const uint64_t lines[4] = {sizes.a1_lines, sizes.a2_lines, sizes.a3_lines,
                                   sizes.a4_lines};
        for (size_t i = 0; i < 4; ++i) {
            const SetRange& r = ranges[i];
            os << "  " << names[i] << ": sets [" << r.first << ", " << r.first + r.count
               << "), lines=" << lines[i];
            if (i == 2) os << ", p3=" << p3_lines << ", partitions=" << partition_count(DataClass::A3);
            if (i == 3) os << ", p4=" << p4_lines << ", partitions=" << partition_count(DataClass::A4);
            os << "\n";
        }
        return os.str();
    }
};

namespace detail {

inline uint64_t ceil_div(uint64_t a, uint64_t b) { return b == 0 ? 0 : (a + b - 1) / b; }

}  // namespace detail

/// Solves the layout problem: assign disjoint L1 set ranges to A1/A2/P3/P4
/// and choose partition sizes maximizing min(P3, P4), subject to
///   union{P3} = A3, union{P4} = A4,
///   A1 + P3 + A2 + P4 < LLC lines,
///   ceil(A1/L) + ceil(P3/L) + A2 + P4 < L1 lines,
/// with per-range capacities A2 <= n2*ways, P4 <= n4*ways (read-write data
/// must stay L1-resident) and A1 <= n1*L, P3 <= n3*L (read-only data may
/// replace in L1 but must stay LLC-resident).
///
/// Tie-breaking: maximize P3+P4, then take the smallest P3 set count.
/// Set ranges are laid out in the order A2 | P4 | P3 | A1 from set 0 up.
inline ShadowLayout plan_layout(const SizeSpec& sizes, const CacheGeometry& geometry) {
    geometry.validate();
    const uint64_t S = geometry.l1_sets;
    const uint64_t W = geometry.l1_ways;
    const uint64_t L = geometry.llc_lines_per_l1_set();
    const uint64_t l1_lines = geometry.l1_lines();
    const uint64_t llc_lines = geometry.llc_lines();

    const uint64_t n1 = sizes.a1_lines ? detail::ceil_div(sizes.a1_lines, L) : 0;
    const uint64_t n2 = sizes.a2_lines ? detail::ceil_div(sizes.a2_lines, W) : 0;
    const uint64_t need3 = sizes.a3_lines ? 1 : 0;
    const uint64_t need4 = sizes.a4_lines ? 1 : 0;

    if (n2 + n1 + need3 + need4 > S) {
        if (n2 > S - std::min(S, n1 + need3 + need4))
            throw InfeasibleError(LayoutConstraint::C1b,
                                  "A2 exceeds its maximal L1 allotment (" +
                                      std::to_string(sizes.a2_lines) + " lines)");
        throw InfeasibleError(LayoutConstraint::C1a,
                              "A1 exceeds its LLC allotment (" +
                                  std::to_string(sizes.a1_lines) + " lines)");
    }
    const uint64_t l1_charge_a1 = detail::ceil_div(sizes.a1_lines, L);
    if (l1_charge_a1 + need3 + sizes.a2_lines + need4 >= l1_lines)
        throw InfeasibleError(LayoutConstraint::C1b,
                              "A2 + partitions exceed L1 (" + std::to_string(sizes.a2_lines) +
                                  " A2 lines)");
    if (sizes.a1_lines + need3 + sizes.a2_lines + need4 >= llc_lines)
        throw InfeasibleError(LayoutConstraint::C1a, "working set exceeds LLC");

    const uint64_t free_sets = S - n1 - n2;
    uint64_t best_score = 0, best_sum = 0, best_n3 = 0, best_p3 = 0, best_p4 = 0;
    bool found = false;

    const uint64_t n3_lo = need3, n3_hi = need3 ? free_sets - need4 : 0;
    for (uint64_t n3 = n3_lo; n3 <= n3_hi || (n3 == 0 && !need3); ++n3) {
        const uint64_t n4 = need4 ? free_sets - n3 : 0;
        const uint64_t p3_cap = std::min(n3 * L, sizes.a3_lines);
        const uint64_t p4_cap = std::min(n4 * W, sizes.a4_lines);
        const uint64_t p4_lo = need4, p4_hi = p4_cap;
        for (uint64_t p4 = p4_lo; p4 <= p4_hi; ++p4) {
            // Remaining budget for P3 under both strict inequalities.
            const uint64_t l1_used = l1_charge_a1 + sizes.a2_lines + p4;
            const uint64_t llc_used = sizes.a1_lines + sizes.a2_lines + p4;
            if (l1_used >= l1_lines || llc_used >= llc_lines) break;
            uint64_t p3 = p3_cap;
            const uint64_t l1_budget_rows = l1_lines - 1 - l1_used;  // for ceil(P3/L)
            p3 = std::min(p3, l1_budget_rows * L);
            p3 = std::min(p3, llc_lines - 1 - llc_used);
            if (need3 && p3 == 0) continue;
            const uint64_t score = need3 && need4 ? std::min(p3, p4) : std::max(p3, p4);
            const uint64_t sum = p3 + p4;
            if (!found || score > best_score || (score == best_score && sum > best_sum)) {
                found = true;
                best_score = score;
                best_sum = sum;
                best_n3 = n3;
                best_p3 = p3;
                best_p4 = p4;
            }
            if (!need4) break;
        }
        if (!need3) break;
    }
    if ((need3 || need4) && !found)
        throw InfeasibleError(LayoutConstraint::C1b, "no feasible P3/P4 assignment");

    ShadowLayout layout;
    layout.geometry = geometry;
    layout.sizes = sizes;
    layout.big_l = L;
    layout.p3_lines = best_p3;
    layout.p4_lines = best_p4;
    const uint64_t n4 = need4 ? free_sets - best_n3 : 0;
    uint64_t next = 0;
    layout.ranges[static_cast<size_t>(DataClass::A2)] = {next, n2};
    next += n2;
    layout.ranges[static_cast<size_t>(DataClass::A4)] = {next, n4};
    next += n4;
    layout.ranges[static_cast<size_t>(DataClass::A3)] = {next, best_n3};
    next += best_n3;
    layout.ranges[static_cast<size_t>(DataClass::A1)] = {next, n1};
    return layout;
}

/// Best-effort layout for the manual (Cloak-style) policy: the whole of A3
/// and A4 becomes a single partition and no feasibility checks run, so an
/// oversized working set aborts at runtime instead of failing fast.
inline ShadowLayout plan_layout_manual(const SizeSpec& sizes, const CacheGeometry& geometry) {
    geometry.validate();
    const uint64_t S = geometry.l1_sets;
    const uint64_t W = geometry.l1_ways;
    const uint64_t L = geometry.llc_lines_per_l1_set();

    // Nominal set split in the same A2|P4|P3|A1 order; ranges are clamped,
    // never validated. Classes overflow their ranges by depth, which is the
    // point: the cache model decides whether the run survives.
    const uint64_t wants[4] = {
        sizes.a2_lines ? detail::ceil_div(sizes.a2_lines, W) : 0,
        sizes.a4_lines ? detail::ceil_div(sizes.a4_lines, W) : 0,
        sizes.a3_lines ? detail::ceil_div(sizes.a3_lines, L) : 0,
        sizes.a1_lines ? detail::ceil_div(sizes.a1_lines, L) : 0,
    };
    uint64_t grant[4] = {0, 0, 0, 0};
    uint64_t budget = S;
    for (int i = 0; i < 4; ++i)  // every nonzero class keeps at least one set
        if (wants[i] && budget > 0) {
            grant[i] = 1;
            --budget;
        }
    for (int i = 0; i < 4; ++i)
        if (wants[i] > grant[i]) {
            const uint64_t extra = std::min(budget, wants[i] - grant[i]);
            grant[i] += extra;
            budget -= extra;
        }
    const uint64_t n2 = grant[0], n4 = grant[1], n3 = grant[2], n1 = grant[3];

    ShadowLayout layout;
    layout.geometry = geometry;
    layout.sizes = sizes;
    layout.big_l = L;
    layout.p3_lines = sizes.a3_lines;
    layout.p4_lines = sizes.a4_lines;
    uint64_t next = 0;
    layout.ranges[static_cast<size_t>(DataClass::A2)] = {next, n2};
    next += n2;
    layout.ranges[static_cast<size_t>(DataClass::A4)] = {next, n4};
    next += n4;
    layout.ranges[static_cast<size_t>(DataClass::A3)] = {next, n3};
    next += n3;
    layout.ranges[static_cast<size_t>(DataClass::A1)] = {next, n1};
    return layout;
}

}  // namespace cmo
