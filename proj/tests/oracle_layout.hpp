#pragma once

// Exhaustive search over set-range assignments for the layout problem.
// Enumerates every split of L1 sets into (n1, n2, n3, n4) and every P4 value,
// deriving the best P3 from the constraint set:
//   a1 <= n1*L, a2 <= n2*W, P3 <= min(n3*L, a3), P4 <= min(n4*W, a4),
//   a1 + P3 + a2 + P4 < LLC lines,
//   ceil(a1/L) + ceil(P3/L) + a2 + P4 < L1 lines.
// Returns the maximal min(P3, P4) over all feasible assignments (the maximal
// single partition size when only one of A3/A4 is present), or nullopt when
// nothing is feasible.

#include <cstdint>
#include <optional>

#include "cmo/geometry.hpp"
#include "cmo/shadow_layout.hpp"

namespace cmo_test {

inline uint64_t cdiv(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

inline std::optional<uint64_t> best_min_partition(const cmo::SizeSpec& sz,
                                                  const cmo::CacheGeometry& g) {
    const uint64_t S = g.l1_sets, W = g.l1_ways, L = g.llc_lines_per_l1_set();
    const uint64_t l1 = g.l1_lines(), llc = g.llc_lines();
    std::optional<uint64_t> best;
    for (uint64_t n1 = 0; n1 <= S; ++n1) {
        if (sz.a1_lines > n1 * L) continue;
        for (uint64_t n2 = 0; n1 + n2 <= S; ++n2) {
            if (sz.a2_lines > n2 * W) continue;
            for (uint64_t n3 = 0; n1 + n2 + n3 <= S; ++n3) {
                const uint64_t n4 = S - n1 - n2 - n3;
                const uint64_t p3_cap = std::min(n3 * L, sz.a3_lines);
                const uint64_t p4_cap = std::min(n4 * W, sz.a4_lines);
                const uint64_t p4_min = sz.a4_lines ? 1 : 0;
                for (uint64_t p4 = p4_min; p4 <= p4_cap || p4 == 0; ++p4) {
                    const uint64_t l1_base = cdiv(sz.a1_lines, L) + sz.a2_lines + p4;
                    const uint64_t llc_base = sz.a1_lines + sz.a2_lines + p4;
                    if (l1_base < l1 && llc_base < llc) {
                        uint64_t p3 = std::min(p3_cap, (l1 - 1 - l1_base) * L);
                        p3 = std::min(p3, llc - 1 - llc_base);
                        const bool ok3 = !sz.a3_lines || p3 >= 1;
                        const bool ok4 = !sz.a4_lines || p4 >= 1;
                        if (ok3 && ok4) {
                            uint64_t score;
                            if (sz.a3_lines && sz.a4_lines) score = std::min(p3, p4);
                            else if (sz.a3_lines) score = p3;
                            else score = p4;
                            if (!best || score > *best) best = score;
                        }
                    }
                    if (p4 == 0) break;
                }
            }
        }
    }
    return best;
}

}  // namespace cmo_test
