#pragma once

#include <cstdint>
#include <stdexcept>
#include <variant>

#include "trace.hpp"

namespace cmo {

/// Synthetic cost model. Costs are abstract units, not cycles: a hit at any
/// cache level costs hit_cost, an LLC miss costs miss_cost, and every
/// transaction attempt (committed or aborted) pays tx_overhead. Aborted work
/// is replayed in full, so its accesses simply appear again in the trace.
struct CostModel {
    uint64_t hit_cost = 1;
    uint64_t miss_cost = 100;
    uint64_t tx_overhead = 200;

    void validate() const {
        if (hit_cost == 0 && miss_cost == 0 && tx_overhead == 0)
            throw std::invalid_argument("cost model: all costs are zero");
    }
};

inline uint64_t cost_of(const TxTrace& trace, const CostModel& model) {
    uint64_t hits = 0, misses = 0, attempts = 0;
    for (const auto& ev : trace.events()) {
        if (const auto* e = std::get_if<events::TxEnd>(&ev)) {
            hits += e->accesses - e->in_tx_misses;
            misses += e->in_tx_misses;
            ++attempts;
        } else if (const auto* a = std::get_if<events::TxAbort>(&ev)) {
            hits += a->accesses - a->misses;
            misses += a->misses;
            ++attempts;
        } else if (const auto* r = std::get_if<events::Reload>(&ev)) {
            hits += r->accesses - r->misses.size();
            misses += r->misses.size();
        } else if (const auto* p = std::get_if<events::Preload>(&ev)) {
            hits += p->accesses - p->misses.size();
            misses += p->misses.size();
        } else if (const auto* pl = std::get_if<events::PlainPhase>(&ev)) {
            hits += pl->accesses - pl->misses.size();
            misses += pl->misses.size();
        }
    }
    return hits * model.hit_cost + misses * model.miss_cost + attempts * model.tx_overhead;
}

}  // namespace cmo
