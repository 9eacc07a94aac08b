#pragma once

#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "trace.hpp"

namespace cmo {

// What the modeled attacker sees: transaction boundary structure with
// per-transaction access counts, abort events, and the addresses of misses
// occurring outside transactions. Intra-transaction addresses are invisible.
namespace obs {

struct Begin {
    bool operator==(const Begin&) const = default;
};
struct End {
    uint64_t accesses = 0;
    bool operator==(const End&) const = default;
};
struct Abort {
    AbortCause cause = AbortCause::DirtyL1Eviction;
    uint64_t accesses = 0;
    bool operator==(const Abort&) const = default;
};
struct Misses {
    AddressRunList addresses;
    bool operator==(const Misses&) const = default;
};

using Event = std::variant<Begin, End, Abort, Misses>;

inline std::string to_string(const Event& ev) {
    std::ostringstream os;
    if (std::holds_alternative<Begin>(ev)) {
        os << "begin";
    } else if (const auto* e = std::get_if<End>(&ev)) {
        os << "end(" << e->accesses << ")";
    } else if (const auto* a = std::get_if<Abort>(&ev)) {
        os << "abort(" << cmo::to_string(a->cause) << "," << a->accesses << ")";
    } else {
        const auto& m = std::get<Misses>(ev).addresses;
        os << "misses[" << m.size() << "]";
        for (size_t i = 0; i < std::min<uint64_t>(m.size(), 4); ++i)
            os << (i ? "," : "{") << std::hex << m.at(i) << std::dec;
        if (!m.empty()) os << (m.size() > 4 ? ",...}" : "}");
    }
    return os.str();
}

}  // namespace obs

struct ObservableTrace {
    std::vector<obs::Event> events;
    bool operator==(const ObservableTrace&) const = default;
};

struct Verdict {
    bool pass = true;
    uint64_t divergence_index = 0;  // meaningful only when !pass
    std::string detail;

    static Verdict ok() { return {}; }
    static Verdict fail(uint64_t index, std::string detail) {
        return {false, index, std::move(detail)};
    }
};

/// Projects the runtime trace onto the attacker-visible events. Rejects
/// malformed traces: broken begin/end nesting or a committed transaction
/// that recorded misses (commit implies a miss-free body).
/// `address_shift` coarsens miss addresses; 12 gives page granularity.
inline ObservableTrace extract_observable(const TxTrace& trace, unsigned address_shift = 0) {
    trace.validate_nesting();
    ObservableTrace out;
    auto add_misses = [&](const AddressRunList& misses) {
        if (misses.empty()) return;
        out.events.push_back(
            obs::Misses{address_shift ? misses.projected(address_shift) : misses});
    };
    for (const auto& ev : trace.events()) {
        if (std::holds_alternative<events::TxBegin>(ev)) {
            out.events.push_back(obs::Begin{});
        } else if (const auto* e = std::get_if<events::TxEnd>(&ev)) {
            if (e->in_tx_misses != 0)
                throw std::runtime_error("malformed trace: committed transaction with " +
                                         std::to_string(e->in_tx_misses) + " misses inside");
            out.events.push_back(obs::End{e->accesses});
        } else if (const auto* a = std::get_if<events::TxAbort>(&ev)) {
            out.events.push_back(obs::Abort{a->cause, a->accesses});
        } else if (const auto* r = std::get_if<events::Reload>(&ev)) {
            add_misses(r->misses);
        } else if (const auto* p = std::get_if<events::Preload>(&ev)) {
            add_misses(p->misses);
        } else if (const auto* pl = std::get_if<events::PlainPhase>(&ev)) {
            add_misses(pl->misses);
        }
    }
    return out;
}

inline Verdict compare_observable(const ObservableTrace& a, const ObservableTrace& b) {
    const uint64_t n = std::min(a.events.size(), b.events.size());
    for (uint64_t i = 0; i < n; ++i) {
        if (!(a.events[i] == b.events[i]))
            return Verdict::fail(i, obs::to_string(a.events[i]) + " vs " +
                                        obs::to_string(b.events[i]));
    }
    if (a.events.size() != b.events.size())
        return Verdict::fail(n, "trace lengths differ: " + std::to_string(a.events.size()) +
                                    " vs " + std::to_string(b.events.size()));
    return Verdict::ok();
}

/// Runs the program on two inputs of identical public shape (same lengths
/// and parameters, same seed; randomness is public and reused) and requires
/// the observable traces to be exactly equal.
///
/// `run(which)` executes input 0 or 1 on a fresh runtime and returns its
/// trace. `shape_a`/`shape_b` are the public parameters of the two inputs.
inline Verdict check_pairwise(const std::function<TxTrace(int)>& run,
                              const std::vector<uint64_t>& shape_a,
                              const std::vector<uint64_t>& shape_b,
                              unsigned address_shift = 0) {
    if (shape_a != shape_b)
        throw std::invalid_argument("check_pairwise: public parameters differ");
    const ObservableTrace a = extract_observable(run(0), address_shift);
    const ObservableTrace b = extract_observable(run(1), address_shift);
    return compare_observable(a, b);
}

/// Passes iff the trace contains no abort events.
inline Verdict check_abort_freedom(const TxTrace& trace) {
    uint64_t i = 0;
    for (const auto& ev : trace.events()) {
        if (const auto* a = std::get_if<events::TxAbort>(&ev))
            return Verdict::fail(i, "abort: " + std::string(to_string(a->cause)));
        ++i;
    }
    return Verdict::ok();
}

}  // namespace cmo
