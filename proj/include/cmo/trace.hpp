#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cmo {

/// Ordered list of line addresses, compressed as arithmetic runs.
/// Reload and preload phases touch memory sequentially, so their miss
/// sequences collapse to a handful of runs.
class AddressRunList {
public:
    struct Run {
        uint64_t start = 0;
        int64_t stride = 0;
        uint64_t count = 0;
        bool operator==(const Run&) const = default;
    };

    void append(uint64_t address) {
        if (!runs_.empty()) {
            Run& last = runs_.back();
            if (last.count == 1) {
                last.stride = static_cast<int64_t>(address) - static_cast<int64_t>(last.start);
                last.count = 2;
                ++total_;
                return;
            }
            if (address == next_of(last)) {
                ++last.count;
                ++total_;
                return;
            }
        }
        runs_.push_back({address, 0, 1});
        ++total_;
    }

    uint64_t size() const { return total_; }
    bool empty() const { return total_ == 0; }
    const std::vector<Run>& runs() const { return runs_; }

    uint64_t at(uint64_t index) const {
        for (const Run& r : runs_) {
            if (index < r.count)
                return static_cast<uint64_t>(static_cast<int64_t>(r.start) +
                                             r.stride * static_cast<int64_t>(index));
            index -= r.count;
        }
        throw std::out_of_range("AddressRunList::at");
    }

    /// Project every address through `shift` (e.g. 12 for page granularity)
    /// and re-compress.
    AddressRunList projected(unsigned shift) const {
        AddressRunList out;
        for (const Run& r : runs_)
            for (uint64_t i = 0; i < r.count; ++i)
                out.append((static_cast<uint64_t>(static_cast<int64_t>(r.start) +
                                                  r.stride * static_cast<int64_t>(i))) >>
                           shift);
        return out;
    }

    bool operator==(const AddressRunList&) const = default;

private:
    static uint64_t next_of(const Run& r) {
        return static_cast<uint64_t>(static_cast<int64_t>(r.start) +
                                     r.stride * static_cast<int64_t>(r.count));
    }

    std::vector<Run> runs_;
    uint64_t total_ = 0;
};

enum class AbortCause : uint8_t { DirtyL1Eviction, ReadsetExceedsLlc };

inline const char* to_string(AbortCause c) {
    return c == AbortCause::DirtyL1Eviction ? "dirty_l1_eviction" : "readset_exceeds_llc";
}

/// Data classes of the in-transaction layout. A1/A2 hold access-leaky data
/// (read-only / read-write); A3/A4 hold non-leaky data streamed through the
/// P3/P4 partitions.
enum class DataClass : uint8_t { A1, A2, A3, A4 };

inline const char* to_string(DataClass c) {
    switch (c) {
        case DataClass::A1: return "A1";
        case DataClass::A2: return "A2";
        case DataClass::A3: return "A3";
        default: return "A4";
    }
}

inline bool is_leaky(DataClass c) { return c == DataClass::A1 || c == DataClass::A2; }
inline bool is_read_write(DataClass c) { return c == DataClass::A2 || c == DataClass::A4; }

namespace events {

struct TxBegin {
    uint64_t tx_id = 0;
    bool operator==(const TxBegin&) const = default;
};

struct TxEnd {
    uint64_t tx_id = 0;
    uint64_t accesses = 0;
    uint64_t hits = 0;
    uint64_t in_tx_misses = 0;  // LLC misses observed inside the transaction
    bool operator==(const TxEnd&) const = default;
};

struct TxAbort {
    uint64_t tx_id = 0;
    AbortCause cause = AbortCause::DirtyL1Eviction;
    uint64_t accesses = 0;  // work discarded and replayed
    uint64_t misses = 0;
    bool operator==(const TxAbort&) const = default;
};

/// Sequential copy between application memory and the shadow arena,
/// performed outside transactions. Records the LLC misses it caused.
struct Reload {
    DataClass cls = DataClass::A3;
    uint64_t partition_index = 0;
    uint64_t accesses = 0;
    AddressRunList misses;
    bool operator==(const Reload&) const = default;
};

/// Double preload of the upcoming transaction's shadow working set.
struct Preload {
    uint64_t accesses = 0;
    AddressRunList misses;
    bool operator==(const Preload&) const = default;
};

/// Accesses performed outside any leaky section (baseline modes,
/// unprotected phases). Misses here are observable like any other
/// inter-transaction miss.
struct PlainPhase {
    std::string label;
    uint64_t accesses = 0;
    AddressRunList misses;
    bool operator==(const PlainPhase&) const = default;
};

}  // namespace events

using TraceEvent = std::variant<events::TxBegin, events::TxEnd, events::TxAbort,
                                events::Reload, events::Preload, events::PlainPhase>;

/// The observable record of one run: transaction boundaries, reload/preload
/// phases with their miss addresses, and any unprotected access phases.
class TxTrace {
public:
    void push(TraceEvent ev) { events_.push_back(std::move(ev)); }

    const std::vector<TraceEvent>& events() const { return events_; }
    bool empty() const { return events_.empty(); }

    void append(TxTrace&& other) {
        for (auto& ev : other.events_) events_.push_back(std::move(ev));
        other.events_.clear();
    }

    uint64_t abort_count() const {
        uint64_t n = 0;
        for (const auto& ev : events_)
            if (std::holds_alternative<events::TxAbort>(ev)) ++n;
        return n;
    }

    uint64_t committed_tx_count() const {
        uint64_t n = 0;
        for (const auto& ev : events_)
            if (std::holds_alternative<events::TxEnd>(ev)) ++n;
        return n;
    }

    /// Checks begin/end/abort pairing (depth <= 1, no dangling begin) and
    /// that reload/preload/plain phases appear only outside transactions.
    void validate_nesting() const;

    /// Line-delimited serialization, one record per event.
    void write_records(std::ostream& os) const;

    bool operator==(const TxTrace&) const = default;

private:
    std::vector<TraceEvent> events_;
};

inline void TxTrace::validate_nesting() const {
    bool open = false;
    for (const auto& ev : events_) {
        if (std::holds_alternative<events::TxBegin>(ev)) {
            if (open) throw std::runtime_error("trace: nested tx_begin");
            open = true;
        } else if (std::holds_alternative<events::TxEnd>(ev) ||
                   std::holds_alternative<events::TxAbort>(ev)) {
            if (!open) throw std::runtime_error("trace: tx_end/tx_abort without tx_begin");
            open = false;
        } else {
            if (open) throw std::runtime_error("trace: reload/preload/plain phase inside tx");
        }
    }
    if (open) throw std::runtime_error("trace: unterminated transaction");
}

inline void write_miss_list(std::ostream& os, const AddressRunList& misses) {
    os << " misses=" << misses.size();
    for (const auto& r : misses.runs())
        os << " run=0x" << std::hex << r.start << std::dec << ":" << r.stride << ":" << r.count;
}

inline void TxTrace::write_records(std::ostream& os) const {
    for (const auto& ev : events_) {
        if (const auto* b = std::get_if<events::TxBegin>(&ev)) {
            os << "tx_begin id=" << b->tx_id << '\n';
        } else if (const auto* e = std::get_if<events::TxEnd>(&ev)) {
            os << "tx_end id=" << e->tx_id << " accesses=" << e->accesses << " hits=" << e->hits
               << " in_tx_misses=" << e->in_tx_misses << '\n';
        } else if (const auto* a = std::get_if<events::TxAbort>(&ev)) {
            os << "tx_abort id=" << a->tx_id << " cause=" << to_string(a->cause)
               << " accesses=" << a->accesses << '\n';
        } else if (const auto* r = std::get_if<events::Reload>(&ev)) {
            os << "reload class=" << to_string(r->cls) << " partition=" << r->partition_index
               << " accesses=" << r->accesses;
            write_miss_list(os, r->misses);
            os << '\n';
        } else if (const auto* p = std::get_if<events::Preload>(&ev)) {
            os << "preload accesses=" << p->accesses;
            write_miss_list(os, p->misses);
            os << '\n';
        } else if (const auto* pl = std::get_if<events::PlainPhase>(&ev)) {
            os << "plain label=" << pl->label << " accesses=" << pl->accesses;
            write_miss_list(os, pl->misses);
            os << '\n';
        }
    }
}

}  // namespace cmo
