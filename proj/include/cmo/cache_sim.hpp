#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"
#include "trace.hpp"

namespace cmo {

enum class HitLevel : uint8_t { L1, LLC, Miss };

inline const char* to_string(HitLevel l) {
    switch (l) {
        case HitLevel::L1: return "l1";
        case HitLevel::LLC: return "llc";
        default: return "miss";
    }
}

/// Result of a single simulated access.
struct AccessOutcome {
    HitLevel level = HitLevel::L1;
    uint64_t evicted_line = kNoLine;  // L1 victim, if any
    AbortCause abort_cause = AbortCause::DirtyL1Eviction;
    bool aborted = false;

    static constexpr uint64_t kNoLine = ~0ull;
    bool caused_abort() const { return aborted; }
    bool has_eviction() const { return evicted_line != kNoLine; }
};

enum class TxStatus : uint8_t { Active, Committed, Aborted };

/// Live transaction state: the tracked read/write sets (as line addresses)
/// and the access count since tx_begin.
struct TxContext {
    uint64_t id = 0;
    TxStatus status = TxStatus::Active;
    AbortCause abort_cause = AbortCause::DirtyL1Eviction;
    std::vector<uint64_t> tracked_lines;  // read set (writes included, counted once)
    std::vector<uint64_t> written_lines;  // write set
    uint64_t accesses = 0;
    uint64_t l1_hits = 0;
    uint64_t llc_hits = 0;
    uint64_t misses = 0;

    uint64_t read_set_size() const { return tracked_lines.size(); }
    uint64_t write_set_size() const { return written_lines.size(); }
};

struct CommitRecord {
    uint64_t tx_id = 0;
    uint64_t accesses = 0;
    uint64_t l1_hits = 0;
    uint64_t llc_hits = 0;
    uint64_t misses = 0;
    uint64_t read_set_lines = 0;
    uint64_t write_set_lines = 0;
};

/// Two-level inclusive set-associative cache with per-set LRU replacement
/// and TSX-style transactional tracking.
///
/// Write sets must stay in L1: evicting a transactionally written line
/// aborts with DirtyL1Eviction. Read sets must stay in the LLC: evicting a
/// tracked line from the LLC aborts with ReadsetExceedsLlc. Clean L1
/// evictions of read-only lines do not abort. LLC recency is updated on
/// installs only, never on L1 hits.
class CacheSim {
public:
    explicit CacheSim(const CacheGeometry& g = {}) : geo_(g) {
        geo_.validate();
        l1_.assign(geo_.l1_sets * geo_.l1_ways, kEmpty);
        llc_.assign(geo_.llc_sets * geo_.llc_ways, kEmpty);
        line_shift_ = 0;
        while ((1ull << line_shift_) < geo_.line_size_bytes) ++line_shift_;
        l1_set_mask_ = geo_.l1_sets - 1;
        llc_set_mask_ = geo_.llc_sets - 1;
    }

    const CacheGeometry& geometry() const { return geo_; }

    // -- aggregate counters ---------------------------------------------
    uint64_t total_accesses() const { return accesses_; }
    uint64_t total_l1_hits() const { return l1_hits_; }
    uint64_t total_llc_hits() const { return llc_hits_; }
    uint64_t total_misses() const { return misses_; }

    void set_access_log(std::ostream* os) { log_ = os; }

    // -- non-transactional access ---------------------------------------
    AccessOutcome access(const MemRef& ref) {
        if (tx_ && tx_->status == TxStatus::Active)
            throw std::logic_error("access() while a transaction is active");
        return do_access(ref, /*in_tx=*/false);
    }

    // -- transactions -----------------------------------------------------
    TxContext& tx_begin() {
        if (tx_ && tx_->status == TxStatus::Active)
            throw std::logic_error("tx_begin: transaction already active");
        tx_.emplace();
        tx_->id = next_tx_id_++;
        return *tx_;
    }

    AccessOutcome tx_access(const MemRef& ref) {
        if (!tx_ || tx_->status != TxStatus::Active)
            throw std::logic_error("tx_access: no active transaction");
        AccessOutcome out = do_access(ref, /*in_tx=*/true);
        if (out.aborted) abort_tx(out.abort_cause);
        return out;
    }

    CommitRecord tx_end() {
        if (!tx_) throw std::logic_error("tx_end: no transaction");
        if (tx_->status == TxStatus::Aborted)
            throw std::logic_error("tx_end: transaction is aborted");
        // Commit: dirty lines are written back, i.e. marked clean.
        for (uint64_t line : tx_->written_lines) {
            if (uint64_t* s = find_slot(l1_, geo_.l1_ways, l1_index(line), line))
                *s &= ~(kDirty | kTxWrite | kTxSeen);
            if (uint64_t* s = find_slot(llc_, geo_.llc_ways, llc_index(line), line))
                *s &= ~(kDirty | kTxTrack);
        }
        for (uint64_t line : tx_->tracked_lines) {
            if (uint64_t* s = find_slot(l1_, geo_.l1_ways, l1_index(line), line))
                *s &= ~(kTxWrite | kTxSeen);
            if (uint64_t* s = find_slot(llc_, geo_.llc_ways, llc_index(line), line))
                *s &= ~kTxTrack;
        }
        tx_->status = TxStatus::Committed;
        CommitRecord rec{tx_->id,      tx_->accesses,
                         tx_->l1_hits, tx_->llc_hits,
                         tx_->misses,  tx_->read_set_size(),
                         tx_->write_set_size()};
        return rec;
    }

    bool tx_active() const { return tx_ && tx_->status == TxStatus::Active; }
    const TxContext* current_tx() const { return tx_ ? &*tx_ : nullptr; }

    /// Test hook: whether a line is resident at the given level.
    bool resident_l1(uint64_t line) const {
        return find_slot_const(l1_, geo_.l1_ways, l1_index(line), line) != nullptr;
    }
    bool resident_llc(uint64_t line) const {
        return find_slot_const(llc_, geo_.llc_ways, llc_index(line), line) != nullptr;
    }

private:
    static constexpr uint64_t kEmpty = ~0ull;
    // Line addresses are >= 8-byte aligned, so the low three bits carry flags.
    static constexpr uint64_t kDirty = 1;    // L1 and LLC: needs write-back
    static constexpr uint64_t kTxWrite = 2;  // L1: in current tx write set
    static constexpr uint64_t kTxSeen = 4;   // L1: first-touch bookkeeping
    static constexpr uint64_t kTxTrack = 2;  // LLC: in current tx read set
    static constexpr uint64_t kFlagMask = 7;

    uint64_t l1_index(uint64_t line) const {
        return ((line >> line_shift_) & l1_set_mask_) * geo_.l1_ways;
    }
    uint64_t llc_index(uint64_t line) const {
        return ((line >> line_shift_) & llc_set_mask_) * geo_.llc_ways;
    }

    static uint64_t* find_slot(std::vector<uint64_t>& v, uint64_t ways, uint64_t base,
                               uint64_t line) {
        for (uint64_t i = 0; i < ways; ++i)
            if ((v[base + i] & ~kFlagMask) == line && v[base + i] != kEmpty) return &v[base + i];
        return nullptr;
    }
    static const uint64_t* find_slot_const(const std::vector<uint64_t>& v, uint64_t ways,
                                           uint64_t base, uint64_t line) {
        for (uint64_t i = 0; i < ways; ++i)
            if ((v[base + i] & ~kFlagMask) == line && v[base + i] != kEmpty) return &v[base + i];
        return nullptr;
    }

    static void move_to_front(uint64_t* set, uint64_t pos) {
        const uint64_t v = set[pos];
        for (uint64_t j = pos; j > 0; --j) set[j] = set[j - 1];
        set[0] = v;
    }

    AccessOutcome do_access(const MemRef& ref, bool in_tx) {
        const uint64_t line = ref.address & ~((1ull << line_shift_) - 1);
        const bool is_write = ref.kind == AccessKind::Write;
        AccessOutcome out;
        ++accesses_;
        if (in_tx) ++tx_->accesses;

        uint64_t* l1_set = &l1_[l1_index(line)];
        for (uint64_t i = 0; i < geo_.l1_ways; ++i) {
            uint64_t v = l1_set[i];
            if (v != kEmpty && (v & ~kFlagMask) == line) {
                // L1 hit.
                if (in_tx) track_hit(l1_set, i, line, is_write);
                else if (is_write) l1_set[i] |= kDirty;
                move_to_front(l1_set, i);
                ++l1_hits_;
                if (in_tx) ++tx_->l1_hits;
                out.level = HitLevel::L1;
                log_access(ref, out);
                return out;
            }
        }

        // L1 miss: consult the LLC.
        uint64_t* llc_set = &llc_[llc_index(line)];
        uint64_t* llc_slot = find_slot(llc_, geo_.llc_ways, llc_index(line), line);
        if (llc_slot) {
            out.level = HitLevel::LLC;
            ++llc_hits_;
            if (in_tx) {
                ++tx_->llc_hits;
                if (!(*llc_slot & kTxTrack)) {
                    *llc_slot |= kTxTrack;
                    tx_->tracked_lines.push_back(line);
                }
            }
            move_to_front(llc_set, static_cast<uint64_t>(llc_slot - llc_set));
        } else {
            out.level = HitLevel::Miss;
            ++misses_;
            if (in_tx) {
                ++tx_->misses;
                tx_->tracked_lines.push_back(line);
            }
            // Install in LLC, possibly evicting its LRU way.
            uint64_t victim = llc_set[geo_.llc_ways - 1];
            if (victim != kEmpty) {
                if (in_tx && (victim & kTxTrack)) {
                    out.aborted = true;
                    out.abort_cause = AbortCause::ReadsetExceedsLlc;
                    log_access(ref, out);
                    return out;
                }
                back_invalidate(victim & ~kFlagMask);
            }
            for (uint64_t j = geo_.llc_ways - 1; j > 0; --j) llc_set[j] = llc_set[j - 1];
            llc_set[0] = line | (in_tx ? kTxTrack : 0);
        }

        // Install in L1.
        uint64_t victim = l1_set[geo_.l1_ways - 1];
        if (victim != kEmpty) {
            if (in_tx && (victim & kTxWrite)) {
                out.aborted = true;
                out.abort_cause = AbortCause::DirtyL1Eviction;
                log_access(ref, out);
                return out;
            }
            out.evicted_line = victim & ~kFlagMask;
            if (victim & kDirty) {
                // Write-back: the LLC copy becomes dirty.
                if (uint64_t* s = find_slot(llc_, geo_.llc_ways, llc_index(out.evicted_line),
                                            out.evicted_line))
                    *s |= kDirty;
            }
        }
        uint64_t flags = 0;
        if (is_write) flags |= kDirty;
        if (in_tx) {
            flags |= kTxSeen;
            if (is_write) {
                flags |= kTxWrite;
                tx_->written_lines.push_back(line);
            }
        }
        for (uint64_t j = geo_.l1_ways - 1; j > 0; --j) l1_set[j] = l1_set[j - 1];
        l1_set[0] = line | flags;

        log_access(ref, out);
        return out;
    }

    void track_hit(uint64_t* l1_set, uint64_t pos, uint64_t line, bool is_write) {
        uint64_t& v = l1_set[pos];
        if (!(v & kTxSeen)) {
            v |= kTxSeen;
            if (uint64_t* s = find_slot(llc_, geo_.llc_ways, llc_index(line), line)) {
                if (!(*s & kTxTrack)) {
                    *s |= kTxTrack;
                    tx_->tracked_lines.push_back(line);
                }
            } else {
                // Inclusion guarantees an LLC copy.
                throw std::logic_error("inclusion violated: L1 line missing from LLC");
            }
        }
        if (is_write) {
            if (!(v & kTxWrite)) {
                v |= kTxWrite;
                tx_->written_lines.push_back(line);
            }
            v |= kDirty;
        }
    }

    void back_invalidate(uint64_t line) {
        const uint64_t base = l1_index(line);
        for (uint64_t i = 0; i < geo_.l1_ways; ++i) {
            if (l1_[base + i] != kEmpty && (l1_[base + i] & ~kFlagMask) == line) {
                for (uint64_t j = i; j + 1 < geo_.l1_ways; ++j) l1_[base + j] = l1_[base + j + 1];
                l1_[base + geo_.l1_ways - 1] = kEmpty;
                return;
            }
        }
    }

    void abort_tx(AbortCause cause) {
        tx_->status = TxStatus::Aborted;
        tx_->abort_cause = cause;
        // Speculative writes are discarded: written lines leave both levels.
        for (uint64_t line : tx_->written_lines) {
            const uint64_t b1 = l1_index(line);
            for (uint64_t i = 0; i < geo_.l1_ways; ++i) {
                if (l1_[b1 + i] != kEmpty && (l1_[b1 + i] & ~kFlagMask) == line) {
                    for (uint64_t j = i; j + 1 < geo_.l1_ways; ++j) l1_[b1 + j] = l1_[b1 + j + 1];
                    l1_[b1 + geo_.l1_ways - 1] = kEmpty;
                    break;
                }
            }
            const uint64_t b2 = llc_index(line);
            for (uint64_t i = 0; i < geo_.llc_ways; ++i) {
                if (llc_[b2 + i] != kEmpty && (llc_[b2 + i] & ~kFlagMask) == line) {
                    for (uint64_t j = i; j + 1 < geo_.llc_ways; ++j)
                        llc_[b2 + j] = llc_[b2 + j + 1];
                    llc_[b2 + geo_.llc_ways - 1] = kEmpty;
                    break;
                }
            }
        }
        // Read-tracked lines stay resident; only the tracking flags go.
        for (uint64_t line : tx_->tracked_lines) {
            if (uint64_t* s = find_slot(l1_, geo_.l1_ways, l1_index(line), line))
                *s &= ~(kTxWrite | kTxSeen);
            if (uint64_t* s = find_slot(llc_, geo_.llc_ways, llc_index(line), line))
                *s &= ~kTxTrack;
        }
    }

    void log_access(const MemRef& ref, const AccessOutcome& out) {
        if (!log_) return;
        *log_ << (ref.kind == AccessKind::Write ? "w" : "r") << " 0x" << std::hex << ref.address
              << std::dec << ' ' << to_string(out.level) << " tx="
              << (tx_ && tx_->status == TxStatus::Active ? static_cast<int64_t>(tx_->id) : -1)
              << '\n';
    }

    CacheGeometry geo_;
    std::vector<uint64_t> l1_;
    std::vector<uint64_t> llc_;
    unsigned line_shift_ = 6;
    uint64_t l1_set_mask_ = 63;
    uint64_t llc_set_mask_ = 8191;
    std::optional<TxContext> tx_;
    uint64_t next_tx_id_ = 1;
    uint64_t accesses_ = 0;
    uint64_t l1_hits_ = 0;
    uint64_t llc_hits_ = 0;
    uint64_t misses_ = 0;
    std::ostream* log_ = nullptr;
};

}  // namespace cmo
