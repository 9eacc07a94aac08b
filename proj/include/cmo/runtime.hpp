#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cache_sim.hpp"
#include "cost_model.hpp"
#include "geometry.hpp"
#include "shadow_layout.hpp"
#include "trace.hpp"

namespace cmo {

/// Simulation context for one run: the cache model plus a bump allocator
/// for simulated application addresses. Application arrays and the shadow
/// arena live in one flat address space (physical = virtual, no paging).
class SimContext {
public:
    explicit SimContext(const CacheGeometry& g = {}) : cache_(g) {}

    CacheSim& cache() { return cache_; }
    const CacheGeometry& geometry() const { return cache_.geometry(); }

    /// Reserves a line-aligned application address range.
    uint64_t alloc(uint64_t bytes) {
        const uint64_t line = geometry().line_size_bytes;
        const uint64_t base = next_app_;
        next_app_ += (bytes + line - 1) / line * line;
        return base;
    }

private:
    CacheSim cache_;
    uint64_t next_app_ = 0x100000000ull;  // clear of the shadow arena
};

/// Records one unprotected access phase (baseline modes, plain pre/post
/// passes) as a PlainPhase trace event on destruction.
class PlainScope {
public:
    PlainScope(SimContext& sim, TxTrace& trace, std::string label)
        : sim_(sim), trace_(trace), label_(std::move(label)) {}
    PlainScope(const PlainScope&) = delete;
    ~PlainScope() {
        trace_.push(events::PlainPhase{std::move(label_), accesses_, std::move(misses_)});
    }

    void access(uint64_t address, AccessKind kind) {
        ++accesses_;
        const AccessOutcome out = sim_.cache().access({address, kind});
        if (out.level == HitLevel::Miss) misses_.append(sim_.geometry().line_of(address));
    }
    void read(uint64_t address) { access(address, AccessKind::Read); }
    void write(uint64_t address) { access(address, AccessKind::Write); }

    /// Sequential touch of a whole range, one access per line.
    void touch_range(uint64_t base, uint64_t bytes, AccessKind kind) {
        const uint64_t line = sim_.geometry().line_size_bytes;
        for (uint64_t off = 0; off < bytes; off += line) access(base + off, kind);
    }

private:
    SimContext& sim_;
    TxTrace& trace_;
    std::string label_;
    uint64_t accesses_ = 0;
    AddressRunList misses_;
};

enum class PolicyKind : uint8_t { Dynamic, Static, Manual };

/// How transaction boundaries are placed: Dynamic closes a transaction when
/// the next non-leaky access would overflow the loaded P3/P4 windows;
/// Static(k) closes after every k container accesses; Manual never closes.
struct PartitionPolicy {
    PolicyKind kind = PolicyKind::Dynamic;
    uint64_t static_k = 8;

    static PartitionPolicy dynamic() { return {PolicyKind::Dynamic, 0}; }
    static PartitionPolicy static_k_of(uint64_t k) {
        if (k == 0) throw std::invalid_argument("static policy: k must be >= 1");
        return {PolicyKind::Static, k};
    }
    static PartitionPolicy manual() { return {PolicyKind::Manual, 0}; }
};

struct CannotCompleteError : std::runtime_error {
    explicit CannotCompleteError(const std::string& what) : std::runtime_error(what) {}
};

class LeakySection;

template <typename T>
class ObRO {
public:
    T read_next();
    void reset();

private:
    friend class LeakySection;
    ObRO(LeakySection* s, size_t idx, std::span<const T> v) : sec_(s), idx_(idx), values_(v) {}
    LeakySection* sec_;
    size_t idx_;
    std::span<const T> values_;
};

template <typename T>
class ObRW {
public:
    void write_next(T value);
    void reset();

private:
    friend class LeakySection;
    ObRW(LeakySection* s, size_t idx, std::span<T> v) : sec_(s), idx_(idx), values_(v) {}
    LeakySection* sec_;
    size_t idx_;
    std::span<T> values_;
};

template <typename T>
class NobRO {
public:
    T read_at(uint64_t index);

private:
    friend class LeakySection;
    NobRO(LeakySection* s, size_t idx, std::span<const T> v) : sec_(s), idx_(idx), values_(v) {}
    LeakySection* sec_;
    size_t idx_;
    std::span<const T> values_;
};

template <typename T>
class NobRW {
public:
    T read_at(uint64_t index);
    void write_at(uint64_t index, T value);

private:
    friend class LeakySection;
    NobRW(LeakySection* s, size_t idx, std::span<T> v) : sec_(s), idx_(idx), values_(v) {}
    LeakySection* sec_;
    size_t idx_;
    std::span<T> values_;
};

/// One leaky section: registers typed containers, plans the shadow layout,
/// and runs every container access inside TSX-style transactions with
/// policy-driven boundaries.
///
/// Lifecycle: construct, register containers, begin_leaky(), access through
/// the handles, end_leaky(). Trace events go to the caller-owned TxTrace.
class LeakySection {
public:
    LeakySection(SimContext& sim, TxTrace& trace, PartitionPolicy policy)
        : sim_(sim), trace_(trace), policy_(policy) {}
    LeakySection(const LeakySection&) = delete;

    // -- container registration (before begin_leaky) ----------------------
    // `app_base` pins the simulated address of the backing array so that an
    // array shared across sections keeps a single address; 0 allocates.
    template <typename T>
    ObRO<T> ob_ro(std::span<const T> values, uint64_t width = sizeof(T), uint64_t app_base = 0) {
        return ObRO<T>(this, register_container(DataClass::A3, values.size(), width, app_base),
                       values);
    }
    template <typename T>
    ObRW<T> ob_rw(std::span<T> values, uint64_t width = sizeof(T), uint64_t app_base = 0) {
        return ObRW<T>(this, register_container(DataClass::A4, values.size(), width, app_base),
                       values);
    }
    template <typename T>
    NobRO<T> nob_ro(std::span<const T> values, uint64_t width = sizeof(T), uint64_t app_base = 0) {
        return NobRO<T>(this, register_container(DataClass::A1, values.size(), width, app_base),
                        values);
    }
    template <typename T>
    NobRW<T> nob_rw(std::span<T> values, uint64_t width = sizeof(T), uint64_t app_base = 0) {
        return NobRW<T>(this, register_container(DataClass::A2, values.size(), width, app_base),
                        values);
    }

    void begin_leaky() { begin_leaky(container_sizes()); }

    void begin_leaky(const SizeSpec& sizes) {
        if (state_ != State::Registering)
            throw std::logic_error("begin_leaky: section already begun");
        check_declared_capacity(sizes);
        layout_ = policy_.kind == PolicyKind::Manual ? plan_layout_manual(sizes, sim_.geometry())
                                                     : plan_layout(sizes, sim_.geometry());
        assign_regions();
        state_ = State::Active;
        initial_load();
        double_preload();
        tx_begin_internal();
    }

    /// Closes the final transaction and writes dirty A2/P4 data back to
    /// application memory. The section's trace is complete afterwards.
    TxTrace& end_leaky() {
        if (state_ != State::Active) throw std::logic_error("end_leaky: section not active");
        tx_end_internal();
        for (size_t i = 0; i < containers_.size(); ++i) {
            Container& c = containers_[i];
            if (c.cls == DataClass::A2) write_back_nob(c);
            if (c.cls == DataClass::A4) write_back_window(c);
        }
        state_ = State::Ended;
        return trace_;
    }

    const ShadowLayout& layout() const { return layout_; }
    bool failed() const { return state_ == State::Failed; }
    uint64_t boundary_count() const { return boundaries_; }

    /// Touches the upcoming transaction's whole shadow working set twice,
    /// sequentially and non-transactionally, so the transaction begins
    /// fully cache-resident.
    void double_preload() {
        uint64_t accesses = 0;
        AddressRunList misses;
        for (int pass = 0; pass < 2; ++pass) {
            for (const Container& c : containers_) {
                uint64_t first = 0, count = 0;
                if (c.cls == DataClass::A1 || c.cls == DataClass::A2) {
                    first = c.class_offset;
                    count = c.lines;
                } else {
                    first = c.share_offset;
                    count = c.win_lines;
                }
                for (uint64_t i = 0; i < count; ++i) {
                    const uint64_t addr = layout_.shadow_address(c.cls, first + i);
                    ++accesses;
                    const AccessOutcome out = sim_.cache().access({addr, AccessKind::Read});
                    if (out.level == HitLevel::Miss) misses.append(sim_.geometry().line_of(addr));
                }
            }
        }
        trace_.push(events::Preload{accesses, std::move(misses)});
    }

private:
    enum class State : uint8_t { Registering, Active, Failed, Ended };

    struct Container {
        DataClass cls;
        uint64_t elem_count = 0;
        uint64_t width = 0;
        uint64_t lines = 0;
        uint64_t app_base = 0;
        uint64_t class_offset = 0;  // A1/A2: line offset inside the class
        // Ob streaming state (A3/A4):
        uint64_t cursor = 0;           // element cursor
        uint64_t share_offset = 0;     // line offset of this container's window region
        uint64_t share_lines = 0;      // window region size
        uint64_t win_start = 0;        // first container line of the loaded window
        uint64_t win_lines = 0;
        uint64_t partitions_done = 0;
    };

    size_t register_container(DataClass cls, uint64_t count, uint64_t width, uint64_t app_base) {
        if (state_ != State::Registering)
            throw std::logic_error("containers must be registered before begin_leaky");
        const uint64_t line = sim_.geometry().line_size_bytes;
        if (width == 0 || (line % width != 0 && width % line != 0))
            throw std::invalid_argument("element width must divide the line size or be a multiple");
        Container c;
        c.cls = cls;
        c.elem_count = count;
        c.width = width;
        c.lines = (count * width + line - 1) / line;
        c.app_base = app_base ? app_base : sim_.alloc(count * width);
        containers_.push_back(c);
        return containers_.size() - 1;
    }

    SizeSpec container_sizes() const {
        SizeSpec s;
        for (const Container& c : containers_) {
            switch (c.cls) {
                case DataClass::A1: s.a1_lines += c.lines; break;
                case DataClass::A2: s.a2_lines += c.lines; break;
                case DataClass::A3: s.a3_lines += c.lines; break;
                case DataClass::A4: s.a4_lines += c.lines; break;
            }
        }
        return s;
    }

    void check_declared_capacity(const SizeSpec& declared) const {
        const SizeSpec actual = container_sizes();
        if (actual.a1_lines > declared.a1_lines || actual.a2_lines > declared.a2_lines ||
            actual.a3_lines > declared.a3_lines || actual.a4_lines > declared.a4_lines)
            throw std::invalid_argument("registered containers exceed the declared SizeSpec");
    }

    void assign_regions() {
        uint64_t off1 = 0, off2 = 0, off3 = 0, off4 = 0;
        uint64_t n_obro = 0, n_obrw = 0;
        for (const Container& c : containers_) {
            if (c.lines == 0) continue;
            if (c.cls == DataClass::A3) ++n_obro;
            if (c.cls == DataClass::A4) ++n_obrw;
        }
        const bool manual = policy_.kind == PolicyKind::Manual;
        if (!manual) {
            if (n_obro && layout_.p3_lines / n_obro == 0)
                throw InfeasibleError(LayoutConstraint::C1b, "P3 too small to split");
            if (n_obrw && layout_.p4_lines / n_obrw == 0)
                throw InfeasibleError(LayoutConstraint::C1b, "P4 too small to split");
        }
        for (Container& c : containers_) {
            switch (c.cls) {
                case DataClass::A1:
                    c.class_offset = off1;
                    off1 += c.lines;
                    break;
                case DataClass::A2:
                    c.class_offset = off2;
                    off2 += c.lines;
                    break;
                case DataClass::A3:
                case DataClass::A4: {
                    uint64_t& off = c.cls == DataClass::A3 ? off3 : off4;
                    const uint64_t share =
                        c.lines == 0 ? 0
                        : manual      ? c.lines
                        : (c.cls == DataClass::A3 ? layout_.p3_lines / n_obro
                                                  : layout_.p4_lines / n_obrw);
                    const uint64_t lsz = sim_.geometry().line_size_bytes;
                    const uint64_t elem_span = (c.width + lsz - 1) / lsz;
                    if (c.lines > 0 && share < elem_span)
                        throw InfeasibleError(LayoutConstraint::C1b,
                                              "partition smaller than one element");
                    c.share_offset = off;
                    c.share_lines = share;
                    off += share;
                    c.win_start = 0;
                    c.win_lines = std::min(share, c.lines);
                    break;
                }
            }
        }
    }

    void initial_load() {
        for (Container& c : containers_) {
            switch (c.cls) {
                case DataClass::A1:
                case DataClass::A2:
                    copy_in(c, c.class_offset, 0, c.lines, c.cls, 0);
                    break;
                case DataClass::A3:
                    copy_in(c, c.share_offset, 0, c.win_lines, DataClass::A3, 0);
                    break;
                case DataClass::A4:
                    // Write-only stream: the first window starts empty, the
                    // arena slots become resident during preload.
                    trace_.push(events::Reload{DataClass::A4, 0, 0, {}});
                    break;
            }
        }
    }

    /// Sequential copy application -> arena, recorded as a reload event.
    void copy_in(Container& c, uint64_t arena_first, uint64_t line_first, uint64_t count,
                 DataClass cls, uint64_t partition_index) {
        uint64_t accesses = 0;
        AddressRunList misses;
        const uint64_t line = sim_.geometry().line_size_bytes;
        for (uint64_t i = 0; i < count; ++i) {
            const uint64_t app = sim_.geometry().line_of(c.app_base + (line_first + i) * line);
            const uint64_t arena = layout_.shadow_address(cls, arena_first + i);
            for (const MemRef ref : {MemRef{app, AccessKind::Read}, MemRef{arena, AccessKind::Write}}) {
                ++accesses;
                const AccessOutcome out = sim_.cache().access(ref);
                if (out.level == HitLevel::Miss) misses.append(sim_.geometry().line_of(ref.address));
            }
        }
        trace_.push(events::Reload{cls, partition_index, accesses, std::move(misses)});
    }

    /// Sequential copy arena -> application for the written extent of an
    /// A4 window (or the whole of an A2 container at end_leaky).
    void copy_out(Container& c, uint64_t arena_first, uint64_t line_first, uint64_t count,
                  DataClass cls, uint64_t partition_index) {
        uint64_t accesses = 0;
        AddressRunList misses;
        const uint64_t line = sim_.geometry().line_size_bytes;
        for (uint64_t i = 0; i < count; ++i) {
            const uint64_t arena = layout_.shadow_address(cls, arena_first + i);
            const uint64_t app = sim_.geometry().line_of(c.app_base + (line_first + i) * line);
            for (const MemRef ref : {MemRef{arena, AccessKind::Read}, MemRef{app, AccessKind::Write}}) {
                ++accesses;
                const AccessOutcome out = sim_.cache().access(ref);
                if (out.level == HitLevel::Miss) misses.append(sim_.geometry().line_of(ref.address));
            }
        }
        trace_.push(events::Reload{cls, partition_index, accesses, std::move(misses)});
    }

    void write_back_nob(Container& c) { copy_out(c, c.class_offset, 0, c.lines, DataClass::A2, 0); }

    void write_back_window(Container& c) {
        const uint64_t line = sim_.geometry().line_size_bytes;
        const uint64_t extent = (c.cursor * c.width + line - 1) / line;  // lines written so far
        if (extent <= c.win_start) return;
        const uint64_t count = std::min(extent - c.win_start, c.win_lines);
        copy_out(c, c.share_offset, c.win_start, count, DataClass::A4, c.partitions_done);
    }

    // -- transaction plumbing ---------------------------------------------
    void tx_begin_internal() {
        CacheSim& cs = sim_.cache();
        const TxContext& tx = cs.tx_begin();
        trace_.push(events::TxBegin{tx.id});
        tx_refs_.clear();
        tx_container_accesses_ = 0;
    }

    void tx_end_internal() {
        const CommitRecord rec = sim_.cache().tx_end();
        trace_.push(events::TxEnd{rec.tx_id, rec.accesses, rec.l1_hits + rec.llc_hits, rec.misses});
    }

    void tx_ref(uint64_t address, AccessKind kind) {
        tx_refs_.push_back({address, kind});
        const AccessOutcome out = sim_.cache().tx_access({address, kind});
        if (out.aborted) handle_abort(out.abort_cause);
    }

    void record_abort(AbortCause cause) {
        const TxContext* tx = sim_.cache().current_tx();
        trace_.push(events::TxAbort{tx->id, cause, tx->accesses, tx->misses});
    }

    /// Replays the recorded transaction body from its begin point. Dynamic
    /// and Static policies retry once (an abort there is a bug signal);
    /// Manual retries up to kManualRetryCap times before giving up.
    void handle_abort(AbortCause cause) {
        record_abort(cause);
        const uint64_t retries = policy_.kind == PolicyKind::Manual ? kManualRetryCap : 1;
        for (uint64_t attempt = 0; attempt < retries; ++attempt) {
            const TxContext& tx = sim_.cache().tx_begin();
            trace_.push(events::TxBegin{tx.id});
            bool aborted = false;
            for (const MemRef& ref : tx_refs_) {
                const AccessOutcome out = sim_.cache().tx_access(ref);
                if (out.aborted) {
                    record_abort(out.abort_cause);
                    aborted = true;
                    break;
                }
            }
            if (!aborted) return;  // transaction re-established, caller continues
        }
        state_ = State::Failed;
        if (policy_.kind != PolicyKind::Manual)
            throw std::logic_error("transaction aborted under a predictive policy: " +
                                   std::string(to_string(cause)));
        throw CannotCompleteError("transaction cannot complete after " +
                                  std::to_string(kManualRetryCap) + " retries (" +
                                  to_string(cause) + ")");
    }

    void require_active() const {
        if (state_ == State::Failed)
            throw std::logic_error("section failed: no further accesses accepted");
        if (state_ != State::Active) throw std::logic_error("section is not active");
    }

    // -- boundary machinery -------------------------------------------------
    bool static_boundary_due() const {
        return policy_.kind == PolicyKind::Static && tx_container_accesses_ >= policy_.static_k;
    }

    void boundary() {
        ++boundaries_;
        tx_end_internal();
        bool slid = false;
        for (Container& c : containers_) {
            if (c.cls != DataClass::A3 && c.cls != DataClass::A4) continue;
            if (c.win_lines == 0 || c.cursor >= c.elem_count) continue;
            const uint64_t line = need_line(c);
            if (line >= c.win_start && line < c.win_start + c.win_lines) continue;
            slide_window(c, line);
            slid = true;
        }
        if (slid) double_preload();
        tx_begin_internal();
    }

    uint64_t need_line(const Container& c) const {
        return c.cursor * c.width / sim_.geometry().line_size_bytes;
    }

    void slide_window(Container& c, uint64_t line) {
        if (c.cls == DataClass::A4) write_back_window(c);
        c.win_start = line;
        c.win_lines = std::min(c.share_lines, c.lines - line);
        ++c.partitions_done;
        if (c.cls == DataClass::A3)
            copy_in(c, c.share_offset, c.win_start, c.win_lines, DataClass::A3, c.partitions_done);
    }

    // -- access serving ----------------------------------------------------
    template <typename T>
    friend class ObRO;
    template <typename T>
    friend class ObRW;
    template <typename T>
    friend class NobRO;
    template <typename T>
    friend class NobRW;

    uint64_t ob_advance(size_t idx, AccessKind kind) {
        require_active();
        Container& c = containers_[idx];
        if (c.cursor >= c.elem_count)
            throw std::out_of_range("ob cursor past the end of the backing array");
        if (static_boundary_due()) boundary();
        ++tx_container_accesses_;
        const uint64_t lsz = sim_.geometry().line_size_bytes;
        const uint64_t first_line = c.cursor * c.width / lsz;
        const uint64_t last_line = (c.cursor * c.width + c.width - 1) / lsz;
        for (uint64_t line = first_line; line <= last_line; ++line) {
            if (line < c.win_start || line >= c.win_start + c.win_lines) {
                if (policy_.kind == PolicyKind::Manual)
                    throw std::logic_error("manual policy: window cannot slide");
                boundary();
            }
            tx_ref(layout_.shadow_address(c.cls, c.share_offset + (line - c.win_start)), kind);
        }
        return c.cursor++;
    }

    void ob_reset(size_t idx) {
        require_active();
        containers_[idx].cursor = 0;
    }

    void nob_access(size_t idx, uint64_t elem_index, AccessKind kind) {
        require_active();
        Container& c = containers_[idx];
        if (elem_index >= c.elem_count) throw std::out_of_range("nob index out of bounds");
        if (static_boundary_due()) boundary();
        ++tx_container_accesses_;
        const uint64_t lsz = sim_.geometry().line_size_bytes;
        const uint64_t first_line = elem_index * c.width / lsz;
        const uint64_t last_line = (elem_index * c.width + c.width - 1) / lsz;
        for (uint64_t line = first_line; line <= last_line; ++line)
            tx_ref(layout_.shadow_address(c.cls, c.class_offset + line), kind);
    }

    SimContext& sim_;
    TxTrace& trace_;
    PartitionPolicy policy_;
    ShadowLayout layout_;
    std::vector<Container> containers_;
    std::vector<MemRef> tx_refs_;
    State state_ = State::Registering;
    uint64_t boundaries_ = 0;
    uint64_t tx_container_accesses_ = 0;

    static constexpr uint64_t kManualRetryCap = 8;
};

template <typename T>
T ObRO<T>::read_next() {
    return values_[sec_->ob_advance(idx_, AccessKind::Read)];
}
template <typename T>
void ObRO<T>::reset() {
    sec_->ob_reset(idx_);
}
template <typename T>
void ObRW<T>::write_next(T value) {
    values_[sec_->ob_advance(idx_, AccessKind::Write)] = value;
}
template <typename T>
void ObRW<T>::reset() {
    sec_->ob_reset(idx_);
}
template <typename T>
T NobRO<T>::read_at(uint64_t index) {
    sec_->nob_access(idx_, index, AccessKind::Read);
    return values_[index];
}
template <typename T>
T NobRW<T>::read_at(uint64_t index) {
    sec_->nob_access(idx_, index, AccessKind::Read);
    return values_[index];
}
template <typename T>
void NobRW<T>::write_at(uint64_t index, T value) {
    sec_->nob_access(idx_, index, AccessKind::Write);
    values_[index] = value;
}

}  // namespace cmo
