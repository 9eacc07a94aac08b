#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "runtime.hpp"

namespace cmo {

/// Fixed-width integer records. record_bytes defaults to one cache line;
/// it must divide the line size or be a multiple of it.
struct Dataset {
    std::vector<int64_t> values;
    uint64_t record_bytes = 64;

    uint64_t size() const { return values.size(); }
};

struct Permutation {
    std::vector<uint64_t> mapping;

    uint64_t size() const { return mapping.size(); }

    void validate() const {
        std::vector<bool> seen(mapping.size(), false);
        for (uint64_t m : mapping) {
            if (m >= mapping.size() || seen[m])
                throw std::invalid_argument("permutation is not a bijection on [0, N)");
            seen[m] = true;
        }
    }

    static Permutation random(uint64_t n, uint64_t seed) {
        Permutation p;
        p.mapping.resize(n);
        for (uint64_t i = 0; i < n; ++i) p.mapping[i] = i;
        std::mt19937_64 rng(seed);
        for (uint64_t i = n; i > 1; --i) std::swap(p.mapping[i - 1], p.mapping[rng() % i]);
        return p;
    }

    static Permutation identity(uint64_t n) {
        Permutation p;
        p.mapping.resize(n);
        for (uint64_t i = 0; i < n; ++i) p.mapping[i] = i;
        return p;
    }
};

/// Points for K-means: `dims` doubles per point, flattened row-major.
struct PointSet {
    std::vector<double> coords;
    uint64_t dims = 2;

    uint64_t count() const { return dims == 0 ? 0 : coords.size() / dims; }
};

enum class AlgoMode : uint8_t {
    CmoDynamic,
    CmoStatic,
    CmoManual,
    ScanBaseline,
    WordOblivious,
    PlainUnprotected,
};

inline const char* to_string(AlgoMode m) {
    switch (m) {
        case AlgoMode::CmoDynamic: return "cmo_dynamic";
        case AlgoMode::CmoStatic: return "cmo_static";
        case AlgoMode::CmoManual: return "cmo_manual";
        case AlgoMode::ScanBaseline: return "scan_baseline";
        case AlgoMode::WordOblivious: return "word_oblivious";
        default: return "plain_unprotected";
    }
}

inline AlgoMode algo_mode_from(const std::string& s) {
    for (AlgoMode m : {AlgoMode::CmoDynamic, AlgoMode::CmoStatic, AlgoMode::CmoManual,
                       AlgoMode::ScanBaseline, AlgoMode::WordOblivious,
                       AlgoMode::PlainUnprotected})
        if (s == to_string(m)) return m;
    throw std::invalid_argument("unknown mode: " + s);
}

inline bool is_cmo(AlgoMode m) {
    return m == AlgoMode::CmoDynamic || m == AlgoMode::CmoStatic || m == AlgoMode::CmoManual;
}

struct AlgoConfig {
    uint64_t static_k = 8;
    double shuffle_pad_factor = 2.0;   // bucket capacity = pad * sqrt(N) slots
    uint64_t shuffle_stash_factor = 2; // c1: NobRW occupancy bound, lines per sqrt(N)
    uint64_t merge_stash_factor = 3;   // c2: merge buffer lines per sqrt(N)
    uint64_t retry_cap = 16;

    PartitionPolicy policy_for(AlgoMode m) const {
        switch (m) {
            case AlgoMode::CmoDynamic: return PartitionPolicy::dynamic();
            case AlgoMode::CmoStatic: return PartitionPolicy::static_k_of(static_k);
            case AlgoMode::CmoManual: return PartitionPolicy::manual();
            default: throw std::logic_error("no partition policy for baseline modes");
        }
    }
};

struct OverflowError : std::runtime_error {
    explicit OverflowError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline uint64_t isqrt_ceil(uint64_t n) {
    uint64_t r = 0;
    while (r * r < n) ++r;
    return r;
}

inline uint64_t ceil_log2(uint64_t n) {
    uint64_t l = 0;
    while ((1ull << l) < n) ++l;
    return l;
}

/// Simulated application array for baseline modes: values plus an allocated
/// address range; every access goes through a PlainScope.
template <typename T>
class PlainArray {
public:
    PlainArray(SimContext& sim, std::vector<T>& values, uint64_t width)
        : values_(values.data()), n_(values.size()), width_(width),
          base_(sim.alloc(values.size() * width)) {}
    PlainArray(SimContext& sim, const std::vector<T>& values, uint64_t width)
        : values_(const_cast<T*>(values.data())), n_(values.size()), width_(width),
          base_(sim.alloc(values.size() * width)) {}

    uint64_t size() const { return n_; }
    uint64_t base() const { return base_; }
    uint64_t address_of(uint64_t i) const { return base_ + i * width_; }

    T read(PlainScope& ps, uint64_t i) const {
        ps.read(address_of(i));
        return values_[i];
    }
    void write(PlainScope& ps, uint64_t i, T v) {
        ps.write(address_of(i));
        values_[i] = v;
    }

    /// Baseline transform of one leaky read: a full sequential pass with a
    /// constant-time select per element.
    T scan_read(PlainScope& ps, uint64_t i) const {
        T out{};
        for (uint64_t j = 0; j < n_; ++j) {
            ps.read(address_of(j));
            out = (j == i) ? values_[j] : out;
        }
        return out;
    }
    /// Baseline transform of one leaky write: a full sequential pass with a
    /// constant-time update per element.
    void scan_write(PlainScope& ps, uint64_t i, T v) {
        for (uint64_t j = 0; j < n_; ++j) {
            ps.write(address_of(j));
            values_[j] = (j == i) ? v : values_[j];
        }
    }

private:
    T* values_;
    uint64_t n_;
    uint64_t width_;
    uint64_t base_;
};

}  // namespace detail
}  // namespace cmo
