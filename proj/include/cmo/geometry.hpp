#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cmo {

/// Two-level set-associative cache geometry. All sizes are in bytes or
/// cache lines; both levels share one line size. The LLC is inclusive of L1.
struct CacheGeometry {
    uint64_t line_size_bytes = 64;
    uint64_t l1_sets = 64;
    uint64_t l1_ways = 8;
    uint64_t llc_sets = 8192;
    uint64_t llc_ways = 16;

    uint64_t l1_lines() const { return l1_sets * l1_ways; }
    uint64_t llc_lines() const { return llc_sets * llc_ways; }
    uint64_t l1_capacity_bytes() const { return l1_lines() * line_size_bytes; }
    uint64_t llc_capacity_bytes() const { return llc_lines() * line_size_bytes; }

    /// Maximal number of LLC-resident lines that alias a single L1 set.
    uint64_t llc_lines_per_l1_set() const { return llc_lines() / l1_sets; }

    uint64_t line_of(uint64_t address) const { return address & ~(line_size_bytes - 1); }
    uint64_t l1_set_of(uint64_t address) const {
        return (address / line_size_bytes) % l1_sets;
    }
    uint64_t llc_set_of(uint64_t address) const {
        return (address / line_size_bytes) % llc_sets;
    }

    void validate() const {
        if (line_size_bytes < 8 || (line_size_bytes & (line_size_bytes - 1)) != 0)
            throw std::invalid_argument("line_size_bytes must be a power of two >= 8");
        if (l1_sets == 0 || l1_ways == 0 || llc_sets == 0 || llc_ways == 0)
            throw std::invalid_argument("cache geometry: zero sets or ways");
        if ((l1_sets & (l1_sets - 1)) != 0 || (llc_sets & (llc_sets - 1)) != 0)
            throw std::invalid_argument("set counts must be powers of two");
        if (l1_capacity_bytes() >= llc_capacity_bytes())
            throw std::invalid_argument("L1 capacity must be smaller than LLC capacity");
        if (llc_lines() % l1_sets != 0)
            throw std::invalid_argument("LLC lines must be divisible by L1 set count");
    }
};

enum class AccessKind : uint8_t { Read, Write };

/// One memory reference at byte granularity.
struct MemRef {
    uint64_t address = 0;
    AccessKind kind = AccessKind::Read;
};

struct LineLocation {
    uint64_t line_address;
    uint64_t l1_set;
    uint64_t llc_set;
};

inline LineLocation line_of(uint64_t address, const CacheGeometry& g) {
    const uint64_t line = g.line_of(address);
    return {line, g.l1_set_of(line), g.llc_set_of(line)};
}

}  // namespace cmo
