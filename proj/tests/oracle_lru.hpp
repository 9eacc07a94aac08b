#pragma once

// Brute-force two-level LRU reference. Keeps explicit recency lists per set
// and shares no code with cmo::CacheSim. Policy decisions mirror the spec of
// the simulator: inclusive LLC, LLC recency updated on installs only,
// eviction from LLC back-invalidates L1.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "cmo/cache_sim.hpp"
#include "cmo/geometry.hpp"

namespace cmo_test {

class LruOracle {
public:
    explicit LruOracle(const cmo::CacheGeometry& g) : geo_(g) {
        l1_.resize(g.l1_sets);
        llc_.resize(g.llc_sets);
    }

    cmo::HitLevel access(uint64_t address) {
        const uint64_t line = geo_.line_of(address);
        auto& l1 = l1_[geo_.l1_set_of(line)];
        auto& llc = llc_[geo_.llc_set_of(line)];

        auto it = std::find(l1.begin(), l1.end(), line);
        if (it != l1.end()) {
            l1.erase(it);
            l1.insert(l1.begin(), line);
            return cmo::HitLevel::L1;
        }
        auto jt = std::find(llc.begin(), llc.end(), line);
        if (jt != llc.end()) {
            llc.erase(jt);
            llc.insert(llc.begin(), line);
            install_l1(l1, line);
            return cmo::HitLevel::LLC;
        }
        if (llc.size() == geo_.llc_ways) {
            const uint64_t victim = llc.back();
            llc.pop_back();
            auto& vset = l1_[geo_.l1_set_of(victim)];
            auto v = std::find(vset.begin(), vset.end(), victim);
            if (v != vset.end()) vset.erase(v);
        }
        llc.insert(llc.begin(), line);
        install_l1(l1, line);
        return cmo::HitLevel::Miss;
    }

private:
    void install_l1(std::vector<uint64_t>& set, uint64_t line) {
        if (set.size() == geo_.l1_ways) set.pop_back();
        set.insert(set.begin(), line);
    }

    cmo::CacheGeometry geo_;
    std::vector<std::vector<uint64_t>> l1_;
    std::vector<std::vector<uint64_t>> llc_;
};

}  // namespace cmo_test
