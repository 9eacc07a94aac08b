#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cost_model.hpp"
#include "geometry.hpp"

namespace cmo {

/// Plain-text key=value configuration. Blank lines and lines starting with
/// '#' are ignored; whitespace around keys and values is trimmed.
inline std::map<std::string, std::string> parse_kv(std::istream& is) {
    std::map<std::string, std::string> kv;
    std::string line;
    size_t lineno = 0;
    auto trim = [](std::string s) {
        const char* ws = " \t\r";
        size_t b = s.find_first_not_of(ws);
        size_t e = s.find_last_not_of(ws);
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key=value");
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    return parse_kv(f);
}

inline uint64_t kv_u64(const std::map<std::string, std::string>& kv, const std::string& key,
                       uint64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    size_t pos = 0;
    uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size())
        throw std::runtime_error("config: bad integer for key '" + key + "'");
    return v;
}

inline CacheGeometry geometry_from(const std::map<std::string, std::string>& kv) {
    CacheGeometry g;
    g.line_size_bytes = kv_u64(kv, "line_size", g.line_size_bytes);
    g.l1_sets = kv_u64(kv, "l1_sets", g.l1_sets);
    g.l1_ways = kv_u64(kv, "l1_ways", g.l1_ways);
    g.llc_sets = kv_u64(kv, "llc_sets", g.llc_sets);
    g.llc_ways = kv_u64(kv, "llc_ways", g.llc_ways);
    g.validate();
    return g;
}

inline CostModel cost_model_from(const std::map<std::string, std::string>& kv) {
    CostModel m;
    m.hit_cost = kv_u64(kv, "hit_cost", m.hit_cost);
    m.miss_cost = kv_u64(kv, "miss_cost", m.miss_cost);
    m.tx_overhead = kv_u64(kv, "tx_overhead", m.tx_overhead);
    m.validate();
    return m;
}

inline CacheGeometry geometry_from_file(const std::string& path) {
    return geometry_from(parse_kv_file(path));
}

inline CostModel cost_model_from_file(const std::string& path) {
    return cost_model_from(parse_kv_file(path));
}

}  // namespace cmo
