#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fbx/caid.hpp"
#include "fbx/channel.hpp"
#include "fbx/errors.hpp"

#include "json.hpp"

namespace fbx {

using ordered_json = nlohmann::ordered_json;

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("read failure on " + path);
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(content.data(), std::streamsize(content.size()));
    if (!out.good()) throw IoError("write failure on " + path);
}

// FNV-1a over raw bytes; used to stamp emitted curves with the channel file
// they came from.
inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xF];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

inline ordered_json pair_to_json(const BroadcastPair& pair) {
    ordered_json j;
    j["num_inputs"] = pair.num_inputs();
    j["num_outputs"] = pair.num_outputs();
    auto rows = [&](const Dmc& w) {
        ordered_json m = ordered_json::array();
        for (int x = 0; x < w.num_inputs; ++x) {
            ordered_json row = ordered_json::array();
            for (int y = 0; y < w.num_outputs; ++y) row.push_back(w.at(x, y));
            m.push_back(std::move(row));
        }
        return m;
    };
    j["w1"] = rows(pair.w1);
    j["w2"] = rows(pair.w2);
    return j;
}

inline BroadcastPair pair_from_json(const ordered_json& j) {
    if (!j.contains("num_inputs") || !j.contains("num_outputs") || !j.contains("w1") ||
        !j.contains("w2"))
        throw ValidationError("channel JSON needs num_inputs, num_outputs, w1, w2");
    int nx = j.at("num_inputs").get<int>();
    int ny = j.at("num_outputs").get<int>();
    if (nx <= 0 || ny <= 0) throw ValidationError("alphabet sizes must be positive");
    auto parse = [&](const ordered_json& m, const char* name) {
        Dmc w;
        w.num_inputs = nx;
        w.num_outputs = ny;
        if (!m.is_array() || int(m.size()) != nx)
            throw ValidationError(std::string(name) + " must have num_inputs rows");
        for (const auto& row : m) {
            if (!row.is_array() || int(row.size()) != ny)
                throw ValidationError(std::string(name) + " rows must have num_outputs entries");
            for (const auto& e : row) w.w.push_back(e.get<double>());
        }
        w.validate();
        return w;
    };
    BroadcastPair pair{parse(j.at("w1"), "w1"), parse(j.at("w2"), "w2")};
    pair.validate();
    return pair;
}

inline void save_pair(const BroadcastPair& pair, const std::string& path) {
    write_file(path, pair_to_json(pair).dump(2) + "\n");
}

inline BroadcastPair load_pair(const std::string& path) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("channel JSON parse error: ") + e.what());
    }
    return pair_from_json(j);
}

inline ordered_json analysis_to_json(const ChannelAnalysis& an) {
    ordered_json j;
    j["p_star"] = an.p_star;
    j["capacity_c_nats"] = an.capacity_c;
    j["c1_nats"] = an.c1;
    j["c2_nats"] = an.c2;
    j["p_star_1"] = an.p_star_1;
    j["p_star_2"] = an.p_star_2;
    j["v1"] = an.v1;
    j["v2"] = an.v2;
    j["eta"] = an.eta;
    j["eta_degenerate"] = an.eta_degenerate;
    j["v_weighted"] = an.v_weighted;
    j["variance_flat"] = an.variance_flat;
    j["variance_flat_tol"] = an.variance_flat_tol;
    j["variance_flat_max_dev"] = an.variance_flat_max_dev;
    j["duality_gap_nats"] = an.duality_gap;
    j["assumption_report"] = an.assumption_report;
    return j;
}

}  // namespace fbx
