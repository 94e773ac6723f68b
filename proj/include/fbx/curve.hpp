#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <system_error>
#include <vector>

#include "fbx/channel_io.hpp"
#include "fbx/errors.hpp"

namespace fbx {

inline constexpr const char* kToolVersion = "0.1.0";

// Shortest round-trip decimal form; the formatting never depends on locale or
// stream state, which keeps emitted artifacts byte-stable.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) throw NumericalError("double formatting failed");
    return std::string(buf, res.ptr);
}

// Integer-valued doubles (blocklengths, counts) print without an exponent.
inline std::string format_number(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.0e15) {
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof(buf), static_cast<std::int64_t>(v));
        return std::string(buf, res.ptr);
    }
    return format_double(v);
}

struct CurvePoint {
    double n = 0.0;          // blocklength (or average length for stop rules)
    double logM_nats = 0.0;
    std::string kind;        // converse | rcu | flf-sim | vlf-converse | vlf-sim | normal-approx
};

struct BoundCurve {
    std::vector<CurvePoint> points;
    std::string channel_digest;
    std::uint64_t seed = 0;
    double epsilon = 0.0;
    ordered_json metadata;  // tool version, method flags, CI levels

    void sort_points() {
        std::stable_sort(points.begin(), points.end(),
                         [](const CurvePoint& a, const CurvePoint& b) { return a.n < b.n; });
    }
};

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace detail

// RFC-4180 CSV with CRLF rows.  With bits = true the log-size column is
// divided by log 2 and its header renamed; the rate column is in bits either
// way.
inline std::string curve_to_csv(const BoundCurve& curve, bool bits = false) {
    const double ln2 = std::log(2.0);
    std::string out = bits ? "n,logM_bits,rate_bits_per_use,kind\r\n"
                           : "n,logM_nats,rate_bits_per_use,kind\r\n";
    for (const auto& p : curve.points) {
        double logm = bits ? p.logM_nats / ln2 : p.logM_nats;
        double rate = p.n > 0.0 ? p.logM_nats / (p.n * ln2) : 0.0;
        out += format_number(p.n);
        out += ',';
        out += format_double(logm);
        out += ',';
        out += format_double(rate);
        out += ',';
        out += detail::csv_field(p.kind);
        out += "\r\n";
    }
    return out;
}

inline ordered_json curve_to_json(const BoundCurve& curve) {
    ordered_json j;
    j["schema"] = "fbx-curve";
    j["version"] = kToolVersion;
    j["channel_digest"] = curve.channel_digest;
    j["seed"] = curve.seed;
    j["epsilon"] = curve.epsilon;
    j["metadata"] = curve.metadata.is_null() ? ordered_json::object() : curve.metadata;
    ordered_json pts = ordered_json::array();
    for (const auto& p : curve.points) {
        ordered_json e;
        e["n"] = p.n;
        e["logM_nats"] = p.logM_nats;
        e["kind"] = p.kind;
        pts.push_back(std::move(e));
    }
    j["points"] = std::move(pts);
    return j;
}

inline void emit_curve_csv(const BoundCurve& curve, const std::string& path, bool bits = false) {
    write_file(path, curve_to_csv(curve, bits));
}

inline void emit_curve_json(const BoundCurve& curve, const std::string& path) {
    write_file(path, curve_to_json(curve).dump(2) + "\n");
}

// Parses the generic curve CSV (both header variants) back into points.
inline BoundCurve parse_curve_csv(const std::string& text) {
    BoundCurve curve;
    const double ln2 = std::log(2.0);
    std::size_t pos = 0;
    bool bits = false;
    bool first = true;
    while (pos < text.size()) {
        std::size_t eol = text.find("\r\n", pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + (eol < text.size() ? 2 : 0);
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line == "n,logM_bits,rate_bits_per_use,kind") bits = true;
            else if (line != "n,logM_nats,rate_bits_per_use,kind")
                throw ValidationError("unrecognized curve CSV header: " + line);
            continue;
        }
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                cells.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (cells.size() != 4) throw ValidationError("curve CSV row needs 4 cells");
        auto num = [](const std::string& s) {
            double v = 0.0;
            auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size())
                throw ValidationError("bad number in curve CSV: " + s);
            return v;
        };
        CurvePoint p;
        p.n = num(cells[0]);
        p.logM_nats = bits ? num(cells[1]) * ln2 : num(cells[1]);
        p.kind = cells[3];
        curve.points.push_back(std::move(p));
    }
    return curve;
}

}  // namespace fbx
