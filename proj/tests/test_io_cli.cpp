#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "fbx/antisym.hpp"
#include "fbx/caid.hpp"
#include "fbx/channel.hpp"
#include "fbx/channel_io.hpp"
#include "fbx/curve.hpp"
#include "fbx/flf_bounds.hpp"
#include "fbx/flf_sim.hpp"
#include "fbx/increment_law.hpp"
#include "fbx/rcu.hpp"
#include "fbx/vlf.hpp"

namespace {

std::string fbx_bin() {
    const char* p = std::getenv("FBX_BIN");
    REQUIRE(p != nullptr);
    return std::string(p);
}

// Runs a shell command silenced to /dev/null and returns the exit code.
int run_cli(const std::string& args) {
    std::string cmd = args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    if (WIFEXITED(rc)) return WEXITSTATUS(rc);
    return -1;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("fbx_io_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<std::string> crlf_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find("\r\n", pos);
        REQUIRE(eol != std::string::npos);  // every emitted line is CRLF-terminated
        lines.push_back(text.substr(pos, eol - pos));
        pos = eol + 2;
    }
    return lines;
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            cells.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return cells;
}

}  // namespace

TEST_CASE("fnv1a digest matches the reference vectors", "[io]") {
    CHECK(fbx::fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fbx::fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fbx::fnv1a_hex("ab") != fbx::fnv1a_hex("ba"));
    CHECK(fbx::fnv1a_hex("channel").size() == 16);
    for (char c : fbx::fnv1a_hex("channel")) {
        bool hex = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
        CHECK(hex);
    }
}

TEST_CASE("numeric formatting is exponent-free for counts and round-trips doubles", "[io]") {
    CHECK(fbx::format_number(4000.0) == "4000");
    CHECK(fbx::format_number(-3.0) == "-3");
    CHECK(fbx::format_number(0.5) == "0.5");
    CHECK(fbx::format_number(1e16).find('e') != std::string::npos);

    const double cases[] = {0.1,    1.0 / 3.0, 6.02e23, 398.59473850781017,
                            5e-324, -0.0,      1.0,     -123456.789};
    for (double v : cases) {
        std::string s = fbx::format_double(v);
        double back = std::strtod(s.c_str(), nullptr);
        CHECK(back == v);
        CHECK(std::signbit(back) == std::signbit(v));
    }
}

TEST_CASE("channel pair JSON round-trips exactly", "[io]") {
    for (const fbx::BroadcastPair& pair :
         {fbx::make_parallel_bsc(0.05, 0.10), fbx::make_antisym_z(0.3)}) {
        fbx::ordered_json j = fbx::pair_to_json(pair);
        REQUIRE(j.at("num_inputs").get<int>() == pair.num_inputs());
        REQUIRE(j.at("num_outputs").get<int>() == pair.num_outputs());
        fbx::BroadcastPair back = fbx::pair_from_json(fbx::ordered_json::parse(j.dump(2)));
        REQUIRE(back.num_inputs() == pair.num_inputs());
        REQUIRE(back.num_outputs() == pair.num_outputs());
        for (int x = 0; x < pair.num_inputs(); ++x)
            for (int y = 0; y < pair.num_outputs(); ++y) {
                CHECK(back.w1.at(x, y) == pair.w1.at(x, y));
                CHECK(back.w2.at(x, y) == pair.w2.at(x, y));
            }
        // Serialization is canonical, so the digest is reproducible.
        CHECK(fbx::fnv1a_hex(j.dump(2)) ==
              fbx::fnv1a_hex(fbx::pair_to_json(back).dump(2)));
    }
}

TEST_CASE("channel pair JSON rejects malformed input", "[io]") {
    fbx::ordered_json good = fbx::pair_to_json(fbx::make_parallel_bsc(0.05, 0.10));

    fbx::ordered_json j = good;
    j.erase("w2");
    CHECK_THROWS_AS(fbx::pair_from_json(j), fbx::ValidationError);

    j = good;
    j["num_inputs"] = 0;
    CHECK_THROWS_AS(fbx::pair_from_json(j), fbx::ValidationError);

    j = good;
    j["w1"].erase(3);  // one row short
    CHECK_THROWS_AS(fbx::pair_from_json(j), fbx::ValidationError);

    j = good;
    j["w1"][0].erase(1);  // one entry short in a row (each decoder has 2 outputs)
    CHECK_THROWS_AS(fbx::pair_from_json(j), fbx::ValidationError);

    j = good;
    j["w1"][0][0] = 0.5;  // row no longer sums to one
    CHECK_THROWS_AS(fbx::pair_from_json(j), fbx::ValidationError);

    CHECK_THROWS_AS(fbx::load_pair("/nonexistent/fbx/channel.json"), fbx::IoError);

    TempDir dir;
    fbx::write_file(dir.file("garbage.json"), "this is not json\n");
    CHECK_THROWS_AS(fbx::load_pair(dir.file("garbage.json")), fbx::ValidationError);
}

TEST_CASE("analysis JSON exposes every reported quantity", "[io]") {
    fbx::ChannelAnalysis an = fbx::analyze(fbx::make_parallel_bsc(0.05, 0.10));
    fbx::ordered_json j = fbx::analysis_to_json(an);
    const char* keys[] = {"p_star",       "capacity_c_nats",   "c1_nats",
                          "c2_nats",      "p_star_1",          "p_star_2",
                          "v1",           "v2",                "eta",
                          "eta_degenerate", "v_weighted",      "variance_flat",
                          "variance_flat_tol", "variance_flat_max_dev",
                          "duality_gap_nats", "assumption_report"};
    for (const char* k : keys) {
        INFO(k);
        CHECK(j.contains(k));
    }
    CHECK(j["capacity_c_nats"].get<double>() ==
          Catch::Approx(0.43134807219128496).margin(1e-12));
    CHECK(j["eta"].get<double>() == Catch::Approx(0.5).margin(1e-8));
    REQUIRE(j["p_star"].size() == 4);
    for (const auto& e : j["p_star"]) CHECK(e.get<double>() == Catch::Approx(0.25).margin(1e-6));
}

TEST_CASE("curve CSV emits CRLF rows and parses back", "[io]") {
    fbx::BoundCurve curve;
    curve.points.push_back({400.0, 246.913578, "rcu"});
    curve.points.push_back({200.0, 123.4561203, "converse"});
    curve.sort_points();
    REQUIRE(curve.points[0].n == 200.0);

    std::string csv = fbx::curve_to_csv(curve);
    auto lines = crlf_lines(csv);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "n,logM_nats,rate_bits_per_use,kind");

    fbx::BoundCurve back = fbx::parse_curve_csv(csv);
    REQUIRE(back.points.size() == 2);
    CHECK(back.points[0].n == 200.0);
    CHECK(back.points[0].logM_nats == 123.4561203);  // shortest round-trip form
    CHECK(back.points[0].kind == "converse");
    CHECK(back.points[1].logM_nats == 246.913578);
    CHECK(back.points[1].kind == "rcu");

    std::string bits_csv = fbx::curve_to_csv(curve, true);
    CHECK(crlf_lines(bits_csv)[0] == "n,logM_bits,rate_bits_per_use,kind");
    fbx::BoundCurve from_bits = fbx::parse_curve_csv(bits_csv);
    REQUIRE(from_bits.points.size() == 2);
    CHECK(from_bits.points[0].logM_nats ==
          Catch::Approx(123.4561203).margin(1e-9));  // converted back from bits

    fbx::BoundCurve quoted;
    quoted.points.push_back({1.0, 2.0, "kind, with comma"});
    std::string qcsv = fbx::curve_to_csv(quoted);
    CHECK(qcsv.find("\"kind, with comma\"") != std::string::npos);

    CHECK_THROWS_AS(fbx::parse_curve_csv("x,y,z,w\r\n"), fbx::ValidationError);
    CHECK_THROWS_AS(
        fbx::parse_curve_csv("n,logM_nats,rate_bits_per_use,kind\r\n1,zz,3,k\r\n"),
        fbx::ValidationError);
    CHECK_THROWS_AS(fbx::parse_curve_csv("n,logM_nats,rate_bits_per_use,kind\r\n1,2,3\r\n"),
                    fbx::ValidationError);
}

TEST_CASE("cli channel make, analyze, and certify", "[cli]") {
    TempDir dir;
    const std::string bin = fbx_bin();
    const std::string ch = dir.file("pbsc.json");

    REQUIRE(run_cli(bin + " channel make --kind parallel-bsc --q1 0.05 --q2 0.1 --out " + ch) == 0);
    fbx::BroadcastPair pair = fbx::load_pair(ch);
    fbx::BroadcastPair expect = fbx::make_parallel_bsc(0.05, 0.10);
    REQUIRE(pair.num_inputs() == expect.num_inputs());
    for (int x = 0; x < expect.num_inputs(); ++x)
        for (int y = 0; y < expect.num_outputs(); ++y)
            CHECK(pair.w1.at(x, y) == expect.w1.at(x, y));

    const std::string an_path = dir.file("an.json");
    REQUIRE(run_cli(bin + " channel analyze " + ch + " --out " + an_path) == 0);
    fbx::ordered_json an = fbx::ordered_json::parse(fbx::read_file(an_path));
    CHECK(an["capacity_c_nats"].get<double>() ==
          Catch::Approx(0.43134807219128496).margin(1e-12));
    CHECK(an["version"].get<std::string>() == fbx::kToolVersion);
    // The recorded digest is the FNV-1a hash of the channel file bytes.
    CHECK(an["channel_digest"].get<std::string>() == fbx::fnv1a_hex(fbx::read_file(ch)));

    const std::string cert_path = dir.file("cert.json");
    REQUIRE(run_cli(bin + " channel certify " + ch + " --out " + cert_path) == 0);
    fbx::ordered_json cert = fbx::ordered_json::parse(fbx::read_file(cert_path));
    CHECK(cert["certified"].get<bool>());
    CHECK(cert["eta"].get<double>() == Catch::Approx(0.5).margin(1e-8));

    const std::string zch = dir.file("z.json");
    REQUIRE(run_cli(bin + " channel make --kind z --q 0.3 --out " + zch) == 0);
    REQUIRE(run_cli(bin + " channel certify " + zch + " --out " + dir.file("zcert.json")) == 0);

    // A pair without the half-swap block structure is rejected before any
    // output is written.
    fbx::BroadcastPair bad{fbx::Dmc{2, 2, {0.95, 0.05, 0.05, 0.95}},
                           fbx::Dmc{2, 2, {1.0, 0.0, 0.3, 0.7}}};
    fbx::save_pair(bad, dir.file("bad.json"));
    CHECK(run_cli(bin + " channel certify " + dir.file("bad.json") + " --out " +
                  dir.file("badcert.json")) == 2);
    CHECK_FALSE(std::filesystem::exists(dir.file("badcert.json")));

    CHECK(run_cli(bin + " channel analyze " + dir.file("missing.json")) == 4);
}

TEST_CASE("cli bound converse CSV matches the library and handles edge grids", "[cli]") {
    TempDir dir;
    const std::string bin = fbx_bin();
    const std::string ch = dir.file("ch.json");
    fbx::BroadcastPair pair = fbx::make_parallel_bsc(0.05, 0.10);
    fbx::save_pair(pair, ch);

    const std::string csv_path = dir.file("conv.csv");
    REQUIRE(run_cli(bin + " bound converse --channel " + ch +
                    " --eps 1e-3 --n-grid 200:400:200 --out " + csv_path) == 0);
    auto lines = crlf_lines(fbx::read_file(csv_path));
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "n,logM_nats,logM_bits_per_use,lambda_used,method");

    fbx::ChannelAnalysis an = fbx::analyze(pair);
    fbx::IncrementLaw law = fbx::increment_law(pair, an);
    const std::int64_t grid[] = {200, 400};
    for (int i = 0; i < 2; ++i) {
        auto cells = split_commas(lines[1 + i]);
        REQUIRE(cells.size() == 5);
        CHECK(cells[0] == std::to_string(grid[i]));
        fbx::ConverseQuery q;
        q.n = grid[i];
        q.epsilon = 1e-3;
        fbx::ConverseResult r = fbx::converse_logM(law, q);
        CHECK(std::strtod(cells[1].c_str(), nullptr) == r.logM_nats);
        CHECK(std::strtod(cells[2].c_str(), nullptr) ==
              Catch::Approx(r.logM_nats / (grid[i] * std::log(2.0))).epsilon(1e-15));
        CHECK(std::strtod(cells[3].c_str(), nullptr) == r.lambda_used);
        CHECK(cells[4] == "exact");
    }

    // --bits renames the log-size column and divides it by log 2.
    const std::string bits_path = dir.file("conv_bits.csv");
    REQUIRE(run_cli(bin + " bound converse --channel " + ch +
                    " --eps 1e-3 --n-grid 200 --bits --out " + bits_path) == 0);
    auto bits_lines = crlf_lines(fbx::read_file(bits_path));
    REQUIRE(bits_lines.size() == 2);
    CHECK(bits_lines[0] == "n,logM_bits,logM_bits_per_use,lambda_used,method");
    {
        fbx::ConverseQuery q;
        q.n = 200;
        q.epsilon = 1e-3;
        double nats = fbx::converse_logM(law, q).logM_nats;
        auto cells = split_commas(bits_lines[1]);
        CHECK(std::strtod(cells[1].c_str(), nullptr) ==
              Catch::Approx(nats / std::log(2.0)).epsilon(1e-15));
    }

    // Empty grid: header only, still success.
    const std::string empty_path = dir.file("empty.csv");
    REQUIRE(run_cli(bin + " bound converse --channel " + ch +
                    " --eps 1e-3 --n-grid \"\" --out " + empty_path) == 0);
    CHECK(fbx::read_file(empty_path) == "n,logM_nats,logM_bits_per_use,lambda_used,method\r\n");

    CHECK(run_cli(bin + " bound converse --channel " + dir.file("missing.json") +
                  " --eps 1e-3 --n-grid 200 --out " + dir.file("x.csv")) == 4);
    CHECK(run_cli(bin + " bound converse --channel " + ch + " --eps 1.5 --n-grid 200 --out " +
                  dir.file("x.csv")) == 2);
    CHECK(run_cli(bin + " bound converse --channel " + ch + " --eps 1e-3 --n-grid 10:5 --out " +
                  dir.file("x.csv")) == 2);
    CHECK(run_cli(bin + " bound nosuch") == 2);
}

TEST_CASE("cli bound rcu, normal, and vlf-converse match the library", "[cli]") {
    TempDir dir;
    const std::string bin = fbx_bin();
    const std::string ch = dir.file("ch.json");
    fbx::BroadcastPair pair = fbx::make_parallel_bsc(0.05, 0.10);
    fbx::save_pair(pair, ch);
    fbx::ChannelAnalysis an = fbx::analyze(pair);

    const std::string rcu_path = dir.file("rcu.csv");
    REQUIRE(run_cli(bin + " bound rcu --q1 0.05 --q2 0.1 --eps 1e-3 --n-grid 200 --out " +
                    rcu_path) == 0);
    auto rcu_lines = crlf_lines(fbx::read_file(rcu_path));
    REQUIRE(rcu_lines.size() == 2);
    CHECK(rcu_lines[0] == "n,logM_nats,rate_bits_per_use,epsilon_achieved,truncation_mass");
    {
        auto cells = split_commas(rcu_lines[1]);
        REQUIRE(cells.size() == 5);
        fbx::RcuMaxLogM r = fbx::rcu_max_logM(200, 1e-3, 0.05, 0.10);
        CHECK(cells[0] == "200");
        CHECK(std::strtod(cells[1].c_str(), nullptr) == r.logM_nats);
        double eps_ach = std::strtod(cells[3].c_str(), nullptr);
        CHECK(eps_ach == fbx::rcu_epsilon(200, r.logM_nats, 0.05, 0.10));
        CHECK(eps_ach <= 1e-3);
        CHECK(std::strtod(cells[4].c_str(), nullptr) < 1e-12);
    }

    const std::string norm_path = dir.file("norm.csv");
    REQUIRE(run_cli(bin + " bound normal --channel " + ch +
                    " --eps 1e-3 --n-grid 200:600:200 --out " + norm_path) == 0);
    fbx::BoundCurve norm = fbx::parse_curve_csv(fbx::read_file(norm_path));
    REQUIRE(norm.points.size() == 3);
    for (const auto& p : norm.points) {
        CHECK(p.kind == "normal-approx");
        CHECK(p.logM_nats ==
              fbx::normal_approx_feedback(an, std::int64_t(p.n), 1e-3));
    }

    const std::string vc_path = dir.file("vc.csv");
    REQUIRE(run_cli(bin + " bound vlf-converse --channel " + ch +
                    " --eps 0.05 --ell-grid 1000 --out " + vc_path) == 0);
    fbx::BoundCurve vc = fbx::parse_curve_csv(fbx::read_file(vc_path));
    REQUIRE(vc.points.size() == 1);
    CHECK(vc.points[0].kind == "vlf-converse");
    CHECK(vc.points[0].logM_nats == fbx::vlf_converse_logM(1000.0, 0.05, an.capacity_c));
}

TEST_CASE("cli sim subcommands are deterministic for a fixed seed", "[cli]") {
    TempDir dir;
    const std::string bin = fbx_bin();
    const std::string ch = dir.file("ch.json");
    fbx::save_pair(fbx::make_parallel_bsc(0.05, 0.10), ch);

    const std::string v1 = dir.file("vlf1.json"), v2 = dir.file("vlf2.json");
    const std::string vlf_args = " sim vlf --channel " + ch +
                                 " --ellbar 1000 --eps 0.05 --trials 2000 --seed 11 --out ";
    REQUIRE(run_cli(bin + vlf_args + v1) == 0);
    REQUIRE(run_cli(bin + vlf_args + v2) == 0);
    std::string vlf_text = fbx::read_file(v1);
    CHECK(vlf_text == fbx::read_file(v2));
    fbx::ordered_json vj = fbx::ordered_json::parse(vlf_text);
    CHECK(vj["schema"].get<std::string>() == "fbx-vlf-sim");
    CHECK(vj["stopping_stats"]["trials"].get<std::uint64_t>() == 2000);
    CHECK(vj["params"]["n_b"].get<int>() == 35);  // confirmation stage after calibration
    REQUIRE(!vj["certified_point"].is_null());
    CHECK(vj["certified_point"]["eps_certified"].get<double>() <= 0.05);
    CHECK(vj["certified_point"]["logM_nats"].get<double>() > 0.0);

    // The master seed can come from the environment instead of the flag.
    const std::string v3 = dir.file("vlf3.json");
    REQUIRE(run_cli("FBX_SEED=11 " + bin + " sim vlf --channel " + ch +
                    " --ellbar 1000 --eps 0.05 --trials 2000 --out " + v3) == 0);
    CHECK(fbx::read_file(v3) == vlf_text);

    const std::string f1 = dir.file("flf1.json"), f2 = dir.file("flf2.json");
    const std::string flf_args = " sim flf --channel " + ch +
                                 " --n 3000 --eps 0.05 --rho 0.3 --trials 10000 --seed 2024 --out ";
    REQUIRE(run_cli(bin + flf_args + f1) == 0);
    REQUIRE(run_cli(bin + flf_args + f2) == 0);
    std::string flf_text = fbx::read_file(f1);
    CHECK(flf_text == fbx::read_file(f2));
    fbx::ordered_json fj = fbx::ordered_json::parse(flf_text);
    CHECK(fj["schema"].get<std::string>() == "fbx-flf-sim");
    CHECK(fj["certified_point"]["quantile_upper_ci"].get<double>() <
          fj["certified_point"]["threshold"].get<double>());
    CHECK(fj["certified_point"]["trials"].get<std::uint64_t>() == 10000);
    // The emitted point must be bit-identical to an in-process run with the
    // same inputs.
    fbx::BroadcastPair pair2 = fbx::load_pair(ch);
    fbx::ChannelAnalysis an2 = fbx::analyze(pair2);
    fbx::FlfSchemeParams fp = fbx::default_flf_params(3000, 0.05, pair2, an2, 0.3);
    fbx::FlfAchievablePoint lib = fbx::simulate_flf_point(fp, pair2, 0.05, 10000, 2024);
    CHECK(fj["certified_point"]["logM_nats"].get<double>() == lib.logM_nats);
    CHECK(fj["certified_point"]["eps_certified"].get<double>() == lib.eps_certified);
}

TEST_CASE("cli fig4 writes the three ordered curves and a combined manifest", "[cli]") {
    TempDir dir;
    const std::string bin = fbx_bin();
    const std::string prefix = dir.file("fig4");
    REQUIRE(run_cli(bin + " fig4 --n-grid 200:600:200 --out-prefix " + prefix) == 0);

    fbx::BoundCurve conv = fbx::parse_curve_csv(fbx::read_file(prefix + "_converse.csv"));
    fbx::BoundCurve rcu = fbx::parse_curve_csv(fbx::read_file(prefix + "_rcu.csv"));
    fbx::BoundCurve norm = fbx::parse_curve_csv(fbx::read_file(prefix + "_normal.csv"));
    REQUIRE(conv.points.size() == 3);
    REQUIRE(rcu.points.size() == 3);
    REQUIRE(norm.points.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(conv.points[i].kind == "converse");
        CHECK(rcu.points[i].kind == "rcu");
        CHECK(norm.points[i].kind == "normal-approx");
        CHECK(rcu.points[i].logM_nats <= norm.points[i].logM_nats);
        CHECK(norm.points[i].logM_nats <= conv.points[i].logM_nats);
    }

    fbx::ordered_json combined = fbx::ordered_json::parse(fbx::read_file(prefix + "_combined.json"));
    CHECK(combined["schema"].get<std::string>() == "fbx-fig4");
    CHECK(combined["epsilon"].get<double>() == 1e-3);
    REQUIRE(combined["curves"].size() == 3);
    for (const auto& c : combined["curves"]) {
        CHECK(c["schema"].get<std::string>() == "fbx-curve");
        CHECK(c["points"].size() == 3);
        CHECK(c["channel_digest"].get<std::string>() ==
              combined["channel_digest"].get<std::string>());
    }
}
