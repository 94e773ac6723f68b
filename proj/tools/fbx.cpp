// Command-line front end: channel construction/analysis, fixed-length and
// variable-length bounds, scheme simulation, and the three-curve comparison
// figure.  Exit codes: 0 ok, 2 validation, 3 numerical, 4 io.

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fbx/antisym.hpp"
#include "fbx/caid.hpp"
#include "fbx/channel.hpp"
#include "fbx/channel_io.hpp"
#include "fbx/curve.hpp"
#include "fbx/errors.hpp"
#include "fbx/flf_bounds.hpp"
#include "fbx/flf_sim.hpp"
#include "fbx/increment_law.hpp"
#include "fbx/parallel.hpp"
#include "fbx/rcu.hpp"
#include "fbx/special.hpp"
#include "fbx/stabilization.hpp"
#include "fbx/vlf.hpp"

namespace {

// "a:b:c" -> a, a+c, ..., up to b; a single value -> {value}; "" -> {}.
std::vector<std::int64_t> parse_grid(const std::string& s) {
    std::vector<std::int64_t> grid;
    if (s.empty()) return grid;
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ':') {
            parts.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    auto to_int = [&](const std::string& t) {
        try {
            std::size_t used = 0;
            long long v = std::stoll(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
            return static_cast<std::int64_t>(v);
        } catch (const std::exception&) {
            throw fbx::ValidationError("bad grid token '" + t + "' (want start:stop:step)");
        }
    };
    if (parts.size() == 1) {
        grid.push_back(to_int(parts[0]));
        return grid;
    }
    if (parts.size() != 3) throw fbx::ValidationError("grid must be start:stop:step or a single value");
    std::int64_t a = to_int(parts[0]), b = to_int(parts[1]), c = to_int(parts[2]);
    if (c <= 0) throw fbx::ValidationError("grid step must be positive");
    for (std::int64_t v = a; v <= b; v += c) grid.push_back(v);
    return grid;
}

std::string channel_digest_of(const fbx::BroadcastPair& pair) {
    return fbx::fnv1a_hex(fbx::pair_to_json(pair).dump(2) + "\n");
}

void write_text_or_stdout(const std::string& path, const std::string& content) {
    if (path.empty()) std::cout << content;
    else fbx::write_file(path, content);
}

const char* sum_method_name(fbx::SumMethod m) {
    switch (m) {
        case fbx::SumMethod::ExactFactor:
        case fbx::SumMethod::ExactLattice: return "exact";
        case fbx::SumMethod::Quantized: return "quantized";
    }
    return "exact";
}

struct CommonOpts {
    std::uint64_t seed = 0;
    bool bits = false;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonasymptotic coding bounds and feedback-scheme simulation for "
                 "two-user common-message broadcast channels"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "print help for all subcommands");

    CommonOpts common;

    // ---- channel ----
    auto* channel = app.add_subcommand("channel", "create, analyze, or certify channel files");
    channel->require_subcommand(1);

    auto* ch_make = channel->add_subcommand("make", "write a built-in channel family to JSON");
    std::string mk_kind = "parallel-bsc", mk_out;
    double mk_q1 = 0.05, mk_q2 = 0.10, mk_q = 0.1;
    ch_make->add_option("--kind", mk_kind, "family: parallel-bsc | z")
        ->check(CLI::IsMember({"parallel-bsc", "z"}));
    ch_make->add_option("--q1", mk_q1, "first crossover (parallel-bsc)");
    ch_make->add_option("--q2", mk_q2, "second crossover (parallel-bsc)");
    ch_make->add_option("--q", mk_q, "crossover (z family)");
    ch_make->add_option("--out", mk_out, "output path")->required();
    ch_make->callback([&] {
        fbx::BroadcastPair pair = (mk_kind == "z") ? fbx::make_antisym_z(mk_q)
                                                   : fbx::make_parallel_bsc(mk_q1, mk_q2);
        fbx::save_pair(pair, mk_out);
    });

    auto* ch_analyze = channel->add_subcommand("analyze", "maximin law, capacities, dispersion");
    std::string an_channel, an_out;
    ch_analyze->add_option("channel", an_channel, "channel JSON path")->required();
    ch_analyze->add_option("--out", an_out, "output path (default: stdout)");
    ch_analyze->callback([&] {
        fbx::BroadcastPair pair = fbx::load_pair(an_channel);
        fbx::ordered_json j = fbx::analysis_to_json(fbx::analyze(pair));
        j["channel_digest"] = channel_digest_of(pair);
        j["version"] = fbx::kToolVersion;
        write_text_or_stdout(an_out, j.dump(2) + "\n");
    });

    auto* ch_certify = channel->add_subcommand(
        "certify", "check the half-swap structure and dispersion-halving consequences");
    std::string ct_channel, ct_out;
    ch_certify->add_option("channel", ct_channel, "channel JSON path")->required();
    ch_certify->add_option("--out", ct_out, "output path (default: stdout)");
    ch_certify->callback([&] {
        fbx::BroadcastPair pair = fbx::load_pair(ct_channel);
        fbx::DispersionHalvingCertificate cert = fbx::certify_dispersion_halving(pair);
        fbx::ordered_json j;
        j["certified"] = cert.certified;
        j["eta"] = cert.eta;
        j["v1"] = cert.v1;
        j["v2"] = cert.v2;
        j["v_weighted"] = cert.v_weighted;
        j["max_sum_var_dev"] = cert.max_sum_var_dev;
        j["max_pstar_dev"] = cert.max_pstar_dev;
        j["reasons"] = cert.reasons;
        j["channel_digest"] = channel_digest_of(pair);
        j["version"] = fbx::kToolVersion;
        write_text_or_stdout(ct_out, j.dump(2) + "\n");
        if (!cert.certified)
            throw fbx::ValidationError("channel is half-swap symmetric but fails the flatness checks");
    });

    // ---- bound ----
    auto* bound = app.add_subcommand("bound", "evaluate fixed- and variable-length bounds");
    bound->require_subcommand(1);

    auto* b_conv = bound->add_subcommand("converse", "fixed-length feedback converse");
    std::string cv_channel, cv_grid, cv_out, cv_lambda_rule = "logn";
    double cv_eps = 1e-3, cv_lambda = 0.0;
    b_conv->add_option("--channel", cv_channel, "channel JSON path")->required();
    b_conv->add_option("--eps", cv_eps, "target error probability")->required();
    b_conv->add_option("--n-grid", cv_grid, "blocklengths start:stop:step (empty: no rows)")
        ->required();
    b_conv->add_option("--lambda-rule", cv_lambda_rule, "logn | grid | fixed")
        ->check(CLI::IsMember({"logn", "grid", "fixed"}));
    b_conv->add_option("--lambda", cv_lambda, "slack parameter for --lambda-rule fixed");
    b_conv->add_option("--out", cv_out, "output CSV path")->required();
    b_conv->add_flag("--bits", common.bits, "emit log-size in bits instead of nats");
    b_conv->callback([&] {
        fbx::BroadcastPair pair = fbx::load_pair(cv_channel);
        fbx::ChannelAnalysis an = fbx::analyze(pair);
        std::vector<std::int64_t> grid = parse_grid(cv_grid);
        std::optional<fbx::IncrementLaw> law;
        try {
            law.emplace(fbx::increment_law(pair, an));
        } catch (const fbx::NotInvariant&) {
            law.reset();  // fall back to the second-moment bound per n
        }
        struct Row {
            double logm = 0.0, lambda = 0.0;
            std::string method;
        };
        std::vector<Row> rows(grid.size());
        fbx::parallel_for_index(grid.size(), [&](std::uint64_t i) {
            std::int64_t n = grid[i];
            if (law) {
                fbx::ConverseQuery q;
                q.n = n;
                q.epsilon = cv_eps;
                q.lambda_rule = cv_lambda_rule == "grid"    ? fbx::LambdaRule::Grid
                                : cv_lambda_rule == "fixed" ? fbx::LambdaRule::Fixed
                                                            : fbx::LambdaRule::LogN;
                q.fixed_lambda = cv_lambda;
                fbx::ConverseResult r = fbx::converse_logM(*law, q);
                rows[i] = {r.logM_nats, r.lambda_used, sum_method_name(r.method)};
            } else {
                fbx::ConverseResult r = fbx::converse_chebyshev(pair, an, n, cv_eps);
                rows[i] = {r.logM_nats, r.lambda_used, "chebyshev"};
            }
        });
        const double ln2 = std::log(2.0);
        std::string csv = common.bits ? "n,logM_bits,logM_bits_per_use,lambda_used,method\r\n"
                                      : "n,logM_nats,logM_bits_per_use,lambda_used,method\r\n";
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double logm = common.bits ? rows[i].logm / ln2 : rows[i].logm;
            csv += fbx::format_number(double(grid[i]));
            csv += ',';
            csv += fbx::format_double(logm);
            csv += ',';
            csv += fbx::format_double(rows[i].logm / (double(grid[i]) * ln2));
            csv += ',';
            csv += fbx::format_double(rows[i].lambda);
            csv += ',';
            csv += rows[i].method;
            csv += "\r\n";
        }
        fbx::write_file(cv_out, csv);
    });

    auto* b_rcu = bound->add_subcommand("rcu", "min-distance random-coding achievability");
    std::string rc_grid, rc_out;
    double rc_q1 = 0.05, rc_q2 = 0.10, rc_eps = 1e-3;
    int rc_band = 0;
    b_rcu->add_option("--q1", rc_q1, "first crossover")->required();
    b_rcu->add_option("--q2", rc_q2, "second crossover")->required();
    b_rcu->add_option("--eps", rc_eps, "target error probability")->required();
    b_rcu->add_option("--n-grid", rc_grid, "blocklengths start:stop:step")->required();
    b_rcu->add_option("--band", rc_band, "difference-walk band override (0: automatic)");
    b_rcu->add_option("--out", rc_out, "output CSV path")->required();
    b_rcu->add_flag("--bits", common.bits, "emit log-size in bits instead of nats");
    b_rcu->callback([&] {
        std::vector<std::int64_t> grid = parse_grid(rc_grid);
        struct Row {
            double logm = 0.0, eps_ach = 0.0, folded = 0.0;
        };
        std::vector<Row> rows(grid.size());
        std::optional<int> band;
        if (rc_band > 0) band = rc_band;
        fbx::parallel_for_index(grid.size(), [&](std::uint64_t i) {
            std::int64_t n = grid[i];
            fbx::RcuMaxLogM r = fbx::rcu_max_logM(n, rc_eps, rc_q1, rc_q2, band);
            fbx::CoupledPmf cp = fbx::coupled_pmf(n, rc_q1, rc_q2, band);
            double eps_ach = r.status == fbx::RcuStatus::NoFeasibleM
                                 ? 1.0
                                 : fbx::rcu_epsilon(n, r.logM_nats, rc_q1, rc_q2, band);
            rows[i] = {r.logM_nats, eps_ach, cp.folded_mass};
        });
        const double ln2 = std::log(2.0);
        std::string csv = common.bits ? "n,logM_bits,rate_bits_per_use,epsilon_achieved,truncation_mass\r\n"
                                      : "n,logM_nats,rate_bits_per_use,epsilon_achieved,truncation_mass\r\n";
        for (std::size_t i = 0; i < grid.size(); ++i) {
            double logm = common.bits ? rows[i].logm / ln2 : rows[i].logm;
            csv += fbx::format_number(double(grid[i]));
            csv += ',';
            csv += fbx::format_double(logm);
            csv += ',';
            csv += fbx::format_double(rows[i].logm / (double(grid[i]) * ln2));
            csv += ',';
            csv += fbx::format_double(rows[i].eps_ach);
            csv += ',';
            csv += fbx::format_double(rows[i].folded);
            csv += "\r\n";
        }
        fbx::write_file(rc_out, csv);
    });

    auto* b_norm = bound->add_subcommand("normal", "second-order feedback expansion");
    std::string nm_channel, nm_grid, nm_out;
    double nm_eps = 1e-3;
    b_norm->add_option("--channel", nm_channel, "channel JSON path")->required();
    b_norm->add_option("--eps", nm_eps, "target error probability")->required();
    b_norm->add_option("--n-grid", nm_grid, "blocklengths start:stop:step")->required();
    b_norm->add_option("--out", nm_out, "output CSV path")->required();
    b_norm->add_flag("--bits", common.bits, "emit log-size in bits instead of nats");
    b_norm->callback([&] {
        fbx::BroadcastPair pair = fbx::load_pair(nm_channel);
        fbx::ChannelAnalysis an = fbx::analyze(pair);
        fbx::BoundCurve curve;
        curve.channel_digest = channel_digest_of(pair);
        curve.epsilon = nm_eps;
        curve.metadata["version"] = fbx::kToolVersion;
        curve.metadata["kind"] = "normal-approx";
        for (std::int64_t n : parse_grid(nm_grid))
            curve.points.push_back({double(n), fbx::normal_approx_feedback(an, n, nm_eps), "normal-approx"});
        curve.sort_points();
        fbx::emit_curve_csv(curve, nm_out, common.bits);
    });

    auto* b_vlfc = bound->add_subcommand("vlf-converse", "variable-length feedback converse");
    std::string vc_channel, vc_grid, vc_out;
    double vc_eps = 0.05;
    b_vlfc->add_option("--channel", vc_channel, "channel JSON path")->required();
    b_vlfc->add_option("--eps", vc_eps, "target error probability")->required();
    b_vlfc->add_option("--ell-grid", vc_grid, "average lengths start:stop:step")->required();
    b_vlfc->add_option("--out", vc_out, "output CSV path")->required();
    b_vlfc->add_flag("--bits", common.bits, "emit log-size in bits instead of nats");
    b_vlfc->callback([&] {
        fbx::BroadcastPair pair = fbx::load_pair(vc_channel);
        fbx::ChannelAnalysis an = fbx::analyze(pair);
        fbx::BoundCurve curve;
        curve.channel_digest = channel_digest_of(pair);
        curve.epsilon = vc_eps;
        curve.metadata["version"] = fbx::kToolVersion;
        curve.metadata["kind"] = "vlf-converse";
        for (std::int64_t ell : parse_grid(vc_grid))
            curve.points.push_back(
                {double(ell), fbx::vlf_converse_logM(double(ell), vc_eps, an.capacity_c), "vlf-converse"});
        curve.sort_points();
        fbx::emit_curve_csv(curve, vc_out, common.bits);
    });

    // ---- sim ----
    auto* sim = app.add_subcommand("sim", "Monte Carlo certification of the feedback schemes");
    sim->require_subcommand(1);

    auto* s_flf = sim->add_subcommand("flf", "fixed-length scheme: simulate and certify a point");
    std::string sf_channel, sf_out;
    double sf_eps = 1e-3, sf_rho = 1.0, sf_eps_star = -1.0;
    std::int64_t sf_n = 100000;
    std::uint64_t sf_trials = 100000;
    s_flf->add_option("--channel", sf_channel, "channel JSON path")->required();
    s_flf->add_option("--n", sf_n, "design blocklength")->required();
    s_flf->add_option("--eps", sf_eps, "target error probability")->required();
    s_flf->add_option("--trials", sf_trials, "Monte Carlo trials (>= 10^4)");
    s_flf->add_option("--seed", common.seed, "master seed")->envname("FBX_SEED");
    s_flf->add_option("--rho", sf_rho, "perturbation derivative scale");
    s_flf->add_option("--eps-star", sf_eps_star,
                      "confirmation-stage error override (families without the built-in model)");
    s_flf->add_option("--out", sf_out, "output JSON path")->required();
    s_flf->callback([&] {
        fbx::BroadcastPair pair = fbx::load_pair(sf_channel);
        fbx::ChannelAnalysis an = fbx::analyze(pair);
        fbx::FlfSchemeParams params = fbx::default_flf_params(sf_n, sf_eps, pair, an, sf_rho);
        std::optional<double> override_star;
        if (sf_eps_star >= 0.0) override_star = sf_eps_star;
        fbx::FlfAchievablePoint pt =
            fbx::simulate_flf_point(params, pair, sf_eps, sf_trials, common.seed, override_star);
        fbx::ordered_json j;
        j["schema"] = "fbx-flf-sim";
        j["version"] = fbx::kToolVersion;
        j["channel_digest"] = channel_digest_of(pair);
        j["seed"] = common.seed;
        j["epsilon"] = sf_eps;
        fbx::ordered_json pj;
        pj["n"] = params.n;
        pj["n_total"] = params.n_total;
        pj["blocks"] = params.ell;
        pj["block_len"] = params.m;
        pj["kappa"] = params.kappa;
        pj["n_b"] = params.n_b;
        pj["rho"] = params.rho;
        pj["gamma_default"] = params.gamma;
        pj["gamma_branch"] = params.gamma1;
        pj["gamma_secondary"] = params.gamma2;
        pj["zeta"] = params.zeta;
        pj["tau_slack"] = params.tau_slack;
        pj["eta"] = params.eta;
        j["params"] = pj;
        fbx::ordered_json pen;
        pen["union_term_nats"] = -std::log(params.tau_slack / 2.0);
        pen["type_counting_nats"] = double(params.s) * double(params.ell) * pair.num_inputs() *
                                    std::log(1.0 + double(params.m));
        pen["sequence_nats"] = double(params.ell) * std::log(double(params.s));
        pen["change_of_measure_nats"] = params.zeta;
        pen["total_nats"] = pt.penalty_nats;
        j["penalties"] = pen;
        fbx::ordered_json cj;
        cj["gamma_selected"] = pt.gamma_selected;
        cj["quantile_upper_ci"] = pt.quantile_upper_ci;
        cj["threshold"] = pt.threshold;
        cj["ci_alpha"] = 1e-3;
        cj["logM_nats"] = pt.logM_nats;
        cj["rate_bits_per_use"] = pt.logM_nats / (double(pt.n) * std::log(2.0));
        cj["eps_star"] = pt.eps_star;
        cj["eps_certified"] = pt.eps_certified;
        cj["trials"] = pt.trials;
        cj["final_block_counts"] = {{"confirm", pt.count_b3},
                                    {"coin_first", pt.count_b4},
                                    {"coin_second", pt.count_b5}};
        j["certified_point"] = cj;
        fbx::write_file(sf_out, j.dump(2) + "\n");
    });

    auto* s_vlf = sim->add_subcommand("vlf", "variable-length scheme: stopping statistics and point");
    std::string sv_channel, sv_out, sv_mode = "union";
    double sv_eps = 0.05, sv_ellbar = 5000, sv_eps_star = -1.0;
    std::uint64_t sv_trials = 100000;
    bool sv_no_balance = false, sv_no_calibrate = false;
    s_vlf->add_option("--channel", sv_channel, "channel JSON path")->required();
    s_vlf->add_option("--ellbar", sv_ellbar, "design average blocklength")->required();
    s_vlf->add_option("--eps", sv_eps, "target error probability")->required();
    s_vlf->add_option("--trials", sv_trials, "Monte Carlo trials");
    s_vlf->add_option("--seed", common.seed, "master seed")->envname("FBX_SEED");
    s_vlf->add_option("--mode", sv_mode, "error accounting: union | coupled")
        ->check(CLI::IsMember({"union", "coupled"}));
    s_vlf->add_flag("--no-balance", sv_no_balance, "ablation: alternate types, ignore feedback");
    s_vlf->add_flag("--no-calibrate-nb", sv_no_calibrate, "keep the minimal confirmation stage");
    s_vlf->add_option("--eps-star", sv_eps_star,
                      "confirmation-stage error override (families without the built-in model)");
    s_vlf->add_option("--out", sv_out, "output JSON path")->required();
    s_vlf->callback([&] {
        fbx::BroadcastPair pair = fbx::load_pair(sv_channel);
        fbx::ChannelAnalysis an = fbx::analyze(pair);
        fbx::VlfParams params = fbx::default_vlf_params(sv_ellbar, sv_eps, pair, an);
        params.balanced = !sv_no_balance;
        std::optional<double> override_star;
        if (sv_eps_star >= 0.0) override_star = sv_eps_star;
        if (!sv_no_calibrate && !override_star) params = fbx::calibrate_nb(params, pair, sv_eps);
        fbx::StoppingStats stats =
            fbx::simulate_vlf(params, pair, sv_trials, common.seed, sv_mode == "coupled");

        fbx::ordered_json j;
        j["schema"] = "fbx-vlf-sim";
        j["version"] = fbx::kToolVersion;
        j["channel_digest"] = channel_digest_of(pair);
        j["seed"] = common.seed;
        j["epsilon"] = sv_eps;
        j["mode"] = sv_mode;
        j["note"] = "q and the confirmation stage are calibrated from measured confidence "
                    "bounds, not closed-form constants";
        fbx::ordered_json pj;
        pj["ell_bar"] = params.ell_bar;
        pj["blocks"] = params.ell_blocks;
        pj["block_len"] = params.m;
        pj["lm"] = params.lm;
        pj["kappa"] = params.kappa;
        pj["n_b"] = params.n_b;
        pj["tau_max"] = params.tau_max;
        pj["gamma"] = params.gamma;
        pj["logM_nats"] = params.logM_nats;
        pj["delta"] = params.delta;
        pj["rho"] = params.rho;
        pj["balanced"] = params.balanced;
        j["params"] = pj;
        fbx::ordered_json stj;
        stj["trials"] = stats.trials;
        stj["e_max_tau"] = stats.e_max_tau;
        stj["e_max_tau_halfwidth"] = stats.e_max_tau_halfwidth;
        stj["e_max_tau_upper"] = stats.e_max_tau_upper;
        stj["e_min_tau"] = stats.e_min_tau;
        stj["p_tau_max"] = {stats.p_tau_max[0], stats.p_tau_max[1]};
        stj["p_tau_max_upper"] = {stats.p_tau_max_upper[0], stats.p_tau_max_upper[1]};
        stj["head_gap_mean"] = stats.head_gap_mean;
        stj["head_gap_p99"] = stats.head_gap_p99;
        stj["ci_level"] = 0.99;
        if (stats.coupled) {
            stj["p_overtake"] = {stats.p_overtake[0], stats.p_overtake[1]};
            stj["p_overtake_upper"] = {stats.p_overtake_upper[0], stats.p_overtake_upper[1]};
        }
        j["stopping_stats"] = stj;
        try {
            fbx::VlfAchievablePoint pt =
                fbx::vlf_achievable_point(params, pair, stats, sv_eps, override_star);
            fbx::ordered_json cj;
            cj["ell_achieved"] = pt.ell_achieved;
            cj["logM_nats"] = pt.logM_nats;
            cj["rate_bits_per_use"] =
                pt.ell_achieved > 0.0 ? pt.logM_nats / (pt.ell_achieved * std::log(2.0)) : 0.0;
            cj["eps_certified"] = pt.eps_certified;
            cj["q"] = pt.q;
            cj["eps_star"] = pt.eps_star;
            cj["term_codebook"] = pt.term_codebook;
            cj["term_tau_upper"] = pt.term_tau_upper;
            j["certified_point"] = cj;
        } catch (const fbx::InfeasibleEpsilon& e) {
            j["certified_point"] = nullptr;
            j["infeasible"] = e.what();
        }
        fbx::write_file(sv_out, j.dump(2) + "\n");
    });

    // ---- fig4 ----
    auto* fig4 = app.add_subcommand(
        "fig4", "three-curve comparison (converse / rcu / normal approximation)");
    std::string f4_grid = "200:2000:200", f4_prefix = "fig4";
    double f4_q1 = 0.05, f4_q2 = 0.10, f4_eps = 1e-3;
    fig4->add_option("--q1", f4_q1, "first crossover");
    fig4->add_option("--q2", f4_q2, "second crossover");
    fig4->add_option("--eps", f4_eps, "target error probability");
    fig4->add_option("--n-grid", f4_grid, "blocklengths start:stop:step");
    fig4->add_option("--out-prefix", f4_prefix, "output path prefix");
    fig4->add_option("--seed", common.seed, "master seed (recorded in metadata)")->envname("FBX_SEED");
    fig4->add_flag("--bits", common.bits, "emit log-size in bits instead of nats");
    fig4->callback([&] {
        fbx::BroadcastPair pair = fbx::make_parallel_bsc(f4_q1, f4_q2);
        fbx::ChannelAnalysis an = fbx::analyze(pair);
        fbx::IncrementLaw law = fbx::increment_law(pair, an);
        std::vector<std::int64_t> grid = parse_grid(f4_grid);

        std::vector<double> conv(grid.size()), rcu(grid.size()), norm(grid.size());
        fbx::parallel_for_index(grid.size(), [&](std::uint64_t i) {
            std::int64_t n = grid[i];
            fbx::ConverseQuery q;
            q.n = n;
            q.epsilon = f4_eps;
            conv[i] = fbx::converse_logM(law, q).logM_nats;
            rcu[i] = fbx::rcu_max_logM(n, f4_eps, f4_q1, f4_q2).logM_nats;
            norm[i] = fbx::normal_approx_feedback(an, n, f4_eps);
        });
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (!(rcu[i] <= norm[i] && norm[i] <= conv[i]))
                throw fbx::OrderingViolation(
                    "bound ordering rcu <= normal <= converse fails at n = " +
                    std::to_string(grid[i]) + ": rcu=" + fbx::format_double(rcu[i]) +
                    " normal=" + fbx::format_double(norm[i]) +
                    " converse=" + fbx::format_double(conv[i]));
        }

        std::string digest = channel_digest_of(pair);
        auto build = [&](const std::vector<double>& vals, const char* kind) {
            fbx::BoundCurve c;
            c.channel_digest = digest;
            c.seed = common.seed;
            c.epsilon = f4_eps;
            c.metadata["version"] = fbx::kToolVersion;
            c.metadata["kind"] = kind;
            c.metadata["q1"] = f4_q1;
            c.metadata["q2"] = f4_q2;
            for (std::size_t i = 0; i < grid.size(); ++i)
                c.points.push_back({double(grid[i]), vals[i], kind});
            return c;
        };
        fbx::BoundCurve c_conv = build(conv, "converse");
        fbx::BoundCurve c_rcu = build(rcu, "rcu");
        fbx::BoundCurve c_norm = build(norm, "normal-approx");
        fbx::emit_curve_csv(c_conv, f4_prefix + "_converse.csv", common.bits);
        fbx::emit_curve_csv(c_rcu, f4_prefix + "_rcu.csv", common.bits);
        fbx::emit_curve_csv(c_norm, f4_prefix + "_normal.csv", common.bits);
        fbx::ordered_json combined;
        combined["schema"] = "fbx-fig4";
        combined["version"] = fbx::kToolVersion;
        combined["channel_digest"] = digest;
        combined["seed"] = common.seed;
        combined["epsilon"] = f4_eps;
        combined["curves"] = {fbx::curve_to_json(c_conv), fbx::curve_to_json(c_rcu),
                              fbx::curve_to_json(c_norm)};
        fbx::write_file(f4_prefix + "_combined.json", combined.dump(2) + "\n");
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const fbx::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const fbx::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const fbx::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
