#include "fixtures.hpp"

#include "siad/cli_io.hpp"
#include "siad/errors.hpp"
#include "siad/oracle.hpp"
#include "siad/scanner.hpp"
#include "siad/signal_gen.hpp"
#include "siad/stability.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace siad;
using namespace siad::fixtures;
namespace fs = std::filesystem;

namespace {

const fs::path kData = SIAD_DATA_DIR;

using Mat = Eigen::MatrixXcd;
using clock_type = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;
};

/// Formats with printf rules.
template <typename... A>
std::string fmt(const char* f, A... a) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

double seconds_since(clock_type::time_point t) {
    return std::chrono::duration<double>(clock_type::now() - t).count();
}

ScanConfig load_config(const std::string& name) { return scan_config_from_json(read_json_file(kData / "configs" / name)); }

OracleSpec load_oracle(const std::string& name) {
    std::vector<double> unused;
    return oracle_spec_from_json(read_json_file(kData / "configs" / name), kData / "configs", &unused);
}

/// Largest off-diagonal magnitude over the smallest diagonal magnitude, worst frequency.
double worst_offdiag_ratio(const FrequencyResponse& r) {
    double worst = 0.0;
    for (const auto& m : r.matrices) {
        double diag = std::numeric_limits<double>::infinity(), off = 0.0;
        for (long i = 0; i < m.rows(); ++i) {
            for (long j = 0; j < m.cols(); ++j) {
                if (i == j) diag = std::min(diag, std::abs(m(i, j)));
                else off = std::max(off, std::abs(m(i, j)));
            }
        }
        worst = std::max(worst, off / diag);
    }
    return worst;
}

/// Response restricted to the given frequencies (must be on its grid).
FrequencyResponse restrict_to(const FrequencyResponse& r, const std::vector<double>& freqs) {
    FrequencyResponse out = r;
    out.freqs.clear();
    out.matrices.clear();
    for (std::size_t k = 0; k < r.size(); ++k) {
        if (std::find(freqs.begin(), freqs.end(), r.freqs[k]) != freqs.end()) {
            out.freqs.push_back(r.freqs[k]);
            out.matrices.push_back(r.matrices[k]);
        }
    }
    return out;
}

/// Shared results reused by later criteria.
struct Shared {
    FrequencyResponse rlc_y, rlc_z, pi_y, pi_z;
    std::vector<SystemPair> gnc_pairs;
    std::vector<FrequencyResponse> passive_admittances;
    std::vector<FrequencyResponse> active_admittances;
};

// =============================================================================
// 1. Series RLC in abc
// =============================================================================

Outcome criterion_1(Shared& sh) {
    const Circuit c = load_netlist(kData / "netlists/rlc_series.net");
    const ScanConfig cv = load_config("rlc_abc_voltage.json");
    const ScanConfig cc = load_config("rlc_abc_current.json");
    if (cv.dt != 10e-6 || cv.window.t_end - cv.window.t_start != 1.0 || !cv.log_grid || cv.log_grid->points != 50 ||
        cv.log_grid->f_min != 1.0 || cv.log_grid->f_max != 600.0) {
        return {false, "voltage config does not match the required setup"};
    }
    const auto t0 = clock_type::now();
    sh.rlc_y = scan(c, cv);
    sh.rlc_z = scan(c, cc);
    const double runtime = seconds_since(t0);

    OracleSpec o = load_oracle("oracle_rlc.json");
    CompareOptions opt{0.01, 1.0, 1e-6, true};
    o.response = ResponseKind::Admittance;
    const auto cy = compare(sh.rlc_y, oracle_response(o, sh.rlc_y.freqs), opt);
    o.response = ResponseKind::Impedance;
    const auto cz = compare(sh.rlc_z, oracle_response(o, sh.rlc_z.freqs), opt);
    const double off_y = worst_offdiag_ratio(sh.rlc_y), off_z = worst_offdiag_ratio(sh.rlc_z);
    Outcome out;
    out.pass = cy.all_pass && cz.all_pass && off_y < 1e-3 && off_z < 1e-3 && runtime < 300.0;
    out.detail = fmt("Y %zu pts max |dmag| %.2e max dphase %.3f deg, Z max |dmag| %.2e max dphase %.3f deg; "
                     "off-diag/diag Y %.1e Z %.1e (< 1e-3); runtime %.0f s (< 300 s)",
                     sh.rlc_y.size(), cy.max_mag_err, cy.max_phase_err, cz.max_mag_err, cz.max_phase_err, off_y, off_z,
                     runtime);
    sh.passive_admittances.push_back(sh.rlc_y);
    return out;
}

// =============================================================================
// 2. PI section in dq
// =============================================================================

Outcome criterion_2(Shared& sh) {
    const Circuit c = load_netlist(kData / "netlists/pi_section.net");
    const ScanConfig cv = load_config("pi_dq_voltage.json");
    const ScanConfig cc = load_config("pi_dq_current.json");
    for (const auto* cfg : {&cv, &cc}) {
        if (cfg->dt != 10e-6 || cfg->window.t_end != 5.0 || cfg->window.t_end - cfg->window.t_start != 2.0 ||
            cfg->zero_sequence != ZeroSequence::Off) {
            return {false, "PI config does not match the required setup"};
        }
    }
    sh.pi_y = scan(c, cv);
    sh.pi_z = scan(c, cc);
    const bool f0_absent = std::none_of(sh.pi_z.freqs.begin(), sh.pi_z.freqs.end(), [](double f) { return f == 50.0; });
    OracleSpec o = load_oracle("oracle_pi.json");
    const CompareOptions opt{0.02, 2.0, 1e-6, false};
    o.response = ResponseKind::Admittance;
    const auto cy = compare(sh.pi_y, oracle_response(o, sh.pi_y.freqs), opt);
    o.response = ResponseKind::Impedance;
    const auto cz = compare(sh.pi_z, oracle_response(o, sh.pi_z.freqs), opt);
    Outcome out;
    out.pass = cy.all_pass && cz.all_pass && f0_absent && sh.pi_y.labels.size() == 2 && sh.pi_z.labels.size() == 2;
    out.detail = fmt("Y %zu pts max |dmag| %.2e max dphase %.3f deg, Z %zu pts max |dmag| %.2e max dphase %.3f deg "
                     "(2%%, 2 deg); zero sequence excluded; f0 %s current grid",
                     sh.pi_y.size(), cy.max_mag_err, cy.max_phase_err, sh.pi_z.size(), cz.max_mag_err, cz.max_phase_err,
                     f0_absent ? "absent from" : "PRESENT in");
    sh.passive_admittances.push_back(sh.pi_y);
    return out;
}

// =============================================================================
// 3. Multi-tone and PRBS parity
// =============================================================================

Outcome criterion_3(const Shared& sh) {
    const Circuit c = load_netlist(kData / "netlists/rlc_series.net");
    std::vector<double> band;
    for (double f : sh.rlc_y.freqs) {
        if (f >= 1.0 && f <= 200.0) band.push_back(f);
    }
    const FrequencyResponse single = restrict_to(sh.rlc_y, band);

    ScanConfig mt = load_config("rlc_abc_voltage.json");
    mt.log_grid.reset();
    mt.frequencies = band;
    mt.signal = SignalFamily::MultiTone;
    const FrequencyResponse rm = scan(c, mt);

    // One PRBS period (1023 chips of 100 steps) spans the 1 s window exactly.
    ScanConfig pr = mt;
    pr.signal = SignalFamily::Prbs;
    pr.prbs_register_length = 10;
    pr.prbs_chip_samples = 100;
    pr.dt = 1.0 / 102300.0;
    const FrequencyResponse rp = scan(c, pr);

    const CompareOptions opt{0.05, 180.0, 1e-6, true};
    const auto cm = compare(rm, single, opt);
    const auto cp = compare(rp, single, opt);
    Outcome out;
    out.pass = cm.all_pass && cp.all_pass;
    out.detail = fmt("%zu pts over 1-200 Hz; diagonal |dmag| vs single-tone: multi-tone %.2e, PRBS %.2e (< 5%%)",
                     band.size(), cm.max_mag_err, cp.max_mag_err);
    return out;
}

// =============================================================================
// 4. Mirror-frequency machinery on synthetic devices
// =============================================================================

Outcome criterion_4(Shared& sh) {
    const Circuit asym = load_netlist(kData / "netlists/device_asymmetric.net");
    const Circuit sym = load_netlist(kData / "netlists/device_symmetric.net");
    const auto dev_a = std::make_shared<SyntheticDevice>(parse_device(read_text_file(kData / "devices/asymmetric.dev")));
    const auto dev_s = std::make_shared<SyntheticDevice>(parse_device(read_text_file(kData / "devices/symmetric.dev")));

    ScanConfig cfg;
    cfg.strategy = Strategy::SeriesVoltage;
    cfg.frequencies = {3, 10, 25, 40, 70, 90, 130, 180, 250, 400};
    cfg.settle_time = 0.3;
    cfg.window = {0.5, 1.5};
    cfg.dt = 10e-6;

    cfg.frame = Frame::Dq0;
    const FrequencyResponse dq = scan(asym, cfg);
    OracleSpec o;
    o.kind = OracleKind::SyntheticDevice;
    o.device = dev_a;
    o.frame = Frame::Dq0;
    const auto cd = compare(dq, oracle_response(o, dq.freqs), {0.02, 2.0, 1e-6, false});

    cfg.frame = Frame::Seq0pn;
    const FrequencyResponse pa = scan(asym, cfg);
    const FrequencyResponse ps = scan(sym, cfg);
    double worst_np_err = 0.0, min_np_rel = std::numeric_limits<double>::infinity(), max_sym_rel = 0.0;
    bool has_high = false;
    for (std::size_t k = 0; k < pa.size(); ++k) {
        const double f = pa.freqs[k];
        has_high = has_high || f >= 100.0;
        const Eigen::Matrix2cd ref = device_pn_admittance(*dev_a, f);
        const cplx np = pa.matrices[k](1, 0);
        worst_np_err = std::max(worst_np_err, std::abs(np - ref(1, 0)) / std::abs(ref(1, 0)));
        min_np_rel = std::min(min_np_rel, std::abs(np) / std::abs(pa.matrices[k](0, 0)));
    }
    for (std::size_t k = 0; k < ps.size(); ++k) {
        max_sym_rel = std::max(max_sym_rel, std::abs(ps.matrices[k](1, 0)) / std::abs(ps.matrices[k](0, 0)));
    }
    Outcome out;
    out.pass = cd.all_pass && worst_np_err < 0.02 && min_np_rel > 1e-3 && max_sym_rel < 1e-3 && has_high &&
               !ps.freqs.empty();
    out.detail = fmt("dq vs Y_dev max |dmag| %.2e max dphase %.3f deg (2%%); 0pn asymmetric |Y_np|/|Y_pp| >= %.2e, "
                     "|Y_np - ref|/|ref| %.2e (2%%); symmetric |Y_np|/|Y_pp| %.1e (< 1e-3); f_d >= 2f0 %s",
                     cd.max_mag_err, cd.max_phase_err, min_np_rel, worst_np_err, max_sym_rel,
                     has_high ? "included" : "MISSING");
    sh.active_admittances.push_back(dq);
    return out;
}

// =============================================================================
// 5. GNC against time-domain behaviour
// =============================================================================

constexpr double kGridR = 2.0, kGridL = 10e-3, kGridC = 100e-6;

/// Ideal source behind a series RL with a shunt C, closed switch to the PoS, constant -g device.
Circuit gnc_family(double g, double step_time) {
    auto src = balanced_source();
    src.step_time = step_time;
    src.step_factor = 1.01;
    auto dev = constant_device(-g, 0.0, 0.0, -g);
    Circuit c;
    c.add_vsource("vs", {"sa", "sb", "sc"}, src);
    for (const char* ph : {"a", "b", "c"}) {
        const std::string p = ph;
        c.add_resistor("r" + p, "s" + p, "m" + p, kGridR);
        c.add_inductor("l" + p, "m" + p, "x" + p, kGridL);
        c.add_capacitor("c" + p, "x" + p, "0", kGridC);
        c.add_switch("sw" + p, "x" + p, "p" + p, true);
    }
    c.add_device("dev", {"pa", "pb", "pc"}, dev);
    c.set_pos({"pa", "pb", "pc"});
    return c;
}

/// Peak of the period-to-period difference of phase-a PoS voltage over a span of periods.
double deviation_envelope(const WaveformRecord& r, std::size_t per, std::size_t first_period, std::size_t n_periods) {
    double m = 0.0;
    const auto& v = r.channels[0];
    for (std::size_t k = (first_period + 1) * per; k < (first_period + 1 + n_periods) * per && k < v.size(); ++k) {
        m = std::max(m, std::abs(v[k] - v[k - per]));
    }
    return m;
}

/// True when the 1% step response grows: late envelope above the early one, or blow-up.
bool emt_unstable(double g) {
    const double dt = 10e-6, step_at = 0.1, duration = 2.1;
    const Circuit c = gnc_family(g, step_at);
    const PosProbe probe{{"pa", "pb", "pc"}, {"dev"}};
    try {
        const WaveformRecord r = run(c, SolverOptions{dt, 1e9, true}, duration, probe);
        const std::size_t per = 2000;
        const std::size_t step_period = static_cast<std::size_t>(std::llround(step_at / 0.02));
        const double early = deviation_envelope(r, per, step_period + 5, 10);
        const double late = deviation_envelope(r, per, r.size() / per - 11, 10);
        return late > early;
    } catch (const DivergenceError&) {
        return true;
    }
}

Outcome criterion_5(Shared& sh) {
    const std::vector<double> gs{0.010, 0.013, 0.016, 0.019, 0.021, 0.024, 0.027, 0.030};
    const double g_star = kGridR * kGridC / kGridL;
    std::vector<double> grid;
    for (int k = 1; k <= 200; ++k) grid.push_back(5.0 * k);

    ScanConfig base;
    base.frame = Frame::Dq0;
    base.frequencies = grid;
    base.settle_time = 0.04;
    base.window = {0.2, 0.4};
    base.dt = 10e-6;
    base.zero_sequence = ZeroSequence::Off;

    ScanConfig grid_cfg = base;
    grid_cfg.strategy = Strategy::ParallelCurrent;
    grid_cfg.side = Side::Left;
    ScanConfig dev_cfg = base;
    dev_cfg.strategy = Strategy::SeriesVoltage;
    dev_cfg.side = Side::Right;

    std::vector<double> nsm;
    std::vector<bool> gnc_unstable, emt_growth;
    std::string verdicts;
    std::size_t agree = 0;
    for (double g : gs) {
        const Circuit c = gnc_family(g, std::numeric_limits<double>::infinity());
        const FrequencyResponse z_grid = scan(c, grid_cfg);
        const FrequencyResponse y_dev = scan(c, dev_cfg);
        const SystemPair p = make_system_pair(y_dev, z_grid);
        const GncResult r = gnc(p);
        const bool td = emt_unstable(g);
        nsm.push_back(r.nsm);
        gnc_unstable.push_back(!r.stable);
        emt_growth.push_back(td);
        if (!r.stable == td) ++agree;
        verdicts += fmt(" g=%.3f:%s/%s nsm=%.3f", g, r.stable ? "S" : "U", td ? "U" : "S", r.nsm);
        sh.gnc_pairs.push_back(p);
        if (g == gs.front()) sh.passive_admittances.push_back(invert(z_grid));
    }
    // Toward the boundary: NSM falls with g below g*, rises with g above it.
    bool monotone = true;
    for (std::size_t k = 1; k < gs.size(); ++k) {
        if (gs[k] < g_star && !(nsm[k] < nsm[k - 1])) monotone = false;
        if (gs[k - 1] > g_star && !(nsm[k] > nsm[k - 1])) monotone = false;
    }
    bool analytic = true;
    for (std::size_t k = 0; k < gs.size(); ++k) analytic = analytic && (gnc_unstable[k] == (gs[k] > g_star));
    Outcome out;
    out.pass = agree == gs.size() && monotone && analytic;
    out.detail = fmt("g* = %.3f S; GNC/EMT agree %zu/%zu; NSM monotone toward g*: %s; matches analytic boundary: %s;",
                     g_star, agree, gs.size(), monotone ? "yes" : "NO", analytic ? "yes" : "NO") +
                 verdicts;
    return out;
}

// =============================================================================
// 6. Stability-suite properties on scanned data
// =============================================================================

Outcome criterion_6(const Shared& sh) {
    double worst_rec = 0.0, worst_sum = 0.0;
    auto modal_checks = [&](const std::vector<Mat>& ys) {
        for (const auto& y : ys) {
            const ModalPoint p = modal_point(y, 0.0);
            if (p.degenerate) continue;
            const Mat rec = p.right * p.lambda.asDiagonal() * p.left;
            worst_rec = std::max(worst_rec, (rec - y).norm() / y.norm());
            for (long i = 0; i < p.participation.cols(); ++i) {
                worst_sum = std::max(worst_sum, std::abs(p.participation.col(i).sum() - 1.0));
            }
        }
    };
    for (const auto& y : sh.passive_admittances) modal_checks(y.matrices);
    for (const auto& y : sh.active_admittances) modal_checks(y.matrices);
    for (const auto& p : sh.gnc_pairs) {
        std::vector<Mat> ys;
        for (double f : p.freqs) ys.push_back(parallel_admittance(p, f));
        modal_checks(ys);
    }

    // NSM invariance under (alpha Y, Z / alpha).
    bool exact = true;
    double worst_alpha3 = 0.0;
    for (const auto& p : sh.gnc_pairs) {
        const double n0 = gnc(p).nsm;
        for (double alpha : {4.0, 3.0}) {
            SystemPair q = p;
            for (auto& y : q.y_sys1) y *= alpha;
            for (auto& z : q.z_sys2) z /= alpha;
            const double n1 = gnc(q).nsm;
            if (alpha == 4.0) exact = exact && n1 == n0;
            else worst_alpha3 = std::max(worst_alpha3, std::abs(n1 - n0) / n0);
        }
    }

    std::size_t intervals = 0;
    for (const auto& y : sh.passive_admittances) intervals += passivity(y).intervals.size();

    const auto f = log_grid(1, 10000, 400);
    const double l = 1e-3, c = 1e-4;
    auto at = [](double x) { return cplx(0.0, 2 * kPi * x); };
    const SystemPair lc =
        make_system_pair(make_response(ResponseKind::Admittance, f, [&](double x) { return Mat::Constant(1, 1, 1.0 / (at(x) * l)); }),
                         make_response(ResponseKind::Impedance, f, [&](double x) { return Mat::Constant(1, 1, 1.0 / (at(x) * c)); }));
    const auto pm = phase_margin(lc);
    const bool pm_ok = pm.channels.size() == 1 && pm.channels[0].crossings.size() == 1 &&
                       std::abs(wrap_deg(pm.channels[0].crossings[0].pm_deg)) <= 1.0;
    const double pm_val = pm_ok ? pm.channels[0].crossings[0].pm_deg : std::nan("");

    Outcome out;
    out.pass = worst_rec < 1e-10 && worst_sum < 1e-12 && exact && worst_alpha3 <= 1e-12 && intervals == 0 && pm_ok;
    out.detail = fmt("modal residual %.1e (< 1e-10); participation sum error %.1e (< 1e-12); NSM invariance "
                     "alpha=4 %s, alpha=3 rel %.1e; non-passive intervals on %zu passive scans: %zu; LC PM %.3f deg (0 +- 1)",
                     worst_rec, worst_sum, exact ? "exact" : "NOT exact", worst_alpha3, sh.passive_admittances.size(),
                     intervals, pm_val);
    return out;
}

// =============================================================================
// 7. Signal properties
// =============================================================================

Outcome criterion_7() {
    bool periods = true;
    for (int n = 4; n <= 16; ++n) {
        const auto taps = prbs_taps(n);
        periods = periods && lfsr_period(n, taps, 1u) == (std::size_t{1} << n) - 1;
    }
    bool crest = true;
    std::string crest_s;
    for (std::size_t n : {8, 16, 32, 64}) {
        std::vector<double> freqs;
        for (std::size_t k = 1; k <= n; ++k) freqs.push_back(static_cast<double>(k));
        const TimeGrid grid{1e-4, 10000};
        const auto sch = gen_multi_tone(schroeder_multitone(freqs, 1.0), grid);
        MultiToneSpec zero;
        for (double fq : freqs) zero.components.push_back({fq, 1.0, 0.0});
        const auto zp = gen_multi_tone(zero, grid);
        const double cs = crest_factor(sch), cz = crest_factor(zp);
        crest = crest && cs <= cz;
        crest_s += fmt(" N=%zu %.2f/%.2f", n, cs, cz);
    }
    const TimeGrid grid{1e-5, 100000};
    const auto tone = gen_single_tone({1.0, 37.0, 0.4}, grid);
    const Spectrum sp = spectrum_of(tone.channels[0], 1.0);
    double peak = 0.0, leak = 0.0;
    for (long k = 0; k <= 2000; ++k) {
        const double m = std::abs(sp.at(k));
        if (k == 37) peak = m;
        else leak = std::max(leak, m);
    }
    Outcome out;
    out.pass = periods && crest && leak / peak < 1e-10;
    out.detail = fmt("PRBS period 2^n-1 for n=4..16: %s; crest Schroeder/zero-phase:%s; tone leakage %.1e (< 1e-10)",
                     periods ? "yes" : "NO", crest_s.c_str(), leak / peak);
    return out;
}

// =============================================================================
// 8. Determinism and duality
// =============================================================================

Outcome criterion_8(const Shared& sh) {
    const Circuit c = load_netlist(kData / "netlists/pi_section.net");
    const ScanConfig cc = load_config("pi_dq_current.json");
    const std::string a = response_to_csv(sh.pi_z);
    const std::string b = response_to_csv(scan(c, cc));
    const std::string p = response_to_csv(scan(c, cc, 2));
    const bool identical = a == b && a == p;

    auto duality = [](const FrequencyResponse& y, const FrequencyResponse& z) {
        double worst = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const Mat e = y.matrices[k] * z.matrices[k] - Mat::Identity(y.matrices[k].rows(), y.matrices[k].cols());
            worst = std::max(worst, e.operatorNorm());
        }
        return worst;
    };
    const double d_rlc = sh.rlc_y.freqs == sh.rlc_z.freqs ? duality(sh.rlc_y, sh.rlc_z) : std::nan("");
    const double d_pi = sh.pi_y.freqs == sh.pi_z.freqs ? duality(sh.pi_y, sh.pi_z) : std::nan("");
    Outcome out;
    out.pass = identical && d_rlc < 0.02 && d_pi < 0.02;
    out.detail = fmt("rerun and 2-job scan byte-identical: %s; max ||YZ - I||_2 series RLC %.1e, PI %.1e (< 0.02)",
                     identical ? "yes" : "NO", d_rlc, d_pi);
    return out;
}

}  // namespace

/// Criteria given on the command line run alone (later criteria reuse earlier results).
int main(int argc, char** argv) {
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    Shared sh;
    bool all = true;
    auto report = [&](int n, const std::function<Outcome()>& fn) {
        if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) return;
        const auto t0 = clock_type::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.pass;
        std::printf("criterion %d: %s (%.1f s) %s\n", n, o.pass ? "PASS" : "FAIL", seconds_since(t0), o.detail.c_str());
        std::fflush(stdout);
    };
    report(1, [&] { return criterion_1(sh); });
    report(2, [&] { return criterion_2(sh); });
    report(3, [&] { return criterion_3(sh); });
    report(4, [&] { return criterion_4(sh); });
    report(5, [&] { return criterion_5(sh); });
    report(6, [&] { return criterion_6(sh); });
    report(7, [] { return criterion_7(); });
    report(8, [&] { return criterion_8(sh); });
    return all ? 0 : 1;
}
