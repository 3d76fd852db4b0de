#include "siad/scanner.hpp"

#include "siad/errors.hpp"
#include "siad/signal_gen.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace siad {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return s;
}

}  // namespace

// =============================================================================
// Configuration
// =============================================================================

std::string to_string(SignalFamily s) {
    switch (s) {
        case SignalFamily::SingleTone: return "single-tone";
        case SignalFamily::MultiTone: return "multi-tone";
        case SignalFamily::Prbs: return "prbs";
    }
    return "?";
}

SignalFamily signal_family_from_string(const std::string& s) {
    const auto l = lower(s);
    if (l == "single-tone" || l == "tone") return SignalFamily::SingleTone;
    if (l == "multi-tone" || l == "multitone") return SignalFamily::MultiTone;
    if (l == "prbs") return SignalFamily::Prbs;
    throw ConfigError("unknown signal family '" + s + "' (expected single-tone, multi-tone or prbs)");
}

std::string to_string(ResponseKind k) { return k == ResponseKind::Admittance ? "admittance" : "impedance"; }

ResponseKind response_kind_from_string(const std::string& s) {
    const auto l = lower(s);
    if (l == "admittance" || l == "y") return ResponseKind::Admittance;
    if (l == "impedance" || l == "z") return ResponseKind::Impedance;
    throw ConfigError("unknown response kind '" + s + "'");
}

void ScanConfig::validate() const {
    if (!(dt > 0.0)) throw ConfigError("scan: dt must be positive");
    if (!(window.t_end > window.t_start)) throw ConfigError("scan: window end must follow its start");
    if (window.t_start < settle_time - 0.5 * dt) {
        throw ConfigError("scan: window must start at or after settle_time");
    }
    if (!(settle_time > 0.0)) throw ConfigError("scan: settle_time must be positive");
    if (amplitude) {
        if (!(*amplitude > 0.0)) throw ConfigError("scan: amplitude must be positive");
    } else if (!(amplitude_fraction > 0.0)) {
        throw ConfigError("scan: amplitude fraction must be positive");
    }
    if (frequencies.empty() && !log_grid) throw ConfigError("scan: no frequencies configured");
    if (log_grid) {
        if (!(log_grid->f_min > 0.0) || !(log_grid->f_max >= log_grid->f_min) || log_grid->points < 1) {
            throw ConfigError("scan: log grid needs 0 < f_min <= f_max and at least one point");
        }
    }
    if (signal == SignalFamily::Prbs) {
        if (prbs_chip_samples < 1) throw ConfigError("scan: PRBS chip must be at least one time step");
        (void)prbs_taps(prbs_register_length);
    }
}

std::vector<double> snap_log_grid(const LogGrid& g, double f_res) {
    std::set<long> bins;
    for (int i = 0; i < g.points; ++i) {
        const double u = g.points == 1 ? 0.0 : static_cast<double>(i) / (g.points - 1);
        const double f = g.f_min * std::pow(g.f_max / g.f_min, u);
        const long k = std::lround(f / f_res);
        if (k > 0) bins.insert(k);
    }
    std::vector<double> out;
    for (long k : bins) out.push_back(static_cast<double>(k) * f_res);
    return out;
}

std::vector<double> resolve_grid(const ScanConfig& cfg, std::vector<std::string>* notices) {
    const double f_res = cfg.window.f_res();
    std::vector<double> grid;
    if (!cfg.frequencies.empty()) {
        for (double f : cfg.frequencies) grid.push_back(static_cast<double>(bin_index(f, f_res).index) * f_res);
        std::sort(grid.begin(), grid.end());
        if (std::adjacent_find(grid.begin(), grid.end()) != grid.end()) {
            throw ConfigError("scan: duplicate frequency in the explicit list");
        }
    } else {
        grid = snap_log_grid(*cfg.log_grid, f_res);
        if (notices) {
            notices->push_back("log grid snapped to f_res = " + fmt(f_res) + " Hz: " + std::to_string(grid.size()) +
                               " distinct of " + std::to_string(cfg.log_grid->points) + " requested");
        }
    }
    for (double f : grid) (void)bin_index(f, f_res, 1.0 / cfg.dt, notices);
    return grid;
}

// =============================================================================
// Results
// =============================================================================

void FrequencyResponse::validate() const {
    if (freqs.size() != matrices.size()) throw NumericalError("response: grid and matrix counts differ");
    if (!zero_sequence.empty() && zero_sequence.size() != freqs.size()) {
        throw NumericalError("response: zero-sequence count differs from the grid");
    }
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        if (k > 0 && !(freqs[k] > freqs[k - 1])) throw NumericalError("response: grid not strictly increasing");
        const auto& m = matrices[k];
        if (m.rows() != static_cast<long>(labels.size()) || m.cols() != m.rows()) {
            throw NumericalError("response: matrix size does not match the labels");
        }
        if (!m.allFinite()) throw NumericalError("response: non-finite entry at " + fmt(freqs[k]) + " Hz");
    }
    for (const auto& z : zero_sequence) {
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) throw NumericalError("response: non-finite zero-sequence entry");
    }
}

cplx AxisSpectra::v(long bin, int axis) const {
    const auto it = std::find(bins.begin(), bins.end(), bin);
    if (it == bins.end()) throw NumericalError("bin " + std::to_string(bin) + " missing from the measured set");
    return dv[static_cast<std::size_t>(it - bins.begin())][static_cast<std::size_t>(axis)];
}

cplx AxisSpectra::i(long bin, int axis) const {
    const auto it = std::find(bins.begin(), bins.end(), bin);
    if (it == bins.end()) throw NumericalError("bin " + std::to_string(bin) + " missing from the measured set");
    return di[static_cast<std::size_t>(it - bins.begin())][static_cast<std::size_t>(axis)];
}

const AxisSpectra& SpectrumSet::axis(int k) const {
    const auto& a = by_axis[static_cast<std::size_t>(k)];
    if (!a) throw ConfigError("injection on axis " + axis_names(frame)[static_cast<std::size_t>(k)] + " missing");
    return *a;
}

// =============================================================================
// Assembly
// =============================================================================

namespace {

long direct_bin(const SpectrumSet& s) { return bin_index(s.f_d, s.f_res).index; }

void guard(cplx v, const SpectrumSet& s, const std::string& what) {
    if (std::abs(v) < 1e-6 * s.amplitude) {
        throw NumericalError("division guard: |" + what + "| at " + fmt(s.f_d) +
                             " Hz is below 1e-6 of the injected amplitude");
    }
}

template <class M>
M ratio_matrix(const M& dv, const M& di, const SpectrumSet& s) {
    Eigen::JacobiSVD<M> svd(di);
    const auto sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    const double cond = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
    if (!(cond <= 1e8)) {
        throw NumericalError("ill-conditioned injection at " + fmt(s.f_d) + " Hz: cond(dI) = " + fmt(cond));
    }
    return dv * di.inverse();
}

}  // namespace

Eigen::Matrix3cd assemble_abc_voltage(const SpectrumSet& s) {
    const long d = direct_bin(s);
    Eigen::Matrix3cd y;
    for (int col = 0; col < 3; ++col) {
        const auto& a = s.axis(col);
        const cplx v = a.v(d, col);
        guard(v, s, "dV_" + axis_names(Frame::Abc)[static_cast<std::size_t>(col)]);
        for (int row = 0; row < 3; ++row) y(row, col) = a.i(d, row) / v;
    }
    return y;
}

Eigen::Matrix3cd assemble_abc_current(const SpectrumSet& s) {
    const long d = direct_bin(s);
    Eigen::Matrix3cd dv, di;
    for (int col = 0; col < 3; ++col) {
        const auto& a = s.axis(col);
        for (int row = 0; row < 3; ++row) {
            dv(row, col) = a.v(d, row);
            di(row, col) = a.i(d, row);
        }
    }
    return ratio_matrix(dv, di, s);
}

std::vector<long> required_bins(Frame frame, int axis, double f0, double f_d, double f_res) {
    const long d = bin_index(f_d, f_res).index;
    if (frame != Frame::Seq0pn || axis == 0) return {d};
    const auto m = mirror_indices(f0, f_d, f_res);
    if (axis == 1) return {d, -m.d_minus_p};
    return {d, m.d_minus_n};
}

PnBlock assemble_0pn(const SpectrumSet& s, Strategy strategy) {
    const auto m = mirror_indices(s.f0, s.f_d, s.f_res);
    if (m.degenerate) {
        throw NumericalError("f_d = " + fmt(s.f_d) + " Hz equals 2 f0: mirror bin falls on DC (degenerate)");
    }
    const long d = direct_bin(s);
    const long mp = -m.d_minus_p;  // n-channel bin of the p-injection mirror
    const long mn = m.d_minus_n;   // p-channel bin of the n-injection mirror
    const auto& p = s.axis(1);
    const auto& n = s.axis(2);
    PnBlock out;
    if (strategy == Strategy::SeriesVoltage) {
        const cplx vp = p.v(d, 1);
        const cplx vn = n.v(d, 2);
        guard(vp, s, "dV_p");
        guard(vn, s, "dV_n");
        out.m(0, 0) = p.i(d, 1) / vp;
        out.m(1, 0) = p.i(mp, 2) / vp;
        out.m(0, 1) = n.i(mn, 1) / vn;
        out.m(1, 1) = n.i(d, 2) / vn;
        if (s.by_axis[0]) {
            const cplx v0 = s.by_axis[0]->v(d, 0);
            guard(v0, s, "dV_0");
            out.zero = s.by_axis[0]->i(d, 0) / v0;
        }
    } else {
        Eigen::Matrix2cd dv, di;
        dv << p.v(d, 1), n.v(mn, 1), p.v(mp, 2), n.v(d, 2);
        di << p.i(d, 1), n.i(mn, 1), p.i(mp, 2), n.i(d, 2);
        out.m = ratio_matrix(dv, di, s);
        if (s.by_axis[0]) {
            const cplx i0 = s.by_axis[0]->i(d, 0);
            guard(i0, s, "dI_0");
            out.zero = s.by_axis[0]->v(d, 0) / i0;
        }
    }
    return out;
}

Eigen::MatrixXcd assemble_dq0(const SpectrumSet& s, Strategy strategy, bool with_zero) {
    const long d = direct_bin(s);
    const int n = with_zero ? 3 : 2;
    Eigen::MatrixXcd dv(n, n), di(n, n);
    for (int col = 0; col < n; ++col) {
        const auto& a = s.axis(col);
        for (int row = 0; row < n; ++row) {
            dv(row, col) = a.v(d, row);
            di(row, col) = a.i(d, row);
        }
    }
    if (strategy == Strategy::ParallelCurrent) return ratio_matrix(dv, di, s);
    Eigen::MatrixXcd y(n, n);
    for (int col = 0; col < n; ++col) {
        guard(dv(col, col), s, "dV_" + axis_names(Frame::Dq0)[static_cast<std::size_t>(col)]);
        for (int row = 0; row < n; ++row) y(row, col) = di(row, col) / dv(col, col);
    }
    return y;
}

// =============================================================================
// Orchestration
// =============================================================================

bool has_zero_sequence_path(const Circuit& c, Side side) {
    if (!c.pos) throw ConfigError("circuit has no PoS");
    const auto names = side_elements(c, side);
    const std::set<std::string> pos(c.pos->begin(), c.pos->end());
    std::map<std::string, std::string> parent;
    auto canon = [&](const std::string& n) -> std::string {
        if (is_ground(n)) return "0";
        if (pos.count(n)) return "__pos";
        return n;
    };
    std::function<std::string(const std::string&)> find = [&](const std::string& x) -> std::string {
        auto it = parent.find(x);
        if (it == parent.end() || it->second == x) return x;
        return it->second = find(it->second);
    };
    for (const auto& name : names) {
        const auto* e = c.find(name);
        if (e->kind == ElementKind::Device || e->kind == ElementKind::CurrentSource3) continue;
        if (e->kind == ElementKind::Switch && !e->closed) continue;
        if (e->kind == ElementKind::VoltageSource3) {
            for (const auto& n : e->nodes) parent[find(canon(n))] = find("0");
            continue;
        }
        parent[find(canon(e->nodes[0]))] = find(canon(e->nodes[1]));
    }
    return find("__pos") == find("0");
}

namespace {

struct Job {
    int axis = 0;
    std::vector<double> freqs;  // injected frequencies for this run
    std::vector<long> bins;     // bins to extract
};

// Real and analytic excitation tables spanning one period, indexed by steps since onset.
struct PeriodicTable {
    std::vector<double> re;
    std::vector<cplx> an;
};

Excitation table_excitation(std::shared_ptr<const PeriodicTable> t, double dt) {
    const auto p = static_cast<long long>(t->re.size());
    auto idx = [p, dt](double tau) {
        const long long m = std::llround(tau / dt);
        return static_cast<std::size_t>(((m % p) + p) % p);
    };
    return {[t, idx](double tau) { return t->re[idx(tau)]; }, [t, idx](double tau) { return t->an[idx(tau)]; }};
}

Excitation tone_excitation(double amp, double f) {
    const double w = two_pi * f;
    return {[amp, w](double tau) { return amp * std::cos(w * tau); },
            [amp, w](double tau) { return std::polar(amp, w * tau); }};
}

struct StageTwo {
    const Circuit* circuit = nullptr;
    const SteadyStateRecord* ss = nullptr;
    const WaveformRecord* base = nullptr;
    SolverOptions opt;
    Frame frame = Frame::Abc;
    std::size_t k_ss = 0, k_win0 = 0, n_win = 0;
    double f_res = 1.0;
    double t_start = 0.0;
};

/// Stage-2 march from the decoupling snapshot over the analysis window, optionally perturbed.
WaveformRecord run_stage_two(const StageTwo& st, const std::optional<Perturbation>& p) {
    Solver s(*st.circuit, st.opt);
    s.restore(st.ss->at_decoupling);
    if (p) s.set_perturbation(kScanSourceName, *p);
    PosProbe probe;
    probe.nodes = *st.circuit->pos;
    for (const auto& e : st.circuit->elements) {
        if (e.name != kScanSourceName) probe.elements.push_back(e.name);
    }
    const double duration = static_cast<double>(st.k_win0 + st.n_win - 1 - st.k_ss) * st.opt.dt;
    return run(s, duration, probe, static_cast<double>(st.k_win0) * st.opt.dt);
}

AxisSpectra run_job(const StageTwo& st, const Job& job, const Excitation& ex) {
    const ReferenceAngle ref{st.ss->f0, st.ss->theta0};
    const auto meas = run_stage_two(st, make_injection(st.frame, job.axis, ex, st.ss->t_decouple, ref));
    const auto& base = *st.base;
    if (meas.size() != st.n_win || base.size() != st.n_win) {
        throw NumericalError("stage-2 record does not line up with the steady-state window");
    }
    const std::size_t n = st.n_win;
    // Frame channels of the deltas: 0..2 voltage, 3..5 current.
    std::vector<std::vector<double>> d(6, std::vector<double>(n));
    for (int c = 0; c < 6; ++c) {
        for (std::size_t k = 0; k < n; ++k) {
            d[static_cast<std::size_t>(c)][k] = meas.channels[static_cast<std::size_t>(c)][k] - base.channels[static_cast<std::size_t>(c)][k];
        }
    }
    if (st.frame == Frame::Dq0) {
        for (std::size_t k = 0; k < n; ++k) {
            const double th = reference_angle(ref, static_cast<double>(st.k_win0 + k) * st.opt.dt);
            for (int g = 0; g < 2; ++g) {
                auto& x = d;
                const std::size_t o = static_cast<std::size_t>(3 * g);
                const auto q = park_forward({x[o][k], x[o + 1][k], x[o + 2][k]}, th);
                x[o][k] = q.d;
                x[o + 1][k] = q.q;
                x[o + 2][k] = q.zero;
            }
        }
    }
    AxisSpectra out;
    out.bins = job.bins;
    out.dv.resize(job.bins.size());
    out.di.resize(job.bins.size());
    const bool use_fft = job.bins.size() > 16;
    std::vector<Spectrum> spectra;
    std::optional<BinExtractor> bx;
    if (use_fft) {
        for (int c = 0; c < 6; ++c) spectra.push_back(spectrum_of(d[static_cast<std::size_t>(c)], st.f_res));
    } else {
        bx.emplace(n);
    }
    for (std::size_t b = 0; b < job.bins.size(); ++b) {
        const long k = job.bins[b];
        if (2 * std::abs(k) > static_cast<long>(n)) {
            throw ConfigError("bin-unavailable: bin " + std::to_string(k) + " (" + fmt(static_cast<double>(k) * st.f_res) +
                              " Hz) lies outside the windowed band");
        }
        // Rotate to absolute time so that mirror-bin ratios do not depend on the window start.
        const cplx shift = std::polar(1.0, -two_pi * static_cast<double>(k) * st.f_res * st.t_start);
        std::array<cplx, 6> raw{};
        for (int c = 0; c < 6; ++c) {
            raw[static_cast<std::size_t>(c)] = (use_fft ? spectra[static_cast<std::size_t>(c)].at(k) : bx->bin(d[static_cast<std::size_t>(c)].data(), k)) * shift;
        }
        for (int g = 0; g < 2; ++g) {
            std::array<cplx, 3> x{raw[static_cast<std::size_t>(3 * g)], raw[static_cast<std::size_t>(3 * g + 1)], raw[static_cast<std::size_t>(3 * g + 2)]};
            if (st.frame == Frame::Seq0pn) {
                const auto q = fortescue_forward(ThreePhasePhasor{x[0], x[1], x[2]});
                x = {q.zero, q.pos, q.neg};
            }
            (g == 0 ? out.dv : out.di)[b] = x;
        }
    }
    return out;
}

}  // namespace

FrequencyResponse scan(const Circuit& c, const ScanConfig& cfg, int jobs, ScanTiming* timing) {
    using clock = std::chrono::steady_clock;
    cfg.validate();
    c.validate();
    if (!c.pos) throw ConfigError("scan: circuit has no PoS");
    if (jobs < 1) throw ConfigError("scan: jobs must be at least 1");

    FrequencyResponse resp;
    resp.frame = cfg.frame;
    resp.kind = cfg.strategy == Strategy::SeriesVoltage ? ResponseKind::Admittance : ResponseKind::Impedance;

    auto grid = resolve_grid(cfg, &resp.notices);
    const auto t_begin = clock::now();

    CaptureOptions co;
    co.solver = {cfg.dt, cfg.overflow_bound, cfg.phasor_init};
    co.settle_time = cfg.settle_time;
    co.window = cfg.window;
    co.side = cfg.side;
    co.tolerance = cfg.steady_state_tolerance;
    const auto ss = capture_steady_state(c, co);
    const double f0 = ss.f0;
    const double f_res = cfg.window.f_res();

    const auto& quantity = cfg.strategy == Strategy::SeriesVoltage ? ss.v_phasor : ss.i_phasor;
    const auto seq = fortescue_forward(quantity);
    const double nominal = std::abs(seq.pos);
    if (cfg.frame == Frame::Dq0 && (std::abs(seq.neg) > 1e-6 * nominal || std::abs(seq.zero) > 1e-6 * nominal)) {
        resp.notices.push_back("steady state carries negative or zero sequence at f0; the dq0 rebuilt source keeps the positive sequence only");
    }
    const double amp = cfg.amplitude ? *cfg.amplitude : cfg.amplitude_fraction * nominal;
    if (!(amp > 0.0)) {
        throw ConfigError("scan: nominal PoS quantity is zero; configure an absolute amplitude");
    }
    if (amp > 0.1 * nominal) {
        resp.notices.push_back("perturbation amplitude " + fmt(amp) + " exceeds 10% of the nominal PoS quantity " +
                               fmt(nominal) + "; the small-signal assumption may not hold");
    }
    const auto src = rebuild_source(ss, cfg.strategy, cfg.frame);
    const Circuit c2 = decouple_and_rebuild(c, ss, cfg.side, cfg.strategy, src);

    bool with_zero = false;
    if (cfg.frame != Frame::Abc) {
        with_zero = cfg.zero_sequence == ZeroSequence::On ||
                    (cfg.zero_sequence == ZeroSequence::Auto && has_zero_sequence_path(c, cfg.side));
        if (!with_zero) {
            resp.notices.push_back(cfg.zero_sequence == ZeroSequence::Off
                                       ? "zero sequence excluded by configuration"
                                       : "zero sequence structurally absent (not scanned)");
        }
    }
    std::vector<int> axes;
    if (cfg.frame == Frame::Abc) axes = {0, 1, 2};
    if (cfg.frame == Frame::Seq0pn) axes = with_zero ? std::vector<int>{0, 1, 2} : std::vector<int>{1, 2};
    if (cfg.frame == Frame::Dq0) axes = with_zero ? std::vector<int>{0, 1, 2} : std::vector<int>{0, 1};

    // Frequencies that cannot be assembled in the pn frame.
    if (cfg.frame == Frame::Seq0pn) {
        const long o0 = bin_index(f0, f_res).index;
        std::set<long> excited;
        for (double f : grid) excited.insert(bin_index(f, f_res).index);
        std::vector<double> kept;
        for (double f : grid) {
            const long k = bin_index(f, f_res).index;
            if (k == 2 * o0) {
                resp.notices.push_back("f_d = " + fmt(f) + " Hz equals 2 f0 (degenerate mirror on DC); point dropped");
                continue;
            }
            if (cfg.signal != SignalFamily::SingleTone) {
                const bool broadband = cfg.signal == SignalFamily::Prbs;
                const long mirror_p = std::abs(2 * o0 - k);
                const long mirror_n = k + 2 * o0;
                const bool hit = broadband || (mirror_p != k && excited.count(mirror_p)) || excited.count(mirror_n);
                if (hit) {
                    resp.notices.push_back("f_d = " + fmt(f) + " Hz: mirror bin collides with an excited bin; point dropped");
                    continue;
                }
            }
            kept.push_back(f);
        }
        grid = kept;
    }
    if (grid.empty()) throw ConfigError("scan: no frequencies left to scan");

    StageTwo st;
    st.circuit = &c2;
    st.ss = &ss;
    st.opt = {cfg.dt, cfg.overflow_bound, false};
    st.frame = cfg.frame;
    st.k_ss = static_cast<std::size_t>(std::llround(ss.t_decouple / cfg.dt));
    st.k_win0 = static_cast<std::size_t>(std::llround(ss.abc.t0 / cfg.dt));
    st.n_win = ss.abc.size();
    st.f_res = f_res;
    st.t_start = ss.abc.t0;
    WaveformRecord rebuilt_base;
    if (cfg.baseline == Baseline::Rebuilt) {
        rebuilt_base = run_stage_two(st, std::nullopt);
        st.base = &rebuilt_base;
    } else {
        st.base = &ss.abc;
    }
    if (std::abs(static_cast<double>(st.n_win) * cfg.dt * f_res - 1.0) > 1e-9) {
        throw ConfigError("scan: window length must be a whole number of time steps");
    }

    // Excitation design.
    std::vector<Job> jl;
    std::shared_ptr<const PeriodicTable> table;
    double bin_amp = amp;
    if (cfg.signal == SignalFamily::SingleTone) {
        for (double f : grid) {
            for (int a : axes) jl.push_back({a, {f}, required_bins(cfg.frame, a, f0, f, f_res)});
        }
    } else {
        auto tab = std::make_shared<PeriodicTable>();
        if (cfg.signal == SignalFamily::MultiTone) {
            bin_amp = amp / std::sqrt(static_cast<double>(grid.size()));
            const auto spec = schroeder_multitone(grid, bin_amp);
            tab->re = gen_multi_tone(spec, TimeGrid{cfg.dt, st.n_win}, f_res).channels[0];
        } else {
            PrbsSpec p;
            p.register_length = cfg.prbs_register_length;
            p.taps = prbs_taps(p.register_length);
            p.chip_interval = cfg.prbs_chip_samples * cfg.dt;
            p.amplitude = amp;
            const std::size_t len = p.period() * static_cast<std::size_t>(cfg.prbs_chip_samples);
            if (len != st.n_win) {
                resp.notices.push_back("PRBS period of " + std::to_string(len) + " samples differs from the " +
                                       std::to_string(st.n_win) + "-sample window; bins leak");
            }
            tab->re = gen_prbs(p, TimeGrid{cfg.dt, len}, cfg.seed).channels[0];
            // Per-bin amplitude of the periodic sequence at the scanned bins (guard reference).
            const auto sp = spectrum_of(tab->re, 1.0 / (static_cast<double>(len) * cfg.dt));
            double lo = std::numeric_limits<double>::infinity();
            for (double f : grid) {
                const double pos = f * static_cast<double>(len) * cfg.dt;
                lo = std::min(lo, std::abs(sp.at(std::lround(pos))));
            }
            bin_amp = lo;
        }
        tab->an = analytic_signal(tab->re);
        table = tab;
        for (int a : axes) {
            Job j{a, grid, {}};
            std::set<long> bins;
            for (double f : grid) {
                for (long b : required_bins(cfg.frame, a, f0, f, f_res)) bins.insert(b);
            }
            j.bins.assign(bins.begin(), bins.end());
            jl.push_back(std::move(j));
        }
    }

    const auto t_ss_done = clock::now();
    std::vector<AxisSpectra> results(jl.size());
    std::vector<std::exception_ptr> errors(jl.size());
    const long nj = static_cast<long>(jl.size());
    auto body = [&](long j) {
        const auto& job = jl[static_cast<std::size_t>(j)];
        try {
            const Excitation ex = table ? table_excitation(table, cfg.dt) : tone_excitation(amp, job.freqs[0]);
            results[static_cast<std::size_t>(j)] = run_job(st, job, ex);
        } catch (const DivergenceError& e) {
            const std::string where = job.freqs.size() == 1 ? "f_d = " + fmt(job.freqs[0]) + " Hz" : "broadband run";
            errors[static_cast<std::size_t>(j)] = std::make_exception_ptr(DivergenceError(
                e.time(), where + ", axis " + axis_names(cfg.frame)[static_cast<std::size_t>(job.axis)] + ": " + e.what()));
        } catch (...) {
            errors[static_cast<std::size_t>(j)] = std::current_exception();
        }
    };
    if (jobs > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
        for (long j = 0; j < nj; ++j) body(j);
    } else {
        for (long j = 0; j < nj; ++j) body(j);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    const auto t_inj_done = clock::now();

    // Assembly.
    const auto names = axis_names(cfg.frame);
    if (cfg.frame == Frame::Abc) resp.labels = {"a", "b", "c"};
    if (cfg.frame == Frame::Seq0pn) resp.labels = {"p", "n"};
    if (cfg.frame == Frame::Dq0) resp.labels = with_zero ? std::vector<std::string>{"d", "q", "0"} : std::vector<std::string>{"d", "q"};
    std::size_t cursor = 0;
    for (std::size_t fi = 0; fi < grid.size(); ++fi) {
        SpectrumSet set;
        set.frame = cfg.frame;
        set.f0 = f0;
        set.f_d = grid[fi];
        set.f_res = f_res;
        set.amplitude = bin_amp;
        if (table) {
            for (std::size_t a = 0; a < axes.size(); ++a) set.by_axis[static_cast<std::size_t>(axes[a])] = results[a];
        } else {
            for (int a : axes) set.by_axis[static_cast<std::size_t>(a)] = results[cursor++];
        }
        resp.freqs.push_back(grid[fi]);
        if (cfg.frame == Frame::Abc) {
            resp.matrices.emplace_back(cfg.strategy == Strategy::SeriesVoltage ? assemble_abc_voltage(set)
                                                                               : assemble_abc_current(set));
        } else if (cfg.frame == Frame::Seq0pn) {
            const auto block = assemble_0pn(set, cfg.strategy);
            resp.matrices.emplace_back(block.m);
            if (block.zero) resp.zero_sequence.push_back(*block.zero);
        } else {
            resp.matrices.push_back(assemble_dq0(set, cfg.strategy, with_zero));
        }
    }
    resp.validate();
    if (timing) {
        timing->steady_state_s = std::chrono::duration<double>(t_ss_done - t_begin).count();
        timing->injection_s = std::chrono::duration<double>(t_inj_done - t_ss_done).count();
        timing->runs = jl.size();
    }
    return resp;
}

FrequencyResponse invert(const FrequencyResponse& r) {
    FrequencyResponse out = r;
    out.kind = r.kind == ResponseKind::Admittance ? ResponseKind::Impedance : ResponseKind::Admittance;
    for (auto& m : out.matrices) {
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(m);
        if (!lu.isInvertible()) throw NumericalError("invert: singular response matrix");
        m = lu.inverse();
    }
    for (auto& z : out.zero_sequence) {
        if (z == cplx{}) throw NumericalError("invert: zero zero-sequence entry");
        z = 1.0 / z;
    }
    return out;
}

}  // namespace siad
