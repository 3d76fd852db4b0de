#pragma once

#include "siad/emt_sim.hpp"
#include "siad/scanner.hpp"

#include <cmath>
#include <functional>

#include <numbers>
#include <string>

namespace siad::fixtures {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kVpeak = 326.59863237109;  ///< 400 V line-line rms

inline FundamentalSourceSpec balanced_source(double peak = kVpeak, double f0 = 50.0, double phase = 0.0) {
    return FundamentalSourceSpec::balanced(peak, f0, phase, phase - 2 * kPi / 3, phase + 2 * kPi / 3);
}

/// Ideal source feeding a balanced series RLC load per phase; PoS at the source terminals.
inline Circuit rlc_series(double r = 0.1, double l = 0.1, double c = 100e-6) {
    Circuit ckt;
    ckt.add_vsource("vs", {"pa", "pb", "pc"}, balanced_source());
    for (std::string p : {"a", "b", "c"}) {
        ckt.add_resistor("r" + p, "p" + p, "m" + p, r);
        ckt.add_inductor("l" + p, "m" + p, "k" + p, l);
        ckt.add_capacitor("c" + p, "k" + p, "0", c);
    }
    ckt.set_pos({"pa", "pb", "pc"});
    return ckt;
}

/// Series RL into shunt C parallel to a load resistor per phase; PoS at the source terminals.
inline Circuit pi_section(double r = 0.1, double l = 1e-3, double c = 1000e-6, double r_load = 1e6) {
    Circuit ckt;
    ckt.add_vsource("vs", {"pa", "pb", "pc"}, balanced_source());
    for (std::string p : {"a", "b", "c"}) {
        ckt.add_resistor("r" + p, "p" + p, "m" + p, r);
        ckt.add_inductor("l" + p, "m" + p, "k" + p, l);
        ckt.add_capacitor("c" + p, "k" + p, "0", c);
        ckt.add_resistor("rl" + p, "k" + p, "0", r_load);
    }
    ckt.set_pos({"pa", "pb", "pc"});
    return ckt;
}

/// Constant dq admittance [[g, b], [-b, g]] style device with entries given directly.
inline std::shared_ptr<SyntheticDevice> constant_device(double dd, double dq, double qd, double qq,
                                                        double theta0 = 0.0) {
    auto d = std::make_shared<SyntheticDevice>();
    d->ref = {50.0, theta0};
    d->y[0][0] = {{dd}, {1.0}};
    d->y[0][1] = {{dq}, {1.0}};
    d->y[1][0] = {{qd}, {1.0}};
    d->y[1][1] = {{qq}, {1.0}};
    return d;
}

/// Asymmetric dynamic device used for the mirror-frequency checks.
inline std::shared_ptr<SyntheticDevice> asymmetric_device(double theta0 = 0.3) {
    auto d = std::make_shared<SyntheticDevice>();
    d->ref = {50.0, theta0};
    d->y[0][0] = {{20.0}, {1.0, 200.0}};
    d->y[0][1] = {{0.02, 0.0}, {1.0, 100.0}};
    d->y[1][0] = {{-3.0}, {1.0, 100.0}};
    d->y[1][1] = {{15.0}, {1.0, 300.0}};
    return d;
}

/// Rotation-invariant dynamic device [[a, b], [-b, a]] (sequence-decoupled).
inline std::shared_ptr<SyntheticDevice> symmetric_device(double theta0 = 0.3) {
    auto d = std::make_shared<SyntheticDevice>();
    d->ref = {50.0, theta0};
    d->y[0][0] = {{20.0}, {1.0, 200.0}};
    d->y[0][1] = {{3.0}, {1.0, 100.0}};
    d->y[1][0] = {{-3.0}, {1.0, 100.0}};
    d->y[1][1] = {{20.0}, {1.0, 200.0}};
    return d;
}

/// Source behind a device at the PoS, source angle aligned with the device reference.
inline Circuit device_at_source(std::shared_ptr<const SyntheticDevice> dev) {
    Circuit ckt;
    ckt.add_vsource("vs", {"pa", "pb", "pc"}, balanced_source(kVpeak, 50.0, dev->ref.theta0));
    ckt.add_device("dev", {"pa", "pb", "pc"}, std::move(dev));
    ckt.set_pos({"pa", "pb", "pc"});
    return ckt;
}

/// Log-spaced grid of n points over [f_min, f_max].
inline std::vector<double> log_grid(double f_min, double f_max, int n) {
    std::vector<double> f(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) f[static_cast<std::size_t>(k)] = f_min * std::pow(f_max / f_min, k / double(n - 1));
    return f;
}

/// Response sampled from a closed form; labels default to generic axis names.
inline FrequencyResponse make_response(ResponseKind kind, const std::vector<double>& freqs,
                                       const std::function<Eigen::MatrixXcd(double)>& fn,
                                       Frame frame = Frame::Dq0) {
    FrequencyResponse r;
    r.frame = frame;
    r.kind = kind;
    r.freqs = freqs;
    for (double f : freqs) r.matrices.push_back(fn(f));
    const long n = r.matrices.front().rows();
    for (long i = 0; i < n; ++i) r.labels.push_back("x" + std::to_string(i));
    return r;
}

}  // namespace siad::fixtures
