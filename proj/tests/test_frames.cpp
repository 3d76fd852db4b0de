#include "doctest.h"

#include "siad/errors.hpp"
#include "siad/frames.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace siad;

namespace {

constexpr double kPi = std::numbers::pi;

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_SUITE("frames") {

TEST_CASE("fortescue inverse columns") {
    const cplx a = fortescue_a();
    const auto p = fortescue_inverse(SequenceSample{0.0, 1.0, 0.0});
    CHECK(rel(p.a, 1.0) < 1e-15);
    CHECK(rel(p.b, a * a) < 1e-12);
    CHECK(rel(p.c, a) < 1e-12);
    const auto z = fortescue_inverse(SequenceSample{1.0, 0.0, 0.0});
    CHECK(rel(z.a, 1.0) < 1e-15);
    CHECK(rel(z.b, 1.0) < 1e-15);
    CHECK(rel(z.c, 1.0) < 1e-15);
}

TEST_CASE("fortescue forward of pure sequences") {
    const cplx a = fortescue_a();
    const auto s = fortescue_forward(ThreePhasePhasor{1.0, a * a, a});
    CHECK(std::abs(s.zero) < 1e-12);
    CHECK(rel(s.pos, 1.0) < 1e-12);
    CHECK(std::abs(s.neg) < 1e-12);
    const auto z = fortescue_forward(ThreePhasePhasor{1.0, 1.0, 1.0});
    CHECK(rel(z.zero, 1.0) < 1e-12);
    CHECK(std::abs(z.pos) < 1e-12);
    CHECK(std::abs(z.neg) < 1e-12);
}

TEST_CASE("transform round trips on random inputs") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int it = 0; it < 200; ++it) {
        const SequenceSample s{{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
        const auto back = fortescue_forward(fortescue_inverse(s));
        CHECK(rel(back.zero, s.zero) < 1e-12);
        CHECK(rel(back.pos, s.pos) < 1e-12);
        CHECK(rel(back.neg, s.neg) < 1e-12);
        const ThreePhasePhasor x{{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
        const auto xb = fortescue_inverse(fortescue_forward(x));
        CHECK(rel(xb.a, x.a) < 1e-12);
        CHECK(rel(xb.b, x.b) < 1e-12);
        CHECK(rel(xb.c, x.c) < 1e-12);
        const Dq0Sample d{u(rng), u(rng), u(rng)};
        const double th = u(rng);
        const auto db = park_forward(park_inverse(d, th), th);
        CHECK(std::abs(db.d - d.d) < 1e-12 * 10);
        CHECK(std::abs(db.q - d.q) < 1e-12 * 10);
        CHECK(std::abs(db.zero - d.zero) < 1e-12 * 10);
    }
}

TEST_CASE("park transform examples") {
    const auto x = park_inverse({1.0, 0.0, 0.0}, 0.0);
    CHECK(x.a == doctest::Approx(1.0));
    for (double th : {0.0, 0.7, -2.0}) {
        const auto z = park_inverse({0.0, 0.0, 1.0}, th);
        CHECK(z.a == doctest::Approx(1.0));
        CHECK(z.b == doctest::Approx(1.0));
        CHECK(z.c == doctest::Approx(1.0));
    }
    const double th = 0.9;
    const ThreePhaseSample bal{std::cos(th), std::cos(th - 2 * kPi / 3), std::cos(th + 2 * kPi / 3)};
    const auto d = park_forward(bal, th);
    CHECK(d.d == doctest::Approx(1.0));
    CHECK(std::abs(d.q) < 1e-12);
    CHECK(std::abs(d.zero) < 1e-12);
    const auto c = park_forward({1.0, 1.0, 1.0}, 0.3);
    CHECK(std::abs(c.d) < 1e-12);
    CHECK(std::abs(c.q) < 1e-12);
    CHECK(c.zero == doctest::Approx(1.0));
}

TEST_CASE("reference angle") {
    CHECK(reference_angle({50.0, 0.0}, 0.02) == doctest::Approx(2 * kPi));
    CHECK(reference_angle({50.0, kPi / 6}, 0.0) == doctest::Approx(kPi / 6));
    CHECK(reference_angle({60.0, 0.0}, 1.0 / 240.0) == doctest::Approx(kPi / 2));
    const ReferenceAngle ra{50.0, 0.4};
    CHECK(reference_angle(ra, 0.3 + 0.25) - reference_angle(ra, 0.25) == doctest::Approx(2 * kPi * 50.0 * 0.3));
    CHECK(reference_angle(ra, 100.0) > 2 * kPi * 100);
}

TEST_CASE("window resolution and slicing") {
    CHECK(WindowSpec{0.0, 1.0}.f_res() == doctest::Approx(1.0));
    CHECK(WindowSpec{1.0, 3.0}.f_res() == doctest::Approx(0.5));
    CHECK(WindowSpec{0.5, 0.75}.f_res() == doctest::Approx(4.0));
    WaveformRecord r;
    r.dt = 1e-3;
    r.names = {"x"};
    r.channels = {std::vector<double>(3000)};
    for (std::size_t k = 0; k < 3000; ++k) r.channels[0][k] = static_cast<double>(k);
    const auto w = apply_window(r, {1.0, 2.0});
    CHECK(w.size() == 1000);
    CHECK(w.channels[0][0] == 1000.0);
    CHECK(w.t0 == doctest::Approx(1.0));
    CHECK_THROWS_AS((void)apply_window(r, {1.0, 1.0}), ConfigError);
    CHECK_THROWS_AS((void)apply_window(r, {2.5, 3.5}), ConfigError);
}

TEST_CASE("delta spectrum cancellation, single tone and linearity") {
    const std::size_t n = 1000;
    WaveformRecord ss, meas, two;
    for (auto* r : {&ss, &meas, &two}) {
        r->dt = 1e-3;
        r->names = {"x"};
        r->channels = {std::vector<double>(n)};
    }
    std::mt19937 rng(3);
    std::normal_distribution<double> g;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = k * 1e-3;
        ss.channels[0][k] = g(rng);
        meas.channels[0][k] = ss.channels[0][k] + std::cos(2 * kPi * 10 * t);
        two.channels[0][k] = ss.channels[0][k] + std::cos(2 * kPi * 10 * t) + 0.5 * std::sin(2 * kPi * 33 * t);
    }
    const WindowSpec w{0.0, 1.0};
    const auto zero = delta_spectrum(ss, ss, w)[0];
    for (long k = -499; k < 500; ++k) CHECK(std::abs(zero.at(k)) == 0.0);
    const auto one = delta_spectrum(meas, ss, w)[0];
    CHECK(std::abs(one.at(10)) == doctest::Approx(1.0).epsilon(1e-12));
    int nonzero = 0;
    for (long k = 0; k < 500; ++k) nonzero += std::abs(one.at(k)) > 1e-10 ? 1 : 0;
    CHECK(nonzero == 1);
    const auto ts = delta_spectrum(two, ss, w)[0];
    nonzero = 0;
    for (long k = 0; k < 500; ++k) nonzero += std::abs(ts.at(k)) > 1e-10 ? 1 : 0;
    CHECK(nonzero == 2);
    CHECK(std::abs(ts.at(33) - cplx(0.0, -0.5)) < 1e-10);
    // Real channels: bin -k is the conjugate of bin k.
    const auto sx = spectrum_of(ss.channels[0], 1.0);
    for (long k = 1; k < 500; ++k) CHECK(std::abs(sx.at(-k) - std::conj(sx.at(k))) < 1e-12);
}

TEST_CASE("spectrum linearity") {
    std::mt19937 rng(11);
    std::normal_distribution<double> g;
    std::vector<double> x(512), y(512), z(512);
    const double al = 2.5, be = -0.75;
    for (std::size_t k = 0; k < 512; ++k) {
        x[k] = g(rng);
        y[k] = g(rng);
        z[k] = al * x[k] + be * y[k];
    }
    const auto sx = spectrum_of(x, 1.0), sy = spectrum_of(y, 1.0), sz = spectrum_of(z, 1.0);
    for (long k = -255; k < 256; ++k) {
        const cplx ref = al * sx.at(k) + be * sy.at(k);
        CHECK(std::abs(sz.at(k) - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
    }
}

TEST_CASE("complex channels keep independent negative bins") {
    const std::size_t n = 200;
    std::vector<cplx> x(n);
    for (std::size_t k = 0; k < n; ++k) x[k] = std::polar(2.0, -2 * kPi * 7 * k / n);
    const auto s = spectrum_of(x, 1.0);
    CHECK(std::abs(s.at(-7)) > 1.0);
    CHECK(std::abs(s.at(7)) < 1e-12);
}

TEST_CASE("bin extractor matches the FFT spectrum") {
    std::mt19937 rng(5);
    std::normal_distribution<double> g;
    std::vector<double> x(300);
    for (auto& v : x) v = g(rng);
    const auto s = spectrum_of(x, 1.0);
    const BinExtractor be(x.size());
    for (long k : {0L, 1L, 17L, 149L, -3L}) CHECK(std::abs(be.bin(x.data(), k) - s.at(k)) < 1e-12);
}

TEST_CASE("bin index") {
    CHECK(bin_index(10.0, 0.5).index == 20);
    CHECK_THROWS_AS((void)bin_index(10.3, 1.0), ConfigError);
    CHECK_THROWS_AS((void)bin_index(60e3, 1.0, 1e5), ConfigError);
    std::vector<std::string> warn;
    CHECK(bin_index(30e3, 1.0, 1e5, &warn).index == 30000);
    CHECK(warn.size() == 1);
    warn.clear();
    (void)bin_index(20e3, 1.0, 1e5, &warn);
    CHECK(warn.empty());
}

TEST_CASE("mirror indices") {
    auto m = mirror_indices(50.0, 30.0, 1.0);
    CHECK(m.d_minus_p == 70);
    CHECK(m.d_minus_n == 130);
    CHECK_FALSE(m.degenerate);
    m = mirror_indices(50.0, 120.0, 1.0);
    CHECK(m.d_minus_p == -20);
    CHECK(m.d_minus_n == 220);
    m = mirror_indices(50.0, 100.0, 1.0);
    CHECK(m.d_minus_p == 0);
    CHECK(m.degenerate);
    CHECK_THROWS_AS((void)mirror_indices(50.0, 30.25, 0.5), ConfigError);
}

}
