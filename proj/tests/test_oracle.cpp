#include "doctest.h"

#include "fixtures.hpp"

#include "siad/errors.hpp"
#include "siad/oracle.hpp"
#include "siad/stability.hpp"

#include <cmath>

using namespace siad;
using namespace siad::fixtures;

namespace {

/// Series RL expressed as a dq admittance device: Y = Z_dq^-1 with Z_dq = (R + sL) I + L W.
std::shared_ptr<SyntheticDevice> rl_as_device(double r, double l, double f0, double theta0) {
    const double x0 = 2 * kPi * f0 * l;
    const std::vector<double> den{l * l, 2 * r * l, r * r + x0 * x0};
    auto d = std::make_shared<SyntheticDevice>();
    d->ref = {f0, theta0};
    d->y[0][0] = {{l, r}, den};
    d->y[1][1] = {{l, r}, den};
    d->y[0][1] = {{-x0}, den};
    d->y[1][0] = {{x0}, den};
    return d;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("series RLC closed form") {
    const double r = 0.1, l = 0.1, c = 100e-6;
    const double fr = 1.0 / (2 * kPi * std::sqrt(l * c));
    const auto at_r = rlc_series_response(r, l, c, fr);
    CHECK(at_r.z.real() == doctest::Approx(0.1));
    CHECK(std::abs(at_r.z.imag()) < 1e-9);
    CHECK(std::abs(at_r.y - 10.0) < 1e-7);
    const auto low = rlc_series_response(r, l, c, 1.0);
    CHECK(std::abs(low.z) == doctest::Approx(1590.9).epsilon(1e-4));
    CHECK(rlc_series_response(r, l, c, 0.9 * fr).z.imag() < 0.0);
    CHECK(rlc_series_response(r, l, c, 1.1 * fr).z.imag() > 0.0);
    CHECK(std::abs(low.y * low.z - 1.0) < 1e-15);
}

TEST_CASE("series RL dq impedance") {
    const auto z = rl_dq_impedance(0.1, 1e-3, 50.0, 20.0);
    CHECK(std::abs(z(0, 1).real()) == doctest::Approx(0.31416).epsilon(1e-5));
    CHECK(z(0, 1) == -z(1, 0));
    CHECK(z(0, 0) == z(1, 1));
    CHECK(z(0, 0) == cplx(0.1, 2 * kPi * 20.0 * 1e-3));
    const auto pure_r = rl_dq_impedance(2.0, 0.0, 50.0, 7.0);
    CHECK((pure_r - 2.0 * Eigen::Matrix2cd::Identity()).norm() == 0.0);
    const auto dc = rl_dq_impedance(0.0, 1e-3, 50.0, 0.0);
    CHECK(dc(0, 0) == cplx(0.0));
    CHECK((dc + dc.transpose()).norm() == 0.0);
}

TEST_CASE("pi section: state space agrees with nodal reduction") {
    for (double f : log_grid(0.5, 5000, 60)) {
        const auto a = pi_section_dq_response(0.1, 1e-3, 1000e-6, 1e6, 50.0, f);
        const auto b = pi_section_dq_nodal(0.1, 1e-3, 1000e-6, 1e6, 50.0, f);
        CHECK((a.y - b.y).norm() < 1e-10 * a.y.norm());
        CHECK((a.z - b.z).norm() < 1e-10 * a.z.norm());
        CHECK((a.y * a.z - Eigen::Matrix2cd::Identity()).norm() < 1e-10);
    }
}

TEST_CASE("pi section approaches series RL plus load as C vanishes") {
    const double r = 0.1, l = 1e-3, rl = 10.0;
    for (double f : {3.0, 30.0, 300.0}) {
        const Eigen::Matrix2cd target = rl_dq_impedance(r, l, 50.0, f) + rl * Eigen::Matrix2cd::Identity();
        std::vector<double> errs;
        for (double c : {1e-6, 1e-8, 1e-10}) {
            const auto p = pi_section_dq_response(r, l, c, rl, 50.0, f);
            errs.push_back((p.z - target).norm() / target.norm());
        }
        // First order in C: each hundredfold reduction cuts the error a hundredfold.
        CHECK(errs[1] / errs[0] == doctest::Approx(0.01).epsilon(0.05));
        CHECK(errs[2] / errs[1] == doctest::Approx(0.01).epsilon(0.05));
    }
}

TEST_CASE("passive oracles are passive") {
    const auto f = log_grid(1, 1000, 40);
    OracleSpec pi;
    pi.kind = OracleKind::PiSection;
    pi.r = 0.1;
    pi.l = 1e-3;
    pi.c = 1000e-6;
    pi.response = ResponseKind::Admittance;
    CHECK(passivity(oracle_response(pi, f)).strictly_passive);
    OracleSpec rlc;
    CHECK(passivity(oracle_response(rlc, f)).strictly_passive);
    OracleSpec rl;
    rl.kind = OracleKind::SeriesRlDq;
    rl.r = 0.1;
    rl.l = 1e-3;
    CHECK(passivity(oracle_response(rl, f)).strictly_passive);
}

TEST_CASE("oracle sweep layout") {
    const std::vector<double> f{1, 10, 100};
    OracleSpec rlc;
    rlc.response = ResponseKind::Impedance;
    const auto r = oracle_response(rlc, f);
    CHECK(r.frame == Frame::Abc);
    CHECK(r.labels == std::vector<std::string>{"a", "b", "c"});
    CHECK(r.matrices[1](1, 1) == rlc_series_response(0.1, 0.1, 100e-6, 10).z);
    CHECK(r.matrices[1](0, 1) == cplx(0.0));
    OracleSpec dev;
    dev.kind = OracleKind::SyntheticDevice;
    dev.device = asymmetric_device();
    dev.frame = Frame::Seq0pn;
    const auto d = oracle_response(dev, f);
    CHECK(d.labels == std::vector<std::string>{"p", "n"});
    dev.frame = Frame::Abc;
    CHECK_THROWS_AS((void)oracle_response(dev, f), ConfigError);
    OracleSpec bad;
    bad.c = -1.0;
    CHECK_THROWS_AS((void)oracle_response(bad, f), ConfigError);
    CHECK_THROWS_AS((void)oracle_response(OracleSpec{}, {0.0}), ConfigError);
    CHECK(oracle_kind_from_string(to_string(OracleKind::PiSection)) == OracleKind::PiSection);
    CHECK_THROWS_AS((void)oracle_kind_from_string("nope"), ConfigError);
}

TEST_CASE("device sequence mapping") {
    const double r = 0.2, l = 5e-3;
    const auto d = rl_as_device(r, l, 50.0, 0.7);
    for (double fd : {5.0, 37.0, 120.0, 260.0}) {
        const auto pn = device_pn_admittance(*d, fd);
        const cplx y_stationary = 1.0 / cplx(r, 2 * kPi * fd * l);
        CHECK(std::abs(pn(0, 0) - y_stationary) < 1e-12 * std::abs(y_stationary));
        CHECK(std::abs(pn(1, 1) - y_stationary) < 1e-12 * std::abs(y_stationary));
        CHECK(std::abs(pn(0, 1)) < 1e-12 * std::abs(y_stationary));
        CHECK(std::abs(pn(1, 0)) < 1e-12 * std::abs(y_stationary));
        const Eigen::Matrix2cd ydq = device_dq_admittance(*d, fd);
        CHECK((ydq * rl_dq_impedance(r, l, 50.0, fd) - Eigen::Matrix2cd::Identity()).norm() < 1e-12);
    }
    const auto g = constant_device(0.5, 0.0, 0.0, 0.5);
    CHECK((device_pn_admittance(*g, 33.0) - 0.5 * Eigen::Matrix2cd::Identity()).norm() < 1e-15);
    const auto sym = device_pn_admittance(*symmetric_device(), 80.0);
    CHECK(std::abs(sym(0, 1)) < 1e-15);
    CHECK(std::abs(sym(1, 0)) < 1e-15);
    const auto asym = device_pn_admittance(*asymmetric_device(), 80.0);
    CHECK(std::abs(asym(0, 1)) > 1e-3);
    CHECK(std::abs(asym(1, 0)) > 1e-3);
    const auto rot = device_pn_admittance(*asymmetric_device(0.0), 80.0);
    CHECK(std::abs(std::abs(rot(0, 1)) - std::abs(asym(0, 1))) < 1e-14);
    CHECK(std::abs(rot(0, 0) - asym(0, 0)) < 1e-14);
}

TEST_CASE("compare") {
    const auto f = log_grid(1, 100, 10);
    OracleSpec pi;
    pi.kind = OracleKind::PiSection;
    const auto o = oracle_response(pi, f);
    const auto same = compare(o, o);
    CHECK(same.all_pass);
    CHECK(same.max_mag_err == 0.0);
    CHECK(same.max_phase_err < 1e-12);
    CHECK(same.rows.size() == 40);
    auto off = o;
    off.matrices[3](0, 0) *= 1.015;
    const auto c = compare(off, o);
    CHECK_FALSE(c.all_pass);
    CHECK(c.failures == 1);
    CHECK(c.max_mag_err == doctest::Approx(0.015));
    CompareOptions loose;
    loose.tol_mag = 0.02;
    CHECK(compare(off, o, loose).all_pass);
    auto rot = o;
    rot.matrices[2](1, 0) *= std::polar(1.0, 1.5 * kPi / 180.0);
    const auto cr = compare(rot, o);
    CHECK_FALSE(cr.all_pass);
    CHECK(cr.max_phase_err == doctest::Approx(1.5));
    CompareOptions diag;
    diag.diagonal_only = true;
    CHECK(compare(rot, o, diag).all_pass);
    CHECK(compare(rot, o, diag).rows.size() == 20);
    auto shifted = o;
    shifted.freqs[4] *= 1.001;
    CHECK_THROWS_AS((void)compare(shifted, o), ConfigError);
    auto shorter = o;
    shorter.freqs.pop_back();
    shorter.matrices.pop_back();
    CHECK_THROWS_AS((void)compare(shorter, o), ConfigError);
}

TEST_CASE("compare noise floor uses absolute error") {
    FrequencyResponse o;
    o.frame = Frame::Abc;
    o.freqs = {10.0};
    o.labels = {"a", "b"};
    Eigen::MatrixXcd m(2, 2);
    m << 1.0, 0.0, 0.0, 1.0;
    o.matrices = {m};
    auto r = o;
    r.matrices[0](0, 1) = 1e-4;
    const auto c = compare(r, o);
    CHECK(c.all_pass);
    CHECK(c.rows[1].floor_only);
    CHECK(c.rows[1].mag_err == doctest::Approx(1e-4));
    r.matrices[0](0, 1) = 0.05;
    CHECK_FALSE(compare(r, o).all_pass);
}

}
