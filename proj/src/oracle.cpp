#include "siad/oracle.hpp"

#include "siad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace siad {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
const cplx j{0.0, 1.0};

Eigen::Matrix2cd w_matrix(double f0) {
    Eigen::Matrix2cd w;
    w << 0.0, two_pi * f0, -two_pi * f0, 0.0;
    return w;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return s;
}

}  // namespace

ScalarResponse rlc_series_response(double r, double l, double c, double f) {
    const double w = two_pi * f;
    const cplx z(r, w * l - 1.0 / (w * c));
    return {z, 1.0 / z};
}

Eigen::Matrix2cd rl_dq_impedance(double r, double l, double f0, double f) {
    const cplx s = j * (two_pi * f);
    return r * Eigen::Matrix2cd::Identity() + l * (s * Eigen::Matrix2cd::Identity() + w_matrix(f0));
}

DqResponse pi_section_dq_response(double r, double l, double c, double r_load, double f0, double f) {
    // States [i_d, i_q, v_d, v_q]; input PoS voltage; output series current.
    const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
    const Eigen::Matrix2d w = w_matrix(f0).real();
    Eigen::Matrix4d a;
    a.block<2, 2>(0, 0) = -(r / l) * I - w;
    a.block<2, 2>(0, 2) = -(1.0 / l) * I;
    a.block<2, 2>(2, 0) = (1.0 / c) * I;
    a.block<2, 2>(2, 2) = -(1.0 / (c * r_load)) * I - w;
    Eigen::Matrix<double, 4, 2> b = Eigen::Matrix<double, 4, 2>::Zero();
    b.block<2, 2>(0, 0) = (1.0 / l) * I;
    Eigen::Matrix<double, 2, 4> cm = Eigen::Matrix<double, 2, 4>::Zero();
    cm.block<2, 2>(0, 0) = I;
    const cplx s = j * (two_pi * f);
    const Eigen::Matrix4cd m = s * Eigen::Matrix4cd::Identity() - a.cast<cplx>();
    DqResponse out;
    out.y = cm.cast<cplx>() * m.partialPivLu().solve(b.cast<cplx>());
    out.z = out.y.inverse();
    return out;
}

DqResponse pi_section_dq_nodal(double r, double l, double c, double r_load, double f0, double f) {
    const Eigen::Matrix2cd I = Eigen::Matrix2cd::Identity();
    const cplx s = j * (two_pi * f);
    const Eigen::Matrix2cd z_rl = rl_dq_impedance(r, l, f0, f);
    const Eigen::Matrix2cd y_shunt = c * (s * I + w_matrix(f0)) + I / r_load;
    DqResponse out;
    out.z = z_rl + y_shunt.inverse();
    out.y = out.z.inverse();
    return out;
}

Eigen::Matrix2cd device_dq_admittance(const SyntheticDevice& dev, double f) { return dev.eval(j * (two_pi * f)); }

cplx seq_plus(const SyntheticDevice& dev, cplx s) {
    const auto y = dev.eval(s);
    return 0.5 * (y(0, 0) + y(1, 1)) + 0.5 * j * (y(0, 1) - y(1, 0));
}

cplx seq_minus(const SyntheticDevice& dev, cplx s) {
    const auto y = dev.eval(s);
    return 0.5 * (y(0, 0) - y(1, 1)) - 0.5 * j * (y(0, 1) + y(1, 0));
}

Eigen::Matrix2cd device_pn_admittance(const SyntheticDevice& dev, double f_d) {
    const double wd = two_pi * f_d;
    const double w0 = two_pi * dev.ref.f0;
    const double th = dev.ref.theta0;
    Eigen::Matrix2cd m;
    m(0, 0) = seq_plus(dev, j * (wd - w0));
    m(1, 0) = std::conj(seq_minus(dev, -j * (wd - w0))) * std::polar(1.0, -2.0 * th);
    m(0, 1) = seq_minus(dev, j * (wd + w0)) * std::polar(1.0, 2.0 * th);
    m(1, 1) = std::conj(seq_plus(dev, -j * (wd + w0)));
    return m;
}

// =============================================================================
// Sweeps
// =============================================================================

std::string to_string(OracleKind k) {
    switch (k) {
        case OracleKind::SeriesRlc: return "series-rlc";
        case OracleKind::PiSection: return "pi-section";
        case OracleKind::SeriesRlDq: return "series-rl-dq";
        case OracleKind::SyntheticDevice: return "synthetic-device";
    }
    return "?";
}

OracleKind oracle_kind_from_string(const std::string& s) {
    const auto l = lower(s);
    if (l == "series-rlc" || l == "rlc") return OracleKind::SeriesRlc;
    if (l == "pi-section" || l == "pi") return OracleKind::PiSection;
    if (l == "series-rl-dq" || l == "rl-dq") return OracleKind::SeriesRlDq;
    if (l == "synthetic-device" || l == "device") return OracleKind::SyntheticDevice;
    throw ConfigError("unknown oracle kind '" + s + "'");
}

void OracleSpec::validate() const {
    auto positive = [](double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("oracle: ") + what + " must be positive");
    };
    switch (kind) {
        case OracleKind::SeriesRlc:
            positive(r, "R");
            positive(l, "L");
            positive(c, "C");
            break;
        case OracleKind::PiSection:
            positive(r, "R");
            positive(l, "L");
            positive(c, "C");
            positive(r_load, "R_load");
            positive(f0, "f0");
            break;
        case OracleKind::SeriesRlDq:
            if (!(r >= 0.0) || !(l >= 0.0)) throw ConfigError("oracle: R and L must be non-negative");
            positive(f0, "f0");
            break;
        case OracleKind::SyntheticDevice:
            if (!device) throw ConfigError("oracle: synthetic device needs a transfer-function matrix");
            device->validate();
            if (frame == Frame::Abc) throw ConfigError("oracle: synthetic device is defined in dq0 or 0pn only");
            break;
    }
}

FrequencyResponse oracle_response(const OracleSpec& spec, const std::vector<double>& freqs) {
    spec.validate();
    FrequencyResponse r;
    r.kind = spec.response;
    const bool want_z = spec.response == ResponseKind::Impedance;
    for (double f : freqs) {
        if (!(f > 0.0) && spec.kind != OracleKind::SeriesRlDq) throw ConfigError("oracle: frequencies must be positive");
        Eigen::MatrixXcd m;
        switch (spec.kind) {
            case OracleKind::SeriesRlc: {
                const auto s = rlc_series_response(spec.r, spec.l, spec.c, f);
                m = Eigen::Matrix3cd::Identity() * (want_z ? s.z : s.y);
                r.frame = Frame::Abc;
                r.labels = {"a", "b", "c"};
                break;
            }
            case OracleKind::PiSection: {
                const auto d = pi_section_dq_response(spec.r, spec.l, spec.c, spec.r_load, spec.f0, f);
                m = want_z ? d.z : d.y;
                r.frame = Frame::Dq0;
                r.labels = {"d", "q"};
                break;
            }
            case OracleKind::SeriesRlDq: {
                const Eigen::Matrix2cd z = rl_dq_impedance(spec.r, spec.l, spec.f0, f);
                m = want_z ? Eigen::MatrixXcd(z) : Eigen::MatrixXcd(z.inverse());
                r.frame = Frame::Dq0;
                r.labels = {"d", "q"};
                break;
            }
            case OracleKind::SyntheticDevice: {
                const Eigen::Matrix2cd y = spec.frame == Frame::Dq0 ? device_dq_admittance(*spec.device, f)
                                                                   : device_pn_admittance(*spec.device, f);
                m = want_z ? Eigen::MatrixXcd(y.inverse()) : Eigen::MatrixXcd(y);
                r.frame = spec.frame;
                r.labels = spec.frame == Frame::Dq0 ? std::vector<std::string>{"d", "q"} : std::vector<std::string>{"p", "n"};
                break;
            }
        }
        r.freqs.push_back(f);
        r.matrices.push_back(m);
    }
    return r;
}

// =============================================================================
// Comparison
// =============================================================================

CompareResult compare(const FrequencyResponse& resp, const FrequencyResponse& oracle, const CompareOptions& opt) {
    if (resp.freqs.size() != oracle.freqs.size()) throw ConfigError("compare: grids differ in length");
    CompareResult out;
    for (std::size_t k = 0; k < resp.freqs.size(); ++k) {
        const double f = resp.freqs[k];
        if (std::abs(f - oracle.freqs[k]) > 1e-9 * std::max(1.0, f)) throw ConfigError("compare: grid mismatch");
        const auto& a = resp.matrices[k];
        const auto& b = oracle.matrices[k];
        if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("compare: matrix sizes differ");
        const double peak = b.cwiseAbs().maxCoeff();
        for (long row = 0; row < a.rows(); ++row) {
            for (long col = 0; col < a.cols(); ++col) {
                if (opt.diagonal_only && row != col) continue;
                CompareRow cr;
                cr.f_hz = f;
                cr.row = static_cast<int>(row);
                cr.col = static_cast<int>(col);
                const cplx x = a(row, col), y = b(row, col);
                if (std::abs(y) <= opt.noise_floor * peak) {
                    cr.floor_only = true;
                    cr.mag_err = peak > 0.0 ? std::abs(x - y) / peak : std::abs(x - y);
                    cr.pass = cr.mag_err <= opt.tol_mag;
                } else {
                    cr.mag_err = std::abs(std::abs(x) / std::abs(y) - 1.0);
                    cr.phase_err = std::abs(std::arg(x / y)) * 180.0 / std::numbers::pi;
                    cr.pass = cr.mag_err <= opt.tol_mag && cr.phase_err <= opt.tol_phase_deg;
                    out.max_phase_err = std::max(out.max_phase_err, cr.phase_err);
                }
                out.max_mag_err = std::max(out.max_mag_err, cr.mag_err);
                if (!cr.pass) {
                    out.all_pass = false;
                    ++out.failures;
                }
                out.rows.push_back(cr);
            }
        }
    }
    return out;
}

}  // namespace siad
