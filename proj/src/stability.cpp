#include "siad/stability.hpp"

#include "siad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace siad {

namespace {

constexpr double pi = std::numbers::pi;

std::string hz(double f) {
    std::ostringstream os;
    os.precision(8);
    os << f << " Hz";
    return os.str();
}

Eigen::MatrixXcd identity_like(const Eigen::MatrixXcd& m) { return Eigen::MatrixXcd::Identity(m.rows(), m.cols()); }

double arg_step(cplx from, cplx to) { return std::arg(to / from); }

}  // namespace

// =============================================================================
// Pair construction and loop quantities
// =============================================================================

std::size_t SystemPair::index_of(double f) const {
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        if (std::abs(freqs[k] - f) <= 1e-9 * std::max(1.0, std::abs(f))) return k;
    }
    throw ConfigError(hz(f) + " is not on the shared grid");
}

SystemPair make_system_pair(const FrequencyResponse& y, const FrequencyResponse& z) {
    if (y.kind != ResponseKind::Admittance) throw ConfigError("system pair: subsystem 1 must be an admittance");
    if (z.kind != ResponseKind::Impedance) throw ConfigError("system pair: subsystem 2 must be an impedance");
    if (y.frame != z.frame) throw ConfigError("system pair: subsystems are in different frames");
    if (y.labels != z.labels) throw ConfigError("system pair: matrix axes differ");
    SystemPair p;
    p.frame = y.frame;
    std::size_t i = 0, j = 0;
    while (i < y.freqs.size() && j < z.freqs.size()) {
        const double a = y.freqs[i], b = z.freqs[j];
        if (std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a))) {
            p.freqs.push_back(a);
            p.y_sys1.push_back(y.matrices[i]);
            p.z_sys2.push_back(z.matrices[j]);
            ++i;
            ++j;
        } else if (a < b) {
            ++i;
        } else {
            ++j;
        }
    }
    if (p.freqs.empty()) throw ConfigError("system pair: no shared frequencies");
    return p;
}

Eigen::MatrixXcd loop_matrix(const SystemPair& p, double f) {
    const auto k = p.index_of(f);
    return p.y_sys1[k] * p.z_sys2[k];
}

ClosedLoop closed_loop(const SystemPair& p, double f) {
    const auto k = p.index_of(f);
    const Eigen::MatrixXcd m = identity_like(p.y_sys1[k]) + p.y_sys1[k] * p.z_sys2[k];
    const double nrm = std::max(m.norm(), 1.0);
    const cplx det = m.determinant();
    ClosedLoop out;
    if (std::abs(det) < 1e-12 * std::pow(nrm, static_cast<double>(m.rows()))) {
        out.marginal = true;
        out.t = Eigen::MatrixXcd::Constant(m.rows(), m.cols(), cplx(std::numeric_limits<double>::infinity(), 0.0));
        return out;
    }
    out.t = m.partialPivLu().solve(p.y_sys1[k]);
    return out;
}

Eigen::MatrixXcd parallel_admittance(const SystemPair& p, double f) {
    const auto k = p.index_of(f);
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(p.z_sys2[k]);
    if (!lu.isInvertible()) throw NumericalError("parallel_admittance: Z_sys2 singular at " + hz(f));
    return p.y_sys1[k] + lu.inverse();
}

// =============================================================================
// GNC
// =============================================================================

std::pair<std::vector<Eigen::VectorXcd>, std::vector<bool>> track_eigenvalues(const std::vector<Eigen::VectorXcd>& sets) {
    std::vector<Eigen::VectorXcd> out;
    if (sets.empty()) return {out, {}};
    const long n = sets[0].size();
    std::vector<bool> ambiguous(static_cast<std::size_t>(n), false);
    out.push_back(sets[0]);
    for (std::size_t k = 1; k < sets.size(); ++k) {
        const auto& prev = out.back();
        const auto& next = sets[k];
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        auto cost_of = [&](const std::vector<int>& pm) {
            double c = 0.0;
            for (long i = 0; i < n; ++i) c += std::abs(prev(i) - next(pm[static_cast<std::size_t>(i)]));
            return c;
        };
        std::vector<int> best = perm, second;
        double c_best = std::numeric_limits<double>::infinity(), c_second = c_best;
        if (n <= 3) {
            do {
                const double c = cost_of(perm);
                if (c < c_best) {
                    c_second = c_best;
                    second = best;
                    c_best = c;
                    best = perm;
                } else if (c < c_second) {
                    c_second = c;
                    second = perm;
                }
            } while (std::next_permutation(perm.begin(), perm.end()));
        } else {
            // Greedy nearest-neighbor assignment for larger sets.
            std::vector<bool> used(static_cast<std::size_t>(n), false);
            for (long i = 0; i < n; ++i) {
                long j_best = -1;
                for (long j = 0; j < n; ++j) {
                    if (used[static_cast<std::size_t>(j)]) continue;
                    if (j_best < 0 || std::abs(prev(i) - next(j)) < std::abs(prev(i) - next(j_best))) j_best = j;
                }
                used[static_cast<std::size_t>(j_best)] = true;
                best[static_cast<std::size_t>(i)] = static_cast<int>(j_best);
            }
            c_best = cost_of(best);
        }
        Eigen::VectorXcd v(n);
        for (long i = 0; i < n; ++i) v(i) = next(best[static_cast<std::size_t>(i)]);
        if (!second.empty() && c_second - c_best < 1e-9) {
            const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
            for (long i = 0; i < n; ++i) {
                if (std::abs(next(best[static_cast<std::size_t>(i)]) - next(second[static_cast<std::size_t>(i)])) > 1e-12 * scale) {
                    ambiguous[static_cast<std::size_t>(i)] = true;
                }
            }
        }
        out.push_back(v);
    }
    return {out, ambiguous};
}

GncResult gnc(const SystemPair& p) {
    if (p.size() < 8) throw ConfigError("gnc: at least 8 grid points are required");
    const std::size_t n_f = p.size();
    const long n = p.y_sys1[0].rows();
    std::vector<Eigen::VectorXcd> eig(n_f);
    std::vector<cplx> det(n_f);
    for (std::size_t k = 0; k < n_f; ++k) {
        const Eigen::MatrixXcd l = p.y_sys1[k] * p.z_sys2[k];
        eig[k] = Eigen::ComplexEigenSolver<Eigen::MatrixXcd>(l, false).eigenvalues();
        det[k] = (identity_like(l) + l).determinant();
    }
    GncResult r;
    std::vector<Eigen::VectorXcd> contour;
    for (std::size_t k = n_f; k-- > 0;) {
        r.contour_hz.push_back(-p.freqs[k]);
        contour.push_back(eig[k].conjugate());
        r.det_locus.push_back(std::conj(det[k]));
    }
    for (std::size_t k = 0; k < n_f; ++k) {
        r.contour_hz.push_back(p.freqs[k]);
        contour.push_back(eig[k]);
        r.det_locus.push_back(det[k]);
    }
    auto [tracked, amb] = track_eigenvalues(contour);
    r.eigenloci.assign(static_cast<std::size_t>(n), {});
    for (const auto& v : tracked) {
        for (long i = 0; i < n; ++i) r.eigenloci[static_cast<std::size_t>(i)].push_back(v(i));
    }
    r.uncertain = amb;
    r.crossing = std::any_of(amb.begin(), amb.end(), [](bool b) { return b; });
    if (r.crossing) r.notices.push_back("eigenlocus crossing: matching ambiguous within 1e-9; affected loci marked uncertain");

    // Winding of det(I + L) about the origin, closed through the large-|w| limit det -> 1.
    auto winding = [](const std::vector<cplx>& z, cplx limit, bool& coarse) {
        double w = 0.0;
        for (std::size_t k = 1; k < z.size(); ++k) {
            const double d = arg_step(z[k - 1], z[k]);
            if (std::abs(d) > 0.75 * pi) coarse = true;
            w += d;
        }
        w += arg_step(z.back(), limit) + arg_step(limit, z.front());
        return w / (2.0 * pi);
    };
    bool coarse = false;
    const double w_det = winding(r.det_locus, cplx(1.0, 0.0), coarse);
    r.total_encirclements = -static_cast<int>(std::lround(w_det));
    int sum_loci = 0;
    for (long i = 0; i < n; ++i) {
        std::vector<cplx> shifted;
        for (const auto& l : r.eigenloci[static_cast<std::size_t>(i)]) shifted.push_back(1.0 + l);
        const double w = winding(shifted, cplx(1.0, 0.0), coarse);
        const long rounded = std::lround(w);
        r.encirclements.push_back(-static_cast<int>(rounded));
        sum_loci += -static_cast<int>(rounded);
        if (std::abs(w - static_cast<double>(rounded)) > 0.05) r.uncertain[static_cast<std::size_t>(i)] = true;
    }
    if (sum_loci != r.total_encirclements) {
        r.notices.push_back("per-locus windings do not sum to the det(I+L) winding; loci marked uncertain");
        std::fill(r.uncertain.begin(), r.uncertain.end(), true);
    }
    if (coarse) r.notices.push_back("contour step above 0.75 pi in angle; grid may be too coarse");
    r.stable = r.total_encirclements == 0;

    r.nsm = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_f; ++k) {
        for (long i = 0; i < n; ++i) {
            const double d = std::abs(1.0 + eig[k](i));
            if (d < r.nsm) {
                r.nsm = d;
                r.nsm_hz = p.freqs[k];
            }
        }
    }
    const Eigen::MatrixXcd l_max = p.y_sys1.back() * p.z_sys2.back();
    double dist = std::numeric_limits<double>::infinity();
    for (long i = 0; i < n; ++i) dist = std::min(dist, std::abs(1.0 + eig.back()(i)));
    const double norm2 = Eigen::JacobiSVD<Eigen::MatrixXcd>(l_max).singularValues()(0);
    if (norm2 >= 0.1 * dist) {
        r.grid_truncated = true;
        r.notices.push_back("grid truncated: ||L(f_max)|| is not small against the distance to -1");
    }
    r.notices.push_back("open-loop stability of both subsystems assumed (not verifiable from frequency samples)");
    return r;
}

// =============================================================================
// Modal analysis
// =============================================================================

ModalPoint modal_point(const Eigen::MatrixXcd& y, double f_hz) {
    ModalPoint m;
    m.f_hz = f_hz;
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(y, true);
    if (es.info() != Eigen::Success) throw NumericalError("modal: eigensolver failed at " + hz(f_hz));
    m.lambda = es.eigenvalues();
    m.right = es.eigenvectors();
    const auto sv = Eigen::JacobiSVD<Eigen::MatrixXcd>(m.right).singularValues();
    const double smin = sv(sv.size() - 1);
    m.eigvec_condition = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
    const long n = y.rows();
    if (!(m.eigvec_condition <= 1e10)) {
        m.degenerate = true;
        m.left = Eigen::MatrixXcd::Zero(n, n);
        m.z_m = Eigen::VectorXcd::Zero(n);
        m.participation = Eigen::MatrixXd::Zero(n, n);
        m.dominant_input.assign(static_cast<std::size_t>(n), 0);
        return m;
    }
    m.left = m.right.inverse();
    m.z_m = m.lambda.cwiseInverse();
    m.participation.resize(n, n);
    for (long i = 0; i < n; ++i) {
        double sum = 0.0;
        for (long k = 0; k < n; ++k) sum += std::abs(m.right(k, i) * m.left(i, k));
        for (long k = 0; k < n; ++k) m.participation(k, i) = std::abs(m.right(k, i) * m.left(i, k)) / sum;
    }
    double best = -1.0;
    for (long i = 0; i < n; ++i) {
        const double z = std::abs(m.z_m(i));
        if (z > best * (1.0 + 1e-12) + 0.0 && !(std::abs(z - best) <= 1e-12 * std::max(z, best))) {
            best = z;
            m.dominant_mode = static_cast<int>(i);
        }
    }
    for (long i = 0; i < n; ++i) {
        long arg = 0;
        for (long k = 1; k < n; ++k) {
            if (m.participation(k, i) > m.participation(arg, i) * (1.0 + 1e-12)) arg = k;
        }
        m.dominant_input.push_back(static_cast<int>(arg));
    }
    return m;
}

ModalResult modal(const std::vector<double>& freqs, const std::vector<Eigen::MatrixXcd>& y_sys) {
    ModalResult r;
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        r.points.push_back(modal_point(y_sys[k], freqs[k]));
        const auto& pt = r.points.back();
        if (pt.degenerate) continue;
        const double z = std::abs(pt.z_m(pt.dominant_mode));
        if (z > r.peak_zm) {
            r.peak_zm = z;
            r.peak_hz = freqs[k];
            r.peak_mode = pt.dominant_mode;
        }
    }
    return r;
}

ModalResult modal(const SystemPair& p) {
    std::vector<Eigen::MatrixXcd> ys;
    for (double f : p.freqs) ys.push_back(parallel_admittance(p, f));
    return modal(p.freqs, ys);
}

// =============================================================================
// Phase margin
// =============================================================================

std::string to_string(PmClass c) {
    switch (c) {
        case PmClass::Stable: return "stable";
        case PmClass::OscillatoryRisk: return "oscillatory-risk";
        case PmClass::UnstableRisk: return "unstable-risk";
    }
    return "?";
}

double wrap_deg(double a) {
    double w = std::fmod(a, 360.0);
    if (w <= -180.0) w += 360.0;
    if (w > 180.0) w -= 360.0;
    return w;
}

namespace {

std::vector<double> unwrapped_phase(const std::vector<cplx>& z) {
    std::vector<double> out(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        out[k] = std::arg(z[k]);
        if (k > 0) {
            while (out[k] - out[k - 1] > pi) out[k] -= 2.0 * pi;
            while (out[k] - out[k - 1] < -pi) out[k] += 2.0 * pi;
        }
    }
    return out;
}

}  // namespace

PhaseMarginResult phase_margin(const SystemPair& p, double threshold_deg) {
    if (p.size() < 2) throw ConfigError("phase_margin: at least 2 grid points are required");
    PhaseMarginResult r;
    r.threshold_deg = threshold_deg;
    std::vector<Eigen::MatrixXcd> yinv;
    for (std::size_t k = 0; k < p.size(); ++k) {
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(p.y_sys1[k]);
        if (!lu.isInvertible()) {
            r.notices.push_back("Y_sys1 singular at " + hz(p.freqs[k]) + "; phase-margin channels skipped");
            return r;
        }
        yinv.push_back(lu.inverse());
    }
    const long n = p.y_sys1[0].rows();
    const auto names = axis_names(p.frame);
    std::vector<std::string> labels;
    if (p.frame == Frame::Seq0pn) labels = {"p", "n"};
    else labels.assign(names.begin(), names.end());
    for (long row = 0; row < n; ++row) {
        for (long col = 0; col < n; ++col) {
            PmChannel ch;
            ch.row = static_cast<int>(row);
            ch.col = static_cast<int>(col);
            ch.label = labels[static_cast<std::size_t>(row)] + labels[static_cast<std::size_t>(col)];
            std::vector<cplx> a, b;
            for (std::size_t k = 0; k < p.size(); ++k) {
                a.push_back(yinv[k](row, col));
                b.push_back(p.z_sys2[k](row, col));
            }
            const auto pa = unwrapped_phase(a);
            const auto pb = unwrapped_phase(b);
            for (std::size_t k = 0; k + 1 < p.size(); ++k) {
                const double d0 = std::abs(a[k]) - std::abs(b[k]);
                const double d1 = std::abs(a[k + 1]) - std::abs(b[k + 1]);
                const bool change = (d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0) || (d0 == 0.0 && k == 0) || d1 == 0.0;
                if (!change || (d0 == 0.0 && d1 == 0.0)) continue;
                const double t = d0 == d1 ? 0.0 : d0 / (d0 - d1);
                const double x0 = std::log(p.freqs[k]), x1 = std::log(p.freqs[k + 1]);
                PmCrossing c;
                c.f_hz = std::exp(x0 + t * (x1 - x0));
                const double phi_a = pa[k] + t * (pa[k + 1] - pa[k]);
                const double phi_b = pb[k] + t * (pb[k + 1] - pb[k]);
                c.pm_deg = wrap_deg(180.0 + (phi_a - phi_b) * 180.0 / pi);
                c.verdict = c.pm_deg > threshold_deg ? PmClass::Stable
                            : c.pm_deg > 0.0         ? PmClass::OscillatoryRisk
                                                     : PmClass::UnstableRisk;
                ch.crossings.push_back(c);
            }
            r.channels.push_back(std::move(ch));
        }
    }
    return r;
}

// =============================================================================
// Passivity
// =============================================================================

PassivityResult passivity(const std::vector<double>& freqs, const std::vector<Eigen::MatrixXcd>& y) {
    PassivityResult r;
    r.freqs = freqs;
    bool open = false;
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        const Eigen::MatrixXcd h = y[k] + y[k].adjoint();
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues()(0);
        const double tol = 1e-12 * std::max(1e-300, y[k].norm());
        r.min_eig.push_back(lo);
        const bool negative = lo < -tol;
        if (std::abs(lo) <= tol) r.boundary = true;
        if (negative && !open) {
            r.intervals.emplace_back(freqs[k], freqs[k]);
            open = true;
        } else if (negative) {
            r.intervals.back().second = freqs[k];
        } else {
            open = false;
        }
    }
    r.strictly_passive = r.intervals.empty() && !r.boundary;
    return r;
}

PassivityResult passivity(const FrequencyResponse& y) {
    if (y.kind != ResponseKind::Admittance) throw ConfigError("passivity: an admittance response is required");
    return passivity(y.freqs, y.matrices);
}

}  // namespace siad
