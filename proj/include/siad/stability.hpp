#pragma once

#include "siad/scanner.hpp"

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

namespace siad {

// =============================================================================
// Interconnected pair
// =============================================================================

/// Subsystem 1 admittance and subsystem 2 impedance on their shared grid.
struct SystemPair {
    Frame frame = Frame::Dq0;
    std::vector<double> freqs;
    std::vector<Eigen::MatrixXcd> y_sys1;
    std::vector<Eigen::MatrixXcd> z_sys2;

    [[nodiscard]] std::size_t size() const { return freqs.size(); }
    /// Grid index of f; throws if f is not on the shared grid.
    [[nodiscard]] std::size_t index_of(double f) const;
};

/// Intersects the grids (exact match to 1e-9 relative); frames and kinds must be compatible.
[[nodiscard]] SystemPair make_system_pair(const FrequencyResponse& y_sys1, const FrequencyResponse& z_sys2);

/// L = Y_sys1 Z_sys2.
[[nodiscard]] Eigen::MatrixXcd loop_matrix(const SystemPair& p, double f);

struct ClosedLoop {
    Eigen::MatrixXcd t;
    bool marginal = false;  ///< I + L singular; t is left unbounded (inf)
};

/// T = (I + L)^-1 Y_sys1.
[[nodiscard]] ClosedLoop closed_loop(const SystemPair& p, double f);

/// Y_sys = Y_sys1 + Z_sys2^-1.
[[nodiscard]] Eigen::MatrixXcd parallel_admittance(const SystemPair& p, double f);

// =============================================================================
// Generalized Nyquist criterion
// =============================================================================

struct GncResult {
    /// Contour frequencies in Hz: conjugate half (-f_max .. -f_min) then the scanned half.
    std::vector<double> contour_hz;
    std::vector<std::vector<cplx>> eigenloci;  ///< eigenloci[i][k] along the contour
    std::vector<cplx> det_locus;               ///< det(I + L) along the contour
    std::vector<int> encirclements;            ///< clockwise windings of each locus around -1
    std::vector<bool> uncertain;               ///< locus involved in a crossing or non-integer winding
    int total_encirclements = 0;               ///< clockwise windings of det(I + L) around 0
    bool stable = true;
    double nsm = 0.0;
    double nsm_hz = 0.0;
    bool crossing = false;
    bool grid_truncated = false;
    std::vector<std::string> notices;
};

/// Requires at least 8 grid points. Open-loop stability of both subsystems is assumed.
[[nodiscard]] GncResult gnc(const SystemPair& p);

/// Tracking pass: eigenvalue sets per frequency reordered for continuity. Returns the
/// reordered sets and whether any step had two assignments within 1e-9 cost.
[[nodiscard]] std::pair<std::vector<Eigen::VectorXcd>, std::vector<bool>> track_eigenvalues(
    const std::vector<Eigen::VectorXcd>& sets);

// =============================================================================
// Modal analysis
// =============================================================================

struct ModalPoint {
    double f_hz = 0.0;
    Eigen::VectorXcd lambda;
    Eigen::MatrixXcd right;  ///< Upsilon (columns are right eigenvectors)
    Eigen::MatrixXcd left;   ///< Phi = Upsilon^-1
    Eigen::VectorXcd z_m;    ///< 1 / lambda
    Eigen::MatrixXd participation;  ///< P(k, i): input k, mode i
    int dominant_mode = 0;
    std::vector<int> dominant_input;  ///< per mode
    double eigvec_condition = 0.0;
    bool degenerate = false;
};

struct ModalResult {
    std::vector<ModalPoint> points;
    /// Highest |Z_m| over the grid and where it occurs.
    double peak_zm = 0.0;
    double peak_hz = 0.0;
    int peak_mode = 0;
};

[[nodiscard]] ModalPoint modal_point(const Eigen::MatrixXcd& y, double f_hz);
[[nodiscard]] ModalResult modal(const std::vector<double>& freqs, const std::vector<Eigen::MatrixXcd>& y_sys);
/// Modal analysis of Y_sys = Y_sys1 + Z_sys2^-1.
[[nodiscard]] ModalResult modal(const SystemPair& p);

// =============================================================================
// Phase margin
// =============================================================================

enum class PmClass { Stable, OscillatoryRisk, UnstableRisk };

[[nodiscard]] std::string to_string(PmClass c);

struct PmCrossing {
    double f_hz = 0.0;
    double pm_deg = 0.0;
    PmClass verdict = PmClass::Stable;
};

struct PmChannel {
    int row = 0, col = 0;
    std::string label;
    std::vector<PmCrossing> crossings;
};

struct PhaseMarginResult {
    std::vector<PmChannel> channels;
    double threshold_deg = 10.0;
    std::vector<std::string> notices;
};

/// Wraps an angle in degrees to (-180, 180].
[[nodiscard]] double wrap_deg(double a);

/// Per entry of Y_sys1^-1 (matrix inverse) against the same entry of Z_sys2.
[[nodiscard]] PhaseMarginResult phase_margin(const SystemPair& p, double threshold_deg = 10.0);

// =============================================================================
// Passivity
// =============================================================================

struct PassivityResult {
    std::vector<double> freqs;
    std::vector<double> min_eig;  ///< of Y + Y^H
    std::vector<std::pair<double, double>> intervals;  ///< non-passive runs [f_first, f_last]
    bool strictly_passive = true;
    bool boundary = false;  ///< some min-eig vanishes to 1e-12 relative
};

/// Admittance-kind response required.
[[nodiscard]] PassivityResult passivity(const FrequencyResponse& y);
[[nodiscard]] PassivityResult passivity(const std::vector<double>& freqs, const std::vector<Eigen::MatrixXcd>& y);

}  // namespace siad
