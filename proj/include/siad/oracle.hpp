#pragma once

#include "siad/emt_sim.hpp"
#include "siad/scanner.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace siad {

// =============================================================================
// Closed-form references
// =============================================================================

struct ScalarResponse {
    cplx z, y;
};

struct DqResponse {
    Eigen::Matrix2cd z, y;
};

/// Z = R + j(wL - 1/(wC)), Y = 1/Z.
[[nodiscard]] ScalarResponse rlc_series_response(double r, double l, double c, double f);

/// Series RL seen in the rotating frame: Z = R + L (sI + W), W = w0 [[0, 1], [-1, 0]].
[[nodiscard]] Eigen::Matrix2cd rl_dq_impedance(double r, double l, double f0, double f);

/// Series RL feeding shunt C || R_load, dq state-space evaluated at s = j 2 pi f.
[[nodiscard]] DqResponse pi_section_dq_response(double r, double l, double c, double r_load, double f0, double f);

/// Same network by nodal reduction with the frame-shifted element impedances.
[[nodiscard]] DqResponse pi_section_dq_nodal(double r, double l, double c, double r_load, double f0, double f);

/// Prescribed device admittance Y_dev(j 2 pi f).
[[nodiscard]] Eigen::Matrix2cd device_dq_admittance(const SyntheticDevice& dev, double f);

/// Positive-/negative-sequence equivalents of a dq matrix evaluated at complex s.
[[nodiscard]] cplx seq_plus(const SyntheticDevice& dev, cplx s);
[[nodiscard]] cplx seq_minus(const SyntheticDevice& dev, cplx s);

/// pn block a 0pn scan of the device at f_d reports (rows/cols p, n), with the mirror cells
/// read at the bins used by assemble_0pn.
[[nodiscard]] Eigen::Matrix2cd device_pn_admittance(const SyntheticDevice& dev, double f_d);

// =============================================================================
// Oracle sweeps
// =============================================================================

enum class OracleKind { SeriesRlc, PiSection, SeriesRlDq, SyntheticDevice };

[[nodiscard]] std::string to_string(OracleKind k);
[[nodiscard]] OracleKind oracle_kind_from_string(const std::string& s);

struct OracleSpec {
    OracleKind kind = OracleKind::SeriesRlc;
    double r = 0.1, l = 0.1, c = 100e-6, r_load = 1e6, f0 = 50.0;
    ResponseKind response = ResponseKind::Admittance;
    Frame frame = Frame::Dq0;  ///< synthetic device: dq0 or 0pn
    std::shared_ptr<const SyntheticDevice> device;

    void validate() const;
};

/// Oracle evaluated on a grid in the scan output layout.
[[nodiscard]] FrequencyResponse oracle_response(const OracleSpec& spec, const std::vector<double>& freqs);

// =============================================================================
// Comparison
// =============================================================================

struct CompareRow {
    double f_hz = 0.0;
    int row = 0, col = 0;
    double mag_err = 0.0;    ///< relative, or absolute over the frequency's largest entry below the floor
    double phase_err = 0.0;  ///< degrees, absent below the floor
    bool floor_only = false;
    bool pass = true;
};

struct CompareResult {
    std::vector<CompareRow> rows;
    bool all_pass = true;
    double max_mag_err = 0.0;
    double max_phase_err = 0.0;
    std::size_t failures = 0;
};

struct CompareOptions {
    double tol_mag = 0.01;        ///< fraction
    double tol_phase_deg = 1.0;
    double noise_floor = 1e-6;    ///< of the largest oracle entry at each frequency
    bool diagonal_only = false;
};

[[nodiscard]] CompareResult compare(const FrequencyResponse& resp, const FrequencyResponse& oracle,
                                    const CompareOptions& opt = {});

}  // namespace siad
