#pragma once

#include "siad/emt_sim.hpp"
#include "siad/frames.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace siad {

// =============================================================================
// Configuration
// =============================================================================

enum class SignalFamily { SingleTone, MultiTone, Prbs };

[[nodiscard]] std::string to_string(SignalFamily s);
[[nodiscard]] SignalFamily signal_family_from_string(const std::string& s);

/// Log-spaced request; snapped to the window resolution before use.
struct LogGrid {
    double f_min = 1.0;
    double f_max = 600.0;
    int points = 50;
};

/// Zero-sequence row/column handling in 0pn and dq0 scans.
enum class ZeroSequence { Auto, On, Off };

/// Steady-state record subtracted from each injection run: the unperturbed rebuilt circuit
/// over the window, or the coupled circuit record captured in stage 1.
enum class Baseline { Rebuilt, Coupled };

struct ScanConfig {
    Frame frame = Frame::Abc;
    Strategy strategy = Strategy::SeriesVoltage;
    SignalFamily signal = SignalFamily::SingleTone;
    /// Perturbation amplitude as a fraction of the nominal PoS quantity (positive-sequence peak).
    double amplitude_fraction = 0.02;
    /// Absolute amplitude (V or A); overrides the fraction when set.
    std::optional<double> amplitude;

    std::vector<double> frequencies;  ///< explicit list; empty means use log_grid
    std::optional<LogGrid> log_grid;

    double settle_time = 0.1;  ///< decoupling instant t_ss; the perturbation starts here
    WindowSpec window{0.1, 1.1};
    double dt = 10e-6;
    Side side = Side::Right;
    ZeroSequence zero_sequence = ZeroSequence::Auto;
    Baseline baseline = Baseline::Rebuilt;

    int prbs_register_length = 10;
    int prbs_chip_samples = 1;  ///< chip interval in time steps
    std::uint32_t seed = 1;

    double overflow_bound = 1e9;
    double steady_state_tolerance = 1e-6;
    bool phasor_init = true;

    void validate() const;
};

/// Requested log points rounded to multiples of f_res, duplicates and zero removed.
[[nodiscard]] std::vector<double> snap_log_grid(const LogGrid& g, double f_res);

/// The ordered analysis grid for a config (explicit list or snapped log grid), validated.
[[nodiscard]] std::vector<double> resolve_grid(const ScanConfig& cfg, std::vector<std::string>* notices);

// =============================================================================
// Results
// =============================================================================

enum class ResponseKind { Admittance, Impedance };

[[nodiscard]] std::string to_string(ResponseKind k);
[[nodiscard]] ResponseKind response_kind_from_string(const std::string& s);

struct FrequencyResponse {
    Frame frame = Frame::Abc;
    ResponseKind kind = ResponseKind::Admittance;
    std::vector<double> freqs;
    std::vector<Eigen::MatrixXcd> matrices;
    std::vector<std::string> labels;  ///< row/column axis names
    std::vector<cplx> zero_sequence;  ///< 0pn only; empty when absent
    std::vector<std::string> notices;

    [[nodiscard]] std::size_t size() const { return freqs.size(); }
    /// Grid strictly increasing, matrix sizes consistent, all entries finite.
    void validate() const;
};

/// Measured bins of one injection run: per measured axis, ΔV and ΔI at the requested bins.
struct AxisSpectra {
    std::vector<long> bins;
    std::vector<std::array<cplx, 3>> dv;  ///< dv[bin slot][axis]
    std::vector<std::array<cplx, 3>> di;

    [[nodiscard]] cplx v(long bin, int axis) const;
    [[nodiscard]] cplx i(long bin, int axis) const;
};

/// Injection results keyed by injected axis (frame order), for one injected frequency.
struct SpectrumSet {
    Frame frame = Frame::Abc;
    double f0 = 50.0;
    double f_d = 0.0;
    double f_res = 1.0;
    double amplitude = 0.0;  ///< injected amplitude at f_d (division-guard reference)
    std::array<std::optional<AxisSpectra>, 3> by_axis;

    [[nodiscard]] const AxisSpectra& axis(int k) const;
};

// =============================================================================
// Assembly
// =============================================================================

/// Y_xy = ΔI_x / ΔV_y at Ω_d with the injection on y.
[[nodiscard]] Eigen::Matrix3cd assemble_abc_voltage(const SpectrumSet& s);
/// Z = ΔV ΔI^-1, columns from the three injections.
[[nodiscard]] Eigen::Matrix3cd assemble_abc_current(const SpectrumSet& s);

struct PnBlock {
    Eigen::Matrix2cd m;                      ///< rows/cols p, n
    std::optional<cplx> zero;                ///< zero-sequence scalar when injected
};

/// Four mirror-aware cells of the pn block; voltage strategy gives Y, current strategy Z = ΔV ΔI^-1.
[[nodiscard]] PnBlock assemble_0pn(const SpectrumSet& s, Strategy strategy);

/// Column-wise division (voltage) or ΔV ΔI^-1 (current) over the injected dq0 axes.
[[nodiscard]] Eigen::MatrixXcd assemble_dq0(const SpectrumSet& s, Strategy strategy, bool with_zero);

/// Bins needed from an injection on `axis` at f_d (direct plus mirrors in 0pn).
[[nodiscard]] std::vector<long> required_bins(Frame frame, int axis, double f0, double f_d, double f_res);

// =============================================================================
// Scan orchestration
// =============================================================================

struct ScanTiming {
    double steady_state_s = 0.0;
    double injection_s = 0.0;
    std::size_t runs = 0;
};

/// Whether the scanned side offers a common-mode path from the PoS to ground.
[[nodiscard]] bool has_zero_sequence_path(const Circuit& c, Side side);

/// Full two-stage identification. jobs > 1 dispatches injection runs to an OpenMP pool;
/// jobs == 1 is the serial reference. Output is identical for any job count.
[[nodiscard]] FrequencyResponse scan(const Circuit& c, const ScanConfig& cfg, int jobs = 1,
                                     ScanTiming* timing = nullptr);

/// Inverse of every matrix (Y <-> Z), flagging the kind accordingly.
[[nodiscard]] FrequencyResponse invert(const FrequencyResponse& r);

}  // namespace siad
