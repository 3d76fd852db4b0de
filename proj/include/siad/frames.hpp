#pragma once

#include "siad/record.hpp"

#include <string>
#include <vector>

namespace siad {

// =============================================================================
// Instantaneous three-phase, sequence and rotating-frame samples
// =============================================================================

struct ThreePhaseSample {
    double a = 0.0, b = 0.0, c = 0.0;
};

/// Complex abc triple (phasors, or samples of complex-valued channels).
struct ThreePhasePhasor {
    cplx a, b, c;
};

struct SequenceSample {
    cplx zero, pos, neg;
};

/// Magnitude/angle form of a sequence phasor set; index 0 = zero, 1 = pos, 2 = neg.
struct SequencePhasorSet {
    double magnitude[3] = {0.0, 0.0, 0.0};
    double angle[3] = {0.0, 0.0, 0.0};

    [[nodiscard]] SequenceSample to_sample() const;
};

struct Dq0Sample {
    double d = 0.0, q = 0.0, zero = 0.0;
};

/// a = exp(j 2 pi / 3).
[[nodiscard]] cplx fortescue_a();

/// abc = T^-1 (0, p, n) with T^-1 = [[1,1,1],[1,a^2,a],[1,a,a^2]].
[[nodiscard]] ThreePhasePhasor fortescue_inverse(const SequenceSample& s);
[[nodiscard]] ThreePhasePhasor fortescue_inverse(const SequencePhasorSet& s);

/// (0, p, n) = (1/3) [[1,1,1],[1,a,a^2],[1,a^2,a]] abc.
[[nodiscard]] SequenceSample fortescue_forward(const ThreePhasePhasor& x);
[[nodiscard]] SequenceSample fortescue_forward(const ThreePhaseSample& x);

/// x_k = d cos(theta_k) + q sin(theta_k) + zero, theta_k = theta, theta - 2pi/3, theta + 2pi/3.
[[nodiscard]] ThreePhaseSample park_inverse(const Dq0Sample& dq0, double theta);

/// Exact inverse of park_inverse (2/3 amplitude-invariant scaling, 1/2 zero row).
[[nodiscard]] Dq0Sample park_forward(const ThreePhaseSample& x, double theta);

struct ReferenceAngle {
    double f0 = 50.0;
    double theta0 = 0.0;
};

/// theta(t) = 2 pi f0 t + theta0, unwrapped.
[[nodiscard]] double reference_angle(const ReferenceAngle& ra, double t);

// =============================================================================
// Windowing and spectra
// =============================================================================

struct WindowSpec {
    double t_start = 0.0;
    double t_end = 0.0;

    [[nodiscard]] double length() const { return t_end - t_start; }
    [[nodiscard]] double f_res() const { return 1.0 / length(); }
};

/// Sample range [first, first + count) of a record covered by a window.
struct WindowSlice {
    std::size_t first = 0;
    std::size_t count = 0;
};

[[nodiscard]] WindowSlice window_slice(double t0, double dt, std::size_t n, const WindowSpec& w);

/// Keeps only the samples inside [t_start, t_end).
[[nodiscard]] WaveformRecord apply_window(const WaveformRecord& rec, const WindowSpec& w);
[[nodiscard]] ComplexRecord apply_window(const ComplexRecord& rec, const WindowSpec& w);

/// Two-sided normalized DFT of one channel: 2/N scaling, 1/N for the DC bin.
class Spectrum {
public:
    Spectrum() = default;
    Spectrum(std::vector<cplx> bins, double f_res) : bins_(std::move(bins)), f_res_(f_res) {}

    /// Signed bin access; negative k addresses negative frequencies.
    [[nodiscard]] cplx at(long k) const;
    [[nodiscard]] std::size_t size() const { return bins_.size(); }
    [[nodiscard]] double f_res() const { return f_res_; }
    [[nodiscard]] const std::vector<cplx>& bins() const { return bins_; }

private:
    std::vector<cplx> bins_;
    double f_res_ = 0.0;
};

/// In-place forward FFT (FFTW); unnormalized.
void fft_inplace(std::vector<cplx>& x);

[[nodiscard]] Spectrum spectrum_of(const std::vector<double>& x, double f_res);
[[nodiscard]] Spectrum spectrum_of(const std::vector<cplx>& x, double f_res);

/// Per-channel spectra of the windowed difference meas - ss.
[[nodiscard]] std::vector<Spectrum> delta_spectrum(const WaveformRecord& meas,
                                                   const WaveformRecord& ss, const WindowSpec& w);
[[nodiscard]] std::vector<Spectrum> delta_spectrum(const ComplexRecord& meas,
                                                   const ComplexRecord& ss, const WindowSpec& w);

/// Single-bin DFT with a shared twiddle table; matches Spectrum normalization.
class BinExtractor {
public:
    explicit BinExtractor(std::size_t n);
    [[nodiscard]] cplx bin(const double* x, long k) const;
    [[nodiscard]] cplx bin(const cplx* x, long k) const;
    [[nodiscard]] std::size_t size() const { return n_; }

private:
    std::size_t n_;
    std::vector<cplx> twiddle_;
    [[nodiscard]] double scale(long k) const;
};

/// Analytic signal x + j H{x} of a periodic sequence via the DFT.
[[nodiscard]] std::vector<cplx> analytic_signal(const std::vector<double>& x);

// =============================================================================
// Bin bookkeeping
// =============================================================================

struct BinIndex {
    long index = 0;
    double f_res = 0.0;
};

/// Omega_d = f_d / f_res. Throws on misalignment (1e-9 relative) or f_d > fs/2; appends a
/// warning when f_d > fs/4. fs <= 0 skips the Nyquist checks.
[[nodiscard]] BinIndex bin_index(double f_d, double f_res, double fs = 0.0,
                                 std::vector<std::string>* warnings = nullptr);

struct MirrorIndices {
    long d_minus_p = 0;  ///< (2 f0 - f_d) / f_res, signed
    long d_minus_n = 0;  ///< (f_d + 2 f0) / f_res
    bool degenerate = false;  ///< f_d == 2 f0, mirror falls on DC
};

[[nodiscard]] MirrorIndices mirror_indices(double f0, double f_d, double f_res);

}  // namespace siad
