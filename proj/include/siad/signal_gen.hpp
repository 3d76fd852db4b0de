#pragma once

#include "siad/record.hpp"

#include <cstdint>
#include <vector>

namespace siad {

// =============================================================================
// Perturbation signal definitions
// =============================================================================

struct TimeGrid {
    double dt = 0.0;
    std::size_t n_samples = 0;

    [[nodiscard]] double sampling_hz() const { return 1.0 / dt; }
    void validate() const;
};

struct ToneSpec {
    double amplitude = 0.0;
    double frequency_hz = 0.0;
    double phase_rad = 0.0;

    void validate() const;
};

struct ToneComponent {
    double frequency_hz = 0.0;
    double amplitude = 0.0;
    double phase_rad = 0.0;
};

struct MultiToneSpec {
    std::vector<ToneComponent> components;

    [[nodiscard]] std::size_t size() const { return components.size(); }
    void validate() const;
};

struct PrbsSpec {
    int register_length = 0;
    std::vector<int> taps;
    double chip_interval = 0.0;
    double amplitude = 0.0;

    /// Checks tap ranges and measures the LFSR period; throws unless it equals 2^n - 1.
    void validate() const;
    [[nodiscard]] std::size_t period() const { return (std::size_t{1} << register_length) - 1; }
};

// =============================================================================
// Generators and metrics
// =============================================================================

/// amplitude * cos(2 pi f k dt + phase), one channel.
[[nodiscard]] WaveformRecord gen_single_tone(const ToneSpec& spec, const TimeGrid& grid);

/// Sum of cosines. Every frequency must be a multiple of f_res; f_res <= 0 uses the record
/// resolution 1/(n_samples dt).
[[nodiscard]] WaveformRecord gen_multi_tone(const MultiToneSpec& spec, const TimeGrid& grid,
                                            double f_res = 0.0);

/// Schroeder phases phi_k = -pi k (k - 1) / n for k = 1..n.
[[nodiscard]] std::vector<double> schroeder_phases(std::size_t n);

/// Flat-amplitude multisine on the given frequencies with Schroeder phases.
[[nodiscard]] MultiToneSpec schroeder_multitone(const std::vector<double>& freqs, double amplitude);

/// Maximal-length tap set for register lengths 4..16.
[[nodiscard]] std::vector<int> prbs_taps(int register_length);

/// Raw LFSR bits b(t) = rem(sum a_i b(t - i), 2). seed holds b(-1)..b(-n) in bits 0..n-1.
[[nodiscard]] std::vector<int> lfsr_bits(int register_length, const std::vector<int>& taps,
                                          std::uint32_t seed, std::size_t count);

/// Cycle length of the register state sequence starting from seed.
[[nodiscard]] std::size_t lfsr_period(int register_length, const std::vector<int>& taps,
                                      std::uint32_t seed);

/// Bits mapped {0,1} -> {-A,+A}, each held for chip_interval.
[[nodiscard]] WaveformRecord gen_prbs(const PrbsSpec& spec, const TimeGrid& grid,
                                      std::uint32_t seed);

/// max|x| / RMS over all samples of channel 0.
[[nodiscard]] double crest_factor(const WaveformRecord& w);

}  // namespace siad
