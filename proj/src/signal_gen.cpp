#include "siad/signal_gen.hpp"

#include "siad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

namespace siad {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

bool is_multiple(double f, double f_res) {
    const double ratio = f / f_res;
    return std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, std::abs(ratio));
}

WaveformRecord single_channel(const TimeGrid& grid, const char* name) {
    WaveformRecord w;
    w.dt = grid.dt;
    w.names = {name};
    w.channels.assign(1, std::vector<double>(grid.n_samples, 0.0));
    return w;
}

void check_nyquist(double f, const TimeGrid& grid) {
    if (f > 0.5 * grid.sampling_hz()) {
        throw ConfigError("frequency " + std::to_string(f) +
                          " Hz violates the Nyquist limit f_d <= f_sampling/2 = " +
                          std::to_string(0.5 * grid.sampling_hz()) + " Hz");
    }
}

}  // namespace

void TimeGrid::validate() const {
    if (!(dt > 0.0)) throw ConfigError("time grid: dt must be positive");
    if (n_samples < 2) throw ConfigError("time grid: need at least 2 samples");
}

void ToneSpec::validate() const {
    if (!(amplitude > 0.0)) throw ConfigError("tone: amplitude must be positive");
    if (!(frequency_hz > 0.0)) throw ConfigError("tone: frequency must be positive");
}

void MultiToneSpec::validate() const {
    if (components.empty()) throw ConfigError("multitone: at least one component required");
    std::set<double> seen;
    for (const auto& c : components) {
        if (!(c.frequency_hz > 0.0)) throw ConfigError("multitone: frequencies must be positive");
        if (!(c.amplitude > 0.0)) throw ConfigError("multitone: amplitudes must be positive");
        if (!seen.insert(c.frequency_hz).second) {
            throw ConfigError("multitone: duplicate frequency " + std::to_string(c.frequency_hz));
        }
    }
}

void PrbsSpec::validate() const {
    if (register_length < 2 || register_length > 31) {
        throw ConfigError("prbs: register length must be in 2..31");
    }
    if (taps.empty()) throw ConfigError("prbs: no taps");
    for (int t : taps) {
        if (t < 1 || t > register_length) throw ConfigError("prbs: tap out of range");
    }
    if (std::find(taps.begin(), taps.end(), register_length) == taps.end()) {
        throw ConfigError("prbs: taps must include the register length");
    }
    if (!(chip_interval > 0.0)) throw ConfigError("prbs: chip interval must be positive");
    if (!(amplitude > 0.0)) throw ConfigError("prbs: amplitude must be positive");
    const std::size_t p = lfsr_period(register_length, taps, 1u);
    if (p != period()) {
        throw ConfigError("prbs: taps are not maximal length (period " + std::to_string(p) +
                          ", expected " + std::to_string(period()) + ")");
    }
}

WaveformRecord gen_single_tone(const ToneSpec& spec, const TimeGrid& grid) {
    spec.validate();
    grid.validate();
    check_nyquist(spec.frequency_hz, grid);
    auto w = single_channel(grid, "x");
    auto& x = w.channels[0];
    const double w_rad = two_pi * spec.frequency_hz;
    for (std::size_t k = 0; k < grid.n_samples; ++k) {
        x[k] = spec.amplitude * std::cos(w_rad * static_cast<double>(k) * grid.dt + spec.phase_rad);
    }
    return w;
}

WaveformRecord gen_multi_tone(const MultiToneSpec& spec, const TimeGrid& grid, double f_res) {
    spec.validate();
    grid.validate();
    if (f_res <= 0.0) f_res = 1.0 / (static_cast<double>(grid.n_samples) * grid.dt);
    for (const auto& c : spec.components) {
        check_nyquist(c.frequency_hz, grid);
        if (!is_multiple(c.frequency_hz, f_res)) {
            throw ConfigError("multitone: frequency " + std::to_string(c.frequency_hz) +
                              " Hz is not a multiple of the resolution " + std::to_string(f_res));
        }
    }
    if (spec.size() == 1) {
        const auto& c = spec.components[0];
        auto w = gen_single_tone({c.amplitude, c.frequency_hz, c.phase_rad}, grid);
        return w;
    }
    auto w = single_channel(grid, "x");
    auto& x = w.channels[0];
    // Integer phase index when the resolution spans a whole number of samples.
    const double period_samples = 1.0 / (f_res * grid.dt);
    const auto n_period = static_cast<long long>(std::llround(period_samples));
    const bool exact = std::abs(period_samples - static_cast<double>(n_period)) < 1e-6;
    if (exact) {
        std::vector<double> cos_t(static_cast<std::size_t>(n_period));
        std::vector<double> sin_t(static_cast<std::size_t>(n_period));
        for (long long i = 0; i < n_period; ++i) {
            const double a = two_pi * static_cast<double>(i) / static_cast<double>(n_period);
            cos_t[static_cast<std::size_t>(i)] = std::cos(a);
            sin_t[static_cast<std::size_t>(i)] = std::sin(a);
        }
        for (const auto& c : spec.components) {
            const auto m = std::llround(c.frequency_hz / f_res);
            const double ca = c.amplitude * std::cos(c.phase_rad);
            const double sa = c.amplitude * std::sin(c.phase_rad);
            long long idx = 0;
            for (std::size_t k = 0; k < grid.n_samples; ++k) {
                x[k] += ca * cos_t[static_cast<std::size_t>(idx)] -
                        sa * sin_t[static_cast<std::size_t>(idx)];
                idx += m;
                if (idx >= n_period) idx %= n_period;
            }
        }
    } else {
        for (const auto& c : spec.components) {
            const double w_rad = two_pi * c.frequency_hz;
            for (std::size_t k = 0; k < grid.n_samples; ++k) {
                x[k] += c.amplitude * std::cos(w_rad * static_cast<double>(k) * grid.dt + c.phase_rad);
            }
        }
    }
    return w;
}

std::vector<double> schroeder_phases(std::size_t n) {
    if (n == 0) throw ConfigError("schroeder_phases: n must be >= 1");
    std::vector<double> phi(n);
    const double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double k = static_cast<double>(i + 1);
        phi[i] = -std::numbers::pi * k * (k - 1.0) / nn;
    }
    return phi;
}

MultiToneSpec schroeder_multitone(const std::vector<double>& freqs, double amplitude) {
    const auto phi = schroeder_phases(freqs.size());
    MultiToneSpec spec;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        spec.components.push_back({freqs[i], amplitude, phi[i]});
    }
    return spec;
}

std::vector<int> prbs_taps(int register_length) {
    switch (register_length) {
        case 4: return {4, 3};
        case 5: return {5, 3};
        case 6: return {6, 5};
        case 7: return {7, 6};
        case 8: return {8, 6, 5, 4};
        case 9: return {9, 5};
        case 10: return {10, 7};
        case 11: return {11, 9};
        case 12: return {12, 11, 10, 4};
        case 13: return {13, 12, 11, 8};
        case 14: return {14, 13, 12, 2};
        case 15: return {15, 14};
        case 16: return {16, 15, 13, 4};
        default:
            throw ConfigError("prbs: no shipped taps for register length " +
                              std::to_string(register_length));
    }
}

namespace {

std::uint32_t tap_mask(int n, const std::vector<int>& taps) {
    std::uint32_t mask = 0;
    for (int t : taps) {
        if (t < 1 || t > n) throw ConfigError("prbs: tap out of range");
        mask |= 1u << (t - 1);
    }
    return mask;
}

// State bit (i-1) holds b(t - i); returns the new bit and shifts it in.
int lfsr_step(std::uint32_t& state, std::uint32_t mask, std::uint32_t full) {
    const int bit = __builtin_parity(state & mask);
    state = ((state << 1) | static_cast<std::uint32_t>(bit)) & full;
    return bit;
}

std::uint32_t full_mask(int n) { return n >= 32 ? 0xffffffffu : ((1u << n) - 1u); }

}  // namespace

std::vector<int> lfsr_bits(int register_length, const std::vector<int>& taps, std::uint32_t seed,
                           std::size_t count) {
    const std::uint32_t full = full_mask(register_length);
    std::uint32_t state = seed & full;
    if (state == 0) throw ConfigError("prbs: all-zero seed locks the register");
    const std::uint32_t mask = tap_mask(register_length, taps);
    std::vector<int> bits(count);
    for (auto& b : bits) b = lfsr_step(state, mask, full);
    return bits;
}

std::size_t lfsr_period(int register_length, const std::vector<int>& taps, std::uint32_t seed) {
    const std::uint32_t full = full_mask(register_length);
    const std::uint32_t start = seed & full;
    if (start == 0) throw ConfigError("prbs: all-zero seed locks the register");
    const std::uint32_t mask = tap_mask(register_length, taps);
    std::uint32_t state = start;
    const std::size_t limit = std::size_t{1} << register_length;
    for (std::size_t k = 1; k <= limit; ++k) {
        lfsr_step(state, mask, full);
        if (state == start) return k;
    }
    return 0;
}

WaveformRecord gen_prbs(const PrbsSpec& spec, const TimeGrid& grid, std::uint32_t seed) {
    spec.validate();
    grid.validate();
    if (spec.chip_interval < grid.dt * (1.0 - 1e-9)) {
        throw ConfigError("prbs: chip interval shorter than dt");
    }
    const std::uint32_t full = full_mask(spec.register_length);
    if ((seed & full) == 0) throw ConfigError("prbs: all-zero seed locks the register");
    const double chip_samples = spec.chip_interval / grid.dt;
    const auto m = static_cast<std::size_t>(std::llround(chip_samples));
    const bool integer_chip = std::abs(chip_samples - static_cast<double>(m)) < 1e-9 * chip_samples;
    const std::size_t last = integer_chip
                                 ? (grid.n_samples - 1) / m
                                 : static_cast<std::size_t>(std::floor(
                                       static_cast<double>(grid.n_samples - 1) / chip_samples));
    const auto bits = lfsr_bits(spec.register_length, spec.taps, seed, last + 1);
    auto w = single_channel(grid, "x");
    auto& x = w.channels[0];
    for (std::size_t k = 0; k < grid.n_samples; ++k) {
        const std::size_t s =
            integer_chip ? k / m
                         : static_cast<std::size_t>(std::floor(static_cast<double>(k) / chip_samples + 1e-9));
        x[k] = bits[std::min(s, last)] ? spec.amplitude : -spec.amplitude;
    }
    return w;
}

double crest_factor(const WaveformRecord& w) {
    if (w.channels.empty() || w.channels[0].empty()) throw ConfigError("crest_factor: empty record");
    const auto& x = w.channels[0];
    double peak = 0.0;
    double sum_sq = 0.0;
    for (double v : x) {
        peak = std::max(peak, std::abs(v));
        sum_sq += v * v;
    }
    const double rms = std::sqrt(sum_sq / static_cast<double>(x.size()));
    if (rms == 0.0) throw NumericalError("crest_factor: zero signal has no crest factor");
    return peak / rms;
}

}  // namespace siad
