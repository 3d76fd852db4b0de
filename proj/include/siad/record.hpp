#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace siad {

using cplx = std::complex<double>;

/// Uniformly sampled multi-channel real time series. Sample k sits at t0 + k*dt.
struct WaveformRecord {
    double dt = 0.0;
    double t0 = 0.0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> channels;

    [[nodiscard]] std::size_t size() const { return channels.empty() ? 0 : channels[0].size(); }
    [[nodiscard]] std::size_t channel_count() const { return channels.size(); }
    [[nodiscard]] double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
};

/// Complex-valued counterpart used for sequence-frame and analytic signals.
struct ComplexRecord {
    double dt = 0.0;
    double t0 = 0.0;
    std::vector<std::string> names;
    std::vector<std::vector<cplx>> channels;

    [[nodiscard]] std::size_t size() const { return channels.empty() ? 0 : channels[0].size(); }
    [[nodiscard]] std::size_t channel_count() const { return channels.size(); }
};

}  // namespace siad
