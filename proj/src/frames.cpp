#include "siad/frames.hpp"

#include "siad/errors.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

namespace siad {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
constexpr double third = 2.0 * std::numbers::pi / 3.0;

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

void fft_dir(std::vector<cplx>& x, int sign) {
    if (x.empty()) return;
    auto* data = reinterpret_cast<fftw_complex*>(x.data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        plan = fftw_plan_dft_1d(static_cast<int>(x.size()), data, data, sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
}

void normalize(std::vector<cplx>& bins) {
    const double n = static_cast<double>(bins.size());
    for (auto& b : bins) b *= 2.0 / n;
    if (!bins.empty()) bins[0] *= 0.5;
}

}  // namespace

cplx fortescue_a() { return std::polar(1.0, third); }

SequenceSample SequencePhasorSet::to_sample() const {
    return {std::polar(magnitude[0], angle[0]), std::polar(magnitude[1], angle[1]),
            std::polar(magnitude[2], angle[2])};
}

ThreePhasePhasor fortescue_inverse(const SequenceSample& s) {
    const cplx a = fortescue_a();
    const cplx a2 = a * a;
    return {s.zero + s.pos + s.neg, s.zero + a2 * s.pos + a * s.neg, s.zero + a * s.pos + a2 * s.neg};
}

ThreePhasePhasor fortescue_inverse(const SequencePhasorSet& s) { return fortescue_inverse(s.to_sample()); }

SequenceSample fortescue_forward(const ThreePhasePhasor& x) {
    const cplx a = fortescue_a();
    const cplx a2 = a * a;
    return {(x.a + x.b + x.c) / 3.0, (x.a + a * x.b + a2 * x.c) / 3.0, (x.a + a2 * x.b + a * x.c) / 3.0};
}

SequenceSample fortescue_forward(const ThreePhaseSample& x) {
    return fortescue_forward(ThreePhasePhasor{x.a, x.b, x.c});
}

ThreePhaseSample park_inverse(const Dq0Sample& v, double theta) {
    return {v.d * std::cos(theta) + v.q * std::sin(theta) + v.zero,
            v.d * std::cos(theta - third) + v.q * std::sin(theta - third) + v.zero,
            v.d * std::cos(theta + third) + v.q * std::sin(theta + third) + v.zero};
}

Dq0Sample park_forward(const ThreePhaseSample& x, double theta) {
    const double ca = std::cos(theta), cb = std::cos(theta - third), cc = std::cos(theta + third);
    const double sa = std::sin(theta), sb = std::sin(theta - third), sc = std::sin(theta + third);
    return {(2.0 / 3.0) * (ca * x.a + cb * x.b + cc * x.c),
            (2.0 / 3.0) * (sa * x.a + sb * x.b + sc * x.c), (x.a + x.b + x.c) / 3.0};
}

double reference_angle(const ReferenceAngle& ra, double t) { return two_pi * ra.f0 * t + ra.theta0; }

WindowSlice window_slice(double t0, double dt, std::size_t n, const WindowSpec& w) {
    if (!(w.t_end > w.t_start)) throw ConfigError("window: t_end must exceed t_start");
    const double first = (w.t_start - t0) / dt;
    const double count = (w.t_end - w.t_start) / dt;
    const auto f = std::llround(first);
    const auto c = std::llround(count);
    if (f < 0 || c < 1 || static_cast<std::size_t>(f + c) > n) {
        throw ConfigError("window [" + std::to_string(w.t_start) + ", " + std::to_string(w.t_end) +
                          ") lies outside the record");
    }
    return {static_cast<std::size_t>(f), static_cast<std::size_t>(c)};
}

WaveformRecord apply_window(const WaveformRecord& rec, const WindowSpec& w) {
    const auto s = window_slice(rec.t0, rec.dt, rec.size(), w);
    WaveformRecord out;
    out.dt = rec.dt;
    out.t0 = rec.time(s.first);
    out.names = rec.names;
    for (const auto& ch : rec.channels) {
        out.channels.emplace_back(ch.begin() + static_cast<long>(s.first),
                                  ch.begin() + static_cast<long>(s.first + s.count));
    }
    return out;
}

ComplexRecord apply_window(const ComplexRecord& rec, const WindowSpec& w) {
    const auto s = window_slice(rec.t0, rec.dt, rec.size(), w);
    ComplexRecord out;
    out.dt = rec.dt;
    out.t0 = rec.t0 + static_cast<double>(s.first) * rec.dt;
    out.names = rec.names;
    for (const auto& ch : rec.channels) {
        out.channels.emplace_back(ch.begin() + static_cast<long>(s.first),
                                  ch.begin() + static_cast<long>(s.first + s.count));
    }
    return out;
}

cplx Spectrum::at(long k) const {
    const long n = static_cast<long>(bins_.size());
    if (n == 0) throw NumericalError("spectrum: empty");
    if (2 * std::abs(k) > n) {
        throw NumericalError("bin " + std::to_string(k) + " outside the windowed band (N = " +
                             std::to_string(n) + ")");
    }
    return bins_[static_cast<std::size_t>(((k % n) + n) % n)];
}

void fft_inplace(std::vector<cplx>& x) { fft_dir(x, FFTW_FORWARD); }

Spectrum spectrum_of(const std::vector<double>& x, double f_res) {
    std::vector<cplx> bins(x.begin(), x.end());
    fft_dir(bins, FFTW_FORWARD);
    normalize(bins);
    return {std::move(bins), f_res};
}

Spectrum spectrum_of(const std::vector<cplx>& x, double f_res) {
    std::vector<cplx> bins = x;
    fft_dir(bins, FFTW_FORWARD);
    normalize(bins);
    return {std::move(bins), f_res};
}

namespace {

template <typename Rec>
void check_same_grid(const Rec& meas, const Rec& ss) {
    if (meas.dt != ss.dt || meas.t0 != ss.t0 || meas.size() != ss.size() ||
        meas.channel_count() != ss.channel_count()) {
        throw ConfigError("delta_spectrum: measured and steady-state records differ in grid");
    }
}

}  // namespace

std::vector<Spectrum> delta_spectrum(const WaveformRecord& meas, const WaveformRecord& ss,
                                     const WindowSpec& w) {
    check_same_grid(meas, ss);
    const auto s = window_slice(meas.t0, meas.dt, meas.size(), w);
    std::vector<Spectrum> out;
    for (std::size_t c = 0; c < meas.channel_count(); ++c) {
        std::vector<double> d(s.count);
        for (std::size_t k = 0; k < s.count; ++k) {
            d[k] = meas.channels[c][s.first + k] - ss.channels[c][s.first + k];
        }
        out.push_back(spectrum_of(d, w.f_res()));
    }
    return out;
}

std::vector<Spectrum> delta_spectrum(const ComplexRecord& meas, const ComplexRecord& ss,
                                     const WindowSpec& w) {
    check_same_grid(meas, ss);
    const auto s = window_slice(meas.t0, meas.dt, meas.size(), w);
    std::vector<Spectrum> out;
    for (std::size_t c = 0; c < meas.channel_count(); ++c) {
        std::vector<cplx> d(s.count);
        for (std::size_t k = 0; k < s.count; ++k) {
            d[k] = meas.channels[c][s.first + k] - ss.channels[c][s.first + k];
        }
        out.push_back(spectrum_of(d, w.f_res()));
    }
    return out;
}

BinExtractor::BinExtractor(std::size_t n) : n_(n), twiddle_(n) {
    for (std::size_t i = 0; i < n; ++i) {
        twiddle_[i] = std::polar(1.0, -two_pi * static_cast<double>(i) / static_cast<double>(n));
    }
}

double BinExtractor::scale(long k) const {
    return (k == 0 ? 1.0 : 2.0) / static_cast<double>(n_);
}

cplx BinExtractor::bin(const double* x, long k) const {
    const long n = static_cast<long>(n_);
    const auto step = static_cast<std::size_t>(((k % n) + n) % n);
    std::size_t idx = 0;
    cplx acc{0.0, 0.0};
    for (std::size_t i = 0; i < n_; ++i) {
        acc += x[i] * twiddle_[idx];
        idx += step;
        if (idx >= n_) idx -= n_;
    }
    return acc * scale(k);
}

cplx BinExtractor::bin(const cplx* x, long k) const {
    const long n = static_cast<long>(n_);
    const auto step = static_cast<std::size_t>(((k % n) + n) % n);
    std::size_t idx = 0;
    cplx acc{0.0, 0.0};
    for (std::size_t i = 0; i < n_; ++i) {
        acc += x[i] * twiddle_[idx];
        idx += step;
        if (idx >= n_) idx -= n_;
    }
    return acc * scale(k);
}

std::vector<cplx> analytic_signal(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<cplx> X(x.begin(), x.end());
    fft_dir(X, FFTW_FORWARD);
    for (std::size_t k = 1; k < n; ++k) {
        if (2 * k < n) {
            X[k] *= 2.0;
        } else if (2 * k > n) {
            X[k] = 0.0;
        }
    }
    fft_dir(X, FFTW_BACKWARD);
    for (auto& v : X) v /= static_cast<double>(n);
    return X;
}

BinIndex bin_index(double f_d, double f_res, double fs, std::vector<std::string>* warnings) {
    if (!(f_d > 0.0)) throw ConfigError("bin_index: frequency must be positive");
    if (!(f_res > 0.0)) throw ConfigError("bin_index: resolution must be positive");
    if (fs > 0.0) {
        if (f_d > 0.5 * fs) {
            throw ConfigError("f_d = " + std::to_string(f_d) +
                              " Hz violates the Nyquist criterion f_d <= f_sampling/2 = " +
                              std::to_string(0.5 * fs) + " Hz");
        }
        if (f_d > 0.25 * fs && warnings) {
            warnings->push_back("f_d = " + std::to_string(f_d) +
                                " Hz exceeds the recommended limit f_sampling/4 = " +
                                std::to_string(0.25 * fs) + " Hz");
        }
    }
    const double ratio = f_d / f_res;
    const double r = std::round(ratio);
    if (std::abs(ratio - r) > 1e-9 * std::max(1.0, std::abs(ratio))) {
        throw ConfigError("f_d = " + std::to_string(f_d) + " Hz is not a multiple of f_res = " +
                          std::to_string(f_res) + " Hz");
    }
    return {static_cast<long>(r), f_res};
}

MirrorIndices mirror_indices(double f0, double f_d, double f_res) {
    const long od = bin_index(f_d, f_res).index;
    const long o0 = bin_index(f0, f_res).index;
    MirrorIndices m;
    m.d_minus_p = 2 * o0 - od;
    m.d_minus_n = od + 2 * o0;
    m.degenerate = (m.d_minus_p == 0);
    return m;
}

}  // namespace siad
