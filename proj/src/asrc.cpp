#include "sroloop/asrc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace sroloop {

// ---------------------------------------------------------------------------
// SroProfile

SroProfile::SroProfile(double constant_sro) : SroProfile(std::vector<Segment>{{0.0, constant_sro}}) {}

SroProfile::SroProfile(std::vector<Segment> segments) : segments_(std::move(segments)) {
    if (segments_.empty() || segments_.front().start_s != 0.0)
        throw ParameterError("SroProfile: first segment must start at t = 0");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        if (!std::isfinite(segments_[i].sro) || std::abs(segments_[i].sro) > kMaxAbsSro)
            throw ParameterError("SroProfile: |sro| must not exceed 1e-3");
        if (i > 0 && !(segments_[i].start_s > segments_[i - 1].start_s))
            throw ParameterError("SroProfile: segment start times must increase strictly");
    }
}

SroProfile SroProfile::step(double step_time_s, double before, double after) {
    return SroProfile(std::vector<Segment>{{0.0, before}, {step_time_s, after}});
}

double SroProfile::at(double t_s) const noexcept {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t_s,
                               [](double t, const Segment& s) { return t < s.start_s; });
    return it == segments_.begin() ? segments_.front().sro : std::prev(it)->sro;
}

double SroProfile::max_abs() const noexcept {
    double m = 0.0;
    for (const auto& s : segments_)
        m = std::max(m, std::abs(s.sro));
    return m;
}

// ---------------------------------------------------------------------------
// Kernel

void SincKernel::validate() const {
    if (window_length < 3 || window_length % 2 == 0)
        throw ParameterError("SincKernel: window length must be odd and >= 3");
}

SincTapGenerator::SincTapGenerator(SincKernel kernel) : kernel_(kernel) {
    kernel_.validate();
    const int n = kernel_.window_length;
    const int h = kernel_.half_width();
    cos_.resize(std::size_t(n));
    sin_.resize(std::size_t(n));
    sign_.resize(std::size_t(n));
    offset_.resize(std::size_t(n));
    for (int i = -h; i <= h; ++i) {
        const double a = 2.0 * std::numbers::pi * i / n;
        cos_[std::size_t(i + h)] = std::cos(a);
        sin_[std::size_t(i + h)] = std::sin(a);
        sign_[std::size_t(i + h)] = (i % 2 == 0) ? -1.0 : 1.0;  // -(-1)^i
        offset_[std::size_t(i + h)] = double(i);
    }
}

void SincTapGenerator::taps(double frac, std::span<double> out) const {
    const int n = kernel_.window_length;
    const int h = kernel_.half_width();
    if (static_cast<int>(out.size()) != n)
        throw ParameterError("sinc_taps: tap buffer length differs from the kernel length");
    if (frac == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        out[std::size_t(h)] = 1.0;
        return;
    }
    constexpr double pi = std::numbers::pi;
    // sin(π(i - f)) = -(-1)^i sin(πf); cos(2π(i - f)/N) by angle subtraction.
    // sin(πf) = sin(π(1 - f)); 1 - f is exact for f >= 0.5.
    const double s = std::sin(pi * (frac > 0.5 ? 1.0 - frac : frac)) / pi;
    const double cf = std::cos(2.0 * pi * frac / n), sf = std::sin(2.0 * pi * frac / n);
    const double* c = cos_.data();
    const double* sn = sin_.data();
    const double* sg = sign_.data();
    const double* off = offset_.data();
    double* o = out.data();
    for (int k = 0; k < n; ++k)
        o[k] = sg[k] * s / (off[k] - frac) * (0.5 + 0.5 * (c[k] * cf + sn[k] * sf));
    // Taps with |i - f| >= N/2 fall outside the window.
    if (h + frac >= 0.5 * n)
        o[0] = 0.0;
}

void sinc_taps(double frac, const SincKernel& kernel, std::span<double> taps) {
    SincTapGenerator(kernel).taps(frac, taps);
}

double interpolate_at(std::span<const double> window, double frac, const SincKernel& kernel) {
    kernel.validate();
    const auto n = std::size_t(kernel.window_length);
    if (window.size() < n)
        throw UnderrunError("interpolate_at: window shorter than the kernel", n - window.size());
    if (!(frac >= 0.0 && frac < 1.0))
        throw ParameterError("interpolate_at: frac must lie in [0, 1)");
    const int h = kernel.half_width();
    if (frac == 0.0)
        return window[std::size_t(h)];
    std::vector<double> taps(n);
    sinc_taps(frac, kernel, taps);
    double y = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        y += window[i] * taps[i];
    return y;
}

namespace {

// Position kept as integer base + fraction in [0, 1) so rounding does not grow
// with the stream length.
struct Position {
    std::int64_t base;
    double frac;

    void advance(double inc) {
        frac += inc;
        const double whole = std::floor(frac);
        base += std::int64_t(whole);
        frac -= whole;
    }
};

double dot_kernel(const Eigen::Ref<const Eigen::VectorXd>& x, std::int64_t centre, double frac,
                  int h, std::span<double> taps) {
    const std::int64_t len = x.size();
    if (frac == 0.0)
        return (centre >= 0 && centre < len) ? x(centre) : 0.0;
    double y = 0.0;
    const std::int64_t lo = centre - h;
    if (lo >= 0 && centre + h < len) {
        const double* p = x.data() + lo;
        for (int i = 0; i <= 2 * h; ++i)
            y += p[i] * taps[std::size_t(i)];
    } else {
        for (int i = -h; i <= h; ++i) {
            const std::int64_t k = centre + i;
            if (k >= 0 && k < len)
                y += x(k) * taps[std::size_t(i + h)];
        }
    }
    return y;
}

} // namespace

// ---------------------------------------------------------------------------
// Streaming resampler

StreamResampler::StreamResampler(SincKernel kernel, int extra_delay)
    : kernel_(kernel), generator_(kernel), extra_delay_(extra_delay) {
    if (extra_delay_ < 0)
        throw ParameterError("StreamResampler: extra delay must be >= 0");
    taps_.resize(std::size_t(kernel_.window_length));
    reset();
}

void StreamResampler::reset() {
    fifo_.clear();
    fifo_start_ = 0;
    pushed_ = 0;
    produced_ = 0;
    base_ = -std::int64_t(kernel_.half_width()) - extra_delay_;
    frac_ = 0.0;
}

void StreamResampler::push(std::span<const double> input) {
    fifo_.insert(fifo_.end(), input.begin(), input.end());
    pushed_ += std::int64_t(input.size());
}

double StreamResampler::sample(std::int64_t index) const {
    if (index < 0)
        return 0.0;
    return fifo_[std::size_t(index - fifo_start_)];
}

Eigen::VectorXd StreamResampler::produce(double eps_hat, int n_out) {
    if (!std::isfinite(eps_hat) || std::abs(eps_hat) >= 0.01)
        throw ParameterError("StreamResampler::produce: |eps_hat| must be finite and below 0.01");
    if (n_out < 0)
        throw ParameterError("StreamResampler::produce: negative output count");

    const int h = kernel_.half_width();
    const double inc = 1.0 / (1.0 + eps_hat);

    Position pos{base_, frac_};
    std::int64_t need = pos.base + h;
    for (int n = 0; n < n_out; ++n) {
        need = pos.base + h;
        pos.advance(inc);
    }
    if (n_out > 0 && need >= pushed_)
        throw UnderrunError("StreamResampler::produce: input underrun", std::size_t(need - pushed_ + 1));

    Eigen::VectorXd out(n_out);
    pos = {base_, frac_};
    for (int n = 0; n < n_out; ++n) {
        double y = 0.0;
        if (pos.frac == 0.0) {
            y = sample(pos.base);
        } else {
            generator_.taps(pos.frac, taps_);
            for (int i = -h; i <= h; ++i)
                y += sample(pos.base + i) * taps_[std::size_t(i + h)];
        }
        out(n) = y;
        pos.advance(inc);
    }
    base_ = pos.base;
    frac_ = pos.frac;
    produced_ += n_out;

    // Drop input no longer reachable by the kernel.
    const std::int64_t keep_from = base_ - h;
    const std::int64_t dead = keep_from - fifo_start_;
    if (dead > 8192) {
        fifo_.erase(fifo_.begin(), fifo_.begin() + dead);
        fifo_start_ = keep_from;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Offline

Eigen::VectorXd impose_sro(const Eigen::Ref<const Eigen::VectorXd>& signal, const SroProfile& profile,
                           double sample_rate, const SincKernel& kernel) {
    kernel.validate();
    if (!(sample_rate > 0.0))
        throw ParameterError("impose_sro: sample rate must be positive");
    const std::int64_t len = signal.size();
    if (len == 0)
        return {};
    const int h = kernel.half_width();
    const SincTapGenerator gen(kernel);
    std::vector<double> taps(std::size_t(kernel.window_length));
    std::vector<double> out;
    out.reserve(std::size_t(len));

    Position pos{0, 0.0};
    double last_frac = -1.0;
    for (std::int64_t n = 0;; ++n) {
        if (n > 0)
            pos.advance(1.0 + profile.at(double(n) / sample_rate));
        if (pos.base > len - 1)
            break;
        if (pos.frac != last_frac && pos.frac != 0.0) {
            gen.taps(pos.frac, taps);
            last_frac = pos.frac;
        }
        out.push_back(dot_kernel(signal, pos.base - h, pos.frac, h, taps));
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(), Eigen::Index(out.size()));
}

Eigen::VectorXd compensate_sro(const Eigen::Ref<const Eigen::VectorXd>& signal, double eps_hat,
                               const SincKernel& kernel) {
    kernel.validate();
    if (!std::isfinite(eps_hat) || std::abs(eps_hat) >= 0.01)
        throw ParameterError("compensate_sro: |eps_hat| must be finite and below 0.01");
    const int h = kernel.half_width();
    const double inc = 1.0 / (1.0 + eps_hat);
    const SincTapGenerator gen(kernel);
    std::vector<double> taps(std::size_t(kernel.window_length));
    Eigen::VectorXd out(signal.size());
    Position pos{0, 0.0};
    for (Eigen::Index n = 0; n < signal.size(); ++n) {
        if (pos.frac != 0.0)
            gen.taps(pos.frac, taps);
        out(n) = dot_kernel(signal, pos.base, pos.frac, h, taps);
        pos.advance(inc);
    }
    return out;
}

} // namespace sroloop
