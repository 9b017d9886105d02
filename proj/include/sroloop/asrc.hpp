#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sroloop/errors.hpp"

namespace sroloop {

}
#include "sroloop/profile.hpp"
namespace sroloop {

/// Hann-windowed sinc kernel of odd length N_w.
struct SincKernel {
    int window_length = 17;

    int half_width() const noexcept { return (window_length - 1) / 2; }
    void validate() const;
};

/// Precomputed window tables for fast tap evaluation at arbitrary fractions.
class SincTapGenerator {
public:
    explicit SincTapGenerator(SincKernel kernel);

    /// Fills out(i + h) = sinc(i - frac)·hann(i - frac), i = -h..h.
    void taps(double frac, std::span<double> out) const;
    const SincKernel& kernel() const noexcept { return kernel_; }

private:
    SincKernel kernel_;
    std::vector<double> cos_, sin_, sign_, offset_;
};

/// Fills taps(i + h) = sinc(i - frac)·hann(i - frac), i = -h..h.
void sinc_taps(double frac, const SincKernel& kernel, std::span<double> taps);

/**
 * Interpolates the sample at window centre + frac. The window holds N_w
 * samples centred on floor(p); frac in [0, 1). frac = 0 returns the centre
 * sample exactly.
 */
double interpolate_at(std::span<const double> window, double frac, const SincKernel& kernel);

/**
 * Streaming fractional-rate resampler. Input arrives in arbitrary chunks via
 * push(); produce() emits samples at read positions advancing by 1/(1 + ε̂).
 * The read position starts at -(half_width + extra_delay), so with ε̂ = 0 the
 * output is the input delayed by half_width + extra_delay samples and every
 * output needs only input that has already arrived. Samples before index 0
 * read as zero.
 */
class StreamResampler {
public:
    explicit StreamResampler(SincKernel kernel = {}, int extra_delay = 0);

    void push(std::span<const double> input);
    /// Throws UnderrunError (state untouched) if the buffered input is short.
    Eigen::VectorXd produce(double eps_hat, int n_out);
    void reset();

    const SincKernel& kernel() const noexcept { return kernel_; }
    /// Current read position in absolute input samples.
    double read_position() const noexcept { return double(base_) + frac_; }
    std::int64_t input_count() const noexcept { return pushed_; }
    std::int64_t output_count() const noexcept { return produced_; }

private:
    double sample(std::int64_t index) const;

    SincKernel kernel_;
    SincTapGenerator generator_;
    int extra_delay_;
    std::vector<double> fifo_;
    std::int64_t fifo_start_ = 0;  // absolute index of fifo_[0]
    std::int64_t pushed_ = 0;
    std::int64_t produced_ = 0;
    std::int64_t base_ = 0;
    double frac_ = 0.0;
    std::vector<double> taps_;
};

/**
 * Imposes a time-varying SRO on a signal: output(n) is the input interpolated
 * at P(n) - half_width with P(0) = 0 and P(n) = P(n-1) + 1 + ε(n/fs). The
 * output stops where the kernel would run past the end of the input.
 */
Eigen::VectorXd impose_sro(const Eigen::Ref<const Eigen::VectorXd>& signal, const SroProfile& profile,
                           double sample_rate, const SincKernel& kernel = {513});

/// Offline compensation of a constant SRO with a streaming resampler pass;
/// output has the input length, zero-padded where input runs out.
Eigen::VectorXd compensate_sro(const Eigen::Ref<const Eigen::VectorXd>& signal, double eps_hat,
                               const SincKernel& kernel = {17});

} // namespace sroloop
