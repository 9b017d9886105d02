#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sroloop/errors.hpp"

namespace sroloop {

/// Periodic Hann window of length n.
Eigen::VectorXd periodic_hann(Eigen::Index n);

struct StftConfig {
    int fft_size = 8192;
    int frame_shift = 2048;
    double sample_rate = 16000.0;
    Eigen::VectorXd window = periodic_hann(8192);

    double frame_period() const { return frame_shift / sample_rate; }
    void validate() const;
};

struct DxcpConfig {
    double alpha1 = 0.5;
    double alpha2 = 0.99;
    int buffer_frames = 39;  // L_b
    int settle_frames = 19;  // L_c
    int max_lag = 40;        // lag search half-width in samples

    /// First frame index (1-based) that yields a valid estimate.
    std::int64_t first_valid_frame() const { return buffer_frames + settle_frames + 1; }
    void validate(const StftConfig& stft) const;
};

struct DxcpEstimate {
    std::int64_t frame_index = 0;
    double sro_hat = 0.0;       // dimensionless, multiply by 1e6 for ppm
    double tau_delta_hat = 0.0; // fractional samples
    bool valid = false;
    double peak_quality = 0.0;
    double imag_residue = 0.0;  // max |Im ψ| relative to the peak magnitude
};

struct PeakEstimate {
    double lag = 0.0;
    double quality = 0.0;
};

struct Correlation {
    Eigen::VectorXd values;     // lags -max_lag..max_lag
    double imag_residue = 0.0;
};

/// Real-input FFT helper owning its plan.
class SpectrumTransform {
public:
    explicit SpectrumTransform(int fft_size);
    ~SpectrumTransform();
    SpectrumTransform(SpectrumTransform&&) noexcept;
    SpectrumTransform& operator=(SpectrumTransform&&) noexcept;

    int size() const noexcept { return n_; }
    /// Bins 0..N/2 of the DFT of a length-N real block.
    Eigen::VectorXcd forward(const Eigen::Ref<const Eigen::VectorXd>& block);
    /// Full N-point inverse DFT (1/N scaled) of a complex spectrum.
    Eigen::VectorXcd inverse(const Eigen::Ref<const Eigen::VectorXcd>& spectrum);

private:
    struct Impl;
    int n_;
    std::unique_ptr<Impl> impl_;
};

/// Windowed N-point spectrum of one analysis block, bins 0..N/2.
Eigen::VectorXcd stft_frame(std::span<const double> block, const StftConfig& config,
                            SpectrumTransform& fft);

/// Φ ← α1·Φ + (1-α1)·Z1·conj(Z2)
void update_primary_csd(Eigen::Ref<Eigen::VectorXcd> phi, const Eigen::Ref<const Eigen::VectorXcd>& z1,
                        const Eigen::Ref<const Eigen::VectorXcd>& z2, double alpha1);

/// Ψ ← α2·Ψ + (1-α2)·Φ(ℓ)·conj(Φ(ℓ-L_b))
void update_secondary_csd(Eigen::Ref<Eigen::VectorXcd> psi, const Eigen::Ref<const Eigen::VectorXcd>& phi_now,
                          const Eigen::Ref<const Eigen::VectorXcd>& phi_past, double alpha2);

/// Inverse transform of a half spectrum (bins 0..N/2) after conjugate-symmetric
/// extension, restricted to lags [-max_lag, max_lag].
Correlation corr_from_secondary(const Eigen::Ref<const Eigen::VectorXcd>& psi, int max_lag,
                                SpectrumTransform& fft);

/**
 * Three-point parabolic refinement of the maximum of a correlation sampled at
 * lags -h..h (h = (size-1)/2). Ties favour the smallest |lag|. At a window edge
 * or for a non-concave neighbourhood the integer lag is returned with
 * quality 0.
 */
PeakEstimate parabolic_peak(const Eigen::Ref<const Eigen::VectorXd>& corr);

/**
 * Frame-synchronous double-cross-correlation SRO estimator.
 *
 * Each call consumes frame_shift new samples per channel, slides the N-sample
 * analysis windows (zero history at start), and updates the primary CSD, the
 * ring of the L_b+1 most recent primary CSDs, and the secondary CSD. The lag
 * of the secondary correlation peak measures the drift accumulated over L_b
 * frames. Frames are numbered from 1.
 */
class DxcpEstimator {
public:
    DxcpEstimator(StftConfig stft = {}, DxcpConfig dxcp = {});

    DxcpEstimate process_frame(std::span<const double> frame1, std::span<const double> frame2);
    void reset();

    const StftConfig& stft_config() const noexcept { return stft_; }
    const DxcpConfig& dxcp_config() const noexcept { return cfg_; }
    std::int64_t frame_index() const noexcept { return frame_; }
    const Eigen::VectorXcd& primary_csd() const noexcept { return phi_; }
    const Eigen::VectorXcd& secondary_csd() const noexcept { return psi_; }
    const Eigen::VectorXd& last_correlation() const noexcept { return corr_; }
    std::size_t ring_size() const noexcept { return ring_count_; }
    /// Primary CSD stored for frame `frame`; must be among the buffered ones.
    const Eigen::VectorXcd& buffered_csd(std::int64_t frame) const;

private:
    StftConfig stft_;
    DxcpConfig cfg_;
    SpectrumTransform fft_;
    std::int64_t frame_ = 0;
    Eigen::VectorXd window1_, window2_;
    Eigen::VectorXcd phi_, psi_;
    std::vector<Eigen::VectorXcd> ring_;
    std::size_t ring_count_ = 0;
    Eigen::VectorXd corr_;
};

} // namespace sroloop
