#include "sroloop/dxcp.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace sroloop {

Eigen::VectorXd periodic_hann(Eigen::Index n) {
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i)
        w(i) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n));
    return w;
}

void StftConfig::validate() const {
    if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
        throw ParameterError("StftConfig: fft_size must be a power of two");
    if (frame_shift < 1 || frame_shift > fft_size)
        throw ParameterError("StftConfig: frame_shift must lie in [1, fft_size]");
    if (!(sample_rate > 0.0))
        throw ParameterError("StftConfig: sample_rate must be positive");
    if (window.size() != fft_size)
        throw ParameterError("StftConfig: window length differs from fft_size");
    if ((window.array() < 0.0).any() || (window.array() > 1.0).any() || window.cwiseAbs().maxCoeff() == 0.0)
        throw ParameterError("StftConfig: window values must lie in [0, 1] and not all be zero");
}

void DxcpConfig::validate(const StftConfig& stft) const {
    if (!(alpha1 > 0.0 && alpha1 < 1.0) || !(alpha2 > 0.0 && alpha2 < 1.0))
        throw ParameterError("DxcpConfig: smoothing constants must lie in (0, 1)");
    if (buffer_frames < 1)
        throw ParameterError("DxcpConfig: buffer_frames must be >= 1");
    if (settle_frames < 0)
        throw ParameterError("DxcpConfig: settle_frames must be >= 0");
    if (max_lag < 1 || max_lag >= stft.fft_size / 2)
        throw ParameterError("DxcpConfig: max_lag must lie in [1, N/2)");
}

// ---------------------------------------------------------------------------

struct SpectrumTransform::Impl {
    Eigen::FFT<double> real_fft;
    Eigen::FFT<double> complex_fft;
    std::vector<double> real_in;
    std::vector<std::complex<double>> buf_in, buf_out;
};

SpectrumTransform::SpectrumTransform(int fft_size) : n_(fft_size), impl_(std::make_unique<Impl>()) {
    impl_->real_fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    impl_->real_in.resize(n_);
    impl_->buf_in.resize(n_);
    impl_->buf_out.resize(n_);
}

SpectrumTransform::~SpectrumTransform() = default;
SpectrumTransform::SpectrumTransform(SpectrumTransform&&) noexcept = default;
SpectrumTransform& SpectrumTransform::operator=(SpectrumTransform&&) noexcept = default;

Eigen::VectorXcd SpectrumTransform::forward(const Eigen::Ref<const Eigen::VectorXd>& block) {
    if (block.size() != n_)
        throw ParameterError("SpectrumTransform::forward: block length differs from transform size");
    Eigen::Map<Eigen::VectorXd>(impl_->real_in.data(), n_) = block;
    impl_->real_fft.fwd(impl_->buf_out, impl_->real_in);
    return Eigen::Map<const Eigen::VectorXcd>(impl_->buf_out.data(), n_ / 2 + 1);
}

Eigen::VectorXcd SpectrumTransform::inverse(const Eigen::Ref<const Eigen::VectorXcd>& spectrum) {
    if (spectrum.size() != n_)
        throw ParameterError("SpectrumTransform::inverse: spectrum length differs from transform size");
    Eigen::Map<Eigen::VectorXcd>(impl_->buf_in.data(), n_) = spectrum;
    impl_->complex_fft.inv(impl_->buf_out, impl_->buf_in);
    return Eigen::Map<const Eigen::VectorXcd>(impl_->buf_out.data(), n_);
}

// ---------------------------------------------------------------------------

Eigen::VectorXcd stft_frame(std::span<const double> block, const StftConfig& config,
                            SpectrumTransform& fft) {
    if (static_cast<int>(block.size()) != config.fft_size)
        throw ParameterError("stft_frame: block length must equal fft_size");
    const Eigen::Map<const Eigen::VectorXd> x(block.data(), Eigen::Index(block.size()));
    return fft.forward(x.cwiseProduct(config.window));
}

void update_primary_csd(Eigen::Ref<Eigen::VectorXcd> phi, const Eigen::Ref<const Eigen::VectorXcd>& z1,
                        const Eigen::Ref<const Eigen::VectorXcd>& z2, double alpha1) {
    if (z1.size() != z2.size() || phi.size() != z1.size())
        throw ParameterError("update_primary_csd: bin counts differ");
    phi = alpha1 * phi + (1.0 - alpha1) * z1.cwiseProduct(z2.conjugate());
}

void update_secondary_csd(Eigen::Ref<Eigen::VectorXcd> psi, const Eigen::Ref<const Eigen::VectorXcd>& phi_now,
                          const Eigen::Ref<const Eigen::VectorXcd>& phi_past, double alpha2) {
    if (phi_now.size() != phi_past.size() || psi.size() != phi_now.size())
        throw ParameterError("update_secondary_csd: bin counts differ");
    psi = alpha2 * psi + (1.0 - alpha2) * phi_now.cwiseProduct(phi_past.conjugate());
}

Correlation corr_from_secondary(const Eigen::Ref<const Eigen::VectorXcd>& psi, int max_lag,
                                SpectrumTransform& fft) {
    const int n = fft.size();
    if (psi.size() != n / 2 + 1)
        throw ParameterError("corr_from_secondary: expected N/2+1 bins");
    if (max_lag < 1 || max_lag >= n / 2)
        throw ParameterError("corr_from_secondary: max_lag out of range");

    Eigen::VectorXcd full(n);
    full.head(n / 2 + 1) = psi;
    for (int k = 1; k < n / 2; ++k)
        full(n - k) = std::conj(psi(k));
    const Eigen::VectorXcd x = fft.inverse(full);

    Correlation out;
    const double peak = x.real().cwiseAbs().maxCoeff();
    const double imag = x.imag().cwiseAbs().maxCoeff();
    out.imag_residue = peak > 0.0 ? imag / peak : 0.0;
    out.values.resize(2 * max_lag + 1);
    for (int lag = -max_lag; lag <= max_lag; ++lag)
        out.values(lag + max_lag) = x((lag + n) % n).real();
    return out;
}

PeakEstimate parabolic_peak(const Eigen::Ref<const Eigen::VectorXd>& corr) {
    const Eigen::Index len = corr.size();
    if (len < 3)
        throw ParameterError("parabolic_peak: need at least three lags");
    const Eigen::Index half = (len - 1) / 2;

    Eigen::Index best = half;
    for (Eigen::Index i = 0; i < len; ++i) {
        const double v = corr(i);
        if (v > corr(best) || (v == corr(best) && std::abs(i - half) < std::abs(best - half)))
            best = i;
    }

    PeakEstimate out;
    out.lag = double(best - half);
    if (best == 0 || best == len - 1)
        return out;
    const double left = corr(best - 1), mid = corr(best), right = corr(best + 1);
    const double curvature = left - 2.0 * mid + right;
    if (!(curvature < 0.0))
        return out;
    out.lag += 0.5 * (left - right) / curvature;
    const double mean_abs = corr.cwiseAbs().mean();
    out.quality = mean_abs > 0.0 ? mid / mean_abs : 0.0;
    return out;
}

// ---------------------------------------------------------------------------

DxcpEstimator::DxcpEstimator(StftConfig stft, DxcpConfig dxcp)
    : stft_(std::move(stft)), cfg_(dxcp), fft_(stft_.fft_size) {
    stft_.validate();
    cfg_.validate(stft_);
    reset();
}

void DxcpEstimator::reset() {
    const Eigen::Index bins = stft_.fft_size / 2 + 1;
    frame_ = 0;
    window1_ = Eigen::VectorXd::Zero(stft_.fft_size);
    window2_ = Eigen::VectorXd::Zero(stft_.fft_size);
    phi_ = Eigen::VectorXcd::Zero(bins);
    psi_ = Eigen::VectorXcd::Zero(bins);
    ring_.assign(std::size_t(cfg_.buffer_frames) + 1, Eigen::VectorXcd::Zero(bins));
    ring_count_ = 0;
    corr_ = Eigen::VectorXd::Zero(2 * cfg_.max_lag + 1);
}

const Eigen::VectorXcd& DxcpEstimator::buffered_csd(std::int64_t frame) const {
    if (frame > frame_ || frame <= frame_ - std::int64_t(ring_count_))
        throw ParameterError("DxcpEstimator::buffered_csd: frame not in buffer");
    return ring_[std::size_t(frame % std::int64_t(ring_.size()))];
}

DxcpEstimate DxcpEstimator::process_frame(std::span<const double> frame1, std::span<const double> frame2) {
    const int shift = stft_.frame_shift;
    const int n = stft_.fft_size;
    if (static_cast<int>(frame1.size()) != shift || static_cast<int>(frame2.size()) != shift)
        throw ParameterError("DxcpEstimator::process_frame: each channel needs exactly frame_shift samples");

    ++frame_;
    auto slide = [&](Eigen::VectorXd& w, std::span<const double> fresh) {
        w.head(n - shift) = w.tail(n - shift).eval();
        w.tail(shift) = Eigen::Map<const Eigen::VectorXd>(fresh.data(), shift);
    };
    slide(window1_, frame1);
    slide(window2_, frame2);

    const Eigen::VectorXcd z1 = fft_.forward(window1_.cwiseProduct(stft_.window));
    const Eigen::VectorXcd z2 = fft_.forward(window2_.cwiseProduct(stft_.window));
    update_primary_csd(phi_, z1, z2, cfg_.alpha1);

    const std::int64_t slots = std::int64_t(ring_.size());
    ring_[std::size_t(frame_ % slots)] = phi_;
    ring_count_ = std::min<std::size_t>(ring_count_ + 1, ring_.size());

    DxcpEstimate est;
    est.frame_index = frame_;
    if (frame_ < cfg_.buffer_frames + 1)
        return est;

    update_secondary_csd(psi_, phi_, buffered_csd(frame_ - cfg_.buffer_frames), cfg_.alpha2);
    Correlation corr = corr_from_secondary(psi_, cfg_.max_lag, fft_);
    corr_ = std::move(corr.values);
    const PeakEstimate peak = parabolic_peak(corr_);

    est.tau_delta_hat = peak.lag;
    est.peak_quality = peak.quality;
    est.imag_residue = corr.imag_residue;
    est.valid = frame_ >= cfg_.first_valid_frame();
    if (est.valid)
        est.sro_hat = peak.lag / (double(shift) * cfg_.buffer_frames);
    return est;
}

} // namespace sroloop
