#include "sroloop/scenario.hpp"

#include <cmath>
#include <random>

#include "sroloop/wav.hpp"

namespace sroloop {

namespace {

// Independent streams per noise role.
constexpr std::uint64_t kSourceStream = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kSelfNoise1 = 0xBF58476D1CE4E5B9ull;
constexpr std::uint64_t kSelfNoise2 = 0x94D049BB133111EBull;
constexpr std::uint64_t kInterferer = 0xD6E8FEB86659FD93ull;

double power(const Eigen::Ref<const Eigen::VectorXd>& x) {
    return x.size() ? x.squaredNorm() / double(x.size()) : 0.0;
}

Eigen::VectorXd apply_fir(const Eigen::Ref<const Eigen::VectorXd>& x, const std::vector<EchoTap>& taps) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    for (const auto& tap : taps) {
        const Eigen::Index d = tap.delay;
        if (d < x.size())
            y.tail(x.size() - d) += tap.gain * x.head(x.size() - d);
    }
    return y;
}

Eigen::VectorXd shift(const Eigen::Ref<const Eigen::VectorXd>& x, int sto) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    const Eigen::Index n = x.size();
    const Eigen::Index s = std::abs(sto);
    if (s >= n)
        return y;
    if (sto >= 0)
        y.tail(n - s) = x.head(n - s);
    else
        y.head(n - s) = x.tail(n - s);
    return y;
}

} // namespace

std::int64_t ScenarioConfig::num_samples() const {
    return std::int64_t(std::llround(duration_s * sample_rate));
}

void ScenarioConfig::validate() const {
    if (!(duration_s > 0.0) || !std::isfinite(duration_s))
        throw ParameterError("ScenarioConfig: duration must be positive");
    if (!(sample_rate > 0.0))
        throw ParameterError("ScenarioConfig: sample rate must be positive");
    if (channel2_fir.empty())
        throw ParameterError("ScenarioConfig: channel-2 FIR needs at least one tap");
    for (const auto& tap : channel2_fir)
        if (tap.delay < 0 || !std::isfinite(tap.gain))
            throw ParameterError("ScenarioConfig: FIR taps need a non-negative delay and finite gain");
    if (std::isnan(self_noise_snr_db) || std::isnan(interferer_snr_db) || self_noise_snr_db == -INFINITY ||
        interferer_snr_db == -INFINITY)
        throw ParameterError("ScenarioConfig: SNR values must be finite or +inf");
    if (source == Source::WavFile && wav_path.empty())
        throw ParameterError("ScenarioConfig: WAV source needs a path");
    imposition_kernel.validate();
}

Eigen::VectorXd white_noise(std::int64_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXd x(n);
    for (auto& v : x)
        v = dist(rng);
    return x;
}

Eigen::VectorXd add_noise_at_snr(const Eigen::Ref<const Eigen::VectorXd>& signal, double snr_db,
                                 std::uint64_t seed) {
    if (snr_db == ScenarioConfig::kNoNoise)
        return signal;
    if (!std::isfinite(snr_db))
        throw ParameterError("add_noise_at_snr: SNR must be finite or +inf");
    const double ps = power(signal);
    if (!(ps > 0.0))
        throw ParameterError("add_noise_at_snr: signal has zero power");
    Eigen::VectorXd noise = white_noise(signal.size(), seed);
    const double target = ps / std::pow(10.0, snr_db / 10.0);
    noise *= std::sqrt(target / power(noise));
    return signal + noise;
}

double measure_snr_db(const Eigen::Ref<const Eigen::VectorXd>& reference,
                      const Eigen::Ref<const Eigen::VectorXd>& noisy) {
    return 10.0 * std::log10(power(reference) / power(noisy - reference));
}

Scenario generate_scenario(const ScenarioConfig& config) {
    config.validate();
    const std::int64_t n = config.num_samples();
    int max_delay = 0;
    for (const auto& tap : config.channel2_fir)
        max_delay = std::max(max_delay, tap.delay);
    // Imposition reads ahead by n·|ε| + half_width samples.
    const std::int64_t margin = std::int64_t(std::ceil(double(n) * SroProfile::kMaxAbsSro)) +
                                config.imposition_kernel.half_width() + std::abs(config.sto_samples) + 16;
    const std::int64_t src_len = n + margin;

    Eigen::VectorXd source;
    if (config.source == ScenarioConfig::Source::WhiteNoise) {
        source = white_noise(src_len, config.seed ^ kSourceStream);
    } else {
        const WavData wav = read_wav(config.wav_path);
        if (wav.sample_rate != config.sample_rate)
            throw ParameterError("generate_scenario: WAV sample rate differs from the configured rate");
        if (wav.samples.size() < n)
            throw ParameterError("generate_scenario: WAV source is shorter than the requested duration");
        source = Eigen::VectorXd::Zero(src_len);
        const Eigen::Index avail = std::min<Eigen::Index>(wav.samples.size(), src_len);
        source.head(avail) = wav.samples.head(avail);
    }

    Scenario out;
    out.sample_rate = config.sample_rate;
    out.truth = config.sro_profile;

    const Eigen::VectorXd clean1 = source.head(n);
    out.z1 = add_noise_at_snr(clean1, config.self_noise_snr_db, config.seed ^ kSelfNoise1);

    const Eigen::VectorXd channel = shift(apply_fir(source, config.channel2_fir), config.sto_samples);
    Eigen::VectorXd imposed = impose_sro(channel, config.sro_profile, config.sample_rate, config.imposition_kernel);
    if (imposed.size() < n)
        throw ParameterError("generate_scenario: imposed signal shorter than requested");
    const Eigen::VectorXd clean2 = imposed.head(n);

    Eigen::VectorXd z2 = clean2;
    const double ps = power(clean2);
    auto add_scaled = [&](double snr_db, std::uint64_t seed) {
        if (snr_db == ScenarioConfig::kNoNoise)
            return;
        if (!(ps > 0.0))
            throw ParameterError("generate_scenario: channel 2 has zero power");
        Eigen::VectorXd noise = white_noise(n, seed);
        noise *= std::sqrt(ps / std::pow(10.0, snr_db / 10.0) / power(noise));
        z2 += noise;
    };
    add_scaled(config.interferer_snr_db, config.seed ^ kInterferer);
    add_scaled(config.self_noise_snr_db, config.seed ^ kSelfNoise2);
    out.z2 = std::move(z2);
    return out;
}

} // namespace sroloop
