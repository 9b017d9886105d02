#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "sroloop/asrc.hpp"
#include "sroloop/profile.hpp"

namespace sroloop {

/// FIR tap at a given delay in samples.
struct EchoTap {
    int delay;
    double gain;
};

struct ScenarioConfig {
    enum class Source { WhiteNoise, WavFile };

    Source source = Source::WhiteNoise;
    std::string wav_path;
    double duration_s = 180.0;
    double sample_rate = 16000.0;
    /// Channel-2 impulse response: direct path plus echoes at 12.5 ms and 25 ms.
    std::vector<EchoTap> channel2_fir{{0, 1.0}, {200, 0.5}, {400, 0.25}};
    double self_noise_snr_db = 20.0;
    double interferer_snr_db = 15.0;
    SroProfile sro_profile{};
    int sto_samples = 0;
    std::uint64_t seed = 1;
    SincKernel imposition_kernel{513};

    static constexpr double kNoNoise = std::numeric_limits<double>::infinity();

    std::int64_t num_samples() const;
    void validate() const;
};

struct Scenario {
    Eigen::VectorXd z1;
    Eigen::VectorXd z2;
    SroProfile truth;
    double sample_rate = 16000.0;
};

/// Seeded unit-variance white Gaussian noise.
Eigen::VectorXd white_noise(std::int64_t n, std::uint64_t seed);

/// Adds seeded white Gaussian noise scaled so that the full-signal power ratio
/// is exactly snr_db. +inf leaves the signal unchanged.
Eigen::VectorXd add_noise_at_snr(const Eigen::Ref<const Eigen::VectorXd>& signal, double snr_db,
                                 std::uint64_t seed);

/// Signal power ratio in dB of reference over (noisy - reference).
double measure_snr_db(const Eigen::Ref<const Eigen::VectorXd>& reference,
                      const Eigen::Ref<const Eigen::VectorXd>& noisy);

Scenario generate_scenario(const ScenarioConfig& config);

} // namespace sroloop
