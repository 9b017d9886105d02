#pragma once

#include <string>

#include <Eigen/Dense>

namespace sroloop {

enum class WavFormat { Pcm16, Float32 };

struct WavData {
    Eigen::VectorXd samples;  // mono, nominal range [-1, 1]
    double sample_rate = 16000.0;
};

/// Reads a mono WAV (16-bit PCM or 32-bit float); multichannel files keep
/// only the first channel. Throws std::runtime_error on I/O or format errors.
WavData read_wav(const std::string& path);

/// PCM16 output is clipped to [-1, 1].
void write_wav(const std::string& path, const Eigen::Ref<const Eigen::VectorXd>& samples,
               double sample_rate, WavFormat format = WavFormat::Float32);

} // namespace sroloop
