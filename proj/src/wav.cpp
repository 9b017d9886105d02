#include "sroloop/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace sroloop {

namespace {

std::uint32_t le32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put16(std::vector<unsigned char>& b, std::uint16_t v) {
    b.push_back(static_cast<unsigned char>(v));
    b.push_back(static_cast<unsigned char>(v >> 8));
}
void put_tag(std::vector<unsigned char>& b, const char* tag) { b.insert(b.end(), tag, tag + 4); }

} // namespace

WavData read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("read_wav: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

    std::uint16_t fmt_tag = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const unsigned char* chunk = buf.data() + pos;
        const std::uint32_t len = le32(chunk + 4);
        const std::size_t body = pos + 8;
        if (body + len > buf.size() && std::memcmp(chunk, "data", 4) != 0)
            throw std::runtime_error("read_wav: truncated chunk in " + path);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (len < 16)
                throw std::runtime_error("read_wav: short fmt chunk in " + path);
            fmt_tag = le16(chunk + 8);
            channels = le16(chunk + 10);
            rate = le32(chunk + 12);
            bits = le16(chunk + 22);
            if (fmt_tag == 0xFFFE && len >= 40)
                fmt_tag = le16(chunk + 32);  // WAVE_FORMAT_EXTENSIBLE subformat
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = buf.data() + body;
            data_len = std::min<std::size_t>(len, buf.size() - body);
        }
        pos = body + len + (len & 1u);
    }
    if (!data || channels == 0)
        throw std::runtime_error("read_wav: missing fmt or data chunk in " + path);

    WavData out;
    out.sample_rate = rate;
    const bool pcm16 = fmt_tag == 1 && bits == 16;
    const bool f32 = fmt_tag == 3 && bits == 32;
    if (!pcm16 && !f32)
        throw std::runtime_error("read_wav: only 16-bit PCM and 32-bit float are supported: " + path);
    const std::size_t frame_bytes = std::size_t(channels) * bits / 8;
    const std::size_t frames = data_len / frame_bytes;
    out.samples.resize(Eigen::Index(frames));
    for (std::size_t i = 0; i < frames; ++i) {
        const unsigned char* p = data + i * frame_bytes;
        if (pcm16) {
            out.samples(Eigen::Index(i)) = std::int16_t(le16(p)) / 32768.0;
        } else {
            const std::uint32_t bitsv = le32(p);
            float f;
            std::memcpy(&f, &bitsv, sizeof f);
            out.samples(Eigen::Index(i)) = f;
        }
    }
    return out;
}

void write_wav(const std::string& path, const Eigen::Ref<const Eigen::VectorXd>& samples,
               double sample_rate, WavFormat format) {
    const bool pcm16 = format == WavFormat::Pcm16;
    const std::uint16_t bits = pcm16 ? 16 : 32;
    const std::uint32_t data_len = std::uint32_t(samples.size()) * (bits / 8);
    const auto rate = std::uint32_t(std::lround(sample_rate));

    std::vector<unsigned char> b;
    b.reserve(44 + data_len);
    put_tag(b, "RIFF");
    put32(b, 36 + data_len);
    put_tag(b, "WAVE");
    put_tag(b, "fmt ");
    put32(b, 16);
    put16(b, pcm16 ? 1 : 3);
    put16(b, 1);
    put32(b, rate);
    put32(b, rate * (bits / 8));
    put16(b, bits / 8);
    put16(b, bits);
    put_tag(b, "data");
    put32(b, data_len);
    for (Eigen::Index i = 0; i < samples.size(); ++i) {
        if (pcm16) {
            const double v = std::clamp(samples(i), -1.0, 1.0);
            const auto q = static_cast<std::int16_t>(std::lround(std::clamp(v * 32768.0, -32768.0, 32767.0)));
            put16(b, static_cast<std::uint16_t>(q));
        } else {
            const float f = static_cast<float>(samples(i));
            std::uint32_t u;
            std::memcpy(&u, &f, sizeof u);
            put32(b, u);
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("write_wav: cannot open " + path);
    out.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
    if (!out)
        throw std::runtime_error("write_wav: write failed for " + path);
}

} // namespace sroloop
