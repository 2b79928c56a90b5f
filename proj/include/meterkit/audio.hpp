#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace meterkit {

struct AudioBuffer {
    double sample_rate = 0.0;
    std::vector<double> samples;  // mono, [-1, 1] nominal
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint16_t read_u16le(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

}  // namespace detail

/// Reads a RIFF WAV file (16-bit PCM or 32-bit float, little-endian).
/// Multi-channel input is averaged to mono.
inline AudioBuffer read_wav_mono(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_wav_mono: cannot open " + path);
    std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (data.size() < 44 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
        std::memcmp(data.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("read_wav_mono: not a RIFF/WAVE file: " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t data_off = 0, data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= data.size()) {
        const std::uint32_t chunk_len = detail::read_u32le(data.data() + pos + 4);
        if (std::memcmp(data.data() + pos, "fmt ", 4) == 0 && chunk_len >= 16) {
            format = detail::read_u16le(data.data() + pos + 8);
            channels = detail::read_u16le(data.data() + pos + 10);
            rate = detail::read_u32le(data.data() + pos + 12);
            bits = detail::read_u16le(data.data() + pos + 22);
        } else if (std::memcmp(data.data() + pos, "data", 4) == 0) {
            data_off = pos + 8;
            data_len = std::min<std::size_t>(chunk_len, data.size() - data_off);
        }
        pos += 8 + chunk_len + (chunk_len & 1);
    }
    if (channels == 0 || rate == 0 || data_off == 0)
        throw std::runtime_error("read_wav_mono: missing fmt or data chunk: " + path);

    AudioBuffer buf;
    buf.sample_rate = static_cast<double>(rate);
    if (format == 1 && bits == 16) {
        const std::size_t n = data_len / 2 / channels;
        buf.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::uint16_t c = 0; c < channels; ++c) {
                const auto* p = data.data() + data_off + 2 * (i * channels + c);
                const auto v = static_cast<std::int16_t>(detail::read_u16le(p));
                acc += static_cast<double>(v) / 32768.0;
            }
            buf.samples[i] = acc / channels;
        }
    } else if (format == 3 && bits == 32) {
        const std::size_t n = data_len / 4 / channels;
        buf.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::uint16_t c = 0; c < channels; ++c) {
                const std::uint32_t raw =
                    detail::read_u32le(data.data() + data_off + 4 * (i * channels + c));
                acc += static_cast<double>(std::bit_cast<float>(raw));
            }
            buf.samples[i] = acc / channels;
        }
    } else {
        throw std::runtime_error("read_wav_mono: unsupported format (need 16-bit PCM or "
                                 "32-bit float): " + path);
    }
    return buf;
}

/// Writes a mono 16-bit PCM WAV (testing and synth output support).
inline void write_wav_mono(const std::string& path, const AudioBuffer& buf) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_wav_mono: cannot open " + path);
    const auto put_u32 = [&](std::uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    const auto put_u16 = [&](std::uint16_t v) {
        const unsigned char b[2] = {static_cast<unsigned char>(v),
                                    static_cast<unsigned char>(v >> 8)};
        out.write(reinterpret_cast<const char*>(b), 2);
    };
    const auto n = static_cast<std::uint32_t>(buf.samples.size());
    out.write("RIFF", 4);
    put_u32(36 + 2 * n);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);
    put_u16(1);
    put_u32(static_cast<std::uint32_t>(buf.sample_rate));
    put_u32(static_cast<std::uint32_t>(buf.sample_rate) * 2);
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(2 * n);
    for (double s : buf.samples) {
        const double clipped = std::max(-1.0, std::min(1.0, s));
        const auto q = static_cast<std::int16_t>(std::llround(clipped * 32767.0));
        put_u16(static_cast<std::uint16_t>(q));
    }
}

}  // namespace meterkit
