#pragma once
// Minimal RIFF/WAV reader and writer for the corpus audio format:
// linear PCM, 16-bit, mono, sample rate >= 16 kHz.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "trustspeech/errors.hpp"

namespace trustspeech {

struct Waveform {
    std::vector<double> samples;  // amplitudes in [-1, 1]
    double sample_rate = 0.0;     // Hz

    double duration() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

inline Waveform read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open WAV file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw ParseError("not a RIFF/WAVE file: " + path);
    }

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::uint32_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t len = detail::read_u32(bytes.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + len > bytes.size()) throw ParseError("truncated chunk in WAV file: " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw ParseError("fmt chunk too short in WAV file: " + path);
            format = detail::read_u16(bytes.data() + body);
            channels = detail::read_u16(bytes.data() + body + 2);
            rate = detail::read_u32(bytes.data() + body + 4);
            bits = detail::read_u16(bytes.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + body;
            data_len = len;
        }
        pos = body + len + (len & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr) throw ParseError("missing fmt or data chunk: " + path);
    if (format != 1) throw SchemaError("unsupported WAV encoding (want PCM): " + path);
    if (channels != 1) throw SchemaError("unsupported channel count (want mono): " + path);
    if (bits != 16) throw SchemaError("unsupported sample width (want 16-bit): " + path);
    if (rate < 16000) {
        throw SchemaError("sample rate below 16 kHz (" + std::to_string(rate) + "): " + path);
    }

    Waveform w;
    w.sample_rate = static_cast<double>(rate);
    const std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t v =
            static_cast<std::int16_t>(detail::read_u16(data + 2 * i));
        w.samples[i] = static_cast<double>(v) / 32768.0;
    }
    if (w.samples.empty()) throw DataError("WAV file has no samples: " + path);
    return w;
}

inline void write_wav(const std::string& path, const Waveform& w) {
    if (w.samples.empty() || w.sample_rate <= 0.0) {
        throw ArgumentError("write_wav: empty waveform");
    }
    const std::uint32_t rate = static_cast<std::uint32_t>(w.sample_rate);
    const std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * 2);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write WAV file: " + path);

    auto put_u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                              static_cast<unsigned char>((v >> 8) & 0xFF),
                              static_cast<unsigned char>((v >> 16) & 0xFF),
                              static_cast<unsigned char>((v >> 24) & 0xFF)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    auto put_u16 = [&](std::uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                              static_cast<unsigned char>((v >> 8) & 0xFF)};
        out.write(reinterpret_cast<const char*>(b), 2);
    };

    out.write("RIFF", 4);
    put_u32(36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(rate);
    put_u32(rate * 2);
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_len);
    for (double s : w.samples) {
        double clipped = s;
        if (clipped > 1.0) clipped = 1.0;
        if (clipped < -1.0) clipped = -1.0;
        const int v = static_cast<int>(std::lround(clipped * 32767.0));
        put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    }
    if (!out) throw DataError("failed writing WAV file: " + path);
}

}  // namespace trustspeech
