#pragma once

// Netpbm reading (P2/P3/P5/P6) and binary PGM writing.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "crowdqc/core.hpp"

namespace crowdqc {

struct PnmImage {
    int width = 0;
    int height = 0;
    int channels = 1;  // 1 = gray, 3 = RGB
    int maxval = 255;
    std::vector<int> samples;  // row-major, interleaved channels
};

namespace detail {

inline void skip_pnm_space(const std::string& s, std::size_t& pos) {
    for (;;) {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos < s.size() && s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
            continue;
        }
        return;
    }
}

inline int read_pnm_int(const std::string& s, std::size_t& pos) {
    skip_pnm_space(s, pos);
    if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos])))
        throw ParseError("pnm: expected an integer");
    long v = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        v = v * 10 + (s[pos] - '0');
        if (v > 1 << 24) throw ParseError("pnm: value out of range");
        ++pos;
    }
    return static_cast<int>(v);
}

}  // namespace detail

inline PnmImage parse_pnm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError("pnm: bad magic");
    const char kind = bytes[1];
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6') throw ParseError("pnm: unsupported type");
    std::size_t pos = 2;
    PnmImage img;
    img.channels = (kind == '3' || kind == '6') ? 3 : 1;
    img.width = detail::read_pnm_int(bytes, pos);
    img.height = detail::read_pnm_int(bytes, pos);
    img.maxval = detail::read_pnm_int(bytes, pos);
    if (img.width <= 0 || img.height <= 0) throw ParseError("pnm: non-positive size");
    if (img.maxval <= 0 || img.maxval > 65535) throw ParseError("pnm: bad maxval");
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
    img.samples.resize(n);
    if (kind == '2' || kind == '3') {
        for (std::size_t i = 0; i < n; ++i) {
            img.samples[i] = detail::read_pnm_int(bytes, pos);
            if (img.samples[i] > img.maxval) throw ParseError("pnm: sample exceeds maxval");
        }
        return img;
    }
    // Exactly one whitespace byte separates the header from the raster.
    ++pos;
    const std::size_t bps = img.maxval < 256 ? 1 : 2;
    if (bytes.size() < pos + n * bps) throw ParseError("pnm: truncated raster");
    for (std::size_t i = 0; i < n; ++i) {
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + i * bps);
        img.samples[i] = bps == 1 ? p[0] : (p[0] << 8) | p[1];
        if (img.samples[i] > img.maxval) throw ParseError("pnm: sample exceeds maxval");
    }
    return img;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline PnmImage read_pnm(const std::string& path) { return parse_pnm(read_file(path)); }

/// Binary 8-bit PGM (P5, maxval 255).
inline std::string encode_pgm(int width, int height, std::span<const std::uint8_t> pixels) {
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    return out;
}

}  // namespace crowdqc
