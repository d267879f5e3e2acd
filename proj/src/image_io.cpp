#include "cavlab/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "cavlab/errors.hpp"

namespace cavlab {

namespace {

constexpr uint32_t kTensorMagic = 0x4d495643; // "CVIM"

void put_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace

void save_tensor(const std::string& path, const TensorF& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ArtifactError("cannot open " + path + " for writing");
    put_u32le(os, kTensorMagic);
    put_u32le(os, static_cast<uint32_t>(t.h));
    put_u32le(os, static_cast<uint32_t>(t.w));
    put_u32le(os, static_cast<uint32_t>(t.d));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!os) throw ArtifactError("short write to " + path);
}

TensorF load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ArtifactError("cannot open " + path);
    uint32_t magic = get_u32le(is);
    if (!is || magic != kTensorMagic) throw ArtifactError(path + ": not a tensor file");
    uint32_t h = get_u32le(is);
    uint32_t w = get_u32le(is);
    uint32_t c = get_u32le(is);
    if (!is || h == 0 || w == 0 || c == 0 || static_cast<uint64_t>(h) * w * c > (1u << 30))
        throw ArtifactError(path + ": bad tensor header");
    TensorF t(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!is) throw ArtifactError(path + ": truncated tensor data");
    return t;
}

namespace {

void png_chunk(std::ostream& os, const char type[4], const std::vector<unsigned char>& payload) {
    uint32_t n = static_cast<uint32_t>(payload.size());
    unsigned char len[4] = {static_cast<unsigned char>((n >> 24) & 0xff),
                            static_cast<unsigned char>((n >> 16) & 0xff),
                            static_cast<unsigned char>((n >> 8) & 0xff),
                            static_cast<unsigned char>(n & 0xff)};
    os.write(reinterpret_cast<const char*>(len), 4);
    os.write(type, 4);
    if (!payload.empty())
        os.write(reinterpret_cast<const char*>(payload.data()),
                 static_cast<std::streamsize>(payload.size()));
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!payload.empty()) crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
    unsigned char cb[4] = {static_cast<unsigned char>((crc >> 24) & 0xff),
                           static_cast<unsigned char>((crc >> 16) & 0xff),
                           static_cast<unsigned char>((crc >> 8) & 0xff),
                           static_cast<unsigned char>(crc & 0xff)};
    os.write(reinterpret_cast<const char*>(cb), 4);
}

} // namespace

void write_png(const std::string& path, const TensorF& img) {
    if (img.d != 3) throw ArtifactError("png export expects 3 channels, got " + std::to_string(img.d));
    const int h = img.h;
    const int w = img.w;

    std::vector<unsigned char> raw(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * 3));
    size_t p = 0;
    for (int y = 0; y < h; ++y) {
        raw[p++] = 0; // filter type none
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(img.at(y, x, c), 0.0f, 1.0f);
                raw[p++] = static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> zdata(bound);
    if (compress2(zdata.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw ArtifactError("zlib compression failed for " + path);
    zdata.resize(bound);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw ArtifactError("cannot open " + path + " for writing");
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    os.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<unsigned char> ihdr(13);
    auto be32 = [](std::vector<unsigned char>& v, size_t at, uint32_t x) {
        v[at] = static_cast<unsigned char>((x >> 24) & 0xff);
        v[at + 1] = static_cast<unsigned char>((x >> 16) & 0xff);
        v[at + 2] = static_cast<unsigned char>((x >> 8) & 0xff);
        v[at + 3] = static_cast<unsigned char>(x & 0xff);
    };
    be32(ihdr, 0, static_cast<uint32_t>(w));
    be32(ihdr, 4, static_cast<uint32_t>(h));
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 2;  // colour type RGB
    ihdr[10] = 0; // compression
    ihdr[11] = 0; // filter
    ihdr[12] = 0; // interlace
    png_chunk(os, "IHDR", ihdr);
    png_chunk(os, "IDAT", zdata);
    png_chunk(os, "IEND", {});
    if (!os) throw ArtifactError("short write to " + path);
}

} // namespace cavlab
