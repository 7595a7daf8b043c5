#include "vlogdesk/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "vlogdesk/errors.hpp"

namespace vlogdesk {

uint8_t quantize8(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<uint8_t>(std::lround(v * 255.0));
}

namespace {

void put_u32be(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

uint32_t get_u32be(const unsigned char* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

void write_chunk(std::vector<unsigned char>& out, const char type[4],
                 const std::vector<unsigned char>& data) {
    put_u32be(out, static_cast<uint32_t>(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uint32_t crc =
        crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32be(out, crc);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void save_png(const std::string& path, const Image& img) {
    if (img.c != 1 && img.c != 3 && img.c != 4)
        fail_data("save_png: unsupported channel count " + std::to_string(img.c));
    const int color_type = img.c == 1 ? 0 : (img.c == 3 ? 2 : 6);
    const size_t stride = static_cast<size_t>(img.w) * img.c;
    std::vector<unsigned char> raw((stride + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        unsigned char* row = raw.data() + y * (stride + 1);
        row[0] = 0;  // filter: none
        for (size_t i = 0; i < stride; ++i)
            row[1 + i] = quantize8(img.px[static_cast<size_t>(y) * stride + i]);
    }

    uLongf comp_bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_bound);
    if (compress2(comp.data(), &comp_bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        fail_data("save_png: deflate failed for " + path);
    comp.resize(comp_bound);

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<unsigned char> ihdr;
    put_u32be(ihdr, static_cast<uint32_t>(img.w));
    put_u32be(ihdr, static_cast<uint32_t>(img.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(static_cast<unsigned char>(color_type));
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    write_chunk(out, "IHDR", ihdr);
    write_chunk(out, "IDAT", comp);
    write_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail_data("save_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) fail_data("save_png: write failed for " + path);
}

Image load_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("load_png: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        fail_data("load_png: '" + path + "' is not a PNG (bad signature)");

    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    std::vector<unsigned char> idat;
    size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = get_u32be(bytes.data() + pos);
        if (pos + 12 + len > bytes.size())
            fail_data("load_png: truncated chunk at byte " + std::to_string(pos) + " in " + path);
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const unsigned char* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = static_cast<int>(get_u32be(data));
            h = static_cast<int>(get_u32be(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) fail_data("load_png: interlaced PNG unsupported: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0) fail_data("load_png: missing IHDR in " + path);
    if (bit_depth != 8) fail_data("load_png: only 8-bit depth supported: " + path);
    int c;
    switch (color_type) {
        case 0: c = 1; break;
        case 2: c = 3; break;
        case 6: c = 4; break;
        default: fail_data("load_png: unsupported color type " + std::to_string(color_type));
    }

    const size_t stride = static_cast<size_t>(w) * c;
    std::vector<unsigned char> raw((stride + 1) * h);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        fail_data("load_png: inflate failed for " + path);

    // Undo per-row filters.
    std::vector<unsigned char> prev(stride, 0);
    Image img(h, w, c);
    for (int y = 0; y < h; ++y) {
        unsigned char* row = raw.data() + y * (stride + 1);
        const int filter = row[0];
        unsigned char* cur = row + 1;
        for (size_t i = 0; i < stride; ++i) {
            const int left = i >= static_cast<size_t>(c) ? cur[i - c] : 0;
            const int up = prev[i];
            const int ul = i >= static_cast<size_t>(c) ? prev[i - c] : 0;
            int v = cur[i];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += up; break;
                case 3: v += (left + up) / 2; break;
                case 4: v += paeth(left, up, ul); break;
                default: fail_data("load_png: bad filter " + std::to_string(filter));
            }
            cur[i] = static_cast<unsigned char>(v & 0xff);
        }
        for (size_t i = 0; i < stride; ++i)
            img.px[static_cast<size_t>(y) * stride + i] = cur[i] / 255.0;
        std::memcpy(prev.data(), cur, stride);
    }
    return img;
}

void save_image_raw(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail_data("save_image_raw: cannot open " + path);
    const char magic[8] = {'V', 'D', 'R', 'A', 'W', 'I', 'M', 'G'};
    f.write(magic, 8);
    const uint32_t dims[3] = {static_cast<uint32_t>(img.h), static_cast<uint32_t>(img.w),
                              static_cast<uint32_t>(img.c)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write(reinterpret_cast<const char*>(img.px.data()),
            static_cast<std::streamsize>(img.px.size() * sizeof(double)));
    if (!f) fail_data("save_image_raw: write failed for " + path);
}

Image load_image_raw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("load_image_raw: cannot open " + path);
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, "VDRAWIMG", 8) != 0)
        fail_data("load_image_raw: bad magic in " + path);
    uint32_t dims[3];
    if (!f.read(reinterpret_cast<char*>(dims), sizeof(dims)))
        fail_data("load_image_raw: truncated header in " + path);
    Image img(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]));
    if (!f.read(reinterpret_cast<char*>(img.px.data()),
                static_cast<std::streamsize>(img.px.size() * sizeof(double))))
        fail_data("load_image_raw: truncated data in " + path);
    return img;
}

}  // namespace vlogdesk
