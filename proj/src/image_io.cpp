#include "gdt/image_io.hpp"

#include <zlib.h>

#include <cctype>
#include <cstdlib>
#include <cstring>
#include <fstream>

namespace gdt {

namespace {

void check_dims(const ImageU8& img, int want_c, const char* what) {
    if (img.w <= 0 || img.h <= 0)
        throw ContractError(std::string(what) + ": empty image");
    if (want_c && img.c != want_c)
        throw ContractError(std::string(what) + ": need " + std::to_string(want_c) +
                            " channels, image has " + std::to_string(img.c));
    if (img.px.size() != static_cast<size_t>(img.w) * img.h * img.c)
        throw ContractError(std::string(what) + ": pixel buffer size mismatch");
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open '" + path + "'");
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f),
                                std::istreambuf_iterator<char>());
}

// --- PPM ---

// next whitespace-delimited token, '#' comments run to end of line
std::string ppm_token(const std::vector<uint8_t>& buf, size_t& pos) {
    while (pos < buf.size()) {
        if (buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else if (std::isspace(buf[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    size_t start = pos;
    while (pos < buf.size() && !std::isspace(buf[pos])) ++pos;
    if (start == pos) throw LoadError("truncated ppm header");
    return std::string(buf.begin() + start, buf.begin() + pos);
}

// --- PNG ---

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& data) {
    put_be32(out, static_cast<uint32_t>(data.size()));
    size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(0, out.data() + type_at, static_cast<uInt>(4 + data.size()));
    put_be32(out, crc);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_ppm(const std::string& path, const ImageU8& img) {
    check_dims(img, 3, "write_ppm");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ContractError("cannot write '" + path + "'");
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.px.data()),
            static_cast<std::streamsize>(img.px.size()));
}

ImageU8 read_ppm(const std::string& path) {
    auto buf = read_file(path);
    size_t pos = 0;
    if (ppm_token(buf, pos) != "P6") throw LoadError("'" + path + "': not a P6 ppm");
    ImageU8 img;
    img.w = std::stoi(ppm_token(buf, pos));
    img.h = std::stoi(ppm_token(buf, pos));
    int maxval = std::stoi(ppm_token(buf, pos));
    if (maxval != 255) throw LoadError("'" + path + "': only maxval 255 supported");
    ++pos;  // single whitespace after maxval
    img.c = 3;
    size_t need = static_cast<size_t>(img.w) * img.h * 3;
    if (buf.size() - pos < need) throw LoadError("'" + path + "': truncated pixel data");
    img.px.assign(buf.begin() + pos, buf.begin() + pos + need);
    return img;
}

void write_png(const std::string& path, const ImageU8& img) {
    check_dims(img, 0, "write_png");
    uint8_t colortype;
    if (img.c == 1)
        colortype = 0;
    else if (img.c == 3)
        colortype = 2;
    else if (img.c == 4)
        colortype = 6;
    else
        throw ContractError("write_png: unsupported channel count " + std::to_string(img.c));

    // filter byte 0 per scanline, then one zlib stream
    const size_t stride = static_cast<size_t>(img.w) * img.c;
    std::vector<uint8_t> raw((stride + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        raw[y * (stride + 1)] = 0;
        std::memcpy(raw.data() + y * (stride + 1) + 1, img.px.data() + y * stride, stride);
    }
    uLongf zcap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> zbuf(zcap);
    if (compress2(zbuf.data(), &zcap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw ContractError("write_png: deflate failed");
    zbuf.resize(zcap);

    std::vector<uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.w));
    put_be32(ihdr, static_cast<uint32_t>(img.h));
    ihdr.push_back(8);
    ihdr.push_back(colortype);
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", zbuf);
    put_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw ContractError("cannot write '" + path + "'");
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
}

ImageU8 read_png(const std::string& path) {
    auto buf = read_file(path);
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
        throw LoadError("'" + path + "': not a png");

    int w = 0, h = 0, channels = 0;
    std::vector<uint8_t> zdata;
    size_t pos = 8;
    bool saw_end = false;
    while (pos + 8 <= buf.size()) {
        uint32_t len = get_be32(buf.data() + pos);
        if (pos + 12 + len > buf.size()) throw LoadError("'" + path + "': truncated chunk");
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const uint8_t* data = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw LoadError("'" + path + "': bad IHDR");
            w = static_cast<int>(get_be32(data));
            h = static_cast<int>(get_be32(data + 4));
            int depth = data[8], color = data[9], interlace = data[12];
            if (depth != 8) throw LoadError("'" + path + "': only 8-bit png supported");
            if (interlace != 0) throw LoadError("'" + path + "': interlaced png unsupported");
            if (color == 0)
                channels = 1;
            else if (color == 2)
                channels = 3;
            else if (color == 6)
                channels = 4;
            else
                throw LoadError("'" + path + "': unsupported color type " + std::to_string(color));
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            zdata.insert(zdata.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_end = true;
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0 || channels == 0 || !saw_end)
        throw LoadError("'" + path + "': malformed png");

    const size_t stride = static_cast<size_t>(w) * channels;
    std::vector<uint8_t> raw((stride + 1) * h);
    uLongf rawlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rawlen, zdata.data(), static_cast<uLong>(zdata.size())) != Z_OK ||
        rawlen != raw.size())
        throw LoadError("'" + path + "': inflate failed");

    // undo per-scanline filters in place
    std::vector<uint8_t> prev(stride, 0);
    std::vector<uint8_t> cur(stride);
    ImageU8 img;
    img.w = w;
    img.h = h;
    img.c = 3;
    img.px.resize(static_cast<size_t>(w) * h * 3);
    const int bpp = channels;
    for (int y = 0; y < h; ++y) {
        const uint8_t* row = raw.data() + y * (stride + 1);
        uint8_t filter = row[0];
        const uint8_t* src = row + 1;
        for (size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
            int b = prev[i];
            int c = i >= static_cast<size_t>(bpp) ? prev[i - bpp] : 0;
            int x = src[i];
            int v;
            switch (filter) {
                case 0: v = x; break;
                case 1: v = x + a; break;
                case 2: v = x + b; break;
                case 3: v = x + (a + b) / 2; break;
                case 4: v = x + paeth(a, b, c); break;
                default: throw LoadError("'" + path + "': bad filter byte");
            }
            cur[i] = static_cast<uint8_t>(v & 0xff);
        }
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                img.px[(static_cast<size_t>(y) * w + x) * 3 + ch] =
                    channels == 1 ? cur[x] : cur[static_cast<size_t>(x) * channels + ch];
        std::swap(prev, cur);
    }
    return img;
}

ImageU8 read_image(const std::string& path) {
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".ppm") return read_ppm(path);
    if (ext == ".png") return read_png(path);
    throw LoadError("'" + path + "': unsupported image extension '" + ext + "'");
}

}  // namespace gdt
