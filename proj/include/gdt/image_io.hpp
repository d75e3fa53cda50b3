#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gdt/errors.hpp"
#include "gdt/tensor.hpp"

namespace gdt {

// Interleaved 8-bit image, row-major, c channels per pixel.
struct ImageU8 {
    int w = 0;
    int h = 0;
    int c = 0;
    std::vector<uint8_t> px;

    uint8_t& at(int x, int y, int ch) {
        return px[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    uint8_t at(int x, int y, int ch) const {
        return px[(static_cast<size_t>(y) * w + x) * c + ch];
    }
};

void write_ppm(const std::string& path, const ImageU8& img);  // c must be 3
ImageU8 read_ppm(const std::string& path);

// 8-bit non-interlaced RGB; reader also accepts RGBA and grayscale and
// returns 3 channels.
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

// Loads by extension (.ppm / .png).
ImageU8 read_image(const std::string& path);

// Pixel mapping between byte images and model tensors in [-1, 1]. Chosen so
// that u8 -> float -> u8 is exact.
inline float u8_to_unit(uint8_t v) { return static_cast<float>(v) / 255.0f * 2.0f - 1.0f; }

inline uint8_t unit_to_u8(float x) {
    float c = x < -1.0f ? -1.0f : (x > 1.0f ? 1.0f : x);
    return static_cast<uint8_t>(std::lround((c + 1.0f) * 0.5f * 255.0f));
}

// Planar [3,H,W] tensor in [-1,1] <-> interleaved byte image.
inline ImageU8 unit_tensor_to_image(const Tensor<float>& t) {
    if (t.rank() != 3 || t.dim(0) != 3)
        throw ShapeError("expected a [3,H,W] tensor, got " + shape_str(t.shape()));
    ImageU8 img;
    img.c = 3;
    img.h = t.dim(1);
    img.w = t.dim(2);
    img.px.resize(static_cast<size_t>(img.w) * img.h * 3);
    const size_t plane = static_cast<size_t>(img.w) * img.h;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                img.at(x, y, ch) = unit_to_u8(
                    t.data()[static_cast<size_t>(ch) * plane + static_cast<size_t>(y) * img.w + x]);
    return img;
}

inline Tensor<float> image_to_unit_tensor(const ImageU8& img) {
    if (img.c != 3) throw ShapeError("expected a 3-channel image");
    auto t = Tensor<float>::zeros({3, img.h, img.w});
    const size_t plane = static_cast<size_t>(img.w) * img.h;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                t.data()[static_cast<size_t>(ch) * plane + static_cast<size_t>(y) * img.w + x] =
                    u8_to_unit(img.at(x, y, ch));
    return t;
}

}  // namespace gdt
