#ifndef VLOGDESK_IMAGE_HPP
#define VLOGDESK_IMAGE_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace vlogdesk {

// Interleaved row-major image, values in [0,1].
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), px(static_cast<size_t>(h_) * w_ * c_, fill) {}

    double& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    int64_t size() const { return static_cast<int64_t>(px.size()); }
};

// 8-bit PNG (gray, RGB or RGBA), non-interlaced. Quantization is
// round(v*255) on save and u8/255 on load, so save/load/save is stable.
void save_png(const std::string& path, const Image& img);
Image load_png(const std::string& path);

// Lossless raw container (magic, dims, f64 LE) for training-time exactness.
void save_image_raw(const std::string& path, const Image& img);
Image load_image_raw(const std::string& path);

// u8 <-> double helpers shared by the PNG path and tests.
uint8_t quantize8(double v);

}  // namespace vlogdesk

#endif
