#include "dfq/image.hpp"

#include <algorithm>
#include <cmath>

#include "dfq/errors.hpp"

namespace dfq {

float normalize(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

Tensor normalize(const Image8& image) {
    Tensor t(Shape{image.height, image.width, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = normalize(image.pixels[i]);
    return t;
}

namespace {

struct Tap {
    std::size_t i0, i1;
    double f;  // weight of i1
};

// Half-pixel centre mapping, clamped to the source edge.
std::vector<Tap> taps(std::size_t in, std::size_t out) {
    std::vector<Tap> r(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        const auto i0 = static_cast<std::size_t>(s);
        r[o] = {i0, std::min(i0 + 1, in - 1), s - static_cast<double>(i0)};
    }
    return r;
}

Tensor to_float_255(const Image8& image) {
    Tensor t(Shape{image.height, image.width, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(image.pixels[i]);
    return t;
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
    if (image.shape().rank() != 3) throw ShapeError("resize expects [H, W, C], got " + image.shape().to_string());
    if (out_h == 0 || out_w == 0) throw ShapeError("resize target must be non-empty");
    const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
    if (h == out_h && w == out_w) return image;
    const auto ty = taps(h, out_h);
    const auto tx = taps(w, out_w);
    Tensor out(Shape{out_h, out_w, c});
    for (std::size_t y = 0; y < out_h; ++y) {
        const Tap& a = ty[y];
        for (std::size_t x = 0; x < out_w; ++x) {
            const Tap& b = tx[x];
            for (std::size_t k = 0; k < c; ++k) {
                const double top = image.at(a.i0, b.i0, k) * (1.0 - b.f) + image.at(a.i0, b.i1, k) * b.f;
                const double bot = image.at(a.i1, b.i0, k) * (1.0 - b.f) + image.at(a.i1, b.i1, k) * b.f;
                out.at(y, x, k) = static_cast<float>(top * (1.0 - a.f) + bot * a.f);
            }
        }
    }
    return out;
}

Tensor decode_and_resize(std::span<const std::uint8_t> bytes, std::size_t size) {
    Tensor t = resize_bilinear(to_float_255(decode_image(bytes)), size, size);
    for (float& v : t.values()) v = std::clamp(v, 0.0f, 255.0f) / 255.0f;
    return t;
}

Image8 to_image8(const Tensor& image) {
    if (image.shape().rank() != 3 || image.shape()[2] != 3) {
        throw ShapeError("to_image8 expects [H, W, 3], got " + image.shape().to_string());
    }
    Image8 out;
    out.height = image.shape()[0];
    out.width = image.shape()[1];
    out.pixels.resize(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) {
        const float v = std::clamp(image[i], 0.0f, 1.0f);
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return out;
}

}  // namespace dfq
