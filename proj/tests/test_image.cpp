#include <gtest/gtest.h>

#include <cmath>

#include <png.h>

#include "dfq/errors.hpp"
#include "dfq/image.hpp"

using namespace dfq;

namespace {

Image8 gradient_image(std::size_t w, std::size_t h) {
    Image8 img{w, h, std::vector<std::uint8_t>(w * h * 3)};
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            img.at(y, x, 0) = static_cast<std::uint8_t>((x * 255) / (w - 1));
            img.at(y, x, 1) = static_cast<std::uint8_t>((y * 255) / (h - 1));
            img.at(y, x, 2) = static_cast<std::uint8_t>((x + y) % 256);
        }
    return img;
}

}  // namespace

TEST(Normalize, DividesBy255) {
    EXPECT_EQ(normalize(std::uint8_t{255}), 1.0f);
    EXPECT_EQ(normalize(std::uint8_t{0}), 0.0f);
    EXPECT_NEAR(normalize(std::uint8_t{51}), 0.2f, 1e-7f);
    Image8 px{1, 1, {0, 51, 255}};
    EXPECT_EQ(normalize(px), (Tensor(Shape{1, 1, 3}, {0.0f, 51.0f / 255.0f, 1.0f})));
}

TEST(Codec, PngRoundTripIsLossless) {
    const auto img = gradient_image(37, 23);
    const auto bytes = encode_png(img);
    EXPECT_EQ(sniff_format(bytes), ImageFormat::Png);
    const auto back = decode_image(bytes);
    EXPECT_EQ(back.width, 37u);
    EXPECT_EQ(back.height, 23u);
    EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Codec, JpegRoundTripIsClose) {
    const auto img = gradient_image(64, 48);
    const auto bytes = encode_jpeg(img, 95);
    EXPECT_EQ(sniff_format(bytes), ImageFormat::Jpeg);
    const auto back = decode_image(bytes);
    ASSERT_EQ(back.pixels.size(), img.pixels.size());
    double err = 0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) err += std::abs(back.pixels[i] - img.pixels[i]);
    EXPECT_LT(err / static_cast<double>(img.pixels.size()), 6.0);
}

TEST(Codec, GrayscalePngReplicatedToRgb) {
    std::vector<std::uint8_t> gray{0, 64, 128, 255, 10, 20};
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = 3;
    image.height = 2;
    image.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    ASSERT_TRUE(png_image_write_to_memory(&image, nullptr, &size, 0, gray.data(), 0, nullptr));
    std::vector<std::uint8_t> bytes(size);
    ASSERT_TRUE(png_image_write_to_memory(&image, bytes.data(), &size, 0, gray.data(), 0, nullptr));
    const auto rgb = decode_image(bytes);
    ASSERT_EQ(rgb.pixels.size(), 18u);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(rgb.pixels[i * 3 + c], gray[i]);
}

TEST(Codec, CorruptAndUnknownBytesThrow) {
    const std::vector<std::uint8_t> text{'h', 'e', 'l', 'l', 'o'};
    EXPECT_EQ(sniff_format(text), ImageFormat::Unknown);
    EXPECT_THROW(decode_image(text), DecodeError);
    auto png = encode_png(gradient_image(16, 16));
    png.resize(png.size() / 2);
    EXPECT_THROW(decode_image(png), DecodeError);
    auto jpg = encode_jpeg(gradient_image(16, 16));
    jpg.resize(40);
    EXPECT_THROW(decode_image(jpg), DecodeError);
    EXPECT_THROW(decode_image({}), DecodeError);
}

TEST(Resize, TwoByTwoUpscaleMatchesBilinearFormula) {
    // corners a b / c d; with half-pixel centers, output pixel i samples
    // source coordinate (i + 0.5) / 2 - 0.5, clamped to [0, 1]
    const double a = 10, b = 50, c = 90, d = 200;
    const Tensor in(Shape{2, 2, 1}, {static_cast<float>(a), static_cast<float>(b), static_cast<float>(c),
                                     static_cast<float>(d)});
    const auto out = resize_bilinear(in, 4, 4);
    auto coord = [](std::size_t i) { return std::clamp((static_cast<double>(i) + 0.5) / 2.0 - 0.5, 0.0, 1.0); };
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
            const double fy = coord(y), fx = coord(x);
            const double want = a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx;
            EXPECT_NEAR(out[y * 4 + x], want, 1e-4) << y << "," << x;
        }
    // the four centre values are the interior interpolants at 1/4 and 3/4
    EXPECT_NEAR(out[1 * 4 + 1], (9 * a + 3 * b + 3 * c + d) / 16, 1e-4);
    EXPECT_NEAR(out[2 * 4 + 2], (a + 3 * b + 3 * c + 9 * d) / 16, 1e-4);
}

TEST(Resize, SameSizeIsIdentityAndConstantStaysConstant) {
    Tensor t(Shape{3, 5, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i) * 0.01f;
    EXPECT_EQ(resize_bilinear(t, 3, 5), t);
    const auto big = resize_bilinear(Tensor(Shape{7, 9, 3}, 0.4f), 256, 256);
    for (float v : big.values()) EXPECT_NEAR(v, 0.4f, 1e-6f);
}

TEST(Resize, DecodeAndResizeHalvesLargeInput) {
    EXPECT_EQ(decode_and_resize(encode_png(gradient_image(512, 512)), 256).shape(), (Shape{256, 256, 3}));
    const auto native = gradient_image(256, 256);
    EXPECT_EQ(decode_and_resize(encode_png(native), 256), normalize(native));
}

TEST(Resize, DecodeAndResizeOutputsUnitRange) {
    const auto bytes = encode_png(gradient_image(300, 200));
    const auto t = decode_and_resize(bytes, 256);
    EXPECT_EQ(t.shape(), (Shape{256, 256, 3}));
    for (float v : t.values()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(Convert, ToImage8Rounds) {
    const Tensor t(Shape{1, 2, 3}, {0.0f, 1.0f, 0.5f, 0.2f, -0.1f, 1.3f});
    const auto img = to_image8(t);
    EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 255, 128, 51, 0, 255}));
    EXPECT_EQ(normalize(to_image8(normalize(gradient_image(8, 8)))), normalize(gradient_image(8, 8)));
}
