#ifndef DFQ_IMAGE_HPP
#define DFQ_IMAGE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dfq/tensor.hpp"

namespace dfq {

/// 8-bit interleaved RGB image.
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // height * width * 3

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * 3 + c];
    }
};

enum class ImageFormat { Png, Jpeg, Unknown };

ImageFormat sniff_format(std::span<const std::uint8_t> bytes);

/// Decodes PNG or baseline/progressive JPEG to RGB. Grayscale is replicated to
/// three channels and alpha is dropped. Throws DecodeError.
Image8 decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const Image8& image);
std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality = 92);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// v / 255, exactly.
float normalize(std::uint8_t v);
/// Image8 -> [H, W, 3] in [0, 1].
Tensor normalize(const Image8& image);

/// [H, W, C] bilinear resize with half-pixel centers and edge clamping. A
/// same-size resize returns the input values unchanged.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

/// Decode, bilinear resize to size x size (on 0..255 values), then divide by 255.
Tensor decode_and_resize(std::span<const std::uint8_t> bytes, std::size_t size = 256);

/// [H, W, 3] in [0, 1] -> 8-bit, rounding to nearest.
Image8 to_image8(const Tensor& image);

}  // namespace dfq

#endif  // DFQ_IMAGE_HPP
