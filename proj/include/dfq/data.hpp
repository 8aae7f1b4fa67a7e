#ifndef DFQ_DATA_HPP
#define DFQ_DATA_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dfq/network.hpp"
#include "dfq/random.hpp"
#include "dfq/tensor.hpp"

namespace dfq {

enum class Split : std::uint8_t { Train, Validation };

std::string_view split_name(Split split);

struct Sample {
    Tensor image;  // [256, 256, 3] in [0, 1]; empty while not yet decoded (lazy datasets)
    ClassLabel label = ClassLabel::Defect;
    std::string source_path;  // empty for synthetic samples
};

using ClassCounts = std::array<std::size_t, kNumClasses>;

/// Immutable once built. Lazy datasets keep only paths and decode on access.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(Split split, std::size_t image_size = kInputSize) : split_(split), image_size_(image_size) {}

    Split split() const { return split_; }
    std::size_t image_size() const { return image_size_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    bool lazy() const { return lazy_; }
    const std::vector<Sample>& samples() const { return samples_; }
    ClassLabel label(std::size_t i) const { return samples_.at(i).label; }
    ClassCounts class_counts() const;
    std::size_t skipped() const { return skipped_; }

    /// Decoded, resized, normalized image of sample i.
    Tensor image(std::size_t i) const;

    void add(Sample sample);
    void set_lazy(bool lazy) { lazy_ = lazy; }
    void set_skipped(std::size_t n) { skipped_ = n; }

private:
    Split split_ = Split::Train;
    std::size_t image_size_ = kInputSize;
    std::vector<Sample> samples_;
    bool lazy_ = false;
    std::size_t skipped_ = 0;
};

struct LoadOptions {
    std::size_t image_size = kInputSize;
    /// Splits with more files than this are loaded lazily.
    std::size_t eager_limit = 2048;
    bool warn = true;  // print a line to stderr for each skipped file
};

struct DatasetPair {
    Dataset train;
    Dataset validation;
};

/// Reads <root>/{train,validation}/{defect,fresh,immature,mature}/*.{png,jpg,jpeg}.
/// Directory names match case-insensitively; samples are ordered by path.
/// Throws DataError if a split or class directory is missing.
DatasetPair load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});

/// Loads a single split directory (<dir>/<class>/...).
Dataset load_split(const std::filesystem::path& dir, Split split, const LoadOptions& options = {});

Tensor one_hot(ClassLabel label);

struct AugmentConfig {
    double rotation_deg = 20.0;
    bool flip_h = true;
    bool flip_v = true;
    double brightness_contrast_frac = 0.10;
    double zoom_frac = 0.15;

    static AugmentConfig disabled() { return {0.0, false, false, 0.0, 0.0}; }
    /// Throws ConfigError on out-of-range fields.
    void validate() const;
    bool any() const {
        return rotation_deg != 0.0 || flip_h || flip_v || brightness_contrast_frac != 0.0 || zoom_frac != 0.0;
    }
};

// Individual transforms, exposed for testing.
Tensor rotate_nearest(const Tensor& img, double degrees);
Tensor flip_horizontal(const Tensor& img);
Tensor flip_vertical(const Tensor& img);
Tensor adjust_brightness_contrast(const Tensor& img, double contrast, double brightness);
Tensor zoom_bilinear(const Tensor& img, double factor);

/// Rotation, h-flip, v-flip, brightness/contrast, zoom, in that order. Steps
/// whose parameter is zero are skipped and draw nothing from rng.
Tensor augment(const Tensor& img, const AugmentConfig& cfg, Rng& rng);

struct Batch {
    Tensor images;   // [B, H, W, 3]
    Tensor targets;  // [B, 4]
    std::vector<std::size_t> indices;  // dataset index of each row
};

/// One epoch of batches. The order is a permutation drawn from (seed, epoch);
/// augmentation is applied to Train datasets only, each sample drawing from
/// its own child seed so batches can be built in any order or concurrently.
class BatchIterator {
public:
    BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                  AugmentConfig augment = {}, bool shuffle = true);

    std::size_t batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }
    const std::vector<std::size_t>& order() const { return order_; }

    Batch batch(std::size_t b) const;
    /// Sequential access; returns false after the last batch.
    bool next(Batch& out);

private:
    const Dataset* ds_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::size_t epoch_;
    AugmentConfig augment_;
    bool apply_augment_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

/// Procedural four-class stand-in dataset: per class a distinct fruit hue and
/// surface texture on a noisy background. 80/20 train/validation split per class.
DatasetPair synth_dataset(std::size_t per_class, std::uint64_t seed, std::size_t image_size = kInputSize);

/// Materializes a dataset pair in the load_dataset layout as PNG files.
void write_dataset(const std::filesystem::path& root, const DatasetPair& data);

}  // namespace dfq

#endif  // DFQ_DATA_HPP
