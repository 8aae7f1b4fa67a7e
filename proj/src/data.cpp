#include "dfq/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <numbers>

#include "dfq/errors.hpp"
#include "dfq/image.hpp"

namespace fs = std::filesystem;

namespace dfq {

std::string_view split_name(Split split) { return split == Split::Train ? "train" : "validation"; }

ClassCounts Dataset::class_counts() const {
    ClassCounts c{};
    for (const auto& s : samples_) ++c[static_cast<std::size_t>(s.label)];
    return c;
}

Tensor Dataset::image(std::size_t i) const {
    const Sample& s = samples_.at(i);
    if (!s.image.empty()) return s.image;
    return decode_and_resize(read_file(s.source_path), image_size_);
}

void Dataset::add(Sample sample) { samples_.push_back(std::move(sample)); }

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::optional<fs::path> find_child_dir(const fs::path& dir, std::string_view name) {
    if (!fs::is_directory(dir)) return std::nullopt;
    std::vector<fs::path> hits;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory() && lower(e.path().filename().string()) == name) hits.push_back(e.path());
    }
    if (hits.empty()) return std::nullopt;
    std::sort(hits.begin(), hits.end());
    return hits.front();
}

bool is_image_file(const fs::path& p) {
    const std::string ext = lower(p.extension().string());
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

Dataset load_split(const fs::path& dir, Split split, const LoadOptions& options) {
    if (!fs::is_directory(dir)) throw DataError("missing split directory " + dir.string());
    std::vector<std::pair<fs::path, ClassLabel>> files;
    std::vector<std::string> missing;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto class_dir = find_child_dir(dir, kClassNames[c]);
        if (!class_dir) {
            missing.emplace_back(kClassNames[c]);
            continue;
        }
        for (const auto& e : fs::directory_iterator(*class_dir)) {
            if (e.is_regular_file() && is_image_file(e.path())) files.emplace_back(e.path(), label_from_index(c));
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing class directory in " + dir.string() + ":";
        for (const auto& m : missing) msg += " " + m;
        throw DataError(msg);
    }
    std::sort(files.begin(), files.end());

    const bool lazy = files.size() > options.eager_limit;
    std::vector<Tensor> images(files.size());
    std::vector<std::string> errors(files.size());
    const auto n = static_cast<std::ptrdiff_t>(files.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            Tensor t = decode_and_resize(read_file(files[i].first), options.image_size);
            if (!lazy) images[i] = std::move(t);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }

    Dataset ds(split, options.image_size);
    ds.set_lazy(lazy);
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!errors[i].empty()) {
            ++skipped;
            if (options.warn) std::cerr << "warning: skipping " << files[i].first.string() << ": " << errors[i] << "\n";
            continue;
        }
        ds.add(Sample{std::move(images[i]), files[i].second, files[i].first.string()});
    }
    ds.set_skipped(skipped);
    return ds;
}

DatasetPair load_dataset(const fs::path& root, const LoadOptions& options) {
    if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
    DatasetPair r;
    for (Split split : {Split::Train, Split::Validation}) {
        const auto dir = find_child_dir(root, split_name(split));
        if (!dir) throw DataError("missing split directory " + (root / split_name(split)).string());
        (split == Split::Train ? r.train : r.validation) = load_split(*dir, split, options);
    }
    return r;
}

Tensor one_hot(ClassLabel label) {
    Tensor t(Shape{kNumClasses});
    t[static_cast<std::size_t>(label)] = 1.0f;
    return t;
}

void AugmentConfig::validate() const {
    if (!(rotation_deg >= 0.0 && rotation_deg <= 180.0)) throw ConfigError("rotation_deg must lie in [0, 180]");
    if (!(brightness_contrast_frac >= 0.0 && brightness_contrast_frac < 1.0)) {
        throw ConfigError("brightness_contrast_frac must lie in [0, 1)");
    }
    if (!(zoom_frac >= 0.0 && zoom_frac < 1.0)) throw ConfigError("zoom_frac must lie in [0, 1)");
}

namespace {

void require_image(const Tensor& img) {
    if (img.shape().rank() != 3) throw ShapeError("expected an [H, W, C] image, got " + img.shape().to_string());
}

}  // namespace

Tensor rotate_nearest(const Tensor& img, double degrees) {
    require_image(img);
    const std::size_t h = img.shape()[0], w = img.shape()[1], c = img.shape()[2];
    const double rad = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
    Tensor out(img.shape());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            // inverse map: rotate the output coordinate by -theta
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            const double sx = cs * dx + sn * dy + cx;
            const double sy = -sn * dx + cs * dy + cy;
            const auto iy = static_cast<std::size_t>(std::clamp(std::round(sy), 0.0, static_cast<double>(h - 1)));
            const auto ix = static_cast<std::size_t>(std::clamp(std::round(sx), 0.0, static_cast<double>(w - 1)));
            for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = img.at(iy, ix, k);
        }
    }
    return out;
}

Tensor flip_horizontal(const Tensor& img) {
    require_image(img);
    const std::size_t h = img.shape()[0], w = img.shape()[1], c = img.shape()[2];
    Tensor out(img.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = img.at(y, w - 1 - x, k);
    return out;
}

Tensor flip_vertical(const Tensor& img) {
    require_image(img);
    const std::size_t h = img.shape()[0], row = img.shape()[1] * img.shape()[2];
    Tensor out(img.shape());
    for (std::size_t y = 0; y < h; ++y) {
        std::copy_n(img.data() + (h - 1 - y) * row, row, out.data() + y * row);
    }
    return out;
}

Tensor adjust_brightness_contrast(const Tensor& img, double contrast, double brightness) {
    return map_elementwise(img, [=](float v) {
        const double r = (static_cast<double>(v) - 0.5) * contrast + 0.5 + brightness;
        return static_cast<float>(std::clamp(r, 0.0, 1.0));
    });
}

Tensor zoom_bilinear(const Tensor& img, double factor) {
    require_image(img);
    if (!(factor > 0.0)) throw ConfigError("zoom factor must be positive");
    const std::size_t h = img.shape()[0], w = img.shape()[1], c = img.shape()[2];
    const double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
    Tensor out(img.shape());
    for (std::size_t y = 0; y < h; ++y) {
        const double sy = std::clamp((static_cast<double>(y) - cy) / factor + cy, 0.0, static_cast<double>(h - 1));
        const auto y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < w; ++x) {
            const double sx = std::clamp((static_cast<double>(x) - cx) / factor + cx, 0.0, static_cast<double>(w - 1));
            const auto x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double fx = sx - static_cast<double>(x0);
            for (std::size_t k = 0; k < c; ++k) {
                const double top = img.at(y0, x0, k) * (1.0 - fx) + img.at(y0, x1, k) * fx;
                const double bot = img.at(y1, x0, k) * (1.0 - fx) + img.at(y1, x1, k) * fx;
                out.at(y, x, k) = static_cast<float>(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    return out;
}

Tensor augment(const Tensor& img, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    Tensor out = img;
    if (cfg.rotation_deg != 0.0) out = rotate_nearest(out, rng.uniform(-cfg.rotation_deg, cfg.rotation_deg));
    if (cfg.flip_h && rng.bernoulli(0.5)) out = flip_horizontal(out);
    if (cfg.flip_v && rng.bernoulli(0.5)) out = flip_vertical(out);
    if (cfg.brightness_contrast_frac != 0.0) {
        const double f = cfg.brightness_contrast_frac;
        const double contrast = rng.uniform(1.0 - f, 1.0 + f);
        const double brightness = rng.uniform(-f, f);
        out = adjust_brightness_contrast(out, contrast, brightness);
    }
    if (cfg.zoom_frac != 0.0) out = zoom_bilinear(out, rng.uniform(1.0 - cfg.zoom_frac, 1.0 + cfg.zoom_frac));
    return out;
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                             AugmentConfig augment, bool shuffle)
    : ds_(&ds), batch_size_(batch_size), seed_(seed), epoch_(epoch), augment_(augment) {
    if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    if (ds.empty()) throw DataError(std::string("cannot iterate an empty ") + std::string(split_name(ds.split())) + " dataset");
    augment_.validate();
    apply_augment_ = ds.split() == Split::Train && augment_.any();
    order_.resize(ds.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (shuffle) {
        Rng rng(Rng::derive(seed, {epoch}));
        for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
    }
}

Batch BatchIterator::batch(std::size_t b) const {
    if (b >= batch_count()) throw std::out_of_range("batch index out of range");
    const std::size_t begin = b * batch_size_;
    const std::size_t n = std::min(batch_size_, order_.size() - begin);
    const std::size_t s = ds_->image_size();
    Batch out{Tensor(Shape{n, s, s, 3}), Tensor(Shape{n, kNumClasses}), {}};
    out.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                       order_.begin() + static_cast<std::ptrdiff_t>(begin + n));
    const std::size_t per = s * s * 3;
    const auto count = static_cast<std::ptrdiff_t>(n);
    std::vector<std::exception_ptr> failures(n);
#pragma omp parallel for schedule(static) if (n > 1)
    for (std::ptrdiff_t r = 0; r < count; ++r) {
        const std::size_t pos = begin + static_cast<std::size_t>(r);
        try {
            Tensor img = ds_->image(order_[pos]);
            if (img.size() != per) throw ShapeError("sample image has shape " + img.shape().to_string());
            if (apply_augment_) {
                Rng rng(Rng::derive(seed_, {epoch_, pos, 2}));
                img = augment(img, augment_, rng);
            }
            std::copy_n(img.data(), per, out.images.data() + static_cast<std::size_t>(r) * per);
        } catch (...) {
            failures[static_cast<std::size_t>(r)] = std::current_exception();
        }
        out.targets[static_cast<std::size_t>(r) * kNumClasses + static_cast<std::size_t>(ds_->label(order_[pos]))] = 1.0f;
    }
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);
    return out;
}

bool BatchIterator::next(Batch& out) {
    if (cursor_ >= batch_count()) return false;
    out = batch(cursor_++);
    return true;
}

namespace {

struct Rgb {
    double r, g, b;
};

// Dominant fruit colour per class, in ClassLabel order.
constexpr std::array<Rgb, kNumClasses> kFruitColour = {{
    {0.95, 0.80, 0.15},  // defect: yellowed
    {0.95, 0.20, 0.85},  // fresh: magenta
    {0.30, 0.95, 0.30},  // immature: green
    {0.95, 0.12, 0.12},  // mature: red
}};

struct Spot {
    double y, x, r;
};

Tensor synth_image(ClassLabel label, Rng& rng, std::size_t size) {
    const auto cls = static_cast<std::size_t>(label);
    const double s = static_cast<double>(size);
    const double bg = rng.uniform(0.78, 0.92);
    const double bg_tint = rng.uniform(-0.04, 0.04);
    Rgb base = kFruitColour[cls];
    base.r = std::clamp(base.r + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    base.g = std::clamp(base.g + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    base.b = std::clamp(base.b + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    const double cy = s * rng.uniform(0.42, 0.58), cx = s * rng.uniform(0.42, 0.58);
    const double ry = s * rng.uniform(0.38, 0.46), rx = s * rng.uniform(0.38, 0.46);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double stripe_freq = rng.uniform(0.12, 0.20) * 256.0 / s;
    const double stripe_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    std::vector<Spot> spots;
    if (label == ClassLabel::Defect) {
        const std::size_t n = 6 + rng.below(7);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = rng.uniform(0.0, 2.0 * std::numbers::pi), d = std::sqrt(rng.uniform()) * 0.8;
            spots.push_back({cy + d * ry * std::sin(a), cx + d * rx * std::cos(a), s * rng.uniform(0.03, 0.08)});
        }
    }

    Tensor img(Shape{size, size, 3});
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            const double u = (ca * dx + sa * dy) / rx, v = (-sa * dx + ca * dy) / ry;
            Rgb p{bg + bg_tint, bg, bg - bg_tint};
            if (u * u + v * v <= 1.0) {
                p = base;
                double shade = 1.0 - 0.25 * (u * u + v * v);
                switch (label) {
                    case ClassLabel::Defect:
                        for (const auto& sp : spots) {
                            const double ey = static_cast<double>(y) - sp.y, ex = static_cast<double>(x) - sp.x;
                            if (ey * ey + ex * ex <= sp.r * sp.r) {
                                p = {0.22, 0.14, 0.08};
                                break;
                            }
                        }
                        break;
                    case ClassLabel::Fresh:
                        // soft specular highlight
                        shade += 0.25 * std::exp(-((u + 0.35) * (u + 0.35) + (v + 0.35) * (v + 0.35)) * 8.0);
                        break;
                    case ClassLabel::Immature:
                        if (rng.bernoulli(0.12)) shade *= 1.25;
                        break;
                    case ClassLabel::Mature:
                        shade *= 0.85 + 0.15 * std::sin(stripe_freq * static_cast<double>(y) + stripe_phase);
                        break;
                }
                p = {p.r * shade, p.g * shade, p.b * shade};
            }
            const double noise = 0.035;
            img.at(y, x, 0) = static_cast<float>(std::clamp(p.r + noise * rng.normal(), 0.0, 1.0));
            img.at(y, x, 1) = static_cast<float>(std::clamp(p.g + noise * rng.normal(), 0.0, 1.0));
            img.at(y, x, 2) = static_cast<float>(std::clamp(p.b + noise * rng.normal(), 0.0, 1.0));
        }
    }
    // quantize to 8-bit so the in-memory set equals its PNG materialization
    return normalize(to_image8(img));
}

}  // namespace

DatasetPair synth_dataset(std::size_t per_class, std::uint64_t seed, std::size_t image_size) {
    if (per_class == 0) throw ConfigError("per_class must be at least 1");
    // 80/20, keeping at least one validation sample once there are two per class
    const auto rounded = static_cast<std::size_t>(std::lround(0.8 * static_cast<double>(per_class)));
    const std::size_t n_train = std::clamp<std::size_t>(rounded, 1, std::max<std::size_t>(1, per_class - 1));
    DatasetPair r{Dataset(Split::Train, image_size), Dataset(Split::Validation, image_size)};
    std::vector<Sample> all(per_class * kNumClasses);
    const auto total = static_cast<std::ptrdiff_t>(all.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < total; ++k) {
        const std::size_t c = static_cast<std::size_t>(k) / per_class, i = static_cast<std::size_t>(k) % per_class;
        Rng rng(Rng::derive(seed, {c, i}));
        all[k] = Sample{synth_image(label_from_index(c), rng, image_size), label_from_index(c), ""};
    }
    // interleave classes so a prefix of either split stays balanced
    for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            (i < n_train ? r.train : r.validation).add(std::move(all[c * per_class + i]));
        }
    }
    return r;
}

void write_dataset(const fs::path& root, const DatasetPair& data) {
    for (const Dataset* ds : {&data.train, &data.validation}) {
        const fs::path split_dir = root / split_name(ds->split());
        for (std::size_t c = 0; c < kNumClasses; ++c) fs::create_directories(split_dir / kClassNames[c]);
        std::array<std::size_t, kNumClasses> next{};
        for (std::size_t i = 0; i < ds->size(); ++i) {
            const auto c = static_cast<std::size_t>(ds->label(i));
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%05zu.png", std::string(kClassNames[c]).c_str(), next[c]++);
            write_file(split_dir / kClassNames[c] / name, encode_png(to_image8(ds->image(i))));
        }
    }
}

}  // namespace dfq
