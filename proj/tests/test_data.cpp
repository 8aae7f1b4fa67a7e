#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "dfq/data.hpp"
#include "dfq/errors.hpp"
#include "dfq/image.hpp"

using namespace dfq;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("dfq_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

Image8 solid(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image8 img{w, h, {}};
    for (std::size_t i = 0; i < w * h; ++i) img.pixels.insert(img.pixels.end(), {r, g, b});
    return img;
}

Tensor asymmetric(std::size_t n) {
    Tensor t(Shape{n, n, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>((i * 37) % 101) / 100.0f;
    return t;
}

void write_png(const fs::path& p, const Image8& img) {
    fs::create_directories(p.parent_path());
    write_file(p, encode_png(img));
}

// root/{train,validation}/{defect,fresh,immature,mature}, with `count` images per class.
void make_layout(const fs::path& root, std::size_t count) {
    for (const char* split : {"train", "validation"})
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            fs::create_directories(root / split / kClassNames[c]);
            for (std::size_t i = 0; i < count; ++i) {
                write_png(root / split / kClassNames[c] / ("img_" + std::to_string(i) + ".png"),
                          solid(20 + i, 16, static_cast<std::uint8_t>(60 * c), 10, 200));
            }
        }
}

}  // namespace

TEST(OneHot, IndexOrder) {
    EXPECT_EQ(one_hot(ClassLabel::Fresh), (Tensor(Shape{4}, {0, 1, 0, 0})));
    EXPECT_EQ(one_hot(ClassLabel::Defect), (Tensor(Shape{4}, {1, 0, 0, 0})));
    EXPECT_EQ(one_hot(ClassLabel::Mature), (Tensor(Shape{4}, {0, 0, 0, 1})));
}

TEST(Load, ReadsLayoutWithCountsAndLabels) {
    TempDir dir;
    make_layout(dir.path(), 2);
    LoadOptions opt;
    opt.image_size = 32;
    const auto pair = load_dataset(dir.path(), opt);
    EXPECT_EQ(pair.train.size(), 8u);
    EXPECT_EQ(pair.validation.size(), 8u);
    EXPECT_EQ(pair.train.class_counts(), (ClassCounts{2, 2, 2, 2}));
    EXPECT_EQ(pair.validation.split(), Split::Validation);
    for (std::size_t i = 0; i < pair.train.size(); ++i) {
        const auto img = pair.train.image(i);
        EXPECT_EQ(img.shape(), (Shape{32, 32, 3}));
        EXPECT_NEAR(img[0], normalize(static_cast<std::uint8_t>(60 * static_cast<int>(pair.train.label(i)))), 1e-6);
    }
}

TEST(Load, OrderIsLexicographicAndStable) {
    TempDir dir;
    make_layout(dir.path(), 3);
    const auto a = load_split(dir.path() / "train", Split::Train);
    const auto b = load_split(dir.path() / "train", Split::Train);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.samples()[i].source_path, b.samples()[i].source_path);
    for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LT(a.samples()[i - 1].source_path, a.samples()[i].source_path);
}

TEST(Load, MissingClassDirectoryNamed) {
    TempDir dir;
    make_layout(dir.path(), 1);
    fs::remove_all(dir.path() / "validation" / "immature");
    try {
        load_dataset(dir.path());
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("immature"), std::string::npos);
    }
    EXPECT_THROW(load_dataset(dir.path() / "nowhere"), DataError);
}

TEST(Load, EmptyClassAndUndecodableFile) {
    TempDir dir;
    make_layout(dir.path(), 1);
    for (const auto& e : fs::directory_iterator(dir.path() / "train" / "fresh")) fs::remove(e.path());
    std::ofstream(dir.path() / "train" / "mature" / "broken.png") << "not an image";
    std::ofstream(dir.path() / "train" / "mature" / "notes.txt") << "ignored";
    LoadOptions opt;
    opt.warn = false;
    opt.image_size = 16;
    const auto train = load_split(dir.path() / "train", Split::Train, opt);
    EXPECT_EQ(train.class_counts(), (ClassCounts{1, 0, 1, 1}));
    EXPECT_EQ(train.skipped(), 1u);
}

TEST(Load, CaseInsensitiveDirectoriesAndJpeg) {
    TempDir dir;
    for (const char* split : {"Train", "VALIDATION"})
        for (const char* cls : {"Defect", "FRESH", "immature", "Mature"}) {
            fs::create_directories(dir.path() / split / cls);
            write_file(dir.path() / split / cls / "a.jpg", encode_jpeg(solid(8, 8, 100, 100, 100)));
        }
    const auto pair = load_dataset(dir.path());
    EXPECT_EQ(pair.train.class_counts(), (ClassCounts{1, 1, 1, 1}));
    EXPECT_EQ(pair.validation.size(), 4u);
}

TEST(Load, LazyModeDecodesOnAccess) {
    TempDir dir;
    make_layout(dir.path(), 2);
    LoadOptions opt;
    opt.eager_limit = 3;
    opt.image_size = 24;
    const auto lazy = load_split(dir.path() / "train", Split::Train, opt);
    opt.eager_limit = 1000;
    const auto eager = load_split(dir.path() / "train", Split::Train, opt);
    EXPECT_TRUE(lazy.lazy());
    EXPECT_FALSE(eager.lazy());
    for (std::size_t i = 0; i < lazy.size(); ++i) EXPECT_EQ(lazy.image(i), eager.image(i));
}

TEST(Augment, DisabledIsBitIdentical) {
    const auto img = asymmetric(32);
    Rng rng(1);
    EXPECT_EQ(augment(img, AugmentConfig::disabled(), rng), img);
}

TEST(Augment, HorizontalFlipIsColumnReversalAndInvolution) {
    const auto img = asymmetric(8);
    const auto f = flip_horizontal(img);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
            for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(f.at(y, x, c), img.at(y, 7 - x, c));
    EXPECT_EQ(flip_horizontal(f), img);
    EXPECT_EQ(flip_vertical(flip_vertical(img)), img);
}

TEST(Augment, ZeroRotationAndUnitZoomAreIdentity) {
    const auto img = asymmetric(16);
    EXPECT_EQ(rotate_nearest(img, 0.0), img);
    EXPECT_EQ(adjust_brightness_contrast(img, 1.0, 0.0), img);
    const auto z = zoom_bilinear(img, 1.0);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(z[i], img[i], 1e-6f);
}

TEST(Augment, QuarterTurnOfSquareIsExact) {
    const auto img = asymmetric(9);
    const auto r = rotate_nearest(img, 90.0);
    const auto back = rotate_nearest(rotate_nearest(r, 90.0), 180.0);
    EXPECT_EQ(back, img);
}

TEST(Augment, BrightnessContrastFormula) {
    const Tensor img(Shape{1, 2, 3}, {0.0f, 0.5f, 1.0f, 0.2f, 0.8f, 0.6f});
    const auto out = adjust_brightness_contrast(img, 1.1, -0.05);
    for (std::size_t i = 0; i < img.size(); ++i)
        EXPECT_NEAR(out[i], std::clamp((img[i] - 0.5) * 1.1 + 0.5 - 0.05, 0.0, 1.0), 1e-6);
}

TEST(Augment, RandomPipelineKeepsShapeAndRange) {
    const auto img = asymmetric(64);
    Rng rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        const auto out = augment(img, AugmentConfig{}, rng);
        EXPECT_EQ(out.shape(), img.shape());
        for (float v : out.values()) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
    }
    AugmentConfig bad;
    bad.rotation_deg = 200;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = {};
    bad.zoom_frac = -0.1;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Batches, CountsAndPartialBatch) {
    Dataset ds(Split::Validation, 4);
    for (std::size_t i = 0; i < 10010; ++i) ds.add(Sample{Tensor(Shape{4, 4, 3}), label_from_index(i % 4), ""});
    BatchIterator it(ds, 32, 5, 0);
    EXPECT_EQ(it.batch_count(), 313u);
    EXPECT_EQ(it.batch(312).images.shape()[0], 26u);
    EXPECT_EQ(it.batch(0).images.shape()[0], 32u);
}

TEST(Batches, EpochCoversDatasetOnceAndIsSeeded) {
    const auto pair = synth_dataset(5, 3, 32);
    BatchIterator a(pair.train, 3, 9, 2), b(pair.train, 3, 9, 2), c(pair.train, 3, 9, 3);
    EXPECT_EQ(a.order(), b.order());
    EXPECT_NE(a.order(), c.order());
    std::multiset<std::size_t> seen;
    Batch batch;
    std::size_t n = 0;
    while (a.next(batch)) {
        ++n;
        seen.insert(batch.indices.begin(), batch.indices.end());
        const auto other = b.batch(n - 1);
        EXPECT_EQ(batch.images, other.images);
        for (std::size_t r = 0; r < batch.indices.size(); ++r) {
            const auto want = one_hot(pair.train.label(batch.indices[r]));
            for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(batch.targets[r * 4 + j], want[j]);
        }
    }
    EXPECT_EQ(n, a.batch_count());
    EXPECT_EQ(seen.size(), pair.train.size());
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), pair.train.size());
}

TEST(Batches, ValidationIsNeverAugmented) {
    const auto pair = synth_dataset(2, 3, 32);
    BatchIterator it(pair.validation, 8, 1, 0);
    const auto b = it.batch(0);
    for (std::size_t r = 0; r < b.indices.size(); ++r) {
        const auto img = pair.validation.image(b.indices[r]);
        EXPECT_TRUE(std::equal(img.values().begin(), img.values().end(), b.images.slice(r).begin()));
    }
    BatchIterator aug(pair.train, 8, 1, 0);
    const auto t = aug.batch(0);
    bool changed = false;
    for (std::size_t r = 0; r < t.indices.size(); ++r) {
        const auto img = pair.train.image(t.indices[r]);
        changed |= !std::equal(img.values().begin(), img.values().end(), t.images.slice(r).begin());
    }
    EXPECT_TRUE(changed);
    EXPECT_THROW(BatchIterator(Dataset(Split::Train), 4, 0, 0), DataError);
}

TEST(Synthetic, BalancedDeterministicSplit) {
    const auto a = synth_dataset(8, 11);
    const auto b = synth_dataset(8, 11);
    EXPECT_EQ(a.train.size() + a.validation.size(), 32u);
    EXPECT_EQ(a.train.class_counts(), (ClassCounts{6, 6, 6, 6}));
    EXPECT_EQ(a.validation.class_counts(), (ClassCounts{2, 2, 2, 2}));
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ(a.train.image(i), b.train.image(i));
        EXPECT_TRUE(a.train.samples()[i].source_path.empty());
        EXPECT_EQ(a.train.image(i).shape(), (Shape{256, 256, 3}));
    }
    EXPECT_THROW(synth_dataset(0, 1), ConfigError);
}

TEST(Synthetic, MeanColourCentroidsSeparateClasses) {
    // nearest-centroid classifier on mean RGB, fitted on one seed and scored on another
    auto mean_rgb = [](const Tensor& img) {
        std::array<double, 3> m{};
        for (std::size_t i = 0; i < img.size(); ++i) m[i % 3] += img[i];
        for (double& v : m) v /= static_cast<double>(img.size() / 3);
        return m;
    };
    const auto fit = synth_dataset(20, 1, 64);
    std::array<std::array<double, 3>, kNumClasses> centroid{};
    std::array<double, kNumClasses> n{};
    for (const Dataset* ds : {&fit.train, &fit.validation})
        for (std::size_t i = 0; i < ds->size(); ++i) {
            const auto c = static_cast<std::size_t>(ds->label(i));
            const auto m = mean_rgb(ds->image(i));
            for (std::size_t k = 0; k < 3; ++k) centroid[c][k] += m[k];
            n[c] += 1;
        }
    for (std::size_t c = 0; c < kNumClasses; ++c)
        for (double& v : centroid[c]) v /= n[c];
    const auto test = synth_dataset(25, 2, 64);
    std::size_t correct = 0, total = 0;
    for (const Dataset* ds : {&test.train, &test.validation})
        for (std::size_t i = 0; i < ds->size(); ++i) {
            const auto m = mean_rgb(ds->image(i));
            std::size_t best = 0;
            double best_d = 1e300;
            for (std::size_t c = 0; c < kNumClasses; ++c) {
                double d = 0;
                for (std::size_t k = 0; k < 3; ++k) d += (m[k] - centroid[c][k]) * (m[k] - centroid[c][k]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            correct += best == static_cast<std::size_t>(ds->label(i));
            ++total;
        }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(total), 0.95);
}

TEST(Synthetic, WrittenLayoutLoadsBack) {
    TempDir dir;
    const auto pair = synth_dataset(2, 5, 32);
    write_dataset(dir.path(), pair);
    LoadOptions opt;
    opt.image_size = 32;
    const auto back = load_dataset(dir.path(), opt);
    EXPECT_EQ(back.train.class_counts(), pair.train.class_counts());
    EXPECT_EQ(back.validation.class_counts(), pair.validation.class_counts());
    // each class's files come back equal to the in-memory samples, in generation order
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        std::vector<Tensor> mem, disk;
        for (std::size_t i = 0; i < pair.train.size(); ++i)
            if (static_cast<std::size_t>(pair.train.label(i)) == c) mem.push_back(pair.train.image(i));
        for (std::size_t i = 0; i < back.train.size(); ++i)
            if (static_cast<std::size_t>(back.train.label(i)) == c) disk.push_back(back.train.image(i));
        EXPECT_EQ(mem, disk);
    }
}
