#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "fpnet/data.hpp"

using fpnet::Shape;
using fpnet::Tensor;
using fpnet::index_t;
namespace data = fpnet::data;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kRecordBytes = 3073;
constexpr std::size_t kRecordsPerFile = 10000;

// Deterministic fake CIFAR-10 record: label cycles 0..9, pixel p of record r
// holds (r * 31 + p) mod 256.
void write_batch_file(const fs::path& path, int label_offset) {
    std::vector<std::uint8_t> buf(kRecordBytes * kRecordsPerFile);
    for (std::size_t r = 0; r < kRecordsPerFile; ++r) {
        std::uint8_t* rec = buf.data() + r * kRecordBytes;
        rec[0] = static_cast<std::uint8_t>((r + label_offset) % 10);
        for (std::size_t p = 0; p < 3072; ++p) {
            rec[1 + p] = static_cast<std::uint8_t>((r * 31 + p) & 0xff);
        }
    }
    FILE* f = std::fopen(path.string().c_str(), "wb");
    ASSERT_NE(f, nullptr);
    ASSERT_EQ(std::fwrite(buf.data(), 1, buf.size(), f), buf.size());
    std::fclose(f);
}

class FakeCifarDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / "fpnet_fake_cifar";
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        for (int i = 1; i <= 5; ++i) {
            write_batch_file(dir_ / ("data_batch_" + std::to_string(i) + ".bin"), i);
        }
        write_batch_file(dir_ / "test_batch.bin", 0);
    }

    void TearDown() override { fs::remove_all(dir_); }

    fs::path dir_;
};

}  // namespace

TEST_F(FakeCifarDir, LoadsBothSplits) {
    auto train = data::load_cifar10(dir_.string(), "train");
    EXPECT_EQ(train.count, 50000);
    EXPECT_EQ(train.images.size(), 50000u * 3072u);
    EXPECT_EQ(train.labels.size(), 50000u);

    auto test = data::load_cifar10(dir_.string(), "test");
    EXPECT_EQ(test.count, 10000);
    EXPECT_EQ(test.split, "test");

    // record 0 of data_batch_1: label (0+1) % 10, pixel p = p mod 256
    EXPECT_EQ(train.labels[0], 1);
    EXPECT_EQ(train.image(0)[0], 0);
    EXPECT_EQ(train.image(0)[5], 5);
    // record 3 of the test file: label 3, pixel p = (93+p) mod 256
    EXPECT_EQ(test.labels[3], 3);
    EXPECT_EQ(test.image(3)[2], 95);

    std::array<int, 10> per_class{};
    for (int y : train.labels) per_class[static_cast<std::size_t>(y)]++;
    for (int c = 0; c < 10; ++c) EXPECT_EQ(per_class[static_cast<std::size_t>(c)], 5000);
}

TEST_F(FakeCifarDir, MissingAndMalformedFiles) {
    EXPECT_THROW(data::load_cifar10((dir_ / "nope").string(), "train"), fpnet::IoError);
    EXPECT_THROW(data::load_cifar10(dir_.string(), "validation"), fpnet::ConfigError);

    // truncate the test file -> size check fails before any decode
    fs::resize_file(dir_ / "test_batch.bin", kRecordBytes * kRecordsPerFile - 100);
    EXPECT_THROW(data::load_cifar10(dir_.string(), "test"), fpnet::FormatError);

    // full-size file with an out-of-range label byte
    write_batch_file(dir_ / "test_batch.bin", 0);
    {
        FILE* f = std::fopen((dir_ / "test_batch.bin").string().c_str(), "rb+");
        ASSERT_NE(f, nullptr);
        std::fseek(f, static_cast<long>(kRecordBytes * 7), SEEK_SET);
        std::uint8_t bad = 17;
        std::fwrite(&bad, 1, 1, f);
        std::fclose(f);
    }
    EXPECT_THROW(data::load_cifar10(dir_.string(), "test"), fpnet::FormatError);
}

TEST_F(FakeCifarDir, SubsetPerClassKeepsFileOrder) {
    auto train = data::load_cifar10(dir_.string(), "train");
    auto sub = data::subset_per_class(train, 12);
    EXPECT_EQ(sub.count, 120);
    std::array<int, 10> per_class{};
    for (int y : sub.labels) per_class[static_cast<std::size_t>(y)]++;
    for (int c = 0; c < 10; ++c) EXPECT_EQ(per_class[static_cast<std::size_t>(c)], 12);
    // first image of the subset is the first train image (label 1 comes first)
    EXPECT_EQ(sub.labels[0], train.labels[0]);
    EXPECT_EQ(std::memcmp(sub.image(0).data(), train.image(0).data(), 3072), 0);
    EXPECT_THROW(data::subset_per_class(train, 6000), fpnet::ContractError);
}

TEST(Augment, HflipIsAnInvolution) {
    std::vector<std::uint8_t> img(3072);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<std::uint8_t>(i * 7);
    auto once = img;
    data::hflip_u8(once.data());
    EXPECT_NE(std::memcmp(once.data(), img.data(), img.size()), 0);
    // mirrored pixel check on row 0 of channel 0
    EXPECT_EQ(once[0], img[31]);
    EXPECT_EQ(once[31], img[0]);
    data::hflip_u8(once.data());
    EXPECT_EQ(std::memcmp(once.data(), img.data(), img.size()), 0);
}

TEST(Augment, CenterCropOfPaddedImageIsIdentity) {
    std::vector<std::uint8_t> img(3072), out(3072);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<std::uint8_t>(255 - i % 251);
    data::pad_crop_u8(img.data(), out.data(), 4, 4, 4);
    EXPECT_EQ(std::memcmp(out.data(), img.data(), img.size()), 0);
}

TEST(Augment, CornerCropShiftsPixels) {
    std::vector<std::uint8_t> img(3072, 0), out(3072);
    img[0 * 32 + 0] = 200;  // channel 0, pixel (0, 0)
    data::pad_crop_u8(img.data(), out.data(), 4, 0, 0);
    // offset (0, 0) reads from the padded top-left: original (0,0) lands at (4,4)
    EXPECT_EQ(out[4 * 32 + 4], 200);
    EXPECT_EQ(out[0], 0);
}

TEST(Batching, ShuffleIsSeededAndEpochDependent) {
    auto a = data::shuffled_indices(1000, 42, 0);
    auto b = data::shuffled_indices(1000, 42, 0);
    EXPECT_EQ(a, b);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (index_t i = 0; i < 1000; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);

    int epochs_differing = 0;
    for (std::uint64_t e = 1; e <= 5; ++e) {
        if (data::shuffled_indices(1000, 42, e) != a) ++epochs_differing;
    }
    EXPECT_GE(epochs_differing, 1);
    EXPECT_NE(data::shuffled_indices(1000, 43, 0), a);
}

TEST(Batching, BatchCountsAndSizes) {
    EXPECT_EQ(data::num_batches(10, 3), 4);  // 3 + 3 + 3 + 1
    EXPECT_EQ(data::num_batches(9, 3), 3);
    EXPECT_EQ(data::num_batches(1, 128), 1);
}

TEST(Batching, MakeBatchNormalizesAndRepeats) {
    data::Dataset ds;
    ds.count = 4;
    ds.split = "synthetic";
    ds.labels = {0, 1, 2, 3};
    ds.images.resize(4 * 3072);
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        ds.images[i] = static_cast<std::uint8_t>((i * 13) & 0xff);
    }
    data::AugmentPolicy policy;
    std::vector<index_t> idx{2, 0, 1};

    auto [x1, y1] = data::make_batch<float>(ds, idx, policy, false, 7, 0, 0);
    EXPECT_EQ(x1.shape().n(), 3);
    EXPECT_EQ(x1.shape().c(), 3);
    EXPECT_EQ(x1.shape().h(), 32);
    EXPECT_EQ((y1 == std::vector<int>{2, 0, 1}), true);
    // un-augmented batches only normalize: value = (byte/255 - mean) / std
    const float expected =
        (static_cast<float>(ds.image(2)[0]) / 255.0f - policy.mean[0]) / policy.stddev[0];
    EXPECT_NEAR(x1.data()[0], expected, 1e-6f);

    auto [x2, y2] = data::make_batch<float>(ds, idx, policy, false, 99, 5, 3);
    EXPECT_EQ(std::memcmp(x1.data().data(), x2.data().data(), sizeof(float) * x1.numel()), 0);

    // augmented: same coordinates give bitwise-equal batches, seeds change them
    auto [a1, l1] = data::make_batch<float>(ds, idx, policy, true, 7, 2, 4);
    auto [a2, l2] = data::make_batch<float>(ds, idx, policy, true, 7, 2, 4);
    EXPECT_EQ(std::memcmp(a1.data().data(), a2.data().data(), sizeof(float) * a1.numel()), 0);
    auto [a3, l3] = data::make_batch<float>(ds, idx, policy, true, 8, 2, 4);
    EXPECT_NE(std::memcmp(a1.data().data(), a3.data().data(), sizeof(float) * a1.numel()), 0);

    EXPECT_THROW(data::make_batch<float>(ds, std::vector<index_t>{9}, policy, false, 7, 0, 0),
                 fpnet::ContractError);
}
