#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fpnet/random.hpp"
#include "fpnet/tensor.hpp"

namespace fpnet::data {

// CIFAR-10 style image set: raw bytes in channel-major (R, G, B) planes of
// 32x32, row-major within a plane. Kept as bytes; batches promote to reals.
struct Dataset {
    std::vector<std::uint8_t> images;  // count * 3072
    std::vector<int> labels;
    index_t count = 0;
    std::string split;

    std::span<const std::uint8_t> image(index_t i) const {
        return {images.data() + i * 3072, 3072};
    }
};

// Loads the binary-format CIFAR-10 split from dir: data_batch_{1..5}.bin for
// train, test_batch.bin for test. Each record is 1 label byte + 3072 pixel
// bytes. Missing file -> IoError; wrong size or bad label byte -> FormatError.
Dataset load_cifar10(const std::string& dir, const std::string& split);

// First per_class images of every class, in file order (smoke-training subset).
Dataset subset_per_class(const Dataset& ds, index_t per_class);

struct AugmentPolicy {
    index_t pad = 4;
    index_t crop = 32;
    double hflip_prob = 0.5;
    std::array<double, 3> mean = {0.4914, 0.4822, 0.4465};
    std::array<double, 3> stddev = {0.2470, 0.2435, 0.2616};
};

// In-place horizontal flip of one 3x32x32 byte image.
inline void hflip_u8(std::uint8_t* img) {
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 32; ++y) {
            std::uint8_t* row = img + (c * 32 + y) * 32;
            for (int x = 0; x < 16; ++x) std::swap(row[x], row[31 - x]);
        }
    }
}

// Zero-pad by pad pixels and crop a 32x32 window at offset (dy, dx) in
// [0, 2*pad]; (pad, pad) is the identity crop.
inline void pad_crop_u8(const std::uint8_t* src, std::uint8_t* dst, index_t pad, index_t dy,
                        index_t dx) {
    for (int c = 0; c < 3; ++c) {
        for (index_t y = 0; y < 32; ++y) {
            const index_t sy = y + dy - pad;
            for (index_t x = 0; x < 32; ++x) {
                const index_t sx = x + dx - pad;
                dst[(c * 32 + y) * 32 + x] =
                    (sy >= 0 && sy < 32 && sx >= 0 && sx < 32)
                        ? src[(c * 32 + sy) * 32 + sx]
                        : std::uint8_t(0);
            }
        }
    }
}

// Fisher-Yates permutation of [0, count), a pure function of (seed, epoch).
inline std::vector<index_t> shuffled_indices(index_t count, std::uint64_t shuffle_seed,
                                             std::uint64_t epoch) {
    std::vector<index_t> idx(static_cast<std::size_t>(count));
    for (index_t i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(shuffle_seed, rng_stream::kShuffle, epoch));
    for (index_t i = count - 1; i > 0; --i) {
        const index_t j = static_cast<index_t>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
}

inline index_t num_batches(index_t count, index_t batch_size) {
    return (count + batch_size - 1) / batch_size;  // last partial batch retained
}

// Assembles one batch. With augment=true, each image draws (flip, dy, dx) in
// order from a stream derived from (seed, epoch, batch_index); the draw
// pattern is fixed so the stream never depends on the outcomes.
template <typename T>
std::pair<Tensor<T>, std::vector<int>> make_batch(const Dataset& ds,
                                                  std::span<const index_t> indices,
                                                  const AugmentPolicy& policy, bool augment,
                                                  std::uint64_t seed, std::uint64_t epoch,
                                                  std::uint64_t batch_index) {
    const index_t n = static_cast<index_t>(indices.size());
    if (n < 1) throw ContractError("make_batch: empty index list");
    std::vector<T> out(static_cast<std::size_t>(n * 3072));
    std::vector<int> labels(static_cast<std::size_t>(n));
    Rng rng(derive_seed(seed, rng_stream::kAugment, epoch, batch_index));
    std::array<std::uint8_t, 3072> flipped;
    std::array<std::uint8_t, 3072> cropped;
    for (index_t i = 0; i < n; ++i) {
        const index_t id = indices[static_cast<std::size_t>(i)];
        if (id < 0 || id >= ds.count) {
            throw ContractError("make_batch: index " + std::to_string(id) + " out of range");
        }
        labels[static_cast<std::size_t>(i)] = ds.labels[static_cast<std::size_t>(id)];
        const std::uint8_t* img = ds.images.data() + id * 3072;
        if (augment) {
            const bool flip = rng.uniform01() < policy.hflip_prob;
            const index_t dy = static_cast<index_t>(rng.below(2 * policy.pad + 1));
            const index_t dx = static_cast<index_t>(rng.below(2 * policy.pad + 1));
            if (flip) {
                std::copy(img, img + 3072, flipped.data());
                hflip_u8(flipped.data());
                img = flipped.data();
            }
            pad_crop_u8(img, cropped.data(), policy.pad, dy, dx);
            img = cropped.data();
        }
        T* dst = out.data() + i * 3072;
        for (int c = 0; c < 3; ++c) {
            const double inv_std = 1.0 / policy.stddev[static_cast<std::size_t>(c)];
            const double mean = policy.mean[static_cast<std::size_t>(c)];
            for (int p = 0; p < 1024; ++p) {
                const double v = static_cast<double>(img[c * 1024 + p]) / 255.0;
                dst[c * 1024 + p] = static_cast<T>((v - mean) * inv_std);
            }
        }
    }
    return {Tensor<T>::from_data(Shape{n, 3, 32, 32}, std::move(out)), std::move(labels)};
}

}  // namespace fpnet::data
