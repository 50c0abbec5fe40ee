#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "fpnet/ops.hpp"

using fpnet::Shape;
using fpnet::Tensor;
using fpnet::index_t;
namespace ops = fpnet::ops;

namespace {

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.numel() != b.numel()) return false;
    return std::memcmp(a.data().data(), b.data().data(), sizeof(T) * a.numel()) == 0;
}

}  // namespace

TEST(Conv2d, AllOnesBoxSum) {
    auto x = Tensor<double>::ones(Shape{1, 1, 3, 3});
    auto w = Tensor<double>::ones(Shape{1, 1, 3, 3});
    auto y = ops::conv2d(x, w, 1, 0);
    ASSERT_EQ(y.shape().h(), 1);
    ASSERT_EQ(y.shape().w(), 1);
    EXPECT_DOUBLE_EQ(y.data()[0], 9.0);
}

TEST(Conv2d, SamePaddingEdgeCounts) {
    // ones (x) conv ones 3x3, pad 1: center 9, edges 6, corners 4
    auto x = Tensor<double>::ones(Shape{1, 1, 5, 5});
    auto w = Tensor<double>::ones(Shape{1, 1, 3, 3});
    auto y = ops::conv2d(x, w, 1, 1);
    ASSERT_EQ(y.shape().h(), 5);
    EXPECT_DOUBLE_EQ(y.data()[2 * 5 + 2], 9.0);
    EXPECT_DOUBLE_EQ(y.data()[0], 4.0);
    EXPECT_DOUBLE_EQ(y.data()[2], 6.0);
}

TEST(Conv2d, IdentityKernelIsBitwiseIdentity) {
    auto x = Tensor<float>::uniform(Shape{2, 3, 8, 8}, -1.0f, 1.0f, 21);
    auto w = Tensor<float>::zeros(Shape{3, 3, 3, 3});
    // w[oc][ic][1][1] = (oc == ic)
    auto wd = w.data_mut();
    for (index_t oc = 0; oc < 3; ++oc) wd[((oc * 3 + oc) * 3 + 1) * 3 + 1] = 1.0f;
    auto y = ops::conv2d(x, w, 1, 1);
    EXPECT_TRUE(bitwise_equal(x, y));
}

TEST(Conv2d, BiasOnZeroWeights) {
    auto x = Tensor<double>::uniform(Shape{1, 2, 4, 4}, -1.0, 1.0, 3);
    auto w = Tensor<double>::zeros(Shape{5, 2, 1, 1});
    auto b = Tensor<double>::from_data(Shape{5}, {0.5, -1.0, 2.0, 0.0, 3.0});
    auto y = ops::conv2d(x, w, b, 1, 0);
    for (index_t c = 0; c < 5; ++c) {
        for (index_t p = 0; p < 16; ++p) EXPECT_DOUBLE_EQ(y.data()[c * 16 + p], b.data()[c]);
    }
}

TEST(Conv2d, StrideTwoShape) {
    auto x = Tensor<float>::ones(Shape{1, 4, 16, 16});
    auto w = Tensor<float>::ones(Shape{8, 4, 3, 3});
    auto y = ops::conv2d(x, w, 2, 1);
    EXPECT_EQ(y.shape().c(), 8);
    EXPECT_EQ(y.shape().h(), 8);
    EXPECT_EQ(y.shape().w(), 8);
}

TEST(Conv2d, ShapeMismatchThrows) {
    auto x = Tensor<float>::ones(Shape{1, 3, 8, 8});
    auto w = Tensor<float>::ones(Shape{4, 2, 3, 3});  // expects 2 input channels
    EXPECT_THROW(ops::conv2d(x, w, 1, 1), fpnet::ShapeError);
}

TEST(DwsConv2d, PerChannelIdentity) {
    auto x = Tensor<float>::uniform(Shape{2, 4, 6, 6}, -2.0f, 2.0f, 9);
    auto w = Tensor<float>::zeros(Shape{4, 1, 3, 3});
    auto wd = w.data_mut();
    for (index_t c = 0; c < 4; ++c) wd[(c * 9) + 4] = 1.0f;  // center tap
    auto y = ops::dws_conv2d(x, w);
    EXPECT_TRUE(bitwise_equal(x, y));
}

TEST(DwsConv2d, ChannelsStayIsolated) {
    // channel 0 filter = ones, channel 1 filter = zeros
    auto x = Tensor<double>::ones(Shape{1, 2, 5, 5});
    auto w = Tensor<double>::zeros(Shape{2, 1, 3, 3});
    auto wd = w.data_mut();
    for (index_t i = 0; i < 9; ++i) wd[i] = 1.0;
    auto y = ops::dws_conv2d(x, w);
    EXPECT_DOUBLE_EQ(y.data()[2 * 5 + 2], 9.0);  // channel 0 interior box sum
    for (index_t p = 0; p < 25; ++p) EXPECT_EQ(y.data()[25 + p], 0.0);
}

TEST(BatchNorm, ConstantChannelNormalizesToZero) {
    auto x = Tensor<double>::full(Shape{4, 2, 3, 3}, 7.25);
    auto gamma = Tensor<double>::ones(Shape{2});
    auto beta = Tensor<double>::zeros(Shape{2});
    auto rm = Tensor<double>::zeros(Shape{2});
    auto rv = Tensor<double>::ones(Shape{2});
    auto y = ops::batch_norm2d(x, gamma, beta, rm, rv, 1e-5, 0.1, fpnet::Mode::train);
    for (double v : y.data()) {
        EXPECT_EQ(v, 0.0);
        EXPECT_FALSE(std::isnan(v));
    }
}

TEST(BatchNorm, TrainModeStandardizes) {
    auto x = Tensor<double>::uniform(Shape{8, 3, 4, 4}, -3.0, 5.0, 17);
    auto gamma = Tensor<double>::ones(Shape{3});
    auto beta = Tensor<double>::zeros(Shape{3});
    auto rm = Tensor<double>::zeros(Shape{3});
    auto rv = Tensor<double>::ones(Shape{3});
    auto y = ops::batch_norm2d(x, gamma, beta, rm, rv, 1e-5, 0.1, fpnet::Mode::train);
    const index_t per_channel = 8 * 4 * 4;
    for (index_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (index_t n = 0; n < 8; ++n) {
            for (index_t p = 0; p < 16; ++p) mean += y.data()[(n * 3 + c) * 16 + p];
        }
        mean /= per_channel;
        for (index_t n = 0; n < 8; ++n) {
            for (index_t p = 0; p < 16; ++p) {
                const double d = y.data()[(n * 3 + c) * 16 + p] - mean;
                var += d * d;
            }
        }
        var /= per_channel;
        EXPECT_LE(std::abs(mean), 1e-4);
        EXPECT_LE(std::abs(var - 1.0), 1e-3);
    }
}

TEST(BatchNorm, AffineIdentityMatchesAffineFree) {
    auto x = Tensor<float>::uniform(Shape{4, 2, 5, 5}, -1.0f, 1.0f, 5);
    auto gamma = Tensor<float>::ones(Shape{2});
    auto beta = Tensor<float>::zeros(Shape{2});
    auto rm1 = Tensor<float>::zeros(Shape{2});
    auto rv1 = Tensor<float>::ones(Shape{2});
    auto rm2 = Tensor<float>::zeros(Shape{2});
    auto rv2 = Tensor<float>::ones(Shape{2});
    auto with_affine = ops::batch_norm2d(x, gamma, beta, rm1, rv1, 1e-5f, 0.1, fpnet::Mode::train);
    auto no_affine = ops::batch_norm2d(x, Tensor<float>{}, Tensor<float>{}, rm2, rv2, 1e-5f, 0.1,
                                       fpnet::Mode::train);
    EXPECT_TRUE(bitwise_equal(with_affine, no_affine));
    EXPECT_TRUE(bitwise_equal(rm1, rm2));
    EXPECT_TRUE(bitwise_equal(rv1, rv2));
}

TEST(BatchNorm, EvalUsesRunningStats) {
    auto x = Tensor<double>::full(Shape{1, 1, 2, 2}, 3.0);
    auto gamma = Tensor<double>::ones(Shape{1});
    auto beta = Tensor<double>::zeros(Shape{1});
    auto rm = Tensor<double>::from_data(Shape{1}, {1.0});
    auto rv = Tensor<double>::from_data(Shape{1}, {4.0});
    auto y = ops::batch_norm2d(x, gamma, beta, rm, rv, 0.0, 0.1, fpnet::Mode::eval);
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0);  // (3 - 1) / sqrt(4)
    EXPECT_DOUBLE_EQ(rm.data()[0], 1.0);                 // eval never touches running stats
}

TEST(BatchNorm, SingleElementBatchRejectedInTrain) {
    auto x = Tensor<double>::ones(Shape{1, 2, 1, 1});
    auto gamma = Tensor<double>::ones(Shape{2});
    auto beta = Tensor<double>::zeros(Shape{2});
    auto rm = Tensor<double>::zeros(Shape{2});
    auto rv = Tensor<double>::ones(Shape{2});
    EXPECT_THROW(ops::batch_norm2d(x, gamma, beta, rm, rv, 1e-5, 0.1, fpnet::Mode::train),
                 fpnet::ContractError);
}

TEST(Relu, ClampsAndIsIdempotent) {
    auto x = Tensor<double>::from_data(Shape{3}, {-1.0, 0.0, 2.0});
    auto y = ops::relu(x);
    EXPECT_DOUBLE_EQ(y.data()[0], 0.0);
    EXPECT_DOUBLE_EQ(y.data()[1], 0.0);
    EXPECT_DOUBLE_EQ(y.data()[2], 2.0);
    auto yy = ops::relu(y);
    EXPECT_TRUE(bitwise_equal(y, yy));
}

TEST(MaxPool, TwoByTwoWindow) {
    auto x = Tensor<double>::from_data(Shape{1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    auto y = ops::max_pool2d(x, 2, 2);
    ASSERT_EQ(y.numel(), 1);
    EXPECT_DOUBLE_EQ(y.data()[0], 4.0);
}

TEST(MaxPool, TieBreaksToFirstIndex) {
    auto x = Tensor<double>::ones(Shape{1, 1, 2, 2});
    x.set_requires_grad(true);
    auto loss = ops::sum(ops::max_pool2d(x, 2, 2));
    fpnet::backward(loss);
    EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
    EXPECT_DOUBLE_EQ(x.grad()[2], 0.0);
    EXPECT_DOUBLE_EQ(x.grad()[3], 0.0);
}

TEST(MaxPool, WindowBeyondExtentThrows) {
    auto x = Tensor<float>::ones(Shape{1, 1, 2, 2});
    EXPECT_THROW(ops::max_pool2d(x, 3, 3), fpnet::ShapeError);
}

TEST(GlobalAvgPool, OnesAverageToOne) {
    auto x = Tensor<double>::ones(Shape{1, 2, 4, 4});
    auto y = ops::global_avg_pool(x);
    ASSERT_EQ(y.shape().rank(), 2);
    ASSERT_EQ(y.numel(), 2);
    EXPECT_DOUBLE_EQ(y.data()[0], 1.0);
    EXPECT_DOUBLE_EQ(y.data()[1], 1.0);
}

TEST(GlobalAvgPool, SinglePixelIsIdentity) {
    auto x = Tensor<double>::from_data(Shape{1, 3, 1, 1}, {4.0, -2.0, 0.5});
    auto y = ops::global_avg_pool(x);
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Linear, IdentityWeightPassesThrough) {
    auto x = Tensor<double>::uniform(Shape{2, 3}, -1.0, 1.0, 13);
    auto w = Tensor<double>::zeros(Shape{3, 3});
    auto wd = w.data_mut();
    for (index_t i = 0; i < 3; ++i) wd[i * 3 + i] = 1.0;
    auto b = Tensor<double>::zeros(Shape{3});
    auto y = ops::linear(x, w, b);
    for (index_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Linear, ZeroWeightGivesBiasRows) {
    auto x = Tensor<double>::uniform(Shape{2, 4}, -1.0, 1.0, 13);
    auto w = Tensor<double>::zeros(Shape{3, 4});
    auto b = Tensor<double>::from_data(Shape{3}, {1.0, -2.0, 0.25});
    auto y = ops::linear(x, w, b);
    for (index_t n = 0; n < 2; ++n) {
        for (index_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(y.data()[n * 3 + k], b.data()[k]);
    }
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
    auto logits = Tensor<double>::zeros(Shape{4, 10});
    auto loss = ops::softmax_cross_entropy(logits, std::vector<int>{0, 3, 7, 9});
    EXPECT_NEAR(loss.data()[0], std::log(10.0), 1e-12);
}

TEST(CrossEntropy, ConfidentCorrectLogitGivesNearZero) {
    auto logits = Tensor<double>::zeros(Shape{1, 10});
    logits.data_mut()[4] = 1000.0;
    auto loss = ops::softmax_cross_entropy(logits, std::vector<int>{4});
    EXPECT_LE(loss.data()[0], 1e-8);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHot) {
    auto logits = Tensor<double>::zeros(Shape{1, 2});
    logits.set_requires_grad(true);
    auto loss = ops::softmax_cross_entropy(logits, std::vector<int>{0});
    fpnet::backward(loss);
    EXPECT_NEAR(logits.grad()[0], -0.5, 1e-12);
    EXPECT_NEAR(logits.grad()[1], 0.5, 1e-12);
}

TEST(CrossEntropy, BadLabelThrows) {
    auto logits = Tensor<double>::zeros(Shape{2, 10});
    EXPECT_THROW(ops::softmax_cross_entropy(logits, std::vector<int>{0, 10}),
                 fpnet::ContractError);
    EXPECT_THROW(ops::softmax_cross_entropy(logits, std::vector<int>{0}), fpnet::ContractError);
}

TEST(Shortcut, SubsamplesAndPadsChannelsEvenly) {
    auto x = Tensor<double>::uniform(Shape{1, 2, 4, 4}, -1.0, 1.0, 19);
    auto y = ops::pad_subsample_shortcut(x, 4);
    ASSERT_EQ(y.shape().c(), 4);
    ASSERT_EQ(y.shape().h(), 2);
    ASSERT_EQ(y.shape().w(), 2);
    // zero pad split (4-2)/2 = 1 channel before and after
    for (index_t p = 0; p < 4; ++p) {
        EXPECT_EQ(y.data()[p], 0.0);
        EXPECT_EQ(y.data()[3 * 4 + p], 0.0);
    }
    // data channels take every other pixel
    for (index_t c = 0; c < 2; ++c) {
        for (index_t oh = 0; oh < 2; ++oh) {
            for (index_t ow = 0; ow < 2; ++ow) {
                EXPECT_EQ(y.data()[(c + 1) * 4 + oh * 2 + ow],
                          x.data()[c * 16 + (2 * oh) * 4 + 2 * ow]);
            }
        }
    }
    EXPECT_THROW(ops::pad_subsample_shortcut(x, 1), fpnet::ShapeError);
}
