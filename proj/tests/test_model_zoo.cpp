#include <gtest/gtest.h>

#include <cstring>
#include <set>
#include <string>

#include "fpnet/model.hpp"

using fpnet::BaseNet;
using fpnet::CifarNet;
using fpnet::ModelSpec;
using fpnet::Shape;
using fpnet::Tensor;
using fpnet::index_t;

namespace {

ModelSpec spec_of(BaseNet base, const std::string& config, bool ablation = false) {
    ModelSpec s;
    s.base = base;
    s.config = config;
    s.ablation = ablation;
    return s;
}

index_t total_learnable(const std::string& base, const std::string& config,
                        bool ablation = false) {
    ModelSpec s = spec_of(fpnet::parse_base(base), config, ablation);
    CifarNet<float> net(s, 1);
    return fpnet::summarize(net).total_learnable;
}

}  // namespace

TEST(ModelZoo, BaselineTotals) {
    EXPECT_EQ(total_learnable("resnet20", "000"), 269722);
    EXPECT_EQ(total_learnable("resnet32", "000"), 464154);
    EXPECT_EQ(total_learnable("resnet44", "000"), 658586);
}

TEST(ModelZoo, FpSubstitutionTotals) {
    EXPECT_EQ(total_learnable("resnet32", "001"), 165786);
    EXPECT_EQ(total_learnable("resnet32", "001", true), 162330);
    // three substituted blocks, one depthwise bank of q*k^2*d_out = 1152 each
    EXPECT_EQ(total_learnable("resnet32", "001") - total_learnable("resnet32", "001", true),
              3456);
}

TEST(ModelZoo, DeeperSubstitutionCostsMore) {
    const index_t layer1 = total_learnable("resnet32", "100");
    const index_t layer2 = total_learnable("resnet32", "010");
    const index_t layer3 = total_learnable("resnet32", "001");
    EXPECT_GT(layer1, layer2);
    EXPECT_GT(layer2, layer3);
}

TEST(ModelZoo, ConfigValidation) {
    EXPECT_THROW(CifarNet<float>(spec_of(BaseNet::resnet20, "111"), 1), fpnet::ConfigError);
    EXPECT_THROW(CifarNet<float>(spec_of(BaseNet::resnet20, "01"), 1), fpnet::ConfigError);
    EXPECT_THROW(CifarNet<float>(spec_of(BaseNet::resnet20, "0120"), 1), fpnet::ConfigError);
    EXPECT_THROW(CifarNet<float>(spec_of(BaseNet::resnet20, "abc"), 1), fpnet::ConfigError);
    EXPECT_THROW(CifarNet<float>(spec_of(BaseNet::resnet50, "0101"), 1), fpnet::ConfigError);
    EXPECT_NO_THROW(CifarNet<float>(spec_of(BaseNet::resnet44, "101"), 1));
}

TEST(ModelZoo, ParseBaseRoundTrip) {
    for (const char* name : {"resnet20", "resnet32", "resnet44", "resnet50"}) {
        EXPECT_EQ(fpnet::base_name(fpnet::parse_base(name)), name);
    }
    EXPECT_THROW(fpnet::parse_base("resnet18"), fpnet::ConfigError);
}

TEST(ModelZoo, DepthMatchesName) {
    for (auto [name, depth] :
         {std::pair{"resnet20", 20}, std::pair{"resnet32", 32}, std::pair{"resnet44", 44}}) {
        ModelSpec s = spec_of(fpnet::parse_base(name), "000");
        CifarNet<float> net(s, 1);
        EXPECT_EQ(fpnet::summarize(net).depth, depth);
    }
}

TEST(ModelZoo, ParameterNamesAreUnique) {
    ModelSpec s = spec_of(BaseNet::resnet20, "010");
    CifarNet<double> net(s, 1);
    auto params = net.parameters();
    std::set<std::string> names;
    for (const auto& p : params) names.insert(p.name);
    EXPECT_EQ(names.size(), params.size());
}

TEST(ModelZoo, ForwardProducesLogits) {
    ModelSpec s = spec_of(BaseNet::resnet20, "001");
    CifarNet<float> net(s, 1);
    auto x = Tensor<float>::uniform(Shape{2, 3, 32, 32}, -1.0f, 1.0f, 9);
    auto y = net.forward(x, fpnet::Mode::train);
    ASSERT_EQ(y.shape().rank(), 2);
    EXPECT_EQ(y.shape()[0], 2);
    EXPECT_EQ(y.shape()[1], 10);
    for (float v : y.data()) EXPECT_TRUE(std::isfinite(v));

    CifarNet<float> abl(spec_of(BaseNet::resnet20, "001", true), 1);
    auto ya = abl.forward(x, fpnet::Mode::eval);
    EXPECT_EQ(ya.shape()[1], 10);
}

TEST(ModelZoo, AllZeroConfigMatchesBaseline) {
    ModelSpec s = spec_of(BaseNet::resnet20, "000");
    CifarNet<float> configured(s, 5);
    CifarNet<float> baseline = fpnet::build_cifar_resnet<float>(BaseNet::resnet20, 10, 5);
    auto pa = configured.parameters();
    auto pb = baseline.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i].name, pb[i].name);
        ASSERT_EQ(pa[i].value.numel(), pb[i].value.numel());
        EXPECT_EQ(std::memcmp(pa[i].value.data().data(), pb[i].value.data().data(),
                              sizeof(float) * pa[i].value.numel()),
                  0);
    }
    auto x = Tensor<float>::uniform(Shape{2, 3, 32, 32}, -1.0f, 1.0f, 31);
    auto ya = configured.forward(x, fpnet::Mode::eval);
    auto yb = baseline.forward(x, fpnet::Mode::eval);
    EXPECT_EQ(std::memcmp(ya.data().data(), yb.data().data(), sizeof(float) * ya.numel()), 0);
}

TEST(ModelZoo, QScalesFpLayerOnly) {
    ModelSpec q2 = spec_of(BaseNet::resnet20, "001");
    ModelSpec q4 = spec_of(BaseNet::resnet20, "001");
    q4.q = 4;
    CifarNet<float> a(q2, 1), b(q4, 1);
    EXPECT_GT(fpnet::summarize(b).total_learnable, fpnet::summarize(a).total_learnable);
}

TEST(ModelZoo, Resnet50CountingOnly) {
    ModelSpec baseline = spec_of(BaseNet::resnet50, "0000");
    auto s = fpnet::summarize_resnet50(baseline);
    EXPECT_EQ(s.total_learnable, 25557032);

    ModelSpec fp = spec_of(BaseNet::resnet50, "0101");
    fp.q = 1;
    auto sf = fpnet::summarize_resnet50(fp);
    EXPECT_EQ(sf.total_learnable, 16113704);

    EXPECT_EQ(fpnet::build_fp_resnet50_spec(1000).total_learnable, 16113704);

    EXPECT_THROW(fpnet::summarize_resnet50(spec_of(BaseNet::resnet20, "000")),
                 fpnet::ConfigError);
}
