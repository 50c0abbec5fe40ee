#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fpnet/ops.hpp"
#include "fpnet/random.hpp"
#include "fpnet/tensor.hpp"

namespace fpnet {

// A named tensor inside a model. learnable=false marks state buffers (BN
// running statistics) that get no gradient; decay marks participation in L2
// weight decay (conv/linear weights only).
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    bool learnable = true;
    bool decay = false;
};

struct Conv2dSpec {
    index_t in_channels = 0;
    index_t out_channels = 0;
    index_t kernel_size = 3;
    index_t stride = 1;
    index_t padding = 0;
    bool bias = false;

    void validate() const {
        if (in_channels < 1 || out_channels < 1) throw ConfigError("conv2d: channels must be >= 1");
        if (kernel_size < 1) throw ConfigError("conv2d: kernel size must be >= 1");
        if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
        if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
    }
};

struct DwsConvSpec {
    index_t channels = 0;
    index_t kernel_size = 3;

    // stride fixed to 1; same-padding requires odd k
    index_t padding() const { return (kernel_size - 1) / 2; }

    void validate() const {
        if (channels < 1) throw ConfigError("dws_conv: channels must be >= 1");
        if (kernel_size < 1) throw ConfigError("dws_conv: kernel size must be >= 1");
        if (kernel_size % 2 == 0) {
            throw ConfigError("dws_conv: even kernel size " + std::to_string(kernel_size) +
                              " has no symmetric same-padding");
        }
    }
};

struct BatchNormSpec {
    index_t channels = 0;
    bool affine = true;
    double eps = 1e-5;
    double momentum = 0.1;

    void validate() const {
        if (channels < 1) throw ConfigError("batch_norm: channels must be >= 1");
        if (eps <= 0.0) throw ConfigError("batch_norm: eps must be positive");
        if (momentum <= 0.0 || momentum >= 1.0) throw ConfigError("batch_norm: momentum in (0,1)");
    }
};

namespace layers {

// He fan-in initialization, shared by all conv-like weights.
template <typename T>
Tensor<T> he_normal(const Shape& shape, index_t fan_in, Rng& rng) {
    const T stddev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in)));
    return Tensor<T>::normal(shape, T(0), stddev, rng);
}

template <typename T>
class Conv2d {
public:
    Conv2d(const Conv2dSpec& spec, Rng& rng) : spec_(spec) {
        spec_.validate();
        const index_t fan_in = spec_.in_channels * spec_.kernel_size * spec_.kernel_size;
        weight_ = he_normal<T>(
            Shape{spec_.out_channels, spec_.in_channels, spec_.kernel_size, spec_.kernel_size},
            fan_in, rng);
        weight_.set_requires_grad(true);
        if (spec_.bias) {
            bias_ = Tensor<T>::zeros(Shape{spec_.out_channels});
            bias_.set_requires_grad(true);
        }
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        return ops::conv2d(x, weight_, bias_, spec_.stride, spec_.padding);
    }

    void collect(const std::string& prefix, std::vector<Parameter<T>>& out) {
        out.push_back({prefix + ".weight", weight_, true, true});
        if (bias_.defined()) out.push_back({prefix + ".bias", bias_, true, false});
    }

    const Conv2dSpec& spec() const { return spec_; }
    Tensor<T>& weight() { return weight_; }

private:
    Conv2dSpec spec_;
    Tensor<T> weight_;
    Tensor<T> bias_;
};

template <typename T>
class DwsConv2d {
public:
    DwsConv2d(const DwsConvSpec& spec, Rng& rng) : spec_(spec) {
        spec_.validate();
        const index_t fan_in = spec_.kernel_size * spec_.kernel_size;
        weight_ = he_normal<T>(Shape{spec_.channels, 1, spec_.kernel_size, spec_.kernel_size},
                               fan_in, rng);
        weight_.set_requires_grad(true);
    }

    Tensor<T> forward(const Tensor<T>& x) const { return ops::dws_conv2d(x, weight_); }

    void collect(const std::string& prefix, std::vector<Parameter<T>>& out) {
        out.push_back({prefix + ".weight", weight_, true, true});
    }

    const DwsConvSpec& spec() const { return spec_; }
    Tensor<T>& weight() { return weight_; }

private:
    DwsConvSpec spec_;
    Tensor<T> weight_;
};

template <typename T>
class BatchNorm2d {
public:
    explicit BatchNorm2d(const BatchNormSpec& spec) : spec_(spec) {
        spec_.validate();
        if (spec_.affine) {
            gamma_ = Tensor<T>::ones(Shape{spec_.channels});
            gamma_.set_requires_grad(true);
            beta_ = Tensor<T>::zeros(Shape{spec_.channels});
            beta_.set_requires_grad(true);
        }
        running_mean_ = Tensor<T>::zeros(Shape{spec_.channels});
        running_var_ = Tensor<T>::ones(Shape{spec_.channels});
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        return ops::batch_norm2d(x, gamma_, beta_, running_mean_, running_var_, spec_.eps,
                                 spec_.momentum, mode);
    }

    void collect(const std::string& prefix, std::vector<Parameter<T>>& out) {
        if (spec_.affine) {
            out.push_back({prefix + ".gamma", gamma_, true, false});
            out.push_back({prefix + ".beta", beta_, true, false});
        }
        out.push_back({prefix + ".running_mean", running_mean_, false, false});
        out.push_back({prefix + ".running_var", running_var_, false, false});
    }

    const BatchNormSpec& spec() const { return spec_; }

private:
    BatchNormSpec spec_;
    Tensor<T> gamma_;
    Tensor<T> beta_;
    Tensor<T> running_mean_;
    Tensor<T> running_var_;
};

template <typename T>
class Linear {
public:
    Linear(index_t in_features, index_t out_features, Rng& rng)
        : in_features_(in_features), out_features_(out_features) {
        if (in_features < 1 || out_features < 1) throw ConfigError("linear: features must be >= 1");
        weight_ = he_normal<T>(Shape{out_features, in_features}, in_features, rng);
        weight_.set_requires_grad(true);
        bias_ = Tensor<T>::zeros(Shape{out_features});
        bias_.set_requires_grad(true);
    }

    Tensor<T> forward(const Tensor<T>& x) const { return ops::linear(x, weight_, bias_); }

    void collect(const std::string& prefix, std::vector<Parameter<T>>& out) {
        out.push_back({prefix + ".weight", weight_, true, true});
        out.push_back({prefix + ".bias", bias_, true, false});
    }

private:
    index_t in_features_;
    index_t out_features_;
    Tensor<T> weight_;
    Tensor<T> bias_;
};

}  // namespace layers
}  // namespace fpnet
