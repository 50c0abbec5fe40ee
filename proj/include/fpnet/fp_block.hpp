#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fpnet/layers.hpp"
#include "fpnet/ops.hpp"

namespace fpnet {

// Hyperparameters of one FP-block. The block expands d_in channels to q*d_out
// with a 1x1 convolution, filters the expansion with a pair of depthwise
// convolutions whose outputs are multiplied elementwise, and recombines back
// to d_out channels with a second 1x1 convolution. ablation=true swaps the
// filter pair for a single depthwise filter followed by ReLU.
struct FpBlockSpec {
    index_t d_in = 0;
    index_t d_out = 0;
    index_t q = 1;
    index_t k = 3;
    bool downsample = false;
    bool ablation = false;

    index_t expanded() const { return q * d_out; }

    void validate() const {
        if (d_in < 1 || d_out < 1) throw ConfigError("fp_block: d_in/d_out must be >= 1");
        if (q < 1) throw ConfigError("fp_block: expansion factor q must be >= 1");
        if (k < 1) throw ConfigError("fp_block: kernel size must be >= 1");
        if (k % 2 == 0) {
            throw ConfigError("fp_block: even kernel size " + std::to_string(k) +
                              " is not supported (depthwise stage needs symmetric padding)");
        }
    }
};

// Learnable non-BN parameter count of an FP-block:
//   N = q*d_in*d_out + 2*q*k^2*d_out + q*d_out^2
// (expansion conv + the two depthwise filter banks + recombination conv).
// The ablation variant keeps a single depthwise bank.
inline index_t count_fp_block_params(const FpBlockSpec& spec) {
    spec.validate();
    const index_t dws_bank = spec.q * spec.k * spec.k * spec.d_out;
    const index_t n = spec.q * spec.d_in * spec.d_out + 2 * dws_bank +
                      spec.q * spec.d_out * spec.d_out;
    return spec.ablation ? n - dws_bank : n;
}

// BN parameters of the block (excluded from the formula above, included in
// whole-model totals): the expansion BN and the recombination BN are affine,
// the post-product BN is not.
inline index_t count_fp_block_bn_params(const FpBlockSpec& spec) {
    return 2 * spec.expanded() + 2 * spec.d_out;
}

template <typename T>
class FpBlock {
public:
    FpBlock(const FpBlockSpec& spec, Rng& rng)
        : spec_((spec.validate(), spec)),  // validate before any member uses the fields
          expand_(Conv2dSpec{spec.d_in, spec.expanded(), 1, 1, 0, false}, rng),
          bn1_(BatchNormSpec{spec.expanded(), true}),
          dws_a_(DwsConvSpec{spec.expanded(), spec.k}, rng),
          dws_b_(spec.ablation
                     ? nullptr
                     : std::make_unique<layers::DwsConv2d<T>>(DwsConvSpec{spec.expanded(), spec.k},
                                                              rng)),
          bn_prod_(spec.ablation ? nullptr
                                 : std::make_unique<layers::BatchNorm2d<T>>(
                                       BatchNormSpec{spec.expanded(), false})),
          recombine_(Conv2dSpec{spec.expanded(), spec.d_out, 1, 1, 0, false}, rng),
          bn2_(BatchNormSpec{spec.d_out, true}) {}

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        Tensor<T> h = ops::relu(bn1_.forward(expand_.forward(x), mode));
        Tensor<T> p;
        if (spec_.ablation) {
            p = ops::relu(dws_a_.forward(h));
        } else {
            p = bn_prod_->forward(ops::elementwise_mul(dws_a_.forward(h), dws_b_->forward(h)),
                                  mode);
        }
        Tensor<T> y = ops::relu(bn2_.forward(recombine_.forward(p), mode));
        if (spec_.downsample) y = ops::max_pool2d(y, 2, 2);
        return y;
    }

    // Product map right before the affine-free BN (the g(x) feature map).
    Tensor<T> pre_bn_product(const Tensor<T>& x, Mode mode) {
        Tensor<T> h = ops::relu(bn1_.forward(expand_.forward(x), mode));
        if (spec_.ablation) return ops::relu(dws_a_.forward(h));
        return ops::elementwise_mul(dws_a_.forward(h), dws_b_->forward(h));
    }

    void collect(const std::string& prefix, std::vector<Parameter<T>>& out) {
        expand_.collect(prefix + ".expand", out);
        bn1_.collect(prefix + ".bn1", out);
        dws_a_.collect(prefix + ".dws_a", out);
        if (dws_b_) dws_b_->collect(prefix + ".dws_b", out);
        if (bn_prod_) bn_prod_->collect(prefix + ".bn_prod", out);
        recombine_.collect(prefix + ".recombine", out);
        bn2_.collect(prefix + ".bn2", out);
    }

    const FpBlockSpec& spec() const { return spec_; }
    layers::DwsConv2d<T>& dws_a() { return dws_a_; }
    layers::DwsConv2d<T>& dws_b() { return *dws_b_; }

private:
    FpBlockSpec spec_;
    layers::Conv2d<T> expand_;
    layers::BatchNorm2d<T> bn1_;
    layers::DwsConv2d<T> dws_a_;
    std::unique_ptr<layers::DwsConv2d<T>> dws_b_;
    std::unique_ptr<layers::BatchNorm2d<T>> bn_prod_;
    layers::Conv2d<T> recombine_;
    layers::BatchNorm2d<T> bn2_;
};

// --- patch-level product and its Volterra form ------------------------------

// g(x) = (f_a . x)(f_b . x) for one flattened k x k patch.
template <typename T>
T feature_product_patch(const std::vector<T>& x, const std::vector<T>& f_a,
                        const std::vector<T>& f_b) {
    if (x.size() != f_a.size() || x.size() != f_b.size()) {
        throw ShapeError("feature_product_patch: patch and filters must have equal length");
    }
    T da = T(0), db = T(0);
    for (std::size_t i = 0; i < x.size(); ++i) da += f_a[i] * x[i];
    for (std::size_t i = 0; i < x.size(); ++i) db += f_b[i] * x[i];
    return da * db;
}

// Second-order Volterra kernel of the product: w[i][j] = f_a[i]*f_b[j], a
// k^2 x k^2 matrix stored row-major. k^4 weights derived from the 2k^2 filter
// weights.
template <typename T>
struct VolterraKernel {
    index_t n = 0;  // side length (= k^2)
    std::vector<T> w;

    T at(index_t i, index_t j) const { return w[static_cast<std::size_t>(i * n + j)]; }
};

template <typename T>
VolterraKernel<T> expand_volterra(const std::vector<T>& f_a, const std::vector<T>& f_b) {
    if (f_a.size() != f_b.size()) {
        throw ShapeError("expand_volterra: filters must have equal length");
    }
    VolterraKernel<T> kernel;
    kernel.n = static_cast<index_t>(f_a.size());
    kernel.w.resize(f_a.size() * f_a.size());
    for (std::size_t i = 0; i < f_a.size(); ++i) {
        for (std::size_t j = 0; j < f_b.size(); ++j) {
            kernel.w[i * f_a.size() + j] = f_a[i] * f_b[j];
        }
    }
    return kernel;
}

// sum_i sum_j w[i][j] * x[i] * x[j]
template <typename T>
T quadratic_form(const VolterraKernel<T>& kernel, const std::vector<T>& x) {
    if (static_cast<index_t>(x.size()) != kernel.n) {
        throw ShapeError("quadratic_form: x length does not match kernel side");
    }
    T acc = T(0);
    for (index_t i = 0; i < kernel.n; ++i) {
        for (index_t j = 0; j < kernel.n; ++j) {
            acc += kernel.at(i, j) * x[static_cast<std::size_t>(i)] *
                   x[static_cast<std::size_t>(j)];
        }
    }
    return acc;
}

}  // namespace fpnet
