#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fpnet/ops.hpp"
#include "fpnet/tensor.hpp"

// Independent reference implementations used only by tests and the verify
// suites. Everything here is written as plain nested loops on purpose: these
// are the oracles the fast paths are judged against, so they share no code
// with ops.hpp.
namespace fpnet::oracles {

template <typename T>
std::vector<T> conv2d_naive(std::span<const T> x, index_t N, index_t C, index_t H, index_t W,
                            std::span<const T> w, index_t OC, index_t k, index_t stride,
                            index_t pad, const T* bias) {
    const index_t OH = (H + 2 * pad - k) / stride + 1;
    const index_t OW = (W + 2 * pad - k) / stride + 1;
    std::vector<T> out(static_cast<std::size_t>(N * OC * OH * OW), T(0));
    for (index_t n = 0; n < N; ++n) {
        for (index_t oc = 0; oc < OC; ++oc) {
            for (index_t oh = 0; oh < OH; ++oh) {
                for (index_t ow = 0; ow < OW; ++ow) {
                    T acc = bias ? bias[oc] : T(0);
                    for (index_t c = 0; c < C; ++c) {
                        for (index_t kh = 0; kh < k; ++kh) {
                            for (index_t kw = 0; kw < k; ++kw) {
                                const index_t ih = oh * stride - pad + kh;
                                const index_t iw = ow * stride - pad + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += w[((oc * C + c) * k + kh) * k + kw] *
                                       x[((n * C + c) * H + ih) * W + iw];
                            }
                        }
                    }
                    out[((n * OC + oc) * OH + oh) * OW + ow] = acc;
                }
            }
        }
    }
    return out;
}

// Grouped naive convolution with groups == channels, stride 1, same padding.
template <typename T>
std::vector<T> dws_conv2d_naive(std::span<const T> x, index_t N, index_t C, index_t H, index_t W,
                                std::span<const T> w, index_t k) {
    const index_t pad = (k - 1) / 2;
    std::vector<T> out(static_cast<std::size_t>(N * C * H * W), T(0));
    for (index_t n = 0; n < N; ++n) {
        for (index_t c = 0; c < C; ++c) {
            for (index_t oh = 0; oh < H; ++oh) {
                for (index_t ow = 0; ow < W; ++ow) {
                    T acc = T(0);
                    for (index_t kh = 0; kh < k; ++kh) {
                        for (index_t kw = 0; kw < k; ++kw) {
                            const index_t ih = oh - pad + kh;
                            const index_t iw = ow - pad + kw;
                            if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                            acc += w[(c * k + kh) * k + kw] * x[((n * C + c) * H + ih) * W + iw];
                        }
                    }
                    out[((n * C + c) * H + oh) * W + ow] = acc;
                }
            }
        }
    }
    return out;
}

template <typename T>
std::vector<T> max_pool2d_naive(std::span<const T> x, index_t N, index_t C, index_t H, index_t W,
                                index_t window, index_t stride) {
    const index_t OH = (H - window) / stride + 1;
    const index_t OW = (W - window) / stride + 1;
    std::vector<T> out(static_cast<std::size_t>(N * C * OH * OW));
    for (index_t n = 0; n < N; ++n) {
        for (index_t c = 0; c < C; ++c) {
            for (index_t oh = 0; oh < OH; ++oh) {
                for (index_t ow = 0; ow < OW; ++ow) {
                    T best = x[((n * C + c) * H + oh * stride) * W + ow * stride];
                    for (index_t kh = 0; kh < window; ++kh) {
                        for (index_t kw = 0; kw < window; ++kw) {
                            best = std::max(best, x[((n * C + c) * H + oh * stride + kh) * W +
                                                    ow * stride + kw]);
                        }
                    }
                    out[((n * C + c) * OH + oh) * OW + ow] = best;
                }
            }
        }
    }
    return out;
}

// Brute-force double sum over all pixel pairs: sum_ij f_a[i] f_b[j] x[i] x[j].
template <typename T>
T volterra_direct(const std::vector<T>& f_a, const std::vector<T>& f_b, const std::vector<T>& x) {
    T acc = T(0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < x.size(); ++j) {
            acc += f_a[i] * f_b[j] * x[i] * x[j];
        }
    }
    return acc;
}

// Fixed random positive weights so a scalar reduction of a vector output
// cannot hide sign or permutation errors the way a plain sum could.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::uint64_t seed) {
    Tensor<T> w = Tensor<T>::uniform(x.shape(), T(0.25), T(1), seed);
    return ops::sum(ops::elementwise_mul(x, w));
}

// Central finite-difference gradient check. fn must recompute the scalar loss
// from the current leaf values on every call. Returns the worst relative error
// |analytic - numeric| / max(1, |analytic|, |numeric|) over all leaf elements.
template <typename T>
double grad_check(const std::function<Tensor<T>()>& fn, const std::vector<Tensor<T>*>& leaves,
                  double eps) {
    for (Tensor<T>* leaf : leaves) {
        leaf->set_requires_grad(true);
        leaf->ensure_grad();
        leaf->zero_grad();
    }
    Tensor<T> loss = fn();
    backward(loss);
    double max_rel = 0.0;
    for (Tensor<T>* leaf : leaves) {
        std::vector<T> analytic(leaf->grad().begin(), leaf->grad().end());
        std::span<T> values = leaf->data_mut();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const T saved = values[i];
            double fp, fm;
            {
                autograd::NoGradGuard no_grad;
                values[i] = saved + static_cast<T>(eps);
                fp = static_cast<double>(fn().item());
                values[i] = saved - static_cast<T>(eps);
                fm = static_cast<double>(fn().item());
            }
            values[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = static_cast<double>(analytic[i]);
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace fpnet::oracles
