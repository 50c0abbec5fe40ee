#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "fpnet/parallel.hpp"
#include "fpnet/tensor.hpp"

namespace fpnet {

enum class Mode { train, eval };

namespace ops {

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

// Reusable per-thread arenas for im2col/gemm staging; they only ever grow.
template <typename T>
inline std::vector<T>& scratch(int slot) {
    static thread_local std::vector<T> buffers[4];
    return buffers[slot];
}

inline index_t conv_out_extent(index_t in, index_t pad, index_t k, index_t stride) {
    return (in + 2 * pad - k) / stride + 1;
}

// col is (C*k*k) x (N*OH*OW), row-major. Column m = (n*OH + oh)*OW + ow.
template <typename T>
void im2col(const T* x, index_t N, index_t C, index_t H, index_t W, index_t k,
            index_t stride, index_t pad, index_t OH, index_t OW, T* col) {
    const index_t M = N * OH * OW;
    const index_t kk_count = C * k * k;
    parallel::parallel_for(kk_count, 4, [&](index_t kk0, index_t kk1) {
        for (index_t kk = kk0; kk < kk1; ++kk) {
            const index_t c = kk / (k * k);
            const index_t kh = (kk / k) % k;
            const index_t kw = kk % k;
            T* dst = col + kk * M;
            for (index_t n = 0; n < N; ++n) {
                const T* src = x + (n * C + c) * H * W;
                for (index_t oh = 0; oh < OH; ++oh) {
                    const index_t ih = oh * stride - pad + kh;
                    if (ih < 0 || ih >= H) {
                        std::fill(dst, dst + OW, T(0));
                        dst += OW;
                        continue;
                    }
                    for (index_t ow = 0; ow < OW; ++ow) {
                        const index_t iw = ow * stride - pad + kw;
                        *dst++ = (iw >= 0 && iw < W) ? src[ih * W + iw] : T(0);
                    }
                }
            }
        }
    });
}

// Scatter-add of col-shaped gradients back to the input layout. Each task owns
// one input channel, so the overlapping-patch additions stay race-free and in
// a fixed order.
template <typename T>
void col2im_add(const T* col, index_t N, index_t C, index_t H, index_t W, index_t k,
                index_t stride, index_t pad, index_t OH, index_t OW, T* gx) {
    const index_t M = N * OH * OW;
    parallel::parallel_for(C, 1, [&](index_t c0, index_t c1) {
        for (index_t c = c0; c < c1; ++c) {
            for (index_t kk = c * k * k; kk < (c + 1) * k * k; ++kk) {
                const index_t kh = (kk / k) % k;
                const index_t kw = kk % k;
                const T* src = col + kk * M;
                for (index_t n = 0; n < N; ++n) {
                    T* dst = gx + (n * C + c) * H * W;
                    for (index_t oh = 0; oh < OH; ++oh) {
                        const index_t ih = oh * stride - pad + kh;
                        if (ih < 0 || ih >= H) {
                            src += OW;
                            continue;
                        }
                        for (index_t ow = 0; ow < OW; ++ow, ++src) {
                            const index_t iw = ow * stride - pad + kw;
                            if (iw >= 0 && iw < W) dst[ih * W + iw] += *src;
                        }
                    }
                }
            }
        }
    });
}

// GEMM out = lhs * rhs over fixed 512-column chunks. Chunk boundaries are
// independent of the worker count, so serial and parallel runs agree bitwise.
template <typename T>
void gemm_chunked(const T* lhs, index_t rows, index_t inner, const T* rhs,
                  index_t cols, T* out) {
    constexpr index_t kChunk = 512;
    CMapRM<T> a(lhs, rows, inner);
    CMapRM<T> b(rhs, inner, cols);
    MapRM<T> c(out, rows, cols);
    parallel::parallel_for(cols, kChunk, [&](index_t c0, index_t c1) {
        c.middleCols(c0, c1 - c0).noalias() = a * b.middleCols(c0, c1 - c0);
    });
}

}  // namespace detail

// --- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
    std::vector<T> out(a.data().begin(), a.data().end());
    std::span<const T> bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), {a, b},
                                  [a, b](fpnet::detail::Node<T>& node) {
                                      std::span<const T> g = node.grad;
                                      for (const Tensor<T>& in : {a, b}) {
                                          if (!in.requires_grad()) continue;
                                          in.node()->ensure_grad();
                                          auto& dst = in.node()->grad;
                                          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
                                      }
                                  });
}

// out[i] = a[i] * b[i]; gradients: da = g . b, db = g . a
template <typename T>
Tensor<T> elementwise_mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("elementwise_mul: shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    }
    std::span<const T> ad = a.data();
    std::span<const T> bd = b.data();
    std::vector<T> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    return Tensor<T>::make_result(
        a.shape(), std::move(out), {a, b}, [a, b](fpnet::detail::Node<T>& node) {
            std::span<const T> g = node.grad;
            if (a.requires_grad()) {
                a.node()->ensure_grad();
                auto& ga = a.node()->grad;
                std::span<const T> bd2 = b.data();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bd2[i];
            }
            if (b.requires_grad()) {
                b.node()->ensure_grad();
                auto& gb = b.node()->grad;
                std::span<const T> ad2 = a.data();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * ad2[i];
            }
        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::span<const T> xd = x.data();
    std::vector<T> out(xd.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > T(0) ? xd[i] : T(0);
    return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                  [x](fpnet::detail::Node<T>& node) {
                                      if (!x.requires_grad()) return;
                                      x.node()->ensure_grad();
                                      std::span<const T> g = node.grad;
                                      std::span<const T> xd2 = x.data();
                                      auto& gx = x.node()->grad;
                                      // subgradient at exactly 0 is 0
                                      for (std::size_t i = 0; i < gx.size(); ++i) {
                                          if (xd2[i] > T(0)) gx[i] += g[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    double acc = 0.0;
    for (T v : x.data()) acc += static_cast<double>(v);
    return Tensor<T>::make_result(Shape{1}, {static_cast<T>(acc)}, {x},
                                  [x](fpnet::detail::Node<T>& node) {
                                      if (!x.requires_grad()) return;
                                      x.node()->ensure_grad();
                                      const T g = node.grad[0];
                                      for (T& v : x.node()->grad) v += g;
                                  });
}

// --- convolution -----------------------------------------------------------

// weight (OC, C, k, k); optional bias (OC). im2col + GEMM forward, with the
// same transform replayed in backward for the weight/input gradients.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 index_t stride, index_t pad) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (xs.rank() != 4 || ws.rank() != 4) {
        throw ShapeError("conv2d expects rank-4 input and weight");
    }
    const index_t N = xs.n(), C = xs.c(), H = xs.h(), W = xs.w();
    const index_t OC = ws[0], k = ws[2];
    if (ws[1] != C) {
        throw ShapeError("conv2d: input has " + std::to_string(C) + " channels, weight expects " +
                         std::to_string(ws[1]));
    }
    if (ws[3] != k) throw ShapeError("conv2d: non-square kernel");
    if (stride < 1 || pad < 0) throw ConfigError("conv2d: stride must be >= 1, pad >= 0");
    if (H + 2 * pad < k || W + 2 * pad < k) {
        throw ShapeError("conv2d: padded input smaller than kernel");
    }
    if (bias.defined() && (bias.shape() != Shape{OC})) {
        throw ShapeError("conv2d: bias shape must be (" + std::to_string(OC) + ")");
    }
    const index_t OH = detail::conv_out_extent(H, pad, k, stride);
    const index_t OW = detail::conv_out_extent(W, pad, k, stride);
    const index_t M = N * OH * OW;
    const index_t K = C * k * k;

    auto& col = detail::scratch<T>(0);
    col.resize(static_cast<std::size_t>(K * M));
    detail::im2col(x.data().data(), N, C, H, W, k, stride, pad, OH, OW, col.data());

    auto& out_rm = detail::scratch<T>(1);
    out_rm.resize(static_cast<std::size_t>(OC * M));
    detail::gemm_chunked(weight.data().data(), OC, K, col.data(), M, out_rm.data());

    std::vector<T> out(static_cast<std::size_t>(N * OC * OH * OW));
    const index_t P = OH * OW;
    for (index_t n = 0; n < N; ++n) {
        for (index_t oc = 0; oc < OC; ++oc) {
            std::memcpy(out.data() + (n * OC + oc) * P, out_rm.data() + oc * M + n * P,
                        sizeof(T) * static_cast<std::size_t>(P));
        }
    }
    if (bias.defined()) {
        std::span<const T> b = bias.data();
        for (index_t n = 0; n < N; ++n) {
            for (index_t oc = 0; oc < OC; ++oc) {
                T* dst = out.data() + (n * OC + oc) * P;
                for (index_t p = 0; p < P; ++p) dst[p] += b[oc];
            }
        }
    }

    auto backward_op = [x, weight, bias, N, C, H, W, OC, k, stride, pad, OH, OW,
                        M, K, P](fpnet::detail::Node<T>& node) {
        // gather output grad into (OC x M) row-major
        auto& go = detail::scratch<T>(2);
        go.resize(static_cast<std::size_t>(OC * M));
        for (index_t n = 0; n < N; ++n) {
            for (index_t oc = 0; oc < OC; ++oc) {
                std::memcpy(go.data() + oc * M + n * P, node.grad.data() + (n * OC + oc) * P,
                            sizeof(T) * static_cast<std::size_t>(P));
            }
        }
        if (weight.requires_grad()) {
            auto& col2 = detail::scratch<T>(0);
            col2.resize(static_cast<std::size_t>(K * M));
            detail::im2col(x.data().data(), N, C, H, W, k, stride, pad, OH, OW, col2.data());
            weight.node()->ensure_grad();
            detail::MapRM<T> gw(weight.node()->grad.data(), OC, K);
            detail::CMapRM<T> go_m(go.data(), OC, M);
            detail::CMapRM<T> col_m(col2.data(), K, M);
            gw.noalias() += go_m * col_m.transpose();
        }
        if (bias.defined() && bias.requires_grad()) {
            bias.node()->ensure_grad();
            auto& gb = bias.node()->grad;
            for (index_t oc = 0; oc < OC; ++oc) {
                double acc = 0.0;
                const T* row = go.data() + oc * M;
                for (index_t m = 0; m < M; ++m) acc += static_cast<double>(row[m]);
                gb[oc] += static_cast<T>(acc);
            }
        }
        if (x.requires_grad()) {
            auto& gcol = detail::scratch<T>(3);
            gcol.resize(static_cast<std::size_t>(K * M));
            constexpr index_t kChunk = 512;
            detail::CMapRM<T> w_m(weight.data().data(), OC, K);
            detail::CMapRM<T> go_m(go.data(), OC, M);
            detail::MapRM<T> gcol_m(gcol.data(), K, M);
            parallel::parallel_for(M, kChunk, [&](index_t c0, index_t c1) {
                gcol_m.middleCols(c0, c1 - c0).noalias() =
                    w_m.transpose() * go_m.middleCols(c0, c1 - c0);
            });
            x.node()->ensure_grad();
            detail::col2im_add(gcol.data(), N, C, H, W, k, stride, pad, OH, OW,
                               x.node()->grad.data());
        }
    };
    return Tensor<T>::make_result(Shape{N, OC, OH, OW}, std::move(out), {x, weight, bias},
                                  std::move(backward_op));
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, index_t stride, index_t pad) {
    return conv2d(x, weight, Tensor<T>{}, stride, pad);
}

// Depthwise convolution: weight (C, 1, k, k), one filter per channel, stride 1,
// same padding. Channel c of the output depends only on channel c of the input.
template <typename T>
Tensor<T> dws_conv2d(const Tensor<T>& x, const Tensor<T>& weight) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (xs.rank() != 4 || ws.rank() != 4 || ws[1] != 1 || ws[2] != ws[3]) {
        throw ShapeError("dws_conv2d expects input (N,C,H,W) and weight (C,1,k,k)");
    }
    const index_t N = xs.n(), C = xs.c(), H = xs.h(), W = xs.w();
    const index_t k = ws[2];
    if (ws[0] != C) {
        throw ShapeError("dws_conv2d: input has " + std::to_string(C) +
                         " channels, weight has " + std::to_string(ws[0]));
    }
    if (k % 2 == 0) {
        throw ConfigError("dws_conv2d: even kernel size " + std::to_string(k) +
                          " has no symmetric same-padding; use odd k");
    }
    const index_t pad = (k - 1) / 2;
    std::vector<T> out(static_cast<std::size_t>(N * C * H * W));
    const T* xp = x.data().data();
    const T* wp = weight.data().data();
    parallel::parallel_for(N * C, 1, [&](index_t t0, index_t t1) {
        for (index_t t = t0; t < t1; ++t) {
            const index_t c = t % C;
            const T* src = xp + t * H * W;
            const T* f = wp + c * k * k;
            T* dst = out.data() + t * H * W;
            for (index_t oh = 0; oh < H; ++oh) {
                for (index_t ow = 0; ow < W; ++ow) {
                    T acc = T(0);
                    for (index_t kh = 0; kh < k; ++kh) {
                        const index_t ih = oh - pad + kh;
                        if (ih < 0 || ih >= H) continue;
                        for (index_t kw = 0; kw < k; ++kw) {
                            const index_t iw = ow - pad + kw;
                            if (iw < 0 || iw >= W) continue;
                            acc += f[kh * k + kw] * src[ih * W + iw];
                        }
                    }
                    dst[oh * W + ow] = acc;
                }
            }
        }
    });
    auto backward_op = [x, weight, N, C, H, W, k, pad](fpnet::detail::Node<T>& node) {
        const T* g = node.grad.data();
        const T* xp2 = x.data().data();
        const T* wp2 = weight.data().data();
        if (weight.requires_grad()) {
            weight.node()->ensure_grad();
            T* gw = weight.node()->grad.data();
            parallel::parallel_for(C, 1, [&](index_t c0, index_t c1) {
                for (index_t c = c0; c < c1; ++c) {
                    for (index_t kh = 0; kh < k; ++kh) {
                        for (index_t kw = 0; kw < k; ++kw) {
                            double acc = 0.0;
                            for (index_t n = 0; n < N; ++n) {
                                const T* gp = g + (n * C + c) * H * W;
                                const T* sp = xp2 + (n * C + c) * H * W;
                                for (index_t oh = 0; oh < H; ++oh) {
                                    const index_t ih = oh - pad + kh;
                                    if (ih < 0 || ih >= H) continue;
                                    for (index_t ow = 0; ow < W; ++ow) {
                                        const index_t iw = ow - pad + kw;
                                        if (iw < 0 || iw >= W) continue;
                                        acc += static_cast<double>(gp[oh * W + ow]) *
                                               static_cast<double>(sp[ih * W + iw]);
                                    }
                                }
                            }
                            gw[(c * k + kh) * k + kw] += static_cast<T>(acc);
                        }
                    }
                }
            });
        }
        if (x.requires_grad()) {
            x.node()->ensure_grad();
            T* gx = x.node()->grad.data();
            parallel::parallel_for(N * C, 1, [&](index_t t0, index_t t1) {
                for (index_t t = t0; t < t1; ++t) {
                    const index_t c = t % C;
                    const T* gp = g + t * H * W;
                    const T* f = wp2 + c * k * k;
                    T* dst = gx + t * H * W;
                    for (index_t oh = 0; oh < H; ++oh) {
                        for (index_t ow = 0; ow < W; ++ow) {
                            const T gv = gp[oh * W + ow];
                            if (gv == T(0)) continue;
                            for (index_t kh = 0; kh < k; ++kh) {
                                const index_t ih = oh - pad + kh;
                                if (ih < 0 || ih >= H) continue;
                                for (index_t kw = 0; kw < k; ++kw) {
                                    const index_t iw = ow - pad + kw;
                                    if (iw < 0 || iw >= W) continue;
                                    dst[ih * W + iw] += gv * f[kh * k + kw];
                                }
                            }
                        }
                    }
                }
            });
        }
    };
    return Tensor<T>::make_result(Shape{N, C, H, W}, std::move(out), {x, weight},
                                  std::move(backward_op));
}

// --- normalization ---------------------------------------------------------

// Batch normalization over (N, H, W) per channel. gamma/beta are undefined
// tensors for affine=false. Train mode uses batch statistics (biased variance)
// and updates running stats in place with the usual exponential moving average
// (unbiased variance); eval mode normalizes with the running stats.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, double eps,
                       double momentum, Mode mode) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw ShapeError("batch_norm2d expects rank-4 input");
    const index_t N = xs.n(), C = xs.c(), H = xs.h(), W = xs.w();
    const index_t HW = H * W;
    const index_t m = N * HW;
    const bool affine = gamma.defined();
    if (running_mean.shape() != Shape{C} || running_var.shape() != Shape{C}) {
        throw ShapeError("batch_norm2d: running stats must have shape (C)");
    }
    if (affine && (gamma.shape() != Shape{C} || beta.shape() != Shape{C})) {
        throw ShapeError("batch_norm2d: affine parameters must have shape (C)");
    }
    if (mode == Mode::train && N < 2) {
        throw ContractError("batch_norm2d: training on a degenerate batch of size " +
                            std::to_string(N));
    }

    auto mean = std::make_shared<std::vector<double>>(C);
    auto invstd = std::make_shared<std::vector<double>>(C);
    const T* xp = x.data().data();

    if (mode == Mode::train) {
        for (index_t c = 0; c < C; ++c) {
            double sum = 0.0;
            for (index_t n = 0; n < N; ++n) {
                const T* p = xp + (n * C + c) * HW;
                for (index_t i = 0; i < HW; ++i) sum += static_cast<double>(p[i]);
            }
            const double mu = sum / static_cast<double>(m);
            double sq = 0.0;
            for (index_t n = 0; n < N; ++n) {
                const T* p = xp + (n * C + c) * HW;
                for (index_t i = 0; i < HW; ++i) {
                    const double d = static_cast<double>(p[i]) - mu;
                    sq += d * d;
                }
            }
            const double var = sq / static_cast<double>(m);
            (*mean)[c] = mu;
            (*invstd)[c] = 1.0 / std::sqrt(var + eps);
            // EMA update; running variance uses the unbiased estimate
            const double unbiased = (m > 1) ? sq / static_cast<double>(m - 1) : var;
            T* rm = running_mean.data_mut().data();
            T* rv = running_var.data_mut().data();
            rm[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(rm[c]) + momentum * mu);
            rv[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(rv[c]) +
                                   momentum * unbiased);
        }
    } else {
        const T* rm = running_mean.data().data();
        const T* rv = running_var.data().data();
        for (index_t c = 0; c < C; ++c) {
            (*mean)[c] = static_cast<double>(rm[c]);
            (*invstd)[c] = 1.0 / std::sqrt(static_cast<double>(rv[c]) + eps);
        }
    }

    // y = x * a + b with a = invstd*gamma, b = beta - mean*a (exact zero on
    // constant channels because the two products cancel bitwise)
    std::vector<T> scale(static_cast<std::size_t>(C)), shift(static_cast<std::size_t>(C));
    for (index_t c = 0; c < C; ++c) {
        const double gm = affine ? static_cast<double>(gamma.data()[c]) : 1.0;
        const double bt = affine ? static_cast<double>(beta.data()[c]) : 0.0;
        const double a = (*invstd)[c] * gm;
        scale[c] = static_cast<T>(a);
        shift[c] = static_cast<T>(bt - (*mean)[c] * a);
    }
    std::vector<T> out(static_cast<std::size_t>(N * C * HW));
    parallel::parallel_for(N * C, 1, [&](index_t t0, index_t t1) {
        for (index_t t = t0; t < t1; ++t) {
            const index_t c = t % C;
            const T a = scale[c], b = shift[c];
            const T* src = xp + t * HW;
            T* dst = out.data() + t * HW;
            for (index_t i = 0; i < HW; ++i) dst[i] = src[i] * a + b;
        }
    });

    auto backward_op = [x, gamma, beta, mean, invstd, affine, N, C, HW, m,
                        mode](fpnet::detail::Node<T>& node) {
        const T* g = node.grad.data();
        const T* xp2 = x.data().data();
        if (mode == Mode::eval) {
            // normalization is a fixed affine map in eval mode
            for (index_t c = 0; c < C; ++c) {
                const double gm = affine ? static_cast<double>(gamma.data()[c]) : 1.0;
                const double a = (*invstd)[c] * gm;
                double sum_g = 0.0, sum_gxh = 0.0;
                for (index_t n = 0; n < N; ++n) {
                    const T* gp = g + (n * C + c) * HW;
                    const T* sp = xp2 + (n * C + c) * HW;
                    for (index_t i = 0; i < HW; ++i) {
                        sum_g += static_cast<double>(gp[i]);
                        sum_gxh += static_cast<double>(gp[i]) *
                                   ((static_cast<double>(sp[i]) - (*mean)[c]) * (*invstd)[c]);
                    }
                }
                if (x.requires_grad()) {
                    x.node()->ensure_grad();
                    T* gx = x.node()->grad.data();
                    for (index_t n = 0; n < N; ++n) {
                        const T* gp = g + (n * C + c) * HW;
                        T* dst = gx + (n * C + c) * HW;
                        for (index_t i = 0; i < HW; ++i) {
                            dst[i] += static_cast<T>(static_cast<double>(gp[i]) * a);
                        }
                    }
                }
                if (affine && gamma.requires_grad()) {
                    gamma.node()->ensure_grad();
                    gamma.node()->grad[c] += static_cast<T>(sum_gxh);
                }
                if (affine && beta.requires_grad()) {
                    beta.node()->ensure_grad();
                    beta.node()->grad[c] += static_cast<T>(sum_g);
                }
            }
            return;
        }
        if (x.requires_grad()) x.node()->ensure_grad();
        if (affine && gamma.requires_grad()) gamma.node()->ensure_grad();
        if (affine && beta.requires_grad()) beta.node()->ensure_grad();
        parallel::parallel_for(C, 1, [&](index_t c0, index_t c1) {
            for (index_t c = c0; c < c1; ++c) {
                const double mu = (*mean)[c];
                const double is = (*invstd)[c];
                const double gm = affine ? static_cast<double>(gamma.data()[c]) : 1.0;
                double sum_g = 0.0, sum_gxh = 0.0;
                for (index_t n = 0; n < N; ++n) {
                    const T* gp = g + (n * C + c) * HW;
                    const T* sp = xp2 + (n * C + c) * HW;
                    for (index_t i = 0; i < HW; ++i) {
                        const double gi = static_cast<double>(gp[i]);
                        sum_g += gi;
                        sum_gxh += gi * ((static_cast<double>(sp[i]) - mu) * is);
                    }
                }
                if (x.requires_grad()) {
                    T* gx = x.node()->grad.data();
                    const double a = gm * is;
                    const double mean_g = sum_g / static_cast<double>(m);
                    const double mean_gxh = sum_gxh / static_cast<double>(m);
                    for (index_t n = 0; n < N; ++n) {
                        const T* gp = g + (n * C + c) * HW;
                        const T* sp = xp2 + (n * C + c) * HW;
                        T* dst = gx + (n * C + c) * HW;
                        for (index_t i = 0; i < HW; ++i) {
                            const double xh = (static_cast<double>(sp[i]) - mu) * is;
                            dst[i] += static_cast<T>(
                                a * (static_cast<double>(gp[i]) - mean_g - xh * mean_gxh));
                        }
                    }
                }
                if (affine && gamma.requires_grad()) gamma.node()->grad[c] += static_cast<T>(sum_gxh);
                if (affine && beta.requires_grad()) beta.node()->grad[c] += static_cast<T>(sum_g);
            }
        });
    };
    return Tensor<T>::make_result(Shape{N, C, H, W}, std::move(out), {x, gamma, beta},
                                  std::move(backward_op));
}

// --- pooling ---------------------------------------------------------------

// Gradient routes to the first (row-major) maximum of each window.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, index_t window, index_t stride) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw ShapeError("max_pool2d expects rank-4 input");
    if (window < 1 || stride < 1) throw ConfigError("max_pool2d: window/stride must be >= 1");
    const index_t N = xs.n(), C = xs.c(), H = xs.h(), W = xs.w();
    if (window > H || window > W) {
        throw ShapeError("max_pool2d: window " + std::to_string(window) +
                         " exceeds spatial extent " + xs.str());
    }
    const index_t OH = (H - window) / stride + 1;
    const index_t OW = (W - window) / stride + 1;
    std::vector<T> out(static_cast<std::size_t>(N * C * OH * OW));
    auto argmax = std::make_shared<std::vector<index_t>>(out.size());
    const T* xp = x.data().data();
    parallel::parallel_for(N * C, 1, [&](index_t t0, index_t t1) {
        for (index_t t = t0; t < t1; ++t) {
            const T* src = xp + t * H * W;
            T* dst = out.data() + t * OH * OW;
            index_t* am = argmax->data() + t * OH * OW;
            for (index_t oh = 0; oh < OH; ++oh) {
                for (index_t ow = 0; ow < OW; ++ow) {
                    index_t best = (oh * stride) * W + (ow * stride);
                    T best_v = src[best];
                    for (index_t kh = 0; kh < window; ++kh) {
                        for (index_t kw = 0; kw < window; ++kw) {
                            const index_t idx = (oh * stride + kh) * W + (ow * stride + kw);
                            if (src[idx] > best_v) {  // strict: ties keep the first
                                best_v = src[idx];
                                best = idx;
                            }
                        }
                    }
                    dst[oh * OW + ow] = best_v;
                    am[oh * OW + ow] = t * H * W + best;
                }
            }
        }
    });
    auto backward_op = [x, argmax, N, C, OH, OW](fpnet::detail::Node<T>& node) {
        if (!x.requires_grad()) return;
        x.node()->ensure_grad();
        T* gx = x.node()->grad.data();
        const T* g = node.grad.data();
        for (index_t i = 0; i < N * C * OH * OW; ++i) gx[(*argmax)[i]] += g[i];
    };
    return Tensor<T>::make_result(Shape{N, C, OH, OW}, std::move(out), {x},
                                  std::move(backward_op));
}

// (N, C, H, W) -> (N, C) spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw ShapeError("global_avg_pool expects rank-4 input");
    const index_t N = xs.n(), C = xs.c(), HW = xs.h() * xs.w();
    std::vector<T> out(static_cast<std::size_t>(N * C));
    const T* xp = x.data().data();
    for (index_t t = 0; t < N * C; ++t) {
        double acc = 0.0;
        const T* src = xp + t * HW;
        for (index_t i = 0; i < HW; ++i) acc += static_cast<double>(src[i]);
        out[static_cast<std::size_t>(t)] = static_cast<T>(acc / static_cast<double>(HW));
    }
    auto backward_op = [x, N, C, HW](fpnet::detail::Node<T>& node) {
        if (!x.requires_grad()) return;
        x.node()->ensure_grad();
        T* gx = x.node()->grad.data();
        for (index_t t = 0; t < N * C; ++t) {
            const T g = node.grad[static_cast<std::size_t>(t)] / static_cast<T>(HW);
            T* dst = gx + t * HW;
            for (index_t i = 0; i < HW; ++i) dst[i] += g;
        }
    };
    return Tensor<T>::make_result(Shape{N, C}, std::move(out), {x}, std::move(backward_op));
}

// --- dense head -------------------------------------------------------------

// x (N, C) * weight (K, C)^T + bias (K) -> (N, K)
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    if (xs.rank() != 2 || ws.rank() != 2) throw ShapeError("linear expects rank-2 input/weight");
    const index_t N = xs[0], C = xs[1], K = ws[0];
    if (ws[1] != C) {
        throw ShapeError("linear: input width " + std::to_string(C) + " vs weight input dim " +
                         std::to_string(ws[1]));
    }
    if (bias.defined() && bias.shape() != Shape{K}) throw ShapeError("linear: bias shape");
    std::vector<T> out(static_cast<std::size_t>(N * K));
    {
        detail::CMapRM<T> x_m(x.data().data(), N, C);
        detail::CMapRM<T> w_m(weight.data().data(), K, C);
        detail::MapRM<T> y_m(out.data(), N, K);
        y_m.noalias() = x_m * w_m.transpose();
    }
    if (bias.defined()) {
        std::span<const T> b = bias.data();
        for (index_t n = 0; n < N; ++n) {
            for (index_t j = 0; j < K; ++j) out[static_cast<std::size_t>(n * K + j)] += b[j];
        }
    }
    auto backward_op = [x, weight, bias, N, C, K](fpnet::detail::Node<T>& node) {
        detail::CMapRM<T> g_m(node.grad.data(), N, K);
        if (x.requires_grad()) {
            x.node()->ensure_grad();
            detail::MapRM<T> gx(x.node()->grad.data(), N, C);
            detail::CMapRM<T> w_m(weight.data().data(), K, C);
            gx.noalias() += g_m * w_m;
        }
        if (weight.requires_grad()) {
            weight.node()->ensure_grad();
            detail::MapRM<T> gw(weight.node()->grad.data(), K, C);
            detail::CMapRM<T> x_m(x.data().data(), N, C);
            gw.noalias() += g_m.transpose() * x_m;
        }
        if (bias.defined() && bias.requires_grad()) {
            bias.node()->ensure_grad();
            auto& gb = bias.node()->grad;
            for (index_t j = 0; j < K; ++j) {
                double acc = 0.0;
                for (index_t n = 0; n < N; ++n) {
                    acc += static_cast<double>(node.grad[static_cast<std::size_t>(n * K + j)]);
                }
                gb[j] += static_cast<T>(acc);
            }
        }
    };
    return Tensor<T>::make_result(Shape{N, K}, std::move(out), {x, weight, bias},
                                  std::move(backward_op));
}

// Mean over the batch of -log softmax(logits)[label], max-subtracted for
// stability. Gradient is (softmax - onehot) / N.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    const Shape& ls = logits.shape();
    if (ls.rank() != 2) throw ShapeError("softmax_cross_entropy expects rank-2 logits");
    const index_t N = ls[0], K = ls[1];
    if (static_cast<index_t>(labels.size()) != N) {
        throw ContractError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                            " labels for batch of " + std::to_string(N));
    }
    for (int y : labels) {
        if (y < 0 || y >= K) {
            throw ContractError("softmax_cross_entropy: label " + std::to_string(y) +
                                " out of range [0, " + std::to_string(K) + ")");
        }
    }
    const T* lp = logits.data().data();
    double total = 0.0;
    for (index_t n = 0; n < N; ++n) {
        const T* row = lp + n * K;
        double mx = static_cast<double>(row[0]);
        for (index_t j = 1; j < K; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double s = 0.0;
        for (index_t j = 0; j < K; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
        total += mx + std::log(s) - static_cast<double>(row[labels[static_cast<std::size_t>(n)]]);
    }
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    auto backward_op = [logits, labels_copy, N, K](fpnet::detail::Node<T>& node) {
        if (!logits.requires_grad()) return;
        logits.node()->ensure_grad();
        const T g0 = node.grad[0];
        const T* lp2 = logits.data().data();
        T* gl = logits.node()->grad.data();
        for (index_t n = 0; n < N; ++n) {
            const T* row = lp2 + n * K;
            double mx = static_cast<double>(row[0]);
            for (index_t j = 1; j < K; ++j) mx = std::max(mx, static_cast<double>(row[j]));
            double s = 0.0;
            for (index_t j = 0; j < K; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
            for (index_t j = 0; j < K; ++j) {
                const double p = std::exp(static_cast<double>(row[j]) - mx) / s;
                const double onehot = (j == (*labels_copy)[static_cast<std::size_t>(n)]) ? 1.0 : 0.0;
                gl[n * K + j] += static_cast<T>(static_cast<double>(g0) * (p - onehot) /
                                                static_cast<double>(N));
            }
        }
    };
    return Tensor<T>::make_result(Shape{1}, {static_cast<T>(total / static_cast<double>(N))},
                                  {logits}, std::move(backward_op));
}

// Parameter-free shortcut for dimension changes: stride-2 spatial subsample
// plus zero-padded channels, split evenly before and after.
template <typename T>
Tensor<T> pad_subsample_shortcut(const Tensor<T>& x, index_t out_channels) {
    const Shape& xs = x.shape();
    if (xs.rank() != 4) throw ShapeError("pad_subsample_shortcut expects rank-4 input");
    const index_t N = xs.n(), C = xs.c(), H = xs.h(), W = xs.w();
    if (out_channels < C) throw ShapeError("pad_subsample_shortcut: cannot drop channels");
    const index_t OH = (H + 1) / 2, OW = (W + 1) / 2;
    const index_t c0 = (out_channels - C) / 2;
    std::vector<T> out(static_cast<std::size_t>(N * out_channels * OH * OW), T(0));
    const T* xp = x.data().data();
    for (index_t n = 0; n < N; ++n) {
        for (index_t c = 0; c < C; ++c) {
            const T* src = xp + (n * C + c) * H * W;
            T* dst = out.data() + (n * out_channels + c0 + c) * OH * OW;
            for (index_t oh = 0; oh < OH; ++oh) {
                for (index_t ow = 0; ow < OW; ++ow) dst[oh * OW + ow] = src[(2 * oh) * W + 2 * ow];
            }
        }
    }
    auto backward_op = [x, N, C, H, W, OH, OW, out_channels, c0](fpnet::detail::Node<T>& node) {
        if (!x.requires_grad()) return;
        x.node()->ensure_grad();
        T* gx = x.node()->grad.data();
        const T* g = node.grad.data();
        for (index_t n = 0; n < N; ++n) {
            for (index_t c = 0; c < C; ++c) {
                const T* src = g + (n * out_channels + c0 + c) * OH * OW;
                T* dst = gx + (n * C + c) * H * W;
                for (index_t oh = 0; oh < OH; ++oh) {
                    for (index_t ow = 0; ow < OW; ++ow) dst[(2 * oh) * W + 2 * ow] += src[oh * OW + ow];
                }
            }
        }
    };
    return Tensor<T>::make_result(Shape{N, out_channels, OH, OW}, std::move(out), {x},
                                  std::move(backward_op));
}

}  // namespace ops
}  // namespace fpnet
