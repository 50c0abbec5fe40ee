#include "fpnet/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "fpnet/data.hpp"
#include "fpnet/fp_block.hpp"
#include "fpnet/model.hpp"
#include "fpnet/oracles.hpp"
#include "fpnet/ops.hpp"
#include "fpnet/random.hpp"

namespace fpnet::verify {
namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

std::string g3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::vector<double> normals(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal(0.0, 1.0);
    return v;
}

constexpr std::array<index_t, 3> kOddKernels{1, 3, 5};

// --- volterra ---------------------------------------------------------------

CheckResult check_kernel_equivalence(std::uint64_t seed) {
    double worst = 0.0;
    bool entries_exact = true;
    for (int t = 0; t < 1000; ++t) {
        Rng rng(derive_seed(seed, rng_stream::kVerify, 1, static_cast<std::uint64_t>(t)));
        const index_t k = kOddKernels[t % 3];
        const std::size_t n = static_cast<std::size_t>(k * k);
        std::vector<double> fa = normals(rng, n), fb = normals(rng, n), x = normals(rng, n);
        const double direct = oracles::volterra_direct(fa, fb, x);
        const double prod = feature_product_patch(x, fa, fb);
        const VolterraKernel<double> kern = expand_volterra(fa, fb);
        const double qf = quadratic_form(kern, x);
        worst = std::max({worst, rel_err(prod, direct), rel_err(qf, direct)});
        for (std::size_t i = 0; i < n && entries_exact; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (kern.at(static_cast<index_t>(i), static_cast<index_t>(j)) != fa[i] * fb[j]) {
                    entries_exact = false;
                    break;
                }
            }
        }
    }
    const bool pass = entries_exact && worst <= 1e-9;
    return {"volterra.kernel-equivalence",
            pass,
            "1000 triples, k in {1,3,5}: product form vs k^4 kernel vs double sum, max rel err " +
                g3(worst) + " (tol 1e-9), entries " + (entries_exact ? "exact" : "MISMATCH")};
}

CheckResult check_orthogonal_suppression(std::uint64_t seed) {
    int exact = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, rng_stream::kVerify, 2, static_cast<std::uint64_t>(t)));
        const index_t k = (t % 2 == 0) ? 3 : 5;
        const std::size_t n = static_cast<std::size_t>(k * k);
        std::vector<double> fa(n), fb(n);
        for (double& v : fa) {
            do {
                v = rng.normal(0.0, 1.0);
            } while (std::abs(v) < 1e-3);
        }
        for (double& v : fb) v = rng.normal(0.0, 1.0);
        const std::size_t i = static_cast<std::size_t>(rng.below(n));
        std::size_t j = i;
        while (j == i) j = static_cast<std::size_t>(rng.below(n));
        // x has exactly two nonzero pixels chosen so that f_a . x cancels
        // bitwise: fa[i]*fa[j] + fa[j]*(-fa[i]) is exactly zero in IEEE.
        std::vector<double> x(n, 0.0);
        x[i] = fa[j];
        x[j] = -fa[i];
        const double g_patch = feature_product_patch(x, fa, fb);

        // Same construction through the actual conv ops: center pixel of the
        // depthwise pair product over a single k x k input.
        Tensor<double> xt = Tensor<double>::from_data(Shape{1, 1, k, k}, x);
        Tensor<double> wa = Tensor<double>::from_data(Shape{1, 1, k, k}, fa);
        Tensor<double> wb = Tensor<double>::from_data(Shape{1, 1, k, k}, fb);
        autograd::NoGradGuard no_grad;
        Tensor<double> p = ops::elementwise_mul(ops::dws_conv2d(xt, wa), ops::dws_conv2d(xt, wb));
        const double g_conv = p.data()[static_cast<std::size_t>((k / 2) * k + k / 2)];
        if (g_patch == 0.0 && g_conv == 0.0) ++exact;
    }
    return {"volterra.orthogonal-suppression", exact == trials,
            std::to_string(exact) + "/" + std::to_string(trials) +
                " orthogonal inputs suppressed to exactly 0.0 (patch and conv paths, no "
                "tolerance)"};
}

CheckResult check_kernel_symmetry(std::uint64_t seed) {
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        Rng rng(derive_seed(seed, rng_stream::kVerify, 3, static_cast<std::uint64_t>(t)));
        const index_t k = kOddKernels[t % 3];
        const std::size_t n = static_cast<std::size_t>(k * k);
        std::vector<double> fa = normals(rng, n), fb = normals(rng, n), x = normals(rng, n);
        const VolterraKernel<double> kern = expand_volterra(fa, fb);
        VolterraKernel<double> transposed = kern;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                transposed.w[i * n + j] = kern.w[j * n + i];
            }
        }
        // x^T W x == x^T W^T x: only the symmetric part of the kernel acts.
        worst = std::max(worst, rel_err(quadratic_form(kern, x), quadratic_form(transposed, x)));
    }
    return {"volterra.kernel-symmetry", worst <= 1e-12,
            "200 trials: x^T W x vs x^T W^T x, max rel err " + g3(worst) + " (tol 1e-12)"};
}

CheckResult check_bilinearity(std::uint64_t seed) {
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        Rng rng(derive_seed(seed, rng_stream::kVerify, 4, static_cast<std::uint64_t>(t)));
        const index_t k = kOddKernels[t % 3];
        const std::size_t n = static_cast<std::size_t>(k * k);
        std::vector<double> fa = normals(rng, n), fb = normals(rng, n), x = normals(rng, n);
        const double alpha = rng.uniform(-2.0, 2.0);
        const double beta = rng.uniform(-2.0, 2.0);
        std::vector<double> fa2 = fa, fb2 = fb;
        for (double& v : fa2) v *= alpha;
        for (double& v : fb2) v *= beta;
        worst = std::max(worst, rel_err(feature_product_patch(x, fa2, fb2),
                                        alpha * beta * feature_product_patch(x, fa, fb)));
    }
    return {"volterra.bilinearity", worst <= 1e-12,
            "200 trials: g(x; a*f_a, b*f_b) vs a*b*g(x; f_a, f_b), max rel err " + g3(worst) +
                " (tol 1e-12)"};
}

// --- params -----------------------------------------------------------------

CheckResult check_eq4_enumeration(std::uint64_t seed) {
    int matched = 0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, rng_stream::kVerify, 10, static_cast<std::uint64_t>(t)));
        FpBlockSpec spec;
        spec.q = 1 + static_cast<index_t>(rng.below(4));
        spec.k = kOddKernels[rng.below(3)];
        spec.d_in = 8 + static_cast<index_t>(rng.below(121));
        spec.d_out = 8 + static_cast<index_t>(rng.below(121));
        spec.downsample = rng.below(2) == 1;
        spec.ablation = t % 2 == 1;
        Rng init(derive_seed(seed, rng_stream::kVerify, 11, static_cast<std::uint64_t>(t)));
        FpBlock<float> blk(spec, init);
        std::vector<Parameter<float>> params;
        blk.collect("blk", params);
        index_t conv = 0, bn = 0;
        for (const auto& p : params) {
            if (!p.learnable) continue;
            if (p.name.find(".bn") != std::string::npos) {
                bn += p.value.numel();
            } else {
                conv += p.value.numel();
            }
        }
        if (conv == count_fp_block_params(spec) && bn == count_fp_block_bn_params(spec)) ++matched;
    }
    return {"params.closed-form-vs-enumeration", matched == trials,
            std::to_string(matched) + "/" + std::to_string(trials) +
                " random specs (q 1..4, k {1,3,5}, d 8..128, both variants): exact match"};
}

CheckResult check_table_totals(std::uint64_t seed) {
    std::string detail;
    bool pass = true;
    auto require = [&](bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what + " FAILED";
        }
    };

    ModelSpec fp32;
    fp32.base = BaseNet::resnet32;
    fp32.config = "001";
    CifarNet<float> fp_net(fp32, seed);
    const index_t fp_total = summarize(fp_net).total_learnable;

    ModelSpec abl = fp32;
    abl.ablation = true;
    CifarNet<float> abl_net(abl, seed);
    const index_t abl_total = summarize(abl_net).total_learnable;

    require(fp_total == 165786 && (fp_total + 500) / 1000 == 166, "fp-resnet-32[001] != 166K");
    require(abl_total == 162330 && (abl_total + 500) / 1000 == 162, "ablation != 162K");
    require(fp_total - abl_total == 3456, "fp/ablation difference != 3456");

    const std::array<std::pair<BaseNet, index_t>, 3> bases{
        std::pair{BaseNet::resnet20, index_t{269722}},
        std::pair{BaseNet::resnet32, index_t{464154}},
        std::pair{BaseNet::resnet44, index_t{658586}},
    };
    for (const auto& [base, expected] : bases) {
        ModelSpec baseline;
        baseline.base = base;
        CifarNet<float> net(baseline, seed);
        const index_t total = summarize(net).total_learnable;
        require(total == expected, base_name(base) + " baseline total");
        const index_t rounded_k = (total + 500) / 1000;
        require(rounded_k >= 270 && rounded_k <= 660, base_name(base) + " outside 270K..660K");
    }
    ModelSpec r20_spec;
    r20_spec.base = BaseNet::resnet20;
    CifarNet<float> r20(r20_spec, seed);
    require(std::abs(summarize(r20).total_learnable - 275000) <= 10000,
            "resnet20 outside 275K +- 10K");

    ModelSpec r50;
    r50.base = BaseNet::resnet50;
    require(summarize_resnet50(r50).total_learnable == 25557032, "resnet50 baseline != 25557032");
    const index_t fp50_total = build_fp_resnet50_spec().total_learnable;
    require(fp50_total == 16113704, "fp-resnet50 != 16113704");
    require(std::abs(fp50_total - 16000000) <= 500000, "fp-resnet50 outside 16M +- 0.5M");

    if (pass) {
        detail = "fp-resnet-32[001]=" + std::to_string(fp_total) +
                 " (166K), ablation=" + std::to_string(abl_total) +
                 " (162K), diff=3456; baselines 269722/464154/658586; fp-resnet-50=" +
                 std::to_string(fp50_total);
    }
    return {"params.reference-totals", pass, detail};
}

CheckResult check_identity_config(std::uint64_t seed) {
    ModelSpec zeros;
    zeros.base = BaseNet::resnet32;
    zeros.config = "000";
    CifarNet<float> configured(zeros, seed);
    CifarNet<float> baseline = build_cifar_resnet<float>(BaseNet::resnet32, 10, seed);

    const auto& a = configured.parameters();
    const auto& b = baseline.parameters();
    bool same_params = a.size() == b.size();
    if (same_params) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const auto av = a[i].value.data();
            const auto bv = b[i].value.data();
            if (a[i].name != b[i].name || av.size() != bv.size() ||
                std::memcmp(av.data(), bv.data(), av.size() * sizeof(float)) != 0) {
                same_params = false;
                break;
            }
        }
    }

    autograd::NoGradGuard no_grad;
    Tensor<float> x = Tensor<float>::normal(Shape{2, 3, 32, 32}, 0.0f, 1.0f,
                                            derive_seed(seed, rng_stream::kVerify, 20, 0));
    const auto ya = configured.forward(x, Mode::eval).data();
    const auto yb = baseline.forward(x, Mode::eval).data();
    const bool same_out = ya.size() == yb.size() &&
                          std::memcmp(ya.data(), yb.data(), ya.size() * sizeof(float)) == 0;
    return {"params.all-zero-config-identity", same_params && same_out,
            std::string("config 000 vs baseline: parameters ") +
                (same_params ? "identical" : "DIFFER") + ", eval forward " +
                (same_out ? "bitwise equal" : "DIFFERS")};
}

CheckResult check_config_isolation(std::uint64_t seed) {
    const std::array<std::string, 5> prefixes{"stem.", "layer1.", "layer2.", "layer3.", "fc."};
    auto per_prefix = [&](const std::string& cfg) {
        ModelSpec spec;
        spec.base = BaseNet::resnet32;
        spec.config = cfg;
        CifarNet<float> net(spec, seed);
        std::array<index_t, 5> totals{};
        for (std::size_t i = 0; i < prefixes.size(); ++i) {
            totals[i] = count_learnable(net.parameters(), prefixes[i]);
        }
        return totals;
    };
    const auto base = per_prefix("000");
    bool pass = true;
    std::string detail;
    index_t grand[3] = {0, 0, 0};
    const std::array<std::string, 3> configs{"100", "010", "001"};
    for (std::size_t ci = 0; ci < configs.size(); ++ci) {
        const auto totals = per_prefix(configs[ci]);
        for (std::size_t p = 0; p < prefixes.size(); ++p) {
            const bool is_flagged = p == ci + 1;  // layer{ci+1} prefix sits at index ci+1
            if (is_flagged ? totals[p] == base[p] : totals[p] != base[p]) {
                pass = false;
                detail += "config " + configs[ci] + " touched " + prefixes[p] + "; ";
            }
        }
        for (std::size_t p = 0; p < prefixes.size(); ++p) grand[ci] += totals[p];
    }
    if (grand[0] <= grand[1] || grand[1] <= grand[2]) {
        pass = false;
        detail += "totals not strictly decreasing across 100/010/001";
    }
    if (pass) {
        detail = "single-bit configs touch only their layer; totals " + std::to_string(grand[0]) +
                 " > " + std::to_string(grand[1]) + " > " + std::to_string(grand[2]);
    }
    return {"params.config-isolation", pass, detail};
}

// --- gradcheck --------------------------------------------------------------

constexpr double kGradTol = 1e-6;
constexpr double kGradEps = 1e-5;

CheckResult grad_result(const std::string& name, int instances,
                        const std::function<double(int)>& run_instance) {
    double worst = 0.0;
    for (int t = 0; t < instances; ++t) worst = std::max(worst, run_instance(t));
    return {name, worst <= kGradTol,
            std::to_string(instances) + " instances, max rel err " + g3(worst) + " (tol 1e-6)"};
}

Shape random_shape(Rng& rng, int max_rank = 4, index_t max_dim = 4) {
    const int rank = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_rank)));
    std::vector<index_t> dims(static_cast<std::size_t>(rank));
    for (index_t& d : dims) d = 1 + static_cast<index_t>(rng.below(static_cast<std::uint64_t>(max_dim)));
    return Shape(dims);
}

// Values with pairwise gaps far above the finite-difference step, so pooling
// argmaxes cannot flip under the +-eps perturbation.
Tensor<double> well_separated(const Shape& shape, Rng& rng) {
    const std::size_t n = static_cast<std::size_t>(shape.numel());
    std::vector<index_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<index_t>(i);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.below(i)]);
    }
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) {
        vals[i] = 0.05 * static_cast<double>(perm[i] + 1) - 0.025 * static_cast<double>(n + 1);
    }
    return Tensor<double>::from_data(shape, std::move(vals));
}

std::vector<CheckResult> gradcheck_all(std::uint64_t seed) {
    using D = Tensor<double>;
    std::vector<CheckResult> out;
    auto vseed = [&](std::uint64_t a, std::uint64_t b) {
        return derive_seed(seed, rng_stream::kVerify, a, b);
    };

    out.push_back(grad_result("gradcheck.add", 20, [&](int t) {
        Rng rng(vseed(100, static_cast<std::uint64_t>(t)));
        const Shape s = random_shape(rng);
        D a = D::normal(s, 0.0, 1.0, rng);
        D b = D::normal(s, 0.0, 1.0, rng);
        const std::uint64_t ws = vseed(101, static_cast<std::uint64_t>(t));
        return oracles::grad_check<double>(
            [&] { return oracles::weighted_sum(ops::add(a, b), ws); }, {&a, &b}, kGradEps);
    }));

    out.push_back(grad_result("gradcheck.elementwise_mul", 20, [&](int t) {
        Rng rng(vseed(102, static_cast<std::uint64_t>(t)));
        const Shape s = random_shape(rng);
        D a = D::normal(s, 0.0, 1.0, rng);
        D b = D::normal(s, 0.0, 1.0, rng);
        const std::uint64_t ws = vseed(103, static_cast<std::uint64_t>(t));
        return oracles::grad_check<double>(
            [&] { return oracles::weighted_sum(ops::elementwise_mul(a, b), ws); }, {&a, &b},
            kGradEps);
    }));

    out.push_back(grad_result("gradcheck.relu", 20, [&](int t) {
        Rng rng(vseed(104, static_cast<std::uint64_t>(t)));
        const Shape s = random_shape(rng);
        D a = D::normal(s, 0.0, 1.0, rng);
        // keep samples away from the kink at zero
        for (double& v : a.data_mut()) v = (v >= 0 ? 1.0 : -1.0) * (0.1 + std::abs(v));
        const std::uint64_t ws = vseed(105, static_cast<std::uint64_t>(t));
        return oracles::grad_check<double>([&] { return oracles::weighted_sum(ops::relu(a), ws); },
                                           {&a}, kGradEps);
    }));

    out.push_back(grad_result("gradcheck.sum", 20, [&](int t) {
        Rng rng(vseed(106, static_cast<std::uint64_t>(t)));
        const Shape s = random_shape(rng);
        D a = D::normal(s, 0.0, 1.0, rng);
        return oracles::grad_check<double>(
            [&] { return ops::sum(ops::elementwise_mul(a, a)); }, {&a}, kGradEps);
    }));

    out.push_back(grad_result("gradcheck.conv2d", 20, [&](int t) {
        Rng rng(vseed(107, static_cast<std::uint64_t>(t)));
        const index_t N = 1 + static_cast<index_t>(rng.below(2));
        const index_t C = 1 + static_cast<index_t>(rng.below(3));
        const index_t OC = 1 + static_cast<index_t>(rng.below(3));
        const index_t k = (t % 2 == 0) ? 3 : 1;
        const index_t stride = 1 + static_cast<index_t>(rng.below(2));
        const index_t pad = static_cast<index_t>(rng.below(2));
        const index_t H = k + static_cast<index_t>(rng.below(4));
        const index_t W = k + static_cast<index_t>(rng.below(4));
        D x = D::normal(Shape{N, C, H, W}, 0.0, 1.0, rng);
        D w = D::normal(Shape{OC, C, k, k}, 0.0, 0.5, rng);
        const std::uint64_t ws = vseed(108, static_cast<std::uint64_t>(t));
        if (t % 3 == 0) {
            D b = D::normal(Shape{OC}, 0.0, 0.5, rng);
            return oracles::grad_check<double>(
                [&] { return oracles::weighted_sum(ops::conv2d(x, w, b, stride, pad), ws); },
                {&x, &w, &b}, kGradEps);
        }
        return oracles::grad_check<double>(
            [&] { return oracles::weighted_sum(ops::conv2d(x, w, stride, pad), ws); }, {&x, &w},
            kGradEps);
    }));

    out.push_back(grad_result("gradcheck.dws_conv2d", 20, [&](int t) {
        Rng rng(vseed(109, static_cast<std::uint64_t>(t)));
        const index_t N = 1 + static_cast<index_t>(rng.below(2));
        const index_t C = 1 + static_cast<index_t>(rng.below(4));
        const index_t k = kOddKernels[t % 3];
        const index_t H = 3 + static_cast<index_t>(rng.below(4));
        const index_t W = 3 + static_cast<index_t>(rng.below(4));
        D x = D::normal(Shape{N, C, H, W}, 0.0, 1.0, rng);
        D w = D::normal(Shape{C, 1, k, k}, 0.0, 0.5, rng);
        const std::uint64_t ws = vseed(110, static_cast<std::uint64_t>(t));
        return oracles::grad_check<double>(
            [&] { return oracles::weighted_sum(ops::dws_conv2d(x, w), ws); }, {&x, &w}, kGradEps);
    }));

    out.push_back(grad_result("gradcheck.batch_norm2d", 25, [&](int t) {
        Rng rng(vseed(111, static_cast<std::uint64_t>(t)));
        const index_t N = 2 + static_cast<index_t>(rng.below(3));
        const index_t C = 1 + static_cast<index_t>(rng.below(3));
        const index_t H = 2 + static_cast<index_t>(rng.below(3));
        const index_t W = 2 + static_cast<index_t>(rng.below(3));
        D x = D::normal(Shape{N, C, H, W}, 0.0, 1.0, rng);
        D rm = D::normal(Shape{C}, 0.0, 0.3, rng);
        D rv = D::uniform(Shape{C}, 0.5, 2.0, rng);
        const std::uint64_t ws = vseed(112, static_cast<std::uint64_t>(t));
        const Mode mode = (t < 20) ? Mode::train : Mode::eval;
        if (t % 2 == 0) {
            D gamma = D::uniform(Shape{C}, 0.5, 1.5, rng);
            D beta = D::normal(Shape{C}, 0.0, 0.3, rng);
            return oracles::grad_check<double>(
                [&] {
                    return oracles::weighted_sum(
                        ops::batch_norm2d(x, gamma, beta, rm, rv, 1e-5, 0.1, mode), ws);
                },
                {&x, &gamma, &beta}, kGradEps);
        }
        D gamma, beta;  // affine-free
        return oracles::grad_check<double>(
            [&] {
                return oracles::weighted_sum(
                    ops::batch_norm2d(x, gamma, beta, rm, rv, 1e-5, 0.1, mode), ws);
            },
            {&x}, kGradEps);
    }));

    out.push_back(grad_result("gradcheck.max_pool2d", 20, [&](int t) {
        Rng rng(vseed(113, static_cast<std::uint64_t>(t)));
        const index_t window = 2 + static_cast<index_t>(rng.below(2));
        const index_t stride = 1 + static_cast<index_t>(rng.below(2));
        const index_t N = 1 + static_cast<index_t>(rng.below(2));
        const index_t C = 1 + static_cast<index_t>(rng.below(3));
        const index_t H = window + static_cast<index_t>(rng.below(4));
        const index_t W = window + static_cast<index_t>(rng.below(4));
        D x = well_separated(Shape{N, C, H, W}, rng);
        const std::uint64_t ws = vseed(114, static_cast<std::uint64_t>(t));
        return oracles::grad_check<double>(
            [&] { return oracles::weighted_sum(ops::max_pool2d(x, window, stride), ws); }, {&x},
            kGradEps);
    }));

    out.push_back(grad_result("gradcheck.global_avg_pool", 20, [&](int t) {
        Rng rng(vseed(115, static_cast<std::uint64_t>(t)));
        const index_t N = 1 + static_cast<index_t>(rng.below(3));
        const index_t C = 1 + static_cast<index_t>(rng.below(4));
        const index_t H = 1 + static_cast<index_t>(rng.below(4));
        const index_t W = 1 + static_cast<index_t>(rng.below(4));
        D x = D::normal(Shape{N, C, H, W}, 0.0, 1.0, rng);
        const std::uint64_t ws = vseed(116, static_cast<std::uint64_t>(t));
        return oracles::grad_check<double>(
            [&] { return oracles::weighted_sum(ops::global_avg_pool(x), ws); }, {&x}, kGradEps);
    }));

    out.push_back(grad_result("gradcheck.linear", 20, [&](int t) {
        Rng rng(vseed(117, static_cast<std::uint64_t>(t)));
        const index_t N = 1 + static_cast<index_t>(rng.below(4));
        const index_t C = 1 + static_cast<index_t>(rng.below(6));
        const index_t K = 1 + static_cast<index_t>(rng.below(5));
        D x = D::normal(Shape{N, C}, 0.0, 1.0, rng);
        D w = D::normal(Shape{K, C}, 0.0, 0.5, rng);
        D b = D::normal(Shape{K}, 0.0, 0.5, rng);
        const std::uint64_t ws = vseed(118, static_cast<std::uint64_t>(t));
        return oracles::grad_check<double>(
            [&] { return oracles::weighted_sum(ops::linear(x, w, b), ws); }, {&x, &w, &b},
            kGradEps);
    }));

    out.push_back(grad_result("gradcheck.softmax_cross_entropy", 20, [&](int t) {
        Rng rng(vseed(119, static_cast<std::uint64_t>(t)));
        const index_t N = 2 + static_cast<index_t>(rng.below(4));
        const index_t K = 3 + static_cast<index_t>(rng.below(8));
        D logits = D::normal(Shape{N, K}, 0.0, 2.0, rng);
        std::vector<int> labels(static_cast<std::size_t>(N));
        for (int& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
        return oracles::grad_check<double>(
            [&] { return ops::softmax_cross_entropy(logits, labels); }, {&logits}, kGradEps);
    }));

    out.push_back(grad_result("gradcheck.pad_subsample_shortcut", 20, [&](int t) {
        Rng rng(vseed(120, static_cast<std::uint64_t>(t)));
        const index_t N = 1 + static_cast<index_t>(rng.below(2));
        const index_t C = 1 + static_cast<index_t>(rng.below(4));
        const index_t H = 2 + static_cast<index_t>(rng.below(5));
        const index_t W = 2 + static_cast<index_t>(rng.below(5));
        const index_t out_c = C + 2 * static_cast<index_t>(rng.below(3));
        D x = D::normal(Shape{N, C, H, W}, 0.0, 1.0, rng);
        const std::uint64_t ws = vseed(121, static_cast<std::uint64_t>(t));
        return oracles::grad_check<double>(
            [&] { return oracles::weighted_sum(ops::pad_subsample_shortcut(x, out_c), ws); }, {&x},
            kGradEps);
    }));

    auto fp_block_case = [&](bool ablation) {
        return [&, ablation](int t) {
            FpBlockSpec spec;
            spec.d_in = 3;
            spec.d_out = 4;
            spec.q = 2;
            spec.k = 3;
            spec.downsample = t % 2 == 1;
            spec.ablation = ablation;
            Rng init(vseed(ablation ? 124 : 122, static_cast<std::uint64_t>(t)));
            FpBlock<double> blk(spec, init);
            D x = D::normal(Shape{2, 3, 6, 6}, 0.0, 1.0, init);
            std::vector<Parameter<double>> params;
            blk.collect("blk", params);
            std::vector<Tensor<double>*> leaves{&x};
            for (auto& p : params) {
                if (p.learnable) leaves.push_back(&p.value);
            }
            const std::uint64_t ws = vseed(ablation ? 125 : 123, static_cast<std::uint64_t>(t));
            // smaller step: the pooled path must not flip an argmax under +-eps
            return oracles::grad_check<double>(
                [&] { return oracles::weighted_sum(blk.forward(x, Mode::train), ws); }, leaves,
                1e-6);
        };
    };
    out.push_back(grad_result("gradcheck.fp_block", 20, fp_block_case(false)));
    out.push_back(grad_result("gradcheck.fp_block_ablation", 20, fp_block_case(true)));

    return out;
}

// --- conv oracles -----------------------------------------------------------

CheckResult check_conv_random(std::uint64_t seed) {
    double worst = 0.0;
    const int trials = 60;
    autograd::NoGradGuard no_grad;
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, rng_stream::kVerify, 30, static_cast<std::uint64_t>(t)));
        const index_t N = 1 + static_cast<index_t>(rng.below(3));
        const index_t C = 1 + static_cast<index_t>(rng.below(8));
        const index_t OC = 1 + static_cast<index_t>(rng.below(8));
        const index_t k = kOddKernels[rng.below(3)];
        const index_t stride = 1 + static_cast<index_t>(rng.below(2));
        const index_t pad = static_cast<index_t>(rng.below(3));
        const index_t H = k + static_cast<index_t>(rng.below(11));
        const index_t W = k + static_cast<index_t>(rng.below(11));
        using F = Tensor<float>;
        F x = F::normal(Shape{N, C, H, W}, 0.0f, 1.0f, rng);
        const float wscale = 1.0f / std::sqrt(static_cast<float>(C * k * k));
        F w = F::normal(Shape{OC, C, k, k}, 0.0f, wscale, rng);
        std::vector<float> ref;
        F y;
        if (t % 2 == 0) {
            F b = F::normal(Shape{OC}, 0.0f, 0.1f, rng);
            y = ops::conv2d(x, w, b, stride, pad);
            ref = oracles::conv2d_naive<float>(x.data(), N, C, H, W, w.data(), OC, k, stride, pad,
                                               b.data().data());
        } else {
            y = ops::conv2d(x, w, stride, pad);
            ref = oracles::conv2d_naive<float>(x.data(), N, C, H, W, w.data(), OC, k, stride, pad,
                                               nullptr);
        }
        const auto yv = y.data();
        for (std::size_t i = 0; i < ref.size(); ++i) {
            worst = std::max(worst, rel_err(yv[i], ref[i]));
        }
    }
    return {"conv.vs-naive-oracle", worst <= 1e-5,
            std::to_string(trials) + " random shapes (k {1,3,5}, stride 1/2, pad 0..2), max rel "
                                     "err " +
                g3(worst) + " (tol 1e-5)"};
}

CheckResult check_dws_random(std::uint64_t seed) {
    double worst = 0.0;
    const int trials = 60;
    autograd::NoGradGuard no_grad;
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, rng_stream::kVerify, 31, static_cast<std::uint64_t>(t)));
        const index_t N = 1 + static_cast<index_t>(rng.below(3));
        const index_t C = 1 + static_cast<index_t>(rng.below(8));
        const index_t k = kOddKernels[t % 3];
        const index_t H = 2 + static_cast<index_t>(rng.below(9));
        const index_t W = 2 + static_cast<index_t>(rng.below(9));
        using F = Tensor<float>;
        F x = F::normal(Shape{N, C, H, W}, 0.0f, 1.0f, rng);
        F w = F::normal(Shape{C, 1, k, k}, 0.0f, 1.0f / static_cast<float>(k), rng);
        F y = ops::dws_conv2d(x, w);
        const std::vector<float> ref =
            oracles::dws_conv2d_naive<float>(x.data(), N, C, H, W, w.data(), k);
        const auto yv = y.data();
        for (std::size_t i = 0; i < ref.size(); ++i) {
            worst = std::max(worst, rel_err(yv[i], ref[i]));
        }
    }
    return {"conv.dws-vs-naive-oracle", worst <= 1e-5,
            std::to_string(trials) + " random shapes (k {1,3,5}, same padding), max rel err " +
                g3(worst) + " (tol 1e-5)"};
}

CheckResult check_conv_trivial(std::uint64_t seed) {
    autograd::NoGradGuard no_grad;
    bool pass = true;
    std::string detail;
    auto require = [&](bool ok, const char* what) {
        if (!ok) {
            pass = false;
            detail += std::string(what) + " FAILED; ";
        }
    };
    using F = Tensor<float>;

    // all-ones image, all-ones 3x3 kernel, same padding: interior 9, corner 4
    F ones_img = F::ones(Shape{1, 1, 5, 5});
    F ones_k = F::ones(Shape{1, 1, 3, 3});
    F y = ops::conv2d(ones_img, ones_k, 1, 1);
    require(y.data()[2 * 5 + 2] == 9.0f, "ones-kernel interior == 9");
    require(y.data()[0] == 4.0f, "ones-kernel corner == 4");

    // 1x1 kernel of value 1: bitwise identity
    F x = F::normal(Shape{2, 3, 4, 4}, 0.0f, 1.0f, derive_seed(seed, rng_stream::kVerify, 32, 0));
    F id1 = F::ones(Shape{3, 3, 1, 1});
    for (index_t oc = 0; oc < 3; ++oc) {
        for (index_t c = 0; c < 3; ++c) {
            id1.data_mut()[static_cast<std::size_t>(oc * 3 + c)] = (oc == c) ? 1.0f : 0.0f;
        }
    }
    F yid = ops::conv2d(x, id1, 1, 0);
    require(std::memcmp(yid.data().data(), x.data().data(), x.data().size() * sizeof(float)) == 0,
            "1x1 identity kernel bitwise");

    // depthwise delta kernel: bitwise identity
    F dk = F::zeros(Shape{3, 1, 3, 3});
    for (index_t c = 0; c < 3; ++c) dk.data_mut()[static_cast<std::size_t>(c * 9 + 4)] = 1.0f;
    F ydws = ops::dws_conv2d(x, dk);
    require(std::memcmp(ydws.data().data(), x.data().data(), x.data().size() * sizeof(float)) == 0,
            "depthwise delta kernel bitwise");

    // depthwise channel isolation: perturbing channel 1 leaves other channels' outputs bit-equal
    F w = F::normal(Shape{3, 1, 3, 3}, 0.0f, 0.5f, derive_seed(seed, rng_stream::kVerify, 32, 1));
    F y0 = ops::dws_conv2d(x, w);
    F x2 = F::from_data(x.shape(), std::vector<float>(x.data().begin(), x.data().end()));
    for (index_t n = 0; n < 2; ++n) {
        for (index_t i = 0; i < 16; ++i) {
            x2.data_mut()[static_cast<std::size_t>((n * 3 + 1) * 16 + i)] += 1.0f;
        }
    }
    F y1 = ops::dws_conv2d(x2, w);
    bool isolated = true;
    for (index_t n = 0; n < 2 && isolated; ++n) {
        for (index_t c = 0; c < 3; ++c) {
            if (c == 1) continue;
            const std::size_t off = static_cast<std::size_t>((n * 3 + c) * 16);
            if (std::memcmp(y0.data().data() + off, y1.data().data() + off, 16 * sizeof(float)) !=
                0) {
                isolated = false;
                break;
            }
        }
    }
    require(isolated, "depthwise channel isolation");

    if (pass) detail = "ones/identity/delta kernels exact, depthwise channels isolated";
    return {"conv.closed-form-cases", pass, detail};
}

CheckResult check_maxpool_oracle(std::uint64_t seed) {
    autograd::NoGradGuard no_grad;
    int matched = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, rng_stream::kVerify, 33, static_cast<std::uint64_t>(t)));
        const index_t window = 2 + static_cast<index_t>(rng.below(2));
        const index_t stride = 1 + static_cast<index_t>(rng.below(2));
        const index_t N = 1 + static_cast<index_t>(rng.below(2));
        const index_t C = 1 + static_cast<index_t>(rng.below(4));
        const index_t H = window + static_cast<index_t>(rng.below(8));
        const index_t W = window + static_cast<index_t>(rng.below(8));
        using F = Tensor<float>;
        F x = F::normal(Shape{N, C, H, W}, 0.0f, 1.0f, rng);
        F y = ops::max_pool2d(x, window, stride);
        const std::vector<float> ref =
            oracles::max_pool2d_naive<float>(x.data(), N, C, H, W, window, stride);
        const auto yv = y.data();
        if (yv.size() == ref.size() &&
            std::memcmp(yv.data(), ref.data(), ref.size() * sizeof(float)) == 0) {
            ++matched;
        }
    }
    return {"conv.maxpool-vs-naive-oracle", matched == trials,
            std::to_string(matched) + "/" + std::to_string(trials) +
                " random shapes bitwise equal to the nested-loop oracle"};
}

// --- data -------------------------------------------------------------------

std::vector<CheckResult> data_checks(const std::string& data_dir) {
    std::vector<CheckResult> out;
    data::Dataset train, test;
    try {
        train = data::load_cifar10(data_dir, "train");
        test = data::load_cifar10(data_dir, "test");
    } catch (const Error& e) {
        out.push_back({"data.load", false, e.what()});
        return out;
    }
    out.push_back({"data.load", true, "loaded train and test splits from " + data_dir});

    {
        std::array<index_t, 10> train_hist{}, test_hist{};
        for (int l : train.labels) ++train_hist[static_cast<std::size_t>(l)];
        for (int l : test.labels) ++test_hist[static_cast<std::size_t>(l)];
        const bool counts = train.count == 50000 && test.count == 10000;
        bool balanced = true;
        for (index_t c : train_hist) balanced &= c == 5000;
        for (index_t c : test_hist) balanced &= c == 1000;
        out.push_back({"data.counts", counts && balanced,
                       "train " + std::to_string(train.count) + " (5000/class), test " +
                           std::to_string(test.count) + " (1000/class)"});
    }

    {
        const data::AugmentPolicy policy;
        std::array<double, 3> sum{}, sumsq{};
        const std::size_t per_chan = 1024;
        for (index_t i = 0; i < train.count; ++i) {
            const auto img = train.image(i);
            for (std::size_t c = 0; c < 3; ++c) {
                for (std::size_t p = 0; p < per_chan; ++p) {
                    const double v = img[c * per_chan + p] / 255.0;
                    sum[c] += v;
                    sumsq[c] += v * v;
                }
            }
        }
        const double denom = static_cast<double>(train.count) * per_chan;
        bool ok = true;
        char buf[160];
        std::string means, stds;
        for (std::size_t c = 0; c < 3; ++c) {
            const double mean = sum[c] / denom;
            const double stddev = std::sqrt(sumsq[c] / denom - mean * mean);
            ok &= std::abs(mean - policy.mean[c]) <= 0.01;
            ok &= std::abs(stddev - policy.stddev[c]) <= 0.01;
            std::snprintf(buf, sizeof buf, "%s%.4f", c ? ", " : "", mean);
            means += buf;
            std::snprintf(buf, sizeof buf, "%s%.4f", c ? ", " : "", stddev);
            stds += buf;
        }
        out.push_back({"data.channel-statistics", ok,
                       "train mean (" + means + ") std (" + stds +
                           ") vs normalization constants (tol 0.01)"});
    }

    {
        const auto a = data::shuffled_indices(train.count, 123, 0);
        const auto b = data::shuffled_indices(train.count, 123, 0);
        const auto c = data::shuffled_indices(train.count, 123, 1);
        const bool repeat = a == b;
        const bool differs = a != c;
        std::vector<index_t> head(a.begin(), a.begin() + 8);
        const data::AugmentPolicy policy;
        const auto [x1, l1] = data::make_batch<float>(train, head, policy, true, 9, 2, 3);
        const auto [x2, l2] = data::make_batch<float>(train, head, policy, true, 9, 2, 3);
        const bool batch_eq = l1 == l2 && std::memcmp(x1.data().data(), x2.data().data(),
                                                      x1.data().size() * sizeof(float)) == 0;
        out.push_back({"data.pipeline-determinism", repeat && differs && batch_eq,
                       "same-seed shuffles and augmented batches bitwise equal, epochs differ"});
    }
    return out;
}

}  // namespace

std::vector<CheckResult> suite_volterra(std::uint64_t seed) {
    return {check_kernel_equivalence(seed), check_orthogonal_suppression(seed),
            check_kernel_symmetry(seed), check_bilinearity(seed)};
}

std::vector<CheckResult> suite_params(std::uint64_t seed) {
    return {check_eq4_enumeration(seed), check_table_totals(seed), check_identity_config(seed),
            check_config_isolation(seed)};
}

std::vector<CheckResult> suite_gradcheck(std::uint64_t seed) { return gradcheck_all(seed); }

std::vector<CheckResult> suite_conv(std::uint64_t seed) {
    return {check_conv_random(seed), check_dws_random(seed), check_conv_trivial(seed),
            check_maxpool_oracle(seed)};
}

std::vector<CheckResult> suite_data(const std::string& data_dir) { return data_checks(data_dir); }

bool all_pass(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(),
                       [](const CheckResult& r) { return r.pass; });
}

void print_results(const std::vector<CheckResult>& results, std::ostream& os) {
    for (const CheckResult& r : results) {
        std::string name = r.name;
        if (name.size() < 36) name.resize(36, ' ');
        os << (r.pass ? "[PASS] " : "[FAIL] ") << name << " " << r.detail << "\n";
    }
}

}  // namespace fpnet::verify
