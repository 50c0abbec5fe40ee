#pragma once

#include <array>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "fpnet/fp_block.hpp"
#include "fpnet/layers.hpp"
#include "fpnet/ops.hpp"

namespace fpnet {

enum class BaseNet { resnet20, resnet32, resnet44, resnet50 };

inline std::string base_name(BaseNet base) {
    switch (base) {
        case BaseNet::resnet20: return "resnet20";
        case BaseNet::resnet32: return "resnet32";
        case BaseNet::resnet44: return "resnet44";
        case BaseNet::resnet50: return "resnet50";
    }
    throw ConfigError("unknown base network");
}

inline BaseNet parse_base(const std::string& name) {
    if (name == "resnet20") return BaseNet::resnet20;
    if (name == "resnet32") return BaseNet::resnet32;
    if (name == "resnet44") return BaseNet::resnet44;
    if (name == "resnet50") return BaseNet::resnet50;
    throw ConfigError("unknown model \"" + name +
                      "\" (expected resnet20, resnet32, resnet44, or resnet50)");
}

// Basic blocks per layer (n); depth = 6n+2.
inline index_t blocks_per_layer(BaseNet base) {
    switch (base) {
        case BaseNet::resnet20: return 3;
        case BaseNet::resnet32: return 5;
        case BaseNet::resnet44: return 7;
        default: throw ConfigError("blocks_per_layer: CIFAR bases only");
    }
}

// FP-blocks per replaced layer (m = 1/3/5 for resnet20/32/44, 1 for resnet50).
inline index_t fp_blocks_per_layer(BaseNet base) {
    switch (base) {
        case BaseNet::resnet20: return 1;
        case BaseNet::resnet32: return 3;
        case BaseNet::resnet44: return 5;
        case BaseNet::resnet50: return 1;
    }
    throw ConfigError("unknown base network");
}

inline index_t config_length(BaseNet base) { return base == BaseNet::resnet50 ? 4 : 3; }

// Full architecture description: base network plus the binary configuration
// string ('1' at position i = layer i is replaced by an FP-layer).
struct ModelSpec {
    BaseNet base = BaseNet::resnet20;
    std::string config;   // empty = all zeros
    index_t q = 0;        // 0 = base default (2 for CIFAR bases, 1 for resnet50)
    index_t num_classes = 0;  // 0 = base default (10 CIFAR, 1000 resnet50)
    bool ablation = false;

    index_t resolved_q() const {
        if (q != 0) return q;
        return base == BaseNet::resnet50 ? 1 : 2;
    }

    index_t resolved_classes() const {
        if (num_classes != 0) return num_classes;
        return base == BaseNet::resnet50 ? 1000 : 10;
    }

    std::string resolved_config() const {
        if (config.empty()) return std::string(static_cast<std::size_t>(config_length(base)), '0');
        return config;
    }

    void validate() const {
        const std::string cfg = resolved_config();
        if (static_cast<index_t>(cfg.size()) != config_length(base)) {
            throw ConfigError("config \"" + cfg + "\" has length " + std::to_string(cfg.size()) +
                              "; " + base_name(base) + " needs " +
                              std::to_string(config_length(base)) + " bits");
        }
        for (char c : cfg) {
            if (c != '0' && c != '1') {
                throw ConfigError("config \"" + cfg + "\" must contain only '0' and '1'");
            }
        }
        if (base != BaseNet::resnet50 && cfg == "111") {
            throw ConfigError("config \"111\" is rejected: replacing every layer of a CIFAR "
                              "base is not a supported configuration");
        }
        if (resolved_q() < 1) throw ConfigError("expansion factor q must be >= 1");
        if (resolved_classes() < 2) throw ConfigError("num_classes must be >= 2");
    }

    std::string display_name() const {
        std::string s = base_name(base) + "[" + resolved_config() + "] q=" +
                        std::to_string(resolved_q());
        if (ablation) s += " ablation";
        return s;
    }
};

template <typename T>
struct BasicBlock {
    index_t in_c, out_c, stride;
    layers::Conv2d<T> conv1;
    layers::BatchNorm2d<T> bn1;
    layers::Conv2d<T> conv2;
    layers::BatchNorm2d<T> bn2;

    BasicBlock(index_t in_channels, index_t out_channels, index_t s, Rng& rng)
        : in_c(in_channels),
          out_c(out_channels),
          stride(s),
          conv1(Conv2dSpec{in_channels, out_channels, 3, s, 1, false}, rng),
          bn1(BatchNormSpec{out_channels, true}),
          conv2(Conv2dSpec{out_channels, out_channels, 3, 1, 1, false}, rng),
          bn2(BatchNormSpec{out_channels, true}) {}

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        Tensor<T> h = ops::relu(bn1.forward(conv1.forward(x), mode));
        h = bn2.forward(conv2.forward(h), mode);
        // identity shortcut; parameter-free subsample + zero-pad on dim change
        Tensor<T> shortcut =
            (stride == 1 && in_c == out_c) ? x : ops::pad_subsample_shortcut(x, out_c);
        return ops::relu(ops::add(h, shortcut));
    }

    void collect(const std::string& prefix, std::vector<Parameter<T>>& out) {
        conv1.collect(prefix + ".conv1", out);
        bn1.collect(prefix + ".bn1", out);
        conv2.collect(prefix + ".conv2", out);
        bn2.collect(prefix + ".bn2", out);
    }
};

// CIFAR ResNet-20/32/44 with optional FP-layer substitution: 3x3 stem
// (3 -> 16) + BN + ReLU, three layers of widths 16/32/64, global average
// pooling, linear head. Layers 2 and 3 downsample (stride-2 first basic block,
// or trailing max-pool on the first FP-block). FP-layers have no shortcuts and
// the stem is never altered.
template <typename T>
class CifarNet {
public:
    CifarNet(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
        spec_.validate();
        if (spec_.base == BaseNet::resnet50) {
            throw ConfigError("resnet50 is supported for parameter counting only; "
                              "it cannot be instantiated for training");
        }
        Rng rng(derive_seed(seed, rng_stream::kParamInit));
        stem_conv_ = std::make_unique<layers::Conv2d<T>>(Conv2dSpec{3, 16, 3, 1, 1, false}, rng);
        stem_bn_ = std::make_unique<layers::BatchNorm2d<T>>(BatchNormSpec{16, true});

        const std::string cfg = spec_.resolved_config();
        const index_t n = blocks_per_layer(spec_.base);
        const index_t m = fp_blocks_per_layer(spec_.base);
        const std::array<index_t, 3> widths = {16, 32, 64};
        index_t in_c = 16;
        for (index_t li = 0; li < 3; ++li) {
            const index_t width = widths[static_cast<std::size_t>(li)];
            const bool down = li > 0;
            Layer layer;
            if (cfg[static_cast<std::size_t>(li)] == '1') {
                layer.is_fp = true;
                for (index_t b = 0; b < m; ++b) {
                    FpBlockSpec fs;
                    fs.d_in = (b == 0) ? in_c : width;
                    fs.d_out = width;
                    fs.q = spec_.resolved_q();
                    fs.k = 3;
                    fs.downsample = (b == 0) && down;
                    fs.ablation = spec_.ablation;
                    layer.fp.emplace_back(fs, rng);
                }
            } else {
                for (index_t b = 0; b < n; ++b) {
                    const index_t s = (b == 0 && down) ? 2 : 1;
                    layer.basic.emplace_back(b == 0 ? in_c : width, width, s, rng);
                }
            }
            layers_.push_back(std::move(layer));
            in_c = width;
        }
        fc_ = std::make_unique<layers::Linear<T>>(64, spec_.resolved_classes(), rng);

        stem_conv_->collect("stem.conv", params_);
        stem_bn_->collect("stem.bn", params_);
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            const std::string lp = "layer" + std::to_string(li + 1);
            Layer& layer = layers_[li];
            if (layer.is_fp) {
                for (std::size_t b = 0; b < layer.fp.size(); ++b) {
                    layer.fp[b].collect(lp + ".block" + std::to_string(b), params_);
                }
            } else {
                for (std::size_t b = 0; b < layer.basic.size(); ++b) {
                    layer.basic[b].collect(lp + ".block" + std::to_string(b), params_);
                }
            }
        }
        fc_->collect("fc", params_);

        std::unordered_set<std::string> names;
        for (const auto& p : params_) {
            if (!names.insert(p.name).second) {
                throw ContractError("duplicate parameter name " + p.name);
            }
        }
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (x.shape().rank() != 4 || x.shape().c() != 3) {
            throw ShapeError("model input must be (N, 3, H, W), got " + x.shape().str());
        }
        Tensor<T> h = ops::relu(stem_bn_->forward(stem_conv_->forward(x), mode));
        for (Layer& layer : layers_) {
            if (layer.is_fp) {
                for (auto& block : layer.fp) h = block.forward(h, mode);
            } else {
                for (auto& block : layer.basic) h = block.forward(h, mode);
            }
        }
        return fc_->forward(ops::global_avg_pool(h));
    }

    std::vector<Parameter<T>>& parameters() { return params_; }
    const std::vector<Parameter<T>>& parameters() const { return params_; }
    const ModelSpec& spec() const { return spec_; }

    struct Layer {
        bool is_fp = false;
        std::vector<BasicBlock<T>> basic;
        std::vector<FpBlock<T>> fp;
    };
    const std::vector<Layer>& model_layers() const { return layers_; }

private:
    ModelSpec spec_;
    std::unique_ptr<layers::Conv2d<T>> stem_conv_;
    std::unique_ptr<layers::BatchNorm2d<T>> stem_bn_;
    std::vector<Layer> layers_;
    std::unique_ptr<layers::Linear<T>> fc_;
    std::vector<Parameter<T>> params_;
};

template <typename T>
CifarNet<T> build_cifar_resnet(BaseNet base, index_t num_classes, std::uint64_t seed) {
    ModelSpec spec;
    spec.base = base;
    spec.num_classes = num_classes;
    return CifarNet<T>(spec, seed);
}

template <typename T>
CifarNet<T> apply_fp_config(const ModelSpec& spec, std::uint64_t seed) {
    return CifarNet<T>(spec, seed);
}

// --- summaries ---------------------------------------------------------------

struct BlockRow {
    std::string name;
    std::string kind;
    index_t learnable = 0;
    bool downsample = false;
    std::string detail;
};

struct ModelSummary {
    std::string model_name;
    index_t depth = 0;  // weighted layers on the main path
    index_t total_learnable = 0;
    std::array<index_t, 4> per_layer{};  // learnable params per layer (index 3 unused for CIFAR)
    std::vector<BlockRow> rows;
};

template <typename T>
index_t count_learnable(const std::vector<Parameter<T>>& params, const std::string& prefix) {
    index_t total = 0;
    for (const auto& p : params) {
        if (p.learnable && p.name.rfind(prefix, 0) == 0) total += p.value.numel();
    }
    return total;
}

template <typename T>
ModelSummary summarize(CifarNet<T>& model) {
    const auto& params = model.parameters();
    const ModelSpec& spec = model.spec();
    ModelSummary s;
    s.model_name = spec.display_name();
    s.depth = 2;  // stem conv + fc
    s.rows.push_back({"stem", "conv3x3+bn", count_learnable(params, "stem."), false, "3 -> 16"});
    for (std::size_t li = 0; li < model.model_layers().size(); ++li) {
        const auto& layer = model.model_layers()[li];
        const std::string lp = "layer" + std::to_string(li + 1);
        index_t layer_total = 0;
        if (layer.is_fp) {
            for (std::size_t b = 0; b < layer.fp.size(); ++b) {
                const FpBlockSpec& fs = layer.fp[b].spec();
                const std::string name = lp + ".block" + std::to_string(b);
                const index_t learnable = count_learnable(params, name + ".");
                layer_total += learnable;
                s.depth += 3;  // expand, dws stage, recombine
                std::string detail = std::to_string(fs.d_in) + " -> " + std::to_string(fs.d_out) +
                                     " (q=" + std::to_string(fs.q) + ", k=" + std::to_string(fs.k) +
                                     ")";
                s.rows.push_back({name, fs.ablation ? "fp-block(ablation)" : "fp-block", learnable,
                                  fs.downsample, detail});
            }
        } else {
            for (std::size_t b = 0; b < layer.basic.size(); ++b) {
                const auto& bb = layer.basic[b];
                const std::string name = lp + ".block" + std::to_string(b);
                const index_t learnable = count_learnable(params, name + ".");
                layer_total += learnable;
                s.depth += 2;
                s.rows.push_back({name, "basic-block", learnable, bb.stride == 2,
                                  std::to_string(bb.in_c) + " -> " + std::to_string(bb.out_c) +
                                      (bb.stride == 2 ? " (stride 2)" : "")});
            }
        }
        s.per_layer[li] = layer_total;
    }
    s.rows.push_back({"fc", "gap+linear", count_learnable(params, "fc."), false,
                      "64 -> " + std::to_string(spec.resolved_classes())});
    for (const auto& p : params) {
        if (p.learnable) s.total_learnable += p.value.numel();
    }
    return s;
}

// --- resnet50 parameter accounting (no trainable instantiation) --------------

struct BottleneckLayer {
    index_t blocks, in_c, width, out_c;
};

inline const std::array<BottleneckLayer, 4>& resnet50_layers() {
    static const std::array<BottleneckLayer, 4> layers = {{
        {3, 64, 64, 256},
        {4, 256, 128, 512},
        {6, 512, 256, 1024},
        {3, 1024, 512, 2048},
    }};
    return layers;
}

// One bottleneck block: 1x1 in->w, 3x3 w->w, 1x1 w->4w, each with affine BN;
// projection shortcut (1x1 conv + BN) on the first block of every layer.
inline index_t bottleneck_block_params(index_t in_c, index_t width, index_t out_c,
                                       bool projection) {
    index_t n = in_c * width + 2 * width;          // 1x1 reduce + BN
    n += width * width * 9 + 2 * width;            // 3x3 + BN
    n += width * out_c + 2 * out_c;                // 1x1 expand + BN
    if (projection) n += in_c * out_c + 2 * out_c; // downsample conv + BN
    return n;
}

// Parameter summary for resnet50 and its FP substitutions. Each '1' bit
// replaces the whole bottleneck layer with a single FP-block (m=1).
inline ModelSummary summarize_resnet50(const ModelSpec& spec) {
    spec.validate();
    if (spec.base != BaseNet::resnet50) {
        throw ConfigError("summarize_resnet50 expects the resnet50 base");
    }
    const std::string cfg = spec.resolved_config();
    const index_t classes = spec.resolved_classes();
    ModelSummary s;
    s.model_name = spec.display_name();
    s.depth = 2;  // stem conv + fc
    const index_t stem = 3 * 64 * 49 + 2 * 64;  // 7x7 conv + BN
    s.rows.push_back({"stem", "conv7x7+bn+maxpool", stem, true, "3 -> 64"});
    for (std::size_t li = 0; li < 4; ++li) {
        const BottleneckLayer& L = resnet50_layers()[li];
        const std::string lp = "layer" + std::to_string(li + 1);
        index_t layer_total = 0;
        if (cfg[li] == '1') {
            FpBlockSpec fs;
            fs.d_in = L.in_c;
            fs.d_out = L.out_c;
            fs.q = spec.resolved_q();
            fs.k = 3;
            fs.downsample = li > 0;  // layer1 keeps stride 1 after the stem max-pool
            fs.ablation = spec.ablation;
            layer_total = count_fp_block_params(fs) + count_fp_block_bn_params(fs);
            s.depth += 3;
            s.rows.push_back({lp + ".block0", fs.ablation ? "fp-block(ablation)" : "fp-block",
                              layer_total, fs.downsample,
                              std::to_string(fs.d_in) + " -> " + std::to_string(fs.d_out) +
                                  " (q=" + std::to_string(fs.q) + ", k=" + std::to_string(fs.k) +
                                  ")"});
        } else {
            for (index_t b = 0; b < L.blocks; ++b) {
                const index_t in_c = (b == 0) ? L.in_c : L.out_c;
                const index_t p = bottleneck_block_params(in_c, L.width, L.out_c, b == 0);
                layer_total += p;
                s.depth += 3;
                s.rows.push_back({lp + ".block" + std::to_string(b), "bottleneck", p,
                                  b == 0 && li > 0,
                                  std::to_string(in_c) + " -> " + std::to_string(L.out_c)});
            }
        }
        s.per_layer[li] = layer_total;
        s.total_learnable += layer_total;
    }
    const index_t head = 2048 * classes + classes;
    s.rows.push_back({"fc", "gap+linear", head, false, "2048 -> " + std::to_string(classes)});
    s.total_learnable += stem + head;
    return s;
}

// The paper's FP-ResNet-50: layers 2 and 4 replaced by one FP-block each, q=1.
inline ModelSummary build_fp_resnet50_spec(index_t num_classes = 1000) {
    ModelSpec spec;
    spec.base = BaseNet::resnet50;
    spec.config = "0101";
    spec.q = 1;
    spec.num_classes = num_classes;
    return summarize_resnet50(spec);
}

}  // namespace fpnet
