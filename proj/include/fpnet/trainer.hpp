#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <ostream>

#include <json.hpp>
#include <string>
#include <vector>

#include "fpnet/checkpoint.hpp"
#include "fpnet/data.hpp"
#include "fpnet/model.hpp"

namespace fpnet {

struct LrPoint {
    index_t epoch;
    double lr;
};

struct TrainConfig {
    index_t epochs = 200;
    std::vector<LrPoint> lr_schedule = {{0, 0.1}, {100, 0.01}, {150, 0.001}};
    double momentum = 0.9;
    index_t batch_size = 128;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    bool augment = true;
    std::string out_dir = "runs/default";
    index_t checkpoint_every = 1;  // epochs between checkpoint writes (last epoch always saved)
    data::AugmentPolicy policy;
    std::ostream* log = nullptr;  // optional per-epoch echo; not part of the run identity

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum in [0, 1)");
        if (weight_decay < 0.0) throw ConfigError("train: weight decay must be >= 0");
        if (lr_schedule.empty() || lr_schedule.front().epoch != 0) {
            throw ConfigError("train: lr schedule must start at epoch 0");
        }
        for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
            if (lr_schedule[i].lr <= 0.0) throw ConfigError("train: learning rates must be positive");
            if (i > 0 && lr_schedule[i].epoch <= lr_schedule[i - 1].epoch) {
                throw ConfigError("train: lr schedule epochs must be strictly increasing");
            }
        }
        if (checkpoint_every < 1) throw ConfigError("train: checkpoint_every must be >= 1");
    }
};

// Piecewise-constant schedule: the rate of the last boundary at or below epoch.
inline double lr_at(const TrainConfig& cfg, index_t epoch) {
    double lr = cfg.lr_schedule.front().lr;
    for (const auto& p : cfg.lr_schedule) {
        if (epoch >= p.epoch) lr = p.lr;
    }
    return lr;
}

struct MetricsRecord {
    index_t epoch;
    double train_loss;
    double train_acc;
    double test_error;
    double lr;
    double wall_seconds;
};

inline std::string metrics_header() { return "epoch,train_loss,train_acc,test_error,lr,wall_seconds"; }

inline std::string format_metrics_row(const MetricsRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.6f,%.6f,%g,%.3f", static_cast<long long>(r.epoch),
                  r.train_loss, r.train_acc, r.test_error, r.lr, r.wall_seconds);
    return buf;
}

// Classic SGD with momentum and L2-in-gradient weight decay:
//   v <- momentum*v + (grad + wd*param); param <- param - lr*v
// Decay applies only to parameters flagged for it (conv/linear weights).
template <typename T>
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<Parameter<T>>& params, double momentum, double weight_decay)
        : params_(params), momentum_(momentum), weight_decay_(weight_decay) {
        for (auto& p : params_) {
            if (p.learnable) velocity_.push_back(Tensor<T>::zeros(p.value.shape()));
        }
    }

    void zero_grad() {
        for (auto& p : params_) {
            if (!p.learnable) continue;
            p.value.ensure_grad();
            p.value.zero_grad();
        }
    }

    void step(double lr) {
        std::size_t vi = 0;
        for (auto& p : params_) {
            if (!p.learnable) continue;
            std::span<const T> g = p.value.grad();
            if (g.empty()) {
                throw ContractError("sgd: parameter " + p.name + " has no gradient buffer");
            }
            for (T gv : g) {
                if (!std::isfinite(static_cast<double>(gv))) {
                    throw NumericError("sgd: non-finite gradient in " + p.name +
                                       "; aborting the run");
                }
            }
            const T wd = p.decay ? static_cast<T>(weight_decay_) : T(0);
            const T mom = static_cast<T>(momentum_);
            const T rate = static_cast<T>(lr);
            std::span<T> v = velocity_[vi++].data_mut();
            std::span<T> w = p.value.data_mut();
            for (std::size_t i = 0; i < w.size(); ++i) {
                v[i] = mom * v[i] + (g[i] + wd * w[i]);
                w[i] -= rate * v[i];
            }
        }
    }

    // Momentum buffers, named after their parameters, for checkpointing.
    std::vector<ckpt::NamedTensor<T>> state() const {
        std::vector<ckpt::NamedTensor<T>> out;
        std::size_t vi = 0;
        for (const auto& p : params_) {
            if (!p.learnable) continue;
            out.push_back({p.name + ".momentum", velocity_[vi++]});
        }
        return out;
    }

    void load_state(const ckpt::Checkpoint<T>& ck) {
        std::size_t vi = 0;
        for (const auto& p : params_) {
            if (!p.learnable) continue;
            const Tensor<T>* src = ck.find(p.name + ".momentum");
            if (!src) throw FormatError("checkpoint is missing momentum buffer for " + p.name);
            if (src->shape() != p.value.shape()) {
                throw FormatError("momentum buffer shape mismatch for " + p.name);
            }
            std::copy(src->data().begin(), src->data().end(),
                      velocity_[vi++].data_mut().begin());
        }
    }

private:
    std::vector<Parameter<T>>& params_;
    double momentum_;
    double weight_decay_;
    std::vector<Tensor<T>> velocity_;
};

struct TrainResult {
    double min_test_error = 1.0;
    index_t best_epoch = -1;
    double final_test_error = 1.0;
    double first_train_loss = 0.0;
    double last_train_loss = 0.0;
    std::vector<std::string> csv_rows;
};

// Top-1 error of the model over a dataset (eval mode, normalization only).
template <typename T>
double evaluate(CifarNet<T>& model, const data::Dataset& ds, const data::AugmentPolicy& policy,
                index_t batch_size) {
    autograd::NoGradGuard no_grad;
    std::vector<index_t> order(static_cast<std::size_t>(ds.count));
    for (index_t i = 0; i < ds.count; ++i) order[static_cast<std::size_t>(i)] = i;
    index_t correct = 0;
    const index_t nb = data::num_batches(ds.count, batch_size);
    for (index_t b = 0; b < nb; ++b) {
        const index_t lo = b * batch_size;
        const index_t hi = std::min(ds.count, lo + batch_size);
        auto [x, y] = data::make_batch<T>(ds, std::span<const index_t>(order).subspan(lo, hi - lo),
                                          policy, false, 0, 0, 0);
        Tensor<T> logits = model.forward(x, Mode::eval);
        const index_t classes = logits.shape()[1];
        std::span<const T> ld = logits.data();
        for (index_t i = 0; i < hi - lo; ++i) {
            index_t arg = 0;
            for (index_t j = 1; j < classes; ++j) {
                if (ld[i * classes + j] > ld[i * classes + arg]) arg = j;
            }
            if (static_cast<int>(arg) == y[static_cast<std::size_t>(i)]) ++correct;
        }
    }
    return 1.0 - static_cast<double>(correct) / static_cast<double>(ds.count);
}

template <typename T>
class Trainer {
public:
    Trainer(CifarNet<T>& model, const data::Dataset& train_ds, const data::Dataset& test_ds,
            const TrainConfig& cfg)
        : model_(model),
          train_ds_(train_ds),
          test_ds_(test_ds),
          cfg_(cfg),
          opt_(model.parameters(), cfg.momentum, cfg.weight_decay) {
        cfg_.validate();
        if (train_ds_.count < cfg_.batch_size && train_ds_.count < 2) {
            throw ConfigError("train: training split is too small");
        }
    }

    // Loads model/optimizer state and completed-epoch metrics from a container
    // written by an earlier run with an identical configuration.
    void resume_from(const std::string& path) {
        auto ck = ckpt::load_checkpoint<T>(path);
        const nlohmann::json meta = nlohmann::json::parse(ck.meta_json);
        const nlohmann::json want = describe_meta(0);
        // epochs is deliberately absent: it is the stop point, not part of the
        // trajectory identity, so a finished run can be extended.
        for (const char* key : {"model", "seed", "batch_size", "momentum", "weight_decay",
                                "schedule", "augment", "precision", "train_count"}) {
            if (meta.at(key) != want.at(key)) {
                throw ConfigError(std::string("checkpoint was written under a different "
                                              "configuration (field \"") +
                                  key + "\": " + meta.at(key).dump() + " vs " +
                                  want.at(key).dump() + ")");
            }
        }
        for (auto& p : model_.parameters()) {
            const Tensor<T>* src = ck.find(p.name);
            if (!src) throw FormatError("checkpoint is missing tensor " + p.name);
            if (src->shape() != p.value.shape()) {
                throw FormatError("checkpoint tensor " + p.name + " has shape " +
                                  src->shape().str() + ", model expects " + p.value.shape().str());
            }
            std::copy(src->data().begin(), src->data().end(), p.value.data_mut().begin());
        }
        opt_.load_state(ck);
        start_epoch_ = meta.at("next_epoch").get<index_t>();
        result_.csv_rows = meta.at("metrics_rows").get<std::vector<std::string>>();
        result_.min_test_error = meta.at("min_test_error").get<double>();
        result_.best_epoch = meta.at("best_epoch").get<index_t>();
        result_.first_train_loss = meta.at("first_train_loss").get<double>();
        initial_loss_ = meta.at("initial_loss").get<double>();
        divergent_epochs_ = meta.at("divergent_epochs").get<index_t>();
    }

    TrainResult run() {
        namespace fs = std::filesystem;
        fs::create_directories(cfg_.out_dir);
        const std::string csv_path = cfg_.out_dir + "/metrics.csv";
        std::unique_ptr<std::FILE, int (*)(std::FILE*)> csv(std::fopen(csv_path.c_str(), "wb"),
                                                            &std::fclose);
        if (!csv) throw IoError("cannot write " + csv_path);
        auto emit = [&](const std::string& line) {
            std::fputs(line.c_str(), csv.get());
            std::fputc('\n', csv.get());
            std::fflush(csv.get());
        };
        emit(metrics_header());
        for (const auto& row : result_.csv_rows) emit(row);  // restored on resume

        for (index_t epoch = start_epoch_; epoch < cfg_.epochs; ++epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            const double lr = lr_at(cfg_, epoch);
            double loss_sum = 0.0;
            index_t correct = 0;

            const auto perm = data::shuffled_indices(train_ds_.count, cfg_.seed, epoch);
            const index_t nb = data::num_batches(train_ds_.count, cfg_.batch_size);
            for (index_t b = 0; b < nb; ++b) {
                const index_t lo = b * cfg_.batch_size;
                const index_t hi = std::min(train_ds_.count, lo + cfg_.batch_size);
                auto [x, y] = data::make_batch<T>(
                    train_ds_, std::span<const index_t>(perm).subspan(lo, hi - lo), cfg_.policy,
                    cfg_.augment, cfg_.seed, epoch, b);
                Tensor<T> logits = model_.forward(x, Mode::train);
                Tensor<T> loss = ops::softmax_cross_entropy(logits, y);
                opt_.zero_grad();
                backward(loss);
                opt_.step(lr);
                const double lv = static_cast<double>(loss.item());
                if (!std::isfinite(lv)) {
                    throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                       ", batch " + std::to_string(b));
                }
                loss_sum += lv * static_cast<double>(hi - lo);
                correct += count_correct(logits, y);
            }
            const double train_loss = loss_sum / static_cast<double>(train_ds_.count);
            const double train_acc =
                static_cast<double>(correct) / static_cast<double>(train_ds_.count);
            const double test_error = evaluate(model_, test_ds_, cfg_.policy, cfg_.batch_size);
            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

            MetricsRecord rec{epoch, train_loss, train_acc, test_error, lr, wall};
            const std::string row = format_metrics_row(rec);
            result_.csv_rows.push_back(row);
            emit(row);
            if (cfg_.log) *cfg_.log << row << std::endl;

            if (epoch == 0) {
                result_.first_train_loss = train_loss;
                initial_loss_ = train_loss;
            }
            result_.last_train_loss = train_loss;
            result_.final_test_error = test_error;
            if (test_error < result_.min_test_error) {
                result_.min_test_error = test_error;
                result_.best_epoch = epoch;
            }

            // divergence: train loss above 10x the first epoch's loss for
            // 3 consecutive epochs aborts, keeping the last checkpoint
            divergent_epochs_ = (epoch > 0 && train_loss > 10.0 * initial_loss_)
                                    ? divergent_epochs_ + 1
                                    : 0;
            const bool last = epoch + 1 == cfg_.epochs;
            if (divergent_epochs_ >= 3) {
                save(epoch + 1);
                throw NumericError("train: loss diverged (above 10x the initial loss for 3 "
                                   "consecutive epochs); last checkpoint kept at " +
                                   checkpoint_path());
            }
            if (last || (epoch + 1) % cfg_.checkpoint_every == 0) save(epoch + 1);
        }
        return result_;
    }

    std::string checkpoint_path() const { return cfg_.out_dir + "/last.ckpt"; }

private:
    static index_t count_correct(const Tensor<T>& logits, const std::vector<int>& y) {
        const index_t n = logits.shape()[0];
        const index_t classes = logits.shape()[1];
        std::span<const T> ld = logits.data();
        index_t correct = 0;
        for (index_t i = 0; i < n; ++i) {
            index_t arg = 0;
            for (index_t j = 1; j < classes; ++j) {
                if (ld[i * classes + j] > ld[i * classes + arg]) arg = j;
            }
            if (static_cast<int>(arg) == y[static_cast<std::size_t>(i)]) ++correct;
        }
        return correct;
    }

    nlohmann::json describe_meta(index_t next_epoch) const {
        const ModelSpec& ms = model_.spec();
        nlohmann::json schedule = nlohmann::json::array();
        for (const auto& p : cfg_.lr_schedule) {
            schedule.push_back({{"epoch", p.epoch}, {"lr", p.lr}});
        }
        return nlohmann::json{
            {"kind", "fpnet-checkpoint"},
            {"model",
             {{"base", base_name(ms.base)},
              {"config", ms.resolved_config()},
              {"q", ms.resolved_q()},
              {"num_classes", ms.resolved_classes()},
              {"ablation", ms.ablation}}},
            {"precision", sizeof(T) == 4 ? "f32" : "f64"},
            {"seed", cfg_.seed},
            {"epochs", cfg_.epochs},
            {"batch_size", cfg_.batch_size},
            {"momentum", cfg_.momentum},
            {"weight_decay", cfg_.weight_decay},
            {"augment", cfg_.augment},
            {"schedule", schedule},
            {"train_count", train_ds_.count},
            {"rng", {{"scheme", "derived-streams"}, {"seed", cfg_.seed}}},
            {"next_epoch", next_epoch},
            {"metrics_rows", result_.csv_rows},
            {"min_test_error", result_.min_test_error},
            {"best_epoch", result_.best_epoch},
            {"first_train_loss", result_.first_train_loss},
            {"initial_loss", initial_loss_},
            {"divergent_epochs", divergent_epochs_},
        };
    }

    void save(index_t next_epoch) {
        std::vector<ckpt::NamedTensor<T>> tensors;
        for (const auto& p : model_.parameters()) tensors.push_back({p.name, p.value});
        for (auto& nt : opt_.state()) tensors.push_back(std::move(nt));
        ckpt::save_checkpoint(checkpoint_path(), describe_meta(next_epoch).dump(), tensors);
    }

    CifarNet<T>& model_;
    const data::Dataset& train_ds_;
    const data::Dataset& test_ds_;
    TrainConfig cfg_;
    SgdOptimizer<T> opt_;
    TrainResult result_;
    index_t start_epoch_ = 0;
    double initial_loss_ = 0.0;
    index_t divergent_epochs_ = 0;
};

}  // namespace fpnet
