#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "fpnet/checkpoint.hpp"
#include "fpnet/data.hpp"
#include "fpnet/model.hpp"
#include "fpnet/parallel.hpp"
#include "fpnet/trainer.hpp"
#include "fpnet/verify.hpp"

namespace {

using fpnet::index_t;

struct ModelFlags {
    std::string model = "resnet20";
    std::string config;
    index_t q = 0;  // 0 = base default
    index_t num_classes = 0;
    bool ablation = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& mf, bool counting_bases) {
    std::vector<std::string> bases{"resnet20", "resnet32", "resnet44"};
    if (counting_bases) bases.push_back("resnet50");
    cmd->add_option("--model", mf.model, "base architecture")
        ->check(CLI::IsMember(bases))
        ->capture_default_str();
    cmd->add_option("--config", mf.config,
                    "FP substitution bits, one per layer (empty = all zeros)");
    cmd->add_option("--q", mf.q, "FP expansion factor (0 = base default)");
    cmd->add_option("--num-classes", mf.num_classes, "classifier width (0 = base default)");
    cmd->add_flag("--ablation", mf.ablation, "single-filter ReLU blocks instead of products");
}

fpnet::ModelSpec to_spec(const ModelFlags& mf) {
    fpnet::ModelSpec spec;
    spec.base = fpnet::parse_base(mf.model);
    spec.config = mf.config;
    spec.q = mf.q;
    spec.num_classes = mf.num_classes;
    spec.ablation = mf.ablation;
    spec.validate();
    return spec;
}

std::string resolve_data_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("FPNET_DATA_DIR"); env && *env) return env;
    throw fpnet::ConfigError(
        "no data directory: pass --data-dir or set FPNET_DATA_DIR to a directory with the "
        "CIFAR-10 binary batches");
}

std::vector<fpnet::LrPoint> parse_schedule(const std::string& text) {
    std::vector<fpnet::LrPoint> points;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string item = text.substr(pos, comma - pos);
        const std::size_t colon = item.find(':');
        if (colon == std::string::npos) {
            throw fpnet::ConfigError("bad --lr-schedule entry \"" + item +
                                     "\" (expected epoch:rate)");
        }
        try {
            points.push_back({static_cast<index_t>(std::stoll(item.substr(0, colon))),
                              std::stod(item.substr(colon + 1))});
        } catch (const std::exception&) {
            throw fpnet::ConfigError("bad --lr-schedule entry \"" + item +
                                     "\" (expected epoch:rate)");
        }
        pos = comma + 1;
    }
    if (points.empty()) throw fpnet::ConfigError("--lr-schedule is empty");
    return points;
}

std::string schedule_str(const std::vector<fpnet::LrPoint>& schedule) {
    std::string s;
    for (const auto& p : schedule) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%s%lld:%g", s.empty() ? "" : ", ",
                      static_cast<long long>(p.epoch), p.lr);
        s += buf;
    }
    return s;
}

void print_summary_table(const fpnet::ModelSummary& s, bool with_depth) {
    std::printf("model %s\n", s.model_name.c_str());
    if (with_depth) {
        std::printf("depth %lld weighted layers\n", static_cast<long long>(s.depth));
    }
    std::printf("%-18s %-16s %12s  %s\n", "block", "kind", "params", "shape");
    for (const auto& row : s.rows) {
        std::printf("%-18s %-16s %12lld  %s%s\n", row.name.c_str(), row.kind.c_str(),
                    static_cast<long long>(row.learnable), row.detail.c_str(),
                    row.downsample ? "  [down]" : "");
    }
    std::printf("total learnable %lld (%lldK", static_cast<long long>(s.total_learnable),
                static_cast<long long>((s.total_learnable + 500) / 1000));
    if (s.total_learnable >= 1000000) {
        std::printf(", %.1fM", static_cast<double>(s.total_learnable) / 1e6);
    }
    std::printf(")\n");
}

nlohmann::json summary_json(const fpnet::ModelSpec& spec, const fpnet::ModelSummary& s) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : s.rows) {
        rows.push_back({{"name", row.name},
                        {"kind", row.kind},
                        {"learnable", row.learnable},
                        {"downsample", row.downsample},
                        {"shape", row.detail}});
    }
    return nlohmann::json{{"model", s.model_name},
                          {"base", fpnet::base_name(spec.base)},
                          {"config", spec.resolved_config()},
                          {"q", spec.resolved_q()},
                          {"num_classes", spec.resolved_classes()},
                          {"ablation", spec.ablation},
                          {"depth", s.depth},
                          {"total_learnable", s.total_learnable},
                          {"total_k", (s.total_learnable + 500) / 1000},
                          {"blocks", rows}};
}

fpnet::ModelSummary summarize_spec(const fpnet::ModelSpec& spec) {
    if (spec.base == fpnet::BaseNet::resnet50) return fpnet::summarize_resnet50(spec);
    fpnet::CifarNet<float> net(spec, 1);
    return fpnet::summarize(net);
}

struct TrainFlags {
    ModelFlags mf;
    std::string data_dir;
    std::string out_dir;
    std::string resume;
    std::string schedule = "0:0.1,100:0.01,150:0.001";
    std::string precision = "f32";
    index_t epochs = 200;
    index_t batch_size = 128;
    index_t subset = 0;
    index_t checkpoint_every = 1;
    index_t threads = 0;
    std::uint64_t seed = 1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    bool no_augment = false;
};

template <typename T>
int run_train(const TrainFlags& tf) {
    const fpnet::ModelSpec spec = to_spec(tf.mf);
    const std::string dir = resolve_data_dir(tf.data_dir);
    fpnet::data::Dataset train = fpnet::data::load_cifar10(dir, "train");
    const fpnet::data::Dataset test = fpnet::data::load_cifar10(dir, "test");
    if (tf.subset > 0) train = fpnet::data::subset_per_class(train, tf.subset);

    fpnet::TrainConfig cfg;
    cfg.epochs = tf.epochs;
    cfg.lr_schedule = parse_schedule(tf.schedule);
    cfg.momentum = tf.momentum;
    cfg.batch_size = tf.batch_size;
    cfg.weight_decay = tf.weight_decay;
    cfg.seed = tf.seed;
    cfg.augment = !tf.no_augment;
    cfg.out_dir = tf.out_dir;
    cfg.checkpoint_every = tf.checkpoint_every;
    cfg.log = &std::cout;
    if (cfg.out_dir.empty()) {
        cfg.out_dir = "runs/" + fpnet::base_name(spec.base) + "-" + spec.resolved_config() +
                      (spec.ablation ? "-ablation" : "") + "-seed" + std::to_string(tf.seed);
    }

    std::printf("model:     %s (%s)\n", spec.display_name().c_str(),
                sizeof(T) == 4 ? "f32" : "f64");
    std::printf("data:      %s (train %lld, test %lld)\n", dir.c_str(),
                static_cast<long long>(train.count), static_cast<long long>(test.count));
    std::printf("epochs:    %lld  batch %lld  seed %llu  augment %s\n",
                static_cast<long long>(cfg.epochs), static_cast<long long>(cfg.batch_size),
                static_cast<unsigned long long>(cfg.seed), cfg.augment ? "on" : "off");
    std::printf("schedule:  %s  momentum %g  weight-decay %g\n",
                schedule_str(cfg.lr_schedule).c_str(), cfg.momentum, cfg.weight_decay);
    std::printf("out:       %s\n", cfg.out_dir.c_str());
    std::printf("threads:   %d\n", fpnet::parallel::num_threads());
    std::printf("%s\n", fpnet::metrics_header().c_str());

    fpnet::CifarNet<T> model(spec, cfg.seed);
    fpnet::Trainer<T> trainer(model, train, test, cfg);
    if (!tf.resume.empty()) trainer.resume_from(tf.resume);
    const fpnet::TrainResult res = trainer.run();
    std::printf("done: min test error %.4f (epoch %lld), final %.4f, checkpoint %s\n",
                res.min_test_error, static_cast<long long>(res.best_epoch), res.final_test_error,
                trainer.checkpoint_path().c_str());
    return 0;
}

template <typename T>
int run_eval(const std::string& path, const nlohmann::json& meta, const std::string& data_dir,
             index_t batch_size) {
    fpnet::ModelSpec spec;
    const auto& jm = meta.at("model");
    spec.base = fpnet::parse_base(jm.at("base").get<std::string>());
    spec.config = jm.at("config").get<std::string>();
    spec.q = jm.at("q").get<index_t>();
    spec.num_classes = jm.at("num_classes").get<index_t>();
    spec.ablation = jm.at("ablation").get<bool>();

    fpnet::CifarNet<T> model(spec, meta.at("seed").get<std::uint64_t>());
    const auto ck = fpnet::ckpt::load_checkpoint<T>(path);
    for (auto& p : model.parameters()) {
        const fpnet::Tensor<T>* src = ck.find(p.name);
        if (!src) throw fpnet::FormatError("checkpoint is missing tensor " + p.name);
        if (src->shape() != p.value.shape()) {
            throw fpnet::FormatError("checkpoint tensor " + p.name + " has unexpected shape");
        }
        std::copy(src->data().begin(), src->data().end(), p.value.data_mut().begin());
    }
    const fpnet::data::Dataset test = fpnet::data::load_cifar10(data_dir, "test");
    std::printf("model:  %s (%s), trained %lld epochs\n", spec.display_name().c_str(),
                meta.at("precision").get<std::string>().c_str(),
                meta.at("next_epoch").get<long long>());
    const double err = fpnet::evaluate(model, test, fpnet::data::AugmentPolicy{}, batch_size);
    std::printf("test error %.4f (top-1 accuracy %.4f) over %lld images\n", err, 1.0 - err,
                static_cast<long long>(test.count));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // keep big tensor buffers on the heap instead of mmap churn
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
#endif

    CLI::App app{"feature-product networks on CIFAR-10"};
    app.require_subcommand(1);

    TrainFlags tf;
    CLI::App* train = app.add_subcommand("train", "train a model and write metrics/checkpoints");
    add_model_flags(train, tf.mf, false);
    train->add_option("--data-dir", tf.data_dir, "CIFAR-10 binary directory (or FPNET_DATA_DIR)");
    train->add_option("--epochs", tf.epochs)->capture_default_str();
    train->add_option("--batch-size", tf.batch_size)->capture_default_str();
    train->add_option("--seed", tf.seed)->capture_default_str();
    train->add_option("--subset", tf.subset, "train on the first N images per class (0 = all)");
    train->add_option("--out-dir", tf.out_dir, "run directory (default runs/<model>-<config>-...)");
    train->add_option("--precision", tf.precision)
        ->check(CLI::IsMember({"f32", "f64"}))
        ->capture_default_str();
    train->add_option("--lr-schedule", tf.schedule, "comma-separated epoch:rate boundaries")
        ->capture_default_str();
    train->add_option("--momentum", tf.momentum)->capture_default_str();
    train->add_option("--weight-decay", tf.weight_decay)->capture_default_str();
    train->add_option("--checkpoint-every", tf.checkpoint_every)->capture_default_str();
    train->add_option("--threads", tf.threads, "worker threads (0 = hardware)");
    train->add_option("--resume", tf.resume, "checkpoint to continue from");
    train->add_flag("--no-augment", tf.no_augment, "disable flip/crop augmentation");

    ModelFlags count_mf;
    bool count_json = false;
    CLI::App* count = app.add_subcommand("count-params", "parameter accounting for a model spec");
    add_model_flags(count, count_mf, true);
    count->add_flag("--json", count_json, "machine-readable output");

    ModelFlags desc_mf;
    CLI::App* describe = app.add_subcommand("describe", "layer-by-layer architecture listing");
    add_model_flags(describe, desc_mf, true);

    std::string verify_suite = "all";
    std::string verify_data_dir;
    std::uint64_t verify_seed = 1;
    index_t verify_threads = 0;
    CLI::App* verify = app.add_subcommand("verify", "run property suites against the oracles");
    verify->add_option("--suite", verify_suite)
        ->check(CLI::IsMember({"all", "gradcheck", "volterra", "params", "conv", "data"}))
        ->capture_default_str();
    verify->add_option("--seed", verify_seed)->capture_default_str();
    verify->add_option("--data-dir", verify_data_dir, "needed by the data suite");
    verify->add_option("--threads", verify_threads, "worker threads (0 = hardware)");

    std::string eval_ckpt;
    std::string eval_data_dir;
    index_t eval_batch = 256;
    index_t eval_threads = 0;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--data-dir", eval_data_dir, "CIFAR-10 binary directory (or FPNET_DATA_DIR)");
    eval->add_option("--batch-size", eval_batch)->capture_default_str();
    eval->add_option("--threads", eval_threads, "worker threads (0 = hardware)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // 0 covers --help/--version
    }

    try {
        if (app.got_subcommand(train)) {
            if (tf.threads > 0) fpnet::parallel::set_num_threads(static_cast<int>(tf.threads));
            return tf.precision == "f64" ? run_train<double>(tf) : run_train<float>(tf);
        }
        if (app.got_subcommand(count)) {
            const fpnet::ModelSpec spec = to_spec(count_mf);
            const fpnet::ModelSummary s = summarize_spec(spec);
            if (count_json) {
                std::printf("%s\n", summary_json(spec, s).dump(2).c_str());
            } else {
                print_summary_table(s, false);
            }
            return 0;
        }
        if (app.got_subcommand(describe)) {
            const fpnet::ModelSpec spec = to_spec(desc_mf);
            print_summary_table(summarize_spec(spec), true);
            return 0;
        }
        if (app.got_subcommand(verify)) {
            if (verify_threads > 0) {
                fpnet::parallel::set_num_threads(static_cast<int>(verify_threads));
            }
            std::printf("suite %s, seed %llu\n", verify_suite.c_str(),
                        static_cast<unsigned long long>(verify_seed));
            std::vector<fpnet::verify::CheckResult> results;
            auto append = [&](std::vector<fpnet::verify::CheckResult> r) {
                results.insert(results.end(), r.begin(), r.end());
            };
            if (verify_suite == "all" || verify_suite == "volterra") {
                append(fpnet::verify::suite_volterra(verify_seed));
            }
            if (verify_suite == "all" || verify_suite == "params") {
                append(fpnet::verify::suite_params(verify_seed));
            }
            if (verify_suite == "all" || verify_suite == "gradcheck") {
                append(fpnet::verify::suite_gradcheck(verify_seed));
            }
            if (verify_suite == "all" || verify_suite == "conv") {
                append(fpnet::verify::suite_conv(verify_seed));
            }
            if (verify_suite == "data") {
                append(fpnet::verify::suite_data(resolve_data_dir(verify_data_dir)));
            } else if (verify_suite == "all") {
                std::string dir = verify_data_dir;
                if (dir.empty()) {
                    if (const char* env = std::getenv("FPNET_DATA_DIR"); env && *env) dir = env;
                }
                if (dir.empty()) {
                    std::printf("[SKIP] data suite: no --data-dir and FPNET_DATA_DIR unset\n");
                } else {
                    append(fpnet::verify::suite_data(dir));
                }
            }
            fpnet::verify::print_results(results, std::cout);
            const bool ok = fpnet::verify::all_pass(results);
            std::printf("%zu checks, %s\n", results.size(), ok ? "all passed" : "FAILURES");
            return ok ? 0 : 1;
        }
        if (app.got_subcommand(eval)) {
            if (eval_threads > 0) {
                fpnet::parallel::set_num_threads(static_cast<int>(eval_threads));
            }
            const std::string dir = resolve_data_dir(eval_data_dir);
            const nlohmann::json meta =
                nlohmann::json::parse(fpnet::ckpt::peek_meta(eval_ckpt));
            const std::string precision = meta.at("precision").get<std::string>();
            return precision == "f64" ? run_eval<double>(eval_ckpt, meta, dir, eval_batch)
                                      : run_eval<float>(eval_ckpt, meta, dir, eval_batch);
        }
    } catch (const fpnet::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
