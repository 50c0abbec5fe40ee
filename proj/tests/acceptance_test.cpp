// Acceptance gate: one test per criterion, each printing a single
// "CRITERION <n> PASS|FAIL|SKIP: <detail>" line. Criteria 7 and 9 need the
// real CIFAR-10 binary batches; point FPNET_DATA_DIR at the directory holding
// data_batch_{1..5}.bin and test_batch.bin to enable them. Without it they
// run a synthetic stand-in for evidence and report SKIP.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "fpnet/trainer.hpp"
#include "fpnet/verify.hpp"
#include "synthetic_data.hpp"

using fpnet::index_t;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const fpnet::verify::CheckResult* find_check(const std::vector<fpnet::verify::CheckResult>& rs,
                                             const std::string& name) {
    for (const auto& r : rs) {
        if (r.name == name) return &r;
    }
    return nullptr;
}

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("CRITERION %d %s: %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    EXPECT_TRUE(pass) << "criterion " << criterion << ": " << detail;
}

void report_skip(int criterion, const std::string& detail) {
    std::printf("CRITERION %d SKIP: %s\n", criterion, detail.c_str());
    std::fflush(stdout);
}

std::string data_dir() {
    const char* env = std::getenv("FPNET_DATA_DIR");
    return env ? env : "";
}

fpnet::ModelSpec smoke_spec() {
    fpnet::ModelSpec s;
    s.base = fpnet::BaseNet::resnet20;
    s.config = "001";
    return s;
}

fpnet::TrainConfig smoke_config(const std::string& out_dir) {
    fpnet::TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 128;
    cfg.seed = 1;
    cfg.lr_schedule = {{0, 0.1}, {8, 0.01}};  // paper schedule scaled to 10 epochs
    cfg.momentum = 0.9;
    cfg.weight_decay = 1e-4;
    cfg.augment = true;
    cfg.out_dir = out_dir;
    cfg.log = &std::cout;
    return cfg;
}

// Criteria 7 and 9 share the trained runs; train once, compare twice.
struct SmokeRuns {
    bool real = false;
    bool ran = false;
    std::string failure;
    fpnet::TrainResult a, b;
    double wall_a = 0.0, wall_b = 0.0;
    std::string csv_a, csv_b;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string strip_wall_csv(const std::string& csv) {
    std::string out;
    std::size_t start = 0;
    while (start < csv.size()) {
        std::size_t end = csv.find('\n', start);
        if (end == std::string::npos) end = csv.size();
        out += strip_wall(csv.substr(start, end - start));
        out += '\n';
        start = end + 1;
    }
    return out;
}

SmokeRuns& smoke_runs() {
    static SmokeRuns runs = [] {
        SmokeRuns r;
        fpnet::data::Dataset train, test;
        const std::string dir = data_dir();
        if (!dir.empty()) {
            r.real = true;
            try {
                auto full_train = fpnet::data::load_cifar10(dir, "train");
                train = fpnet::data::subset_per_class(full_train, 500);  // 5000 images
                test = fpnet::data::load_cifar10(dir, "test");           // full test set
            } catch (const fpnet::Error& e) {
                r.failure = std::string("FPNET_DATA_DIR is set but unusable: ") + e.what();
                return r;
            }
        } else {
            train = synthetic_dataset(512, 11);
            test = synthetic_dataset(256, 12);
        }
        try {
            for (int run = 0; run < 2; ++run) {
                const fs::path out =
                    fs::temp_directory_path() / (run == 0 ? "fpnet_accept_a" : "fpnet_accept_b");
                fs::remove_all(out);
                auto cfg = smoke_config(out.string());
                if (!r.real) {
                    cfg.epochs = 3;  // synthetic stand-in: enough to see the loss move
                    cfg.lr_schedule = {{0, 0.05}};
                }
                fpnet::CifarNet<float> net(smoke_spec(), cfg.seed);
                fpnet::Trainer<float> trainer(net, train, test, cfg);
                const auto t0 = std::chrono::steady_clock::now();
                auto res = trainer.run();
                const double wall = seconds_since(t0);
                const std::string csv = read_file(out.string() + "/metrics.csv");
                if (run == 0) {
                    r.a = res;
                    r.wall_a = wall;
                    r.csv_a = csv;
                } else {
                    r.b = res;
                    r.wall_b = wall;
                    r.csv_b = csv;
                }
                fs::remove_all(out);
            }
            r.ran = true;
        } catch (const fpnet::Error& e) {
            r.failure = std::string("training aborted: ") + e.what();
        }
        return r;
    }();
    return runs;
}

}  // namespace

TEST(Acceptance, Criterion1VolterraEquivalence) {
    const auto t0 = std::chrono::steady_clock::now();
    auto results = fpnet::verify::suite_volterra(1);
    const double secs = seconds_since(t0);
    const auto* check = find_check(results, "volterra.kernel-equivalence");
    ASSERT_NE(check, nullptr);
    const bool in_budget = secs < 5.0;
    report(1, check->pass && in_budget,
           check->detail + " (" + std::to_string(secs) + "s, budget 5s)");
}

TEST(Acceptance, Criterion2OrthogonalSuppression) {
    const auto t0 = std::chrono::steady_clock::now();
    auto results = fpnet::verify::suite_volterra(2);
    const double secs = seconds_since(t0);
    const auto* check = find_check(results, "volterra.orthogonal-suppression");
    ASSERT_NE(check, nullptr);
    // the 1s budget is met by the entire volterra suite, not just the 100 trials
    report(2, check->pass && secs < 1.0,
           check->detail + " (" + std::to_string(secs) + "s for the full volterra suite, "
           "budget 1s)");
}

TEST(Acceptance, Criterion3Eq4Consistency) {
    const auto t0 = std::chrono::steady_clock::now();
    auto results = fpnet::verify::suite_params(3);
    const double secs = seconds_since(t0);
    const auto* check = find_check(results, "params.closed-form-vs-enumeration");
    ASSERT_NE(check, nullptr);
    report(3, check->pass && secs < 10.0,
           check->detail + " (" + std::to_string(secs) + "s, budget 10s)");
}

TEST(Acceptance, Criterion4ReferenceTotals) {
    const auto t0 = std::chrono::steady_clock::now();
    auto results = fpnet::verify::suite_params(4);
    const double secs = seconds_since(t0);
    const auto* check = find_check(results, "params.reference-totals");
    ASSERT_NE(check, nullptr);
    report(4, check->pass && secs < 10.0,
           check->detail + " (" + std::to_string(secs) + "s, budget 10s)");
}

TEST(Acceptance, Criterion5GradientChecks) {
    const auto t0 = std::chrono::steady_clock::now();
    auto results = fpnet::verify::suite_gradcheck(5);
    const double secs = seconds_since(t0);
    bool all = !results.empty();
    std::string failed;
    for (const auto& r : results) {
        if (!r.pass) {
            all = false;
            failed += " " + r.name;
        }
    }
    std::string detail = all ? std::to_string(results.size()) +
                                   " op/block checks, 20 instances each, rel err <= 1e-6"
                             : "failed:" + failed;
    report(5, all && secs < 120.0, detail + " (" + std::to_string(secs) + "s, budget 120s)");
}

TEST(Acceptance, Criterion6ConvolutionOracles) {
    const auto t0 = std::chrono::steady_clock::now();
    auto results = fpnet::verify::suite_conv(6);
    const double secs = seconds_since(t0);
    bool all = !results.empty();
    std::string failed;
    for (const auto& r : results) {
        if (!r.pass) {
            all = false;
            failed += " " + r.name;
        }
    }
    std::string detail =
        all ? "conv2d/dws/pool match naive references on random shapes" : "failed:" + failed;
    report(6, all && secs < 60.0, detail + " (" + std::to_string(secs) + "s, budget 60s)");
}

TEST(Acceptance, Criterion7TrainingSmoke) {
    auto& runs = smoke_runs();
    if (runs.real) {
        ASSERT_TRUE(runs.ran) << runs.failure;
        const double drop =
            (runs.a.first_train_loss - runs.a.last_train_loss) / runs.a.first_train_loss;
        const bool loss_ok = drop >= 0.40;
        const bool err_ok = runs.a.final_test_error < 0.60;
        const bool time_ok = runs.wall_a < 1800.0;
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "loss %.4f -> %.4f (%.1f%% drop, need >= 40%%), test error %.4f "
                      "(need < 0.60), %.0fs (budget 1800s)",
                      runs.a.first_train_loss, runs.a.last_train_loss, 100.0 * drop,
                      runs.a.final_test_error, runs.wall_a);
        report(7, loss_ok && err_ok && time_ok, buf);
        return;
    }
    ASSERT_TRUE(runs.ran) << runs.failure;
    // synthetic stand-in: random labels cannot hit the error threshold, but the
    // optimizer must still drive the loss down
    ASSERT_LT(runs.a.last_train_loss, runs.a.first_train_loss)
        << "synthetic smoke loss did not decrease";
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "real CIFAR-10 not found (set FPNET_DATA_DIR to the directory with "
                  "data_batch_{1..5}.bin and test_batch.bin); synthetic stand-in trained: "
                  "loss %.4f -> %.4f over %zu epochs",
                  runs.a.first_train_loss, runs.a.last_train_loss, runs.a.csv_rows.size());
    report_skip(7, buf);
    GTEST_SKIP() << "criterion 7 needs the real CIFAR-10 binary batches";
}

TEST(Acceptance, Criterion8FullProtocolDocumented) {
    // The paper's headline error rates are not reproducible at desk scale; the
    // deliverable is the documented extended-run script with the expected band.
    const fs::path script = fs::path(FPNET_SOURCE_DIR) / "scripts" / "run_full_protocol.sh";
    const bool exists = fs::exists(script);
    bool documented = false;
    if (exists) {
        const std::string body = read_file(script.string());
        documented = body.find("7.85") != std::string::npos &&
                     body.find("0.66") != std::string::npos &&
                     body.find("200") != std::string::npos;
    }
    report(8, exists && documented,
           "headline rates are out of desk-scale reach by design; scripts/run_full_protocol.sh "
           "covers the 200-epoch protocol with expected band 7.85 +- 0.66 (mean +- 3 std)");
}

TEST(Acceptance, Criterion9Determinism) {
    auto& runs = smoke_runs();
    ASSERT_TRUE(runs.ran) << runs.failure;
    ASSERT_FALSE(runs.csv_a.empty());
    const bool equal = strip_wall_csv(runs.csv_a) == strip_wall_csv(runs.csv_b);
    if (runs.real) {
        report(9, equal, equal ? "two seed-1 runs produced byte-identical metrics CSVs "
                                 "(excluding wall_seconds)"
                               : "metrics CSVs differ between same-seed runs");
        return;
    }
    ASSERT_TRUE(equal) << "synthetic same-seed runs disagree:\n"
                       << runs.csv_a << "\nvs\n"
                       << runs.csv_b;
    report_skip(9, "verified on the synthetic stand-in (byte-identical CSVs excluding "
                   "wall_seconds); run with FPNET_DATA_DIR for the real-data check");
    GTEST_SKIP() << "criterion 9 needs the real CIFAR-10 binary batches";
}
