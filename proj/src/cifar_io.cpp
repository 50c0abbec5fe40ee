#include "fpnet/data.hpp"

#include <cstdio>
#include <filesystem>
#include <memory>

#include "fpnet/error.hpp"

namespace fpnet::data {

namespace {

constexpr index_t kRecordBytes = 3073;   // 1 label byte + 3072 pixel bytes
constexpr index_t kRecordsPerFile = 10000;

void load_file(const std::string& path, Dataset& ds) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path, ec);
    if (ec) throw IoError("cannot stat " + path + ": " + ec.message());
    if (static_cast<index_t>(size) != kRecordBytes * kRecordsPerFile) {
        throw FormatError(path + ": expected " + std::to_string(kRecordBytes * kRecordsPerFile) +
                          " bytes (" + std::to_string(kRecordsPerFile) + " records of " +
                          std::to_string(kRecordBytes) + "), got " + std::to_string(size));
    }
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "rb"),
                                                      &std::fclose);
    if (!f) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> record(static_cast<std::size_t>(kRecordBytes));
    for (index_t r = 0; r < kRecordsPerFile; ++r) {
        if (std::fread(record.data(), 1, record.size(), f.get()) != record.size()) {
            throw IoError(path + ": short read at record " + std::to_string(r));
        }
        const int label = record[0];
        if (label < 0 || label > 9) {
            throw FormatError(path + ": record " + std::to_string(r) + " has label byte " +
                              std::to_string(label) + " outside [0, 10)");
        }
        ds.labels.push_back(label);
        ds.images.insert(ds.images.end(), record.begin() + 1, record.end());
    }
}

}  // namespace

Dataset load_cifar10(const std::string& dir, const std::string& split) {
    Dataset ds;
    ds.split = split;
    if (split == "train") {
        for (int i = 1; i <= 5; ++i) {
            load_file(dir + "/data_batch_" + std::to_string(i) + ".bin", ds);
        }
    } else if (split == "test") {
        load_file(dir + "/test_batch.bin", ds);
    } else {
        throw ConfigError("unknown split \"" + split + "\" (expected train or test)");
    }
    ds.count = static_cast<index_t>(ds.labels.size());
    return ds;
}

Dataset subset_per_class(const Dataset& ds, index_t per_class) {
    if (per_class < 1) throw ConfigError("subset_per_class: need at least 1 image per class");
    Dataset out;
    out.split = ds.split;
    std::vector<index_t> taken(10, 0);
    for (index_t i = 0; i < ds.count; ++i) {
        const int label = ds.labels[static_cast<std::size_t>(i)];
        if (taken[static_cast<std::size_t>(label)] >= per_class) continue;
        ++taken[static_cast<std::size_t>(label)];
        out.labels.push_back(label);
        auto img = ds.image(i);
        out.images.insert(out.images.end(), img.begin(), img.end());
    }
    out.count = static_cast<index_t>(out.labels.size());
    for (int c = 0; c < 10; ++c) {
        if (taken[static_cast<std::size_t>(c)] < per_class) {
            throw ContractError("subset_per_class: class " + std::to_string(c) + " has only " +
                                std::to_string(taken[static_cast<std::size_t>(c)]) +
                                " of the requested " + std::to_string(per_class) + " images");
        }
    }
    return out;
}

}  // namespace fpnet::data
