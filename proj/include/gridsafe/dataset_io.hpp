#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "gridsafe/hetero.hpp"
#include "gridsafe/perturb.hpp"

namespace gridsafe {

inline constexpr int kDatasetFormatVersion = 1;

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string digest_string(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline Json entry_to_json(const DatasetEntry& entry) {
    HeteroGraph graph = attach_labels(embed_grid(entry.grid), entry.solution);
    return Json{{"draw_index", entry.draw_index},
                {"scenario", to_string(entry.scenario)},
                {"metadata", entry.metadata},
                {"graph", hetero_to_json(graph)}};
}

/// One graph per line; keys are sorted and doubles use shortest round-trip
/// text, so the serialization (and therefore the digest) is deterministic.
inline std::string split_to_jsonl(const std::vector<DatasetEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        out += entry_to_json(e).dump();
        out += '\n';
    }
    return out;
}

/// Content digest over both serialized splits: a pure function of
/// (case, task, specs, seed, counts).
inline std::string dataset_digest(const Dataset& ds) {
    std::uint64_t h = fnv1a64(split_to_jsonl(ds.train));
    h = fnv1a64(split_to_jsonl(ds.test), h);
    return digest_string(h);
}

inline Json dataset_manifest(const Dataset& ds, const std::string& digest) {
    return Json{{"format_version", kDatasetFormatVersion},
                {"case", ds.case_name},
                {"task", to_string(ds.task)},
                {"base_grid", grid_to_json_object(ds.base_grid)},
                {"train_spec", mutation_spec_to_json(ds.train_spec)},
                {"test_spec", mutation_spec_to_json(ds.test_spec)},
                {"counts", Json{{"train", ds.train.size()}, {"test", ds.test.size()}}},
                {"requested", Json{{"train", ds.n_train_requested},
                                   {"test", ds.n_test_requested}}},
                {"rejections", Json{{"train", ds.train_rejections},
                                    {"test", ds.test_rejections}}},
                {"angle_unit", "rad"},
                {"digest", digest}};
}

/// Writes manifest.json, train.jsonl and test.jsonl into dir.
/// Returns the content digest.
inline std::string export_dataset(const Dataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    const std::string train = split_to_jsonl(ds.train);
    const std::string test = split_to_jsonl(ds.test);
    const std::string digest = digest_string(fnv1a64(test, fnv1a64(train)));

    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(fs::path(dir) / name, std::ios::binary);
        if (!out) throw IoError("cannot write " + (fs::path(dir) / name).string());
        out << content;
    };
    write("train.jsonl", train);
    write("test.jsonl", test);
    write("manifest.json", dataset_manifest(ds, digest).dump(2) + "\n");
    return digest;
}

namespace detail {

inline std::vector<DatasetEntry> split_from_jsonl(const std::string& text, const Grid& base) {
    std::vector<DatasetEntry> out;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw SchemaError("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
        DatasetEntry entry;
        entry.draw_index = j.at("draw_index").get<std::uint64_t>();
        entry.scenario = scenario_from_string(j.at("scenario").get<std::string>());
        entry.metadata = j.at("metadata");
        entry.grid = replay_mutation(base, entry.scenario, entry.metadata);
        HeteroGraph graph = hetero_from_json(j.at("graph"));
        if (!graph.labeled)
            throw SchemaError("dataset line " + std::to_string(line_no) + ": graph is unlabeled");
        entry.solution = solution_from_labels(graph);
        if (entry.solution.state.vm.size() != static_cast<int>(entry.grid.buses.size()))
            throw SchemaError("dataset line " + std::to_string(line_no) +
                              ": label shape does not match the replayed grid");
        out.push_back(std::move(entry));
    }
    return out;
}

}  // namespace detail

/// Reads a dataset directory back; fails on version or digest mismatch.
inline Dataset import_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string manifest_text = read_file((fs::path(dir) / "manifest.json").string());
    Json manifest;
    try {
        manifest = Json::parse(manifest_text);
    } catch (const Json::exception& e) {
        throw SchemaError(std::string("manifest.json: ") + e.what());
    }
    if (manifest.value("format_version", -1) != kDatasetFormatVersion)
        throw SchemaError("unsupported dataset format version");

    Dataset ds;
    ds.case_name = manifest.at("case").get<std::string>();
    ds.task = task_from_string(manifest.at("task").get<std::string>());
    ds.base_grid = grid_from_json_object(manifest.at("base_grid"));
    ds.train_spec = mutation_spec_from_json(manifest.at("train_spec"));
    ds.test_spec = mutation_spec_from_json(manifest.at("test_spec"));
    ds.n_train_requested = manifest.at("requested").at("train").get<std::size_t>();
    ds.n_test_requested = manifest.at("requested").at("test").get<std::size_t>();
    ds.train_rejections = manifest.at("rejections").at("train").get<std::uint64_t>();
    ds.test_rejections = manifest.at("rejections").at("test").get<std::uint64_t>();

    const std::string train = read_file((fs::path(dir) / "train.jsonl").string());
    const std::string test = read_file((fs::path(dir) / "test.jsonl").string());
    const std::string digest = digest_string(fnv1a64(test, fnv1a64(train)));
    if (digest != manifest.at("digest").get<std::string>())
        throw SchemaError("dataset digest mismatch: manifest says " +
                          manifest.at("digest").get<std::string>() + ", content hashes to " +
                          digest);

    ds.train = detail::split_from_jsonl(train, ds.base_grid);
    ds.test = detail::split_from_jsonl(test, ds.base_grid);
    if (ds.train.size() != manifest.at("counts").at("train").get<std::size_t>() ||
        ds.test.size() != manifest.at("counts").at("test").get<std::size_t>())
        throw SchemaError("dataset entry counts do not match the manifest");
    return ds;
}

}  // namespace gridsafe
