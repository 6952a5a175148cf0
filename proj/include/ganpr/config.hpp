#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "ganpr/training.hpp"

namespace ganpr {

constexpr int kConfigVersion = 1;

struct MatchingConfig {
    std::string direction = "BtoA";  // queries are translated toward the database domain
    std::vector<int> lengths = {1, 3, 5};
    int threshold_grid = 200;
    int tolerance_frames = 2;
    int stride = 1;
    bool normalize_before_stack = true;
    bool translate_queries = true;  // false evaluates raw features in one domain
    double heatmap_clip = 1.0;

    bool operator==(const MatchingConfig&) const = default;

    void validate() const {
        check(direction == "BtoA" || direction == "AtoB",
              "matching config: direction must be AtoB or BtoA, got '", direction, "'");
        check(!lengths.empty(), "matching config: lengths must not be empty");
        for (int n : lengths) check(n >= 1, "matching config: lengths must be >= 1, got ", n);
        check(threshold_grid >= 2, "matching config: threshold_grid must be >= 2");
        check(tolerance_frames >= 0, "matching config: tolerance_frames must be >= 0");
        check(stride >= 1, "matching config: stride must be >= 1");
        check(heatmap_clip > 0.0, "matching config: heatmap_clip must be positive");
    }
};

struct SynthConfig {
    uint64_t seed = 1;
    int64_t count = 100;
    int size = 64;
    int stationary_runs = 0;
    int run_length = 4;

    bool operator==(const SynthConfig&) const = default;
};

struct PathsConfig {
    std::string data_a;
    std::string data_b;
    std::string out_dir = "out";
    std::string split = "none";  // none | half-quarter
    double train_fraction = 1.0;

    bool operator==(const PathsConfig&) const = default;

    void validate() const {
        check(split == "none" || split == "half-quarter",
              "paths config: split must be 'none' or 'half-quarter', got '", split, "'");
        check(train_fraction > 0.0 && train_fraction <= 1.0,
              "paths config: train_fraction must be in (0,1]");
    }
};

struct RunConfig {
    int version = kConfigVersion;
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    TrainingConfig training;
    MatchingConfig matching;
    SynthConfig synth;
    PathsConfig paths;

    bool operator==(const RunConfig&) const = default;
};

namespace cfg_detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        check(known.count(it.key()) != 0, "config: unknown key '",
              scope.empty() ? it.key() : scope + "." + it.key(), "'");
    }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace cfg_detail

inline nlohmann::json to_json(const MatchingConfig& c) {
    return {{"direction", c.direction},
            {"lengths", c.lengths},
            {"threshold_grid", c.threshold_grid},
            {"tolerance_frames", c.tolerance_frames},
            {"stride", c.stride},
            {"normalize_before_stack", c.normalize_before_stack},
            {"translate_queries", c.translate_queries},
            {"heatmap_clip", c.heatmap_clip}};
}

inline nlohmann::json to_json(const SynthConfig& c) {
    return {{"seed", c.seed},
            {"count", c.count},
            {"size", c.size},
            {"stationary_runs", c.stationary_runs},
            {"run_length", c.run_length}};
}

inline nlohmann::json to_json(const PathsConfig& c) {
    return {{"data_a", c.data_a},
            {"data_b", c.data_b},
            {"out_dir", c.out_dir},
            {"split", c.split},
            {"train_fraction", c.train_fraction}};
}

inline nlohmann::json to_json(const RunConfig& c) {
    return {{"version", c.version},
            {"generator", to_json(c.generator)},
            {"discriminator", to_json(c.discriminator)},
            {"training", to_json(c.training)},
            {"matching", to_json(c.matching)},
            {"synth", to_json(c.synth)},
            {"paths", to_json(c.paths)}};
}

// Strict parse: unknown keys are rejected by name, missing keys keep their
// documented defaults. parse(render(c)) == c.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
    using cfg_detail::read_field;
    using cfg_detail::reject_unknown_keys;
    RunConfig c;
    reject_unknown_keys(
        j, {"version", "generator", "discriminator", "training", "matching", "synth", "paths"},
        "");
    read_field(j, "version", c.version);
    check(c.version == kConfigVersion, "config: version ", c.version, " unsupported (expected ",
          kConfigVersion, ")");
    if (j.contains("generator")) {
        const auto& g = j.at("generator");
        reject_unknown_keys(g,
                            {"input_size", "input_channels", "encoder_channels", "kernel",
                             "stride", "leaky_slope", "skip_connections"},
                            "generator");
        read_field(g, "input_size", c.generator.input_size);
        read_field(g, "input_channels", c.generator.input_channels);
        read_field(g, "encoder_channels", c.generator.encoder_channels);
        read_field(g, "kernel", c.generator.kernel);
        read_field(g, "stride", c.generator.stride);
        read_field(g, "leaky_slope", c.generator.leaky_slope);
        read_field(g, "skip_connections", c.generator.skip_connections);
    }
    if (j.contains("discriminator")) {
        const auto& d = j.at("discriminator");
        reject_unknown_keys(d,
                            {"input_size", "input_channels", "encoder_channels", "kernel",
                             "stride", "leaky_slope", "feature_dim"},
                            "discriminator");
        read_field(d, "input_size", c.discriminator.input_size);
        read_field(d, "input_channels", c.discriminator.input_channels);
        read_field(d, "encoder_channels", c.discriminator.encoder_channels);
        read_field(d, "kernel", c.discriminator.kernel);
        read_field(d, "stride", c.discriminator.stride);
        read_field(d, "leaky_slope", c.discriminator.leaky_slope);
        read_field(d, "feature_dim", c.discriminator.feature_dim);
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        reject_unknown_keys(t,
                            {"batch_size", "total_steps", "lr_generator", "lr_discriminator",
                             "cyclic_weight", "seed", "checkpoint_interval"},
                            "training");
        read_field(t, "batch_size", c.training.batch_size);
        read_field(t, "total_steps", c.training.total_steps);
        read_field(t, "lr_generator", c.training.lr_generator);
        read_field(t, "lr_discriminator", c.training.lr_discriminator);
        read_field(t, "cyclic_weight", c.training.cyclic_weight);
        read_field(t, "seed", c.training.seed);
        read_field(t, "checkpoint_interval", c.training.checkpoint_interval);
    }
    if (j.contains("matching")) {
        const auto& m = j.at("matching");
        reject_unknown_keys(m,
                            {"direction", "lengths", "threshold_grid", "tolerance_frames",
                             "stride", "normalize_before_stack", "translate_queries",
                             "heatmap_clip"},
                            "matching");
        read_field(m, "direction", c.matching.direction);
        read_field(m, "lengths", c.matching.lengths);
        read_field(m, "threshold_grid", c.matching.threshold_grid);
        read_field(m, "tolerance_frames", c.matching.tolerance_frames);
        read_field(m, "stride", c.matching.stride);
        read_field(m, "normalize_before_stack", c.matching.normalize_before_stack);
        read_field(m, "translate_queries", c.matching.translate_queries);
        read_field(m, "heatmap_clip", c.matching.heatmap_clip);
    }
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        reject_unknown_keys(s, {"seed", "count", "size", "stationary_runs", "run_length"},
                            "synth");
        read_field(s, "seed", c.synth.seed);
        read_field(s, "count", c.synth.count);
        read_field(s, "size", c.synth.size);
        read_field(s, "stationary_runs", c.synth.stationary_runs);
        read_field(s, "run_length", c.synth.run_length);
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        reject_unknown_keys(p, {"data_a", "data_b", "out_dir", "split", "train_fraction"},
                            "paths");
        read_field(p, "data_a", c.paths.data_a);
        read_field(p, "data_b", c.paths.data_b);
        read_field(p, "out_dir", c.paths.out_dir);
        read_field(p, "split", c.paths.split);
        read_field(p, "train_fraction", c.paths.train_fraction);
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "config: cannot open '", path, "'");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    check(!j.is_discarded(), "config: '", path, "' is not valid JSON");
    return run_config_from_json(j);
}

inline void save_run_config(const RunConfig& c, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    check(out.good(), "config: cannot open '", path, "' for writing");
    out << to_json(c).dump(2) << "\n";
    check(out.good(), "config: write to '", path, "' failed");
}

}  // namespace ganpr
