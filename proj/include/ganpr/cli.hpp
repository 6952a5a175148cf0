#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ganpr/config.hpp"
#include "ganpr/data.hpp"
#include "ganpr/placerec.hpp"
#include "ganpr/svgplot.hpp"
#include "ganpr/training.hpp"

namespace ganpr {
namespace cli {

namespace fs = std::filesystem;

namespace detail {

inline std::string frame_name(int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06lld.png", static_cast<long long>(index));
    return buf;
}

// translate a record set in eval-mode batches, preserving frame order
inline std::vector<Tensor> translate_all(Generator& gen, const std::vector<ImageRecord>& records,
                                         int batch_size, double* ms_per_image = nullptr) {
    std::vector<Tensor> out;
    const auto start = std::chrono::steady_clock::now();
    for (size_t begin = 0; begin < records.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(records.size(), begin + static_cast<size_t>(batch_size));
        const auto& shape = records[begin].pixels.shape();
        Tensor batch({static_cast<int>(end - begin), shape[0], shape[1], shape[2]});
        for (size_t i = begin; i < end; ++i)
            std::copy(records[i].pixels.values().begin(), records[i].pixels.values().end(),
                      batch.values().begin() +
                          static_cast<long>((i - begin) * records[i].pixels.numel()));
        Tensor translated = gen.forward(batch, Mode::eval);
        const size_t stride = records[begin].pixels.numel();
        for (size_t i = begin; i < end; ++i) {
            Tensor img = Tensor::from_values(
                {shape[0], shape[1], shape[2]},
                std::vector<double>(
                    translated.values().begin() + static_cast<long>((i - begin) * stride),
                    translated.values().begin() + static_cast<long>((i - begin + 1) * stride)));
            out.push_back(std::move(img));
        }
    }
    if (ms_per_image != nullptr) {
        const auto elapsed = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        *ms_per_image = records.empty() ? 0.0 : elapsed / static_cast<double>(records.size());
    }
    return out;
}

inline std::vector<Tensor> record_pixels(const std::vector<ImageRecord>& records) {
    std::vector<Tensor> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.pixels);
    return out;
}

inline void mark_failure(const std::string& out_dir, const std::string& message) {
    std::error_code ec;
    if (out_dir.empty() || !fs::exists(out_dir, ec)) return;
    std::ofstream marker(fs::path(out_dir) / "FAILED", std::ios::trunc);
    marker << message << "\n";
}

}  // namespace detail

// ---- synth -------------------------------------------------------------------

inline int cmd_synth(uint64_t seed, int64_t count, int size, const std::string& out_dir,
                     int stationary_runs, int run_length) {
    SynthOptions opts;
    opts.stationary_runs = stationary_runs;
    opts.run_length = run_length;
    auto [seq_a, seq_b] = synthesize_paired_domains(seed, count, size, opts);
    fs::create_directories(fs::path(out_dir) / "A");
    fs::create_directories(fs::path(out_dir) / "B");
    std::ostringstream manifest;
    manifest << "frame_index\tdomain\tpath\tseed\n";
    const auto dump = [&](const std::vector<ImageRecord>& seq, const std::string& domain) {
        for (const auto& rec : seq) {
            const std::string rel = domain + "/" + detail::frame_name(rec.frame_index);
            imageio::write_image(u8_from_tensor(rec.pixels),
                                 (fs::path(out_dir) / rel).string());
            manifest << rec.frame_index << '\t' << domain << '\t' << rel << '\t' << seed << '\n';
        }
    };
    dump(seq_a, "A");
    dump(seq_b, "B");
    std::ofstream mf(fs::path(out_dir) / "manifest.tsv", std::ios::trunc);
    check(mf.good(), "synth: cannot write manifest in '", out_dir, "'");
    mf << manifest.str();
    check(mf.good(), "synth: manifest write failed");
    std::cout << "synthesized " << count << " paired frames (" << size << "x" << size
              << ") into " << out_dir << "\n";
    return 0;
}

// ---- train -------------------------------------------------------------------

inline int cmd_train(const std::string& config_path, const std::string& resume_path) {
    RunConfig cfg = load_run_config(config_path);
    cfg.generator.validate();
    cfg.discriminator.validate();
    cfg.training.validate();
    cfg.paths.validate();
    check(!cfg.paths.data_a.empty() && !cfg.paths.data_b.empty(),
          "train: config must set paths.data_a and paths.data_b");
    const std::string out_dir = cfg.paths.out_dir;
    fs::create_directories(out_dir);

    auto loaded_a = load_image_dir(cfg.paths.data_a, cfg.generator.input_size, "A");
    auto loaded_b = load_image_dir(cfg.paths.data_b, cfg.generator.input_size, "B");
    std::vector<Tensor> train_a, train_b;
    if (cfg.paths.split == "half-quarter") {
        auto split = split_dataset(loaded_a.records, loaded_b.records, cfg.paths.train_fraction);
        train_a = detail::record_pixels(split.train_a);
        train_b = detail::record_pixels(split.train_b);
    } else {
        train_a = detail::record_pixels(loaded_a.records);
        train_b = detail::record_pixels(loaded_b.records);
    }

    TrainerState state;
    if (!resume_path.empty()) {
        state = load_checkpoint(resume_path);
        check(state.gen_config == cfg.generator,
              "train: checkpoint generator config does not match the config file");
        state.config.total_steps = cfg.training.total_steps;  // allow extending a run
    } else {
        state = init_trainer(cfg.generator, cfg.discriminator, cfg.training);
    }

    save_run_config(cfg, (fs::path(out_dir) / "config_echo.json").string());
    const std::string log_path = (fs::path(out_dir) / "loss_log.tsv").string();
    const bool fresh_log = resume_path.empty() || !fs::exists(log_path);
    std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
    check(log.good(), "train: cannot open loss log '", log_path, "'");
    if (fresh_log) write_loss_log_header(log);

    TrainHooks hooks;
    hooks.on_record = [&](const LossRecord& rec) {
        append_loss_record(log, rec);
        log.flush();
    };
    hooks.on_checkpoint = [&](TrainerState& st, int64_t step) {
        char name[64];
        std::snprintf(name, sizeof(name), "ckpt_step_%06lld.bin", static_cast<long long>(step));
        save_checkpoint(st, (fs::path(out_dir) / name).string());
    };
    train(state, train_a, train_b, hooks,
          resume_path.empty() ? "" : "resumed from " + resume_path);
    save_checkpoint(state, (fs::path(out_dir) / "ckpt_final.bin").string());
    std::cout << "trained to step " << state.step << "; outputs in " << out_dir << "\n";
    return 0;
}

// ---- translate ----------------------------------------------------------------

inline int cmd_translate(const std::string& checkpoint, const std::string& direction,
                         const std::string& in_dir, const std::string& out_dir) {
    check(direction == "AtoB" || direction == "BtoA",
          "translate: direction must be AtoB or BtoA, got '", direction, "'");
    TrainerState state = load_checkpoint(checkpoint);
    Generator& gen = direction == "AtoB" ? state.nets.g_b : state.nets.g_a;
    auto loaded = load_image_dir(in_dir, gen.config.input_size);
    fs::create_directories(out_dir);
    double ms_per_image = 0.0;
    auto translated = detail::translate_all(gen, loaded.records, 16, &ms_per_image);
    for (size_t i = 0; i < translated.size(); ++i) {
        const std::string name = loaded.records[i].source_name;
        imageio::write_image(u8_from_tensor(translated[i]), (fs::path(out_dir) / name).string());
    }
    std::cout << "translated " << translated.size() << " images " << direction << " at "
              << ms_per_image << " ms/image into " << out_dir << "\n";
    return 0;
}

// ---- match-eval ----------------------------------------------------------------

struct MatchEvalResult {
    std::vector<PRCurve> curves;
    std::vector<double> auc;
    DistanceMatrix db_self;  // n=1 database self-distances for heatmap inspection
    size_t query_count = 0;
    size_t db_count = 0;
};

// Library-level pipeline: translate queries into the database domain, take
// discriminator features there, and evaluate sequence matching.
inline MatchEvalResult match_eval_pipeline(TrainerState& state,
                                           const std::vector<ImageRecord>& query_records,
                                           const std::vector<ImageRecord>& db_records,
                                           const MatchingConfig& mc) {
    mc.validate();
    Generator& gen = mc.direction == "BtoA" ? state.nets.g_a : state.nets.g_b;
    Discriminator& disc = mc.direction == "BtoA" ? state.nets.d_a : state.nets.d_b;

    auto query_inputs = mc.translate_queries ? detail::translate_all(gen, query_records, 16)
                                             : detail::record_pixels(query_records);
    auto query_features = extract_features(disc, query_inputs, "query");
    auto db_features = extract_features(disc, detail::record_pixels(db_records), "db");

    MatchEvalResult result;
    result.query_count = query_records.size();
    result.db_count = db_records.size();
    GroundTruth gt = GroundTruth::identity(query_records.size(), mc.tolerance_frames);
    SequenceOptions seq_opts;
    seq_opts.normalize_before_stack = mc.normalize_before_stack;
    const auto grid = make_threshold_grid(mc.threshold_grid);
    result.curves =
        sweep_sequence_lengths(query_features, db_features, mc.lengths, gt, grid, seq_opts);
    for (const auto& curve : result.curves) result.auc.push_back(pr_auc(curve));
    result.db_self = distance_matrix(build_sequence_features(db_features, 1, seq_opts),
                                     build_sequence_features(db_features, 1, seq_opts));
    return result;
}

inline int cmd_match_eval(const std::string& checkpoint, const std::string& query_dir,
                          const std::string& db_dir, const std::string& out_dir,
                          MatchingConfig mc, bool save_features) {
    mc.validate();
    TrainerState state = load_checkpoint(checkpoint);
    const int size = state.gen_config.input_size;
    auto queries = load_image_dir(query_dir, size, mc.direction == "BtoA" ? "B" : "A", mc.stride);
    auto database = load_image_dir(db_dir, size, mc.direction == "BtoA" ? "A" : "B", mc.stride);
    fs::create_directories(out_dir);

    auto result = match_eval_pipeline(state, queries.records, database.records, mc);

    std::ostringstream summary;
    summary << "direction\t" << mc.direction << "\n"
            << "queries\t" << result.query_count << "\n"
            << "database\t" << result.db_count << "\n"
            << "tolerance_frames\t" << mc.tolerance_frames << "\n";
    for (size_t i = 0; i < result.curves.size(); ++i) {
        const auto& curve = result.curves[i];
        char name[64];
        std::snprintf(name, sizeof(name), "pr_n%d.tsv", curve.sequence_length);
        write_pr_curve((fs::path(out_dir) / name).string(), curve);
        double max_precision = 0.0, max_recall = 0.0, recall_at_full_precision = 0.0;
        for (const auto& p : curve.points) {
            // precision of an empty accepted set does not count as achieved
            if (p.recall > 0.0) max_precision = std::max(max_precision, p.precision);
            max_recall = std::max(max_recall, p.recall);
            if (p.precision == 1.0) recall_at_full_precision =
                std::max(recall_at_full_precision, p.recall);
        }
        char line[256];
        std::snprintf(line, sizeof(line),
                      "n=%d\tmax_precision=%.6f\trecall_at_full_precision=%.6f\tmax_recall=%.6f"
                      "\tauc=%.6f\n",
                      curve.sequence_length, max_precision, recall_at_full_precision, max_recall,
                      result.auc[i]);
        summary << line;
    }
    matrix_heatmap_export(result.db_self, mc.heatmap_clip,
                          (fs::path(out_dir) / "heatmap.png").string());
    if (save_features) {
        Generator& gen = mc.direction == "BtoA" ? state.nets.g_a : state.nets.g_b;
        Discriminator& disc = mc.direction == "BtoA" ? state.nets.d_a : state.nets.d_b;
        auto query_inputs = mc.translate_queries
                                ? detail::translate_all(gen, queries.records, 16)
                                : detail::record_pixels(queries.records);
        featfile::write((fs::path(out_dir) / "features_query.bin").string(),
                        extract_features(disc, query_inputs, "query"),
                        static_cast<uint32_t>(disc.config.feature_dim), false);
        featfile::write((fs::path(out_dir) / "features_db.bin").string(),
                        extract_features(disc, detail::record_pixels(database.records), "db"),
                        static_cast<uint32_t>(disc.config.feature_dim), false);
    }
    std::ofstream sf(fs::path(out_dir) / "summary.txt", std::ios::trunc);
    check(sf.good(), "match-eval: cannot write summary in '", out_dir, "'");
    sf << summary.str();
    std::cout << summary.str();
    return 0;
}

// ---- plot ----------------------------------------------------------------------

inline int cmd_plot(const std::vector<std::string>& pr_files, const std::string& out_svg) {
    check(!pr_files.empty(), "plot: need at least one PR curve file");
    std::vector<PRCurve> curves;
    for (const auto& path : pr_files) curves.push_back(read_pr_curve(path));
    svgplot::write_pr_plot(curves, out_svg);
    std::cout << "plotted " << curves.size() << " curve(s) into " << out_svg << "\n";
    return 0;
}

// ---- dispatcher ------------------------------------------------------------------

inline int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"coupled-GAN cross-appearance translation and place recognition"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "render a synthetic paired-domain dataset");
    uint64_t seed = 1;
    int64_t count = 100;
    int size = 64;
    std::string out_dir = "out";
    int stationary_runs = 0, run_length = 4;
    synth->add_option("--seed", seed, "generator seed")->capture_default_str();
    synth->add_option("--count", count, "frames per domain")->capture_default_str();
    synth->add_option("--size", size, "square image size")->capture_default_str();
    synth->add_option("--out", out_dir, "output directory")->capture_default_str();
    synth->add_option("--stationary-runs", stationary_runs, "repeated-frame segments")
        ->capture_default_str();
    synth->add_option("--run-length", run_length, "frames per stationary segment")
        ->capture_default_str();

    // train
    auto* train_cmd = app.add_subcommand("train", "run coupled adversarial training");
    std::string config_path;
    std::string resume_path;
    train_cmd->add_option("--config", config_path, "run configuration JSON")->required();
    train_cmd->add_option("--resume", resume_path, "checkpoint to continue from");

    // translate
    auto* translate = app.add_subcommand("translate", "translate a directory of images");
    std::string checkpoint, direction = "BtoA", in_dir;
    translate->add_option("--checkpoint", checkpoint, "trainer checkpoint")->required();
    translate->add_option("--direction", direction, "AtoB or BtoA")->capture_default_str();
    translate->add_option("--in", in_dir, "input image directory")->required();
    translate->add_option("--out", out_dir, "output directory")->capture_default_str();

    // match-eval
    auto* match = app.add_subcommand("match-eval",
                                     "translate queries, extract features, evaluate matching");
    MatchingConfig mc;
    std::string query_dir, db_dir;
    bool save_features = false;
    match->add_option("--checkpoint", checkpoint, "trainer checkpoint")->required();
    match->add_option("--query-dir", query_dir, "query image directory")->required();
    match->add_option("--db-dir", db_dir, "database image directory")->required();
    match->add_option("--out", out_dir, "output directory")->capture_default_str();
    match->add_option("--direction", mc.direction, "translation direction for queries")
        ->capture_default_str();
    match->add_option("--lengths", mc.lengths, "sequence lengths (comma list)")
        ->delimiter(',')
        ->capture_default_str();
    match->add_option("--threshold-grid", mc.threshold_grid, "threshold count over [0,2]")
        ->capture_default_str();
    match->add_option("--tolerance-frames", mc.tolerance_frames, "ground-truth window")
        ->capture_default_str();
    match->add_option("--stride", mc.stride, "keep every k-th frame")->capture_default_str();
    match->add_option("--heatmap-clip", mc.heatmap_clip, "distance clip for the heatmap")
        ->capture_default_str();
    match->add_flag("--stack-raw", "stack raw features and normalize only the stacked vector");
    match->add_flag("--no-translate", "match raw query features without translation");
    match->add_flag("--save-features", save_features, "also write binary feature files");

    // plot
    auto* plot = app.add_subcommand("plot", "render PR curves as an SVG");
    std::vector<std::string> pr_files;
    std::string out_svg = "pr_curves.svg";
    plot->add_option("files", pr_files, "PR curve TSV files")->required();
    plot->add_option("--out", out_svg, "output SVG path")->capture_default_str();

    // config-dump
    auto* dump = app.add_subcommand("config-dump", "write a config file with every default");
    std::string dump_path = "ganpr_config.json";
    dump->add_option("--out", dump_path, "output config path")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    std::string active_out;
    try {
        if (synth->parsed()) {
            active_out = out_dir;
            return cmd_synth(seed, count, size, out_dir, stationary_runs, run_length);
        }
        if (train_cmd->parsed()) {
            // out dir comes from the config; cmd_train marks failures itself
            RunConfig cfg = load_run_config(config_path);
            active_out = cfg.paths.out_dir;
            return cmd_train(config_path, resume_path);
        }
        if (translate->parsed()) {
            active_out = out_dir;
            return cmd_translate(checkpoint, direction, in_dir, out_dir);
        }
        if (match->parsed()) {
            active_out = out_dir;
            mc.normalize_before_stack = match->count("--stack-raw") == 0;
            mc.translate_queries = match->count("--no-translate") == 0;
            return cmd_match_eval(checkpoint, query_dir, db_dir, out_dir, mc, save_features);
        }
        if (plot->parsed()) return cmd_plot(pr_files, out_svg);
        if (dump->parsed()) {
            save_run_config(RunConfig{}, dump_path);
            std::cout << "wrote defaults to " << dump_path << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        detail::mark_failure(active_out, e.what());
        return 1;
    }
    return 1;
}

}  // namespace cli
}  // namespace ganpr
