#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sketret/config.hpp"
#include "sketret/eval.hpp"
#include "sketret/io.hpp"
#include "sketret/semantic_graph.hpp"
#include "sketret/theory.hpp"
#include "sketret/trainer.hpp"

namespace fs = std::filesystem;
using namespace sketret;

namespace {

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string seeds_csv;
    std::string out_dir;
    std::string mode = "zs";
    std::vector<std::string> overrides;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_mode = false) {
    cmd->add_option("--config", opts.config_path, "Experiment config file (key=value)");
    cmd->add_option("--seed", opts.seed, "Run seed");
    cmd->add_option("--seeds", opts.seeds_csv, "Comma-separated list of run seeds");
    cmd->add_option("--out", opts.out_dir, "Output directory");
    cmd->add_option("--set", opts.overrides, "Config override key=value (repeatable)");
    cmd->add_flag("--force", opts.force, "Overwrite existing outputs");
    if (with_mode)
        cmd->add_option("--mode", opts.mode, "Evaluation mode: zs|gzs|both")
            ->check(CLI::IsMember({"zs", "gzs", "both"}));
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig config;
    if (!opts.config_path.empty()) config = load_config_file(opts.config_path);
    apply_overrides(config, opts.overrides);
    return config;
}

std::vector<std::uint64_t> resolve_seeds(const CommonOpts& opts) {
    if (opts.seeds_csv.empty()) return {opts.seed};
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(opts.seeds_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            seeds.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw ConfigError("--seeds expects integers, got '" + item + "'");
        }
    }
    if (seeds.empty()) throw ConfigError("--seeds produced an empty seed list");
    return seeds;
}

fs::path resolve_out(const CommonOpts& opts) {
    std::string dir = opts.out_dir;
    if (dir.empty()) {
        const char* env = std::getenv("SKETRET_OUT");
        dir = env != nullptr && *env != '\0' ? env : "sketret_out";
    }
    fs::create_directories(dir);
    return dir;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t workers =
        std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string history_csv(const Checkpoint& ckpt, const std::string& hash) {
    std::string csv = "# config_hash=" + hash + "\n# seed=" +
                      std::to_string(ckpt.train_config.seed) + "\nepoch";
    for (const char* term : kLossTermNames) csv += std::string(",") + term;
    csv += ",total\n";
    for (std::size_t e = 0; e < ckpt.loss_history.size(); ++e) {
        csv += std::to_string(e + 1);
        const EpochLosses& el = ckpt.loss_history[e];
        for (const char* term : kLossTermNames) {
            auto it = el.terms.find(term);
            csv += "," + fmt(it == el.terms.end() ? 0.0 : it->second);
        }
        csv += "," + fmt(el.total) + "\n";
    }
    return csv;
}

void write_run_meta(const fs::path& path, const ExperimentConfig& config,
                    std::uint64_t seed) {
    nlohmann::json j;
    j["config_hash"] = config.hash();
    j["seed"] = seed;
    write_text(path, j.dump(2) + "\n");
}

EvalMode mode_from_string(const std::string& mode) {
    return mode == "gzs" ? EvalMode::GZS : EvalMode::ZS;
}

std::string matrix_csv(const Tensor& m, const std::vector<std::size_t>& labels,
                       const std::string& hash) {
    std::string csv = "# config_hash=" + hash + "\nclass_id";
    for (std::size_t label : labels) csv += "," + std::to_string(label);
    csv += "\n";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        csv += std::to_string(labels[i]);
        for (std::size_t j = 0; j < m.cols(); ++j) csv += "," + fmt(m(i, j));
        csv += "\n";
    }
    return csv;
}

Tensor seen_prototypes(const DatasetBundle& bundle) {
    const auto& seen = bundle.split.seen_classes;
    Tensor out = Tensor::matrix(seen.size(), bundle.prototypes.dim());
    for (std::size_t i = 0; i < seen.size(); ++i)
        for (std::size_t c = 0; c < bundle.prototypes.dim(); ++c)
            out(i, c) = bundle.prototypes.vectors(seen[i], c);
    return out;
}

int cmd_generate(const CommonOpts& opts) {
    ExperimentConfig config = resolve_config(opts);
    const fs::path out = resolve_out(opts);
    if (fs::exists(out / "dataset.bdas") && !opts.force)
        throw ConfigError("generate: " + (out / "dataset.bdas").string() +
                          " exists; pass --force to overwrite");

    DatasetBundle bundle = generate_synthetic_dataset(config.generator);
    save_dataset(bundle, out.string());
    write_run_meta(out / "dataset_meta.json", config, config.generator.seed);
    write_text(out / "config_snapshot.txt",
               "# config_hash=" + config.hash() + "\n" + config.canonical());

    std::cout << "generated dataset: " << bundle.images.size() << " images, "
              << bundle.sketches.size() << " sketches, " << bundle.class_count()
              << " classes (" << bundle.split.seen_classes.size() << " seen / "
              << bundle.split.unseen_classes.size() << " unseen)\n";
    return 0;
}

int cmd_train(const CommonOpts& opts) {
    ExperimentConfig config = resolve_config(opts);
    const std::vector<std::uint64_t> seeds = resolve_seeds(opts);
    const fs::path out = resolve_out(opts);
    const DatasetBundle bundle = generate_synthetic_dataset(config.generator);
    const std::string hash = config.hash();

    std::vector<Checkpoint> checkpoints(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) {
        TrainConfig tc = config.train;
        tc.seed = seeds[i];
        checkpoints[i] = train(bundle, tc);
    });

    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const std::string tag = "seed" + std::to_string(seeds[i]);
        save_checkpoint(checkpoints[i], (out / ("checkpoint_" + tag + ".bdas")).string());
        write_text(out / ("history_" + tag + ".csv"), history_csv(checkpoints[i], hash));
        write_run_meta(out / ("checkpoint_" + tag + ".meta.json"), config, seeds[i]);
        const double final_loss = checkpoints[i].loss_history.empty()
                                      ? 0.0
                                      : checkpoints[i].loss_history.back().total;
        std::cout << "trained seed " << seeds[i] << ": epochs "
                  << checkpoints[i].epoch << ", final audit loss " << final_loss << "\n";
    }
    return 0;
}

void write_eval_outputs(const fs::path& out, const ExperimentConfig& config,
                        const Checkpoint& ckpt, const DatasetBundle& bundle,
                        const std::string& mode, bool rankings) {
    const EvalResult result = evaluate(ckpt.params, ckpt.train_config.dims, bundle,
                                       mode_from_string(mode), config.hubness_k);
    const std::string hash = config.hash();
    const std::string tag = mode + "_seed" + std::to_string(ckpt.train_config.seed);

    write_text(out / ("metrics_" + tag + ".json"),
               metrics_to_json(result.report, hash, ckpt.train_config.seed));

    std::string hub_csv = "# config_hash=" + hash + "\ngallery_index,image_index,count\n";
    for (std::size_t i = 0; i < result.gallery_images.size(); ++i) {
        auto it = result.report.hubness.n_k.find(i);
        const std::size_t count = it == result.report.hubness.n_k.end() ? 0 : it->second;
        hub_csv += std::to_string(i) + "," + std::to_string(result.gallery_images[i]) +
                   "," + std::to_string(count) + "\n";
    }
    write_text(out / ("hubness_" + tag + ".csv"), hub_csv);

    if (rankings) {
        std::string csv = "# config_hash=" + hash + "\nquery_id,rank,gallery_id,class_match\n";
        for (const QueryRanking& r : result.rankings)
            for (std::size_t pos = 0; pos < r.gallery_order.size(); ++pos)
                csv += std::to_string(r.query) + "," + std::to_string(pos + 1) + "," +
                       std::to_string(r.gallery_order[pos]) + "," +
                       std::to_string(int(r.relevance[pos])) + "\n";
        write_text(out / ("rankings_" + tag + ".csv"), csv);
    }

    std::printf("%s mAP@all %.4f  mAP@200 %.4f  P@100 %.4f  P@200 %.4f  hub-skew %.3f\n",
                mode.c_str(), result.report.map_all, result.report.map_at_200,
                result.report.p_at_100, result.report.p_at_200,
                result.report.hubness.skewness);
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path, bool rankings) {
    ExperimentConfig config = resolve_config(opts);
    if (checkpoint_path.empty()) throw ConfigError("eval: --checkpoint is required");
    if (!fs::exists(checkpoint_path))
        throw ConfigError("eval: checkpoint not found: " + checkpoint_path);
    const fs::path out = resolve_out(opts);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const DatasetBundle bundle = generate_synthetic_dataset(config.generator);

    const DimensionSpec expected = dims_for(bundle, ckpt.train_config);
    if (expected.grid != ckpt.train_config.dims.grid ||
        expected.channels != ckpt.train_config.dims.channels ||
        expected.semantic_dim != ckpt.train_config.dims.semantic_dim ||
        expected.seen_classes != ckpt.train_config.dims.seen_classes)
        throw std::runtime_error("eval: dataset config does not match the checkpoint");

    if (opts.mode == "both" || opts.mode == "zs")
        write_eval_outputs(out, config, ckpt, bundle, "zs", rankings);
    if (opts.mode == "both" || opts.mode == "gzs")
        write_eval_outputs(out, config, ckpt, bundle, "gzs", rankings);
    return 0;
}

struct AblationRow {
    const char* label;
    const char* terms;
};

constexpr AblationRow kAblationRows[] = {
    {"sem+tri", "semantic,triplet"},
    {"sem+tri+tskl", "semantic,triplet,tskl"},
    {"sem+tri+tskl+class", "semantic,triplet,tskl,classification"},
    {"sem+tri+tskl+class+L2", "semantic,triplet,tskl,classification,local_adv"},
    {"sem+tri+tskl+class+L3", "semantic,triplet,tskl,classification,reconstruction"},
    {"sem+tri+L2", "semantic,triplet,local_adv"},
    {"sem+tri+L3", "semantic,triplet,reconstruction"},
    {"sem+tri+L2+L3", "semantic,triplet,local_adv,reconstruction"},
    {"full", "semantic,triplet,tskl,classification,local_adv,reconstruction"},
};

int cmd_ablate(const CommonOpts& opts) {
    ExperimentConfig config = resolve_config(opts);
    const std::vector<std::uint64_t> seeds = resolve_seeds(opts);
    const fs::path out = resolve_out(opts);
    const DatasetBundle bundle = generate_synthetic_dataset(config.generator);
    const std::string hash = config.hash();

    constexpr std::size_t rows = std::size(kAblationRows);
    std::vector<double> map_all(rows * seeds.size(), 0.0);
    parallel_for(rows * seeds.size(), [&](std::size_t task) {
        const std::size_t row = task / seeds.size();
        const std::size_t s = task % seeds.size();
        TrainConfig tc = config.train;
        tc.seed = seeds[s];
        tc.terms = terms_from_string(kAblationRows[row].terms);
        // The full row is the exact union of every loss flag the config
        // enables, including the optional global adversarial term.
        if (std::string(kAblationRows[row].label) == "full" &&
            config.train.loss_config.enable_global_adversarial)
            tc.terms.global_adv = true;
        const Checkpoint ckpt = train(bundle, tc);
        const EvalResult r = evaluate(ckpt.params, ckpt.train_config.dims, bundle,
                                      EvalMode::ZS, config.hubness_k);
        map_all[task] = r.report.map_all;
    });

    std::string csv = "# config_hash=" + hash + "\nrow,terms,seed,zs_map_all\n";
    std::string summary = "# config_hash=" + hash + "\nrow,terms,mean_zs_map_all\n";
    for (std::size_t row = 0; row < rows; ++row) {
        double mean = 0.0;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const double v = map_all[row * seeds.size() + s];
            csv += std::string(kAblationRows[row].label) + "," + kAblationRows[row].terms +
                   "," + std::to_string(seeds[s]) + "," + fmt(v) + "\n";
            mean += v;
        }
        mean /= double(seeds.size());
        summary += std::string(kAblationRows[row].label) + "," + kAblationRows[row].terms +
                   "," + fmt(mean) + "\n";
        std::printf("%-24s mean zs mAP@all %.4f\n", kAblationRows[row].label, mean);
    }
    write_text(out / "ablation.csv", csv);
    write_text(out / "ablation_summary.csv", summary);
    return 0;
}

int cmd_theory(const CommonOpts& opts, const std::string& checkpoint_path) {
    ExperimentConfig config = resolve_config(opts);
    const fs::path out = resolve_out(opts);
    const DatasetBundle bundle = generate_synthetic_dataset(config.generator);
    const std::string hash = config.hash();

    if (!checkpoint_path.empty()) {
        if (!fs::exists(checkpoint_path))
            throw ConfigError("theory: checkpoint not found: " + checkpoint_path);
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        const BoundReport report = bound_report(ckpt.params, ckpt.train_config.dims,
                                                bundle, ckpt.train_config.seed);
        const std::string tag = "seed" + std::to_string(ckpt.train_config.seed);
        write_text(out / ("theory_" + tag + ".json"),
                   bound_report_to_json(report, hash, ckpt.train_config.seed));
        std::printf("d(a,p)=%.3f d(a,n)=%.3f ordering_holds=%s\n", report.d_alpha_p,
                    report.d_alpha_n, report.ordering_holds ? "true" : "false");
        return 0;
    }

    const std::vector<std::uint64_t> seeds = resolve_seeds(opts);
    std::vector<BoundReport> reports(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) {
        TrainConfig tc = config.train;
        tc.seed = seeds[i];
        const Checkpoint ckpt = train(bundle, tc);
        reports[i] = bound_report(ckpt.params, ckpt.train_config.dims, bundle, seeds[i]);
    });

    std::size_t passes = 0;
    nlohmann::json per_seed = nlohmann::json::array();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        write_text(out / ("theory_seed" + std::to_string(seeds[i]) + ".json"),
                   bound_report_to_json(reports[i], hash, seeds[i]));
        passes += reports[i].ordering_holds ? 1 : 0;
        per_seed.push_back({{"seed", seeds[i]},
                            {"ordering_holds", reports[i].ordering_holds},
                            {"d_alpha_p", reports[i].d_alpha_p},
                            {"d_alpha_n", reports[i].d_alpha_n}});
    }
    nlohmann::json summary;
    summary["config_hash"] = hash;
    summary["pass_fraction"] = double(passes) / double(seeds.size());
    summary["runs"] = per_seed;
    write_text(out / "theory_summary.json", summary.dump(2) + "\n");
    std::printf("ordering holds in %zu/%zu seeds\n", passes, seeds.size());
    return 0;
}

int cmd_plot(const CommonOpts& opts) {
    ExperimentConfig config = resolve_config(opts);
    const fs::path out = resolve_out(opts);
    const DatasetBundle bundle = generate_synthetic_dataset(config.generator);
    const std::string hash = config.hash();

    const Tensor original = seen_prototypes(bundle);
    write_text(out / "plot_prototype_sim_original.csv",
               matrix_csv(cosine_similarity_matrix(original), bundle.split.seen_classes,
                          hash));

    std::vector<fs::path> checkpoints;
    for (const auto& entry : fs::directory_iterator(out)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("checkpoint_seed", 0) == 0 && entry.path().extension() == ".bdas")
            checkpoints.push_back(entry.path());
    }
    std::sort(checkpoints.begin(), checkpoints.end());

    for (const fs::path& path : checkpoints) {
        const Checkpoint ckpt = load_checkpoint(path.string());
        const std::string tag = "seed" + std::to_string(ckpt.train_config.seed);
        const SemanticGraph graph =
            build_adjacency(original, ckpt.train_config.gamma_mode);
        const Tensor projected =
            semantic_project(ckpt.params, ckpt.train_config.dims, graph);
        write_text(out / ("plot_prototype_sim_projected_" + tag + ".csv"),
                   matrix_csv(cosine_similarity_matrix(projected),
                              bundle.split.seen_classes, hash));

        std::string curves = "# config_hash=" + hash + "\nepoch,term,value\n";
        for (std::size_t e = 0; e < ckpt.loss_history.size(); ++e) {
            for (const auto& [term, value] : ckpt.loss_history[e].terms)
                curves += std::to_string(e + 1) + "," + term + "," + fmt(value) + "\n";
            curves += std::to_string(e + 1) + ",total," +
                      fmt(ckpt.loss_history[e].total) + "\n";
        }
        write_text(out / ("plot_loss_curves_" + tag + ".csv"), curves);
    }
    std::cout << "plot data written for " << checkpoints.size() << " checkpoint(s)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bi-level domain adaptation for zero-shot sketch-based retrieval, "
                 "desk-scale"};
    app.require_subcommand(1);

    CommonOpts generate_opts, train_opts, eval_opts, ablate_opts, theory_opts, plot_opts;
    std::string eval_checkpoint, theory_checkpoint;
    bool eval_rankings = false;

    CLI::App* generate = app.add_subcommand("generate", "Generate the synthetic dataset");
    add_common(generate, generate_opts);
    CLI::App* train_cmd = app.add_subcommand("train", "Train the model");
    add_common(train_cmd, train_opts);
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common(eval_cmd, eval_opts, true);
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file");
    eval_cmd->add_flag("--rankings", eval_rankings, "Dump per-query rankings CSV");
    CLI::App* ablate = app.add_subcommand("ablate", "Run the loss-term ablation table");
    add_common(ablate, ablate_opts);
    CLI::App* theory = app.add_subcommand("theory", "Empirical divergence bound report");
    add_common(theory, theory_opts);
    theory->add_option("--checkpoint", theory_checkpoint, "Checkpoint file");
    CLI::App* plot = app.add_subcommand("plot", "Emit plot data CSVs for a results dir");
    add_common(plot, plot_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (generate->parsed()) return cmd_generate(generate_opts);
        if (train_cmd->parsed()) return cmd_train(train_opts);
        if (eval_cmd->parsed()) return cmd_eval(eval_opts, eval_checkpoint, eval_rankings);
        if (ablate->parsed()) return cmd_ablate(ablate_opts);
        if (theory->parsed()) return cmd_theory(theory_opts, theory_checkpoint);
        if (plot->parsed()) return cmd_plot(plot_opts);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
