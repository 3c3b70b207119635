// Command-line front end for the line-image one-pixel-attack pipeline.
//
// Subcommands: generate, train, attack, analyze, sweep, gradcheck.
// Exit codes: 0 success, 2 partial failure, 3 invalid configuration,
// 4 non-convergence. Worker count comes from --workers, else the
// LINEPIX_WORKERS environment variable, else hardware concurrency.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "linepix/gradcheck.hpp"
#include "linepix/sweep.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartialFailure = 2;
constexpr int kExitInvalidConfig = 3;
constexpr int kExitNonConvergence = 4;

void log_line(const std::string& msg) { std::fprintf(stderr, "[linepix] %s\n", msg.c_str()); }

linepix::AttackMode parse_mode(const std::string& mode) {
    if (mode == "full") return linepix::AttackMode::Full;
    if (mode == "incremental_verified") return linepix::AttackMode::IncrementalVerified;
    throw std::invalid_argument("mode must be 'full' or 'incremental_verified'");
}

struct CommonOpts {
    int dim = 16;
    double angle_step = 2.0;
    std::string out = "out";
    int workers = 0;
};

// Seeds per model are base_seed + k, k = 0..models-1.
std::vector<std::string> model_tags(int dim, std::uint32_t step_md, std::uint64_t base_seed,
                                    int models) {
    std::vector<std::string> tags;
    for (int k = 0; k < models; ++k)
        tags.push_back(linepix::run_tag(dim, step_md, base_seed + k));
    return tags;
}

int cmd_generate(const CommonOpts& opts) {
    auto ds = linepix::load_or_generate_dataset(opts.dim, linepix::to_millideg(opts.angle_step),
                                                std::filesystem::path(opts.out) / "datasets",
                                                log_line);
    std::printf("dim=%d step=%s n_images=%zu conflicts=%u digest=%s\n", ds.dim,
                linepix::format_millideg(ds.angle_step_millideg).c_str(), ds.images.size(),
                ds.conflict_count, linepix::format_digest(ds.content_hash).c_str());
    return kExitOk;
}

int cmd_train(const CommonOpts& opts, std::uint64_t seed, int models,
              const linepix::TrainConfig& train) {
    auto result = linepix::run_protocol({opts.dim}, {opts.angle_step}, models, seed, train,
                                        opts.out, opts.workers, log_line);
    for (const auto& run : result.runs)
        std::printf("%s converged=%d epochs=%d accuracy=%.6f\n",
                    linepix::run_tag(run.dim, run.step_millideg, run.seed).c_str(),
                    run.converged, run.epochs, run.final_accuracy);
    return result.all_converged ? kExitOk : kExitNonConvergence;
}

int cmd_attack(const CommonOpts& opts, std::uint64_t seed, int models,
               const std::string& mode_name) {
    const auto mode = parse_mode(mode_name);
    const std::uint32_t step_md = linepix::to_millideg(opts.angle_step);
    const std::filesystem::path root(opts.out);
    auto ds = linepix::load_or_generate_dataset(opts.dim, step_md, root / "datasets", log_line);
    std::filesystem::create_directories(root / "attacks");

    int failures = 0;
    for (const auto& tag : model_tags(opts.dim, step_md, seed, models)) {
        const auto ckpt = root / "models" / (tag + ".lpxm");
        try {
            auto params = linepix::read_checkpoint(ckpt);
            const auto digest = linepix::params_digest(params);
            log_line("attacking " + tag);
            auto result = linepix::run_exhaustive_attack(params, ds, mode, tag, opts.workers);
            linepix::write_attack_outputs(result, ds, digest,
                                          root / "attacks" / (tag + ".records.csv"),
                                          root / "attacks" / (tag + ".summary.json"));
            std::printf("%s adversarial_count=%llu candidates=%llu\n", tag.c_str(),
                        static_cast<unsigned long long>(result.summary.adversarial_count),
                        static_cast<unsigned long long>(result.summary.candidates_total));
        } catch (const std::exception& e) {
            std::fprintf(stderr, "attack %s failed: %s\n", tag.c_str(), e.what());
            ++failures;
        }
    }
    return failures == 0 ? kExitOk : kExitPartialFailure;
}

int cmd_analyze(const CommonOpts& opts, std::uint64_t seed, int models) {
    const std::uint32_t step_md = linepix::to_millideg(opts.angle_step);
    const std::filesystem::path root(opts.out);
    auto ds = linepix::load_or_generate_dataset(opts.dim, step_md, root / "datasets", log_line);

    std::vector<std::string> tags;
    for (const auto& tag : model_tags(opts.dim, step_md, seed, models))
        if (std::filesystem::exists(root / "attacks" / (tag + ".records.csv")))
            tags.push_back(tag);
    if (tags.empty()) {
        std::fprintf(stderr, "no attack records found under %s\n",
                     (root / "attacks").string().c_str());
        return kExitPartialFailure;
    }
    linepix::analyze_config(ds, tags, root / "attacks",
                            root / "analysis" / linepix::config_tag(opts.dim, step_md), 0);
    std::printf("analysis written for %zu model(s) at %s\n", tags.size(),
                (root / "analysis" / linepix::config_tag(opts.dim, step_md)).string().c_str());
    return kExitOk;
}

int cmd_gradcheck(int dim, std::uint64_t seed, int samples) {
    auto report = linepix::gradient_check(dim, seed, samples);
    for (const auto& t : report.tensors)
        std::printf("%-8s coords=%zu max_rel_err=%.3e\n", t.name.c_str(), t.coords_checked,
                    t.max_rel_err);
    std::printf("worst=%.3e threshold=%.0e %s\n", report.worst_rel_err, report.threshold,
                report.passed ? "PASS" : "FAIL");
    return report.passed ? kExitOk : kExitPartialFailure;
}

void apply_config_file(const std::string& path, linepix::SweepConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.contains("dims")) cfg.dims = j["dims"].get<std::vector<int>>();
    if (j.contains("steps")) cfg.steps = j["steps"].get<std::vector<double>>();
    if (j.contains("models_per_config")) cfg.models_per_config = j["models_per_config"].get<int>();
    if (j.contains("base_seed")) cfg.base_seed = j["base_seed"].get<std::uint64_t>();
    if (j.contains("attack_mode")) cfg.attack_mode = parse_mode(j["attack_mode"].get<std::string>());
    if (j.contains("out")) cfg.out_root = j["out"].get<std::string>();
    if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
    if (j.contains("train")) {
        const auto& t = j["train"];
        if (t.contains("learning_rate")) cfg.train.learning_rate = t["learning_rate"].get<double>();
        if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<int>();
        if (t.contains("max_epochs")) cfg.train.max_epochs = t["max_epochs"].get<int>();
        if (t.contains("dropout_p")) cfg.train.dropout_p = t["dropout_p"].get<double>();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exhaustive one-pixel-attack studies on synthetic line images"};
    app.require_subcommand(1);

    CommonOpts common;
    std::uint64_t seed = 1;
    int models = 5;
    std::string mode_name = "incremental_verified";
    linepix::TrainConfig train;

    auto add_common = [&](CLI::App* sub, bool with_step = true) {
        sub->add_option("--dim", common.dim, "image dimension D");
        if (with_step) sub->add_option("--angle-step", common.angle_step, "angle step (degrees)");
        sub->add_option("--out", common.out, "output root directory");
        sub->add_option("--workers", common.workers, "worker threads (default: env/hardware)");
    };
    auto add_train_opts = [&](CLI::App* sub) {
        sub->add_option("--learning-rate", train.learning_rate);
        sub->add_option("--batch-size", train.batch_size);
        sub->add_option("--max-epochs", train.max_epochs);
        sub->add_option("--dropout", train.dropout_p);
    };

    auto* gen = app.add_subcommand("generate", "generate + persist a dataset");
    add_common(gen);

    auto* tr = app.add_subcommand("train", "train seeded models on a dataset");
    add_common(tr);
    tr->add_option("--seed", seed, "base seed (models use seed+0..k-1)");
    tr->add_option("--models", models, "models per configuration");
    add_train_opts(tr);

    auto* att = app.add_subcommand("attack", "exhaustive one-pixel attack on trained models");
    add_common(att);
    att->add_option("--seed", seed, "base seed of the trained models");
    att->add_option("--models", models, "models per configuration");
    att->add_option("--mode", mode_name, "full | incremental_verified");

    auto* ana = app.add_subcommand("analyze", "aggregate attack records for a configuration");
    add_common(ana);
    ana->add_option("--seed", seed, "base seed of the attacked models");
    ana->add_option("--models", models, "models per configuration");

    auto* sw = app.add_subcommand("sweep", "full grid: generate, train, attack, analyze");
    std::vector<int> sweep_dims;
    std::vector<double> sweep_steps;
    std::string config_file;
    sw->add_option("--config", config_file, "JSON config file (flags override it)");
    sw->add_option("--dims", sweep_dims, "image dimensions")->delimiter(',');
    sw->add_option("--steps", sweep_steps, "angle steps (degrees)")->delimiter(',');
    sw->add_option("--models", models, "models per configuration");
    sw->add_option("--seed", seed, "base seed");
    sw->add_option("--mode", mode_name, "full | incremental_verified");
    sw->add_option("--out", common.out, "output root directory");
    sw->add_option("--workers", common.workers, "worker threads");
    add_train_opts(sw);

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    int gc_samples = 200;
    gc->add_option("--dim", common.dim, "image dimension D");
    gc->add_option("--seed", seed, "parameter seed");
    gc->add_option("--samples", gc_samples, "coordinates sampled per tensor");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInvalidConfig;
    }

    try {
        if (gen->parsed()) return cmd_generate(common);
        if (tr->parsed()) return cmd_train(common, seed, models, train);
        if (att->parsed()) return cmd_attack(common, seed, models, mode_name);
        if (ana->parsed()) return cmd_analyze(common, seed, models);
        if (gc->parsed()) return cmd_gradcheck(common.dim, seed, gc_samples);
        if (sw->parsed()) {
            linepix::SweepConfig cfg;
            cfg.out_root = common.out;
            if (!config_file.empty()) apply_config_file(config_file, cfg);
            if (!sweep_dims.empty()) cfg.dims = sweep_dims;
            if (!sweep_steps.empty()) cfg.steps = sweep_steps;
            if (sw->count("--models")) cfg.models_per_config = models;
            if (sw->count("--seed")) cfg.base_seed = seed;
            if (sw->count("--mode")) cfg.attack_mode = parse_mode(mode_name);
            if (sw->count("--out")) cfg.out_root = common.out;
            if (sw->count("--workers")) cfg.workers = common.workers;
            if (sw->count("--learning-rate")) cfg.train.learning_rate = train.learning_rate;
            if (sw->count("--batch-size")) cfg.train.batch_size = train.batch_size;
            if (sw->count("--max-epochs")) cfg.train.max_epochs = train.max_epochs;
            if (sw->count("--dropout")) cfg.train.dropout_p = train.dropout_p;
            auto outcome = linepix::run_sweep(cfg, log_line);
            std::printf("sweep complete: report=%s exit=%d\n",
                        outcome.report_path.string().c_str(), outcome.exit_code());
            for (const auto& f : outcome.failures)
                std::fprintf(stderr, "failure: %s\n", f.c_str());
            return outcome.exit_code();
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid configuration: %s\n", e.what());
        return kExitInvalidConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitPartialFailure;
    }
    return kExitInvalidConfig;
}
