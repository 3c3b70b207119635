#pragma once

// The training protocol: for every (dim, angle step) in the grid, train
// `models_per_config` seeds (base_seed + k) on the complete image set.
// Datasets and checkpoints are cached on disk; reruns skip any run whose
// checkpoint validates against its sidecar, so a completed tree costs no
// new training work. The manifest is rewritten atomically at the end.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "linepix/checkpoint.hpp"
#include "linepix/dataset.hpp"
#include "linepix/parallel.hpp"
#include "linepix/train.hpp"

namespace linepix {

namespace fs = std::filesystem;

inline std::string config_tag(int dim, std::uint32_t step_md) {
    return "d" + std::to_string(dim) + "_s" + std::to_string(step_md);
}

inline std::string run_tag(int dim, std::uint32_t step_md, std::uint64_t seed) {
    return config_tag(dim, step_md) + "_seed" + std::to_string(seed);
}

using LogFn = std::function<void(const std::string&)>;

// Loads the dataset for (dim, step) from the cache directory, generating
// and persisting it first if needed. Also writes the CSV sidecar.
inline Dataset load_or_generate_dataset(int dim, std::uint32_t step_md, const fs::path& dir,
                                        const LogFn& log = nullptr) {
    fs::create_directories(dir);
    const fs::path pack = dir / (config_tag(dim, step_md) + ".lpx");
    if (fs::exists(pack)) {
        Dataset ds = read_dataset(pack);
        if (ds.dim == dim && ds.angle_step_millideg == step_md) return ds;
        if (log) log("dataset " + pack.string() + " does not match requested config; regenerating");
    }
    Dataset ds = generate_dataset(dim, from_millideg(step_md));
    write_dataset(ds, pack);
    write_dataset_csv(ds, dir / (config_tag(dim, step_md) + ".csv"));
    if (log)
        log("generated dataset " + config_tag(dim, step_md) + ": N=" +
            std::to_string(ds.images.size()) + " conflicts=" + std::to_string(ds.conflict_count) +
            " digest=" + format_digest(ds.content_hash));
    return ds;
}

struct RunRecord {
    int dim = 0;
    std::uint32_t step_millideg = 0;
    std::uint64_t seed = 0;
    std::uint64_t dataset_digest = 0;
    std::string checkpoint_path;
    bool converged = false;
    double final_accuracy = 0.0;
    int epochs = 0;
    double train_seconds = 0.0;  // 0 when reused
    bool reused = false;  // satisfied from an existing checkpoint
};

struct ProtocolResult {
    std::vector<RunRecord> runs;
    int newly_trained = 0;
    bool all_converged = true;
    fs::path manifest_path;
};

inline nlohmann::json run_to_json(const RunRecord& r) {
    return {{"dim", r.dim},
            {"step", from_millideg(r.step_millideg)},
            {"seed", r.seed},
            {"dataset_digest", format_digest(r.dataset_digest)},
            {"checkpoint_path", r.checkpoint_path},
            {"converged", r.converged},
            {"final_accuracy", r.final_accuracy},
            {"epochs", r.epochs}};
}

inline void write_manifest(const std::vector<RunRecord>& runs, const fs::path& path) {
    nlohmann::json j;
    j["format"] = "lpx-manifest/1";
    auto arr = nlohmann::json::array();
    int non_converged = 0;
    for (const auto& r : runs) {
        arr.push_back(run_to_json(r));
        if (!r.converged) ++non_converged;
    }
    j["runs"] = arr;
    j["summary"] = {{"total", runs.size()}, {"non_converged", non_converged}};
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("write manifest: cannot open " + tmp.string());
        out << j.dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

// Validates an existing checkpoint against its sidecar and the dataset:
// parseable, matching dim/config/digest, and re-evaluating to the recorded
// accuracy. Any failure means the run is retrained.
inline bool try_reuse_checkpoint(const fs::path& ckpt, const fs::path& sidecar,
                                 const Dataset& dataset, const TrainConfig& expect,
                                 RunRecord& out) {
    if (!fs::exists(ckpt) || !fs::exists(sidecar)) return false;
    try {
        CheckpointMeta meta = read_checkpoint_sidecar(sidecar);
        if (meta.dim != dataset.dim || meta.dataset_digest != dataset.content_hash) return false;
        if (meta.config.seed != expect.seed || meta.config.max_epochs != expect.max_epochs ||
            meta.config.learning_rate != expect.learning_rate ||
            meta.config.batch_size != expect.batch_size ||
            meta.config.dropout_p != expect.dropout_p)
            return false;
        ModelParams<float> params = read_checkpoint(ckpt);
        if (params.dim != dataset.dim) return false;
        ForwardCache<float> cache;
        const double acc = static_cast<double>(count_correct(params, dataset, cache)) /
                           static_cast<double>(dataset.images.size());
        if (acc != meta.final_accuracy) return false;
        out.converged = meta.converged;
        out.final_accuracy = meta.final_accuracy;
        out.epochs = meta.epochs;
        out.reused = true;
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

inline ProtocolResult run_protocol(const std::vector<int>& dims,
                                   const std::vector<double>& steps, int models_per_config,
                                   std::uint64_t base_seed, const TrainConfig& base_config,
                                   const fs::path& out_root, int workers = 0,
                                   const LogFn& log = nullptr) {
    if (dims.empty() || steps.empty() || models_per_config < 1)
        throw std::invalid_argument("run_protocol: empty grid");
    if (workers <= 0) workers = default_worker_count();
    fs::create_directories(out_root / "models");

    std::mutex log_mutex;
    auto locked_log = [&](const std::string& msg) {
        if (!log) return;
        std::lock_guard<std::mutex> lock(log_mutex);
        log(msg);
    };

    // Datasets first (cheap, sequential); training runs then share them
    // read-only across the worker pool.
    struct Task {
        const Dataset* dataset;
        int dim;
        std::uint32_t step_md;
        std::uint64_t seed;
    };
    std::vector<Dataset> datasets;
    datasets.reserve(dims.size() * steps.size());
    std::vector<Task> tasks;
    for (int dim : dims) {
        for (double step : steps) {
            const std::uint32_t step_md = to_millideg(step);
            datasets.push_back(
                load_or_generate_dataset(dim, step_md, out_root / "datasets", locked_log));
            for (int k = 0; k < models_per_config; ++k)
                tasks.push_back({&datasets.back(), dim, step_md, base_seed + k});
        }
    }

    ProtocolResult result;
    result.runs.resize(tasks.size());
    std::atomic<int> newly_trained{0};

    parallel_run(tasks.size(), workers, [&](std::size_t i, int) {
        const Task& task = tasks[i];
        const std::string tag = run_tag(task.dim, task.step_md, task.seed);
        const fs::path ckpt = out_root / "models" / (tag + ".lpxm");
        const fs::path sidecar = out_root / "models" / (tag + ".lpxm.json");

        TrainConfig config = base_config;
        config.seed = task.seed;

        RunRecord rec;
        rec.dim = task.dim;
        rec.step_millideg = task.step_md;
        rec.seed = task.seed;
        rec.dataset_digest = task.dataset->content_hash;
        rec.checkpoint_path = ckpt.string();

        if (try_reuse_checkpoint(ckpt, sidecar, *task.dataset, config, rec)) {
            locked_log("reusing checkpoint " + tag);
            result.runs[i] = rec;
            return;
        }

        locked_log("training " + tag + " (N=" + std::to_string(task.dataset->images.size()) + ")");
        const auto t_start = std::chrono::steady_clock::now();
        TrainRun run = train_model(*task.dataset, config);
        rec.train_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        rec.converged = run.converged;
        rec.final_accuracy = run.history.empty() ? 0.0 : run.history.back().accuracy;
        rec.epochs = static_cast<int>(run.history.size());
        write_checkpoint(run.params, ckpt);
        CheckpointMeta meta{config, task.dim, rec.epochs, rec.converged, rec.final_accuracy,
                            task.dataset->content_hash};
        write_checkpoint_sidecar(meta, sidecar);
        newly_trained.fetch_add(1);
        locked_log("trained " + tag + ": epochs=" + std::to_string(rec.epochs) +
                   " acc=" + std::to_string(rec.final_accuracy) +
                   (rec.converged ? "" : " [DID NOT CONVERGE]"));
        result.runs[i] = rec;
    });

    result.newly_trained = newly_trained.load();
    for (const auto& r : result.runs) result.all_converged &= r.converged;
    result.manifest_path = out_root / "manifest.json";
    write_manifest(result.runs, result.manifest_path);
    return result;
}

}  // namespace linepix
