#pragma once

// End-to-end pipeline: generate -> train -> attack -> analyze for every
// (dim, angle step) in the grid, plus the cross-configuration redundancy
// table and a top-level report. Every stage is resumable: datasets,
// checkpoints and attack outputs are reused when they validate against
// their recorded provenance (dataset digest, model digest, config hash).
//
// Artifact tree under the output root:
//   datasets/<tag>.lpx, <tag>.csv
//   models/<tag>_seed<k>.lpxm (+ .lpxm.json), manifest.json
//   attacks/<tag>_seed<k>.records.csv, .summary.json
//   analysis/<tag>/{angle_profile,heatmap,markers}.csv, heatmap.pgm,
//                  summary.json
//   analysis/redundancy.csv, report.json

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "linepix/analytics.hpp"
#include "linepix/attack.hpp"
#include "linepix/protocol.hpp"

namespace linepix {

struct SweepConfig {
    std::vector<int> dims{16, 32, 48, 64, 80};
    std::vector<double> steps{0.5, 1.0, 2.0};
    int models_per_config = 5;
    std::uint64_t base_seed = 1;
    TrainConfig train;
    AttackMode attack_mode = AttackMode::IncrementalVerified;
    fs::path out_root;
    int workers = 0;

    void validate() const {
        if (dims.empty() || steps.empty())
            throw std::invalid_argument("sweep: dims and steps must be non-empty");
        if (models_per_config < 1)
            throw std::invalid_argument("sweep: models_per_config must be >= 1");
        for (int d : dims)
            if (d < 16 || d % 4 != 0)
                throw std::invalid_argument("sweep: dims must be multiples of 4, >= 16");
        for (double s : steps) {
            const std::uint32_t md = to_millideg(s);
            if (md == 0 || 180000 % md != 0)
                throw std::invalid_argument("sweep: angle steps must divide 180 evenly");
        }
        train.validate();
    }
};

inline std::uint64_t sweep_config_hash(const SweepConfig& cfg) {
    nlohmann::json j{{"dims", cfg.dims},
                     {"steps", cfg.steps},
                     {"models_per_config", cfg.models_per_config},
                     {"base_seed", cfg.base_seed},
                     {"train", config_to_json(cfg.train)},
                     {"attack_mode",
                      cfg.attack_mode == AttackMode::Full ? "full" : "incremental_verified"}};
    const std::string s = j.dump();
    return fnv1a64(s.data(), s.size());
}

struct SweepOutcome {
    ProtocolResult protocol;
    std::vector<std::string> failures;
    bool all_converged = true;
    fs::path report_path;

    // 0 success, 2 partial failure, 4 non-convergence.
    int exit_code() const {
        if (!failures.empty()) return 2;
        if (!all_converged) return 4;
        return 0;
    }
};

inline std::uint64_t params_digest(const ModelParams<float>& params) {
    auto bytes = serialize_checkpoint(params);
    return fnv1a64(bytes.data(), bytes.size());
}

namespace detail {

inline bool attack_outputs_valid(const fs::path& records_path, const fs::path& summary_path,
                                 std::uint64_t dataset_digest, std::uint64_t model_digest) {
    if (!fs::exists(records_path) || !fs::exists(summary_path)) return false;
    try {
        std::ifstream in(summary_path);
        nlohmann::json j = nlohmann::json::parse(in);
        if (std::stoull(j.at("dataset_digest").get<std::string>(), nullptr, 16) != dataset_digest)
            return false;
        if (!j.contains("model_digest")) return false;
        return std::stoull(j.at("model_digest").get<std::string>(), nullptr, 16) == model_digest;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace detail

inline void write_attack_outputs(const AttackResult& result, const Dataset& dataset,
                                 std::uint64_t model_digest, const fs::path& records_path,
                                 const fs::path& summary_path) {
    write_attack_records_csv(result, dataset, records_path);
    write_attack_summary_json(result, summary_path, model_digest);
}

// Per-configuration analysis artifacts from on-disk records, so the analyze
// stage is reproducible from files alone.
inline void analyze_config(const Dataset& dataset, const std::vector<std::string>& model_tags,
                           const fs::path& attacks_dir, const fs::path& analysis_dir,
                           std::uint64_t config_hash) {
    fs::create_directories(analysis_dir);
    std::vector<std::vector<AttackRecord>> per_model_records;
    std::vector<AttackSummary> summaries;
    for (const auto& tag : model_tags) {
        per_model_records.push_back(read_attack_records_csv(attacks_dir / (tag + ".records.csv")));
        summaries.push_back(read_attack_summary_json(attacks_dir / (tag + ".summary.json")));
    }

    const AngleProfile profile = angle_profile(per_model_records, dataset);
    const HeatmapGrid heatmap = spatial_heatmap(per_model_records, dataset);
    const auto markers = boundary_markers(dataset.dim);
    write_angle_profile_csv(profile, analysis_dir / "angle_profile.csv");
    write_heatmap_csv(heatmap, analysis_dir / "heatmap.csv");
    write_heatmap_pgm(heatmap, analysis_dir / "heatmap.pgm");
    write_markers_csv(markers, analysis_dir / "markers.csv");

    nlohmann::json j{{"format", "lpx-analysis/1"},
                     {"dim", dataset.dim},
                     {"step", from_millideg(dataset.angle_step_millideg)},
                     {"n_images", dataset.images.size()},
                     {"conflict_count", dataset.conflict_count},
                     {"dataset_digest", format_digest(dataset.content_hash)},
                     {"config_hash", format_digest(config_hash)},
                     {"models", model_tags},
                     {"adv_ratio_mean", overall_ratio(summaries)},
                     {"rho", redundancy_rho(dataset.dim, dataset.images.size())},
                     {"rho_definition", "dim^2 / log2(n_images)"},
                     {"rho_note", "image bits per manifold-identifying bit; invert for the "
                                  "reciprocal convention"}};
    auto tmp = analysis_dir / "summary.json.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("write analysis summary: cannot open " + tmp.string());
        out << j.dump(2) << '\n';
    }
    fs::rename(tmp, analysis_dir / "summary.json");
}

inline SweepOutcome run_sweep(const SweepConfig& cfg, const LogFn& log = nullptr) {
    cfg.validate();
    const std::uint64_t config_hash = sweep_config_hash(cfg);
    const int workers = cfg.workers > 0 ? cfg.workers : default_worker_count();
    fs::create_directories(cfg.out_root / "attacks");
    fs::create_directories(cfg.out_root / "analysis");

    SweepOutcome outcome;

    // Stage 1+2: datasets and the full training grid.
    outcome.protocol = run_protocol(cfg.dims, cfg.steps, cfg.models_per_config, cfg.base_seed,
                                    cfg.train, cfg.out_root, workers, log);
    outcome.all_converged = outcome.protocol.all_converged;

    // Stage 3+4 per configuration.
    struct ConfigRollup {
        int dim;
        std::uint32_t step_md;
        std::size_t n_images = 0;
        std::uint32_t conflicts = 0;
        std::vector<std::string> attacked_tags;
        std::vector<AttackSummary> summaries;
    };
    std::vector<ConfigRollup> rollups;

    for (int dim : cfg.dims) {
        for (double step : cfg.steps) {
            const std::uint32_t step_md = to_millideg(step);
            ConfigRollup rollup{dim, step_md};
            Dataset dataset;
            try {
                dataset = load_or_generate_dataset(dim, step_md, cfg.out_root / "datasets", log);
            } catch (const std::exception& e) {
                outcome.failures.push_back("dataset " + config_tag(dim, step_md) + ": " + e.what());
                continue;
            }
            rollup.n_images = dataset.images.size();
            rollup.conflicts = dataset.conflict_count;

            for (const auto& run : outcome.protocol.runs) {
                if (run.dim != dim || run.step_millideg != step_md) continue;
                const std::string tag = run_tag(dim, step_md, run.seed);
                if (!run.converged) {
                    if (log) log("skipping attack for non-converged " + tag);
                    continue;
                }
                const fs::path records_path = cfg.out_root / "attacks" / (tag + ".records.csv");
                const fs::path summary_path = cfg.out_root / "attacks" / (tag + ".summary.json");
                try {
                    ModelParams<float> params = read_checkpoint(run.checkpoint_path);
                    const std::uint64_t model_digest = params_digest(params);
                    if (!detail::attack_outputs_valid(records_path, summary_path,
                                                      dataset.content_hash, model_digest)) {
                        if (log) log("attacking " + tag);
                        AttackResult result =
                            run_exhaustive_attack(params, dataset, cfg.attack_mode, tag, workers);
                        write_attack_outputs(result, dataset, model_digest, records_path,
                                             summary_path);
                        if (log)
                            log("attack " + tag + ": adversarial_count=" +
                                std::to_string(result.summary.adversarial_count) + " of " +
                                std::to_string(result.summary.candidates_total));
                    } else if (log) {
                        log("reusing attack outputs for " + tag);
                    }
                    rollup.attacked_tags.push_back(tag);
                    rollup.summaries.push_back(read_attack_summary_json(summary_path));
                } catch (const std::exception& e) {
                    outcome.failures.push_back("attack " + tag + ": " + e.what());
                }
            }

            if (!rollup.attacked_tags.empty()) {
                try {
                    analyze_config(dataset, rollup.attacked_tags, cfg.out_root / "attacks",
                                   cfg.out_root / "analysis" / config_tag(dim, step_md),
                                   config_hash);
                } catch (const std::exception& e) {
                    outcome.failures.push_back("analysis " + config_tag(dim, step_md) + ": " +
                                               e.what());
                }
            }
            rollups.push_back(std::move(rollup));
        }
    }

    // Cross-configuration redundancy relation.
    nlohmann::json redundancy_json;
    std::vector<RedundancyEntry> red_entries;
    for (const auto& r : rollups) {
        if (r.summaries.empty() || r.n_images <= 1) continue;
        red_entries.push_back(
            {r.dim, r.step_md, r.n_images, 0.0, overall_ratio(r.summaries)});
    }
    if (red_entries.size() >= 2) {
        const RedundancySummary red = redundancy_summary(red_entries);
        write_redundancy_csv(red, cfg.out_root / "analysis" / "redundancy.csv");
        auto entries = nlohmann::json::array();
        for (const auto& e : red.entries)
            entries.push_back({{"dim", e.dim},
                               {"step", from_millideg(e.step_millideg)},
                               {"n_images", e.n_images},
                               {"rho", e.rho},
                               {"adv_ratio_mean", e.adv_ratio_mean}});
        redundancy_json = {{"entries", entries}, {"spearman", red.spearman}};
    }

    // Top-level report.
    nlohmann::json configs = nlohmann::json::array();
    for (const auto& r : rollups) {
        nlohmann::json c{{"dim", r.dim},
                         {"step", from_millideg(r.step_md)},
                         {"n_images", r.n_images},
                         {"conflict_count", r.conflicts},
                         {"models_attacked", r.attacked_tags.size()}};
        if (!r.summaries.empty()) c["adv_ratio_mean"] = overall_ratio(r.summaries);
        configs.push_back(c);
    }
    int converged_count = 0;
    for (const auto& run : outcome.protocol.runs) converged_count += run.converged ? 1 : 0;
    nlohmann::json report{{"format", "lpx-report/1"},
                          {"config_hash", format_digest(config_hash)},
                          {"base_seed", cfg.base_seed},
                          {"attack_mode", cfg.attack_mode == AttackMode::Full
                                              ? "full"
                                              : "incremental_verified"},
                          {"configs", configs},
                          // Invocation details (how much work this run did) stay
                          // out of the report so reruns are byte-identical.
                          {"training", {{"total_runs", outcome.protocol.runs.size()},
                                        {"converged", converged_count}}},
                          {"failures", outcome.failures}};
    if (!redundancy_json.is_null()) report["redundancy"] = redundancy_json;

    outcome.report_path = cfg.out_root / "report.json";
    auto tmp = outcome.report_path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("write report: cannot open " + tmp.string());
        out << report.dump(2) << '\n';
    }
    fs::rename(tmp, outcome.report_path);
    return outcome;
}

}  // namespace linepix
