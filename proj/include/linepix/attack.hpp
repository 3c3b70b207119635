#pragma once

// Exhaustive one-pixel attack: every image, every pixel, N*D^2 candidates,
// no sampling. A candidate inherits its source image's label (the dataset's
// pairwise Hamming distance >= 2 makes collisions with other dataset images
// impossible, but candidates matching another image would take that image's
// label). A candidate is adversarial iff the model classifies it away from
// that label.
//
// Two modes produce identical record lists: `Full` runs a complete forward
// per candidate; `IncrementalVerified` uses the receptive-field fast path
// and re-runs the full forward for every candidate the fast path flags as
// adversarial or scores within the near-tie band, so recorded probabilities
// always come from full forwards.
//
// Work is partitioned by image id (the source activation cache is reused
// D^2 times) and all counters are integers, so results are byte-identical
// across worker counts.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "linepix/checkpoint.hpp"
#include "linepix/cnn.hpp"
#include "linepix/dataset.hpp"
#include "linepix/incremental.hpp"
#include "linepix/parallel.hpp"
#include "linepix/train.hpp"

namespace linepix {

// Fast-path results closer than this to a class tie are re-verified with a
// full forward; twice the fast path's 1e-3 per-output bound, so a sign flip
// of (p0 - p1) can never slip through unverified.
constexpr double kNearTieBand = 2e-3;

struct AttackCandidate {
    std::uint32_t image_id = 0;
    int row = 0;
    int col = 0;
    int flipped_to = 0;
    bool matches_dataset_image = false;
};

struct AttackRecord {
    std::uint32_t image_id = 0;
    int row = 0;
    int col = 0;
    int source_label = 0;
    int predicted_class = 0;
    std::array<float, 2> probs{};
};

struct AttackSummary {
    std::string model_id;
    int dim = 0;
    std::size_t n_images = 0;
    std::uint64_t candidates_total = 0;
    std::uint64_t adversarial_count = 0;
    std::map<std::uint32_t, std::uint64_t> per_angle;  // canonical millideg -> count
    std::vector<std::uint64_t> per_pixel;              // D*D grid
    std::uint64_t dataset_digest = 0;
};

enum class AttackMode { Full, IncrementalVerified };

inline std::vector<AttackCandidate> enumerate_flips(const LineImage& image,
                                                    const PatternIndex& index) {
    const int d = image.dim;
    std::vector<AttackCandidate> out;
    out.reserve(static_cast<std::size_t>(d) * d);
    const std::uint64_t base_hash = index.hash_of(image.bits);
    BitGrid scratch = image.bits;
    for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
            AttackCandidate cand;
            cand.image_id = image.id;
            cand.row = r;
            cand.col = c;
            cand.flipped_to = image.bits.get(r, c) ? 0 : 1;
            scratch.flip(r, c);
            const std::int64_t match =
                index.find(base_hash ^ index.hasher().key(r, c), scratch);
            cand.matches_dataset_image = match >= 0 && match != image.id;
            scratch.flip(r, c);
            out.push_back(cand);
        }
    }
    return out;
}

struct AttackResult {
    std::vector<AttackRecord> records;  // sorted by (image_id, row, col)
    AttackSummary summary;
};

inline AttackResult run_exhaustive_attack(const ModelParams<float>& params,
                                          const Dataset& dataset, AttackMode mode,
                                          const std::string& model_id = "",
                                          int workers = 0) {
    if (params.dim != dataset.dim)
        throw std::invalid_argument("attack: dataset/model dim mismatch");
    {
        ForwardCache<float> cache;
        if (count_correct(params, dataset, cache) != dataset.images.size())
            throw std::invalid_argument(
                "attack: refusing non-converged model (training accuracy < 1)");
    }
    if (workers <= 0) workers = default_worker_count();

    const int d = dataset.dim;
    const std::size_t n = dataset.images.size();
    const PatternIndex index(dataset);
    const IncrementalContext<float> ctx(params);

    struct WorkerState {
        ForwardCache<float> src_cache;
        ForwardCache<float> probe_cache;
        IncrementalWorkspace<float> inc_ws;
        BitGrid scratch;
        std::vector<std::uint64_t> per_pixel;
        std::map<std::uint32_t, std::uint64_t> per_angle;
    };
    std::vector<WorkerState> states(static_cast<std::size_t>(workers));
    for (auto& s : states) s.per_pixel.assign(static_cast<std::size_t>(d) * d, 0);

    std::vector<std::vector<AttackRecord>> per_image_records(n);

    parallel_run(n, workers, [&](std::size_t task, int worker) {
        WorkerState& st = states[static_cast<std::size_t>(worker)];
        const LineImage& img = dataset.images[task];
        const std::uint64_t base_hash = index.hash_of(img.bits);
        forward(params, img.bits, RunMode::Eval, 0, st.src_cache);
        st.scratch = img.bits;

        auto& records = per_image_records[task];
        const std::uint32_t angle_md = to_millideg(img.canonical.angle_deg);
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < d; ++c) {
                // Ground truth: the source label, unless the candidate IS
                // another dataset image (provably absent, handled anyway).
                st.scratch.flip(r, c);
                int truth = img.label;
                const std::int64_t match =
                    index.find(base_hash ^ index.hasher().key(r, c), st.scratch);
                if (match >= 0 && match != img.id) truth = dataset.images[match].label;

                bool adversarial = false;
                std::array<float, 2> probs{};
                if (mode == AttackMode::Full) {
                    probs = forward(params, st.scratch, RunMode::Eval, 0, st.probe_cache);
                    adversarial = predict_class(probs) != truth;
                } else {
                    const auto fast = incremental_forward(ctx, st.src_cache,
                                                          PixelFlip{r, c}, st.inc_ws);
                    const bool suspect = predict_class(fast) != truth;
                    const bool near_tie =
                        std::abs(static_cast<double>(fast[0]) - fast[1]) < kNearTieBand;
                    if (suspect || near_tie) {
                        probs = forward(params, st.scratch, RunMode::Eval, 0, st.probe_cache);
                        adversarial = predict_class(probs) != truth;
                    }
                }
                if (adversarial) {
                    records.push_back({img.id, r, c, truth, predict_class(probs), probs});
                    st.per_pixel[static_cast<std::size_t>(r) * d + c] += 1;
                    st.per_angle[angle_md] += 1;
                }
                st.scratch.flip(r, c);
            }
        }
    });

    AttackResult result;
    result.summary.model_id = model_id;
    result.summary.dim = d;
    result.summary.n_images = n;
    result.summary.candidates_total =
        static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(d) * d;
    result.summary.per_pixel.assign(static_cast<std::size_t>(d) * d, 0);
    result.summary.dataset_digest = dataset.content_hash;
    for (const auto& st : states) {
        for (std::size_t i = 0; i < st.per_pixel.size(); ++i)
            result.summary.per_pixel[i] += st.per_pixel[i];
        for (const auto& [angle, count] : st.per_angle) result.summary.per_angle[angle] += count;
    }
    for (auto& recs : per_image_records) {
        result.summary.adversarial_count += recs.size();
        result.records.insert(result.records.end(), recs.begin(), recs.end());
    }
    return result;
}

inline std::string format_prob(float p) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(p));
    return buf;
}

inline void write_attack_records_csv(const AttackResult& result, const Dataset& dataset,
                                     const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("write records: cannot open " + tmp.string());
        out << "model_id,image_id,row,col,alpha_deg,length,source_label,predicted_class,p0,p1\n";
        for (const auto& rec : result.records) {
            const LineImage& img = dataset.images[rec.image_id];
            out << result.summary.model_id << ',' << rec.image_id << ',' << rec.row << ','
                << rec.col << ',' << format_millideg(to_millideg(img.canonical.angle_deg)) << ','
                << img.canonical.length_px << ',' << rec.source_label << ','
                << rec.predicted_class << ',' << format_prob(rec.probs[0]) << ','
                << format_prob(rec.probs[1]) << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<AttackRecord> read_attack_records_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read records: cannot open " + path.string());
    std::vector<AttackRecord> records;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read records: empty file");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        AttackRecord rec;
        char model[128];
        unsigned id, row, col, src, pred;
        double alpha, p0, p1;
        int length;
        if (std::sscanf(line.c_str(), "%127[^,],%u,%u,%u,%lf,%d,%u,%u,%lf,%lf", model, &id,
                        &row, &col, &alpha, &length, &src, &pred, &p0, &p1) != 10)
            throw std::runtime_error("read records: malformed row: " + line);
        rec.image_id = id;
        rec.row = static_cast<int>(row);
        rec.col = static_cast<int>(col);
        rec.source_label = static_cast<int>(src);
        rec.predicted_class = static_cast<int>(pred);
        rec.probs = {static_cast<float>(p0), static_cast<float>(p1)};
        records.push_back(rec);
    }
    return records;
}

inline void write_attack_summary_json(const AttackResult& result,
                                      const std::filesystem::path& path,
                                      std::uint64_t model_digest = 0) {
    const auto& s = result.summary;
    nlohmann::json angles = nlohmann::json::object();
    for (const auto& [angle_md, count] : s.per_angle)
        angles[format_millideg(angle_md)] = count;
    nlohmann::json grid = nlohmann::json::array();
    for (int r = 0; r < s.dim; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < s.dim; ++c)
            row.push_back(s.per_pixel[static_cast<std::size_t>(r) * s.dim + c]);
        grid.push_back(row);
    }
    nlohmann::json j{{"format", "lpx-attack-summary/1"},
                     {"model_id", s.model_id},
                     {"dim", s.dim},
                     {"n_images", s.n_images},
                     {"candidates_total", s.candidates_total},
                     {"adversarial_count", s.adversarial_count},
                     {"per_angle", angles},
                     {"per_pixel", grid},
                     {"dataset_digest", format_digest(s.dataset_digest)},
                     {"model_digest", format_digest(model_digest)}};
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("write summary: cannot open " + tmp.string());
        out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

inline AttackSummary read_attack_summary_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read summary: cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    AttackSummary s;
    s.model_id = j.at("model_id").get<std::string>();
    s.dim = j.at("dim").get<int>();
    s.n_images = j.at("n_images").get<std::size_t>();
    s.candidates_total = j.at("candidates_total").get<std::uint64_t>();
    s.adversarial_count = j.at("adversarial_count").get<std::uint64_t>();
    for (const auto& [key, value] : j.at("per_angle").items()) {
        const double deg = std::stod(key);
        s.per_angle[to_millideg(deg)] = value.get<std::uint64_t>();
    }
    s.per_pixel.reserve(static_cast<std::size_t>(s.dim) * s.dim);
    for (const auto& row : j.at("per_pixel"))
        for (const auto& cell : row) s.per_pixel.push_back(cell.get<std::uint64_t>());
    s.dataset_digest = std::stoull(j.at("dataset_digest").get<std::string>(), nullptr, 16);
    return s;
}

}  // namespace linepix
