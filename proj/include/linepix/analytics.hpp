#pragma once

// Aggregations over attack records, averaged across the models trained on
// one configuration: per-angle adversarial likelihood, per-pixel spatial
// likelihood, and the redundancy/robustness relation across configurations.
// Everything here is a pure function of its inputs; all counts are integer
// until the final division, so reruns are byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "linepix/attack.hpp"
#include "linepix/dataset.hpp"
#include "linepix/raster.hpp"

namespace linepix {

// Mean over models of ADV_cnt / (N * D^2).
inline double overall_ratio(const std::vector<AttackSummary>& summaries) {
    if (summaries.empty()) throw std::invalid_argument("overall_ratio: no model summaries");
    double sum = 0.0;
    for (const auto& s : summaries)
        sum += static_cast<double>(s.adversarial_count) / static_cast<double>(s.candidates_total);
    return sum / static_cast<double>(summaries.size());
}

struct AngleProfileEntry {
    std::uint32_t angle_millideg = 0;
    std::size_t n_alpha = 0;
    double adv_count_mean = 0.0;
    double ratio_mean = 0.0;  // mean over models of count / (n_alpha * D^2)
};

struct AngleProfile {
    std::vector<AngleProfileEntry> entries;  // every dataset angle, ascending
};

inline AngleProfile angle_profile(const std::vector<std::vector<AttackRecord>>& per_model_records,
                                  const Dataset& dataset) {
    const double d2 = static_cast<double>(dataset.dim) * dataset.dim;
    const std::size_t models = per_model_records.size();
    if (models == 0) throw std::invalid_argument("angle_profile: no models");

    std::map<std::uint32_t, std::vector<std::uint64_t>> counts;  // angle -> per-model count
    for (const auto& [angle_md, ids] : dataset.angle_index)
        counts[angle_md].assign(models, 0);
    for (std::size_t m = 0; m < models; ++m) {
        for (const auto& rec : per_model_records[m]) {
            if (rec.image_id >= dataset.images.size())
                throw std::invalid_argument("angle_profile: record references unknown image id");
            const auto angle_md = to_millideg(dataset.images[rec.image_id].canonical.angle_deg);
            counts.at(angle_md)[m] += 1;
        }
    }

    AngleProfile profile;
    for (const auto& [angle_md, per_model] : counts) {
        AngleProfileEntry e;
        e.angle_millideg = angle_md;
        e.n_alpha = dataset.angle_index.at(angle_md).size();
        double count_sum = 0.0, ratio_sum = 0.0;
        for (std::uint64_t c : per_model) {
            count_sum += static_cast<double>(c);
            ratio_sum += static_cast<double>(c) / (static_cast<double>(e.n_alpha) * d2);
        }
        e.adv_count_mean = count_sum / static_cast<double>(models);
        e.ratio_mean = ratio_sum / static_cast<double>(models);
        profile.entries.push_back(e);
    }
    return profile;
}

struct HeatmapGrid {
    int dim = 0;
    std::size_t models = 0;
    std::vector<std::uint64_t> counts;  // D*D, summed over models
    std::vector<double> values;         // per-model count/N, averaged over models
};

struct EndpointMarker {
    std::uint32_t angle_millideg = 0;
    int row = 0;
    int col = 0;
};

inline HeatmapGrid spatial_heatmap(const std::vector<std::vector<AttackRecord>>& per_model_records,
                                   const Dataset& dataset) {
    const std::size_t models = per_model_records.size();
    if (models == 0) throw std::invalid_argument("spatial_heatmap: no models");
    HeatmapGrid grid;
    grid.dim = dataset.dim;
    grid.models = models;
    grid.counts.assign(static_cast<std::size_t>(dataset.dim) * dataset.dim, 0);
    grid.values.assign(grid.counts.size(), 0.0);
    for (const auto& records : per_model_records) {
        for (const auto& rec : records) {
            if (rec.image_id >= dataset.images.size())
                throw std::invalid_argument("spatial_heatmap: record references unknown image id");
            grid.counts[static_cast<std::size_t>(rec.row) * dataset.dim + rec.col] += 1;
        }
    }
    const double norm = static_cast<double>(dataset.images.size()) * static_cast<double>(models);
    for (std::size_t i = 0; i < grid.counts.size(); ++i)
        grid.values[i] = static_cast<double>(grid.counts[i]) / norm;
    return grid;
}

// The "X" markers: endpoint pixels of the maximal-length lines at the two
// decision-boundary angles.
inline std::vector<EndpointMarker> boundary_markers(int dim) {
    std::vector<EndpointMarker> markers;
    for (double angle : {0.0, 40.0}) {
        const auto e = line_endpoints({dim - 2, angle}, dim);
        markers.push_back({to_millideg(angle), e.row0, e.col0});
        markers.push_back({to_millideg(angle), e.row1, e.col1});
    }
    return markers;
}

struct RedundancyEntry {
    int dim = 0;
    std::uint32_t step_millideg = 0;
    std::size_t n_images = 0;
    double rho = 0.0;  // D^2 / log2(N)
    double adv_ratio_mean = 0.0;
};

struct RedundancySummary {
    std::vector<RedundancyEntry> entries;  // sorted by rho
    double spearman = 0.0;
};

inline double redundancy_rho(int dim, std::size_t n_images) {
    if (n_images <= 1) throw std::invalid_argument("redundancy: needs N > 1");
    return static_cast<double>(dim) * dim / std::log2(static_cast<double>(n_images));
}

// Spearman rank correlation with average ranks on ties; degenerate rank
// vectors (all-tied side) yield 0 by definition here.
inline double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("spearman: need two vectors of equal size >= 2");
    auto ranks = [](const std::vector<double>& v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

inline RedundancySummary redundancy_summary(std::vector<RedundancyEntry> entries) {
    if (entries.size() < 2)
        throw std::invalid_argument("redundancy_summary: needs >= 2 configurations");
    for (auto& e : entries) e.rho = redundancy_rho(e.dim, e.n_images);
    std::sort(entries.begin(), entries.end(),
              [](const RedundancyEntry& x, const RedundancyEntry& y) { return x.rho < y.rho; });
    std::vector<double> rhos, ratios;
    for (const auto& e : entries) {
        rhos.push_back(e.rho);
        ratios.push_back(e.adv_ratio_mean);
    }
    RedundancySummary summary;
    summary.entries = std::move(entries);
    summary.spearman = spearman_correlation(rhos, ratios);
    return summary;
}

// ---- emitters ----

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

namespace detail {

inline std::ofstream open_atomic(const std::filesystem::path& tmp) {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    return out;
}

}  // namespace detail

inline void write_angle_profile_csv(const AngleProfile& profile,
                                    const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        auto out = detail::open_atomic(tmp);
        out << "alpha_deg,n_alpha,adv_count_mean,ratio_mean\n";
        for (const auto& e : profile.entries)
            out << format_millideg(e.angle_millideg) << ',' << e.n_alpha << ','
                << format_real(e.adv_count_mean) << ',' << format_real(e.ratio_mean) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

inline void write_heatmap_csv(const HeatmapGrid& grid, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        auto out = detail::open_atomic(tmp);
        for (int r = 0; r < grid.dim; ++r) {
            for (int c = 0; c < grid.dim; ++c) {
                if (c) out << ',';
                out << format_real(grid.values[static_cast<std::size_t>(r) * grid.dim + c]);
            }
            out << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

// P2 graymap scaled so the hottest pixel is 65535; viewable anywhere.
inline void write_heatmap_pgm(const HeatmapGrid& grid, const std::filesystem::path& path) {
    double max_value = 0.0;
    for (double v : grid.values) max_value = std::max(max_value, v);
    auto tmp = path;
    tmp += ".tmp";
    {
        auto out = detail::open_atomic(tmp);
        out << "P2\n" << grid.dim << ' ' << grid.dim << "\n65535\n";
        for (int r = 0; r < grid.dim; ++r) {
            for (int c = 0; c < grid.dim; ++c) {
                if (c) out << ' ';
                const double v = grid.values[static_cast<std::size_t>(r) * grid.dim + c];
                out << (max_value > 0.0
                            ? static_cast<int>(std::lround(v / max_value * 65535.0))
                            : 0);
            }
            out << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

inline void write_markers_csv(const std::vector<EndpointMarker>& markers,
                              const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        auto out = detail::open_atomic(tmp);
        out << "alpha_deg,row,col\n";
        for (const auto& m : markers)
            out << format_millideg(m.angle_millideg) << ',' << m.row << ',' << m.col << '\n';
    }
    std::filesystem::rename(tmp, path);
}

inline void write_redundancy_csv(const RedundancySummary& summary,
                                 const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        auto out = detail::open_atomic(tmp);
        out << "dim,step,n_images,rho,adv_ratio_mean\n";
        for (const auto& e : summary.entries)
            out << e.dim << ',' << format_millideg(e.step_millideg) << ',' << e.n_images << ','
                << format_real(e.rho) << ',' << format_real(e.adv_ratio_mean) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace linepix
