#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "coopo/common.hpp"

namespace coopo {

/// One CSV line. Real-valued fields that do not apply to a phase hold NaN and
/// are written as empty cells.
struct MetricRow {
    std::string run_id;
    std::size_t cycle = 0;
    std::string phase;  ///< offline | online | eval
    std::size_t step = 0;
    double mean_return = kNaN;
    double policy_loss = kNaN;
    double q_loss = kNaN;
    double v_loss = kNaN;
    double kl_to_prev = kNaN;
    double tv_to_prev = kNaN;
    double adv_mean = kNaN;
    double adv_absmax = kNaN;
    std::size_t env_steps_cum = 0;
    std::size_t traj_cum = 0;
    double wall_ms = 0.0;

    static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
};

inline const std::vector<std::string> kMetricColumns = {
    "run_id",   "cycle",      "phase",      "step",     "mean_return",   "policy_loss", "q_loss", "v_loss",
    "kl_to_prev", "tv_to_prev", "adv_mean", "adv_absmax", "env_steps_cum", "traj_cum",    "wall_ms"};

/// Step tags of eval rows within a cycle.
inline constexpr std::size_t kEvalBefore = 0;
inline constexpr std::size_t kEvalMid = 1;  ///< after the offline phase
inline constexpr std::size_t kEvalAfter = 2;

using MetricSink = std::function<void(const MetricRow&)>;

std::string to_csv_line(const MetricRow& row);

/// Append-only writer; every row is flushed as soon as it is written.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::filesystem::path& path);
    void write(const MetricRow& row);
    MetricSink sink();

private:
    std::ofstream out_;
};

/// A parsed CSV: header plus rows of cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Eval-phase rows of a metrics file at a given step tag, as (x, mean_return)
/// with x taken from column `x_column`.
std::vector<std::pair<double, double>> eval_curve(const CsvTable& table, const std::string& x_column,
                                                  std::size_t step_tag);

/// Turns every `*.csv` metrics file under `metrics_dir` into one tidy CSV per
/// figure under `out_dir`. A metrics file's run_id is "<curve>/s<seed>"; the
/// subdirectory it lives in names the figure (files at the top level form the
/// figure "curves"). Points are the cycle-end eval rows. Output columns:
/// curve,x,y,y_lo,y_hi where y is the mean over seeds and the band is the
/// pointwise min/max.
/// Returns the written paths. Throws SchemaError on inconsistent columns.
std::vector<std::filesystem::path> export_plots(const std::filesystem::path& metrics_dir,
                                                const std::filesystem::path& out_dir,
                                                const std::string& x_column = "traj_cum");

}  // namespace coopo
