#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tse/common.hpp"

namespace tse {

// One multichannel series, channel-major: values[c * length + t].
struct Series {
    std::size_t channels = 1;
    std::size_t length = 0;
    std::vector<double> values;

    Series() = default;
    Series(std::size_t c, std::size_t len) : channels(c), length(len), values(c * len, 0.0) {}

    double at(std::size_t c, std::size_t t) const { return values[c * length + t]; }
    double& at(std::size_t c, std::size_t t) { return values[c * length + t]; }
    const double* channel(std::size_t c) const { return values.data() + c * length; }
    double* channel(std::size_t c) { return values.data() + c * length; }
};

struct TimeSeriesDataset {
    std::string name;
    std::vector<Series> series;
    std::vector<std::string> labels;  // empty, or one label per series

    std::size_t size() const { return series.size(); }
    bool has_labels() const { return !labels.empty(); }
    std::size_t channels() const { return series.empty() ? 0 : series.front().channels; }
    std::size_t max_length() const;
    bool equal_lengths() const;
    void validate() const;
};

// Per-channel statistics over the pooled values of every series.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population (N divisor)
};

// --- Loaders -----------------------------------------------------------

// Tab-separated archive format: one series per line, class token first.
// Trailing NaN runs encode shorter series and are trimmed; an interior NaN
// is a parse error.
TimeSeriesDataset load_ucr_tsv(const std::string& path);

// ".ts" format: "@" header lines, then "@data"; one series per line with
// ":"-separated dimensions of comma-separated values, class token last.
TimeSeriesDataset load_ts(const std::string& path);

// Canonical writer for the ".ts" format (round-trips through load_ts).
void write_ts(const TimeSeriesDataset& ds, const std::string& path);

struct LongSeriesLoad {
    Series series;          // univariate
    std::size_t imputed = 0;  // number of forward-filled entries
};

// Semicolon-separated CSV with a Global_active_power column; "?" entries
// are imputed with the last valid value (first valid value for a leading
// gap).
LongSeriesLoad load_ihepc(const std::string& path);

// --- Transformations ---------------------------------------------------

// Shift/scale every channel to zero mean and unit population variance over
// the pooled dataset; near-constant channels (std < 1e-8) become all zero.
NormStats normalize(TimeSeriesDataset& ds);

void apply_normalization(TimeSeriesDataset& ds, const NormStats& stats);

// Windows start at 0 and advance by stride: floor((L-width)/stride)+1 of
// them.
std::vector<Series> sliding_windows(const Series& s, std::size_t width, std::size_t stride);
std::vector<std::size_t> sliding_window_starts(std::size_t length, std::size_t width,
                                               std::size_t stride);

// Difference between the mean of the next `period` steps and the mean of
// the previous `period` steps, defined for t in [period-1, L-period-1].
struct DiscrepancyTargets {
    std::size_t first_t = 0;
    std::vector<double> values;
};
DiscrepancyTargets mean_discrepancy_targets(const Series& s, std::size_t period);

// First 5e5 steps for training, remainder for testing.
std::pair<Series, Series> split_long_series(const Series& s);

}  // namespace tse
