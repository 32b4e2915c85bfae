#include "tse/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace tse {

std::size_t TimeSeriesDataset::max_length() const {
    std::size_t m = 0;
    for (const Series& s : series) m = std::max(m, s.length);
    return m;
}

bool TimeSeriesDataset::equal_lengths() const {
    for (const Series& s : series)
        if (s.length != series.front().length) return false;
    return true;
}

void TimeSeriesDataset::validate() const {
    if (!labels.empty() && labels.size() != series.size())
        throw std::invalid_argument("dataset: labels must align 1:1 with series");
    for (const Series& s : series) {
        if (s.length < 1) throw std::invalid_argument("dataset: series length must be >= 1");
        if (s.channels != channels())
            throw std::invalid_argument("dataset: all series must share a channel count");
        if (s.values.size() != s.channels * s.length)
            throw std::invalid_argument("dataset: series buffer size mismatch");
    }
}

namespace {

std::string strip_cr(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
}

bool parse_double(const std::string& field, double& out) {
    const char* begin = field.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end != begin && *end == '\0' && !field.empty();
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

TimeSeriesDataset load_ucr_tsv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw parse_error("cannot open dataset file: " + path);
    TimeSeriesDataset ds;
    {
        // Dataset name from the file stem.
        std::size_t slash = path.find_last_of('/');
        std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
        std::size_t dot = base.find_last_of('.');
        ds.name = dot == std::string::npos ? base : base.substr(0, dot);
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> fields = split(line, '\t');
        if (fields.size() < 2)
            throw parse_error(path + ":" + std::to_string(line_no) +
                              ": expected a class token and at least one value");
        std::vector<double> vals;
        vals.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            double v;
            if (!parse_double(fields[i], v))
                throw parse_error(path + ":" + std::to_string(line_no) + ": non-numeric value '" +
                                  fields[i] + "'");
            vals.push_back(v);
        }
        // Trailing NaNs are padding for variable-length datasets.
        while (!vals.empty() && std::isnan(vals.back())) vals.pop_back();
        if (vals.empty())
            throw parse_error(path + ":" + std::to_string(line_no) + ": series has no values");
        for (double v : vals)
            if (std::isnan(v))
                throw parse_error(path + ":" + std::to_string(line_no) +
                                  ": interior NaN value in series");
        Series s(1, vals.size());
        std::copy(vals.begin(), vals.end(), s.values.begin());
        ds.series.push_back(std::move(s));
        ds.labels.push_back(fields[0]);
    }
    if (ds.series.empty()) throw parse_error(path + ": empty dataset file");
    ds.validate();
    return ds;
}

TimeSeriesDataset load_ts(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw parse_error("cannot open dataset file: " + path);
    TimeSeriesDataset ds;
    bool in_data = false;
    bool has_class_labels = false;
    bool saw_univariate_flag = false, univariate = false;
    long declared_dims = -1;
    std::unordered_set<std::string> class_tokens;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        if (!in_data) {
            if (line[0] == '#') continue;
            if (line[0] != '@')
                throw parse_error(path + ":" + std::to_string(line_no) +
                                  ": expected '@' header line before @data");
            std::istringstream ls(line);
            std::string tag;
            ls >> tag;
            tag = lower(tag);
            if (tag == "@data") {
                in_data = true;
            } else if (tag == "@problemname") {
                ls >> ds.name;
            } else if (tag == "@univariate") {
                std::string v;
                ls >> v;
                saw_univariate_flag = true;
                univariate = lower(v) == "true";
            } else if (tag == "@dimension" || tag == "@dimensions") {
                ls >> declared_dims;
            } else if (tag == "@classlabel") {
                std::string flag;
                ls >> flag;
                has_class_labels = lower(flag) == "true";
                std::string tok;
                while (ls >> tok) class_tokens.insert(tok);
            }
            // Other headers (@timeStamps, @equalLength, ...) carry no
            // information we need.
            continue;
        }
        std::vector<std::string> parts = split(line, ':');
        std::string label;
        if (has_class_labels) {
            if (parts.size() < 2)
                throw parse_error(path + ":" + std::to_string(line_no) +
                                  ": missing class token field");
            label = parts.back();
            parts.pop_back();
            if (!class_tokens.empty() && !class_tokens.count(label))
                throw parse_error(path + ":" + std::to_string(line_no) + ": unknown class token '" +
                                  label + "'");
        }
        if (parts.empty())
            throw parse_error(path + ":" + std::to_string(line_no) + ": series has no dimensions");
        if (saw_univariate_flag && univariate && parts.size() != 1)
            throw parse_error(path + ":" + std::to_string(line_no) +
                              ": univariate dataset but series has " +
                              std::to_string(parts.size()) + " dimensions");
        if (declared_dims > 0 && parts.size() != static_cast<std::size_t>(declared_dims))
            throw parse_error(path + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(declared_dims) + " dimensions, got " +
                              std::to_string(parts.size()));
        std::vector<std::vector<double>> dims;
        for (const std::string& part : parts) {
            std::vector<double> vals;
            for (const std::string& f : split(part, ',')) {
                double v;
                if (!parse_double(f, v))
                    throw parse_error(path + ":" + std::to_string(line_no) +
                                      ": non-numeric value '" + f + "'");
                vals.push_back(v);
            }
            dims.push_back(std::move(vals));
        }
        for (const auto& d : dims)
            if (d.size() != dims.front().size())
                throw parse_error(path + ":" + std::to_string(line_no) +
                                  ": ragged dimensions in one series");
        Series s(dims.size(), dims.front().size());
        for (std::size_t c = 0; c < dims.size(); ++c)
            std::copy(dims[c].begin(), dims[c].end(), s.channel(c));
        ds.series.push_back(std::move(s));
        if (has_class_labels) ds.labels.push_back(label);
    }
    if (!in_data) throw parse_error(path + ": missing @data section");
    if (ds.series.empty()) throw parse_error(path + ": no series after @data");
    ds.validate();
    return ds;
}

void write_ts(const TimeSeriesDataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw parse_error("cannot open file for writing: " + path);
    os << "@problemName " << (ds.name.empty() ? "dataset" : ds.name) << "\n";
    const bool uni = ds.channels() == 1;
    os << "@univariate " << (uni ? "true" : "false") << "\n";
    if (!uni) os << "@dimension " << ds.channels() << "\n";
    if (ds.has_labels()) {
        std::vector<std::string> uniq = ds.labels;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        os << "@classLabel true";
        for (const std::string& t : uniq) os << ' ' << t;
        os << "\n";
    } else {
        os << "@classLabel false\n";
    }
    os << "@data\n";
    os.precision(17);
    for (std::size_t i = 0; i < ds.series.size(); ++i) {
        const Series& s = ds.series[i];
        for (std::size_t c = 0; c < s.channels; ++c) {
            if (c) os << ':';
            for (std::size_t t = 0; t < s.length; ++t) {
                if (t) os << ',';
                os << s.at(c, t);
            }
        }
        if (ds.has_labels()) os << ':' << ds.labels[i];
        os << "\n";
    }
    if (!os) throw parse_error("short write: " + path);
}

LongSeriesLoad load_ihepc(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw parse_error("cannot open file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw parse_error(path + ": empty file");
    line = strip_cr(line);
    const std::vector<std::string> header = split(line, ';');
    std::size_t col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == "Global_active_power") col = i;
    if (col == header.size())
        throw parse_error(path + ": missing Global_active_power column in header");

    std::vector<double> raw;  // NaN marks a missing entry
    std::size_t line_no = 1;
    bool any_valid = false;
    while (std::getline(is, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> fields = split(line, ';');
        if (fields.size() <= col)
            throw parse_error(path + ":" + std::to_string(line_no) + ": too few columns");
        const std::string& f = fields[col];
        if (f == "?") {
            raw.push_back(std::nan(""));
        } else {
            double v;
            if (!parse_double(f, v))
                throw parse_error(path + ":" + std::to_string(line_no) + ": non-numeric value '" +
                                  f + "'");
            raw.push_back(v);
            any_valid = true;
        }
    }
    if (!any_valid) throw parse_error(path + ": no valid Global_active_power values");

    LongSeriesLoad out;
    out.series = Series(1, raw.size());
    double last = std::nan("");
    // Leading gap: backfill with the first valid value.
    for (double v : raw)
        if (!std::isnan(v)) {
            last = v;
            break;
        }
    for (std::size_t t = 0; t < raw.size(); ++t) {
        if (std::isnan(raw[t])) {
            out.series.values[t] = last;
            ++out.imputed;
        } else {
            last = raw[t];
            out.series.values[t] = raw[t];
        }
    }
    return out;
}

NormStats normalize(TimeSeriesDataset& ds) {
    ds.validate();
    const std::size_t C = ds.channels();
    NormStats stats;
    stats.mean.assign(C, 0.0);
    stats.stddev.assign(C, 0.0);
    if (ds.series.empty()) return stats;
    for (std::size_t c = 0; c < C; ++c) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const Series& s : ds.series) {
            const double* row = s.channel(c);
            for (std::size_t t = 0; t < s.length; ++t) sum += row[t];
            n += s.length;
        }
        const double mean = sum / static_cast<double>(n);
        double var = 0.0;
        for (const Series& s : ds.series) {
            const double* row = s.channel(c);
            for (std::size_t t = 0; t < s.length; ++t) {
                const double d = row[t] - mean;
                var += d * d;
            }
        }
        stats.mean[c] = mean;
        stats.stddev[c] = std::sqrt(var / static_cast<double>(n));
    }
    apply_normalization(ds, stats);
    return stats;
}

void apply_normalization(TimeSeriesDataset& ds, const NormStats& stats) {
    const std::size_t C = ds.channels();
    if (stats.mean.size() != C || stats.stddev.size() != C)
        throw std::invalid_argument("apply_normalization: stats channel count mismatch");
    for (Series& s : ds.series) {
        for (std::size_t c = 0; c < C; ++c) {
            double* row = s.channel(c);
            if (stats.stddev[c] < 1e-8) {
                // Degenerate channel: no scale information, zero it out.
                std::fill(row, row + s.length, 0.0);
            } else {
                const double inv = 1.0 / stats.stddev[c];
                for (std::size_t t = 0; t < s.length; ++t) row[t] = (row[t] - stats.mean[c]) * inv;
            }
        }
    }
}

std::vector<std::size_t> sliding_window_starts(std::size_t length, std::size_t width,
                                               std::size_t stride) {
    if (width == 0 || width > length)
        throw std::invalid_argument("sliding_windows: width must be in [1, series length]");
    if (stride == 0) throw std::invalid_argument("sliding_windows: stride must be >= 1");
    std::vector<std::size_t> starts;
    starts.reserve((length - width) / stride + 1);
    for (std::size_t start = 0; start + width <= length; start += stride) starts.push_back(start);
    return starts;
}

std::vector<Series> sliding_windows(const Series& s, std::size_t width, std::size_t stride) {
    const std::vector<std::size_t> starts = sliding_window_starts(s.length, width, stride);
    std::vector<Series> out;
    out.reserve(starts.size());
    for (std::size_t start : starts) {
        Series w(s.channels, width);
        for (std::size_t c = 0; c < s.channels; ++c)
            std::copy(s.channel(c) + start, s.channel(c) + start + width, w.channel(c));
        out.push_back(std::move(w));
    }
    return out;
}

DiscrepancyTargets mean_discrepancy_targets(const Series& s, std::size_t period) {
    if (s.channels != 1)
        throw std::invalid_argument("mean_discrepancy_targets: univariate series required");
    if (period == 0) throw std::invalid_argument("mean_discrepancy_targets: period must be >= 1");
    if (s.length < 2 * period)
        throw std::invalid_argument("mean_discrepancy_targets: series shorter than 2*period");
    DiscrepancyTargets out;
    out.first_t = period - 1;
    const double* x = s.values.data();
    const double inv = 1.0 / static_cast<double>(period);
    // Rolling sums over [t-period+1, t] and [t+1, t+period].
    double prev = 0.0, next = 0.0;
    for (std::size_t t = 0; t < period; ++t) prev += x[t];
    for (std::size_t t = period; t < 2 * period; ++t) next += x[t];
    const std::size_t last_t = s.length - period - 1;
    out.values.reserve(last_t - out.first_t + 1);
    for (std::size_t t = out.first_t;; ++t) {
        out.values.push_back((next - prev) * inv);
        if (t == last_t) break;
        prev += x[t + 1] - x[t + 1 - period];
        next += x[t + 1 + period] - x[t + 1];
    }
    return out;
}

std::pair<Series, Series> split_long_series(const Series& s) {
    constexpr std::size_t kTrainLen = 500000;
    if (s.length < kTrainLen)
        throw std::invalid_argument("split_long_series: series shorter than 5e5 steps");
    Series train(s.channels, kTrainLen);
    Series test(s.channels, s.length - kTrainLen);
    for (std::size_t c = 0; c < s.channels; ++c) {
        std::copy(s.channel(c), s.channel(c) + kTrainLen, train.channel(c));
        std::copy(s.channel(c) + kTrainLen, s.channel(c) + s.length, test.channel(c));
    }
    if (test.length == 0) test = Series(s.channels, 0);
    return {std::move(train), std::move(test)};
}

}  // namespace tse
