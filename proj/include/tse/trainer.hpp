#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tse/data.hpp"
#include "tse/encoder.hpp"
#include "tse/triplet.hpp"

namespace tse {

struct AdamConfig {
    double alpha = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second-moment state over a fixed parameter layout.
class AdamState {
public:
    AdamState() = default;
    AdamState(std::span<const std::size_t> sizes, AdamConfig cfg = {});
    explicit AdamState(const EncoderParams& params, AdamConfig cfg = {});

    // One update over all slots; `values` are the parameter buffers in
    // layout order and `flat_grads` their concatenated gradients. Throws
    // train_error on a non-finite gradient, leaving parameters untouched.
    void step(std::span<double* const> values, std::span<const double> flat_grads);

    std::uint64_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<std::size_t> sizes_, offsets_;
    std::vector<double> m_, v_;
    std::uint64_t t_ = 0;
};

struct TrainConfig {
    std::size_t K = 5;
    std::size_t batch_size = 10;
    std::size_t total_steps = 0;  // 0 resolves to 2000 when K >= 10, else 1500
    std::uint64_t seed = 0;
    std::optional<LengthMode> length_mode;  // unset: fixed iff all lengths equal
    std::size_t max_subseries = 0;          // 0 = lengths uncapped
    int threads = 1;

    std::size_t resolved_steps() const {
        return total_steps != 0 ? total_steps : (K >= 10 ? 2000 : 1500);
    }
};

struct TracePoint {
    std::size_t step = 0;
    double loss = 0.0;
    double mean_norm = 0.0;
    bool has_norm = false;  // norms are sampled every 100 steps
};

// Endless stream of series indices: one anchor per series per epoch,
// epoch order reshuffled every wrap.
class EpochAnchorStream {
public:
    EpochAnchorStream(std::size_t n, Rng& rng) : n_(n), rng_(rng) { refill(); }

    std::size_t next() {
        if (pos_ == order_.size()) refill();
        return order_[pos_++];
    }

private:
    void refill() {
        if (order_.empty()) {
            order_.resize(n_);
            for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
        }
        rng_.shuffle(order_);
        pos_ = 0;
    }

    std::size_t n_;
    Rng& rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

struct TrainResult {
    EncoderParams params;
    std::vector<TracePoint> trace;
    std::vector<std::string> warnings;
};

// Mean L2 norm of the dataset's representations; the every-100-steps
// divergence diagnostic.
double mean_representation_norm(const EncoderParams& params, const TimeSeriesDataset& ds,
                                int threads = 1);

// Run exactly resolved_steps() optimizer steps over mini-batches of
// per-series anchors (epochs shuffled, wrapping as needed). Deterministic
// given (seed, dataset, configs).
TrainResult train_encoder(const TimeSeriesDataset& ds, const EncoderConfig& encoder_config,
                          const TrainConfig& train_config);

// One independently seeded encoder per K (seed + index of K).
std::vector<TrainResult> train_combined(const TimeSeriesDataset& ds,
                                        const EncoderConfig& encoder_config,
                                        const TrainConfig& base_config,
                                        std::span<const std::size_t> ks);

// Row-wise concatenation of each encoder's representation of each series.
Matrix encode_combined(std::span<const EncoderParams* const> models,
                       const std::vector<const double*>& series,
                       const std::vector<std::size_t>& lengths, std::size_t channels,
                       int threads = 1);

// "step,loss,mean_norm" rows; the norm column is empty between diagnostics.
void write_loss_trace(const std::vector<TracePoint>& trace, const std::string& path);

}  // namespace tse
