#include "tse/trainer.hpp"

#include <cmath>
#include <fstream>

namespace tse {

AdamState::AdamState(std::span<const std::size_t> sizes, AdamConfig cfg) : cfg_(cfg) {
    std::size_t total = 0;
    for (std::size_t s : sizes) {
        sizes_.push_back(s);
        offsets_.push_back(total);
        total += s;
    }
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
}

AdamState::AdamState(const EncoderParams& params, AdamConfig cfg) {
    std::vector<std::size_t> sizes;
    for (const ParamTensor* p : params.parameters()) sizes.push_back(p->size());
    *this = AdamState(sizes, cfg);
}

void AdamState::step(std::span<double* const> values, std::span<const double> flat_grads) {
    if (values.size() != sizes_.size())
        throw std::invalid_argument("AdamState::step: slot count mismatch");
    if (flat_grads.size() != m_.size())
        throw std::invalid_argument("AdamState::step: gradient size mismatch");
    for (double g : flat_grads)
        if (!std::isfinite(g)) throw train_error("non-finite gradient in optimizer step");

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t s = 0; s < sizes_.size(); ++s) {
        double* theta = values[s];
        const double* g = flat_grads.data() + offsets_[s];
        double* m = m_.data() + offsets_[s];
        double* v = v_.data() + offsets_[s];
        for (std::size_t i = 0; i < sizes_[s]; ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= cfg_.alpha * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

double mean_representation_norm(const EncoderParams& params, const TimeSeriesDataset& ds,
                                int threads) {
    if (ds.series.empty()) return 0.0;
    std::vector<const double*> ptrs;
    std::vector<std::size_t> lengths;
    for (const Series& s : ds.series) {
        ptrs.push_back(s.values.data());
        lengths.push_back(s.length);
    }
    Matrix reprs = encode_batch(params, ptrs, lengths, ds.channels(), threads);
    double total = 0.0;
    for (std::size_t i = 0; i < reprs.rows; ++i) {
        double s2 = 0.0;
        const double* r = reprs.row(i);
        for (std::size_t j = 0; j < reprs.cols; ++j) s2 += r[j] * r[j];
        total += std::sqrt(s2);
    }
    return total / static_cast<double>(reprs.rows);
}

TrainResult train_encoder(const TimeSeriesDataset& ds, const EncoderConfig& encoder_config,
                          const TrainConfig& train_config) {
    ds.validate();
    if (ds.series.empty()) throw std::invalid_argument("train_encoder: empty dataset");
    if (train_config.K < 1) throw std::invalid_argument("train_encoder: K must be >= 1");
    if (train_config.batch_size < 1)
        throw std::invalid_argument("train_encoder: batch_size must be >= 1");

    TrainResult result;
    result.params = build_encoder(encoder_config, train_config.seed);
    AdamState adam(result.params);
    Rng sample_rng(derive_seed(train_config.seed, 0x5a6d));
    EpochAnchorStream stream(ds.series.size(), sample_rng);

    const std::size_t cap = train_config.max_subseries;
    const std::size_t effective_max =
        cap == 0 ? ds.max_length() : std::min(ds.max_length(), cap);
    const LengthMode mode = train_config.length_mode.value_or(
        ds.equal_lengths() ? LengthMode::Fixed : LengthMode::Varying);
    const BackpropMode bp_mode = (ds.channels() > 1 || effective_max > 10000)
                                     ? BackpropMode::PerTerm
                                     : BackpropMode::Joint;

    GradBuffer master(result.params);
    BackpropWorkspace ws;
    std::vector<double*> value_ptrs;
    for (ParamTensor* p : result.params.parameters()) value_ptrs.push_back(p->value.data());

    const std::size_t steps = train_config.resolved_steps();
    std::vector<double> checkpoint_norms;
    bool warned = false;
    for (std::size_t step = 1; step <= steps; ++step) {
        TripletBatch batch;
        batch.length_mode = mode;
        batch.anchors.reserve(train_config.batch_size);
        for (std::size_t bi = 0; bi < train_config.batch_size; ++bi)
            batch.anchors.push_back(
                sample_anchor(ds, stream.next(), train_config.K, sample_rng, mode, cap));

        master.clear();
        BackpropResult bp = loss_backprop_through_encoder(result.params, ds, batch, bp_mode,
                                                          master.sink(), ws,
                                                          train_config.threads);
        try {
            adam.step(value_ptrs, master.flat());
        } catch (const train_error& e) {
            throw train_error(std::string(e.what()) + " (step " + std::to_string(step) + ")");
        }

        TracePoint tp;
        tp.step = step;
        tp.loss = bp.mean_loss;
        if (step % 100 == 0) {
            tp.mean_norm =
                mean_representation_norm(result.params, ds, train_config.threads);
            tp.has_norm = true;
            checkpoint_norms.push_back(tp.mean_norm);
            if (!warned && checkpoint_norms.size() >= 2) {
                bool monotone = true;
                for (std::size_t i = 1; i < checkpoint_norms.size(); ++i)
                    if (checkpoint_norms[i] <= checkpoint_norms[i - 1]) monotone = false;
                if (monotone && checkpoint_norms.back() > 10.0 * checkpoint_norms.front()) {
                    result.warnings.push_back(
                        "representation norm grew monotonically by more than 10x since step "
                        "100 (possible divergence), step " +
                        std::to_string(step));
                    warned = true;
                }
            }
        }
        result.trace.push_back(tp);
    }
    return result;
}

std::vector<TrainResult> train_combined(const TimeSeriesDataset& ds,
                                        const EncoderConfig& encoder_config,
                                        const TrainConfig& base_config,
                                        std::span<const std::size_t> ks) {
    if (ks.empty()) throw std::invalid_argument("train_combined: need at least one K");
    std::vector<TrainResult> out;
    out.reserve(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        TrainConfig cfg = base_config;
        cfg.K = ks[i];
        cfg.seed = base_config.seed + i;
        out.push_back(train_encoder(ds, encoder_config, cfg));
    }
    return out;
}

Matrix encode_combined(std::span<const EncoderParams* const> models,
                       const std::vector<const double*>& series,
                       const std::vector<std::size_t>& lengths, std::size_t channels,
                       int threads) {
    if (models.empty()) throw std::invalid_argument("encode_combined: no models");
    std::size_t total_dim = 0;
    for (const EncoderParams* m : models) total_dim += m->config.repr_dim;
    Matrix out(series.size(), total_dim);
    std::size_t col = 0;
    for (const EncoderParams* m : models) {
        Matrix block = encode_batch(*m, series, lengths, channels, threads);
        for (std::size_t r = 0; r < out.rows; ++r)
            std::copy(block.row(r), block.row(r) + block.cols, out.row(r) + col);
        col += m->config.repr_dim;
    }
    return out;
}

void write_loss_trace(const std::vector<TracePoint>& trace, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw parse_error("cannot open trace file for writing: " + path);
    os << "step,loss,mean_norm\n";
    os.precision(17);
    for (const TracePoint& tp : trace) {
        os << tp.step << ',' << tp.loss << ',';
        if (tp.has_norm) os << tp.mean_norm;
        os << '\n';
    }
    if (!os) throw parse_error("short write: " + path);
}

}  // namespace tse
