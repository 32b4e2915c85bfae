#include "tse/triplet.hpp"

#include <cmath>
#include <cstring>

#include "tse/nn.hpp"

namespace tse {

namespace {

double softplus(double x) {
    // max(x,0) + log1p(exp(-|x|)); never overflows.
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TripletAnchor sample_anchor(const TimeSeriesDataset& ds, std::size_t series_index, std::size_t K,
                            Rng& rng, LengthMode mode, std::size_t max_length) {
    if (ds.series.empty()) throw std::invalid_argument("sample_anchor: empty dataset");
    if (K < 1) throw std::invalid_argument("sample_anchor: K must be >= 1");
    const std::size_t s_i = ds.series[series_index].length;
    const std::size_t len_cap = max_length == 0 ? s_i : std::min(s_i, max_length);

    TripletAnchor a;
    const std::size_t s_pos = rng.uniform_int(1, len_cap);
    const std::size_t s_ref = rng.uniform_int(s_pos, len_cap);
    const std::size_t ref_start = rng.uniform_int(0, s_i - s_ref);
    const std::size_t pos_start = rng.uniform_int(ref_start, ref_start + s_ref - s_pos);
    a.ref = {series_index, ref_start, s_ref};
    a.pos = {series_index, pos_start, s_pos};
    a.negatives.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t j = rng.uniform_int(0, ds.series.size() - 1);
        const std::size_t s_j = ds.series[j].length;
        const std::size_t neg_cap = max_length == 0 ? s_j : std::min(s_j, max_length);
        std::size_t s_neg;
        if (mode == LengthMode::Fixed) {
            if (s_pos > s_j)
                throw std::invalid_argument(
                    "sample_anchor: fixed length mode needs equal-length series");
            s_neg = s_pos;
        } else {
            s_neg = rng.uniform_int(1, neg_cap);
        }
        const std::size_t neg_start = rng.uniform_int(0, s_j - s_neg);
        a.negatives.push_back({j, neg_start, s_neg});
    }
    return a;
}

TripletBatch sample_triplets(const TimeSeriesDataset& ds, std::size_t K, Rng& rng,
                             LengthMode mode, std::size_t max_length) {
    if (ds.series.empty()) throw std::invalid_argument("sample_triplets: empty dataset");
    TripletBatch batch;
    batch.length_mode = mode;
    batch.anchors.reserve(ds.series.size());
    for (std::size_t i = 0; i < ds.series.size(); ++i)
        batch.anchors.push_back(sample_anchor(ds, i, K, rng, mode, max_length));
    return batch;
}

LossValue triplet_loss(std::span<const double> r_ref, std::span<const double> r_pos,
                       const Matrix& r_negs) {
    if (r_ref.size() != r_pos.size() || (r_negs.rows > 0 && r_negs.cols != r_ref.size()))
        throw std::invalid_argument("triplet_loss: representation dimension mismatch");
    LossValue out;
    out.positive_term = softplus(-dot(r_ref, r_pos));
    out.total = out.positive_term;
    out.negative_terms.reserve(r_negs.rows);
    for (std::size_t k = 0; k < r_negs.rows; ++k) {
        const double term = softplus(dot(r_ref, {r_negs.row(k), r_negs.cols}));
        out.negative_terms.push_back(term);
        out.total += term;
    }
    return out;
}

TripletGrads triplet_loss_grad(std::span<const double> r_ref, std::span<const double> r_pos,
                               const Matrix& r_negs) {
    if (r_ref.size() != r_pos.size() || (r_negs.rows > 0 && r_negs.cols != r_ref.size()))
        throw std::invalid_argument("triplet_loss_grad: representation dimension mismatch");
    const std::size_t dim = r_ref.size();
    TripletGrads g;
    g.ref.assign(dim, 0.0);
    g.pos.assign(dim, 0.0);
    g.negs = Matrix(r_negs.rows, dim);

    // d/dz softplus(-z) = -sigmoid(-z);  d/dz softplus(z) = sigmoid(z).
    const double sp = sigmoid(-dot(r_ref, r_pos));
    for (std::size_t i = 0; i < dim; ++i) {
        g.ref[i] = -sp * r_pos[i];
        g.pos[i] = -sp * r_ref[i];
    }
    for (std::size_t k = 0; k < r_negs.rows; ++k) {
        const double* neg = r_negs.row(k);
        const double sn = sigmoid(dot(r_ref, {neg, dim}));
        double* gn = g.negs.row(k);
        for (std::size_t i = 0; i < dim; ++i) {
            g.ref[i] += sn * neg[i];
            gn[i] = sn * r_ref[i];
        }
    }
    return g;
}

namespace {

// Copy a slice of a dataset series into a batch-1 tensor.
Tensor3 slice_tensor(const TimeSeriesDataset& ds, const Slice& sl) {
    const Series& s = ds.series[sl.series];
    Tensor3 t(1, s.channels, sl.length);
    for (std::size_t c = 0; c < s.channels; ++c)
        std::memcpy(t.row(0, c), s.channel(c) + sl.start, sl.length * sizeof(double));
    return t;
}

Matrix encode_slice(const EncoderParams& params, const TimeSeriesDataset& ds, const Slice& sl,
                    EncoderCache& cache) {
    const Tensor3 input = slice_tensor(ds, sl);
    const std::size_t valid[1] = {sl.length};
    return encode_forward(params, input, valid, cache);
}

void check_mode_preconditions(const TimeSeriesDataset& ds, const TripletBatch& batch,
                              BackpropMode mode) {
    if (mode != BackpropMode::Joint) return;
    if (ds.channels() > 1)
        throw std::invalid_argument(
            "loss_backprop_through_encoder: per-term mode is mandatory for multivariate data");
    for (const TripletAnchor& a : batch.anchors) {
        std::size_t longest = std::max(a.ref.length, a.pos.length);
        for (const Slice& n : a.negatives) longest = std::max(longest, n.length);
        if (longest > 10000)
            throw std::invalid_argument(
                "loss_backprop_through_encoder: per-term mode is mandatory for slices longer "
                "than 10000 steps");
    }
}

}  // namespace

BackpropResult loss_backprop_through_encoder(const EncoderParams& params,
                                             const TimeSeriesDataset& ds,
                                             const TripletBatch& batch, BackpropMode mode,
                                             GradSink out, BackpropWorkspace& ws, int threads) {
    check_mode_preconditions(ds, batch, mode);
    const std::size_t B = batch.anchors.size();
    if (B == 0) return {};
    const std::size_t K = batch.anchors.front().negatives.size();
    const std::size_t dim = params.config.repr_dim;
    const double scale = 1.0 / static_cast<double>(B);

    const std::size_t n_workers =
        std::max<std::size_t>(1, std::min<std::size_t>(threads <= 1 ? 1 : threads, B * (K + 2)));
    while (ws.buffers.size() < n_workers) ws.buffers.emplace_back(params);
    for (std::size_t t = 0; t < n_workers; ++t) ws.buffers[t].clear();

    BackpropResult result;
    result.per_anchor.resize(B);

    if (mode == BackpropMode::Joint) {
        // Forward every subseries, keeping all caches alive.
        const std::size_t units = B * (K + 2);  // ref, pos, negs per anchor
        std::vector<EncoderCache> caches(units);
        std::vector<std::vector<double>> reprs(units);
        auto slice_of = [&](std::size_t u) -> const Slice& {
            const TripletAnchor& a = batch.anchors[u / (K + 2)];
            const std::size_t r = u % (K + 2);
            if (r == 0) return a.ref;
            if (r == 1) return a.pos;
            return a.negatives[r - 2];
        };
        parallel_for(units, static_cast<int>(n_workers), [&](std::size_t u) {
            Matrix r = encode_slice(params, ds, slice_of(u), caches[u]);
            reprs[u].assign(r.data.begin(), r.data.end());
        });

        // Loss terms and upstream gradients per unit.
        std::vector<Matrix> upstream(units);
        for (std::size_t a = 0; a < B; ++a) {
            const std::size_t base = a * (K + 2);
            Matrix negs(K, dim);
            for (std::size_t k = 0; k < K; ++k)
                std::copy(reprs[base + 2 + k].begin(), reprs[base + 2 + k].end(), negs.row(k));
            result.per_anchor[a] = triplet_loss(reprs[base], reprs[base + 1], negs);
            TripletGrads g = triplet_loss_grad(reprs[base], reprs[base + 1], negs);
            auto scaled = [&](const std::vector<double>& v) {
                Matrix m(1, dim);
                for (std::size_t i = 0; i < dim; ++i) m.data[i] = scale * v[i];
                return m;
            };
            upstream[base] = scaled(g.ref);
            upstream[base + 1] = scaled(g.pos);
            for (std::size_t k = 0; k < K; ++k) {
                Matrix m(1, dim);
                for (std::size_t i = 0; i < dim; ++i) m.data[i] = scale * g.negs.at(k, i);
                upstream[base + 2 + k] = std::move(m);
            }
        }

        // Backward every unit; one gradient buffer per worker, reduced in
        // worker order.
        parallel_for(units, static_cast<int>(n_workers), [&](std::size_t u) {
            GradSink sink = ws.buffers[u % n_workers].sink();
            encode_backward(params, caches[u], upstream[u], sink);
        });
    } else {
        // Per-term: cache the reference pass, then one forward/backward per
        // loss term; the reference backward runs last with the accumulated
        // gradient.
        for (std::size_t a = 0; a < B; ++a) {
            const TripletAnchor& anchor = batch.anchors[a];
            EncoderCache ref_cache;
            Matrix r_ref = encode_slice(params, ds, anchor.ref, ref_cache);
            const std::span<const double> ref_span(r_ref.data.data(), dim);

            const std::size_t terms = K + 1;  // positive + negatives
            std::vector<std::vector<double>> grad_ref_parts(terms,
                                                            std::vector<double>(dim, 0.0));
            std::vector<double> term_values(terms, 0.0);

            parallel_for(terms, static_cast<int>(n_workers), [&](std::size_t term) {
                GradSink sink = ws.buffers[term % n_workers].sink();
                EncoderCache cache;
                const Slice& sl = term == 0 ? anchor.pos : anchor.negatives[term - 1];
                Matrix repr = encode_slice(params, ds, sl, cache);
                const std::span<const double> other(repr.data.data(), dim);
                Matrix up(1, dim);
                if (term == 0) {
                    const double sp = sigmoid(-dot(ref_span, other));
                    term_values[term] = softplus(-dot(ref_span, other));
                    for (std::size_t i = 0; i < dim; ++i) {
                        up.data[i] = scale * (-sp * ref_span[i]);
                        grad_ref_parts[term][i] = -sp * other[i];
                    }
                } else {
                    const double sn = sigmoid(dot(ref_span, other));
                    term_values[term] = softplus(dot(ref_span, other));
                    for (std::size_t i = 0; i < dim; ++i) {
                        up.data[i] = scale * (sn * ref_span[i]);
                        grad_ref_parts[term][i] = sn * other[i];
                    }
                }
                encode_backward(params, cache, up, sink);
            });

            LossValue& lv = result.per_anchor[a];
            lv.positive_term = term_values[0];
            lv.negative_terms.assign(term_values.begin() + 1, term_values.end());
            lv.total = lv.positive_term;
            for (std::size_t k = 0; k < K; ++k) lv.total += lv.negative_terms[k];

            Matrix up_ref(1, dim);
            for (std::size_t term = 0; term < terms; ++term)
                for (std::size_t i = 0; i < dim; ++i)
                    up_ref.data[i] += scale * grad_ref_parts[term][i];
            encode_backward(params, ref_cache, up_ref, ws.buffers[0].sink());
        }
    }

    for (std::size_t t = 0; t < n_workers; ++t) ws.buffers[t].add_to(out);
    for (std::size_t a = 0; a < B; ++a) result.mean_loss += result.per_anchor[a].total;
    result.mean_loss *= scale;
    return result;
}

}  // namespace tse
