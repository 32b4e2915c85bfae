#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tse/common.hpp"
#include "tse/data.hpp"
#include "tse/encoder.hpp"
#include "tse/tensor.hpp"

namespace tse {

enum class LengthMode { Fixed, Varying };

// A contiguous slice of one series.
struct Slice {
    std::size_t series = 0;
    std::size_t start = 0;
    std::size_t length = 0;
};

// One sampled tuple: reference subseries, a positive subseries inside it,
// and K negative subseries drawn from anywhere in the dataset.
struct TripletAnchor {
    Slice ref, pos;
    std::vector<Slice> negatives;
};

struct TripletBatch {
    std::vector<TripletAnchor> anchors;
    LengthMode length_mode = LengthMode::Varying;
};

struct LossValue {
    double total = 0.0;
    double positive_term = 0.0;
    std::vector<double> negative_terms;
};

// Draw the tuple for one series: the positive length uniform on [1, s_i],
// the reference length uniform on [s_pos, s_i], positions uniform, and K
// negatives from uniformly chosen series. In fixed mode every negative has
// the positive's length; in varying mode each negative's length is uniform
// over its own series' range. A nonzero max_length caps the length draws
// (positions still range over the whole series).
TripletAnchor sample_anchor(const TimeSeriesDataset& ds, std::size_t series_index, std::size_t K,
                            Rng& rng, LengthMode mode, std::size_t max_length = 0);

// One epoch of tuples, one per series in index order.
TripletBatch sample_triplets(const TimeSeriesDataset& ds, std::size_t K, Rng& rng,
                             LengthMode mode, std::size_t max_length = 0);

// Eq.-style objective in overflow-safe softplus form:
// softplus(-<ref,pos>) + sum_k softplus(<ref,neg_k>).
LossValue triplet_loss(std::span<const double> r_ref, std::span<const double> r_pos,
                       const Matrix& r_negs);

// Analytic gradients with respect to each representation.
struct TripletGrads {
    std::vector<double> ref, pos;
    Matrix negs;
};
TripletGrads triplet_loss_grad(std::span<const double> r_ref, std::span<const double> r_pos,
                               const Matrix& r_negs);

enum class BackpropMode { Joint, PerTerm };

struct BackpropWorkspace {
    std::vector<GradBuffer> buffers;  // one per worker thread
};

struct BackpropResult {
    double mean_loss = 0.0;
    std::vector<LossValue> per_anchor;
};

// Encode every subseries of the batch, evaluate the loss (mean over
// anchors) and accumulate parameter gradients into `out`.
//
// Joint mode holds every activation cache of the batch at once; per-term
// mode caches the reference pass and re-runs one forward/backward per loss
// term, bounding live memory by the worker count. Joint mode is a contract
// violation for multivariate data or sampled slices longer than 10000
// steps, where per-term is mandatory.
BackpropResult loss_backprop_through_encoder(const EncoderParams& params,
                                             const TimeSeriesDataset& ds,
                                             const TripletBatch& batch, BackpropMode mode,
                                             GradSink out, BackpropWorkspace& ws,
                                             int threads = 1);

}  // namespace tse
