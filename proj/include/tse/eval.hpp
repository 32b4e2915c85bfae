#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tse/common.hpp"
#include "tse/data.hpp"
#include "tse/tensor.hpp"

namespace tse {

// ---------------------------------------------------------------------------
// RBF-kernel SVM trained by sequential minimal optimization; multiclass via
// one-vs-one voting.
// ---------------------------------------------------------------------------

struct BinarySvm {
    std::string pos_label, neg_label;  // pos decided as +1
    Matrix support_vectors;
    std::vector<double> alpha_y;  // dual coefficient times label, per support vector
    double bias = 0.0;
    double dual_objective = 0.0;
};

struct SvmModel {
    std::vector<std::string> classes;  // lexicographic
    std::vector<BinarySvm> machines;   // one per class pair (i < j)
    double gamma = 0.0;
    double C = 0.0;  // +infinity means the no-regularization sentinel (1e8)
};

// Kernel bandwidth used when the caller does not supply one:
// 1 / (dim * mean per-feature variance); falls back to 1/dim for constant
// features.
double rbf_gamma_default(const Matrix& x);

// Trains one-vs-one RBF SVMs with SMO (KKT tolerance 1e-3). C may be
// +infinity, which is solved at the 1e8 sentinel. Throws on single-class
// input.
SvmModel svm_train(const Matrix& x, const std::vector<std::string>& y, double C, double gamma);

std::vector<std::string> svm_predict(const SvmModel& model, const Matrix& x);

// Penalty selection: grid {10^i : i in [-4,4]} plus infinity, stratified
// k-fold with k = min(5, smallest class count). Returns infinity without
// cross-validating when the train set has fewer than 50 rows or the
// smallest class fewer than 5. Ties break toward the smallest C, infinity
// last.
double svm_cross_validate_C(const Matrix& x, const std::vector<std::string>& y, double gamma);

// ---------------------------------------------------------------------------
// Nearest neighbors and DTW.
// ---------------------------------------------------------------------------

// 1-NN under the L2 distance; distance ties go to the lowest train index.
std::vector<std::string> knn1_classify(const Matrix& train, const std::vector<std::string>& labels,
                                       const Matrix& test);

// Cumulative squared-difference dynamic time warping, no window, no square
// root. Multichannel series sum squared differences across channels per
// step.
double dtw_distance(const Series& x, const Series& y);

// 1-NN classification of `test` against `train` under dtw_distance.
std::vector<std::string> dtw1nn_classify(const TimeSeriesDataset& train,
                                         const TimeSeriesDataset& test, int threads = 1);

// ---------------------------------------------------------------------------
// k-means (k-means++ seeding, Lloyd iterations, best of 10 restarts).
// ---------------------------------------------------------------------------

struct KMeansResult {
    Matrix centroids;
    std::vector<std::size_t> assignments;
    double inertia = 0.0;
};

KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Linear regression probe (full-batch gradient descent on the MSE, inputs
// standardized internally).
// ---------------------------------------------------------------------------

struct RegressionProbe {
    std::vector<double> weights;
    double bias = 0.0;
    std::vector<double> feature_mean, feature_scale;
};

RegressionProbe linreg_train(const Matrix& x, std::span<const double> targets,
                             std::size_t steps = 5000, double lr = 0.01);
double linreg_predict(const RegressionProbe& probe, const double* row);
double linreg_mse(const RegressionProbe& probe, const Matrix& x, std::span<const double> targets);

// ---------------------------------------------------------------------------
// Label-efficiency protocol and metrics.
// ---------------------------------------------------------------------------

// Stratified sample of ceil(fraction * N) indices with at least one index
// per class; returned sorted ascending.
std::vector<std::size_t> sparse_label_protocol(const std::vector<std::string>& labels,
                                               double fraction, std::uint64_t seed);

double accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& truth);

}  // namespace tse
