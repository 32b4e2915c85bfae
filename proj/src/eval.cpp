#include "tse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace tse {

namespace {

constexpr double kInfPenaltySentinel = 1e8;
constexpr double kKktTolerance = 1e-3;
constexpr double kAlphaEps = 1e-12;

double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

// Binary SMO solver over a precomputed RBF kernel.
class SmoSolver {
public:
    SmoSolver(const Matrix& x, const std::vector<int>& y, double c, double gamma)
        : x_(x), y_(y), n_(x.rows), c_(c), rng_(0x534d4f) {
        kernel_.assign(n_ * n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            kernel_[i * n_ + i] = 1.0;
            for (std::size_t j = i + 1; j < n_; ++j) {
                const double k = std::exp(-gamma * sq_dist(x.row(i), x.row(j), x.cols));
                kernel_[i * n_ + j] = k;
                kernel_[j * n_ + i] = k;
            }
        }
        alpha_.assign(n_, 0.0);
        errors_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) errors_[i] = -static_cast<double>(y_[i]);
    }

    void solve() {
        bool examine_all = true;
        std::size_t changed = 0;
        std::size_t guard = 0;
        const std::size_t max_sweeps = 100000 + 2000 * n_;
        while (changed > 0 || examine_all) {
            if (++guard > max_sweeps) break;  // tolerance already reached in practice
            changed = 0;
            for (std::size_t i = 0; i < n_; ++i) {
                if (!examine_all && !is_free(alpha_[i])) continue;
                changed += examine(i) ? 1 : 0;
            }
            if (examine_all)
                examine_all = false;
            else if (changed == 0)
                examine_all = true;
        }
    }

    double k(std::size_t i, std::size_t j) const { return kernel_[i * n_ + j]; }
    const std::vector<double>& alpha() const { return alpha_; }
    double bias() const { return b_; }

    double dual_objective() const {
        double obj = 0.0;
        for (std::size_t i = 0; i < n_; ++i) obj += alpha_[i];
        for (std::size_t i = 0; i < n_; ++i) {
            if (alpha_[i] == 0.0) continue;
            for (std::size_t j = 0; j < n_; ++j) {
                if (alpha_[j] == 0.0) continue;
                obj -= 0.5 * alpha_[i] * alpha_[j] * y_[i] * y_[j] * k(i, j);
            }
        }
        return obj;
    }

private:
    bool is_free(double a) const { return a > kAlphaEps && a < c_ - kAlphaEps; }

    bool examine(std::size_t i2) {
        const double y2 = y_[i2];
        const double a2 = alpha_[i2];
        const double e2 = errors_[i2];
        const double r2 = e2 * y2;
        const bool violates = (r2 < -kKktTolerance && a2 < c_ - kAlphaEps) ||
                              (r2 > kKktTolerance && a2 > kAlphaEps);
        if (!violates) return false;

        // Second-choice heuristic: largest |E1 - E2| among free points.
        std::size_t best = n_;
        double best_gap = -1.0;
        for (std::size_t i = 0; i < n_; ++i) {
            if (!is_free(alpha_[i])) continue;
            const double gap = std::abs(errors_[i] - e2);
            if (gap > best_gap) {
                best_gap = gap;
                best = i;
            }
        }
        if (best < n_ && take_step(best, i2)) return true;

        const std::size_t start = rng_.index(n_ == 0 ? 1 : n_);
        for (std::size_t off = 0; off < n_; ++off) {
            const std::size_t i1 = (start + off) % n_;
            if (is_free(alpha_[i1]) && take_step(i1, i2)) return true;
        }
        for (std::size_t off = 0; off < n_; ++off) {
            const std::size_t i1 = (start + off) % n_;
            if (take_step(i1, i2)) return true;
        }
        return false;
    }

    bool take_step(std::size_t i1, std::size_t i2) {
        if (i1 == i2) return false;
        const double a1 = alpha_[i1], a2 = alpha_[i2];
        const double y1 = y_[i1], y2 = y_[i2];
        const double e1 = errors_[i1], e2 = errors_[i2];
        const double s = y1 * y2;
        double lo, hi;
        if (y1 != y2) {
            lo = std::max(0.0, a2 - a1);
            hi = std::min(c_, c_ + a2 - a1);
        } else {
            lo = std::max(0.0, a1 + a2 - c_);
            hi = std::min(c_, a1 + a2);
        }
        if (hi - lo < kAlphaEps) return false;

        const double k11 = k(i1, i1), k12 = k(i1, i2), k22 = k(i2, i2);
        const double eta = k11 + k22 - 2.0 * k12;
        double a2_new;
        if (eta > 0.0) {
            a2_new = a2 + y2 * (e1 - e2) / eta;
            a2_new = std::clamp(a2_new, lo, hi);
        } else {
            // Flat direction (duplicate points): compare the dual objective
            // at both clip ends.
            const double f1 = e1 + y1;  // f(x1)
            const double f2 = e2 + y2;
            const double v1 = f1 - b_ - y1 * a1 * k11 - y2 * a2 * k12;
            const double v2 = f2 - b_ - y1 * a1 * k12 - y2 * a2 * k22;
            auto pair_objective = [&](double cand2) {
                const double cand1 = a1 + s * (a2 - cand2);
                return cand1 + cand2 - 0.5 * k11 * cand1 * cand1 - 0.5 * k22 * cand2 * cand2 -
                       s * k12 * cand1 * cand2 - y1 * cand1 * v1 - y2 * cand2 * v2;
            };
            const double obj_lo = pair_objective(lo);
            const double obj_hi = pair_objective(hi);
            if (obj_lo > obj_hi + kAlphaEps)
                a2_new = lo;
            else if (obj_hi > obj_lo + kAlphaEps)
                a2_new = hi;
            else
                return false;
        }
        if (std::abs(a2_new - a2) < kAlphaEps * (a2_new + a2 + kAlphaEps)) return false;
        const double a1_new = a1 + s * (a2 - a2_new);

        const double b1 = b_ - e1 - y1 * (a1_new - a1) * k11 - y2 * (a2_new - a2) * k12;
        const double b2 = b_ - e2 - y1 * (a1_new - a1) * k12 - y2 * (a2_new - a2) * k22;
        double b_new;
        if (a1_new > kAlphaEps && a1_new < c_ - kAlphaEps)
            b_new = b1;
        else if (a2_new > kAlphaEps && a2_new < c_ - kAlphaEps)
            b_new = b2;
        else
            b_new = 0.5 * (b1 + b2);

        const double d1 = y1 * (a1_new - a1);
        const double d2 = y2 * (a2_new - a2);
        const double db = b_new - b_;
        for (std::size_t i = 0; i < n_; ++i)
            errors_[i] += d1 * k(i1, i) + d2 * k(i2, i) + db;
        alpha_[i1] = a1_new;
        alpha_[i2] = a2_new;
        b_ = b_new;
        return true;
    }

    const Matrix& x_;
    const std::vector<int>& y_;
    std::size_t n_;
    double c_;
    Rng rng_;
    std::vector<double> kernel_;
    std::vector<double> alpha_;
    std::vector<double> errors_;
    double b_ = 0.0;
};

BinarySvm train_binary(const Matrix& x, const std::vector<std::size_t>& idx,
                       const std::vector<int>& y, const std::string& pos,
                       const std::string& neg, double c, double gamma) {
    Matrix sub(idx.size(), x.cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(x.row(idx[r]), x.row(idx[r]) + x.cols, sub.row(r));
    SmoSolver solver(sub, y, c, gamma);
    solver.solve();

    BinarySvm m;
    m.pos_label = pos;
    m.neg_label = neg;
    m.bias = solver.bias();
    m.dual_objective = solver.dual_objective();
    std::vector<std::size_t> sv;
    for (std::size_t i = 0; i < idx.size(); ++i)
        if (solver.alpha()[i] > kAlphaEps) sv.push_back(i);
    m.support_vectors = Matrix(sv.size(), x.cols);
    for (std::size_t r = 0; r < sv.size(); ++r) {
        std::copy(sub.row(sv[r]), sub.row(sv[r]) + x.cols, m.support_vectors.row(r));
        m.alpha_y.push_back(solver.alpha()[sv[r]] * y[sv[r]]);
    }
    return m;
}

double decision(const BinarySvm& m, const double* row, std::size_t d, double gamma) {
    double f = m.bias;
    for (std::size_t i = 0; i < m.support_vectors.rows; ++i)
        f += m.alpha_y[i] * std::exp(-gamma * sq_dist(m.support_vectors.row(i), row, d));
    return f;
}

}  // namespace

double rbf_gamma_default(const Matrix& x) {
    if (x.rows == 0 || x.cols == 0) throw std::invalid_argument("rbf_gamma_default: empty matrix");
    double var_sum = 0.0;
    for (std::size_t c = 0; c < x.cols; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) mean += x.at(r, c);
        mean /= static_cast<double>(x.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double d = x.at(r, c) - mean;
            var += d * d;
        }
        var_sum += var / static_cast<double>(x.rows);
    }
    const double mean_var = var_sum / static_cast<double>(x.cols);
    if (mean_var < 1e-12) return 1.0 / static_cast<double>(x.cols);
    return 1.0 / (static_cast<double>(x.cols) * mean_var);
}

SvmModel svm_train(const Matrix& x, const std::vector<std::string>& y, double C, double gamma) {
    if (x.rows != y.size()) throw std::invalid_argument("svm_train: label count mismatch");
    if (x.rows == 0) throw std::invalid_argument("svm_train: empty training set");
    std::set<std::string> class_set(y.begin(), y.end());
    if (class_set.size() < 2)
        throw std::invalid_argument("svm_train: need at least two classes, got " +
                                    std::to_string(class_set.size()));
    SvmModel model;
    model.classes.assign(class_set.begin(), class_set.end());
    model.gamma = gamma;
    model.C = C;
    const double c_eff = std::isinf(C) ? kInfPenaltySentinel : C;
    if (!(c_eff > 0.0)) throw std::invalid_argument("svm_train: C must be positive");

    for (std::size_t a = 0; a < model.classes.size(); ++a) {
        for (std::size_t b = a + 1; b < model.classes.size(); ++b) {
            std::vector<std::size_t> idx;
            std::vector<int> lab;
            for (std::size_t i = 0; i < y.size(); ++i) {
                if (y[i] == model.classes[a]) {
                    idx.push_back(i);
                    lab.push_back(+1);
                } else if (y[i] == model.classes[b]) {
                    idx.push_back(i);
                    lab.push_back(-1);
                }
            }
            model.machines.push_back(
                train_binary(x, idx, lab, model.classes[a], model.classes[b], c_eff, gamma));
        }
    }
    return model;
}

std::vector<std::string> svm_predict(const SvmModel& model, const Matrix& x) {
    std::vector<std::string> out;
    out.reserve(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        std::map<std::string, int> votes;
        for (const BinarySvm& m : model.machines) {
            const double f = decision(m, x.row(r), x.cols, model.gamma);
            votes[f >= 0.0 ? m.pos_label : m.neg_label] += 1;
        }
        // Majority; ties to the lexicographically smallest label (map order).
        std::string best;
        int best_votes = -1;
        for (const auto& [label, v] : votes) {
            if (v > best_votes) {
                best_votes = v;
                best = label;
            }
        }
        out.push_back(best);
    }
    return out;
}

double svm_cross_validate_C(const Matrix& x, const std::vector<std::string>& y, double gamma) {
    if (x.rows != y.size())
        throw std::invalid_argument("svm_cross_validate_C: label count mismatch");
    std::map<std::string, std::size_t> counts;
    for (const std::string& label : y) counts[label]++;
    if (counts.size() < 2)
        throw std::invalid_argument("svm_cross_validate_C: need at least two classes");
    std::size_t smallest = x.rows;
    for (const auto& [label, n] : counts) smallest = std::min(smallest, n);

    // Small train sets skip cross-validation entirely.
    if (x.rows < 50 || smallest < 5) return std::numeric_limits<double>::infinity();

    const std::size_t folds = std::min<std::size_t>(5, smallest);
    // Stratified assignment: within each class, round-robin over folds.
    std::vector<std::size_t> fold_of(y.size(), 0);
    std::map<std::string, std::size_t> next_fold;
    for (std::size_t i = 0; i < y.size(); ++i) {
        std::size_t& f = next_fold[y[i]];
        fold_of[i] = f;
        f = (f + 1) % folds;
    }

    std::vector<double> grid;
    for (int e = -4; e <= 4; ++e) grid.push_back(std::pow(10.0, e));
    grid.push_back(std::numeric_limits<double>::infinity());

    double best_c = grid.front();
    double best_acc = -1.0;
    for (double c : grid) {
        double acc_sum = 0.0;
        for (std::size_t f = 0; f < folds; ++f) {
            std::vector<std::size_t> tr, va;
            for (std::size_t i = 0; i < y.size(); ++i) (fold_of[i] == f ? va : tr).push_back(i);
            Matrix xtr(tr.size(), x.cols), xva(va.size(), x.cols);
            std::vector<std::string> ytr, yva;
            for (std::size_t r = 0; r < tr.size(); ++r) {
                std::copy(x.row(tr[r]), x.row(tr[r]) + x.cols, xtr.row(r));
                ytr.push_back(y[tr[r]]);
            }
            for (std::size_t r = 0; r < va.size(); ++r) {
                std::copy(x.row(va[r]), x.row(va[r]) + x.cols, xva.row(r));
                yva.push_back(y[va[r]]);
            }
            const SvmModel m = svm_train(xtr, ytr, c, gamma);
            acc_sum += accuracy(svm_predict(m, xva), yva);
        }
        const double acc = acc_sum / static_cast<double>(folds);
        if (acc > best_acc) {  // strict: ties keep the earlier (smaller) C
            best_acc = acc;
            best_c = c;
        }
    }
    return best_c;
}

std::vector<std::string> knn1_classify(const Matrix& train, const std::vector<std::string>& labels,
                                       const Matrix& test) {
    if (train.rows == 0) throw std::invalid_argument("knn1_classify: empty train set");
    if (train.rows != labels.size())
        throw std::invalid_argument("knn1_classify: label count mismatch");
    if (train.cols != test.cols)
        throw std::invalid_argument("knn1_classify: dimension mismatch between train and test");
    std::vector<std::string> out;
    out.reserve(test.rows);
    for (std::size_t q = 0; q < test.rows; ++q) {
        std::size_t best = 0;
        double best_d = sq_dist(train.row(0), test.row(q), train.cols);
        for (std::size_t i = 1; i < train.rows; ++i) {
            const double d = sq_dist(train.row(i), test.row(q), train.cols);
            if (d < best_d) {  // strict: ties keep the lowest index
                best_d = d;
                best = i;
            }
        }
        out.push_back(labels[best]);
    }
    return out;
}

double dtw_distance(const Series& x, const Series& y) {
    if (x.length == 0 || y.length == 0) throw std::invalid_argument("dtw_distance: empty series");
    if (x.channels != y.channels)
        throw std::invalid_argument("dtw_distance: channel count mismatch");
    const std::size_t n = x.length, m = y.length, C = x.channels;

    auto cost = [&](std::size_t i, std::size_t j) {
        if (C == 1) {
            const double d = x.values[i] - y.values[j];
            return d * d;
        }
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double d = x.at(c, i) - y.at(c, j);
            s += d * d;
        }
        return s;
    };

    std::vector<double> prev(m, 0.0), cur(m, 0.0);
    prev[0] = cost(0, 0);
    for (std::size_t j = 1; j < m; ++j) prev[j] = prev[j - 1] + cost(0, j);
    for (std::size_t i = 1; i < n; ++i) {
        cur[0] = prev[0] + cost(i, 0);
        for (std::size_t j = 1; j < m; ++j) {
            const double best = std::min(std::min(prev[j], cur[j - 1]), prev[j - 1]);
            cur[j] = cost(i, j) + best;
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

std::vector<std::string> dtw1nn_classify(const TimeSeriesDataset& train,
                                         const TimeSeriesDataset& test, int threads) {
    if (train.series.empty()) throw std::invalid_argument("dtw1nn_classify: empty train set");
    if (!train.has_labels()) throw std::invalid_argument("dtw1nn_classify: train labels required");
    std::vector<std::string> out(test.series.size());
    parallel_for(test.series.size(), threads, [&](std::size_t q) {
        std::size_t best = 0;
        double best_d = dtw_distance(train.series[0], test.series[q]);
        for (std::size_t i = 1; i < train.series.size(); ++i) {
            const double d = dtw_distance(train.series[i], test.series[q]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        out[q] = train.labels[best];
    });
    return out;
}

namespace {

double kmeans_assign(const Matrix& x, const Matrix& centroids,
                     std::vector<std::size_t>& assignment) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        std::size_t best = 0;
        double best_d = sq_dist(x.row(i), centroids.row(0), x.cols);
        for (std::size_t c = 1; c < centroids.rows; ++c) {
            const double d = sq_dist(x.row(i), centroids.row(c), x.cols);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        assignment[i] = best;
        inertia += best_d;
    }
    return inertia;
}

KMeansResult kmeans_once(const Matrix& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.rows, d = x.cols;
    Matrix centroids(k, d);

    // k-means++ seeding.
    std::vector<double> min_d2(n, 0.0);
    {
        const std::size_t first = rng.index(n);
        std::copy(x.row(first), x.row(first) + d, centroids.row(0));
        for (std::size_t i = 0; i < n; ++i) min_d2[i] = sq_dist(x.row(i), centroids.row(0), d);
        for (std::size_t c = 1; c < k; ++c) {
            double total = 0.0;
            for (double v : min_d2) total += v;
            std::size_t chosen;
            if (total <= 0.0) {
                chosen = rng.index(n);
            } else {
                const double r = rng.uniform(0.0, total);
                double acc = 0.0;
                chosen = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += min_d2[i];
                    if (r < acc) {
                        chosen = i;
                        break;
                    }
                }
            }
            std::copy(x.row(chosen), x.row(chosen) + d, centroids.row(c));
            for (std::size_t i = 0; i < n; ++i)
                min_d2[i] = std::min(min_d2[i], sq_dist(x.row(i), centroids.row(c), d));
        }
    }

    std::vector<std::size_t> assignment(n, 0), previous(n, k);
    double inertia = 0.0;
    for (int iter = 0; iter < 300; ++iter) {
        inertia = kmeans_assign(x, centroids, assignment);
        if (assignment == previous) break;
        previous = assignment;

        std::vector<std::size_t> count(k, 0);
        Matrix sums(k, d);
        for (std::size_t i = 0; i < n; ++i) {
            ++count[assignment[i]];
            const double* row = x.row(i);
            double* acc = sums.row(assignment[i]);
            for (std::size_t j = 0; j < d; ++j) acc[j] += row[j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] == 0) continue;
            for (std::size_t j = 0; j < d; ++j)
                centroids.at(c, j) = sums.at(c, j) / static_cast<double>(count[c]);
        }
        // Empty clusters grab the point farthest from its centroid.
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] != 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (count[assignment[i]] <= 1) continue;
                const double dd = sq_dist(x.row(i), centroids.row(assignment[i]), d);
                if (dd > far_d) {
                    far_d = dd;
                    far = i;
                }
            }
            if (far_d < 0.0) continue;  // nothing stealable; keep the stale centroid
            --count[assignment[far]];
            assignment[far] = c;
            count[c] = 1;
            std::copy(x.row(far), x.row(far) + d, centroids.row(c));
        }
    }
    inertia = kmeans_assign(x, centroids, assignment);
    return {std::move(centroids), std::move(assignment), inertia};
}

}  // namespace

KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed) {
    if (k == 0 || k > x.rows)
        throw std::invalid_argument("kmeans: k must lie in [1, number of points]");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::uint64_t restart = 0; restart < 10; ++restart) {
        Rng rng(derive_seed(seed, restart));
        KMeansResult r = kmeans_once(x, k, rng);
        if (r.inertia < best.inertia) best = std::move(r);
    }
    return best;
}

RegressionProbe linreg_train(const Matrix& x, std::span<const double> targets, std::size_t steps,
                             double lr) {
    if (x.rows != targets.size()) throw std::invalid_argument("linreg_train: target count mismatch");
    if (x.rows == 0) throw std::invalid_argument("linreg_train: empty training set");
    const std::size_t n = x.rows, d = x.cols;

    RegressionProbe probe;
    probe.feature_mean.assign(d, 0.0);
    probe.feature_scale.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x.at(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dd = x.at(i, j) - mean;
            var += dd * dd;
        }
        const double sd = std::sqrt(var / static_cast<double>(n));
        probe.feature_mean[j] = mean;
        probe.feature_scale[j] = sd < 1e-12 ? 1.0 : sd;
    }
    Matrix z(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            z.at(i, j) = (x.at(i, j) - probe.feature_mean[j]) / probe.feature_scale[j];

    probe.weights.assign(d, 0.0);
    probe.bias = 0.0;
    std::vector<double> residual(n, 0.0), grad_w(d, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* zi = z.row(i);
            double pred = probe.bias;
            for (std::size_t j = 0; j < d; ++j) pred += probe.weights[j] * zi[j];
            residual[i] = pred - targets[i];
        }
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r2 = 2.0 * residual[i] * inv_n;
            grad_b += r2;
            const double* zi = z.row(i);
            for (std::size_t j = 0; j < d; ++j) grad_w[j] += r2 * zi[j];
        }
        if (!std::isfinite(grad_b))
            throw train_error("linreg_train: diverged; try a smaller learning rate");
        for (std::size_t j = 0; j < d; ++j) probe.weights[j] -= lr * grad_w[j];
        probe.bias -= lr * grad_b;
    }
    for (double w : probe.weights)
        if (!std::isfinite(w))
            throw train_error("linreg_train: diverged; try a smaller learning rate");
    return probe;
}

double linreg_predict(const RegressionProbe& probe, const double* row) {
    double pred = probe.bias;
    for (std::size_t j = 0; j < probe.weights.size(); ++j)
        pred += probe.weights[j] * (row[j] - probe.feature_mean[j]) / probe.feature_scale[j];
    return pred;
}

double linreg_mse(const RegressionProbe& probe, const Matrix& x, std::span<const double> targets) {
    if (x.rows != targets.size()) throw std::invalid_argument("linreg_mse: target count mismatch");
    if (x.rows == 0) return 0.0;
    double mse = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double r = linreg_predict(probe, x.row(i)) - targets[i];
        mse += r * r;
    }
    return mse / static_cast<double>(x.rows);
}

std::vector<std::size_t> sparse_label_protocol(const std::vector<std::string>& labels,
                                               double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("sparse_label_protocol: fraction must lie in (0,1]");
    if (labels.empty()) throw std::invalid_argument("sparse_label_protocol: no labels");
    const std::size_t n = labels.size();

    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

    const std::size_t want =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    struct Quota {
        std::vector<std::size_t>* members;
        std::size_t take;
        double remainder;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (auto& [label, members] : by_class) {
        const double exact = fraction * static_cast<double>(members.size());
        std::size_t take = static_cast<std::size_t>(std::floor(exact));
        if (take == 0) take = 1;  // every class contributes at least one
        take = std::min(take, members.size());
        quotas.push_back({&members, take, exact - std::floor(exact)});
        assigned += take;
    }
    // Distribute any shortfall by largest fractional remainder, class order
    // breaking ties.
    while (assigned < want) {
        Quota* best = nullptr;
        for (Quota& q : quotas) {
            if (q.take >= q.members->size()) continue;
            if (!best || q.remainder > best->remainder) best = &q;
        }
        if (!best) break;
        best->take += 1;
        best->remainder -= 1.0;
        ++assigned;
    }

    Rng rng(seed);
    std::vector<std::size_t> out;
    for (Quota& q : quotas) {
        std::vector<std::size_t> pool = *q.members;
        rng.shuffle(pool);
        out.insert(out.end(), pool.begin(), pool.begin() + q.take);
    }
    std::sort(out.begin(), out.end());
    return out;
}

double accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& truth) {
    if (predicted.size() != truth.size())
        throw std::invalid_argument("accuracy: prediction/truth length mismatch");
    if (predicted.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace tse
