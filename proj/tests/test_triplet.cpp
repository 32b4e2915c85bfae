#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "tse/common.hpp"
#include "tse/nn.hpp"
#include "tse/triplet.hpp"

using namespace tse;

namespace {

TimeSeriesDataset make_dataset(const std::vector<std::size_t>& lengths, std::size_t channels,
                               std::uint64_t seed) {
    Rng rng(seed);
    TimeSeriesDataset ds;
    ds.name = "synthetic";
    for (std::size_t L : lengths) {
        Series s(channels, L);
        for (double& v : s.values) v = rng.uniform(-1.0, 1.0);
        ds.series.push_back(std::move(s));
    }
    return ds;
}

double softplus_direct(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

bool contained(const Slice& inner, const Slice& outer) {
    return inner.series == outer.series && inner.start >= outer.start &&
           inner.start + inner.length <= outer.start + outer.length;
}

}  // namespace

TEST_CASE("sampled tuples respect the containment invariant") {
    TimeSeriesDataset ds = make_dataset({9, 4, 17, 1, 30}, 1, 5);
    Rng rng(11);
    for (int rep = 0; rep < 2000; ++rep) {
        const std::size_t i = rng.index(ds.size());
        TripletAnchor a = sample_anchor(ds, i, 3, rng, LengthMode::Varying);
        CHECK(a.ref.series == i);
        CHECK(contained(a.pos, a.ref));
        CHECK(a.ref.start + a.ref.length <= ds.series[i].length);
        CHECK(a.pos.length >= 1);
        for (const Slice& n : a.negatives) {
            CHECK(n.length >= 1);
            CHECK(n.start + n.length <= ds.series[n.series].length);
        }
    }
}

TEST_CASE("a length-one series collapses ref and pos to the whole series") {
    TimeSeriesDataset ds = make_dataset({1}, 1, 2);
    Rng rng(3);
    TripletAnchor a = sample_anchor(ds, 0, 2, rng, LengthMode::Varying);
    CHECK(a.ref.start == 0);
    CHECK(a.ref.length == 1);
    CHECK(a.pos.start == 0);
    CHECK(a.pos.length == 1);
    for (const Slice& n : a.negatives) {
        CHECK(n.series == 0);
        CHECK(n.length == 1);
    }
}

TEST_CASE("positive length is uniform over its range (chi-square)") {
    TimeSeriesDataset ds = make_dataset({5}, 1, 7);
    Rng rng(13);
    std::vector<std::size_t> counts(5, 0);
    const int draws = 100000;
    for (int rep = 0; rep < draws; ++rep) {
        TripletAnchor a = sample_anchor(ds, 0, 1, rng, LengthMode::Varying);
        REQUIRE(a.pos.length >= 1);
        REQUIRE(a.pos.length <= 5);
        counts[a.pos.length - 1]++;
    }
    const std::vector<double> expected(5, draws / 5.0);
    CHECK(oracles::chi_square_p(counts, expected) > 0.001);
}

TEST_CASE("single-series negatives come from that series with uniform positions") {
    TimeSeriesDataset ds = make_dataset({5}, 1, 9);
    Rng rng(17);
    const int draws = 100000;
    // Conditional-on-length start counts: for length s there are 6-s starts.
    std::vector<std::vector<std::size_t>> start_counts(6);
    for (std::size_t s = 1; s <= 5; ++s) start_counts[s].assign(6 - s, 0);
    std::vector<std::size_t> len_counts(5, 0);
    for (int rep = 0; rep < draws; ++rep) {
        TripletAnchor a = sample_anchor(ds, 0, 1, rng, LengthMode::Varying);
        const Slice& n = a.negatives[0];
        CHECK(n.series == 0);
        len_counts[n.length - 1]++;
        start_counts[n.length][n.start]++;
    }
    const std::vector<double> expected_len(5, draws / 5.0);
    CHECK(oracles::chi_square_p(len_counts, expected_len) > 0.001);
    for (std::size_t s = 1; s <= 5; ++s) {
        const std::size_t total = len_counts[s - 1];
        if (total < 100) continue;
        const std::vector<double> expected(6 - s,
                                           static_cast<double>(total) / static_cast<double>(6 - s));
        CHECK(oracles::chi_square_p(start_counts[s], expected) > 0.001);
    }
}

TEST_CASE("fixed mode gives every negative the positive's length") {
    TimeSeriesDataset ds = make_dataset({20, 20, 20}, 1, 21);
    Rng rng(23);
    for (int rep = 0; rep < 500; ++rep) {
        TripletAnchor a = sample_anchor(ds, rep % 3, 4, rng, LengthMode::Fixed);
        for (const Slice& n : a.negatives) CHECK(n.length == a.pos.length);
    }
}

TEST_CASE("sampling errors") {
    TimeSeriesDataset empty;
    Rng rng(1);
    CHECK_THROWS_AS(sample_triplets(empty, 1, rng, LengthMode::Varying), std::invalid_argument);
    TimeSeriesDataset ds = make_dataset({4}, 1, 1);
    CHECK_THROWS_AS(sample_anchor(ds, 0, 0, rng, LengthMode::Varying), std::invalid_argument);
}

TEST_CASE("an epoch visits every series once in order") {
    TimeSeriesDataset ds = make_dataset({3, 8, 2, 11}, 1, 33);
    Rng rng(5);
    TripletBatch b = sample_triplets(ds, 2, rng, LengthMode::Varying);
    REQUIRE(b.anchors.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(b.anchors[i].ref.series == i);
}

TEST_CASE("triplet loss spec values") {
    // All dot products zero with K = 1: 2 ln 2.
    std::vector<double> z2 = {0.0, 0.0};
    Matrix negs(1, 2);
    LossValue v = triplet_loss(z2, z2, negs);
    CHECK(v.total == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(v.positive_term == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // <ref,pos> = 2 and one negative dot of -1.
    std::vector<double> r = {2.0, 0.0};
    std::vector<double> p = {1.0, 0.0};
    Matrix n1(1, 2);
    n1.at(0, 0) = -0.5;
    v = triplet_loss(r, p, n1);
    const double expect = softplus_direct(-2.0) + softplus_direct(-1.0);
    CHECK(v.total == doctest::Approx(expect).epsilon(1e-9));
    CHECK(v.total == doctest::Approx(0.440190).epsilon(1e-5));

    // Saturated case: enormous aligned dot products drive the loss to zero,
    // and the softplus form stays finite out to |x| = 1e6.
    std::vector<double> big = {1000.0, 0.0};
    std::vector<double> unit = {1.0, 0.0};
    Matrix far(1, 2);
    far.at(0, 0) = -1000.0;
    v = triplet_loss(big, unit, far);
    CHECK(v.total >= 0.0);
    CHECK(v.total < 1e-12);
    std::vector<double> extreme = {1e6, 0.0};
    Matrix anti(1, 2);
    anti.at(0, 0) = -1e6;
    v = triplet_loss(extreme, unit, anti);
    CHECK(std::isfinite(v.total));

    // Every term is positive and the total is their sum.
    Rng rng(3);
    std::vector<double> a(8), b2(8);
    Matrix rand_negs(3, 8);
    for (double& x : a) x = rng.uniform(-1.0, 1.0);
    for (double& x : b2) x = rng.uniform(-1.0, 1.0);
    for (double& x : rand_negs.data) x = rng.uniform(-1.0, 1.0);
    v = triplet_loss(a, b2, rand_negs);
    double sum = v.positive_term;
    CHECK(v.positive_term > 0.0);
    for (double t : v.negative_terms) {
        CHECK(t > 0.0);
        sum += t;
    }
    CHECK(v.total == doctest::Approx(sum).epsilon(1e-12));

    std::vector<double> wrong = {1.0};
    CHECK_THROWS_AS(triplet_loss(wrong, z2, negs), std::invalid_argument);
}

TEST_CASE("swapping two negatives leaves the total unchanged") {
    Rng rng(29);
    std::vector<double> r(6), p(6);
    Matrix negs(3, 6);
    for (double& x : r) x = rng.uniform(-1.0, 1.0);
    for (double& x : p) x = rng.uniform(-1.0, 1.0);
    for (double& x : negs.data) x = rng.uniform(-1.0, 1.0);
    const double before = triplet_loss(r, p, negs).total;
    for (std::size_t j = 0; j < 6; ++j) std::swap(negs.at(0, j), negs.at(2, j));
    CHECK(triplet_loss(r, p, negs).total == doctest::Approx(before).epsilon(1e-15));
}

TEST_CASE("loss gradient closed forms") {
    // Worked example.
    std::vector<double> r = {1.0, 0.0};
    std::vector<double> p = {1.0, 0.0};
    Matrix negs(1, 2);
    negs.at(0, 1) = 1.0;
    TripletGrads g = triplet_loss_grad(r, p, negs);
    CHECK(g.ref[0] == doctest::Approx(-0.268941).epsilon(1e-5));
    CHECK(g.ref[1] == doctest::Approx(0.5).epsilon(1e-12));

    // All-zero vectors give all-zero gradients.
    std::vector<double> z = {0.0, 0.0};
    Matrix zn(2, 2);
    TripletGrads gz = triplet_loss_grad(z, z, zn);
    for (double x : gz.ref) CHECK(x == 0.0);
    for (double x : gz.pos) CHECK(x == 0.0);
    for (double x : gz.negs.data) CHECK(x == 0.0);
}

TEST_CASE("loss gradients match central differences on random 160-vectors") {
    Rng rng(31);
    const std::size_t dim = 160;
    std::vector<double> r(dim), p(dim);
    Matrix negs(4, dim);
    for (double& x : r) x = rng.uniform(-0.3, 0.3);
    for (double& x : p) x = rng.uniform(-0.3, 0.3);
    for (double& x : negs.data) x = rng.uniform(-0.3, 0.3);
    TripletGrads g = triplet_loss_grad(r, p, negs);

    const double h = 1e-6;
    auto loss = [&] { return triplet_loss(r, p, negs).total; };
    double max_err = 0.0;
    auto probe = [&](double& slot, double analytic) {
        const double saved = slot;
        slot = saved + h;
        const double lp = loss();
        slot = saved - h;
        const double lm = loss();
        slot = saved;
        const double fd = (lp - lm) / (2 * h);
        max_err = std::max(max_err, std::abs(fd - analytic) / std::max(1.0, std::abs(analytic)));
    };
    for (std::size_t i = 0; i < dim; i += 7) probe(r[i], g.ref[i]);
    for (std::size_t i = 0; i < dim; i += 7) probe(p[i], g.pos[i]);
    for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t i = 0; i < dim; i += 13) probe(negs.at(k, i), g.negs.at(k, i));
    CHECK(max_err <= 1e-6);
}

namespace {

EncoderConfig probe_config() {
    EncoderConfig cfg;
    cfg.in_channels = 1;
    cfg.channels = 3;
    cfg.depth = 2;
    cfg.pre_pool_channels = 5;
    cfg.repr_dim = 4;
    return cfg;
}

double batch_loss(const EncoderParams& params, const TimeSeriesDataset& ds,
                  const TripletBatch& batch) {
    double total = 0.0;
    for (const TripletAnchor& a : batch.anchors) {
        auto enc = [&](const Slice& sl) {
            const Series& s = ds.series[sl.series];
            std::vector<double> buf(s.channels * sl.length);
            for (std::size_t c = 0; c < s.channels; ++c)
                std::copy(s.channel(c) + sl.start, s.channel(c) + sl.start + sl.length,
                          buf.begin() + c * sl.length);
            return encode(params, buf.data(), s.channels, sl.length);
        };
        const std::vector<double> r = enc(a.ref);
        const std::vector<double> p = enc(a.pos);
        Matrix negs(a.negatives.size(), r.size());
        for (std::size_t k = 0; k < a.negatives.size(); ++k) {
            const std::vector<double> n = enc(a.negatives[k]);
            std::copy(n.begin(), n.end(), negs.row(k));
        }
        total += triplet_loss(r, p, negs).total;
    }
    return total / static_cast<double>(batch.anchors.size());
}

}  // namespace

TEST_CASE("joint and per-term backprop agree to 1e-9 relative") {
    TimeSeriesDataset ds = make_dataset({14, 9, 20}, 1, 41);
    Rng rng(43);
    EncoderParams params = build_encoder(probe_config(), 47);

    for (std::size_t K : {std::size_t{1}, std::size_t{3}}) {
        TripletBatch batch;
        batch.length_mode = LengthMode::Varying;
        for (std::size_t i = 0; i < 2; ++i)
            batch.anchors.push_back(sample_anchor(ds, i, K, rng, LengthMode::Varying));

        GradBuffer joint(params), per_term(params);
        BackpropWorkspace ws;
        BackpropResult rj = loss_backprop_through_encoder(params, ds, batch, BackpropMode::Joint,
                                                          joint.sink(), ws, 2);
        BackpropResult rp = loss_backprop_through_encoder(params, ds, batch,
                                                          BackpropMode::PerTerm, per_term.sink(),
                                                          ws, 2);
        CHECK(rj.mean_loss == doctest::Approx(rp.mean_loss).epsilon(1e-12));
        auto ja = joint.flat();
        auto pa = per_term.flat();
        REQUIRE(ja.size() == pa.size());
        double max_rel = 0.0;
        for (std::size_t i = 0; i < ja.size(); ++i)
            max_rel = std::max(max_rel,
                               std::abs(ja[i] - pa[i]) / std::max(1.0, std::abs(ja[i])));
        CHECK(max_rel <= 1e-9);
    }
}

TEST_CASE("joint mode is rejected where per-term is mandatory") {
    TimeSeriesDataset multi = make_dataset({8, 8}, 2, 3);
    Rng rng(7);
    TripletBatch batch;
    batch.anchors.push_back(sample_anchor(multi, 0, 1, rng, LengthMode::Varying));
    EncoderConfig cfg = probe_config();
    cfg.in_channels = 2;
    EncoderParams params = build_encoder(cfg, 1);
    GradBuffer buf(params);
    BackpropWorkspace ws;
    CHECK_THROWS_AS(loss_backprop_through_encoder(params, multi, batch, BackpropMode::Joint,
                                                  buf.sink(), ws, 1),
                    std::invalid_argument);
    // Per-term on the same batch is fine.
    buf.clear();
    loss_backprop_through_encoder(params, multi, batch, BackpropMode::PerTerm, buf.sink(), ws, 1);
}

TEST_CASE("encoder gradients through the loss pass the finite-difference gate") {
    TimeSeriesDataset ds = make_dataset({11, 7}, 1, 53);
    Rng rng(59);
    EncoderParams params = build_encoder(probe_config(), 61);
    TripletBatch batch;
    for (std::size_t i = 0; i < 2; ++i)
        batch.anchors.push_back(sample_anchor(ds, i, 2, rng, LengthMode::Varying));

    GradBuffer grads(params);
    BackpropWorkspace ws;
    loss_backprop_through_encoder(params, ds, batch, BackpropMode::Joint, grads.sink(), ws, 1);
    // Mirror the flat gradient into the ParamTensor accumulators for the
    // checker.
    params.zero_grads();
    grads.add_to(GradSink::into_params(params));
    const double err =
        nn::gradient_check([&] { return batch_loss(params, ds, batch); }, params.parameters());
    CHECK(err <= 1e-4);
}
