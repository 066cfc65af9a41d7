#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "pcx/xai.hpp"

using namespace pcx;

namespace {

// Independent double-loop strict-argmax oracle for critical points.
std::vector<double> critical_oracle(const Tensor& f) {
    std::vector<double> scores(f.rows(), 0.0);
    for (std::size_t i = 0; i < f.rows(); ++i) {
        bool wins_any = false;
        for (std::size_t k = 0; k < f.cols() && !wins_any; ++k) {
            bool strict = true;
            for (std::size_t j = 0; j < f.rows(); ++j)
                if (j != i && f.at(j, k) >= f.at(i, k)) {
                    strict = false;
                    break;
                }
            wins_any = strict;
        }
        scores[i] = wins_any ? 1.0 : 0.0;
    }
    return scores;
}

ModelBundle quick_model(Pooling pooling = Pooling::max, std::uint64_t seed = 13) {
    Dataset train_set = pcx::generate_dataset(3, 64, 1, false);
    TrainOptions opt;
    opt.epochs = 5;
    opt.seed = seed;
    return train(testutil::tiny_config(pooling), train_set, {}, opt);
}

}  // namespace

TEST_CASE("fbi is the per-row L1 norm") {
    Tensor f = Tensor::from_rows({{-1, 2, 0.5}});
    CHECK(fbi(f).scores == std::vector<double>{3.5});

    CHECK(fbi(Tensor::zeros({4, 3})).scores == std::vector<double>(4, 0.0));

    std::mt19937_64 rng(2);
    Tensor r = Tensor::uniform({5, 4}, -2, 2, rng);
    std::vector<double> got = fbi(r).scores;
    for (std::size_t i = 0; i < 5; ++i) {
        double want = 0;
        for (std::size_t k = 0; k < 4; ++k) want += std::abs(r.at(i, k));
        CHECK(got[i] == want);
    }
}

TEST_CASE("fbi_p identities and bounds") {
    std::mt19937_64 rng(3);
    Tensor f = Tensor::uniform({6, 5}, -1, 1, rng);
    CHECK(fbi_p(f, 1.0).scores == fbi(f).scores);

    CHECK(fbi_p(Tensor::from_rows({{3, 4}}), 2.0).scores[0] ==
          Catch::Approx(5.0).margin(1e-12));

    CHECK_THROWS_AS(fbi_p(f, 0.2), ContractError);
    CHECK_THROWS_AS(fbi_p(f, 8.5), ContractError);
}

TEST_CASE("fbi_p at p=8 tracks the row-max ranking") {
    // rows with spread maxima: each row peaks at its scale, the rest of the
    // row stays below 0.8 of it; the oracle ranks rows by their max-norm
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> jitter(0, 0.05), body(0, 0.8);
    std::uniform_int_distribution<std::size_t> slot(0, 5);
    int agree = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        Tensor f = Tensor::zeros({8, 6});
        for (std::size_t i = 0; i < 8; ++i) {
            double scale = 0.4 + 0.12 * double(i) + jitter(rng);
            std::size_t peak = slot(rng);
            for (std::size_t k = 0; k < 6; ++k)
                f.at(i, k) = k == peak ? scale : scale * body(rng);
        }
        std::size_t top_l8 = ranking(fbi_p(f, 8.0))[0];
        InfluenceMap maxnorm{Method::fbi, std::vector<double>(8, 0.0)};
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t k = 0; k < 6; ++k)
                maxnorm.scores[i] = std::max(maxnorm.scores[i],
                                             std::abs(f.at(i, k)));
        if (top_l8 == ranking(maxnorm)[0]) ++agree;
    }
    CHECK(agree >= 950);
}

TEST_CASE("fbi is scale covariant and its ranking scale invariant") {
    std::mt19937_64 rng(6);
    Tensor f = Tensor::uniform({10, 7}, -3, 3, rng);
    std::vector<double> base = fbi(f).scores;

    for (double alpha : {2.0, 0.5, -4.0}) {
        Tensor scaled = f;
        for (double& v : scaled.data()) v *= alpha;
        std::vector<double> got = fbi(scaled).scores;
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == Catch::Approx(std::abs(alpha) * base[i]).epsilon(1e-12));
    }

    Tensor doubled = f;
    for (double& v : doubled.data()) v *= 2.0;
    CHECK(ranking(fbi(doubled)) == ranking(fbi(f)));
}

TEST_CASE("critical points on hand cases") {
    InfluenceMap cp = critical_points(Tensor::from_rows({{1, 5}, {3, 2}}));
    CHECK(cp.scores == std::vector<double>{1, 1});

    // one dominating row leaves a single critical point
    InfluenceMap dom =
        critical_points(Tensor::from_rows({{9, 9, 9}, {1, 2, 3}, {0, 1, 2}}));
    CHECK(dom.scores == std::vector<double>{1, 0, 0});
    CHECK(critical_set(dom) == std::vector<std::size_t>{0});

    // exact ties leave the tied feature without a winner
    InfluenceMap tie = critical_points(Tensor::from_rows({{7, 1}, {7, 1}}));
    CHECK(tie.scores == std::vector<double>{0, 0});
    InfluenceMap half_tie = critical_points(Tensor::from_rows({{7, 1}, {7, 0}}));
    CHECK(half_tie.scores == std::vector<double>{1, 0});  // row 0 wins column 1
}

TEST_CASE("critical set is bounded by the feature count") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 50; ++t) {
        Tensor f = Tensor::uniform({20, 5}, -1, 1, rng);
        CHECK(critical_set(critical_points(f)).size() <= 5);
    }
}

TEST_CASE("critical points match the exhaustive argmax oracle") {
    // every matrix up to 3x3 over entries {0,1,2}
    for (std::size_t rows = 1; rows <= 3; ++rows)
        for (std::size_t cols = 1; cols <= 3; ++cols) {
            const std::size_t cells = rows * cols;
            std::size_t total = 1;
            for (std::size_t c = 0; c < cells; ++c) total *= 3;
            for (std::size_t code = 0; code < total; ++code) {
                Tensor f = Tensor::zeros({rows, cols});
                std::size_t rest = code;
                for (std::size_t c = 0; c < cells; ++c) {
                    f[c] = double(rest % 3);
                    rest /= 3;
                }
                CHECK(critical_points(f).scores == critical_oracle(f));
            }
        }

    // plus random 8x8 matrices over the same alphabet
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> coin(0, 2);
    for (int t = 0; t < 500; ++t) {
        Tensor f = Tensor::zeros({8, 8});
        for (std::size_t c = 0; c < 64; ++c) f[c] = double(coin(rng));
        CHECK(critical_points(f).scores == critical_oracle(f));
    }
}

TEST_CASE("gradient saliency: zero set and critical set mechanics") {
    ModelBundle m = quick_model();
    PointCloud pc = generate_shape(ShapeClass::cone, 64, 77);
    const std::size_t n = pc.size(), f = m.config.feature_dim();

    InfluenceMap grad = gradient_saliency(m, pc);
    REQUIRE(grad.scores.size() == n);

    std::size_t zeros = 0;
    for (double s : grad.scores)
        if (s < 1e-12) ++zeros;
    CHECK(zeros >= n - f);

    InfluenceMap cp = critical_points(forward(m, pc).features);
    for (std::size_t i = 0; i < n; ++i)
        if (grad.scores[i] >= 1e-12) CHECK(cp.scores[i] == 1.0);
}

TEST_CASE("gradient saliency matches a finite-difference oracle") {
    ModelBundle m = quick_model();
    PointCloud pc = generate_shape(ShapeClass::cylinder, 64, 31);

    Tensor logits = forward(m, pc).logits;
    std::size_t cls = 0;
    for (std::size_t j = 1; j < logits.numel(); ++j)
        if (logits[j] > logits[cls]) cls = j;

    InfluenceMap grad = gradient_saliency(m, pc);
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::size_t> pick_point(0, pc.size() - 1);
    const double h = 1e-6;
    for (int t = 0; t < 10; ++t) {
        std::size_t i = pick_point(rng);
        double sq = 0.0;
        for (int d = 0; d < 3; ++d) {
            PointCloud up = pc, down = pc;
            up.points[i][std::size_t(d)] += h;
            down.points[i][std::size_t(d)] -= h;
            double fd = (forward(m, up).logits[cls] -
                         forward(m, down).logits[cls]) /
                        (2.0 * h);
            sq += fd * fd;
        }
        double fd_norm = std::sqrt(sq);
        CHECK(std::abs(fd_norm - grad.scores[i]) <=
              1e-3 * std::max(1e-6, std::max(fd_norm, grad.scores[i])));
    }
}

TEST_CASE("integrated gradients on the baseline itself is zero") {
    ModelBundle m = quick_model();
    PointCloud collapsed;
    collapsed.points = std::vector<Vec3>(16, Vec3{0.0, 0.0, 0.0});
    InfluenceMap map = integrated_gradients(m, collapsed, 8);
    for (double s : map.scores) CHECK(s == 0.0);
}

TEST_CASE("integrated gradients: completeness and step convergence") {
    ModelBundle m = quick_model();
    PointCloud pc = generate_shape(ShapeClass::pyramid, 64, 15);

    IntgradResult r200 = integrated_gradients_full(m, pc, 200);
    double attr_sum = 0.0;
    for (double a : r200.signed_attribution) attr_sum += a;
    CHECK(std::abs(attr_sum - r200.prediction_delta) <=
          0.02 * std::max(1e-9, std::abs(r200.prediction_delta)));

    IntgradResult r400 = integrated_gradients_full(m, pc, 400);
    double scale = 0.0;
    for (double s : r400.map.scores) scale = std::max(scale, std::abs(s));
    for (std::size_t i = 0; i < pc.size(); ++i)
        CHECK(std::abs(r200.map.scores[i] - r400.map.scores[i]) <= 0.01 * scale);

    CHECK_THROWS_AS(integrated_gradients(m, pc, 1), ContractError);
}

TEST_CASE("random ranking is a seeded permutation") {
    InfluenceMap a = random_ranking(32, 5);
    InfluenceMap b = random_ranking(32, 5);
    CHECK(a.scores == b.scores);

    std::vector<double> sorted = a.scores;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 32; ++i) CHECK(sorted[i] == double(i + 1));

    CHECK(random_ranking(32, 6).scores != a.scores);
    CHECK_THROWS_AS(random_ranking(0, 1), ContractError);
}

TEST_CASE("random ranking mean rank obeys the law of large numbers") {
    const std::size_t n = 16;
    double mean_score = 0.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed)
        mean_score += random_ranking(n, seed).scores[0];
    mean_score /= 1000.0;
    double expected = double(n + 1) / 2.0;
    CHECK(std::abs(mean_score - expected) <= 0.05 * expected);
}

TEST_CASE("rankings break ties by the lowest index") {
    InfluenceMap tie{Method::fbi, {1.0, 3.0, 3.0, 0.5}};
    CHECK(ranking(tie) == std::vector<std::size_t>{1, 2, 0, 3});
}
