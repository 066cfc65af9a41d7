#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "pcx/network.hpp"
#include "pcx/shapes.hpp"

using namespace pcx;
namespace fs = std::filesystem;

namespace {

PointCloud permuted(const PointCloud& pc, std::mt19937_64& rng) {
    PointCloud out = pc;
    std::shuffle(out.points.begin(), out.points.end(), rng);
    return out;
}

}  // namespace

TEST_CASE("config validation and head width for concat pooling") {
    ModelConfig c = testutil::tiny_config();
    CHECK(c.head_input_dim() == 8);
    c.pooling = Pooling::max_mean_concat;
    CHECK(c.head_input_dim() == 16);
    c.featurizer_widths = {};
    CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("bundle weight shapes must chain with the config") {
    ModelBundle m = init_model(testutil::tiny_config(), 0);
    CHECK_NOTHROW(m.validate());
    m.weights[2] = Tensor::zeros({5, 5});
    CHECK_THROWS_AS(m.validate(), ContractError);
    m = init_model(testutil::tiny_config(), 0);
    m.weights.pop_back();
    CHECK_THROWS_AS(m.validate(), ContractError);
}

TEST_CASE("logits are invariant under point permutation, both poolings") {
    std::mt19937_64 rng(5);
    PointCloud pc = generate_shape(ShapeClass::cone, 96, 12);
    for (Pooling pooling : {Pooling::max, Pooling::max_mean_concat}) {
        ModelBundle m = init_model(testutil::tiny_config(pooling), 3);
        Tensor base = forward(m, pc).logits;
        for (int rep = 0; rep < 3; ++rep) {
            Tensor shuffled = forward(m, permuted(pc, rng)).logits;
            for (std::size_t j = 0; j < base.numel(); ++j)
                CHECK(std::abs(shuffled[j] - base[j]) < 1e-9);
        }
    }
}

TEST_CASE("duplicating a point leaves the max-pooled global vector unchanged") {
    PointCloud pc = generate_shape(ShapeClass::cube, 64, 8);
    ModelBundle m = init_model(testutil::tiny_config(), 3);
    Tensor base = forward(m, pc).global;
    PointCloud dup = pc;
    dup.points.push_back(pc.points[10]);
    Tensor with_dup = forward(m, dup).global;
    CHECK(base.data() == with_dup.data());
}

TEST_CASE("featurizer rows depend only on their own point") {
    // Jacobian block dX_F(j,.)/dX_i vanishes exactly for j != i
    ModelBundle m = init_model(testutil::tiny_config(), 9);
    PointCloud pc = generate_shape(ShapeClass::torus, 64, 21);
    const std::size_t f = m.config.feature_dim();

    for (auto [row, col] : {std::pair<std::size_t, std::size_t>{3, 1},
                            {17, 6}, {40, 0}}) {
        Graph g;
        ForwardVars fv = forward_rec(g, m, pc.to_tensor(), true);
        g.backward(g.pick(fv.features, row * f + col));
        const Tensor& gx = g.grad(fv.input);
        for (std::size_t i = 0; i < pc.size(); ++i)
            if (i != row)
                for (std::size_t d = 0; d < 3; ++d)
                    CHECK(gx.at(i, d) == 0.0);
    }
}

TEST_CASE("forward rejects mis-sized inputs") {
    ModelBundle m = init_model(testutil::tiny_config(), 0);
    Graph g;
    CHECK_THROWS_AS(forward_rec(g, m, Tensor::zeros({4, 2}), false),
                    ContractError);
}

TEST_CASE("lr=0 leaves the initialization untouched") {
    Dataset train_set = testutil::tiny_dataset(2, 64, 3);
    ModelConfig config = testutil::tiny_config();
    TrainOptions opt;
    opt.epochs = 2;
    opt.lr = 0.0;
    opt.seed = 7;
    ModelBundle trained = train(config, train_set, {}, opt);
    ModelBundle fresh = init_model(config, 7);
    for (std::size_t i = 0; i < trained.weights.size(); ++i)
        CHECK(trained.weights[i].data() == fresh.weights[i].data());
}

TEST_CASE("training contracts: epochs, balance, labels") {
    Dataset train_set = testutil::tiny_dataset(2, 64, 3);
    ModelConfig config = testutil::tiny_config();
    TrainOptions opt;
    opt.epochs = 0;
    CHECK_THROWS_AS(train(config, train_set, {}, opt), ContractError);
    opt.epochs = 1;
    CHECK_THROWS_AS(train(config, {}, {}, opt), ContractError);

    Dataset unbalanced = train_set;
    unbalanced.pop_back();
    CHECK_THROWS_AS(train(config, unbalanced, {}, opt), ContractError);

    Dataset unlabeled = train_set;
    unlabeled[0].label.reset();
    CHECK_THROWS_AS(train(config, unlabeled, {}, opt), ContractError);
}

TEST_CASE("training is deterministic and reduces the loss") {
    Dataset train_set = testutil::tiny_dataset(4, 64, 3);
    Dataset test_set = testutil::tiny_dataset(2, 64, 3, true);
    ModelConfig config = testutil::tiny_config();
    TrainOptions opt;
    opt.epochs = 8;
    opt.seed = 42;

    ModelBundle a = train(config, train_set, test_set, opt);
    ModelBundle b = train(config, train_set, test_set, opt);
    for (std::size_t i = 0; i < a.weights.size(); ++i)
        CHECK(a.weights[i].data() == b.weights[i].data());
    CHECK(a.info.test_accuracy == b.info.test_accuracy);

    REQUIRE(a.info.epoch_loss.size() == 8);
    // learning shows as a monotone trend over epoch windows, not per epoch
    double head = 0, tail = 0;
    for (int e = 0; e < 4; ++e) {
        head += a.info.epoch_loss[std::size_t(e)];
        tail += a.info.epoch_loss[std::size_t(e + 4)];
    }
    CHECK(tail < head);
    CHECK(a.info.epoch_loss.back() < a.info.epoch_loss.front());
}

TEST_CASE("augmented training stays deterministic but differs from plain") {
    Dataset train_set = testutil::tiny_dataset(2, 64, 3);
    ModelConfig config = testutil::tiny_config();
    TrainOptions opt;
    opt.epochs = 2;
    opt.seed = 5;
    opt.augment_rotations = true;
    ModelBundle a = train(config, train_set, {}, opt);
    ModelBundle b = train(config, train_set, {}, opt);
    for (std::size_t i = 0; i < a.weights.size(); ++i)
        CHECK(a.weights[i].data() == b.weights[i].data());

    opt.augment_rotations = false;
    ModelBundle plain = train(config, train_set, {}, opt);
    bool differs = false;
    for (std::size_t i = 0; i < a.weights.size() && !differs; ++i)
        differs = a.weights[i].data() != plain.weights[i].data();
    CHECK(differs);
}

TEST_CASE("pcxw round trip is bit identical") {
    Dataset train_set = testutil::tiny_dataset(1, 64, 3);
    ModelConfig config = testutil::tiny_config(Pooling::max_mean_concat);
    TrainOptions opt;
    opt.epochs = 1;
    ModelBundle m = train(config, train_set, {}, opt);
    m.info.test_accuracy = 0.875;

    fs::path path = fs::temp_directory_path() / "pcx_test_model.pcxw";
    save_model(m, path.string());
    ModelBundle back = load_model(path.string());
    CHECK(back.config.pooling == m.config.pooling);
    CHECK(back.config.featurizer_widths == m.config.featurizer_widths);
    CHECK(back.config.head_widths == m.config.head_widths);
    CHECK(back.info.epochs == m.info.epochs);
    CHECK(back.info.seed == m.info.seed);
    CHECK(back.info.test_accuracy == m.info.test_accuracy);
    REQUIRE(back.weights.size() == m.weights.size());
    for (std::size_t i = 0; i < m.weights.size(); ++i)
        CHECK(back.weights[i].data() == m.weights[i].data());

    // save(load(save(m))) is byte-identical
    CHECK(encode_model(back) == encode_model(m));
}

TEST_CASE("pcxw format errors name the offset") {
    ModelBundle m = init_model(testutil::tiny_config(), 1);
    std::string bytes = encode_model(m);

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_WITH(decode_model(bad_magic),
                      Catch::Matchers::ContainsSubstring("bad magic at offset 0"));

    std::string truncated = bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_WITH(decode_model(truncated),
                      Catch::Matchers::ContainsSubstring("offset"));

    std::string bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_WITH(decode_model(bad_version),
                      Catch::Matchers::ContainsSubstring("version"));

    std::string trailing = bytes + "junk";
    CHECK_THROWS_WITH(decode_model(trailing),
                      Catch::Matchers::ContainsSubstring("trailing"));

    CHECK_THROWS_AS(load_model("/does/not/exist.pcxw"), IoError);
}
