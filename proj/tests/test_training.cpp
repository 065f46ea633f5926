#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include <nbm/centering.hpp>
#include <nbm/errors.hpp>
#include <nbm/evaluation.hpp>
#include <nbm/training.hpp>

#include "support/synthetic.hpp"
#include "support/temp.hpp"

using namespace nbm;
using namespace nbm::testing;

namespace {

bool bitwise_equal(const SymMatrix& a, const SymMatrix& b) {
    if (a.dim() != b.dim()) return false;
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j)
            if (std::bit_cast<std::uint64_t>(a(i, j)) != std::bit_cast<std::uint64_t>(b(i, j)))
                return false;
    return true;
}

SimilarityLayers pnbm_layers(const RatingDataset& ds, std::uint64_t seed) {
    SimilarityLayers model;
    SimilarityLayer layer;
    layer.omega = ones(ds.num_items);
    layer.gamma = init_gamma(ds.num_items, seed);
    model.layers.push_back(std::move(layer));
    return model;
}

} // namespace

TEST_CASE("epoch_order visits every training pair exactly once") {
    const RatingDataset ds = planted_instance(10, 7, 2);
    const CenteredView view = center(ds);

    const auto shuffled = epoch_order(view, 5, 1, true);
    CHECK(shuffled.size() == ds.size());
    std::set<std::pair<int, int>> seen(shuffled.begin(), shuffled.end());
    CHECK(seen.size() == ds.size());
    for (const Triplet& t : ds.triplets) CHECK(seen.count({t.user, t.item}) == 1);

    // Unshuffled: ascending user, then ascending item.
    const auto base = epoch_order(view, 5, 1, false);
    CHECK(std::is_sorted(base.begin(), base.end()));

    // Same (seed, epoch) reproduces the permutation; different epochs differ.
    CHECK(epoch_order(view, 5, 1, true) == shuffled);
    CHECK(epoch_order(view, 5, 2, true) != shuffled);
    CHECK(epoch_order(view, 6, 1, true) != shuffled);
}

TEST_CASE("objective with zero weights is half the centered energy") {
    const RatingDataset ds = planted_instance(12, 8, 9);
    const CenteredView view = center(ds);

    SimilarityLayers model = pnbm_layers(ds, 0);
    model.layers[0].gamma = SymMatrix(ds.num_items, 0.0);

    double energy = 0.0;
    for (int u = 0; u < ds.num_users; ++u)
        for (const RatedEntry& e : view.rated_by_user(u)) energy += e.rating * e.rating;

    CHECK(objective(model, view, {0.5}) == doctest::Approx(0.5 * energy).epsilon(1e-12));
}

TEST_CASE("objective matches a hand-computed two-by-two fixture") {
    // Item means are both 3; every centered rating is +/-1 and each
    // prediction is the other item's centered value.
    const RatingDataset ds = make_dataset(
        2, 2, {{0, 0, 4.0}, {0, 1, 2.0}, {1, 0, 2.0}, {1, 1, 4.0}});
    const CenteredView view = center(ds);

    SimilarityLayers model = pnbm_layers(ds, 0);
    model.layers[0].gamma.set(0, 1, 0.5);

    // Every prediction is -actual, so each squared error is 4; the
    // regularizer sees the full matrix with two off-diagonal entries.
    const double expected = 0.5 * 16.0 + 0.1 * 0.5 * (2.0 * 0.25);
    CHECK(objective(model, view, {0.1}) == doctest::Approx(expected).epsilon(1e-12));

    // The sparsity pull subtracts lambda * mu * |gamma|_1.
    model.l1_mu = 0.2;
    CHECK(objective(model, view, {0.1}) ==
          doctest::Approx(expected - 0.1 * 0.2 * 1.0).epsilon(1e-12));

    CHECK_THROWS_AS((void)objective(model, view, {0.1, 0.2}), ConfigError);
}

TEST_CASE("slim_variant_objective is the single-layer objective at mu = 0") {
    const RatingDataset ds = planted_instance(12, 8, 5);
    const CenteredView view = center(ds);

    SymMatrix s = init_gamma(ds.num_items, 3);
    SimilarityLayers as_layers;
    SimilarityLayer layer;
    layer.omega = ones(ds.num_items);
    layer.gamma = s;
    as_layers.layers.push_back(std::move(layer));

    CHECK(slim_variant_objective(s, view, 0.02, 0.0) ==
          doctest::Approx(objective(as_layers, view, {0.02})).epsilon(1e-12));

    // mu > 0 subtracts exactly lambda * mu * |s|_1.
    double l1 = 0.0;
    for (int i = 0; i < s.dim(); ++i)
        for (int j = 0; j < s.dim(); ++j) l1 += std::abs(s(i, j));
    CHECK(slim_variant_objective(s, view, 0.02, 0.3) ==
          doctest::Approx(objective(as_layers, view, {0.02}) - 0.02 * 0.3 * l1).epsilon(1e-12));
}

TEST_CASE("sgd_epoch with zero learning rate leaves the model untouched") {
    const RatingDataset ds = planted_instance(14, 9, 13);
    const CenteredView view = center(ds);
    SimilarityLayers model = pnbm_layers(ds, 1);
    const SymMatrix before = model.layers[0].gamma;

    TrainConfig cfg;
    cfg.beta = 0.0;
    cfg.lambdas = {0.01};
    const SgdStats stats = sgd_epoch(model, view, cfg, 1);

    CHECK(bitwise_equal(model.layers[0].gamma, before));
    CHECK(stats.updates + stats.skipped == ds.size());
    CHECK(stats.updates > 0);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const RatingDataset ds = planted_instance(16, 9, 21);
    const CenteredView view = center(ds);

    TrainConfig cfg;
    cfg.beta = 0.1;
    cfg.lambdas = {0.01};

    SimilarityLayers a = pnbm_layers(ds, 4);
    SimilarityLayers b = pnbm_layers(ds, 4);
    for (int epoch = 1; epoch <= 3; ++epoch) {
        sgd_epoch(a, view, cfg, epoch);
        sgd_epoch(b, view, cfg, epoch);
    }
    CHECK(bitwise_equal(a.layers[0].gamma, b.layers[0].gamma));

    SimilarityLayers c = pnbm_layers(ds, 5);
    sgd_epoch(c, view, cfg, 1);
    CHECK_FALSE(bitwise_equal(a.layers[0].gamma, c.layers[0].gamma));
}

TEST_CASE("the objective improves over the first training epochs") {
    const RatingDataset ds = planted_instance(20, 10, 7);
    const SplitResult parts = split(ds, {});
    const CenteredView view = center(parts.train);

    SimilarityLayers model = pnbm_layers(parts.train, 0);
    TrainConfig cfg;
    cfg.beta = 0.1;
    cfg.lambdas = {0.01};

    std::vector<double> objectives;
    for (int epoch = 1; epoch <= 10; ++epoch) {
        sgd_epoch(model, view, cfg, epoch);
        objectives.push_back(objective(model, view, cfg.lambdas));
    }
    CHECK(objectives.back() < objectives.front());
}

TEST_CASE("train beats the item-mean predictor on planted structure") {
    const RatingDataset ds = planted_instance(20, 10, 7);
    SplitSpec spec;
    spec.seed = 1;
    const SplitResult parts = split(ds, spec);
    const CenteredView view = center(parts.train);

    // Zero weights: every prediction falls back to the item mean.
    SimilarityLayers zero = pnbm_layers(parts.train, 0);
    zero.layers[0].gamma = SymMatrix(parts.train.num_items, 0.0);
    const double mean_rmse = evaluate_layers(zero, view, parts.valid).rmse;

    TrainConfig cfg;
    cfg.beta = 0.1;
    cfg.lambdas = {0.01};
    cfg.epochs = 50;
    cfg.seed = 0;

    const TrainResult result = train(pnbm_layers(parts.train, 0), parts.train, parts.valid,
                                     parts.test, cfg);
    REQUIRE(result.history.epochs.size() == 50);
    CHECK(result.history.best_epoch >= 1);

    const double best = result.history.epochs[result.history.best_epoch - 1].valid_rmse;
    CHECK(best < mean_rmse);

    // The returned weights really are the best epoch's snapshot.
    CHECK(evaluate_layers(result.model, view, parts.valid, cfg.eval_k).rmse ==
          doctest::Approx(best).epsilon(1e-12));

    // History rows are 1-based and in order.
    for (std::size_t n = 0; n < result.history.epochs.size(); ++n)
        CHECK(result.history.epochs[n].epoch == static_cast<int>(n) + 1);
}

TEST_CASE("a one-epoch budget still tracks its best epoch") {
    const RatingDataset ds = planted_instance(12, 8, 3);
    const SplitResult parts = split(ds, {});

    TrainConfig cfg;
    cfg.beta = 0.05;
    cfg.lambdas = {0.01};
    cfg.epochs = 1;

    const TrainResult result =
        train(pnbm_layers(parts.train, 2), parts.train, parts.valid, parts.test, cfg);
    CHECK(result.history.epochs.size() == 1);
    CHECK(result.history.best_epoch == 1);
}

TEST_CASE("train validates its configuration and inputs") {
    const RatingDataset ds = planted_instance(10, 6, 2);
    const SplitResult parts = split(ds, {});

    TrainConfig cfg;
    cfg.beta = -0.1;
    CHECK_THROWS_AS((void)train(pnbm_layers(parts.train, 0), parts.train, parts.valid,
                                parts.test, cfg),
                    ConfigError);

    cfg.beta = 0.1;
    cfg.epochs = 0;
    CHECK_THROWS_AS((void)train(pnbm_layers(parts.train, 0), parts.train, parts.valid,
                                parts.test, cfg),
                    ConfigError);

    cfg.epochs = 1;
    cfg.lambdas = {0.01, 0.02};
    CHECK_THROWS_AS((void)train(pnbm_layers(parts.train, 0), parts.train, parts.valid,
                                parts.test, cfg),
                    ConfigError);

    cfg.lambdas = {0.01};
    const RatingDataset empty = ds.with_triplets({});
    CHECK_THROWS_AS((void)train(pnbm_layers(parts.train, 0), empty, parts.valid, parts.test, cfg),
                    InputError);
    CHECK_THROWS_AS((void)train(pnbm_layers(parts.train, 0), parts.train, empty, parts.test, cfg),
                    InputError);
}

TEST_CASE("divergence carries the epoch and leaves the partial history") {
    const RatingDataset ds = planted_instance(16, 9, 8);
    const SplitResult parts = split(ds, {});

    TrainConfig cfg;
    cfg.beta = 1e18;
    cfg.lambdas = {0.01};
    cfg.epochs = 5;

    TrainHistory partial;
    try {
        (void)train(pnbm_layers(parts.train, 0), parts.train, parts.valid, parts.test, cfg,
                    &partial);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.epoch >= 1);
        CHECK(partial.epochs.size() == static_cast<std::size_t>(e.epoch - 1));
    }
}

TEST_CASE("an all-ones multi-layer stack predicts like the summed single matrix") {
    const RatingDataset ds = planted_instance(15, 9, 31);
    const CenteredView view = center(ds);

    SimilarityLayers stacked;
    for (int t = 0; t < 3; ++t) {
        SimilarityLayer layer;
        layer.omega = ones(ds.num_items);
        layer.gamma = init_gamma(ds.num_items, 40 + static_cast<std::uint64_t>(t));
        stacked.layers.push_back(std::move(layer));
    }

    SimilarityLayers summed;
    {
        SimilarityLayer layer;
        layer.omega = ones(ds.num_items);
        SymMatrix total(ds.num_items);
        for (int i = 0; i < ds.num_items; ++i)
            for (int j = 0; j < i; ++j)
                total.set(i, j, stacked.layers[0].gamma(i, j) + stacked.layers[1].gamma(i, j) +
                                    stacked.layers[2].gamma(i, j));
        layer.gamma = std::move(total);
        summed.layers.push_back(std::move(layer));
    }

    for (int u = 0; u < ds.num_users; ++u) {
        for (int i = 0; i < ds.num_items; ++i) {
            const ModelPrediction a = model_prediction(stacked, view, u, i);
            const ModelPrediction b = model_prediction(summed, view, u, i);
            CHECK(a.empty == b.empty);
            if (!a.empty) CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
        }
    }
}

TEST_CASE("profiles carry their documented presets") {
    const Profile regsim = make_profile(ProfileKind::regsim);
    CHECK(regsim.trained);
    CHECK(regsim.config.beta == 0.1);
    CHECK(regsim.config.lambdas == std::vector<double>{0.01});
    CHECK(regsim.phis == std::vector<double>{1.0});
    CHECK(regsim.omegas == std::vector<SimKind>{SimKind::ones});
    CHECK(regsim.l1_mu == 0.0);

    const Profile pnbm = make_profile(ProfileKind::pnbm);
    CHECK(pnbm.config.beta == 0.1);
    CHECK(pnbm.omegas == std::vector<SimKind>{SimKind::ones});

    const Profile slim = make_profile(ProfileKind::slim);
    CHECK(slim.config.beta == 0.4);
    CHECK(slim.config.lambdas == std::vector<double>{0.02});
    CHECK(slim.l1_mu == 0.01);

    const Profile mpnbm = make_profile(ProfileKind::mpnbm);
    CHECK(mpnbm.config.beta == 0.2);
    CHECK(mpnbm.config.lambdas == std::vector<double>{0.05, 0.05, 0.05});
    CHECK(mpnbm.phis == std::vector<double>{3.0, 1.0, 1.0});
    CHECK(mpnbm.omegas ==
          std::vector<SimKind>{SimKind::ones, SimKind::pearson, SimKind::jaccard});
    CHECK(mpnbm.config.variant == Variant::linear);

    const Profile tanh_m = make_profile(ProfileKind::tanh_mpnbm);
    CHECK(tanh_m.config.beta == 0.4);
    CHECK(tanh_m.config.variant == Variant::tanh);
    CHECK(tanh_m.phis == mpnbm.phis);
    CHECK(tanh_m.omegas == mpnbm.omegas);

    const Profile pcc = make_profile(ProfileKind::pcc);
    CHECK_FALSE(pcc.trained);
    CHECK(pcc.static_kind == SimKind::pearson);
    const Profile cos = make_profile(ProfileKind::cos);
    CHECK_FALSE(cos.trained);
    CHECK(cos.static_kind == SimKind::cosine);

    CHECK(regsim.config.epochs == 200);
    CHECK(mpnbm.config.eval_k == 200);
}

TEST_CASE("profile names round-trip and reject unknowns") {
    for (const ProfileKind kind :
         {ProfileKind::pcc, ProfileKind::cos, ProfileKind::regsim, ProfileKind::slim,
          ProfileKind::pnbm, ProfileKind::mpnbm, ProfileKind::tanh_mpnbm}) {
        CHECK(parse_profile(profile_name(kind)) == kind);
    }
    CHECK(parse_profile("tanh_mpnbm") == ProfileKind::tanh_mpnbm);
    CHECK_THROWS_AS((void)parse_profile("svd++"), ConfigError);
}

TEST_CASE("build_model assembles the layer structure a profile describes") {
    const RatingDataset ds = planted_instance(14, 8, 11);
    const CenteredView view = center(ds);

    const Model mpnbm = build_model(make_profile(ProfileKind::mpnbm), ds, view, 9);
    CHECK(mpnbm.kind == Model::Kind::layered);
    REQUIRE(mpnbm.layers.num_layers() == 3);
    CHECK(mpnbm.layers.layers[0].phi == 3.0);
    CHECK(mpnbm.layers.layers[0].omega.kind == SimKind::ones);
    CHECK(mpnbm.layers.layers[1].omega.kind == SimKind::pearson);
    CHECK(mpnbm.layers.layers[2].omega.kind == SimKind::jaccard);
    CHECK(bitwise_equal(mpnbm.layers.layers[0].gamma, init_gamma(8, 9)));
    CHECK(bitwise_equal(mpnbm.layers.layers[1].gamma, init_gamma(8, 10)));
    CHECK(bitwise_equal(mpnbm.layers.layers[2].gamma, init_gamma(8, 11)));
    CHECK(bitwise_equal(mpnbm.layers.layers[1].omega.values, pearson(view).values));

    const Model pcc = build_model(make_profile(ProfileKind::pcc), ds, view, 9);
    CHECK(pcc.kind == Model::Kind::static_similarity);
    CHECK(pcc.static_sim.kind == SimKind::pearson);
    CHECK(bitwise_equal(pcc.static_sim.values, pearson(view).values));

    const Model slim = build_model(make_profile(ProfileKind::slim), ds, view, 9);
    CHECK(slim.layers.l1_mu == 0.01);
}

TEST_CASE("regsim and the slim variant at mu = 0 share a trajectory") {
    const RatingDataset ds = planted_instance(16, 9, 29);
    const SplitResult parts = split(ds, {});
    const CenteredView view = center(parts.train);

    Profile regsim = make_profile(ProfileKind::regsim);
    Profile slim = make_profile(ProfileKind::slim);
    slim.l1_mu = 0.0;
    slim.config = regsim.config;

    SimilarityLayers a = build_model(regsim, parts.train, view, 5).layers;
    SimilarityLayers b = build_model(slim, parts.train, view, 5).layers;
    for (int epoch = 1; epoch <= 5; ++epoch) {
        sgd_epoch(a, view, regsim.config, epoch);
        sgd_epoch(b, view, slim.config, epoch);
    }
    CHECK(bitwise_equal(a.layers[0].gamma, b.layers[0].gamma));
}

TEST_CASE("history csv round-trips every value exactly") {
    TrainHistory history;
    history.epochs = {{1, 12.25, 1.5, 1.25, 0.5}, {2, 10.0 / 3.0, 0.971234567890123, 1.0, 0.25}};
    history.best_epoch = 2;

    TempDir dir;
    write_history_csv(history, dir.file("hist.csv"));
    const TrainHistory loaded = load_history_csv(dir.file("hist.csv"));

    REQUIRE(loaded.epochs.size() == 2);
    CHECK(loaded.best_epoch == 2);
    for (std::size_t n = 0; n < 2; ++n) {
        CHECK(loaded.epochs[n].epoch == history.epochs[n].epoch);
        CHECK(std::bit_cast<std::uint64_t>(loaded.epochs[n].objective) ==
              std::bit_cast<std::uint64_t>(history.epochs[n].objective));
        CHECK(std::bit_cast<std::uint64_t>(loaded.epochs[n].valid_rmse) ==
              std::bit_cast<std::uint64_t>(history.epochs[n].valid_rmse));
        CHECK(std::bit_cast<std::uint64_t>(loaded.epochs[n].test_rmse) ==
              std::bit_cast<std::uint64_t>(history.epochs[n].test_rmse));
        // Timing is zeroed unless explicitly requested.
        CHECK(loaded.epochs[n].seconds == 0.0);
    }

    write_history_csv(history, dir.file("timed.csv"), true);
    CHECK(load_history_csv(dir.file("timed.csv")).epochs[0].seconds > 0.0);

    write_file(dir.file("bad.csv"), "epoch,objective\n1,2\n");
    CHECK_THROWS_AS((void)load_history_csv(dir.file("bad.csv")), InputError);
    CHECK_THROWS_AS((void)load_history_csv(dir.file("absent.csv")), InputError);
}
