#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nbm/centering.hpp"
#include "nbm/dataset.hpp"
#include "nbm/mlsd.hpp"
#include "nbm/similarity.hpp"

namespace nbm {

struct TrainConfig {
    double beta = 0.1;
    std::vector<double> lambdas = {0.01};
    int epochs = 200;
    std::uint64_t seed = 0;
    Variant variant = Variant::linear;
    RegForm reg_form = RegForm::alg1;
    bool shuffle = true;
    std::optional<int> neighbor_limit_train = {}; // default: full neighborhood
    int eval_k = 200; // neighbor cap for per-epoch validation/test metrics

    void validate() const; // throws ConfigError
};

struct EpochStats {
    int epoch = 0; // 1-based
    double objective = 0.0;
    double valid_rmse = 0.0;
    double test_rmse = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1; // 1-based epoch with the lowest validation RMSE
};

/// Deterministic visit order for one epoch: every observed training
/// (user, item) pair exactly once. The base order is ascending user then
/// ascending item; when shuffled, the permutation is drawn from a
/// generator derived from (seed, epoch).
std::vector<std::pair<int, int>> epoch_order(const CenteredView& view, std::uint64_t seed,
                                             int epoch, bool shuffle);

/// Full objective: half the sum of squared model-space residuals over the
/// training ratings (zero prediction when a neighborhood is empty), plus
/// per-layer lambda * (half squared Frobenius norm of omega∘gamma), minus
/// lambda * l1_mu * |gamma|_1 when the sparsity pull is active.
double objective(const SimilarityLayers& layers, const CenteredView& view,
                 const std::vector<double>& lambdas, std::optional<int> neighbor_limit = {});

struct SgdStats {
    double running_objective = 0.0; // half sum of squared errors at visit time
    std::size_t updates = 0;
    std::size_t skipped = 0; // empty-neighborhood samples
};

/// One pass of per-sample gradient descent over the training ratings in
/// epoch order. Throws DivergenceError (annotated with the epoch) when an
/// update overflows.
SgdStats sgd_epoch(SimilarityLayers& layers, const CenteredView& view, const TrainConfig& cfg,
                   int epoch);

struct TrainResult {
    SimilarityLayers model; // weights from the best-validation epoch
    TrainHistory history;
};

/// Runs the full epoch budget, recording objective and validation/test
/// RMSE after every epoch, and returns the weights from the epoch with
/// the lowest validation RMSE. On divergence the epochs completed so far
/// are left in *partial_out before the error escapes. eval_jobs controls
/// only the parallelism of the per-epoch metric passes, never the result.
TrainResult train(SimilarityLayers layers, const RatingDataset& train_data,
                  const RatingDataset& valid_data, const RatingDataset& test_data,
                  const TrainConfig& cfg, TrainHistory* partial_out = nullptr,
                  int eval_jobs = 1);

/// Single-matrix objective with a Gaussian-Laplace prior: data term plus
/// lambda_s * (half squared Frobenius norm of s) - lambda_s * mu * |s|_1.
/// mu = 0 reduces to the single-layer objective with an all-ones omega.
double slim_variant_objective(const SymMatrix& s, const CenteredView& view, double lambda_s,
                              double mu);

enum class ProfileKind : std::uint8_t { pcc, cos, regsim, slim, pnbm, mpnbm, tanh_mpnbm };

ProfileKind parse_profile(const std::string& name);
const char* profile_name(ProfileKind kind);

/// A named experiment preset: either a static similarity baseline
/// (pcc, cos) or a trainable layer structure with its default
/// hyper-parameters.
struct Profile {
    ProfileKind kind = ProfileKind::regsim;
    bool trained = true;
    SimKind static_kind = SimKind::pearson; // pcc/cos only
    TrainConfig config;
    std::vector<double> phis = {1.0};
    std::vector<SimKind> omegas = {SimKind::ones};
    double l1_mu = 0.0;
};

Profile make_profile(ProfileKind kind);

/// A model ready for evaluation: either a fixed similarity matrix or a
/// (possibly trained) layered model.
struct Model {
    enum class Kind : std::uint8_t { static_similarity, layered };

    Kind kind = Kind::layered;
    ConstraintMatrix static_sim;
    SimilarityLayers layers;
};

/// Instantiates a profile against training data: builds constraint
/// matrices and seeds the random gamma initialization (layer t uses
/// seed + t).
Model build_model(const Profile& profile, const RatingDataset& train_data,
                  const CenteredView& view, std::uint64_t seed);

Model make_baseline(ProfileKind kind, const RatingDataset& train_data, const CenteredView& view,
                    std::uint64_t seed);

/// History CSV: "epoch,objective,valid_rmse,test_rmse,seconds". Wall time
/// is written as 0.000000 unless include_timing is set, keeping default
/// artifacts byte-reproducible across machines.
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path,
                       bool include_timing = false);
TrainHistory load_history_csv(const std::filesystem::path& path);

} // namespace nbm
