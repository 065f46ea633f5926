#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nbm/centering.hpp"
#include "nbm/dataset.hpp"
#include "nbm/mlsd.hpp"
#include "nbm/training.hpp"

namespace nbm {

/// RMSE on the original rating scale plus prediction diagnostics:
/// raw_min/raw_max are the model-space extremes (centered quotient or
/// tanh output) and clamp_count says how often the reported rating hit
/// the scale bounds.
struct EvalDetail {
    double rmse = 0.0;
    std::size_t count = 0;
    std::size_t clamp_count = 0;
    double raw_min = 0.0;
    double raw_max = 0.0;
};

/// Predictions use the top-k rated neighbors by |s| (k = 200 by default,
/// unlimited when nullopt). jobs parallelizes over prediction pairs and
/// never changes the result: the partition is summed in a fixed number of
/// chunks combined in chunk order.
EvalDetail evaluate_layers(const SimilarityLayers& layers, const CenteredView& view,
                           const RatingDataset& part, std::optional<int> k = 200, int jobs = 1);
EvalDetail evaluate_static(const ConstraintMatrix& sim, const CenteredView& view,
                           const RatingDataset& part, std::optional<int> k = 200, int jobs = 1);
EvalDetail evaluate_model(const Model& model, const CenteredView& view, const RatingDataset& part,
                          std::optional<int> k = 200, int jobs = 1);
double rmse(const Model& model, const CenteredView& view, const RatingDataset& part,
            std::optional<int> k = 200, int jobs = 1);

/// Plateau metrics of a per-epoch RMSE series under an equality tolerance:
/// epsilon = first epoch (1-based) whose value equals the series minimum
/// within tol; zeta = length of the consecutive equal run from epsilon;
/// censored = the run touches the end of the evaluated range (the true
/// plateau may be longer); converged = the run persists for at least 10
/// epochs. Only the first `budget` epochs are considered.
struct StabilityStats {
    int epsilon = 0;
    int zeta = 0;
    bool censored = false;
    bool converged = false;
    double best = 0.0;
};

StabilityStats stability(std::span<const double> series, double tol = 1e-4, int budget = 200);

/// 100 * (baseline - value) / baseline: positive when `value` improves on
/// the baseline.
double inc_percent(double baseline, double value);

struct EvalReport {
    std::string model;
    double rmse = 0.0;    // mean over successful repeats
    double inc = 0.0;     // vs. the named baseline; 0 when none given
    std::string baseline; // empty = no comparison requested
    int repeats = 0;
    std::vector<double> per_repeat; // NaN marks a diverged repeat
    StabilityStats stability;       // from the first successful trained repeat
    bool has_stability = false;
};

/// Whether repeated runs redraw the split (fresh split seed per repeat)
/// or keep one split and redraw only the training seed.
enum class RepeatMode : std::uint8_t { split, train };

RepeatMode parse_repeat_mode(const std::string& name);

struct RepeatOptions {
    int repeats = 5;
    std::uint64_t base_seed = 0;
    RepeatMode mode = RepeatMode::split;
    SplitSpec split; // fractions only; the seed field is derived per repeat
    std::optional<int> k = 200;
    int jobs = 1;
    std::optional<double> baseline_rmse = {};
    std::string baseline_name;
};

/// Runs split -> build -> (train ->) evaluate `repeats` times with seeds
/// base_seed + r and reports the mean test RMSE over the repeats that did
/// not diverge. Throws EmptyResultError when every repeat diverged.
EvalReport repeat_protocol(const Profile& profile, const RatingDataset& full,
                           const RepeatOptions& opt);

struct DensitySlice {
    int slice = 0;
    int users = 0;
    int items = 0; // distinct items rated within the slice
    std::size_t ratings = 0;
    double density = 0.0;
    bool skipped = false;
    EvalReport report;
};

struct SweepOptions {
    int n_slices = 10;
    int min_users = 50;
    RepeatOptions eval;
};

/// Buckets users into n_slices equal-population groups by ascending
/// training-rating count and evaluates the profile on each group's
/// sub-dataset. Groups under min_users are skipped with a warning.
std::vector<DensitySlice> density_sweep(const Profile& profile, const RatingDataset& full,
                                        const SweepOptions& opt);

std::string report_json(const EvalReport& report);
std::string report_text(const EvalReport& report);
std::string sweep_csv(const std::vector<DensitySlice>& slices);
std::string sweep_text(const std::vector<DensitySlice>& slices);

} // namespace nbm
