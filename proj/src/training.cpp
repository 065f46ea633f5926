#include "nbm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include "nbm/errors.hpp"
#include "nbm/evaluation.hpp"

namespace nbm {

namespace {

constexpr std::uint64_t kEpochSeedStride = 0x9e3779b97f4a7c15ULL;

ConstraintMatrix build_constraint(SimKind kind, const RatingDataset& train_data,
                                  const CenteredView& view) {
    switch (kind) {
        case SimKind::ones: return ones(view.num_items());
        case SimKind::pearson: return pearson(view);
        case SimKind::cosine: return cosine(view);
        case SimKind::jaccard: return jaccard(train_data);
    }
    throw ConfigError("unknown similarity kind");
}

} // namespace

void TrainConfig::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (lambdas.empty()) throw ConfigError("at least one lambda is required");
    for (double l : lambdas) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambdas must be finite and >= 0");
    }
    if (eval_k < 1) throw ConfigError("eval_k must be >= 1");
    if (neighbor_limit_train && *neighbor_limit_train < 1) {
        throw ConfigError("neighbor_limit_train must be >= 1");
    }
}

std::vector<std::pair<int, int>> epoch_order(const CenteredView& view, std::uint64_t seed,
                                             int epoch, bool shuffle) {
    std::vector<std::pair<int, int>> order;
    order.reserve(view.num_ratings());
    for (int u = 0; u < view.num_users(); ++u) {
        for (const RatedEntry& e : view.rated_by_user(u)) order.emplace_back(u, e.index);
    }
    if (shuffle) {
        std::mt19937_64 rng(seed ^ (kEpochSeedStride * static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
    }
    return order;
}

double objective(const SimilarityLayers& layers, const CenteredView& view,
                 const std::vector<double>& lambdas, std::optional<int> neighbor_limit) {
    if (static_cast<int>(lambdas.size()) != layers.num_layers()) {
        throw ConfigError("expected one lambda per layer");
    }
    const bool mapped = layers.variant == Variant::tanh;
    double data = 0.0;
    for (int u = 0; u < view.num_users(); ++u) {
        for (const RatedEntry& e : view.rated_by_user(u)) {
            const ModelPrediction p = model_prediction(layers, view, u, e.index, neighbor_limit);
            const double target = mapped ? view.map_to_unit(e.rating) : e.rating;
            const double err = p.value - target;
            data += err * err;
        }
    }
    double reg = 0.0;
    const int dim = layers.dim();
    for (std::size_t t = 0; t < layers.layers.size(); ++t) {
        const SimilarityLayer& layer = layers.layers[t];
        double sq = 0.0;
        double l1 = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double* g = layer.gamma.row(i);
            const double* o = layer.omega.values.row(i);
            for (int j = 0; j < dim; ++j) {
                const double v = o[j] * g[j];
                sq += v * v;
                l1 += std::abs(g[j]);
            }
        }
        reg += lambdas[t] * 0.5 * sq - lambdas[t] * layers.l1_mu * l1;
    }
    return 0.5 * data + reg;
}

SgdStats sgd_epoch(SimilarityLayers& layers, const CenteredView& view, const TrainConfig& cfg,
                   int epoch) {
    SgdStats stats;
    const auto order = epoch_order(view, cfg.seed, epoch, cfg.shuffle);
    GradientSample sample;
    try {
        for (const auto& [u, i] : order) {
            prediction_gradient(layers, u, i, view, sample, cfg.neighbor_limit_train);
            stats.running_objective += 0.5 * sample.error * sample.error;
            if (sample.empty()) {
                ++stats.skipped;
                continue;
            }
            apply_update(layers, sample, cfg.beta, cfg.lambdas, cfg.reg_form);
            ++stats.updates;
        }
    } catch (const DivergenceError& e) {
        char msg[128];
        std::snprintf(msg, sizeof(msg), "training diverged at epoch %d: user %d, item %d", epoch,
                      e.user, e.item);
        throw DivergenceError(msg, epoch, e.user, e.item);
    }
    return stats;
}

TrainResult train(SimilarityLayers layers, const RatingDataset& train_data,
                  const RatingDataset& valid_data, const RatingDataset& test_data,
                  const TrainConfig& cfg, TrainHistory* partial_out, int eval_jobs) {
    cfg.validate();
    if (layers.layers.empty()) throw ConfigError("model has no layers");
    if (static_cast<int>(cfg.lambdas.size()) != layers.num_layers()) {
        throw ConfigError("expected one lambda per layer");
    }
    if (train_data.empty()) throw InputError("training partition is empty");
    if (valid_data.empty() || test_data.empty()) {
        throw InputError("validation and test partitions must be nonempty");
    }

    layers.variant = cfg.variant;
    const CenteredView view = center(train_data);
    for (const SimilarityLayer& layer : layers.layers) {
        if (layer.gamma.dim() != view.num_items() || layer.omega.dim() != view.num_items()) {
            throw MismatchError("model dimension does not match training data");
        }
    }

    TrainResult result;
    result.model = layers;
    double best_valid = std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        sgd_epoch(layers, view, cfg, epoch);
        const double obj = objective(layers, view, cfg.lambdas, cfg.neighbor_limit_train);
        if (!std::isfinite(obj)) {
            char msg[64];
            std::snprintf(msg, sizeof(msg), "objective diverged at epoch %d", epoch);
            throw DivergenceError(msg, epoch);
        }
        const double valid_rmse =
            evaluate_layers(layers, view, valid_data, cfg.eval_k, eval_jobs).rmse;
        const double test_rmse =
            evaluate_layers(layers, view, test_data, cfg.eval_k, eval_jobs).rmse;
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        result.history.epochs.push_back({epoch, obj, valid_rmse, test_rmse, seconds});
        if (valid_rmse < best_valid) {
            best_valid = valid_rmse;
            result.history.best_epoch = epoch;
            result.model = layers;
        }
        if (partial_out) *partial_out = result.history;
    }
    return result;
}

double slim_variant_objective(const SymMatrix& s, const CenteredView& view, double lambda_s,
                              double mu) {
    if (mu < 0.0) throw ConfigError("mu must be >= 0");
    SimilarityLayers tmp;
    tmp.l1_mu = mu;
    tmp.layers.push_back({s, ones(s.dim()), 1.0});
    return objective(tmp, view, {lambda_s});
}

ProfileKind parse_profile(const std::string& name) {
    if (name == "pcc") return ProfileKind::pcc;
    if (name == "cos") return ProfileKind::cos;
    if (name == "regsim") return ProfileKind::regsim;
    if (name == "slim") return ProfileKind::slim;
    if (name == "pnbm") return ProfileKind::pnbm;
    if (name == "mpnbm") return ProfileKind::mpnbm;
    if (name == "tanh-mpnbm" || name == "tanh_mpnbm") return ProfileKind::tanh_mpnbm;
    throw ConfigError("unknown profile: " + name +
                      " (expected pcc|cos|regsim|slim|pnbm|mpnbm|tanh-mpnbm)");
}

const char* profile_name(ProfileKind kind) {
    switch (kind) {
        case ProfileKind::pcc: return "pcc";
        case ProfileKind::cos: return "cos";
        case ProfileKind::regsim: return "regsim";
        case ProfileKind::slim: return "slim";
        case ProfileKind::pnbm: return "pnbm";
        case ProfileKind::mpnbm: return "mpnbm";
        case ProfileKind::tanh_mpnbm: return "tanh-mpnbm";
    }
    return "?";
}

Profile make_profile(ProfileKind kind) {
    Profile p;
    p.kind = kind;
    switch (kind) {
        case ProfileKind::pcc:
            p.trained = false;
            p.static_kind = SimKind::pearson;
            break;
        case ProfileKind::cos:
            p.trained = false;
            p.static_kind = SimKind::cosine;
            break;
        case ProfileKind::regsim:
        case ProfileKind::pnbm:
            p.config.beta = 0.1;
            p.config.lambdas = {0.01};
            break;
        case ProfileKind::slim:
            p.config.beta = 0.4;
            p.config.lambdas = {0.02};
            p.l1_mu = 0.01;
            break;
        case ProfileKind::mpnbm:
            p.config.beta = 0.2;
            p.config.lambdas = {0.05, 0.05, 0.05};
            p.phis = {3.0, 1.0, 1.0};
            p.omegas = {SimKind::ones, SimKind::pearson, SimKind::jaccard};
            break;
        case ProfileKind::tanh_mpnbm:
            p.config.beta = 0.4;
            p.config.lambdas = {0.05, 0.05, 0.05};
            p.config.variant = Variant::tanh;
            p.phis = {3.0, 1.0, 1.0};
            p.omegas = {SimKind::ones, SimKind::pearson, SimKind::jaccard};
            break;
    }
    return p;
}

Model build_model(const Profile& profile, const RatingDataset& train_data,
                  const CenteredView& view, std::uint64_t seed) {
    Model m;
    if (!profile.trained) {
        m.kind = Model::Kind::static_similarity;
        m.static_sim = build_constraint(profile.static_kind, train_data, view);
        return m;
    }
    if (profile.phis.empty() || profile.phis.size() != profile.omegas.size()) {
        throw ConfigError("profile layer structure requires matching phi and omega lists");
    }
    m.kind = Model::Kind::layered;
    m.layers.variant = profile.config.variant;
    m.layers.l1_mu = profile.l1_mu;
    for (std::size_t t = 0; t < profile.phis.size(); ++t) {
        SimilarityLayer layer;
        layer.phi = profile.phis[t];
        layer.gamma = init_gamma(view.num_items(), seed + t);
        layer.omega.kind = profile.omegas[t];
        m.layers.layers.push_back(std::move(layer));
    }
    rebuild_constraints(m.layers, train_data, view);
    return m;
}

Model make_baseline(ProfileKind kind, const RatingDataset& train_data, const CenteredView& view,
                    std::uint64_t seed) {
    return build_model(make_profile(kind), train_data, view, seed);
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path,
                       bool include_timing) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write history: " + path.string());
    out << "epoch,objective,valid_rmse,test_rmse,seconds\n";
    char line[160];
    for (const EpochStats& e : history.epochs) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.6f\n", e.epoch, e.objective,
                      e.valid_rmse, e.test_rmse, include_timing ? e.seconds : 0.0);
        out << line;
    }
    if (!out) throw InputError("cannot write history: " + path.string());
}

TrainHistory load_history_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open history: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "epoch,objective,valid_rmse,test_rmse,seconds") {
        throw InputError("not a history file: " + path.string());
    }
    TrainHistory history;
    double best = std::numeric_limits<double>::infinity();
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        EpochStats e;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &e.epoch, &e.objective, &e.valid_rmse,
                        &e.test_rmse, &e.seconds) != 5) {
            throw InputError("malformed history line " + std::to_string(line_no) + ": " +
                             path.string());
        }
        history.epochs.push_back(e);
        if (e.valid_rmse < best) {
            best = e.valid_rmse;
            history.best_epoch = e.epoch;
        }
    }
    return history;
}

} // namespace nbm
