#include "nbm/mlsd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

#include "nbm/errors.hpp"
#include "nbm/predict.hpp"

namespace nbm {

namespace {

constexpr char kCheckpointMagic[8] = {'N', 'B', 'M', 'C', 'K', 'P', '0', '1'};

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in) throw InputError("truncated checkpoint: " + path);
}

} // namespace

Variant parse_variant(const std::string& name) {
    if (name == "linear") return Variant::linear;
    if (name == "tanh") return Variant::tanh;
    throw ConfigError("unknown variant: " + name + " (expected linear|tanh)");
}

const char* variant_name(Variant v) {
    return v == Variant::linear ? "linear" : "tanh";
}

RegForm parse_reg_form(const std::string& name) {
    if (name == "alg1") return RegForm::alg1;
    if (name == "eq12") return RegForm::eq12;
    throw ConfigError("unknown regularization form: " + name + " (expected alg1|eq12)");
}

const char* reg_form_name(RegForm form) {
    return form == RegForm::alg1 ? "alg1" : "eq12";
}

std::vector<double> SimilarityLayers::effective_row(int i) const {
    std::vector<double> out(static_cast<std::size_t>(dim()), 0.0);
    for (const SimilarityLayer& layer : layers) {
        const double* g = layer.gamma.row(i);
        const double* o = layer.omega.values.row(i);
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] += layer.phi * (o[j] * g[j]);
        }
    }
    return out;
}

SymMatrix init_gamma(int dim, std::uint64_t seed) {
    if (dim < 1) throw ConfigError("gamma dimension must be positive");
    SymMatrix gamma(dim, 0.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 0.01);
    for (int i = 1; i < dim; ++i) {
        for (int j = 0; j < i; ++j) {
            gamma.set(i, j, dist(rng));
        }
    }
    return gamma;
}

void prediction_gradient(const SimilarityLayers& layers, int user, int item,
                         const CenteredView& view, GradientSample& out,
                         std::optional<int> neighbor_limit) {
    const int T = layers.num_layers();
    out.user = user;
    out.item = item;
    out.error = 0.0;
    out.prediction = 0.0;
    out.support.clear();
    out.dpred_dgamma.resize(static_cast<std::size_t>(T));
    for (auto& row : out.dpred_dgamma) row.clear();

    for (const SimilarityLayer& layer : layers.layers) {
        if (layer.omega.dim() != layers.dim()) {
            throw MismatchError("constraint matrix not initialized for gradient evaluation");
        }
    }

    struct LayerRows {
        const double* gamma;
        const double* omega;
        double phi;
    };
    thread_local std::vector<LayerRows> rows;
    rows.clear();
    for (const SimilarityLayer& layer : layers.layers) {
        rows.push_back({layer.gamma.row(item), layer.omega.values.row(item), layer.phi});
    }
    const auto sim = [](int j) -> double {
        double s = 0.0;
        for (const LayerRows& lr : rows) s += lr.phi * (lr.omega[j] * lr.gamma[j]);
        return s;
    };

    const bool mapped = layers.variant == Variant::tanh;
    thread_local std::vector<Neighbor> neighbors;
    const Quotient q =
        neighborhood_quotient(sim, view, user, item, neighbor_limit, mapped, &neighbors);

    double actual = 0.0;
    bool have_actual = false;
    {
        const auto& rated = view.rated_by_user(user);
        const auto it = std::lower_bound(
            rated.begin(), rated.end(), item,
            [](const RatedEntry& e, int target) { return e.index < target; });
        if (it != rated.end() && it->index == item) {
            actual = mapped ? view.map_to_unit(it->rating) : it->rating;
            have_actual = true;
        }
    }

    if (q.den == 0.0) {
        out.prediction = mapped ? std::tanh(0.0) : 0.0;
        if (have_actual) out.error = out.prediction - actual;
        return;
    }

    const double z = q.num / q.den;
    double chain = 1.0;
    if (mapped) {
        out.prediction = std::tanh(z);
        chain = 1.0 - out.prediction * out.prediction;
    } else {
        out.prediction = z;
    }
    if (have_actual) out.error = out.prediction - actual;

    const double den_sq = q.den * q.den;
    out.support.reserve(neighbors.size());
    for (auto& row : out.dpred_dgamma) row.reserve(neighbors.size());
    for (const Neighbor& nb : neighbors) {
        const double dds = chain * ((nb.rating * q.den - sign(nb.sim) * q.num) / den_sq);
        out.support.push_back(nb.item);
        for (int t = 0; t < T; ++t) {
            out.dpred_dgamma[static_cast<std::size_t>(t)].push_back(
                layers.layers[static_cast<std::size_t>(t)].phi *
                (rows[static_cast<std::size_t>(t)].omega[nb.item] * dds));
        }
    }
}

ModelPrediction model_prediction(const SimilarityLayers& layers, const CenteredView& view,
                                 int user, int item, std::optional<int> neighbor_limit) {
    for (const SimilarityLayer& layer : layers.layers) {
        if (layer.omega.dim() != layers.dim()) {
            throw MismatchError("constraint matrix not initialized for prediction");
        }
    }

    struct LayerRows {
        const double* gamma;
        const double* omega;
        double phi;
    };
    thread_local std::vector<LayerRows> rows;
    rows.clear();
    for (const SimilarityLayer& layer : layers.layers) {
        rows.push_back({layer.gamma.row(item), layer.omega.values.row(item), layer.phi});
    }
    const auto sim = [](int j) -> double {
        double s = 0.0;
        for (const LayerRows& lr : rows) s += lr.phi * (lr.omega[j] * lr.gamma[j]);
        return s;
    };

    const bool mapped = layers.variant == Variant::tanh;
    const Quotient q = neighborhood_quotient(sim, view, user, item, neighbor_limit, mapped);
    ModelPrediction out;
    out.empty = q.den == 0.0;
    const double z = q.value();
    out.value = mapped ? std::tanh(z) : z;
    return out;
}

void apply_update(SimilarityLayers& layers, const GradientSample& sample, double beta,
                  const std::vector<double>& lambdas, RegForm reg_form) {
    const int T = layers.num_layers();
    if (static_cast<int>(lambdas.size()) != T) {
        throw ConfigError("expected one lambda per layer");
    }
    const int i = sample.item;
    for (int t = 0; t < T; ++t) {
        SimilarityLayer& layer = layers.layers[static_cast<std::size_t>(t)];
        const auto& grads = sample.dpred_dgamma[static_cast<std::size_t>(t)];
        const double lambda = lambdas[static_cast<std::size_t>(t)];
        for (std::size_t idx = 0; idx < sample.support.size(); ++idx) {
            const int j = sample.support[idx];
            const double cur = layer.gamma(i, j);
            const double om = layer.omega.values(i, j);
            double reg = reg_form == RegForm::alg1 ? om * cur : om * om * cur;
            if (layers.l1_mu != 0.0) reg -= layers.l1_mu * sign(cur);
            const double updated = cur - beta * sample.error * grads[idx] - beta * lambda * reg;
            if (!std::isfinite(updated)) {
                char msg[96];
                std::snprintf(msg, sizeof(msg),
                              "non-finite similarity update at user %d, item %d", sample.user, i);
                throw DivergenceError(msg, -1, sample.user, i);
            }
            layer.gamma.set(i, j, updated);
        }
    }
}

void save_checkpoint(const SimilarityLayers& layers, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write checkpoint: " + path);
    const std::int32_t dim = layers.dim();
    const std::int32_t T = layers.num_layers();
    const std::uint8_t variant = static_cast<std::uint8_t>(layers.variant);
    write_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
    write_bytes(out, &dim, sizeof(dim));
    write_bytes(out, &T, sizeof(T));
    write_bytes(out, &variant, sizeof(variant));
    write_bytes(out, &layers.l1_mu, sizeof(layers.l1_mu));
    for (const SimilarityLayer& layer : layers.layers) {
        const std::uint8_t kind = static_cast<std::uint8_t>(layer.omega.kind);
        write_bytes(out, &layer.phi, sizeof(layer.phi));
        write_bytes(out, &kind, sizeof(kind));
    }
    for (const SimilarityLayer& layer : layers.layers) {
        for (int i = 0; i < dim; ++i) {
            write_bytes(out, layer.gamma.row(i), sizeof(double) * static_cast<std::size_t>(i + 1));
        }
    }
    if (!out) throw InputError("cannot write checkpoint: " + path);
}

SimilarityLayers load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path);
    char magic[8];
    read_bytes(in, magic, sizeof(magic), path);
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw InputError("not a checkpoint file: " + path);
    }
    std::int32_t dim = 0;
    std::int32_t T = 0;
    std::uint8_t variant = 0;
    read_bytes(in, &dim, sizeof(dim), path);
    read_bytes(in, &T, sizeof(T), path);
    read_bytes(in, &variant, sizeof(variant), path);
    if (dim < 1 || T < 1 || variant > 1) throw InputError("corrupt checkpoint: " + path);

    SimilarityLayers layers;
    layers.variant = static_cast<Variant>(variant);
    read_bytes(in, &layers.l1_mu, sizeof(layers.l1_mu), path);
    if (!std::isfinite(layers.l1_mu) || layers.l1_mu < 0.0) {
        throw InputError("corrupt checkpoint: " + path);
    }
    layers.layers.resize(static_cast<std::size_t>(T));
    for (SimilarityLayer& layer : layers.layers) {
        std::uint8_t kind = 0;
        read_bytes(in, &layer.phi, sizeof(layer.phi), path);
        read_bytes(in, &kind, sizeof(kind), path);
        if (kind > static_cast<std::uint8_t>(SimKind::jaccard)) {
            throw InputError("corrupt checkpoint: " + path);
        }
        layer.omega.kind = static_cast<SimKind>(kind);
    }
    std::vector<double> row(static_cast<std::size_t>(dim));
    for (SimilarityLayer& layer : layers.layers) {
        layer.gamma = SymMatrix(dim, 0.0);
        for (int i = 0; i < dim; ++i) {
            read_bytes(in, row.data(), sizeof(double) * static_cast<std::size_t>(i + 1), path);
            for (int j = 0; j <= i; ++j) layer.gamma.set(i, j, row[static_cast<std::size_t>(j)]);
        }
    }
    return layers;
}

void rebuild_constraints(SimilarityLayers& layers, const RatingDataset& train,
                         const CenteredView& view) {
    if (layers.dim() != view.num_items()) {
        char msg[96];
        std::snprintf(msg, sizeof(msg),
                      "checkpoint dimension %d does not match training data (%d items)",
                      layers.dim(), view.num_items());
        throw MismatchError(msg);
    }
    for (SimilarityLayer& layer : layers.layers) {
        switch (layer.omega.kind) {
            case SimKind::ones: layer.omega = ones(view.num_items()); break;
            case SimKind::pearson: layer.omega = pearson(view); break;
            case SimKind::cosine: layer.omega = cosine(view); break;
            case SimKind::jaccard: layer.omega = jaccard(train); break;
        }
    }
}

} // namespace nbm
