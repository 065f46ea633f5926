#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nbm/centering.hpp"
#include "nbm/similarity.hpp"
#include "nbm/sym_matrix.hpp"

namespace nbm {

/// Output transform of the layered model: `linear` predicts the centered
/// quotient directly, `tanh` maps ratings to [-1, 1] first and bounds the
/// prediction through tanh.
enum class Variant : std::uint8_t { linear = 0, tanh = 1 };

Variant parse_variant(const std::string& name);
const char* variant_name(Variant v);

/// One descriptor layer: a learned symmetric matrix gamma with zero
/// diagonal, a fixed constraint matrix omega of the same dimension and a
/// fixed importance weight phi.
struct SimilarityLayer {
    SymMatrix gamma;
    ConstraintMatrix omega;
    double phi = 1.0;
};

/// The layered similarity model. The effective similarity between items
/// i and j is sum_t phi_t * (omega_t(i,j) * gamma_t(i,j)). l1_mu, when
/// non-zero, adds a pull of the effective weights toward +/- l1_mu to the
/// regularization gradient (sparsity-inducing prior).
struct SimilarityLayers {
    std::vector<SimilarityLayer> layers;
    Variant variant = Variant::linear;
    double l1_mu = 0.0;

    int dim() const { return layers.empty() ? 0 : layers.front().gamma.dim(); }
    int num_layers() const { return static_cast<int>(layers.size()); }

    double effective(int i, int j) const {
        double s = 0.0;
        for (const SimilarityLayer& layer : layers) {
            s += layer.phi * (layer.omega.values(i, j) * layer.gamma(i, j));
        }
        return s;
    }

    std::vector<double> effective_row(int i) const;
};

/// Random initial gamma: entries drawn independently from U[0, 0.01) in
/// row-major lower-triangle order, mirrored to keep the matrix symmetric,
/// diagonal fixed at zero.
SymMatrix init_gamma(int dim, std::uint64_t seed);

/// One training sample's error signal and the partial derivatives of the
/// prediction with respect to every gamma entry it touched.
struct GradientSample {
    int user = -1;
    int item = -1;
    double error = 0.0;      // prediction - actual, in model space
    double prediction = 0.0; // model-space prediction (centered or tanh)
    std::vector<int> support;
    std::vector<std::vector<double>> dpred_dgamma; // [layer][support idx]

    bool empty() const { return support.empty(); }
};

/// Evaluates the model at (user, item) over the user's other rated items
/// and fills `out` with d prediction / d gamma_t(i,j) for every selected
/// neighbor j. A zero-denominator neighborhood produces an empty sample.
/// The error is filled from the user's training rating of the item when
/// present (0 otherwise, with the gradient rows still valid).
void prediction_gradient(const SimilarityLayers& layers, int user, int item,
                         const CenteredView& view, GradientSample& out,
                         std::optional<int> neighbor_limit = {});

/// Model-space prediction at (user, item): the centered quotient for the
/// linear variant, tanh of the unit-mapped quotient for the tanh variant.
/// `empty` marks a zero-denominator neighborhood (value 0; callers fall
/// back to the item mean on the rating scale).
struct ModelPrediction {
    double value = 0.0;
    bool empty = true;
};

ModelPrediction model_prediction(const SimilarityLayers& layers, const CenteredView& view,
                                 int user, int item, std::optional<int> neighbor_limit = {});

/// How the regularization gradient weighs a gamma entry: `alg1` uses
/// omega * gamma, `eq12` uses omega^2 * gamma.
enum class RegForm : std::uint8_t { alg1 = 0, eq12 = 1 };

RegForm parse_reg_form(const std::string& name);
const char* reg_form_name(RegForm form);

/// Applies one stochastic gradient step to every gamma entry in the
/// sample's support, mirroring each write to (j, i). Throws
/// DivergenceError when an updated entry is no longer finite.
void apply_update(SimilarityLayers& layers, const GradientSample& sample, double beta,
                  const std::vector<double>& lambdas, RegForm reg_form);

/// Checkpoint serialization: dimension, variant, sparsity weight,
/// per-layer phi and omega kind, then each gamma's lower triangle.
/// Loading restores gammas and layer metadata; omega values must be
/// rebuilt from training data.
void save_checkpoint(const SimilarityLayers& layers, const std::string& path);
SimilarityLayers load_checkpoint(const std::string& path);

/// Rebuilds every layer's omega of the given kind from the training data.
void rebuild_constraints(SimilarityLayers& layers, const RatingDataset& train,
                         const CenteredView& view);

} // namespace nbm
