#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nbm/centering.hpp"
#include "nbm/dataset.hpp"
#include "nbm/sym_matrix.hpp"

namespace nbm {

enum class SimKind : std::uint8_t { ones = 0, pearson = 1, cosine = 2, jaccard = 3 };

SimKind parse_sim_kind(const std::string& name);
std::string sim_kind_name(SimKind k);

/// A fixed feature-derived similarity matrix. Used both as a static
/// neighborhood model and as a layer constraint.
struct ConstraintMatrix {
    SymMatrix values;
    SimKind kind = SimKind::ones;

    int dim() const { return values.dim(); }
    double at(int i, int j) const { return values(i, j); }
    std::span<const double> row(int i) const { return {values.row(i), static_cast<std::size_t>(values.dim())}; }
};

/// Pearson correlation over users who co-rated each item pair, computed on
/// centered values. Pairs with fewer than 2 co-raters (or zero variance)
/// get 0. Diagonal is set to 1 but never consulted for prediction.
ConstraintMatrix pearson(const CenteredView& view);

/// Cosine of the co-rated centered vectors; zero-norm pairs and pairs with
/// fewer than 2 co-raters get 0.
ConstraintMatrix cosine(const CenteredView& view);

/// |U_i intersect U_j| / |U_i union U_j| over the users who rated each item.
ConstraintMatrix jaccard(const RatingDataset& train);

/// All-ones matrix: the identity element of Hadamard-gated layers.
ConstraintMatrix ones(int num_items);

/// Up to k candidate indices j != exclude with rated_mask[j] set, ranked by
/// descending |sim_row[j]| with ties broken by ascending index.
std::vector<int> top_k(std::span<const double> sim_row, int k,
                       std::span<const std::uint8_t> rated_mask, int exclude);

/// Flat binary layout: 8-byte magic, i32 dim, u8 kind, row-major lower
/// triangle (diagonal included) of f64. Byte-exact round trip.
void save_constraint_matrix(const ConstraintMatrix& m, const std::filesystem::path& path);
ConstraintMatrix load_constraint_matrix(const std::filesystem::path& path);

/// Full square CSV dump for inspection.
void write_constraint_matrix_csv(const ConstraintMatrix& m, const std::filesystem::path& path);

} // namespace nbm
