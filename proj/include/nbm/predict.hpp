#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <span>
#include <vector>

#include "nbm/centering.hpp"

namespace nbm {

/// Numerator and denominator of the neighborhood quotient
/// sum_j s_ij * r_uj / sum_j |s_ij|.
struct Quotient {
    double num = 0.0;
    double den = 0.0;

    bool empty() const { return den == 0.0; }
    double value() const { return den == 0.0 ? 0.0 : num / den; }
};

/// A neighbor selected for one prediction: item id, its similarity to the
/// predicted item and the user's (centered or unit-mapped) rating of it.
struct Neighbor {
    int item;
    double sim;
    double rating;
};

/// Gathers user's rated items j != exclude_item with their similarities
/// and accumulates the prediction quotient. When neighbor_limit is set,
/// only the top-k neighbors by |s| (ties by ascending index) contribute.
/// Accumulation always runs in ascending item order so results do not
/// depend on the selection pass. `mapped` switches the consumed ratings
/// to the unit-mapped values used by the tanh variant. When `keep` is
/// given it receives the contributing neighbors in ascending item order.
template <typename SimFn>
Quotient neighborhood_quotient(SimFn&& sim, const CenteredView& view, int user, int exclude_item,
                               std::optional<int> neighbor_limit, bool mapped,
                               std::vector<Neighbor>* keep = nullptr) {
    const auto& rated = view.rated_by_user(user);
    Quotient q;

    const bool need_list = keep != nullptr ||
                           (neighbor_limit && rated.size() > static_cast<std::size_t>(*neighbor_limit));
    if (!need_list) {
        for (const RatedEntry& e : rated) {
            if (e.index == exclude_item) continue;
            const double s = sim(e.index);
            const double r = mapped ? view.map_to_unit(e.rating) : e.rating;
            q.num += s * r;
            q.den += std::abs(s);
        }
        return q;
    }

    std::vector<Neighbor> local;
    std::vector<Neighbor>& list = keep ? *keep : local;
    list.clear();
    list.reserve(rated.size());
    for (const RatedEntry& e : rated) {
        if (e.index == exclude_item) continue;
        const double r = mapped ? view.map_to_unit(e.rating) : e.rating;
        list.push_back({e.index, sim(e.index), r});
    }
    if (neighbor_limit && list.size() > static_cast<std::size_t>(*neighbor_limit)) {
        const int k = *neighbor_limit;
        std::partial_sort(list.begin(), list.begin() + k, list.end(),
                          [](const Neighbor& a, const Neighbor& b) {
                              const double aa = std::abs(a.sim), ab = std::abs(b.sim);
                              if (aa != ab) return aa > ab;
                              return a.item < b.item;
                          });
        list.resize(k);
        std::sort(list.begin(), list.end(),
                  [](const Neighbor& a, const Neighbor& b) { return a.item < b.item; });
    }
    for (const Neighbor& nb : list) {
        q.num += nb.sim * nb.rating;
        q.den += std::abs(nb.sim);
    }
    return q;
}

/// Centered-space prediction; 0 when the neighborhood is empty or all
/// selected similarities are zero (the caller falls back to the item mean).
double predict_centered(std::span<const double> sim_row, int user, const CenteredView& view,
                        int exclude_item, std::optional<int> neighbor_limit = {});

/// Prediction on the dataset scale: item mean plus the centered quotient,
/// clamped to [scale_min, scale_max] for reporting.
double predict_rating(std::span<const double> sim_row, int user, const CenteredView& view,
                      int item, std::optional<int> neighbor_limit = {});

/// Tanh-bounded prediction over unit-mapped ratings; strictly inside
/// (-1, 1), with h(0) = 0 on an empty neighborhood.
double predict_tanh(std::span<const double> sim_row, int user, const CenteredView& view,
                    int exclude_item, std::optional<int> neighbor_limit = {});

inline double clamp_to_scale(double rating, const CenteredView& view) {
    return std::clamp(rating, view.scale_min(), view.scale_max());
}

} // namespace nbm
