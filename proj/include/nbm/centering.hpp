#pragma once

#include <vector>

#include "nbm/dataset.hpp"

namespace nbm {

/// One (neighbor, centered rating) entry in an adjacency list.
struct RatedEntry {
    int index;      // item id in by_user lists, user id in by_item lists
    double rating;  // centered value r_ui = r'_ui - mean(item)
};

/// Item-mean-centered view of a training partition with dual sparse
/// indexes. Immutable after construction; safe to share across threads.
class CenteredView {
public:
    explicit CenteredView(const RatingDataset& train);

    int num_users() const { return num_users_; }
    int num_items() const { return num_items_; }
    std::size_t num_ratings() const { return num_ratings_; }

    double item_mean(int item) const { return item_means_[item]; }
    const std::vector<double>& item_means() const { return item_means_; }
    double global_mean() const { return global_mean_; }

    /// Entries sorted by ascending neighbor index.
    const std::vector<RatedEntry>& rated_by_user(int user) const { return by_user_[user]; }
    const std::vector<RatedEntry>& raters_of_item(int item) const { return by_item_[item]; }

    double map_max() const { return map_max_; }
    double map_min() const { return map_min_; }

    double scale_min() const { return scale_min_; }
    double scale_max() const { return scale_max_; }

    /// Affine map of a centered rating onto [-1, 1]; map_max -> 1,
    /// map_min -> -1. Throws InputError when the range is degenerate.
    double map_to_unit(double centered) const;
    /// Inverse of map_to_unit.
    double map_from_unit(double unit) const;

private:
    int num_users_ = 0;
    int num_items_ = 0;
    std::size_t num_ratings_ = 0;
    double global_mean_ = 0.0;
    double map_max_ = 0.0;
    double map_min_ = 0.0;
    double scale_min_ = 0.0;
    double scale_max_ = 0.0;
    std::vector<double> item_means_;
    std::vector<std::vector<RatedEntry>> by_user_;
    std::vector<std::vector<RatedEntry>> by_item_;
};

/// Build the centered view from training ratings only. Items without
/// training ratings get the global training mean.
CenteredView center(const RatingDataset& train);

} // namespace nbm
