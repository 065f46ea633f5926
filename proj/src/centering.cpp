#include "nbm/centering.hpp"

#include <algorithm>

#include "nbm/errors.hpp"

namespace nbm {

CenteredView::CenteredView(const RatingDataset& train) {
    if (train.empty()) throw InputError("cannot center an empty training partition");

    num_users_ = train.num_users;
    num_items_ = train.num_items;
    num_ratings_ = train.size();
    scale_min_ = train.scale_min;
    scale_max_ = train.scale_max;

    std::vector<double> sums(num_items_, 0.0);
    std::vector<std::size_t> counts(num_items_, 0);
    double total = 0.0;
    for (const Triplet& t : train.triplets) {
        sums[t.item] += t.rating;
        counts[t.item] += 1;
        total += t.rating;
    }
    global_mean_ = total / static_cast<double>(train.size());

    item_means_.resize(num_items_);
    for (int i = 0; i < num_items_; ++i)
        item_means_[i] = counts[i] > 0 ? sums[i] / static_cast<double>(counts[i]) : global_mean_;

    by_user_.resize(num_users_);
    by_item_.resize(num_items_);
    bool first = true;
    for (const Triplet& t : train.triplets) {
        const double centered = t.rating - item_means_[t.item];
        by_user_[t.user].push_back({t.item, centered});
        by_item_[t.item].push_back({t.user, centered});
        if (first) {
            map_max_ = map_min_ = centered;
            first = false;
        } else {
            map_max_ = std::max(map_max_, centered);
            map_min_ = std::min(map_min_, centered);
        }
    }
    for (auto& row : by_user_)
        std::sort(row.begin(), row.end(),
                  [](const RatedEntry& a, const RatedEntry& b) { return a.index < b.index; });
    for (auto& col : by_item_)
        std::sort(col.begin(), col.end(),
                  [](const RatedEntry& a, const RatedEntry& b) { return a.index < b.index; });
}

double CenteredView::map_to_unit(double centered) const {
    if (map_max_ <= map_min_)
        throw InputError("degenerate centered-rating range: map_max == map_min");
    const double mid = (map_max_ + map_min_) / 2.0;
    return (centered - mid) / (map_max_ - mid);
}

double CenteredView::map_from_unit(double unit) const {
    if (map_max_ <= map_min_)
        throw InputError("degenerate centered-rating range: map_max == map_min");
    const double mid = (map_max_ + map_min_) / 2.0;
    return mid + unit * (map_max_ - mid);
}

CenteredView center(const RatingDataset& train) { return CenteredView(train); }

} // namespace nbm
