#include "nbm/predict.hpp"

namespace nbm {

namespace {

struct RowSim {
    std::span<const double> row;
    double operator()(int j) const { return row[static_cast<std::size_t>(j)]; }
};

} // namespace

double predict_centered(std::span<const double> sim_row, int user, const CenteredView& view,
                        int exclude_item, std::optional<int> neighbor_limit) {
    return neighborhood_quotient(RowSim{sim_row}, view, user, exclude_item, neighbor_limit,
                                 /*mapped=*/false)
        .value();
}

double predict_rating(std::span<const double> sim_row, int user, const CenteredView& view,
                      int item, std::optional<int> neighbor_limit) {
    const double raw =
        view.item_mean(item) + predict_centered(sim_row, user, view, item, neighbor_limit);
    return clamp_to_scale(raw, view);
}

double predict_tanh(std::span<const double> sim_row, int user, const CenteredView& view,
                    int exclude_item, std::optional<int> neighbor_limit) {
    const Quotient q = neighborhood_quotient(RowSim{sim_row}, view, user, exclude_item,
                                             neighbor_limit, /*mapped=*/true);
    return std::tanh(q.value());
}

} // namespace nbm
