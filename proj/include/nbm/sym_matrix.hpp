#pragma once

#include <cstddef>
#include <vector>

namespace nbm {

/// Dense M x M symmetric matrix. Stored as a full square so row access is
/// contiguous; writes go through set() which mirrors (i,j) and (j,i).
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(int dim, double fill = 0.0)
        : dim_(dim), data_(static_cast<std::size_t>(dim) * dim, fill) {}

    int dim() const { return dim_; }

    double operator()(int i, int j) const { return data_[idx(i, j)]; }

    void set(int i, int j, double v) {
        data_[idx(i, j)] = v;
        data_[idx(j, i)] = v;
    }

    const double* row(int i) const { return data_.data() + idx(i, 0); }

    const std::vector<double>& data() const { return data_; }

    friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

private:
    std::size_t idx(int i, int j) const {
        return static_cast<std::size_t>(i) * dim_ + j;
    }

    int dim_ = 0;
    std::vector<double> data_;
};

} // namespace nbm
