#include "nbm/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "nbm/errors.hpp"

namespace nbm {

SimKind parse_sim_kind(const std::string& name) {
    if (name == "ones") return SimKind::ones;
    if (name == "pearson") return SimKind::pearson;
    if (name == "cosine") return SimKind::cosine;
    if (name == "jaccard") return SimKind::jaccard;
    throw ConfigError("unknown similarity kind: " + name);
}

std::string sim_kind_name(SimKind k) {
    switch (k) {
        case SimKind::ones: return "ones";
        case SimKind::pearson: return "pearson";
        case SimKind::cosine: return "cosine";
        case SimKind::jaccard: return "jaccard";
    }
    throw ConfigError("bad similarity kind value");
}

namespace {

// Per-pair running sums over co-raters, packed over the strict upper
// triangle (i < j).
struct PairAcc {
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    std::int32_t n = 0;
};

std::size_t pair_index(int i, int j, int dim) {
    // i < j
    return static_cast<std::size_t>(i) * dim - static_cast<std::size_t>(i) * (i + 1) / 2 +
           (j - i - 1);
}

std::vector<PairAcc> accumulate_pairs(const CenteredView& view) {
    const int m = view.num_items();
    std::vector<PairAcc> acc(static_cast<std::size_t>(m) * (m - 1) / 2);
    for (int u = 0; u < view.num_users(); ++u) {
        const auto& rated = view.rated_by_user(u);
        for (std::size_t a = 0; a < rated.size(); ++a) {
            const int i = rated[a].index;
            const double x = rated[a].rating;
            for (std::size_t b = a + 1; b < rated.size(); ++b) {
                const int j = rated[b].index;
                const double y = rated[b].rating;
                PairAcc& p = acc[pair_index(i, j, m)];
                p.sx += x;
                p.sy += y;
                p.sxy += x * y;
                p.sxx += x * x;
                p.syy += y * y;
                p.n += 1;
            }
        }
    }
    return acc;
}

} // namespace

ConstraintMatrix pearson(const CenteredView& view) {
    const int m = view.num_items();
    ConstraintMatrix out{SymMatrix(m), SimKind::pearson};
    if (m < 2) {
        if (m == 1) out.values.set(0, 0, 1.0);
        return out;
    }
    const auto acc = accumulate_pairs(view);
    for (int i = 0; i < m; ++i) {
        out.values.set(i, i, 1.0);
        for (int j = i + 1; j < m; ++j) {
            const PairAcc& p = acc[pair_index(i, j, m)];
            double r = 0.0;
            if (p.n >= 2) {
                const double n = p.n;
                const double cov = n * p.sxy - p.sx * p.sy;
                const double var_x = n * p.sxx - p.sx * p.sx;
                const double var_y = n * p.syy - p.sy * p.sy;
                if (var_x > 0 && var_y > 0) {
                    r = cov / std::sqrt(var_x * var_y);
                    r = std::clamp(r, -1.0, 1.0);
                }
            }
            out.values.set(i, j, r);
        }
    }
    return out;
}

ConstraintMatrix cosine(const CenteredView& view) {
    const int m = view.num_items();
    ConstraintMatrix out{SymMatrix(m), SimKind::cosine};
    if (m < 2) {
        if (m == 1) out.values.set(0, 0, 1.0);
        return out;
    }
    const auto acc = accumulate_pairs(view);
    for (int i = 0; i < m; ++i) {
        out.values.set(i, i, 1.0);
        for (int j = i + 1; j < m; ++j) {
            const PairAcc& p = acc[pair_index(i, j, m)];
            double c = 0.0;
            if (p.n >= 2 && p.sxx > 0 && p.syy > 0) {
                c = p.sxy / std::sqrt(p.sxx * p.syy);
                c = std::clamp(c, -1.0, 1.0);
            }
            out.values.set(i, j, c);
        }
    }
    return out;
}

ConstraintMatrix jaccard(const RatingDataset& train) {
    const int m = train.num_items;
    ConstraintMatrix out{SymMatrix(m), SimKind::jaccard};
    if (m < 1) throw ConfigError("jaccard needs at least one item");

    std::vector<std::vector<int>> items_by_user(train.num_users);
    std::vector<std::int64_t> item_count(m, 0);
    for (const Triplet& t : train.triplets) {
        items_by_user[t.user].push_back(t.item);
        item_count[t.item] += 1;
    }
    for (auto& items : items_by_user) std::sort(items.begin(), items.end());

    std::vector<std::int32_t> co(static_cast<std::size_t>(m) * (m - 1) / 2, 0);
    for (const auto& items : items_by_user)
        for (std::size_t a = 0; a < items.size(); ++a)
            for (std::size_t b = a + 1; b < items.size(); ++b)
                co[pair_index(items[a], items[b], m)] += 1;

    for (int i = 0; i < m; ++i) {
        out.values.set(i, i, 1.0);
        for (int j = i + 1; j < m; ++j) {
            const std::int64_t inter = co[pair_index(i, j, m)];
            const std::int64_t uni = item_count[i] + item_count[j] - inter;
            out.values.set(i, j, uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0);
        }
    }
    return out;
}

ConstraintMatrix ones(int num_items) {
    if (num_items < 1) throw ConfigError("ones matrix needs at least one item");
    return {SymMatrix(num_items, 1.0), SimKind::ones};
}

std::vector<int> top_k(std::span<const double> sim_row, int k,
                       std::span<const std::uint8_t> rated_mask, int exclude) {
    if (k < 1) throw ConfigError("top_k requires k >= 1");
    std::vector<int> candidates;
    for (int j = 0; j < static_cast<int>(sim_row.size()); ++j)
        if (j != exclude && rated_mask[j]) candidates.push_back(j);

    const auto rank = [&](int a, int b) {
        const double aa = std::abs(sim_row[a]);
        const double ab = std::abs(sim_row[b]);
        if (aa != ab) return aa > ab;
        return a < b;
    };
    if (static_cast<std::size_t>(k) < candidates.size()) {
        std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(), rank);
        candidates.resize(k);
    } else {
        std::sort(candidates.begin(), candidates.end(), rank);
    }
    return candidates;
}

namespace {
constexpr char kSimMagic[8] = {'N', 'B', 'M', 'S', 'I', 'M', '0', '1'};
}

void save_constraint_matrix(const ConstraintMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write matrix file: " + path.string());
    out.write(kSimMagic, sizeof(kSimMagic));
    const std::int32_t dim = m.dim();
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    const std::uint8_t kind = static_cast<std::uint8_t>(m.kind);
    out.write(reinterpret_cast<const char*>(&kind), sizeof(kind));
    for (int i = 0; i < m.dim(); ++i)
        out.write(reinterpret_cast<const char*>(m.values.row(i)), sizeof(double) * (i + 1));
    if (!out) throw InputError("write failed: " + path.string());
}

ConstraintMatrix load_constraint_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open matrix file: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kSimMagic, sizeof(magic)) != 0)
        throw InputError("bad matrix file magic: " + path.string());
    std::int32_t dim = 0;
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    std::uint8_t kind = 0;
    in.read(reinterpret_cast<char*>(&kind), sizeof(kind));
    if (!in || dim < 1 || kind > 3) throw InputError("corrupt matrix header: " + path.string());
    ConstraintMatrix m{SymMatrix(dim), static_cast<SimKind>(kind)};
    std::vector<double> rowbuf(dim);
    for (int i = 0; i < dim; ++i) {
        in.read(reinterpret_cast<char*>(rowbuf.data()), sizeof(double) * (i + 1));
        if (!in) throw InputError("truncated matrix file: " + path.string());
        for (int j = 0; j <= i; ++j) m.values.set(i, j, rowbuf[j]);
    }
    return m;
}

void write_constraint_matrix_csv(const ConstraintMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write csv file: " + path.string());
    char buf[40];
    for (int i = 0; i < m.dim(); ++i) {
        for (int j = 0; j < m.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.at(i, j));
            out << buf << (j + 1 < m.dim() ? "," : "\n");
        }
    }
}

} // namespace nbm
