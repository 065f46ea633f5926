#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nbm {

struct Triplet {
    int user;
    int item;
    double rating;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

enum class FileFormat { tsv, double_colon };

FileFormat parse_format(const std::string& name);
std::string format_name(FileFormat f);

/// Sparse explicit-feedback rating data. User and item ids are contiguous
/// in [0, num_users) and [0, num_items); each (user, item) pair appears
/// at most once.
struct RatingDataset {
    std::vector<Triplet> triplets;
    int num_users = 0;
    int num_items = 0;
    double scale_min = 0.0;
    double scale_max = 0.0;

    std::size_t size() const { return triplets.size(); }
    bool empty() const { return triplets.empty(); }
    double density() const;

    /// Same universe (N, M, scale), different triplets. Used when carving
    /// partitions out of a loaded dataset.
    RatingDataset with_triplets(std::vector<Triplet> t) const;
};

/// Fractions of the triplet shuffle that go to train/validation/test.
struct SplitSpec {
    double train_frac = 0.85;
    double valid_frac = 0.05;
    double test_frac = 0.10;
    std::uint64_t seed = 0;

    void validate() const; // throws ConfigError
};

struct SplitResult {
    RatingDataset train;
    RatingDataset valid;
    RatingDataset test;
};

/// Parse a rating file into a dataset with ids remapped to contiguous
/// ranges. Lines are `user<TAB>item<TAB>rating[<TAB>timestamp]` or
/// `user::item::rating::timestamp`; timestamps are ignored.
/// Throws InputError on malformed lines (with line number), duplicate
/// (user,item) pairs, or an empty file.
RatingDataset load_ratings(const std::filesystem::path& path, FileFormat format);

/// Uniform shuffle split of the triplets; deterministic for a fixed seed.
SplitResult split(const RatingDataset& ds, const SplitSpec& spec);

/// Split manifests: three triplet files (train.tsv, valid.tsv, test.tsv)
/// plus split_meta.json recording the universe so the partition can be
/// reloaded without remapping.
void save_split_manifest(const SplitResult& parts, const std::filesystem::path& dir);
SplitResult load_split_manifest(const std::filesystem::path& dir);

} // namespace nbm
