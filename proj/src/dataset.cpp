#include "nbm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "nbm/errors.hpp"

namespace nbm {

FileFormat parse_format(const std::string& name) {
    if (name == "tsv") return FileFormat::tsv;
    if (name == "double-colon" || name == "dc") return FileFormat::double_colon;
    throw ConfigError("unknown file format: " + name);
}

std::string format_name(FileFormat f) {
    return f == FileFormat::tsv ? "tsv" : "double-colon";
}

double RatingDataset::density() const {
    if (num_users == 0 || num_items == 0) return 0.0;
    return static_cast<double>(triplets.size()) /
           (static_cast<double>(num_users) * static_cast<double>(num_items));
}

RatingDataset RatingDataset::with_triplets(std::vector<Triplet> t) const {
    RatingDataset out = *this;
    out.triplets = std::move(t);
    return out;
}

namespace {

// Splits a line into fields on a single-char or "::" separator.
std::vector<std::string_view> split_fields(std::string_view line, FileFormat format) {
    std::vector<std::string_view> fields;
    const std::string_view sep = format == FileFormat::tsv ? "\t" : "::";
    std::size_t pos = 0;
    while (true) {
        std::size_t next = line.find(sep, pos);
        if (next == std::string_view::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return fields;
}

long parse_long(std::string_view s, const char* what, std::size_t line_no) {
    long value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw InputError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                         std::string(s) + "'");
    return value;
}

double parse_double(std::string_view s, const char* what, std::size_t line_no) {
    // from_chars for double is available in libstdc++ 11
    double value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value))
        throw InputError("line " + std::to_string(line_no) + ": bad " + what + " '" +
                         std::string(s) + "'");
    return value;
}

} // namespace

RatingDataset load_ratings(const std::filesystem::path& path, FileFormat format) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open rating file: " + path.string());

    struct RawTriplet {
        long user;
        long item;
        double rating;
    };
    std::vector<RawTriplet> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line, format);
        if (fields.size() < 3)
            throw InputError("line " + std::to_string(line_no) + ": expected at least 3 fields, got " +
                             std::to_string(fields.size()));
        RawTriplet t;
        t.user = parse_long(fields[0], "user id", line_no);
        t.item = parse_long(fields[1], "item id", line_no);
        t.rating = parse_double(fields[2], "rating", line_no);
        raw.push_back(t);
    }
    if (raw.empty()) throw InputError("empty dataset: " + path.string());

    // Remap ids to contiguous ranges in first-appearance order.
    std::unordered_map<long, int> user_map, item_map;
    user_map.reserve(raw.size());
    item_map.reserve(raw.size());
    RatingDataset ds;
    ds.triplets.reserve(raw.size());
    ds.scale_min = raw.front().rating;
    ds.scale_max = raw.front().rating;
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(raw.size());
    for (const RawTriplet& t : raw) {
        auto [uit, unew] = user_map.try_emplace(t.user, static_cast<int>(user_map.size()));
        auto [iit, inew] = item_map.try_emplace(t.item, static_cast<int>(item_map.size()));
        const int u = uit->second;
        const int i = iit->second;
        const std::uint64_t key =
            (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
            static_cast<std::uint32_t>(i);
        if (!seen.insert(key).second)
            throw InputError("duplicate rating for user " + std::to_string(t.user) + ", item " +
                             std::to_string(t.item));
        ds.triplets.push_back({u, i, t.rating});
        ds.scale_min = std::min(ds.scale_min, t.rating);
        ds.scale_max = std::max(ds.scale_max, t.rating);
    }
    ds.num_users = static_cast<int>(user_map.size());
    ds.num_items = static_cast<int>(item_map.size());
    return ds;
}

void SplitSpec::validate() const {
    if (train_frac < 0 || valid_frac < 0 || test_frac < 0)
        throw ConfigError("split fractions must be nonnegative");
    const double sum = train_frac + valid_frac + test_frac;
    if (std::abs(sum - 1.0) > 1e-12)
        throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));
}

SplitResult split(const RatingDataset& ds, const SplitSpec& spec) {
    spec.validate();
    if (ds.empty()) throw InputError("cannot split an empty dataset");

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t n = ds.size();
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_frac * static_cast<double>(n)));
    const auto n_valid = static_cast<std::size_t>(std::llround(spec.valid_frac * static_cast<double>(n)));
    const std::size_t train_end = std::min(n_train, n);
    const std::size_t valid_end = std::min(train_end + n_valid, n);

    std::vector<Triplet> train, valid, test;
    train.reserve(train_end);
    valid.reserve(valid_end - train_end);
    test.reserve(n - valid_end);
    for (std::size_t pos = 0; pos < n; ++pos) {
        const Triplet& t = ds.triplets[order[pos]];
        if (pos < train_end)
            train.push_back(t);
        else if (pos < valid_end)
            valid.push_back(t);
        else
            test.push_back(t);
    }
    return {ds.with_triplets(std::move(train)), ds.with_triplets(std::move(valid)),
            ds.with_triplets(std::move(test))};
}

namespace {

void write_triplet_file(const RatingDataset& part, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write manifest file: " + path.string());
    char buf[96];
    for (const Triplet& t : part.triplets) {
        std::snprintf(buf, sizeof(buf), "%d\t%d\t%.17g\n", t.user, t.item, t.rating);
        out << buf;
    }
}

std::vector<Triplet> read_triplet_file(const std::filesystem::path& path, int num_users,
                                       int num_items) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest file: " + path.string());
    std::vector<Triplet> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_fields(line, FileFormat::tsv);
        if (fields.size() != 3)
            throw InputError(path.string() + ": line " + std::to_string(line_no) +
                             ": expected 3 fields");
        Triplet t;
        t.user = static_cast<int>(parse_long(fields[0], "user id", line_no));
        t.item = static_cast<int>(parse_long(fields[1], "item id", line_no));
        t.rating = parse_double(fields[2], "rating", line_no);
        if (t.user < 0 || t.user >= num_users || t.item < 0 || t.item >= num_items)
            throw InputError(path.string() + ": line " + std::to_string(line_no) +
                             ": id out of declared range");
        out.push_back(t);
    }
    return out;
}

} // namespace

void save_split_manifest(const SplitResult& parts, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json meta;
    meta["num_users"] = parts.train.num_users;
    meta["num_items"] = parts.train.num_items;
    meta["scale_min"] = parts.train.scale_min;
    meta["scale_max"] = parts.train.scale_max;
    std::ofstream meta_out(dir / "split_meta.json", std::ios::trunc);
    if (!meta_out) throw InputError("cannot write manifest meta: " + (dir / "split_meta.json").string());
    meta_out << meta.dump(2) << "\n";
    write_triplet_file(parts.train, dir / "train.tsv");
    write_triplet_file(parts.valid, dir / "valid.tsv");
    write_triplet_file(parts.test, dir / "test.tsv");
}

SplitResult load_split_manifest(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "split_meta.json");
    if (!meta_in) throw InputError("cannot open manifest meta: " + (dir / "split_meta.json").string());
    nlohmann::json meta = nlohmann::json::parse(meta_in);
    RatingDataset universe;
    universe.num_users = meta.at("num_users").get<int>();
    universe.num_items = meta.at("num_items").get<int>();
    universe.scale_min = meta.at("scale_min").get<double>();
    universe.scale_max = meta.at("scale_max").get<double>();

    SplitResult parts;
    parts.train = universe.with_triplets(
        read_triplet_file(dir / "train.tsv", universe.num_users, universe.num_items));
    parts.valid = universe.with_triplets(
        read_triplet_file(dir / "valid.tsv", universe.num_users, universe.num_items));
    parts.test = universe.with_triplets(
        read_triplet_file(dir / "test.tsv", universe.num_users, universe.num_items));
    return parts;
}

} // namespace nbm
