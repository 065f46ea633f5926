#include "nbm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "nbm/errors.hpp"
#include "nbm/predict.hpp"

namespace nbm {

namespace {

constexpr int kEvalChunks = 64;

struct PairOut {
    double raw;  // model-space prediction
    double pred; // rating-scale prediction before clamping
};

template <typename PredictFn>
EvalDetail eval_core(const RatingDataset& part, const CenteredView& view, int jobs,
                     PredictFn&& predict_pair) {
    const std::size_t n = part.triplets.size();
    if (n == 0) throw EmptyResultError("empty evaluation partition");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");

    struct Acc {
        double sq = 0.0;
        std::size_t clamps = 0;
        std::size_t count = 0;
        double raw_min = std::numeric_limits<double>::infinity();
        double raw_max = -std::numeric_limits<double>::infinity();
    };
    const int chunks = static_cast<int>(std::min<std::size_t>(kEvalChunks, n));
    std::vector<Acc> accs(static_cast<std::size_t>(chunks));
    const double lo = view.scale_min();
    const double hi = view.scale_max();

    const auto run_chunk = [&](int c) {
        const std::size_t begin = n * static_cast<std::size_t>(c) / static_cast<std::size_t>(chunks);
        const std::size_t end =
            n * static_cast<std::size_t>(c + 1) / static_cast<std::size_t>(chunks);
        Acc& a = accs[static_cast<std::size_t>(c)];
        for (std::size_t idx = begin; idx < end; ++idx) {
            const Triplet& t = part.triplets[idx];
            const PairOut out = predict_pair(t);
            double pred = out.pred;
            if (pred < lo || pred > hi) {
                pred = std::clamp(pred, lo, hi);
                ++a.clamps;
            }
            const double err = pred - t.rating;
            a.sq += err * err;
            ++a.count;
            a.raw_min = std::min(a.raw_min, out.raw);
            a.raw_max = std::max(a.raw_max, out.raw);
        }
    };

    const int workers = std::min(jobs, chunks);
    if (workers <= 1) {
        for (int c = 0; c < chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (int c = w; c < chunks; c += workers) run_chunk(c);
            });
        }
        for (std::thread& th : pool) th.join();
    }

    EvalDetail d;
    double total = 0.0;
    d.raw_min = std::numeric_limits<double>::infinity();
    d.raw_max = -std::numeric_limits<double>::infinity();
    for (const Acc& a : accs) {
        total += a.sq;
        d.clamp_count += a.clamps;
        d.count += a.count;
        d.raw_min = std::min(d.raw_min, a.raw_min);
        d.raw_max = std::max(d.raw_max, a.raw_max);
    }
    d.rmse = std::sqrt(total / static_cast<double>(n));
    return d;
}

} // namespace

EvalDetail evaluate_layers(const SimilarityLayers& layers, const CenteredView& view,
                           const RatingDataset& part, std::optional<int> k, int jobs) {
    if (layers.dim() != view.num_items()) {
        throw MismatchError("model dimension does not match training data");
    }
    const bool mapped = layers.variant == Variant::tanh;
    return eval_core(part, view, jobs, [&](const Triplet& t) -> PairOut {
        const ModelPrediction p = model_prediction(layers, view, t.user, t.item, k);
        const double mean = view.item_mean(t.item);
        double pred = mean;
        if (!p.empty) pred = mapped ? mean + view.map_from_unit(p.value) : mean + p.value;
        return {p.value, pred};
    });
}

EvalDetail evaluate_static(const ConstraintMatrix& sim, const CenteredView& view,
                           const RatingDataset& part, std::optional<int> k, int jobs) {
    if (sim.dim() != view.num_items()) {
        throw MismatchError("similarity matrix dimension does not match training data");
    }
    return eval_core(part, view, jobs, [&](const Triplet& t) -> PairOut {
        const double* row = sim.values.row(t.item);
        const Quotient q = neighborhood_quotient([row](int j) { return row[j]; }, view, t.user,
                                                 t.item, k, /*mapped=*/false);
        const double raw = q.value();
        return {raw, view.item_mean(t.item) + raw};
    });
}

EvalDetail evaluate_model(const Model& model, const CenteredView& view, const RatingDataset& part,
                          std::optional<int> k, int jobs) {
    if (model.kind == Model::Kind::static_similarity) {
        return evaluate_static(model.static_sim, view, part, k, jobs);
    }
    return evaluate_layers(model.layers, view, part, k, jobs);
}

double rmse(const Model& model, const CenteredView& view, const RatingDataset& part,
            std::optional<int> k, int jobs) {
    return evaluate_model(model, view, part, k, jobs).rmse;
}

StabilityStats stability(std::span<const double> series, double tol, int budget) {
    if (series.empty()) throw ConfigError("stability requires a nonempty history");
    if (tol < 0.0) throw ConfigError("tolerance must be >= 0");
    if (budget < 1) throw ConfigError("budget must be >= 1");

    const std::size_t n = std::min(series.size(), static_cast<std::size_t>(budget));
    StabilityStats st;
    st.best = *std::min_element(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(n));
    std::size_t first = 0;
    while (std::abs(series[first] - st.best) > tol) ++first;
    std::size_t run = first;
    while (run < n && std::abs(series[run] - st.best) <= tol) ++run;

    st.epsilon = static_cast<int>(first) + 1;
    st.zeta = static_cast<int>(run - first);
    st.censored = run == n;
    st.converged = st.zeta >= 10;
    return st;
}

double inc_percent(double baseline, double value) {
    if (!(baseline > 0.0)) throw ConfigError("baseline rmse must be positive");
    return 100.0 * (baseline - value) / baseline;
}

RepeatMode parse_repeat_mode(const std::string& name) {
    if (name == "split") return RepeatMode::split;
    if (name == "train") return RepeatMode::train;
    throw ConfigError("unknown repeat mode: " + name + " (expected split|train)");
}

EvalReport repeat_protocol(const Profile& profile, const RatingDataset& full,
                           const RepeatOptions& opt) {
    if (opt.repeats < 1) throw ConfigError("repeats must be >= 1");
    EvalReport report;
    report.model = profile_name(profile.kind);
    report.repeats = opt.repeats;
    report.per_repeat.reserve(static_cast<std::size_t>(opt.repeats));

    for (int r = 0; r < opt.repeats; ++r) {
        const std::uint64_t step = static_cast<std::uint64_t>(r);
        SplitSpec spec = opt.split;
        spec.seed = opt.mode == RepeatMode::split ? opt.base_seed + step : opt.base_seed;
        const std::uint64_t train_seed = opt.base_seed + step;

        const SplitResult parts = split(full, spec);
        const CenteredView view = center(parts.train);
        Model model = build_model(profile, parts.train, view, train_seed);

        double value = 0.0;
        if (!profile.trained) {
            value = evaluate_model(model, view, parts.test, opt.k, opt.jobs).rmse;
        } else {
            TrainConfig cfg = profile.config;
            cfg.seed = train_seed;
            TrainResult trained;
            try {
                trained = train(std::move(model.layers), parts.train, parts.valid, parts.test,
                                cfg, nullptr, opt.jobs);
            } catch (const DivergenceError&) {
                report.per_repeat.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            value = evaluate_layers(trained.model, view, parts.test, opt.k, opt.jobs).rmse;
            if (!report.has_stability) {
                std::vector<double> series;
                series.reserve(trained.history.epochs.size());
                for (const EpochStats& e : trained.history.epochs) series.push_back(e.valid_rmse);
                report.stability = stability(series, 1e-4, cfg.epochs);
                report.has_stability = true;
            }
        }
        report.per_repeat.push_back(value);
    }

    double sum = 0.0;
    int ok = 0;
    for (double v : report.per_repeat) {
        if (!std::isnan(v)) {
            sum += v;
            ++ok;
        }
    }
    if (ok == 0) throw EmptyResultError("all repeats diverged");
    report.rmse = sum / ok;
    if (opt.baseline_rmse) {
        report.inc = inc_percent(*opt.baseline_rmse, report.rmse);
        report.baseline = opt.baseline_name.empty() ? "baseline" : opt.baseline_name;
    }
    return report;
}

std::vector<DensitySlice> density_sweep(const Profile& profile, const RatingDataset& full,
                                        const SweepOptions& opt) {
    if (opt.n_slices < 1) throw ConfigError("n_slices must be >= 1");
    if (full.empty()) throw InputError("dataset is empty");

    std::vector<std::size_t> counts(static_cast<std::size_t>(full.num_users), 0);
    for (const Triplet& t : full.triplets) ++counts[static_cast<std::size_t>(t.user)];
    std::vector<int> order(static_cast<std::size_t>(full.num_users));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const std::size_t ca = counts[static_cast<std::size_t>(a)];
        const std::size_t cb = counts[static_cast<std::size_t>(b)];
        if (ca != cb) return ca < cb;
        return a < b;
    });

    std::vector<int> bucket_of(static_cast<std::size_t>(full.num_users), -1);
    const std::size_t total_users = order.size();
    for (std::size_t pos = 0; pos < total_users; ++pos) {
        const std::size_t b = pos * static_cast<std::size_t>(opt.n_slices) / total_users;
        bucket_of[static_cast<std::size_t>(order[pos])] = static_cast<int>(b);
    }

    std::vector<DensitySlice> slices(static_cast<std::size_t>(opt.n_slices));
    for (int b = 0; b < opt.n_slices; ++b) {
        DensitySlice& slice = slices[static_cast<std::size_t>(b)];
        slice.slice = b;

        std::vector<Triplet> kept;
        for (const Triplet& t : full.triplets) {
            if (bucket_of[static_cast<std::size_t>(t.user)] == b) kept.push_back(t);
        }
        std::vector<std::uint8_t> item_seen(static_cast<std::size_t>(full.num_items), 0);
        std::vector<std::uint8_t> user_seen(static_cast<std::size_t>(full.num_users), 0);
        for (const Triplet& t : kept) {
            item_seen[static_cast<std::size_t>(t.item)] = 1;
            user_seen[static_cast<std::size_t>(t.user)] = 1;
        }
        slice.users = static_cast<int>(std::count(user_seen.begin(), user_seen.end(), 1));
        slice.items = static_cast<int>(std::count(item_seen.begin(), item_seen.end(), 1));
        slice.ratings = kept.size();
        slice.density =
            slice.users > 0 && slice.items > 0
                ? static_cast<double>(slice.ratings) /
                      (static_cast<double>(slice.users) * static_cast<double>(slice.items))
                : 0.0;

        if (slice.users < opt.min_users) {
            slice.skipped = true;
            std::fprintf(stderr, "warning: slice %d skipped (%d users < %d)\n", b, slice.users,
                         opt.min_users);
            continue;
        }
        try {
            slice.report = repeat_protocol(profile, full.with_triplets(std::move(kept)), opt.eval);
        } catch (const EmptyResultError&) {
            slice.skipped = true;
            std::fprintf(stderr, "warning: slice %d skipped (all repeats diverged)\n", b);
        }
    }
    return slices;
}

std::string report_json(const EvalReport& report) {
    nlohmann::json j;
    j["model"] = report.model;
    j["rmse"] = report.rmse;
    j["repeats"] = report.repeats;
    nlohmann::json per = nlohmann::json::array();
    for (double v : report.per_repeat) {
        if (std::isnan(v)) {
            per.push_back(nullptr);
        } else {
            per.push_back(v);
        }
    }
    j["per_repeat"] = per;
    if (!report.baseline.empty()) {
        j["baseline"] = report.baseline;
        j["inc_percent"] = report.inc;
    }
    if (report.has_stability) {
        j["stability"] = {{"epsilon", report.stability.epsilon},
                          {"zeta", report.stability.zeta},
                          {"censored", report.stability.censored},
                          {"converged", report.stability.converged},
                          {"best", report.stability.best}};
    }
    return j.dump(2) + "\n";
}

std::string report_text(const EvalReport& report) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "model       %s\n", report.model.c_str());
    out << buf;
    std::snprintf(buf, sizeof(buf), "rmse        %.6f  (mean over %d repeat%s)\n", report.rmse,
                  report.repeats, report.repeats == 1 ? "" : "s");
    out << buf;
    if (!report.baseline.empty()) {
        std::snprintf(buf, sizeof(buf), "inc         %+.2f%%  vs %s\n", report.inc,
                      report.baseline.c_str());
        out << buf;
    }
    out << "per-repeat  ";
    for (std::size_t i = 0; i < report.per_repeat.size(); ++i) {
        if (i > 0) out << ", ";
        if (std::isnan(report.per_repeat[i])) {
            out << "diverged";
        } else {
            std::snprintf(buf, sizeof(buf), "%.6f", report.per_repeat[i]);
            out << buf;
        }
    }
    out << "\n";
    if (report.has_stability) {
        std::snprintf(buf, sizeof(buf), "stability   epsilon=%d zeta=%s%d censored=%s converged=%s\n",
                      report.stability.epsilon, report.stability.censored ? ">=" : "",
                      report.stability.zeta, report.stability.censored ? "yes" : "no",
                      report.stability.converged ? "yes" : "no");
        out << buf;
    }
    return out.str();
}

std::string sweep_csv(const std::vector<DensitySlice>& slices) {
    std::ostringstream out;
    out << "slice,users,items,ratings,density,rmse\n";
    char buf[160];
    for (const DensitySlice& s : slices) {
        if (s.skipped) continue;
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%zu,%.17g,%.17g\n", s.slice, s.users, s.items,
                      s.ratings, s.density, s.report.rmse);
        out << buf;
    }
    return out.str();
}

std::string sweep_text(const std::vector<DensitySlice>& slices) {
    std::ostringstream out;
    out << "slice   users   items  ratings  density   rmse\n";
    char buf[160];
    for (const DensitySlice& s : slices) {
        if (s.skipped) {
            std::snprintf(buf, sizeof(buf), "%5d %7d %7d %8zu  %7.4f%%  skipped\n", s.slice,
                          s.users, s.items, s.ratings, 100.0 * s.density);
        } else {
            std::snprintf(buf, sizeof(buf), "%5d %7d %7d %8zu  %7.4f%%  %.6f\n", s.slice, s.users,
                          s.items, s.ratings, 100.0 * s.density, s.report.rmse);
        }
        out << buf;
    }
    return out.str();
}

} // namespace nbm
