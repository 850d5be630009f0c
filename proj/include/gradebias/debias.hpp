#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "gradebias/accumulators.hpp"
#include "gradebias/dataset.hpp"
#include "gradebias/error.hpp"
#include "gradebias/evaluator.hpp"
#include "gradebias/linalg.hpp"
#include "gradebias/model.hpp"

namespace gradebias {

/// Where the popular (item) and conformity (user) directions come from.
enum class DirectionSource {
    accumulators,             // mean accumulated positive update over all items; mean update over all users
    mean_popular_embeddings,  // mean embedding of popular items / active users
};

inline const char* to_string(DirectionSource s) {
    return s == DirectionSource::accumulators ? "acc" : "emb";
}

inline DirectionSource parse_source(std::string_view s) {
    if (s == "acc" || s == "accumulators") return DirectionSource::accumulators;
    if (s == "emb" || s == "mean_popular_embeddings") return DirectionSource::mean_popular_embeddings;
    throw ConfigError("unknown direction source '" + std::string(s) + "' (expected emb or acc)");
}

/// Unit directions plus the two subtraction strengths. alpha1 scales the
/// item-popularity projection, alpha2 the user-conformity projection. A
/// direction whose source mean was zero is stored as the zero vector, which
/// turns the matching adjustment into the identity.
struct AdjustmentContext {
    Vector popular_direction;
    Vector conformity_direction;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    DirectionSource source = DirectionSource::mean_popular_embeddings;
    bool popular_degenerate = false;
    bool conformity_degenerate = false;
};

inline AdjustmentContext build_context(const EmbeddingModel& model, const GradientAccumulators* accumulators,
                                       const PopularityGrouping* grouping, DirectionSource source, double alpha1,
                                       double alpha2) {
    AdjustmentContext ctx;
    ctx.alpha1 = alpha1;
    ctx.alpha2 = alpha2;
    ctx.source = source;
    Vector item_mean, user_mean;
    if (source == DirectionSource::accumulators) {
        if (!accumulators) throw ConfigError("direction source 'acc' needs accumulators in the checkpoint");
        if (accumulators->item_pos_acc.rows() != model.num_items() || accumulators->user_acc.rows() != model.num_users())
            throw ConfigError("accumulators do not match the model");
        // Positive and negative updates of one BPR step are equal and
        // opposite, so the all-item mean of item_acc is zero up to rounding.
        item_mean = mean_of_all_rows(accumulators->item_pos_acc);
        user_mean = mean_of_all_rows(accumulators->user_acc);
    } else {
        if (!grouping) throw ConfigError("direction source 'emb' needs a popularity grouping");
        if (grouping->is_popular.size() != model.num_items() || grouping->is_active.size() != model.num_users())
            throw ConfigError("grouping does not match the model");
        item_mean = mean_of_rows(model.items, grouping->popular_items);
        user_mean = mean_of_rows(model.users, grouping->active_users);
    }
    ctx.popular_direction = normalized(item_mean);
    ctx.conformity_direction = normalized(user_mean);
    ctx.popular_degenerate = norm2(item_mean) == 0.0;
    ctx.conformity_degenerate = norm2(user_mean) == 0.0;
    return ctx;
}

/// v - alpha * (v . d) d for unit (or zero) d. Equal to
/// v - alpha * cos(v, d) * |v| * d without the 0/0 at v = 0.
inline Vector remove_projection(std::span<const double> v, std::span<const double> d, double alpha) {
    Vector out(v.begin(), v.end());
    if (alpha == 0.0) return out;
    const double c = alpha * dot(v, d);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] -= c * d[k];
    return out;
}

inline Vector adjust_item(std::span<const double> item, const AdjustmentContext& ctx) {
    return remove_projection(item, ctx.popular_direction, ctx.alpha1);
}

inline Vector adjust_user(std::span<const double> user, const AdjustmentContext& ctx) {
    return remove_projection(user, ctx.conformity_direction, ctx.alpha2);
}

/// Adjusted user (raw stored vector) dotted with adjusted item.
inline double adjusted_score(const EmbeddingModel& model, const AdjustmentContext& ctx, std::size_t u,
                             std::size_t i) {
    detail::check_user(model, u);
    detail::check_item(model, i);
    return dot(adjust_user(model.users.row(u), ctx), adjust_item(model.items.row(i), ctx));
}

namespace detail {

inline Matrix adjusted_rows(const Matrix& m, std::span<const double> d, double alpha) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const Vector a = remove_projection(m.row(r), d, alpha);
        std::copy(a.begin(), a.end(), out.row(r).begin());
    }
    return out;
}

}  // namespace detail

inline Scorer adjusted_scorer(const EmbeddingModel& model, const AdjustmentContext& ctx) {
    return {detail::adjusted_rows(model.users, ctx.conformity_direction, ctx.alpha2),
            detail::adjusted_rows(model.items, ctx.popular_direction, ctx.alpha1)};
}

// ---------------------------------------------------------------------------
// Alpha grid search

/// Values start, start+step, ..., stop (inclusive), each computed as
/// start + k*step and rounded to 12 decimals.
inline std::vector<double> alpha_grid(double start, double stop, double step) {
    if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step))
        throw ConfigError("grid bounds must be finite");
    if (stop < start) throw ConfigError("grid stop must be >= start");
    if (stop == start) return {start};
    if (!(step > 0.0)) throw ConfigError("grid step must be > 0");
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
    std::vector<double> v;
    for (std::size_t k = 0; k <= n; ++k) v.push_back(std::round((start + static_cast<double>(k) * step) * 1e12) / 1e12);
    return v;
}

/// Parses "start:stop:step" or a single value.
inline std::vector<double> parse_alpha_grid(std::string_view text) {
    std::vector<double> parts;
    std::size_t pos = 0;
    while (true) {
        const auto colon = text.find(':', pos);
        const auto piece = detail::trim(text.substr(pos, colon == std::string_view::npos ? std::string_view::npos : colon - pos));
        double x = 0.0;
        auto res = std::from_chars(piece.data(), piece.data() + piece.size(), x);
        if (piece.empty() || res.ec != std::errc{} || res.ptr != piece.data() + piece.size())
            throw ConfigError("invalid grid '" + std::string(text) + "' (expected start:stop:step)");
        parts.push_back(x);
        if (colon == std::string_view::npos) break;
        pos = colon + 1;
    }
    if (parts.size() == 1) return {parts[0]};
    if (parts.size() != 3) throw ConfigError("invalid grid '" + std::string(text) + "' (expected start:stop:step)");
    return alpha_grid(parts[0], parts[1], parts[2]);
}

enum class SweepMetric { recall, hr, ndcg };

inline SweepMetric parse_metric(std::string_view s) {
    if (s == "recall") return SweepMetric::recall;
    if (s == "hr") return SweepMetric::hr;
    if (s == "ndcg") return SweepMetric::ndcg;
    throw ConfigError("unknown metric '" + std::string(s) + "'");
}

struct SweepCell {
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    double recall = 0.0;
    double hr = 0.0;
    double ndcg = 0.0;

    double metric(SweepMetric m) const { return m == SweepMetric::recall ? recall : m == SweepMetric::hr ? hr : ndcg; }
};

struct SweepResult {
    std::vector<SweepCell> cells;  // alpha1-major
    std::size_t best = 0;
    const SweepCell& best_cell() const { return cells.at(best); }
};

/// Evaluates every (alpha1, alpha2) pair with the context's directions and
/// picks the best by `metric`; ties go to the smaller alpha1+alpha2, then
/// the smaller alpha1.
inline SweepResult sweep_alphas(const EmbeddingModel& model, const AdjustmentContext& directions,
                                const InteractionDataset& validation,
                                const std::vector<const InteractionDataset*>& masks, const PopularityGrouping& grouping,
                                const std::vector<double>& alpha1_values, const std::vector<double>& alpha2_values,
                                SweepMetric metric = SweepMetric::recall, std::size_t k = 20) {
    if (validation.empty()) throw EmptyDatasetError("validation set is empty");
    if (alpha1_values.empty() || alpha2_values.empty()) throw ConfigError("alpha grid is empty");
    std::vector<Matrix> users_by_a2;
    for (double a2 : alpha2_values) users_by_a2.push_back(detail::adjusted_rows(model.users, directions.conformity_direction, a2));
    const EvalConfig cfg{{k}, false};
    SweepResult res;
    for (double a1 : alpha1_values) {
        Scorer s;
        s.items = detail::adjusted_rows(model.items, directions.popular_direction, a1);
        for (std::size_t c = 0; c < alpha2_values.size(); ++c) {
            s.users = users_by_a2[c];
            const auto rep = evaluate(s, validation, masks, grouping, cfg);
            const auto& m = rep.at_k.front();
            res.cells.push_back({a1, alpha2_values[c], m.recall, m.hr, m.ndcg});
        }
    }
    for (std::size_t c = 1; c < res.cells.size(); ++c) {
        const auto& a = res.cells[c];
        const auto& b = res.cells[res.best];
        const double ma = a.metric(metric), mb = b.metric(metric);
        const double sa = a.alpha1 + a.alpha2, sb = b.alpha1 + b.alpha2;
        if (ma > mb || (ma == mb && (sa < sb || (sa == sb && a.alpha1 < b.alpha1)))) res.best = c;
    }
    return res;
}

inline void write_sweep_csv(const std::string& path, const SweepResult& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "alpha1,alpha2,recall,hr,ndcg\n";
    for (const auto& c : r.cells)
        out << format_double(c.alpha1) << ',' << format_double(c.alpha2) << ',' << format_double(c.recall) << ','
            << format_double(c.hr) << ',' << format_double(c.ndcg) << '\n';
}

}  // namespace gradebias
