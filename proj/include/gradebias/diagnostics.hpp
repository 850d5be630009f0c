#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gradebias/accumulators.hpp"
#include "gradebias/dataset.hpp"
#include "gradebias/linalg.hpp"
#include "gradebias/model.hpp"

namespace gradebias {

struct DirectionRow {
    std::size_t item = 0;
    std::size_t count = 0;
    std::optional<double> cos_pos;  // cos(G+, G+ + G-)
    std::optional<double> cos_neg;  // cos(G-, G+ + G-)
    // Same cosines against the realized embedding change (final - initial),
    // which also contains regularization shrinkage.
    std::optional<double> cos_pos_delta;
    std::optional<double> cos_neg_delta;
};

struct DirectionReport {
    std::vector<DirectionRow> rows;  // most popular item first
    bool all_zero = false;
    bool has_delta = false;
};

/// Per-item cosine of the accumulated positive / negative updates with
/// their sum. When `embedding_delta` is given (rows = final - initial item
/// vectors) the cosines against it are reported as well.
inline DirectionReport gradient_direction_report(const GradientAccumulators& acc, const PopularityGrouping& grouping,
                                                 const std::vector<std::size_t>& item_counts,
                                                 const Matrix* embedding_delta = nullptr) {
    DirectionReport rep;
    rep.has_delta = embedding_delta != nullptr;
    rep.all_zero = true;
    Vector combined(acc.item_pos_acc.cols());
    for (auto i : grouping.item_order) {
        const auto pos = acc.item_pos_acc.row(i);
        const auto neg = acc.item_neg_acc.row(i);
        for (std::size_t d = 0; d < combined.size(); ++d) combined[d] = pos[d] + neg[d];
        DirectionRow row{i, item_counts.at(i), cosine(pos, combined), cosine(neg, combined), {}, {}};
        if (norm2(pos) > 0.0 || norm2(neg) > 0.0) rep.all_zero = false;
        if (embedding_delta) {
            row.cos_pos_delta = cosine(pos, embedding_delta->row(i));
            row.cos_neg_delta = cosine(neg, embedding_delta->row(i));
        }
        rep.rows.push_back(row);
    }
    return rep;
}

struct MagnitudeRow {
    std::size_t item = 0;
    std::size_t count = 0;
    double pos_norm = 0.0;
    double neg_norm = 0.0;
};

struct MagnitudeReport {
    std::vector<MagnitudeRow> rows;  // most popular item first
    /// Spearman(count, |G+| - |G-|); empty when either side is constant.
    std::optional<double> spearman_count_vs_gap;
};

inline MagnitudeReport gradient_magnitude_report(const GradientAccumulators& acc, const PopularityGrouping& grouping,
                                                 const std::vector<std::size_t>& item_counts) {
    MagnitudeReport rep;
    Vector counts, gaps;
    for (auto i : grouping.item_order) {
        MagnitudeRow row{i, item_counts.at(i), norm2(acc.item_pos_acc.row(i)), norm2(acc.item_neg_acc.row(i))};
        counts.push_back(static_cast<double>(row.count));
        gaps.push_back(row.pos_norm - row.neg_norm);
        rep.rows.push_back(row);
    }
    rep.spearman_count_vs_gap = spearman(counts, gaps);
    return rep;
}

struct NormRow {
    std::size_t index = 0;
    std::size_t count = 0;
    double norm = 0.0;
};

struct NormReport {
    std::vector<NormRow> items;  // most popular first
    std::vector<NormRow> users;  // most active first, raw stored vectors
    std::optional<double> item_spearman;
    std::optional<double> user_spearman;
};

inline NormReport embedding_norm_report(const EmbeddingModel& model, const PopularityGrouping& grouping,
                                        const std::vector<std::size_t>& item_counts,
                                        const std::vector<std::size_t>& user_counts) {
    NormReport rep;
    Vector c, n;
    for (auto i : grouping.item_order) {
        rep.items.push_back({i, item_counts.at(i), norm2(model.items.row(i))});
        c.push_back(static_cast<double>(rep.items.back().count));
        n.push_back(rep.items.back().norm);
    }
    rep.item_spearman = spearman(c, n);
    c.clear();
    n.clear();
    for (auto u : grouping.user_order) {
        rep.users.push_back({u, user_counts.at(u), norm2(model.users.row(u))});
        c.push_back(static_cast<double>(rep.users.back().count));
        n.push_back(rep.users.back().norm);
    }
    rep.user_spearman = spearman(c, n);
    return rep;
}

/// Mean pairwise cosine over rows `members` (pairs with an undefined cosine
/// are skipped).
inline std::optional<double> mean_pairwise_cosine(const Matrix& m, const std::vector<std::size_t>& members) {
    std::vector<Vector> unit;
    unit.reserve(members.size());
    for (auto r : members)
        if (norm2(m.row(r)) > 0.0) unit.push_back(normalized(m.row(r)));
    if (unit.size() < 2) return std::nullopt;
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < unit.size(); ++a)
        for (std::size_t b = a + 1; b < unit.size(); ++b) {
            sum += dot(unit[a], unit[b]);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

struct DirectionAgreement {
    /// cos(mean G+ over popular items, mean Q over popular items)
    std::optional<double> pos_acc_vs_embedding;
    /// mean pairwise cos of G+ among popular items
    std::optional<double> popular_pairwise;
    /// mean pairwise cos of G+ among all items (baseline for the above)
    std::optional<double> all_pairwise;
    /// cos of the accumulator-mean and embedding-mean popular directions
    std::optional<double> item_direction_sources;
    /// same for the user conformity directions
    std::optional<double> user_direction_sources;
};

inline DirectionAgreement direction_agreement(const EmbeddingModel& model, const GradientAccumulators& acc,
                                              const PopularityGrouping& grouping) {
    DirectionAgreement a;
    a.pos_acc_vs_embedding =
        cosine(mean_of_rows(acc.item_pos_acc, grouping.popular_items), mean_of_rows(model.items, grouping.popular_items));
    a.popular_pairwise = mean_pairwise_cosine(acc.item_pos_acc, grouping.popular_items);
    std::vector<std::size_t> all(model.num_items());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    a.all_pairwise = mean_pairwise_cosine(acc.item_pos_acc, all);
    a.item_direction_sources =
        cosine(mean_of_all_rows(acc.item_pos_acc), mean_of_rows(model.items, grouping.popular_items));
    a.user_direction_sources =
        cosine(mean_of_all_rows(acc.user_acc), mean_of_rows(model.users, grouping.active_users));
    return a;
}

// ---------------------------------------------------------------------------
// Writers. Undefined cosines are written as empty cells / JSON null.

inline void write_direction_csv(const std::string& path, const DirectionReport& r, const IdMap& items) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "item,count,cos_pos,cos_neg";
    if (r.has_delta) out << ",cos_pos_delta,cos_neg_delta";
    out << '\n';
    for (const auto& row : r.rows) {
        out << items.external(row.item) << ',' << row.count << ',' << format_optional(row.cos_pos) << ','
            << format_optional(row.cos_neg);
        if (r.has_delta) out << ',' << format_optional(row.cos_pos_delta) << ',' << format_optional(row.cos_neg_delta);
        out << '\n';
    }
}

inline void write_magnitude_csv(const std::string& path, const MagnitudeReport& r, const IdMap& items) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "item,count,pos_norm,neg_norm\n";
    for (const auto& row : r.rows)
        out << items.external(row.item) << ',' << row.count << ',' << format_double(row.pos_norm) << ','
            << format_double(row.neg_norm) << '\n';
}

inline void write_norms_csv(const std::string& path, const std::vector<NormRow>& rows, const IdMap& ids,
                            const char* id_column) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << id_column << ",count,norm\n";
    for (const auto& row : rows) out << ids.external(row.index) << ',' << row.count << ',' << format_double(row.norm) << '\n';
}

inline nlohmann::json optional_json(const std::optional<double>& x) {
    return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const DirectionAgreement& a) {
    return {{"pos_acc_vs_embedding", optional_json(a.pos_acc_vs_embedding)},
            {"popular_pairwise_cos", optional_json(a.popular_pairwise)},
            {"all_items_pairwise_cos", optional_json(a.all_pairwise)},
            {"item_direction_acc_vs_emb", optional_json(a.item_direction_sources)},
            {"user_direction_acc_vs_emb", optional_json(a.user_direction_sources)}};
}

}  // namespace gradebias
