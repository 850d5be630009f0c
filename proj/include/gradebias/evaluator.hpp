#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gradebias/dataset.hpp"
#include "gradebias/error.hpp"
#include "gradebias/linalg.hpp"
#include "gradebias/model.hpp"
#include "gradebias/parallel.hpp"

namespace gradebias {

/// Frozen scoring tables: score(u,i) = users.row(u) . items.row(i). The
/// vanilla, normalized and adjusted scorers differ only in how the tables
/// are derived from the model.
struct Scorer {
    Matrix users;
    Matrix items;

    double score(std::size_t u, std::size_t i) const { return dot(users.row(u), items.row(i)); }
    std::size_t num_users() const noexcept { return users.rows(); }
    std::size_t num_items() const noexcept { return items.rows(); }
};

inline Scorer vanilla_scorer(const EmbeddingModel& m) { return {m.users, m.items}; }

inline Scorer normalized_scorer(const EmbeddingModel& m) {
    Scorer s{m.users, m.items};
    for (std::size_t u = 0; u < s.users.rows(); ++u) {
        const Vector unit = normalized(s.users.row(u));
        std::copy(unit.begin(), unit.end(), s.users.row(u).begin());
    }
    return s;
}

/// Indices of the k best unmasked items: descending score, ascending index
/// on ties. `masked[i] != 0` removes item i from the candidates.
inline std::vector<std::size_t> top_k_from_scores(std::span<const double> scores, std::size_t k,
                                                  std::span<const char> masked) {
    std::vector<std::size_t> cand;
    cand.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (masked.empty() || !masked[i]) cand.push_back(i);
    auto key = [&](std::size_t i) { return std::isnan(scores[i]) ? -INFINITY : scores[i]; };
    auto better = [&](std::size_t a, std::size_t b) {
        const double sa = key(a), sb = key(b);
        return sa > sb || (sa == sb && a < b);
    };
    const std::size_t take = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), better);
    cand.resize(take);
    return cand;
}

inline std::vector<std::size_t> top_k(const Scorer& scorer, std::size_t u, std::size_t k,
                                      const std::vector<std::size_t>& mask = {}) {
    if (u >= scorer.num_users()) throw IndexError("user " + std::to_string(u) + " out of range");
    if (k < 1) throw ConfigError("k must be >= 1");
    std::vector<double> scores(scorer.num_items());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = scorer.score(u, i);
    std::vector<char> masked(scorer.num_items(), 0);
    for (auto i : mask) {
        if (i >= masked.size()) throw IndexError("masked item " + std::to_string(i) + " out of range");
        masked[i] = 1;
    }
    return top_k_from_scores(scores, k, masked);
}

struct UserMetrics {
    double recall = 0.0;
    double hit = 0.0;
    double ndcg = 0.0;
    friend bool operator==(const UserMetrics&, const UserMetrics&) = default;
};

/// Binary-gain Recall/HR/NDCG of the first k entries of `ranked` against a
/// sorted, non-empty `relevant` set.
inline UserMetrics metrics_for_user(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant,
                                    std::size_t k) {
    if (relevant.empty()) throw ConfigError("metrics need at least one relevant item");
    const std::size_t depth = std::min(k, ranked.size());
    std::size_t hits = 0;
    double dcg = 0.0;
    for (std::size_t r = 0; r < depth; ++r) {
        if (std::binary_search(relevant.begin(), relevant.end(), ranked[r])) {
            ++hits;
            dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        }
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    UserMetrics m;
    m.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
    m.hit = hits > 0 ? 1.0 : 0.0;
    m.ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
    return m;
}

struct EvalConfig {
    std::vector<std::size_t> k_list{20};
    bool per_user = false;
};

struct MetricsAtK {
    std::size_t k = 0;
    double recall = 0.0;
    double hr = 0.0;
    double ndcg = 0.0;
};

struct GroupRow {
    std::size_t bin = 0;  // 1-based, 1 = most popular
    std::size_t items = 0;
    std::size_t users_with_relevant = 0;
    std::optional<double> recall;
    std::size_t recommended_frequency = 0;
};

struct UserRow {
    std::size_t user = 0;
    UserMetrics metrics;
};

/// Means over users with at least one target positive. Group rows and
/// per-user rows use the first cutoff in k_list.
struct EvalReport {
    std::vector<MetricsAtK> at_k;
    std::size_t users_evaluated = 0;
    std::size_t users_without_positives = 0;
    std::vector<GroupRow> per_group;
    std::vector<std::size_t> item_frequency;
    std::vector<UserRow> per_user;

    const MetricsAtK& at(std::size_t k) const {
        for (const auto& m : at_k)
            if (m.k == k) return m;
        throw ConfigError("cutoff " + std::to_string(k) + " not in report");
    }
};

inline EvalReport evaluate(const Scorer& scorer, const InteractionDataset& target,
                           const std::vector<const InteractionDataset*>& masks, const PopularityGrouping& grouping,
                           const EvalConfig& config) {
    if (config.k_list.empty()) throw ConfigError("k_list is empty");
    for (auto k : config.k_list)
        if (k < 1) throw ConfigError("every k must be >= 1");
    if (target.num_users() != scorer.num_users() || target.num_items() != scorer.num_items())
        throw ConfigError("target set does not match the model dimensions");
    for (const auto* m : masks)
        if (m->num_users() != target.num_users() || m->num_items() != target.num_items())
            throw ConfigError("mask set does not match the model dimensions");
    if (grouping.item_bin.size() != scorer.num_items()) throw ConfigError("grouping does not match the model");

    const std::size_t num_users = scorer.num_users();
    const std::size_t num_items = scorer.num_items();
    const std::size_t max_k = *std::max_element(config.k_list.begin(), config.k_list.end());
    const std::size_t k_main = config.k_list.front();

    std::vector<std::size_t> eval_users;
    for (std::size_t u = 0; u < num_users; ++u)
        if (!target.positives(u).empty()) eval_users.push_back(u);
    if (eval_users.empty()) throw EmptyEvaluationError("no user has a target positive");

    const std::size_t nk = config.k_list.size();
    std::vector<UserMetrics> per_user_k(eval_users.size() * nk);
    std::vector<std::vector<std::size_t>> ranked(eval_users.size());

    parallel_for(eval_users.size(), [&](std::size_t begin, std::size_t end, std::size_t) {
        std::vector<double> scores(num_items);
        std::vector<char> masked(num_items, 0);
        for (std::size_t idx = begin; idx < end; ++idx) {
            const std::size_t u = eval_users[idx];
            const auto pu = scorer.users.row(u);
            for (std::size_t i = 0; i < num_items; ++i) scores[i] = dot(pu, scorer.items.row(i));
            for (const auto* m : masks)
                for (auto i : m->positives(u)) masked[i] = 1;
            ranked[idx] = top_k_from_scores(scores, max_k, masked);
            for (const auto* m : masks)
                for (auto i : m->positives(u)) masked[i] = 0;
            for (std::size_t c = 0; c < nk; ++c)
                per_user_k[idx * nk + c] = metrics_for_user(ranked[idx], target.positives(u), config.k_list[c]);
        }
    });

    EvalReport rep;
    rep.users_evaluated = eval_users.size();
    rep.users_without_positives = num_users - eval_users.size();
    for (std::size_t c = 0; c < nk; ++c) {
        MetricsAtK m{config.k_list[c], 0.0, 0.0, 0.0};
        for (std::size_t idx = 0; idx < eval_users.size(); ++idx) {
            m.recall += per_user_k[idx * nk + c].recall;
            m.hr += per_user_k[idx * nk + c].hit;
            m.ndcg += per_user_k[idx * nk + c].ndcg;
        }
        const double n = static_cast<double>(eval_users.size());
        m.recall /= n;
        m.hr /= n;
        m.ndcg /= n;
        rep.at_k.push_back(m);
    }

    // Exposure and per-bin accuracy at the main cutoff.
    rep.item_frequency.assign(num_items, 0);
    const std::size_t bins = grouping.item_bins.size();
    std::vector<double> bin_recall_sum(bins, 0.0);
    std::vector<std::size_t> bin_users(bins, 0);
    std::vector<std::size_t> rel_in_bin(bins), hit_in_bin(bins);
    for (std::size_t idx = 0; idx < eval_users.size(); ++idx) {
        const std::size_t u = eval_users[idx];
        const std::size_t depth = std::min(k_main, ranked[idx].size());
        std::fill(rel_in_bin.begin(), rel_in_bin.end(), 0);
        std::fill(hit_in_bin.begin(), hit_in_bin.end(), 0);
        const auto& rel = target.positives(u);
        for (auto i : rel) ++rel_in_bin[grouping.item_bin[i]];
        for (std::size_t r = 0; r < depth; ++r) {
            const auto i = ranked[idx][r];
            ++rep.item_frequency[i];
            if (std::binary_search(rel.begin(), rel.end(), i)) ++hit_in_bin[grouping.item_bin[i]];
        }
        for (std::size_t b = 0; b < bins; ++b) {
            if (rel_in_bin[b] == 0) continue;
            bin_recall_sum[b] += static_cast<double>(hit_in_bin[b]) / static_cast<double>(rel_in_bin[b]);
            ++bin_users[b];
        }
        if (config.per_user) rep.per_user.push_back({u, per_user_k[idx * nk]});
    }
    for (std::size_t b = 0; b < bins; ++b) {
        GroupRow row;
        row.bin = b + 1;
        row.items = grouping.item_bins[b].size();
        row.users_with_relevant = bin_users[b];
        if (bin_users[b] > 0) row.recall = bin_recall_sum[b] / static_cast<double>(bin_users[b]);
        for (auto i : grouping.item_bins[b]) row.recommended_frequency += rep.item_frequency[i];
        rep.per_group.push_back(row);
    }
    return rep;
}

enum class EvalTarget { validation, test };

/// Validation masks train; test masks train and validation.
inline EvalReport evaluate(const Scorer& scorer, const SplitBundle& bundle, EvalTarget target,
                           const PopularityGrouping& grouping, const EvalConfig& config) {
    if (target == EvalTarget::validation) return evaluate(scorer, bundle.validation, {&bundle.train}, grouping, config);
    return evaluate(scorer, bundle.test, {&bundle.train, &bundle.validation}, grouping, config);
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["users_evaluated"] = r.users_evaluated;
    j["users_without_positives"] = r.users_without_positives;
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& m : r.at_k) metrics.push_back({{"k", m.k}, {"recall", m.recall}, {"hr", m.hr}, {"ndcg", m.ndcg}});
    j["metrics"] = metrics;
    return j;
}

inline void write_per_group_csv(const std::string& path, const EvalReport& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "bin,recall,recommended_frequency\n";
    for (const auto& g : r.per_group)
        out << g.bin << ',' << format_optional(g.recall) << ',' << g.recommended_frequency << '\n';
}

inline void write_per_user_csv(const std::string& path, const EvalReport& r, const IdMap& users) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "user,recall,hit,ndcg\n";
    for (const auto& row : r.per_user)
        out << users.external(row.user) << ',' << format_double(row.metrics.recall) << ','
            << format_double(row.metrics.hit) << ',' << format_double(row.metrics.ndcg) << '\n';
}

}  // namespace gradebias
