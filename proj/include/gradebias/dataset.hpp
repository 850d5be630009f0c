#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gradebias/error.hpp"

namespace gradebias {

struct Interaction {
    std::size_t user = 0;
    std::size_t item = 0;
    friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

struct InteractionHash {
    std::size_t operator()(const Interaction& x) const noexcept {
        return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(x.user) << 32) ^ x.item);
    }
};

/// External string id <-> dense internal index, in first-seen order.
class IdMap {
public:
    IdMap() = default;
    explicit IdMap(std::vector<std::string> ids) {
        for (auto& id : ids) intern(id);
    }

    std::size_t intern(const std::string& id) {
        auto [it, inserted] = index_.try_emplace(id, ids_.size());
        if (inserted) ids_.push_back(id);
        return it->second;
    }

    std::optional<std::size_t> find(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& external(std::size_t idx) const { return ids_.at(idx); }
    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

    friend bool operator==(const IdMap& a, const IdMap& b) { return a.ids_ == b.ids_; }

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct IdMaps {
    IdMap users;
    IdMap items;
};

/// Deduplicated implicit-feedback log over a fixed user/item index space.
/// Immutable after construction. Parts of a split share the source's
/// index space (and id maps), so an index means the same entity everywhere.
class InteractionDataset {
public:
    InteractionDataset() : ids_(std::make_shared<IdMaps>()) {}

    /// Builds a dataset, dropping repeated (u,i) pairs (first occurrence wins).
    static InteractionDataset from_pairs(std::size_t num_users, std::size_t num_items,
                                         const std::vector<Interaction>& pairs,
                                         std::shared_ptr<const IdMaps> ids = nullptr) {
        InteractionDataset ds;
        ds.num_users_ = num_users;
        ds.num_items_ = num_items;
        if (!ids) {
            auto generated = std::make_shared<IdMaps>();
            for (std::size_t u = 0; u < num_users; ++u) generated->users.intern(std::to_string(u));
            for (std::size_t i = 0; i < num_items; ++i) generated->items.intern(std::to_string(i));
            ids = generated;
        }
        if (ids->users.size() != num_users || ids->items.size() != num_items)
            throw ConfigError("id maps do not match dataset dimensions");
        ds.ids_ = std::move(ids);
        ds.positives_.assign(num_users, {});
        ds.item_counts_.assign(num_items, 0);
        ds.user_counts_.assign(num_users, 0);
        std::unordered_set<Interaction, InteractionHash> seen;
        seen.reserve(pairs.size() * 2);
        for (const auto& p : pairs) {
            if (p.user >= num_users || p.item >= num_items)
                throw IndexError("interaction (" + std::to_string(p.user) + "," + std::to_string(p.item) +
                                 ") outside " + std::to_string(num_users) + "x" + std::to_string(num_items));
            if (!seen.insert(p).second) continue;
            ds.interactions_.push_back(p);
            ds.positives_[p.user].push_back(p.item);
            ++ds.item_counts_[p.item];
            ++ds.user_counts_[p.user];
        }
        for (auto& v : ds.positives_) std::sort(v.begin(), v.end());
        return ds;
    }

    /// Same index space, different interactions.
    InteractionDataset with_interactions(const std::vector<Interaction>& pairs) const {
        return from_pairs(num_users_, num_items_, pairs, ids_);
    }

    std::size_t num_users() const noexcept { return num_users_; }
    std::size_t num_items() const noexcept { return num_items_; }
    std::size_t size() const noexcept { return interactions_.size(); }
    bool empty() const noexcept { return interactions_.empty(); }

    const std::vector<Interaction>& interactions() const noexcept { return interactions_; }
    /// Sorted positive item indices of user `u`.
    const std::vector<std::size_t>& positives(std::size_t u) const { return positives_.at(u); }
    const std::vector<std::size_t>& item_counts() const noexcept { return item_counts_; }
    const std::vector<std::size_t>& user_counts() const noexcept { return user_counts_; }
    const IdMaps& ids() const noexcept { return *ids_; }
    std::shared_ptr<const IdMaps> shared_ids() const noexcept { return ids_; }

    bool contains(std::size_t u, std::size_t i) const {
        const auto& p = positives_.at(u);
        return std::binary_search(p.begin(), p.end(), i);
    }

    /// Interaction set equality over the same index space, order-insensitive.
    bool same_interactions(const InteractionDataset& other) const {
        if (num_users_ != other.num_users_ || num_items_ != other.num_items_) return false;
        return positives_ == other.positives_;
    }

private:
    std::size_t num_users_ = 0;
    std::size_t num_items_ = 0;
    std::vector<Interaction> interactions_;
    std::vector<std::vector<std::size_t>> positives_;
    std::vector<std::size_t> item_counts_;
    std::vector<std::size_t> user_counts_;
    std::shared_ptr<const IdMaps> ids_;
};

enum class TextFormat { tsv, csv };

inline char separator(TextFormat f) { return f == TextFormat::tsv ? '\t' : ','; }

inline TextFormat parse_format(std::string_view s) {
    if (s == "tsv") return TextFormat::tsv;
    if (s == "csv") return TextFormat::csv;
    throw ConfigError("unknown format '" + std::string(s) + "' (expected tsv or csv)");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

inline bool valid_id(std::string_view id) {
    if (id.empty()) return false;
    return std::none_of(id.begin(), id.end(), [](char c) {
        return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == ',' || c == '"';
    });
}

// Returns false for blank lines.
inline bool split_row(std::string_view line, char sep, const std::string& path, std::size_t line_no,
                      std::string& user, std::string& item) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) return false;
    const auto p1 = line.find(sep);
    if (p1 == std::string_view::npos)
        throw ParseError(path, line_no, "expected at least 2 fields");
    const auto p2 = line.find(sep, p1 + 1);
    const auto u = trim(line.substr(0, p1));
    const auto i = trim(line.substr(p1 + 1, p2 == std::string_view::npos ? std::string_view::npos : p2 - p1 - 1));
    if (!valid_id(u)) throw ParseError(path, line_no, "unparsable user id '" + std::string(u) + "'");
    if (!valid_id(i)) throw ParseError(path, line_no, "unparsable item id '" + std::string(i) + "'");
    user.assign(u);
    item.assign(i);
    return true;
}

}  // namespace detail

/// Reads `user<sep>item[<sep>ignored...]` rows; ids are densified in
/// first-seen order.
inline InteractionDataset load_interactions(const std::string& path, TextFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    auto ids = std::make_shared<IdMaps>();
    std::vector<Interaction> pairs;
    std::string line, u, i;
    std::size_t line_no = 0;
    const char sep = separator(format);
    while (std::getline(in, line)) {
        ++line_no;
        if (!detail::split_row(line, sep, path, line_no, u, i)) continue;
        pairs.push_back({ids->users.intern(u), ids->items.intern(i)});
    }
    if (pairs.empty()) throw EmptyDatasetError("'" + path + "' contains no interactions");
    const std::size_t nu = ids->users.size(), ni = ids->items.size();
    return InteractionDataset::from_pairs(nu, ni, pairs, std::move(ids));
}

/// Reads rows against a fixed index space. Rows naming unknown ids are
/// skipped and counted in `skipped`.
inline InteractionDataset load_interactions(const std::string& path, TextFormat format,
                                            std::shared_ptr<const IdMaps> ids, std::size_t* skipped = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<Interaction> pairs;
    std::string line, u, i;
    std::size_t line_no = 0, dropped = 0;
    const char sep = separator(format);
    while (std::getline(in, line)) {
        ++line_no;
        if (!detail::split_row(line, sep, path, line_no, u, i)) continue;
        auto ui = ids->users.find(u);
        auto ii = ids->items.find(i);
        if (!ui || !ii) {
            ++dropped;
            continue;
        }
        pairs.push_back({*ui, *ii});
    }
    if (skipped) *skipped = dropped;
    const std::size_t nu = ids->users.size(), ni = ids->items.size();
    return InteractionDataset::from_pairs(nu, ni, pairs, std::move(ids));
}

inline void write_interactions(const std::string& path, const InteractionDataset& ds, TextFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    const char sep = separator(format);
    for (const auto& x : ds.interactions())
        out << ds.ids().users.external(x.user) << sep << ds.ids().items.external(x.item) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

/// One external id per line, in index order.
inline void write_id_list(const std::string& path, const IdMap& map) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    for (const auto& id : map.ids()) out << id << '\n';
}

inline IdMap read_id_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    IdMap map;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto id = detail::trim(line);
        if (id.empty()) continue;
        if (!detail::valid_id(id)) throw ParseError(path, line_no, "invalid id");
        const std::size_t before = map.size();
        map.intern(std::string(id));
        if (map.size() == before) throw ParseError(path, line_no, "duplicate id '" + std::string(id) + "'");
    }
    return map;
}

// ---------------------------------------------------------------------------
// Splitting

enum class SplitProtocol { iid, intervened };

inline const char* to_string(SplitProtocol p) { return p == SplitProtocol::iid ? "iid" : "intervened"; }

inline SplitProtocol parse_protocol(std::string_view s) {
    if (s == "iid") return SplitProtocol::iid;
    if (s == "intervened") return SplitProtocol::intervened;
    throw ConfigError("unknown protocol '" + std::string(s) + "' (expected iid or intervened)");
}

struct SplitRatios {
    double train = 0.6;
    double validation = 0.1;
    double test = 0.3;
};

inline void validate_ratios(const SplitRatios& r) {
    if (!(r.train > 0.0 && r.validation > 0.0 && r.test > 0.0))
        throw ConfigError("ratios must all be positive");
    if (std::abs(r.train + r.validation + r.test - 1.0) > 1e-9)
        throw ConfigError("ratios must sum to 1 (got " + std::to_string(r.train + r.validation + r.test) + ")");
}

struct SplitBundle {
    InteractionDataset train;
    InteractionDataset validation;
    InteractionDataset test;
    SplitProtocol protocol = SplitProtocol::iid;
    SplitRatios ratios;
    std::uint64_t seed = 0;
    /// Entities present in the source with no training interactions left.
    std::size_t users_without_train = 0;
    std::size_t items_without_train = 0;
};

namespace detail {

/// Fixed-size sampling without replacement with inclusion probability
/// proportional to weight (capped at 1), via randomized systematic sampling.
/// Returns `n` distinct indices in ascending order.
inline std::vector<std::size_t> sample_proportional(const std::vector<double>& weights, std::size_t n,
                                                    std::mt19937_64& rng) {
    const std::size_t total = weights.size();
    n = std::min(n, total);
    std::vector<double> pi(total, 0.0);
    if (n == 0) return {};
    const bool uniform =
        std::all_of(weights.begin(), weights.end(), [&](double w) { return w == weights.front(); });
    if (uniform) {
        std::fill(pi.begin(), pi.end(), static_cast<double>(n) / static_cast<double>(total));
    } else {
        std::vector<bool> capped(total, false);
        std::size_t remaining = n;
        for (;;) {
            double mass = 0.0;
            for (std::size_t k = 0; k < total; ++k)
                if (!capped[k]) mass += weights[k];
            bool changed = false;
            for (std::size_t k = 0; k < total; ++k) {
                if (capped[k]) continue;
                pi[k] = static_cast<double>(remaining) * weights[k] / mass;
                if (pi[k] >= 1.0) {
                    pi[k] = 1.0;
                    capped[k] = true;
                    --remaining;
                    changed = true;
                }
            }
            if (!changed || remaining == 0) break;
        }
        for (std::size_t k = 0; k < total; ++k)
            if (!capped[k] && remaining == 0) pi[k] = 0.0;
    }

    std::vector<std::size_t> perm(total);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const double start = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

    std::vector<std::size_t> picked;
    picked.reserve(n);
    std::vector<bool> selected(total, false);
    double cum = 0.0;
    std::size_t next_point = 0;
    for (std::size_t pos = 0; pos < total && next_point < n; ++pos) {
        const std::size_t k = perm[pos];
        cum += pi[k];
        if (pos + 1 == total) cum = static_cast<double>(n) + 1.0;
        bool hit = false;
        while (next_point < n && start + static_cast<double>(next_point) < cum) {
            hit = true;
            ++next_point;
        }
        if (hit) {
            selected[k] = true;
            picked.push_back(k);
        }
    }
    // Rounding can in principle put two points in one unit interval; top up
    // from the highest remaining probabilities in permutation order.
    if (picked.size() < n) {
        std::vector<std::size_t> rest;
        for (std::size_t k : perm)
            if (!selected[k]) rest.push_back(k);
        std::stable_sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) { return pi[a] > pi[b]; });
        for (std::size_t k : rest) {
            if (picked.size() == n) break;
            picked.push_back(k);
        }
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

inline SplitBundle split_weighted(const InteractionDataset& ds, const SplitRatios& ratios, std::uint64_t seed,
                                  const std::vector<double>& weights, SplitProtocol protocol) {
    validate_ratios(ratios);
    if (ds.empty()) throw EmptyDatasetError("cannot split an empty dataset");
    const std::size_t n = ds.size();
    std::size_t n_test = static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(std::llround(ratios.validation * static_cast<double>(n)));
    n_test = std::min(n_test, n);
    n_val = std::min(n_val, n - n_test);

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> held = sample_proportional(weights, n_test + n_val, rng);
    std::shuffle(held.begin(), held.end(), rng);
    std::vector<int> part(n, 0);  // 0 train, 1 validation, 2 test
    for (std::size_t k = 0; k < held.size(); ++k) part[held[k]] = k < n_test ? 2 : 1;

    std::vector<Interaction> tr, va, te;
    const auto& xs = ds.interactions();
    for (std::size_t k = 0; k < n; ++k) (part[k] == 0 ? tr : part[k] == 1 ? va : te).push_back(xs[k]);

    SplitBundle b;
    b.train = ds.with_interactions(tr);
    b.validation = ds.with_interactions(va);
    b.test = ds.with_interactions(te);
    b.protocol = protocol;
    b.ratios = ratios;
    b.seed = seed;
    for (std::size_t u = 0; u < ds.num_users(); ++u)
        if (ds.user_counts()[u] > 0 && b.train.user_counts()[u] == 0) ++b.users_without_train;
    for (std::size_t i = 0; i < ds.num_items(); ++i)
        if (ds.item_counts()[i] > 0 && b.train.item_counts()[i] == 0) ++b.items_without_train;
    return b;
}

}  // namespace detail

/// Held-out parts drawn with inclusion probability proportional to
/// 1/item_count, so every item carries the same expected held-out mass.
inline SplitBundle split_intervened(const InteractionDataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
    std::vector<double> w;
    w.reserve(ds.size());
    for (const auto& x : ds.interactions()) w.push_back(1.0 / static_cast<double>(ds.item_counts()[x.item]));
    return detail::split_weighted(ds, ratios, seed, w, SplitProtocol::intervened);
}

/// Uniform sampling over interactions.
inline SplitBundle split_iid(const InteractionDataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
    return detail::split_weighted(ds, ratios, seed, std::vector<double>(ds.size(), 1.0), SplitProtocol::iid);
}

/// Removes a uniformly sampled `fraction` of `ds` and returns {rest, holdout}.
/// Used to carve an in-distribution test set out of a biased training part.
inline std::pair<InteractionDataset, InteractionDataset> holdout_iid(const InteractionDataset& ds, double fraction,
                                                                     std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must be in (0,1)");
    const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
    std::mt19937_64 rng(seed);
    const auto held = detail::sample_proportional(std::vector<double>(ds.size(), 1.0), n, rng);
    std::vector<bool> is_held(ds.size(), false);
    for (auto k : held) is_held[k] = true;
    std::vector<Interaction> rest, out;
    for (std::size_t k = 0; k < ds.size(); ++k) (is_held[k] ? out : rest).push_back(ds.interactions()[k]);
    return {ds.with_interactions(rest), ds.with_interactions(out)};
}

/// Blends two equally sized test sets: floor(proportion*N) interactions from
/// the intervened set and the rest from the IID set, deduplicated with
/// backfill. The larger input is first trimmed to N by uniform subsampling.
inline InteractionDataset mix_test_sets(const InteractionDataset& intervened, const InteractionDataset& iid,
                                        double proportion, std::uint64_t seed) {
    if (!(proportion >= 0.0 && proportion <= 1.0)) throw ConfigError("proportion must be in [0,1]");
    if (intervened.empty() && iid.empty()) throw EmptyDatasetError("both test sets are empty");
    if (intervened.num_users() != iid.num_users() || intervened.num_items() != iid.num_items())
        throw ConfigError("test sets use different index spaces");
    const std::size_t n = std::min(intervened.size(), iid.size());
    std::mt19937_64 rng(seed);

    auto trimmed = [&](const InteractionDataset& ds) {
        if (ds.size() == n) return ds.interactions();
        const auto keep = detail::sample_proportional(std::vector<double>(ds.size(), 1.0), n, rng);
        std::vector<Interaction> out;
        out.reserve(n);
        for (auto k : keep) out.push_back(ds.interactions()[k]);
        return out;
    };
    const std::vector<Interaction> a = trimmed(intervened);
    const std::vector<Interaction> b = trimmed(iid);

    const auto from_a = static_cast<std::size_t>(std::floor(proportion * static_cast<double>(n) + 1e-9));
    const std::size_t from_b = n - from_a;

    auto order_of = [&](std::size_t size) {
        std::vector<std::size_t> order(size);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        return order;
    };
    const auto order_a = order_of(a.size());
    const auto order_b = order_of(b.size());

    std::unordered_set<Interaction, InteractionHash> taken;
    std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
    std::size_t got_a = 0, got_b = 0;
    for (std::size_t k = 0; k < order_a.size() && got_a < from_a; ++k) {
        used_a[order_a[k]] = true;
        taken.insert(a[order_a[k]]);
        ++got_a;
    }
    for (std::size_t k = 0; k < order_b.size() && got_b < from_b; ++k) {
        const auto idx = order_b[k];
        if (taken.insert(b[idx]).second) {
            used_b[idx] = true;
            ++got_b;
        }
    }
    // Backfill pairs lost to duplication from the unused part of the
    // intervened pool.
    for (std::size_t k = 0; k < order_a.size() && got_a + got_b < n; ++k) {
        const auto idx = order_a[k];
        if (used_a[idx]) continue;
        if (taken.insert(a[idx]).second) {
            used_a[idx] = true;
            ++got_a;
        }
    }
    std::vector<Interaction> out;
    out.reserve(n);
    for (std::size_t k = 0; k < a.size(); ++k)
        if (used_a[k]) out.push_back(a[k]);
    for (std::size_t k = 0; k < b.size(); ++k)
        if (used_b[k]) out.push_back(b[k]);
    const auto& src = intervened.empty() ? iid : intervened;
    return src.with_interactions(out);
}

// ---------------------------------------------------------------------------
// Popularity / activity grouping

struct PopularityGrouping {
    double threshold_fraction = 0.8;
    /// Items by descending count, ties by ascending index.
    std::vector<std::size_t> item_order;
    std::vector<std::size_t> user_order;
    std::vector<std::size_t> popular_items;  // ascending index
    std::vector<std::size_t> unpopular_items;
    std::vector<std::size_t> active_users;
    std::vector<std::size_t> inactive_users;
    std::vector<bool> is_popular;
    std::vector<bool> is_active;
    /// Fine-grained bins on `item_order`: four bins of floor(5% of items)
    /// followed by the remainder.
    std::vector<std::vector<std::size_t>> item_bins;
    std::vector<std::size_t> item_bin;  // bin of each item
};

inline constexpr std::size_t kNumItemBins = 5;

namespace detail {

inline std::vector<std::size_t> descending_order(const std::vector<std::size_t>& counts) {
    std::vector<std::size_t> order(counts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
    return order;
}

// Minimal descending prefix whose cumulative count reaches threshold*total.
inline std::size_t covering_prefix(const std::vector<std::size_t>& counts, const std::vector<std::size_t>& order,
                                   double threshold) {
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    const double target = threshold * total;
    double cum = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        cum += static_cast<double>(counts[order[k]]);
        if (cum >= target - 1e-9 * total) return k + 1;
    }
    return order.size();
}

}  // namespace detail

inline PopularityGrouping compute_grouping(const InteractionDataset& ds, double threshold_fraction = 0.8) {
    if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0))
        throw ConfigError("threshold fraction must be in (0,1]");
    if (ds.empty()) throw EmptyDatasetError("cannot group an empty dataset");
    PopularityGrouping g;
    g.threshold_fraction = threshold_fraction;
    g.item_order = detail::descending_order(ds.item_counts());
    g.user_order = detail::descending_order(ds.user_counts());

    const auto n_pop = detail::covering_prefix(ds.item_counts(), g.item_order, threshold_fraction);
    g.is_popular.assign(ds.num_items(), false);
    for (std::size_t k = 0; k < n_pop; ++k) g.is_popular[g.item_order[k]] = true;
    for (std::size_t i = 0; i < ds.num_items(); ++i) (g.is_popular[i] ? g.popular_items : g.unpopular_items).push_back(i);

    const auto n_act = detail::covering_prefix(ds.user_counts(), g.user_order, threshold_fraction);
    g.is_active.assign(ds.num_users(), false);
    for (std::size_t k = 0; k < n_act; ++k) g.is_active[g.user_order[k]] = true;
    for (std::size_t u = 0; u < ds.num_users(); ++u) (g.is_active[u] ? g.active_users : g.inactive_users).push_back(u);

    const std::size_t bin_size = ds.num_items() / 20;  // floor(0.05 * items)
    g.item_bins.assign(kNumItemBins, {});
    g.item_bin.assign(ds.num_items(), 0);
    for (std::size_t k = 0; k < g.item_order.size(); ++k) {
        const std::size_t b = bin_size == 0 ? kNumItemBins - 1 : std::min(k / bin_size, kNumItemBins - 1);
        g.item_bins[b].push_back(g.item_order[k]);
        g.item_bin[g.item_order[k]] = b;
    }
    return g;
}

struct UserGroupRow {
    std::string group;
    std::size_t count = 0;
    double pop_i4u = 0.0;  // mean popular positives per user
    double unp_i4u = 0.0;
};

struct ItemGroupRow {
    std::string group;
    std::size_t count = 0;
    double act_u4i = 0.0;  // mean active users per item
    double ina_u4i = 0.0;
};

struct GroupStats {
    std::array<UserGroupRow, 3> users;  // all, active, inactive
    std::array<ItemGroupRow, 3> items;  // all, popular, unpopular
};

inline GroupStats grouping_stats(const InteractionDataset& ds, const PopularityGrouping& g) {
    std::vector<std::size_t> pop_of_user(ds.num_users(), 0), unp_of_user(ds.num_users(), 0);
    std::vector<std::size_t> act_of_item(ds.num_items(), 0), ina_of_item(ds.num_items(), 0);
    for (const auto& x : ds.interactions()) {
        ++(g.is_popular[x.item] ? pop_of_user : unp_of_user)[x.user];
        ++(g.is_active[x.user] ? act_of_item : ina_of_item)[x.item];
    }
    auto mean_over = [](const std::vector<std::size_t>& members, const std::vector<std::size_t>& v) {
        if (members.empty()) return 0.0;
        double s = 0.0;
        for (auto m : members) s += static_cast<double>(v[m]);
        return s / static_cast<double>(members.size());
    };
    std::vector<std::size_t> all_users(ds.num_users()), all_items(ds.num_items());
    std::iota(all_users.begin(), all_users.end(), 0);
    std::iota(all_items.begin(), all_items.end(), 0);

    GroupStats s;
    const std::array<std::pair<const char*, const std::vector<std::size_t>*>, 3> ug{
        {{"all", &all_users}, {"active", &g.active_users}, {"inactive", &g.inactive_users}}};
    for (std::size_t k = 0; k < 3; ++k)
        s.users[k] = {ug[k].first, ug[k].second->size(), mean_over(*ug[k].second, pop_of_user),
                      mean_over(*ug[k].second, unp_of_user)};
    const std::array<std::pair<const char*, const std::vector<std::size_t>*>, 3> ig{
        {{"all", &all_items}, {"popular", &g.popular_items}, {"unpopular", &g.unpopular_items}}};
    for (std::size_t k = 0; k < 3; ++k)
        s.items[k] = {ig[k].first, ig[k].second->size(), mean_over(*ig[k].second, act_of_item),
                      mean_over(*ig[k].second, ina_of_item)};
    return s;
}

}  // namespace gradebias
