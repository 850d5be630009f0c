#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gradebias/dataset.hpp"

namespace gradebias {

/// Long-tailed synthetic interaction log. Item `i` has base weight
/// (i+1)^-zipf_exponent, so item 0 is the most popular. Users and items are
/// assigned to taste clusters; an item in the user's cluster has its weight
/// multiplied by `cluster_boost`, which gives the data a personal signal
/// on top of the popularity skew.
struct SyntheticSpec {
    std::size_t num_users = 500;
    std::size_t num_items = 200;
    double zipf_exponent = 1.2;
    std::size_t min_per_user = 5;
    double mean_per_user = 20.0;
    std::size_t num_clusters = 5;
    double cluster_boost = 4.0;
    std::uint64_t seed = 1;
};

inline InteractionDataset generate_long_tailed(const SyntheticSpec& spec) {
    if (spec.num_users == 0 || spec.num_items == 0) throw ConfigError("synthetic dataset needs users and items");
    std::mt19937_64 rng(spec.seed);
    const std::size_t clusters = std::max<std::size_t>(spec.num_clusters, 1);
    std::uniform_int_distribution<std::size_t> pick_cluster(0, clusters - 1);

    std::vector<std::size_t> item_cluster(spec.num_items);
    for (auto& c : item_cluster) c = pick_cluster(rng);

    const std::size_t cap = std::max<std::size_t>(1, spec.num_items / 2);
    const double extra_mean = std::max(spec.mean_per_user - static_cast<double>(spec.min_per_user), 0.0);
    std::geometric_distribution<std::size_t> extra(1.0 / (1.0 + extra_mean));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Interaction> pairs;
    std::vector<std::pair<double, std::size_t>> keys(spec.num_items);
    for (std::size_t u = 0; u < spec.num_users; ++u) {
        const std::size_t c = pick_cluster(rng);
        const std::size_t n = std::min(cap, spec.min_per_user + extra(rng));
        // Weighted sampling without replacement via exponential keys.
        for (std::size_t i = 0; i < spec.num_items; ++i) {
            double w = std::pow(static_cast<double>(i + 1), -spec.zipf_exponent);
            if (item_cluster[i] == c) w *= spec.cluster_boost;
            const double r = std::max(unit(rng), 1e-300);
            keys[i] = {std::log(r) / w, i};
        }
        std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n), keys.end(),
                          [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
        for (std::size_t k = 0; k < n; ++k) pairs.push_back({u, keys[k].second});
    }
    return InteractionDataset::from_pairs(spec.num_users, spec.num_items, pairs);
}

}  // namespace gradebias
