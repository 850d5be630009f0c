#pragma once

#include "gradebias/linalg.hpp"

namespace gradebias {

/// Sums of the updates applied to each embedding by the loss term during
/// training (regularization excluded). Item updates are split by the role
/// the item played: positive item (item_pos_acc) or sampled negative
/// (item_neg_acc). item_acc is kept equal to their sum.
struct GradientAccumulators {
    Matrix user_acc;
    Matrix item_acc;
    Matrix item_pos_acc;
    Matrix item_neg_acc;

    GradientAccumulators() = default;
    GradientAccumulators(std::size_t num_users, std::size_t num_items, std::size_t dim)
        : user_acc(num_users, dim), item_acc(num_items, dim), item_pos_acc(num_items, dim),
          item_neg_acc(num_items, dim) {}

    friend bool operator==(const GradientAccumulators&, const GradientAccumulators&) = default;
};

}  // namespace gradebias
