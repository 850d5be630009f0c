#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gradebias/accumulators.hpp"
#include "gradebias/dataset.hpp"
#include "gradebias/error.hpp"
#include "gradebias/linalg.hpp"
#include "gradebias/model.hpp"

namespace gradebias {

enum class Loss { bpr, bce };

inline const char* to_string(Loss l) { return l == Loss::bpr ? "bpr" : "bce"; }

inline Loss parse_loss(std::string_view s) {
    if (s == "bpr") return Loss::bpr;
    if (s == "bce") return Loss::bce;
    throw ConfigError("unknown loss '" + std::string(s) + "' (expected bpr or bce)");
}

struct TrainConfig {
    Loss loss = Loss::bpr;
    double lr = 0.05;
    double lambda_reg = 1e-4;
    std::size_t epochs = 50;
    std::size_t batch_size = 1;
    bool normalize_users = true;
    std::size_t negatives_per_positive = 1;
    std::uint64_t seed = 7;
    // Model shape and initialization.
    std::size_t dim = 64;
    InitSpec init;
};

inline void validate(const TrainConfig& c) {
    if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw ConfigError("lr must be > 0");
    if (!(c.lambda_reg >= 0.0) || !std::isfinite(c.lambda_reg)) throw ConfigError("lambda_reg must be >= 0");
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.negatives_per_positive < 1) throw ConfigError("negatives_per_positive must be >= 1");
    if (c.loss == Loss::bpr && c.negatives_per_positive != 1)
        throw ConfigError("bpr samples exactly one negative per positive");
    if (c.dim < 1) throw ConfigError("dim must be >= 1");
}

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
    return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "off" || text == "no") return false;
    throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

}  // namespace detail

/// Applies one `key = value` setting. Keys mirror the TrainConfig fields;
/// init fields are `init_distribution`, `init_scale`, `init_seed`.
inline void apply_setting(TrainConfig& c, std::string_view key, std::string_view value) {
    using detail::parse_number;
    if (key == "loss") c.loss = parse_loss(value);
    else if (key == "lr") c.lr = parse_number<double>(key, value);
    else if (key == "lambda_reg") c.lambda_reg = parse_number<double>(key, value);
    else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
    else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "normalize_users") c.normalize_users = detail::parse_bool(key, value);
    else if (key == "negatives_per_positive") c.negatives_per_positive = parse_number<std::size_t>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "dim") c.dim = parse_number<std::size_t>(key, value);
    else if (key == "init_distribution") c.init.distribution = parse_distribution(value);
    else if (key == "init_scale") c.init.scale = parse_number<double>(key, value);
    else if (key == "init_seed") c.init.seed = parse_number<std::uint64_t>(key, value);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Parses flat `key = value` text; `#` starts a comment.
inline TrainConfig parse_train_config(std::string_view text, TrainConfig base = {}) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        apply_setting(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return base;
}

inline TrainConfig load_train_config(const std::string& path, TrainConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_train_config(ss.str(), base);
}

inline std::map<std::string, std::string> to_settings(const TrainConfig& c) {
    return {{"loss", to_string(c.loss)},
            {"lr", format_double(c.lr)},
            {"lambda_reg", format_double(c.lambda_reg)},
            {"epochs", std::to_string(c.epochs)},
            {"batch_size", std::to_string(c.batch_size)},
            {"normalize_users", c.normalize_users ? "true" : "false"},
            {"negatives_per_positive", std::to_string(c.negatives_per_positive)},
            {"seed", std::to_string(c.seed)},
            {"dim", std::to_string(c.dim)},
            {"init_distribution", to_string(c.init.distribution)},
            {"init_scale", format_double(c.init.scale)},
            {"init_seed", std::to_string(c.init.seed)}};
}

inline TrainConfig from_settings(const std::map<std::string, std::string>& kv) {
    TrainConfig c;
    for (const auto& [k, v] : kv) apply_setting(c, k, v);
    return c;
}

// ---------------------------------------------------------------------------
// Negative sampling

struct Triplet {
    std::size_t user = 0;
    std::size_t pos_item = 0;
    std::size_t neg_item = 0;
    friend bool operator==(const Triplet&, const Triplet&) = default;
};

inline constexpr int kMaxRejections = 100;

/// Uniform draw from I \ I+_u: rejection sampling, falling back to an
/// explicit complement after kMaxRejections misses. Empty when the user is
/// positive on every item.
inline std::optional<std::size_t> sample_negative(const InteractionDataset& ds, std::size_t u, std::mt19937_64& rng) {
    const auto& pos = ds.positives(u);
    const std::size_t n = ds.num_items();
    if (pos.size() >= n) return std::nullopt;
    std::uniform_int_distribution<std::size_t> any(0, n - 1);
    for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
        const std::size_t j = any(rng);
        if (!std::binary_search(pos.begin(), pos.end(), j)) return j;
    }
    std::vector<std::size_t> complement;
    complement.reserve(n - pos.size());
    for (std::size_t j = 0, k = 0; j < n; ++j) {
        if (k < pos.size() && pos[k] == j) {
            ++k;
            continue;
        }
        complement.push_back(j);
    }
    return complement[std::uniform_int_distribution<std::size_t>(0, complement.size() - 1)(rng)];
}

struct NegativeSample {
    std::vector<Triplet> triplets;
    std::size_t skipped = 0;  // positives whose user has no negative item
};

inline NegativeSample sample_negatives(const InteractionDataset& ds, std::span<const Interaction> positives,
                                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    NegativeSample out;
    out.triplets.reserve(positives.size());
    for (const auto& p : positives) {
        auto j = sample_negative(ds, p.user, rng);
        if (!j) {
            ++out.skipped;
            continue;
        }
        out.triplets.push_back({p.user, p.item, *j});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Losses and gradients (minimization convention)

namespace detail {

// d(score)/d(P_u) pulled back through the optional normalization map.
inline Vector pull_back_user(const EmbeddingModel& m, std::size_t u, std::span<const double> grad_wrt_scoring_vec) {
    Vector g(grad_wrt_scoring_vec.begin(), grad_wrt_scoring_vec.end());
    if (!m.normalize_users) return g;
    const auto p = m.users.row(u);
    const double n = norm2(p);
    if (n == 0.0) return Vector(g.size(), 0.0);
    const Vector unit = normalized(p);
    const double along = dot(unit, g);
    for (std::size_t d = 0; d < g.size(); ++d) g[d] = (g[d] - along * unit[d]) / n;
    return g;
}

inline double sq(std::span<const double> v) { return dot(v, v); }

}  // namespace detail

/// -log sigma(y_ui - y_uj) + lambda (|P_u|^2 + |Q_i|^2 + |Q_j|^2)
inline double bpr_loss(const EmbeddingModel& m, const Triplet& t, double lambda_reg) {
    const double diff = score(m, t.user, t.pos_item) - score(m, t.user, t.neg_item);
    return softplus(-diff) + lambda_reg * (detail::sq(m.users.row(t.user)) + detail::sq(m.items.row(t.pos_item)) +
                                           detail::sq(m.items.row(t.neg_item)));
}

/// Gradients of bpr_loss. `loss_user`/`loss_pos`/`loss_neg` are the parts
/// coming from the ranking term alone (what the accumulators record).
struct BprGradients {
    double weight = 0.0;  // sigma(y_uj - y_ui)
    Vector user, pos_item, neg_item;
    Vector loss_user, loss_pos, loss_neg;
};

inline BprGradients bpr_gradients(const EmbeddingModel& m, const Triplet& t, double lambda_reg) {
    detail::check_item(m, t.pos_item);
    detail::check_item(m, t.neg_item);
    const Vector pu = scoring_user_vector(m, t.user);
    const auto qi = m.items.row(t.pos_item);
    const auto qj = m.items.row(t.neg_item);
    const double s = sigmoid(dot(pu, qj) - dot(pu, qi));
    const std::size_t dim = m.dim();

    BprGradients g;
    g.weight = s;
    Vector d_scoring(dim);
    g.loss_pos.resize(dim);
    g.loss_neg.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        d_scoring[d] = -s * (qi[d] - qj[d]);
        g.loss_pos[d] = -s * pu[d];
        g.loss_neg[d] = s * pu[d];
    }
    g.loss_user = detail::pull_back_user(m, t.user, d_scoring);
    g.user = g.loss_user;
    g.pos_item = g.loss_pos;
    g.neg_item = g.loss_neg;
    axpy(2.0 * lambda_reg, m.users.row(t.user), g.user);
    axpy(2.0 * lambda_reg, qi, g.pos_item);
    axpy(2.0 * lambda_reg, qj, g.neg_item);
    return g;
}

struct BceResult {
    double loss = 0.0;
    double dscore = 0.0;  // sigma(score) - y
    Vector user, item;
    Vector loss_user, loss_item;
};

/// Binary cross-entropy on p = sigma(score(u,i)) plus lambda (|P_u|^2 + |Q_i|^2).
inline BceResult bce_loss_and_gradients(const EmbeddingModel& m, std::size_t u, std::size_t i, int label,
                                        double lambda_reg) {
    if (label != 0 && label != 1) throw ConfigError("bce label must be 0 or 1");
    detail::check_item(m, i);
    const Vector pu = scoring_user_vector(m, u);
    const auto qi = m.items.row(i);
    const double z = dot(pu, qi);
    const double y = static_cast<double>(label);

    BceResult r;
    r.loss = softplus(z) - y * z + lambda_reg * (detail::sq(m.users.row(u)) + detail::sq(qi));
    r.dscore = sigmoid(z) - y;
    const std::size_t dim = m.dim();
    Vector d_scoring(dim);
    r.loss_item.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        d_scoring[d] = r.dscore * qi[d];
        r.loss_item[d] = r.dscore * pu[d];
    }
    r.loss_user = detail::pull_back_user(m, u, d_scoring);
    r.user = r.loss_user;
    r.item = r.loss_item;
    axpy(2.0 * lambda_reg, m.users.row(u), r.user);
    axpy(2.0 * lambda_reg, qi, r.item);
    return r;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
    GradientAccumulators accumulators;
    std::vector<double> epoch_loss;  // mean of batch-mean losses
    std::size_t skipped_positives = 0;
};

/// Called after every parameter update with (epoch, batch) 1-based.
using BatchObserver =
    std::function<void(std::size_t, std::size_t, const EmbeddingModel&, const GradientAccumulators&)>;

namespace detail {

// Sparse per-batch gradient buffer over a dense table.
class GradientBuffer {
public:
    GradientBuffer(std::size_t rows, std::size_t cols) : grad_(rows, cols), touched_flag_(rows, false) {}

    void add(std::size_t r, double alpha, std::span<const double> g) {
        if (!touched_flag_[r]) {
            touched_flag_[r] = true;
            touched_.push_back(r);
        }
        axpy(alpha, g, grad_.row(r));
    }

    /// params -= step * grad on touched rows; returns false on non-finite.
    bool apply(Matrix& params, double step) {
        bool finite = true;
        for (auto r : touched_) {
            axpy(-step, grad_.row(r), params.row(r));
            for (double x : params.row(r)) finite = finite && std::isfinite(x);
            std::fill(grad_.row(r).begin(), grad_.row(r).end(), 0.0);
            touched_flag_[r] = false;
        }
        touched_.clear();
        return finite;
    }

private:
    Matrix grad_;
    std::vector<bool> touched_flag_;
    std::vector<std::size_t> touched_;
};

}  // namespace detail

/// Mini-batch SGD over shuffled positives. Each batch computes every
/// example's gradient at the current parameters, then takes one step of
/// size lr on the batch mean. Accumulators receive each example's share of
/// that step, so with lambda_reg = 0 the accumulated item update equals the
/// total change of the item embedding.
inline TrainResult train(const InteractionDataset& ds, EmbeddingModel& model, const TrainConfig& config,
                         const BatchObserver& observer = {}) {
    validate(config);
    if (ds.empty()) throw EmptyDatasetError("training set is empty");
    if (model.num_users() != ds.num_users() || model.num_items() != ds.num_items())
        throw ConfigError("model dimensions do not match the training set");
    model.normalize_users = config.normalize_users;

    const std::size_t dim = model.dim();
    TrainResult result;
    result.accumulators = GradientAccumulators(model.num_users(), model.num_items(), dim);
    auto& acc = result.accumulators;
    detail::GradientBuffer user_grad(model.num_users(), dim), item_grad(model.num_items(), dim);

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    const auto& xs = ds.interactions();
    Vector scoring_user(dim);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0, batch = 1; start < order.size(); start += config.batch_size, ++batch) {
            const std::size_t stop = std::min(start + config.batch_size, order.size());
            // Draw negatives first so the batch size used for averaging is known.
            struct Example {
                Interaction pos;
                std::vector<std::size_t> negs;
            };
            std::vector<Example> examples;
            examples.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                const auto& x = xs[order[k]];
                Example ex{x, {}};
                for (std::size_t n = 0; n < config.negatives_per_positive; ++n) {
                    auto j = sample_negative(ds, x.user, rng);
                    if (!j) break;
                    ex.negs.push_back(*j);
                }
                if (ex.negs.empty()) {
                    ++result.skipped_positives;
                    continue;
                }
                examples.push_back(std::move(ex));
            }
            if (examples.empty()) continue;
            const double m = static_cast<double>(examples.size());
            const double share = config.lr / m;

            double batch_loss = 0.0;
            for (const auto& ex : examples) {
                const std::size_t u = ex.pos.user;
                if (config.loss == Loss::bpr) {
                    const Triplet t{u, ex.pos.item, ex.negs.front()};
                    batch_loss += bpr_loss(model, t, config.lambda_reg);
                    const auto g = bpr_gradients(model, t, config.lambda_reg);
                    user_grad.add(u, 1.0, g.user);
                    item_grad.add(t.pos_item, 1.0, g.pos_item);
                    item_grad.add(t.neg_item, 1.0, g.neg_item);
                    axpy(-share, g.loss_user, acc.user_acc.row(u));
                    axpy(-share, g.loss_pos, acc.item_pos_acc.row(t.pos_item));
                    axpy(-share, g.loss_pos, acc.item_acc.row(t.pos_item));
                    axpy(-share, g.loss_neg, acc.item_neg_acc.row(t.neg_item));
                    axpy(-share, g.loss_neg, acc.item_acc.row(t.neg_item));
                } else {
                    auto handle = [&](std::size_t item, int label, Matrix& role_acc) {
                        const auto r = bce_loss_and_gradients(model, u, item, label, config.lambda_reg);
                        batch_loss += r.loss;
                        user_grad.add(u, 1.0, r.user);
                        item_grad.add(item, 1.0, r.item);
                        axpy(-share, r.loss_user, acc.user_acc.row(u));
                        axpy(-share, r.loss_item, role_acc.row(item));
                        axpy(-share, r.loss_item, acc.item_acc.row(item));
                    };
                    handle(ex.pos.item, 1, acc.item_pos_acc);
                    for (auto j : ex.negs) handle(j, 0, acc.item_neg_acc);
                }
            }
            const bool users_ok = user_grad.apply(model.users, share);
            const bool items_ok = item_grad.apply(model.items, share);
            if (!users_ok || !items_ok || !std::isfinite(batch_loss)) throw DivergenceError(epoch, batch);
            loss_sum += batch_loss / m;
            ++batches;
            if (observer) observer(epoch, batch, model, acc);
        }
        result.epoch_loss.push_back(batches ? loss_sum / static_cast<double>(batches) : 0.0);
    }
    return result;
}

inline void write_loss_trace(const std::string& path, const std::vector<double>& epoch_loss) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) out << (e + 1) << ',' << format_double(epoch_loss[e]) << '\n';
}

}  // namespace gradebias
