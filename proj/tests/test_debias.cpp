#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "gradebias/debias.hpp"
#include "gradebias/synthetic.hpp"
#include "gradebias/trainer.hpp"

using namespace gradebias;

namespace {

AdjustmentContext directions(Vector pop, Vector conf, double a1, double a2) {
    AdjustmentContext c;
    c.popular_direction = std::move(pop);
    c.conformity_direction = std::move(conf);
    c.alpha1 = a1;
    c.alpha2 = a2;
    return c;
}

void expect_vec(const Vector& a, const Vector& b, double tol = 1e-15) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], tol) << k;
}

struct Trained {
    InteractionDataset ds;
    EmbeddingModel model;
    GradientAccumulators acc;
    PopularityGrouping grouping;
};

const Trained& synthetic_run() {
    static const Trained t = [] {
        Trained r;
        r.ds = generate_long_tailed({});
        r.model = init_model(r.ds.num_users(), r.ds.num_items(), 16, {});
        TrainConfig c;
        c.epochs = 20;
        c.dim = 16;
        r.acc = train(r.ds, r.model, c).accumulators;
        r.grouping = compute_grouping(r.ds);
        return r;
    }();
    return t;
}

}  // namespace

TEST(Context, DirectionFromMeanRows) {
    EmbeddingModel m;
    m.users = Matrix(1, 2);
    m.users(0, 0) = 2.0;
    m.items = Matrix(2, 2);
    m.items(0, 0) = 1.0;
    m.items(1, 1) = 1.0;
    auto ds = InteractionDataset::from_pairs(1, 2, {{0, 0}, {0, 1}});
    auto g = compute_grouping(ds, 1.0);
    auto ctx = build_context(m, nullptr, &g, DirectionSource::mean_popular_embeddings, 0.3, 0.4);
    expect_vec(ctx.popular_direction, {std::sqrt(0.5), std::sqrt(0.5)});
    expect_vec(ctx.conformity_direction, {1.0, 0.0});
    EXPECT_FALSE(ctx.popular_degenerate);

    GradientAccumulators zero(1, 2, 2);
    auto z = build_context(m, &zero, nullptr, DirectionSource::accumulators, 1.0, 1.0);
    EXPECT_TRUE(z.popular_degenerate);
    EXPECT_TRUE(z.conformity_degenerate);
    expect_vec(z.popular_direction, {0, 0});
    EXPECT_EQ(adjusted_score(m, z, 0, 0), dot(m.users.row(0), m.items.row(0)));
}

TEST(Context, MissingInputsAreConfigErrors) {
    EmbeddingModel m;
    m.users = Matrix(1, 2);
    m.items = Matrix(1, 2);
    EXPECT_THROW(build_context(m, nullptr, nullptr, DirectionSource::accumulators, 0, 0), ConfigError);
    EXPECT_THROW(build_context(m, nullptr, nullptr, DirectionSource::mean_popular_embeddings, 0, 0), ConfigError);
    EXPECT_EQ(parse_source("acc"), DirectionSource::accumulators);
    EXPECT_THROW(parse_source("both"), ConfigError);
}

TEST(Adjust, HandValues) {
    auto c = directions({1, 0}, {1, 0}, 1.0, 2.0);
    expect_vec(adjust_item(Vector{3, 4}, c), {0, 4});
    EXPECT_EQ(*cosine(adjust_item(Vector{3, 4}, c), c.popular_direction), 0.0);
    c.alpha1 = 0.5;
    expect_vec(adjust_item(Vector{3, 4}, c), {1.5, 4});
    // Same point from the decomposition v = (v.d)d + rest.
    expect_vec(adjust_item(Vector{3, 4}, c), {(1 - 0.5) * 3, 4});
    expect_vec(adjust_user(Vector{1, 1}, c), {-1, 1});
    c.alpha2 = 1.0;
    expect_vec(adjust_user(Vector{2.5, 0}, c), {0, 0});
    c.alpha1 = 0.0;
    c.alpha2 = 0.0;
    EXPECT_EQ(adjust_item(Vector{3, 4}, c), (Vector{3, 4}));
    EXPECT_EQ(adjust_user(Vector{3, 4}, c), (Vector{3, 4}));
    EXPECT_EQ(adjust_item(Vector{0, 0}, directions({1, 0}, {1, 0}, 1.7, 0)), (Vector{0, 0}));
}

TEST(Adjust, TwoStepScore) {
    EmbeddingModel m;
    m.users = Matrix(1, 2);
    m.items = Matrix(1, 2);
    m.users(0, 0) = m.users(0, 1) = 1.0;
    m.items(0, 0) = 2.0;
    m.normalize_users = true;  // ignored: raw stored vectors are adjusted
    auto c = directions({0, 1}, {1, 0}, 1.0, 1.0);
    EXPECT_EQ(adjusted_score(m, c, 0, 0), 0.0);
    auto id = directions({0, 1}, {1, 0}, 0.0, 0.0);
    EXPECT_EQ(adjusted_score(m, id, 0, 0), 2.0);
    EXPECT_THROW(adjusted_score(m, c, 1, 0), IndexError);
}

TEST(Adjust, ProjectionProperties) {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double eps = std::numeric_limits<double>::epsilon();
    for (int t = 0; t < 1000; ++t) {
        const std::size_t dim = 2 + t % 15;
        Vector v(dim), d(dim);
        for (auto& x : v) x = n(rng) * std::pow(10.0, t % 5 - 2);
        for (auto& x : d) x = n(rng);
        d = normalized(d);
        const double nv = norm2(v);
        const Vector full = remove_projection(v, d, 1.0);
        EXPECT_LE(std::abs(dot(full, d)), 1e-10 * nv);
        const Vector twice = remove_projection(full, d, 1.0);
        for (std::size_t k = 0; k < dim; ++k) EXPECT_NEAR(twice[k], full[k], 1e-10 * std::max(1.0, nv));
        const double a = unit(rng);
        EXPECT_LE(norm2(remove_projection(v, d, a)), nv * (1 + 4 * eps));
        // Linearity in alpha, to a few ulps of the operands.
        const double a2 = 2.0 * unit(rng);
        const Vector lhs = remove_projection(v, d, a2);
        for (std::size_t k = 0; k < dim; ++k) {
            const double rhs = v[k] - a2 * (v[k] - full[k]);
            const double scale = std::abs(v[k]) + std::abs(a2 * (v[k] - full[k])) + std::abs(lhs[k]);
            EXPECT_LE(std::abs(lhs[k] - rhs), 8 * eps * scale);
        }
    }
}

TEST(Adjust, ZeroAlphaReproducesVanillaRanking) {
    const auto& t = synthetic_run();
    auto ctx = build_context(t.model, &t.acc, &t.grouping, DirectionSource::mean_popular_embeddings, 0, 0);
    const Scorer adj = adjusted_scorer(t.model, ctx);
    const Scorer van = vanilla_scorer(t.model);
    EXPECT_EQ(adj.users, van.users);
    EXPECT_EQ(adj.items, van.items);
    // And the normalized scorer ranks identically for every user.
    const Scorer nrm = normalized_scorer(t.model);
    for (std::size_t u = 0; u < t.model.num_users(); u += 25) EXPECT_EQ(top_k(adj, u, 20), top_k(nrm, u, 20));
}

TEST(Adjust, DirectionSourcesAgreeOnSyntheticRun) {
    const auto& t = synthetic_run();
    auto acc = build_context(t.model, &t.acc, &t.grouping, DirectionSource::accumulators, 0, 0);
    auto emb = build_context(t.model, &t.acc, &t.grouping, DirectionSource::mean_popular_embeddings, 0, 0);
    EXPECT_GT(*cosine(acc.popular_direction, emb.popular_direction), 0.8);
}

TEST(Adjust, CombinedItemUpdatesCancelUnderBpr) {
    // Each triplet moves its positive and negative item by equal and opposite
    // amounts, which is why the accumulator source averages positive updates.
    const auto& t = synthetic_run();
    const Vector total = mean_of_all_rows(t.acc.item_acc);
    const Vector pos = mean_of_all_rows(t.acc.item_pos_acc);
    EXPECT_LE(norm2(total), 1e-12 * norm2(pos));
}

TEST(Grid, ParsingAndValues) {
    const auto g = parse_alpha_grid("0:2:0.2");
    ASSERT_EQ(g.size(), 11u);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_EQ(g[k], std::round(k * 2.0) / 10.0);
    EXPECT_EQ(g[3], 0.6);
    EXPECT_EQ(parse_alpha_grid("0.4"), (std::vector<double>{0.4}));
    EXPECT_EQ(parse_alpha_grid(" 0 : 1 : 0.5 "), (std::vector<double>{0, 0.5, 1}));
    EXPECT_THROW(parse_alpha_grid("0:2"), ConfigError);
    EXPECT_THROW(parse_alpha_grid("0:x:1"), ConfigError);
    EXPECT_THROW(parse_alpha_grid("0:2:0"), ConfigError);
    EXPECT_THROW(parse_alpha_grid("2:0:0.2"), ConfigError);
}

TEST(Sweep, SingletonGrid) {
    const auto& t = synthetic_run();
    auto b = split_intervened(t.ds, {0.6, 0.1, 0.3}, 1);
    auto g = compute_grouping(b.train);
    auto ctx = build_context(t.model, &t.acc, &g, DirectionSource::mean_popular_embeddings, 0, 0);
    auto r = sweep_alphas(t.model, ctx, b.validation, {&b.train}, g, {0.0}, {0.0});
    ASSERT_EQ(r.cells.size(), 1u);
    EXPECT_EQ(r.best_cell().alpha1, 0.0);
    EXPECT_EQ(r.best_cell().alpha2, 0.0);
}

TEST(Sweep, ConstantMetricPicksOrigin) {
    // Zero directions make every cell identical.
    const auto& t = synthetic_run();
    auto b = split_iid(t.ds, {0.6, 0.1, 0.3}, 2);
    auto g = compute_grouping(b.train);
    auto ctx = directions(Vector(16, 0.0), Vector(16, 0.0), 0, 0);
    const auto grid = parse_alpha_grid("0:2:0.2");
    auto r = sweep_alphas(t.model, ctx, b.validation, {&b.train}, g, grid, grid);
    ASSERT_EQ(r.cells.size(), 121u);
    EXPECT_EQ(r.best, 0u);
    for (const auto& c : r.cells) EXPECT_EQ(c.recall, r.cells[0].recall);
}

TEST(Sweep, TieBreakOrder) {
    // Zero directions make every cell tie, leaving only the tie-break.
    const auto& t = synthetic_run();
    auto b = split_iid(t.ds, {0.6, 0.1, 0.3}, 3);
    auto g = compute_grouping(b.train);
    auto ctx = directions(Vector(16, 0.0), Vector(16, 0.0), 0, 0);
    auto res = sweep_alphas(t.model, ctx, b.validation, {&b.train}, g, {0.4, 0.0}, {0.4, 0.0});
    EXPECT_EQ(res.best_cell().alpha1, 0.0);
    EXPECT_EQ(res.best_cell().alpha2, 0.0);
    auto res2 = sweep_alphas(t.model, ctx, b.validation, {&b.train}, g, {0.4, 0.2}, {0.0, 0.4});
    EXPECT_EQ(res2.best_cell().alpha1, 0.2);
    EXPECT_EQ(res2.best_cell().alpha2, 0.0);
}

TEST(Sweep, BestDominatesAndCsvHasAllCells) {
    const auto& t = synthetic_run();
    auto b = split_intervened(t.ds, {0.6, 0.1, 0.3}, 4);
    auto g = compute_grouping(b.train);
    auto ctx = build_context(t.model, &t.acc, &g, DirectionSource::mean_popular_embeddings, 0, 0);
    const auto grid = parse_alpha_grid("0:2:0.2");
    auto r = sweep_alphas(t.model, ctx, b.validation, {&b.train}, g, grid, grid);
    for (const auto& c : r.cells) EXPECT_GE(r.best_cell().recall, c.recall);
    auto p = std::filesystem::temp_directory_path() / "gradebias_sweep.csv";
    write_sweep_csv(p.string(), r);
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "alpha1,alpha2,recall,hr,ndcg");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 121);
    EXPECT_THROW(sweep_alphas(t.model, ctx, b.validation.with_interactions({}), {&b.train}, g, grid, grid),
                 EmptyDatasetError);
}
