#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gradebias/dataset.hpp"
#include "gradebias/debias.hpp"
#include "gradebias/diagnostics.hpp"
#include "gradebias/error.hpp"
#include "gradebias/evaluator.hpp"
#include "gradebias/model.hpp"
#include "gradebias/trainer.hpp"

namespace gradebias::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string piece;
    while (std::getline(ss, piece, ',')) out.emplace_back(gradebias::detail::trim(piece));
    return out;
}

inline double to_double(const std::string& what, const std::string& s) {
    return gradebias::detail::parse_number<double>(what, s);
}

inline std::vector<double> parse_doubles(const std::string& what, const std::string& text) {
    std::vector<double> v;
    for (const auto& p : split_list(text)) v.push_back(to_double(what, p));
    if (v.empty()) throw ConfigError(what + " is empty");
    return v;
}

inline std::vector<std::size_t> parse_ks(const std::string& text) {
    std::vector<std::size_t> v;
    for (const auto& p : split_list(text)) v.push_back(gradebias::detail::parse_number<std::size_t>("k", p));
    if (v.empty()) throw ConfigError("k list is empty");
    return v;
}

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

inline void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

inline std::shared_ptr<const IdMaps> checkpoint_ids(const Checkpoint& ck) {
    if (!ck.ids) throw ConfigError("checkpoint has no id lists");
    return ck.ids;
}

/// Reads an interaction file against the checkpoint's index space.
inline InteractionDataset load_against(const std::string& path, const std::shared_ptr<const IdMaps>& ids,
                                       std::size_t* skipped = nullptr) {
    return load_interactions(path, TextFormat::tsv, ids, skipped);
}

struct Bundle {
    InteractionDataset train;
    InteractionDataset validation;
    InteractionDataset test;
};

inline Bundle load_bundle(const fs::path& dir, const std::shared_ptr<const IdMaps>& ids,
                          const std::string& test_file = {}) {
    Bundle b;
    b.train = load_against((dir / "train.tsv").string(), ids);
    b.validation = load_against((dir / "val.tsv").string(), ids);
    b.test = load_against(test_file.empty() ? (dir / "test.tsv").string() : test_file, ids);
    return b;
}

/// Prints a one-line summary, or the JSON object itself with --json.
inline void summary(std::ostream& out, bool as_json, const json& j, const std::string& human) {
    if (as_json)
        out << j.dump() << '\n';
    else
        out << human << '\n';
}

inline Scorer model_scorer(const EmbeddingModel& m) {
    return m.normalize_users ? normalized_scorer(m) : vanilla_scorer(m);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

struct SplitArgs {
    std::string input;
    std::string format = "tsv";
    std::string protocol = "intervened";
    std::string ratios = "0.6,0.1,0.3";
    std::uint64_t seed = 7;
    std::string out_dir;
    double iid_holdout = 0.0;
};

inline int run_split(const SplitArgs& a, std::ostream& out, bool as_json) {
    const auto ds = load_interactions(a.input, parse_format(a.format));
    const auto r = detail::parse_doubles("ratios", a.ratios);
    if (r.size() != 3) throw ConfigError("ratios need three values train,validation,test");
    const SplitRatios ratios{r[0], r[1], r[2]};
    const auto protocol = parse_protocol(a.protocol);
    const auto bundle = protocol == SplitProtocol::intervened ? split_intervened(ds, ratios, a.seed)
                                                              : split_iid(ds, ratios, a.seed);
    const fs::path dir(a.out_dir);
    detail::ensure_dir(dir);
    InteractionDataset train = bundle.train;
    std::optional<InteractionDataset> iid_test;
    // The in-distribution test set is drawn from the training part with a
    // seed derived from the split seed.
    const std::uint64_t holdout_seed = a.seed + 1;
    if (a.iid_holdout > 0.0) {
        auto [rest, held] = holdout_iid(bundle.train, a.iid_holdout, holdout_seed);
        train = std::move(rest);
        iid_test = std::move(held);
    }
    write_interactions((dir / "train.tsv").string(), train, TextFormat::tsv);
    write_interactions((dir / "val.tsv").string(), bundle.validation, TextFormat::tsv);
    write_interactions((dir / "test.tsv").string(), bundle.test, TextFormat::tsv);
    if (iid_test) write_interactions((dir / "test_iid.tsv").string(), *iid_test, TextFormat::tsv);
    write_id_list((dir / "users.tsv").string(), ds.ids().users);
    write_id_list((dir / "items.tsv").string(), ds.ids().items);

    json meta;
    meta["input"] = fs::path(a.input).filename().string();
    meta["protocol_tag"] = to_string(protocol);
    meta["ratios"] = {ratios.train, ratios.validation, ratios.test};
    meta["seed"] = a.seed;
    meta["num_users"] = ds.num_users();
    meta["num_items"] = ds.num_items();
    meta["interactions"] = ds.size();
    meta["train"] = train.size();
    meta["validation"] = bundle.validation.size();
    meta["test"] = bundle.test.size();
    meta["users_without_train"] = bundle.users_without_train;
    meta["items_without_train"] = bundle.items_without_train;
    if (iid_test) {
        meta["iid_holdout"] = a.iid_holdout;
        meta["iid_holdout_seed"] = holdout_seed;
        meta["test_iid"] = iid_test->size();
    }
    detail::write_json(dir / "split_meta.json", meta);
    detail::summary(out, as_json, meta,
                    std::string("split ") + to_string(protocol) + ": train " + std::to_string(train.size()) +
                        ", validation " + std::to_string(bundle.validation.size()) + ", test " +
                        std::to_string(bundle.test.size()) +
                        (iid_test ? ", test_iid " + std::to_string(iid_test->size()) : std::string()));
    return 0;
}

struct TrainArgs {
    std::string config;
    std::string train_file;
    std::string out_checkpoint;
    std::vector<std::string> set;  // key=value overrides
    std::map<std::string, std::string> flags;
};

inline int run_train(const TrainArgs& a, std::ostream& out, bool as_json) {
    TrainConfig cfg;
    if (!a.config.empty()) cfg = load_train_config(a.config);
    for (const auto& [k, v] : a.flags) apply_setting(cfg, k, v);
    for (const auto& kv : a.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, gradebias::detail::trim(std::string_view(kv).substr(0, eq)),
                      gradebias::detail::trim(std::string_view(kv).substr(eq + 1)));
    }
    validate(cfg);

    // Use the split's id lists when they sit next to the training file so
    // that every part of the bundle shares one index space.
    const fs::path train_path(a.train_file);
    const fs::path users_list = train_path.parent_path() / "users.tsv";
    const fs::path items_list = train_path.parent_path() / "items.tsv";
    InteractionDataset ds;
    std::size_t skipped = 0;
    if (fs::exists(users_list) && fs::exists(items_list)) {
        auto ids = std::make_shared<IdMaps>();
        ids->users = read_id_list(users_list.string());
        ids->items = read_id_list(items_list.string());
        ds = load_interactions(a.train_file, TextFormat::tsv, std::move(ids), &skipped);
    } else {
        ds = load_interactions(a.train_file, TextFormat::tsv);
    }
    if (ds.empty()) throw EmptyDatasetError("'" + a.train_file + "' contains no interactions");

    auto model = init_model(ds.num_users(), ds.num_items(), cfg.dim, cfg.init);
    model.normalize_users = cfg.normalize_users;
    auto result = train(ds, model, cfg);

    Checkpoint ck{std::move(model), std::move(result.accumulators), to_settings(cfg), ds.shared_ids()};
    const fs::path dir(a.out_checkpoint);
    save_checkpoint(dir, ck);
    write_loss_trace((dir / "loss.csv").string(), result.epoch_loss);

    json j{{"checkpoint", dir.filename().string()},
           {"epochs", cfg.epochs},
           {"final_loss", result.epoch_loss.back()},
           {"interactions", ds.size()},
           {"skipped_rows", skipped},
           {"skipped_positives", result.skipped_positives},
           {"config_hash", config_hash(ck.train_config)}};
    detail::summary(out, as_json, j,
                    "trained " + std::to_string(cfg.epochs) + " epochs, final loss " +
                        format_double(result.epoch_loss.back()));
    return 0;
}

struct SweepArgs {
    std::string checkpoint;
    std::string val_file;
    std::string train_file;
    std::string grid = "0:2:0.2";
    std::string grid2;
    std::string source = "emb";
    std::size_t k = 20;
    std::string metric = "recall";
    std::string out_dir;
};

inline int run_sweep(const SweepArgs& a, std::ostream& out, bool as_json) {
    const auto ck = load_checkpoint(a.checkpoint);
    const auto ids = detail::checkpoint_ids(ck);
    const std::string train_file =
        a.train_file.empty() ? (fs::path(a.val_file).parent_path() / "train.tsv").string() : a.train_file;
    const auto train_ds = detail::load_against(train_file, ids);
    const auto val = detail::load_against(a.val_file, ids);
    const auto grouping = compute_grouping(train_ds);
    const auto g1 = parse_alpha_grid(a.grid);
    const auto g2 = a.grid2.empty() ? g1 : parse_alpha_grid(a.grid2);
    const auto source = parse_source(a.source);
    const auto ctx = build_context(ck.model, ck.accumulators ? &*ck.accumulators : nullptr, &grouping, source, 0, 0);
    const auto res = sweep_alphas(ck.model, ctx, val, {&train_ds}, grouping, g1, g2, parse_metric(a.metric), a.k);

    const fs::path dir(a.out_dir);
    detail::ensure_dir(dir);
    write_sweep_csv((dir / "sweep.csv").string(), res);
    const auto& b = res.best_cell();
    json j{{"source", to_string(source)}, {"metric", a.metric},  {"k", a.k},
           {"cells", res.cells.size()},   {"best_alpha1", b.alpha1}, {"best_alpha2", b.alpha2},
           {"best_recall", b.recall},     {"best_hr", b.hr},      {"best_ndcg", b.ndcg}};
    detail::write_json(dir / "best.json", j);
    detail::summary(out, as_json, j,
                    "best alpha1=" + format_double(b.alpha1) + " alpha2=" + format_double(b.alpha2) + " " +
                        a.metric + "@" + std::to_string(a.k) + "=" + format_double(b.metric(parse_metric(a.metric))) +
                        " over " + std::to_string(res.cells.size()) + " cells");
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string bundle_dir;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    std::string k = "20";
    bool groups = false;
    bool per_user = false;
    bool vanilla = false;
    std::string source = "emb";
    std::string split = "test";
    std::string test_file;
    std::string out_dir;
};

inline int run_eval(const EvalArgs& a, std::ostream& out, bool as_json) {
    const auto ck = load_checkpoint(a.checkpoint);
    const auto ids = detail::checkpoint_ids(ck);
    const auto b = detail::load_bundle(a.bundle_dir, ids, a.test_file);
    const auto grouping = compute_grouping(b.train);
    const EvalConfig cfg{detail::parse_ks(a.k), a.per_user};

    Scorer scorer;
    const auto source = parse_source(a.source);
    if (a.vanilla) {
        scorer = detail::model_scorer(ck.model);
    } else {
        const auto ctx = build_context(ck.model, ck.accumulators ? &*ck.accumulators : nullptr, &grouping, source,
                                       a.alpha1, a.alpha2);
        scorer = adjusted_scorer(ck.model, ctx);
    }
    EvalReport rep;
    if (a.split == "test")
        rep = evaluate(scorer, b.test, {&b.train, &b.validation}, grouping, cfg);
    else if (a.split == "val" || a.split == "validation")
        rep = evaluate(scorer, b.validation, {&b.train}, grouping, cfg);
    else
        throw ConfigError("unknown split '" + a.split + "' (expected test or val)");

    const fs::path dir(a.out_dir);
    detail::ensure_dir(dir);
    json j = to_json(rep);
    // Provenance only; kept out of the metrics so that equivalent scorers
    // produce identical metric blocks.
    j["split"] = a.split;
    j["scorer"] = a.vanilla ? "model" : "adjusted";
    if (!a.vanilla) {
        j["alpha1"] = a.alpha1;
        j["alpha2"] = a.alpha2;
        j["source"] = to_string(source);
    }
    detail::write_json(dir / "report.json", j);
    if (a.groups) write_per_group_csv((dir / "per_group.csv").string(), rep);
    if (a.per_user) write_per_user_csv((dir / "per_user.csv").string(), rep, ids->users);
    std::string human;
    for (const auto& m : rep.at_k)
        human += "Recall@" + std::to_string(m.k) + "=" + format_double(m.recall) + " HR@" + std::to_string(m.k) + "=" +
                 format_double(m.hr) + " NDCG@" + std::to_string(m.k) + "=" + format_double(m.ndcg) + " ";
    human += "users=" + std::to_string(rep.users_evaluated);
    detail::summary(out, as_json, j, human);
    return 0;
}

struct DiagnoseArgs {
    std::string checkpoint;
    std::string train_file;
    std::string out_dir;
};

inline int run_diagnose(const DiagnoseArgs& a, std::ostream& out, std::ostream& err, bool as_json) {
    const auto ck = load_checkpoint(a.checkpoint);
    if (!ck.accumulators) throw ConfigError("diagnose needs a checkpoint with accumulators");
    const auto ids = detail::checkpoint_ids(ck);
    const auto train_ds = detail::load_against(a.train_file, ids);
    const auto grouping = compute_grouping(train_ds);
    const auto& acc = *ck.accumulators;

    // With regularization the realized embedding change differs from the
    // accumulated loss updates, so report both readings.
    double lambda = 0.0;
    if (auto it = ck.train_config.find("lambda_reg"); it != ck.train_config.end())
        lambda = detail::to_double("lambda_reg", it->second);
    std::optional<Matrix> delta;
    if (lambda > 0.0) {
        const auto init = init_model(ck.model.num_users(), ck.model.num_items(), ck.model.dim(), ck.model.init);
        Matrix d = ck.model.items;
        for (std::size_t k = 0; k < d.data().size(); ++k) d.data()[k] -= init.items.data()[k];
        delta = std::move(d);
    }
    const auto dir_rep =
        gradient_direction_report(acc, grouping, train_ds.item_counts(), delta ? &*delta : nullptr);
    if (dir_rep.all_zero) err << "warning: all accumulators are zero; direction report is empty\n";
    const auto mag = gradient_magnitude_report(acc, grouping, train_ds.item_counts());
    const auto norms = embedding_norm_report(ck.model, grouping, train_ds.item_counts(), train_ds.user_counts());
    const auto agree = direction_agreement(ck.model, acc, grouping);

    const fs::path dir(a.out_dir);
    detail::ensure_dir(dir);
    write_direction_csv((dir / "fig1a.csv").string(), dir_rep, ids->items);
    write_magnitude_csv((dir / "fig1b.csv").string(), mag, ids->items);
    write_norms_csv((dir / "norms_items.csv").string(), norms.items, ids->items, "item");
    write_norms_csv((dir / "norms_users.csv").string(), norms.users, ids->users, "user");
    json j = to_json(agree);
    j["spearman_count_vs_grad_gap"] = optional_json(mag.spearman_count_vs_gap);
    j["spearman_item_count_vs_norm"] = optional_json(norms.item_spearman);
    j["spearman_user_count_vs_norm"] = optional_json(norms.user_spearman);
    j["popular_items"] = grouping.popular_items.size();
    j["active_users"] = grouping.active_users.size();
    j["accumulators_all_zero"] = dir_rep.all_zero;
    detail::write_json(dir / "agreement.json", j);
    detail::summary(out, as_json, j,
                    "diagnostics: spearman(count, |G+|-|G-|)=" + format_optional(mag.spearman_count_vs_gap) +
                        " spearman(count, |Q|)=" + format_optional(norms.item_spearman));
    return 0;
}

struct MixArgs {
    std::string checkpoint;
    std::string bundle_dir;
    std::string iid_test;
    std::string proportions = "0,0.5,0.75,0.9,1.0";
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    std::string source = "emb";
    std::uint64_t seed = 7;
    std::size_t k = 20;
    std::string out_dir;
};

inline int run_mix_eval(const MixArgs& a, std::ostream& out, bool as_json) {
    const auto ck = load_checkpoint(a.checkpoint);
    const auto ids = detail::checkpoint_ids(ck);
    const auto b = detail::load_bundle(a.bundle_dir, ids);
    const std::string iid_path =
        a.iid_test.empty() ? (fs::path(a.bundle_dir) / "test_iid.tsv").string() : a.iid_test;
    const auto iid = detail::load_against(iid_path, ids);
    const auto grouping = compute_grouping(b.train);
    const auto ctx = build_context(ck.model, ck.accumulators ? &*ck.accumulators : nullptr, &grouping,
                                   parse_source(a.source), a.alpha1, a.alpha2);
    const Scorer base = adjusted_scorer(ck.model, build_context(ck.model, ck.accumulators ? &*ck.accumulators : nullptr,
                                                                &grouping, parse_source(a.source), 0.0, 0.0));
    const Scorer adj = adjusted_scorer(ck.model, ctx);
    const EvalConfig cfg{{a.k}, false};

    const fs::path dir(a.out_dir);
    detail::ensure_dir(dir);
    std::ofstream csv(dir / "mix.csv", std::ios::binary);
    if (!csv) throw IoError("cannot write '" + (dir / "mix.csv").string() + "'");
    csv << "proportion,interactions,recall_base,recall_adjusted,advantage,ndcg_base,ndcg_adjusted\n";
    json rows = json::array();
    std::string human;
    for (double p : detail::parse_doubles("proportions", a.proportions)) {
        const auto mixed = mix_test_sets(b.test, iid, p, a.seed);
        const auto rb = evaluate(base, mixed, {&b.train, &b.validation}, grouping, cfg).at(a.k);
        const auto ra = evaluate(adj, mixed, {&b.train, &b.validation}, grouping, cfg).at(a.k);
        csv << format_double(p) << ',' << mixed.size() << ',' << format_double(rb.recall) << ','
            << format_double(ra.recall) << ',' << format_double(ra.recall - rb.recall) << ','
            << format_double(rb.ndcg) << ',' << format_double(ra.ndcg) << '\n';
        rows.push_back({{"proportion", p},
                        {"interactions", mixed.size()},
                        {"recall_base", rb.recall},
                        {"recall_adjusted", ra.recall},
                        {"advantage", ra.recall - rb.recall}});
        human += "p=" + format_double(p) + " advantage=" + format_double(ra.recall - rb.recall) + "\n";
    }
    json j{{"alpha1", a.alpha1}, {"alpha2", a.alpha2}, {"seed", a.seed}, {"k", a.k}, {"rows", rows}};
    if (!human.empty()) human.pop_back();
    detail::summary(out, as_json, j, human);
    return 0;
}

struct StatsArgs {
    std::string input;
    std::string format = "tsv";
};

inline int run_stats(const StatsArgs& a, std::ostream& out, bool as_json) {
    const auto ds = load_interactions(a.input, parse_format(a.format));
    const auto g = compute_grouping(ds);
    const auto s = grouping_stats(ds, g);
    json j{{"users", ds.num_users()},
           {"items", ds.num_items()},
           {"interactions", ds.size()},
           {"popular_items", g.popular_items.size()},
           {"active_users", g.active_users.size()}};
    for (const auto& r : s.users)
        j["user_groups"].push_back({{"group", r.group}, {"count", r.count}, {"pop_i4u", r.pop_i4u}, {"unp_i4u", r.unp_i4u}});
    for (const auto& r : s.items)
        j["item_groups"].push_back({{"group", r.group}, {"count", r.count}, {"act_u4i", r.act_u4i}, {"ina_u4i", r.ina_u4i}});
    detail::summary(out, as_json, j,
                    std::to_string(ds.num_users()) + " users, " + std::to_string(ds.num_items()) + " items, " +
                        std::to_string(ds.size()) + " interactions; " + std::to_string(g.popular_items.size()) +
                        " popular items, " + std::to_string(g.active_users.size()) + " active users");
    return 0;
}

// ---------------------------------------------------------------------------

/// Parses argv and runs one subcommand. Errors are reported on `err` and
/// mapped to exit codes (2 config, 3 numeric, 4 I/O).
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Popularity-bias diagnostics and post-hoc debiasing for matrix factorization"};
    app.require_subcommand(1);
    bool as_json = false;
    app.add_flag("--json", as_json, "Machine-readable summaries");

    SplitArgs sa;
    auto* split = app.add_subcommand("split", "Split an interaction log into train/validation/test");
    split->add_option("--input", sa.input)->required();
    split->add_option("--format", sa.format, "tsv or csv")->capture_default_str();
    split->add_option("--protocol", sa.protocol, "iid or intervened")->capture_default_str();
    split->add_option("--ratios", sa.ratios)->capture_default_str();
    split->add_option("--seed", sa.seed)->capture_default_str();
    split->add_option("--out-dir", sa.out_dir)->required();
    split->add_option("--iid-holdout", sa.iid_holdout, "Fraction of train kept as an IID test set");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train an MF model and record accumulated updates");
    tr->add_option("--config", ta.config);
    tr->add_option("--train-file", ta.train_file)->required();
    tr->add_option("--out-checkpoint", ta.out_checkpoint)->required();
    tr->add_option("--set", ta.set, "key=value override (repeatable)");
    // Typed shortcuts for the usual overrides; they win over --config.
    const std::vector<std::pair<std::string, std::string>> shortcuts{
        {"--loss", "loss"},         {"--lr", "lr"},
        {"--lambda", "lambda_reg"}, {"--epochs", "epochs"},
        {"--batch-size", "batch_size"}, {"--normalize-users", "normalize_users"},
        {"--negatives", "negatives_per_positive"}, {"--seed", "seed"},
        {"--dim", "dim"},           {"--init", "init_distribution"},
        {"--init-scale", "init_scale"}, {"--init-seed", "init_seed"}};
    std::map<std::string, std::string> shortcut_values;
    for (const auto& [flag, key] : shortcuts) tr->add_option(flag, shortcut_values[key]);

    SweepArgs sw;
    auto* sweep = app.add_subcommand("sweep", "Grid search over the two adjustment strengths");
    sweep->add_option("--checkpoint", sw.checkpoint)->required();
    sweep->add_option("--val-file", sw.val_file)->required();
    sweep->add_option("--train-file", sw.train_file, "Defaults to train.tsv next to the validation file");
    sweep->add_option("--grid", sw.grid)->capture_default_str();
    sweep->add_option("--grid2", sw.grid2, "Separate alpha2 grid (defaults to --grid)");
    sweep->add_option("--source", sw.source, "emb or acc")->capture_default_str();
    sweep->add_option("--k", sw.k)->capture_default_str();
    sweep->add_option("--metric", sw.metric, "recall, hr or ndcg")->capture_default_str();
    sweep->add_option("--out-dir", sw.out_dir)->required();

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split bundle");
    ev->add_option("--checkpoint", ea.checkpoint)->required();
    ev->add_option("--bundle-dir", ea.bundle_dir)->required();
    ev->add_option("--alpha1", ea.alpha1)->capture_default_str();
    ev->add_option("--alpha2", ea.alpha2)->capture_default_str();
    ev->add_option("--k", ea.k, "Comma-separated cutoffs")->capture_default_str();
    ev->add_flag("--groups", ea.groups, "Write per_group.csv");
    ev->add_flag("--per-user", ea.per_user, "Write per_user.csv");
    ev->add_flag("--vanilla", ea.vanilla, "Score with the trained model, no adjustment");
    ev->add_option("--source", ea.source)->capture_default_str();
    ev->add_option("--split", ea.split, "test or val")->capture_default_str();
    ev->add_option("--test-file", ea.test_file, "Replace the bundle's test.tsv");
    ev->add_option("--out-dir", ea.out_dir)->required();

    DiagnoseArgs da;
    auto* dg = app.add_subcommand("diagnose", "Gradient and embedding-norm diagnostics");
    dg->add_option("--checkpoint", da.checkpoint)->required();
    dg->add_option("--train-file", da.train_file)->required();
    dg->add_option("--out-dir", da.out_dir)->required();

    MixArgs ma;
    auto* mix = app.add_subcommand("mix-eval", "Evaluate on blends of intervened and IID test data");
    mix->add_option("--checkpoint", ma.checkpoint)->required();
    mix->add_option("--bundle-dir", ma.bundle_dir)->required();
    mix->add_option("--iid-test", ma.iid_test, "Defaults to test_iid.tsv in the bundle");
    mix->add_option("--proportions", ma.proportions)->capture_default_str();
    mix->add_option("--alpha1", ma.alpha1)->capture_default_str();
    mix->add_option("--alpha2", ma.alpha2)->capture_default_str();
    mix->add_option("--source", ma.source)->capture_default_str();
    mix->add_option("--seed", ma.seed)->capture_default_str();
    mix->add_option("--k", ma.k)->capture_default_str();
    mix->add_option("--out-dir", ma.out_dir)->required();

    StatsArgs st;
    auto* stats = app.add_subcommand("stats", "Popularity group statistics of an interaction log");
    stats->add_option("--input", st.input)->required();
    stats->add_option("--format", st.format)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "config error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::config);
    }

    try {
        if (split->parsed()) return run_split(sa, out, as_json);
        if (tr->parsed()) {
            for (const auto& [flag, key] : shortcuts)
                if (tr->count(flag)) ta.flags[key] = shortcut_values[key];
            return run_train(ta, out, as_json);
        }
        if (sweep->parsed()) return run_sweep(sw, out, as_json);
        if (ev->parsed()) return run_eval(ea, out, as_json);
        if (dg->parsed()) return run_diagnose(da, out, err, as_json);
        if (mix->parsed()) return run_mix_eval(ma, out, as_json);
        if (stats->parsed()) return run_stats(st, out, as_json);
    } catch (const Error& e) {
        err << e.what() << '\n';
        return static_cast<int>(e.exit_code());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "io error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::io);
    } catch (const std::bad_alloc&) {
        err << "numeric error: out of memory\n";
        return static_cast<int>(ExitCode::numeric);
    }
    return static_cast<int>(ExitCode::config);
}

}  // namespace gradebias::cli
