#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "gradebias/dataset.hpp"
#include "gradebias/synthetic.hpp"

using namespace gradebias;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ctest runs each case in its own process, possibly concurrently.
const fs::path kRoot = fs::temp_directory_path() / ("gradebias_cli_" + std::to_string(::getpid()));

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome cli(const std::string& args) {
    const auto o = kRoot / "stdout.txt";
    const auto e = kRoot / "stderr.txt";
    const std::string cmd = std::string("'") + GRADEBIAS_CLI_PATH + "' " + args + " >'" + o.string() + "' 2>'" +
                            e.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

std::string p(const fs::path& x) { return "'" + x.string() + "'"; }

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fs::remove_all(kRoot);
        fs::create_directories(kRoot);
        SyntheticSpec spec;
        spec.num_users = 60;
        spec.num_items = 40;
        spec.mean_per_user = 12;
        write_interactions((kRoot / "log.tsv").string(), generate_long_tailed(spec), TextFormat::tsv);
        const auto r = cli("split --input " + p(kRoot / "log.tsv") + " --out-dir " + p(kRoot / "b") +
                           " --iid-holdout 0.2");
        ASSERT_EQ(r.code, 0) << r.err;
        const auto t = cli("train --train-file " + p(kRoot / "b" / "train.tsv") + " --out-checkpoint " +
                           p(kRoot / "ck") + " --epochs 5 --dim 8 --lr 0.05");
        ASSERT_EQ(t.code, 0) << t.err;
    }
    static fs::path bundle() { return kRoot / "b"; }
    static fs::path ck() { return kRoot / "ck"; }
};

}  // namespace

TEST_F(Cli, SplitWritesManifest) {
    const auto meta = json::parse(slurp(bundle() / "split_meta.json"));
    EXPECT_EQ(meta["protocol_tag"], "intervened");
    EXPECT_EQ(meta["seed"], 7);
    EXPECT_TRUE(meta.contains("test_iid"));
    for (auto f : {"train.tsv", "val.tsv", "test.tsv", "test_iid.tsv", "users.tsv", "items.tsv"})
        EXPECT_TRUE(fs::exists(bundle() / f)) << f;
    const std::size_t total = meta["train"].get<std::size_t>() + meta["validation"].get<std::size_t>() +
                              meta["test"].get<std::size_t>() + meta["test_iid"].get<std::size_t>();
    EXPECT_EQ(total, meta["interactions"].get<std::size_t>());
}

TEST_F(Cli, SplitRejectsBadRatios) {
    const auto r = cli("split --input " + p(kRoot / "log.tsv") + " --out-dir " + p(kRoot / "bad") +
                       " --ratios 0.5,0.5,0.5");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("sum"), std::string::npos) << r.err;
    EXPECT_EQ(cli("split --input " + p(kRoot / "log.tsv") + " --out-dir " + p(kRoot / "bad") + " --protocol x").code,
              2);
}

TEST_F(Cli, SplitIsByteStable) {
    ASSERT_EQ(cli("split --input " + p(kRoot / "log.tsv") + " --out-dir " + p(kRoot / "b2") + " --iid-holdout 0.2")
                  .code,
              0);
    for (auto f : {"train.tsv", "val.tsv", "test.tsv", "test_iid.tsv", "split_meta.json"})
        EXPECT_EQ(slurp(bundle() / f), slurp(kRoot / "b2" / f)) << f;
}

TEST_F(Cli, TrainWritesCheckpoint) {
    for (auto f : {"manifest.json", "user_vectors.bin", "item_vectors.bin", "accum_item.bin", "loss.csv"})
        EXPECT_TRUE(fs::exists(ck() / f)) << f;
    const auto loss = slurp(ck() / "loss.csv");
    EXPECT_EQ(loss.rfind("epoch,mean_loss\n", 0), 0u);
    EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 6);
}

TEST_F(Cli, TrainBceAndJsonSummary) {
    const auto r = cli("--json train --train-file " + p(bundle() / "train.tsv") + " --out-checkpoint " +
                       p(kRoot / "ck_bce") + " --loss bce --epochs 2 --dim 4");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["epochs"], 2);
    const auto manifest = json::parse(slurp(kRoot / "ck_bce" / "manifest.json"));
    EXPECT_NE(manifest.dump().find("bce"), std::string::npos);
}

TEST_F(Cli, TrainConfigAndOverrides) {
    {
        std::ofstream cfg(kRoot / "t.cfg");
        cfg << "# toy\nepochs=3\ndim=4\nlr=0.01\n";
    }
    const auto r = cli("--json train --config " + p(kRoot / "t.cfg") + " --train-file " + p(bundle() / "train.tsv") +
                       " --out-checkpoint " + p(kRoot / "ck_cfg") + " --epochs 1");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out)["epochs"], 1);
    EXPECT_EQ(cli("train --train-file " + p(bundle() / "train.tsv") + " --out-checkpoint " + p(kRoot / "x") +
                  " --set bogus=1")
                  .code,
              2);
    EXPECT_EQ(cli("train --train-file " + p(bundle() / "train.tsv") + " --out-checkpoint " + p(kRoot / "x") +
                  " --batch-size 0")
                  .code,
              2);
}

TEST_F(Cli, DivergenceIsNumericError) {
    const auto r = cli("train --train-file " + p(bundle() / "train.tsv") + " --out-checkpoint " + p(kRoot / "nan") +
                       " --lr 1e200 --epochs 3 --dim 4 --normalize-users false");
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("epoch"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingFileIsIoError) {
    EXPECT_EQ(cli("split --input " + p(kRoot / "nope.tsv") + " --out-dir " + p(kRoot / "z")).code, 4);
    EXPECT_EQ(cli("eval --checkpoint " + p(kRoot / "nock") + " --bundle-dir " + p(bundle()) + " --out-dir " +
                  p(kRoot / "z"))
                  .code,
              4);
}

TEST_F(Cli, UnknownSubcommandIsConfigError) {
    EXPECT_EQ(cli("frobnicate").code, 2);
    EXPECT_EQ(cli("--help").code, 0);
}

TEST_F(Cli, SweepCoversDefaultGrid) {
    const auto r = cli("sweep --checkpoint " + p(ck()) + " --val-file " + p(bundle() / "val.tsv") + " --out-dir " +
                       p(kRoot / "sw"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = slurp(kRoot / "sw" / "sweep.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 122);
    const auto best = json::parse(slurp(kRoot / "sw" / "best.json"));
    EXPECT_EQ(best["cells"], 121);
    EXPECT_NE(r.out.find("over 121 cells"), std::string::npos);
}

TEST_F(Cli, ZeroAlphaMatchesVanilla) {
    const std::string base = "eval --checkpoint " + p(ck()) + " --bundle-dir " + p(bundle()) + " --k 5,20";
    ASSERT_EQ(cli(base + " --out-dir " + p(kRoot / "e0")).code, 0);
    ASSERT_EQ(cli(base + " --vanilla --out-dir " + p(kRoot / "ev")).code, 0);
    const auto a = json::parse(slurp(kRoot / "e0" / "report.json"));
    const auto b = json::parse(slurp(kRoot / "ev" / "report.json"));
    EXPECT_EQ(a["metrics"], b["metrics"]);
    EXPECT_EQ(a["metrics"].size(), 2u);
}

TEST_F(Cli, EvalGroupAndUserTables) {
    const auto r = cli("eval --checkpoint " + p(ck()) + " --bundle-dir " + p(bundle()) +
                       " --alpha1 0.4 --groups --per-user --out-dir " + p(kRoot / "eg"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto g = slurp(kRoot / "eg" / "per_group.csv");
    EXPECT_EQ(g.rfind("bin,recall,recommended_frequency\n", 0), 0u);
    EXPECT_EQ(std::count(g.begin(), g.end(), '\n'), 6);
    EXPECT_EQ(slurp(kRoot / "eg" / "per_user.csv").rfind("user,recall,hit,ndcg\n", 0), 0u);
    EXPECT_EQ(cli("eval --checkpoint " + p(ck()) + " --bundle-dir " + p(bundle()) + " --split nope --out-dir " +
                  p(kRoot / "eg"))
                  .code,
              2);
}

TEST_F(Cli, MixAtZeroEqualsIidEval) {
    ASSERT_EQ(cli("mix-eval --checkpoint " + p(ck()) + " --bundle-dir " + p(bundle()) +
                  " --alpha1 0.6 --out-dir " + p(kRoot / "mx"))
                  .code,
              0);
    ASSERT_EQ(cli("eval --checkpoint " + p(ck()) + " --bundle-dir " + p(bundle()) + " --alpha1 0.6 --test-file " +
                  p(bundle() / "test_iid.tsv") + " --out-dir " + p(kRoot / "ei"))
                  .code,
              0);
    std::ifstream mix(kRoot / "mx" / "mix.csv");
    std::string header, first;
    std::getline(mix, header);
    std::getline(mix, first);
    EXPECT_EQ(header, "proportion,interactions,recall_base,recall_adjusted,advantage,ndcg_base,ndcg_adjusted");
    std::vector<std::string> cells;
    std::stringstream ss(first);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 7u);
    const auto rep = json::parse(slurp(kRoot / "ei" / "report.json"));
    const auto meta = json::parse(slurp(bundle() / "split_meta.json"));
    EXPECT_EQ(cells[0], "0");
    // The IID holdout is smaller than the intervened test set here, so the
    // proportion-0 blend is the whole IID set.
    ASSERT_LE(meta["test_iid"].get<std::size_t>(), meta["test"].get<std::size_t>());
    EXPECT_EQ(std::stoul(cells[1]), meta["test_iid"].get<std::size_t>());
    EXPECT_EQ(std::stod(cells[3]), rep["metrics"][0]["recall"].get<double>());
}

TEST_F(Cli, DiagnoseOutputs) {
    const auto r = cli("diagnose --checkpoint " + p(ck()) + " --train-file " + p(bundle() / "train.tsv") +
                       " --out-dir " + p(kRoot / "dg"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(kRoot / "dg" / "fig1a.csv").rfind("item,count,cos_pos,cos_neg", 0), 0u);
    EXPECT_EQ(slurp(kRoot / "dg" / "fig1b.csv").rfind("item,count,pos_norm,neg_norm\n", 0), 0u);
    EXPECT_EQ(slurp(kRoot / "dg" / "norms_users.csv").rfind("user,count,norm\n", 0), 0u);
    const auto j = json::parse(slurp(kRoot / "dg" / "agreement.json"));
    EXPECT_FALSE(j["accumulators_all_zero"].get<bool>());
    EXPECT_TRUE(j.contains("spearman_count_vs_grad_gap"));
}

TEST_F(Cli, StatsSummary) {
    const auto r = cli("--json stats --input " + p(kRoot / "log.tsv"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["users"], 60);
    ASSERT_EQ(j["item_groups"].size(), 3u);
    EXPECT_EQ(j["item_groups"][0]["group"], "all");
    EXPECT_EQ(j["item_groups"][0]["count"], j["items"]);
}
