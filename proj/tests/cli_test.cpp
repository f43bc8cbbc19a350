#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "test_util.hpp"
#include "zscr/checkpoint.hpp"
#include "zscr/dataset.hpp"

namespace zscr {
namespace {

using testing::read_file;
using testing::TempDir;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  Result r;
  r.code = tools::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  return out;
}

// Small dataset and a model narrow enough to train in well under a second.
class CliWorld : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = (dir_ / "small.zsed").string();
    model_ = (dir_ / "model.zsck").string();
    config_ = (dir_ / "small.cfg").string();
    testing::write_file(config_,
                        "# narrow model\nlatent_dim=8\nnoise_dim=4\ngen_hidden1=16\ngen_hidden2=16\n"
                        "disc_hidden=8\nbatch_size=16\nlr=0.001\n");
    ASSERT_EQ(run({"synth", "--items", "12", "--di", "8", "--dt", "6", "-o", data_}).code, 0);
  }

  Result train(std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"train", data_, "--config", config_, "--n-outer", "2", "--seed", "4", "-o", model_};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }

  TempDir dir_;
  std::string data_;
  std::string model_;
  std::string config_;
};

TEST(CliSynth, WritesDefaultWorld) {
  TempDir dir;
  const std::string a = (dir / "a.zsed").string();
  const std::string b = (dir / "b.zsed").string();
  const Result r = run({"synth", "-o", a});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "classes=12 seen=8 unseen=4 items=720 d_I=32 d_T=16\n");
  const EmbeddingDataset ds = load_dataset(a);
  EXPECT_EQ(ds.size(), 720u);
  ASSERT_EQ(run({"synth", "--out", b}).code, 0);
  EXPECT_EQ(read_file(a), read_file(b));
  ASSERT_EQ(run({"synth", "--seed", "8", "-o", b}).code, 0);
  EXPECT_NE(read_file(a), read_file(b));
}

TEST(CliSynth, InvalidSpecIsAValidationError) {
  TempDir dir;
  const Result r = run({"synth", "--seen", "12", "-o", (dir / "x.zsed").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(CliArgs, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"train"}).code, 1);
  EXPECT_EQ(run({"gradcheck", "--numeric", "sometimes"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliWorld, TrainWritesCheckpointAndLog) {
  const std::string log = (dir_ / "log.csv").string();
  const Result r = train({"--log", log});
  ASSERT_EQ(r.code, 0) << r.err;
  // inner loops 1 + 2: 15 critic, 3 generator and 3 CSEM rows
  EXPECT_EQ(r.out, "outer=2 d_updates=15 g_updates=3 csem_updates=3 log_rows=21\n");
  EXPECT_NE(r.err.find("#   latent_dim=8"), std::string::npos);
  const auto rows = lines(read_file(log));
  ASSERT_EQ(rows.size(), 22u);
  EXPECT_EQ(rows[0], "outer_it,phase,step,l_d,l_g_adv,div_r,div_w,reg,l_t");
  const Checkpoint ck = load_checkpoint(model_);
  EXPECT_EQ(ck.config.seed, 4u);
  EXPECT_EQ(ck.config.n_outer, 2u);
  EXPECT_EQ(ck.params.dims.latent_dim, 8u);
}

TEST_F(CliWorld, FlagsOverrideConfigFile) {
  const std::string log = (dir_ / "log.csv").string();
  ASSERT_EQ(train({"--log", log, "--ablate", "no_reg", "--set", "alpha=0.125"}).code, 0);
  const auto rows = lines(read_file(log));
  std::size_t g_rows = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = split(rows[i]);
    ASSERT_EQ(f.size(), 9u);
    if (f[1] != "G") continue;
    ++g_rows;
    EXPECT_EQ(std::stod(f[7]), 0.0) << rows[i];
  }
  EXPECT_EQ(g_rows, 3u);
  const Checkpoint ck = load_checkpoint(model_);
  EXPECT_TRUE(ck.config.ablation.no_reg);
  EXPECT_EQ(ck.config.alpha, 0.125f);
  EXPECT_EQ(ck.config.lr, 0.001f);
}

TEST_F(CliWorld, TrainConfigErrors) {
  EXPECT_EQ(train({"--set", "alpha=-1"}).code, 1);
  EXPECT_EQ(train({"--set", "bogus=1"}).code, 1);
  EXPECT_EQ(train({"--ablate", "no_everything"}).code, 1);
  EXPECT_EQ(run({"train", data_, "--config", (dir_ / "missing.cfg").string()}).code, 2);
  EXPECT_EQ(run({"train", (dir_ / "missing.zsed").string()}).code, 2);
}

TEST_F(CliWorld, EvalPrintsSummaryAndWritesMetrics) {
  ASSERT_EQ(train().code, 0);
  const std::string metrics = (dir_ / "metrics.csv").string();
  const Result r = run({"eval", model_, data_, "-o", metrics});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = split(lines(r.out).at(0));
  ASSERT_EQ(summary.size(), 4u);
  EXPECT_EQ(summary[0], "4");
  for (std::size_t i = 1; i < 4; ++i) {
    const double v = std::stod(summary[i]);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const auto rows = lines(read_file(metrics));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "class_id,prec_at_50,ap_at_50,top1_hit");
  // 12 relevant items per class, so Prec@50 is at most 12/50
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(std::stod(split(rows[i])[1]), 0.24 + 1e-9);

  const Result again = run({"eval", model_, data_});
  EXPECT_EQ(again.out, r.out);

  ASSERT_EQ(run({"eval", model_, data_, "--k", "10", "-o", metrics}).code, 0);
  EXPECT_EQ(lines(read_file(metrics)).at(0), "class_id,prec_at_10,ap_at_10,top1_hit");
  EXPECT_EQ(run({"eval", model_, data_, "--k", "0"}).code, 1);
}

TEST_F(CliWorld, EvalRejectsMismatchedOrMissingInputs) {
  ASSERT_EQ(train().code, 0);
  const std::string other = (dir_ / "other.zsed").string();
  ASSERT_EQ(run({"synth", "--items", "12", "--di", "10", "--dt", "6", "-o", other}).code, 0);
  EXPECT_EQ(run({"eval", model_, other}).code, 1);
  EXPECT_EQ(run({"eval", (dir_ / "none.zsck").string(), data_}).code, 2);
  testing::write_file(dir_ / "junk.zsck", "ZSCKjunk");
  EXPECT_EQ(run({"eval", (dir_ / "junk.zsck").string(), data_}).code, 2);
}

TEST_F(CliWorld, RetrieveListsRankedItems) {
  ASSERT_EQ(train().code, 0);
  const EmbeddingDataset ds = load_dataset(data_);
  const ClassId c = ds.unseen.front();
  const Result r = run({"retrieve", model_, data_, "--class", std::to_string(c), "--k", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 5u);
  double previous = 2.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto f = split(rows[i]);
    ASSERT_EQ(f.size(), 5u);
    EXPECT_EQ(f[0], std::to_string(i + 1));
    const std::size_t item = std::stoul(f[1]);
    ASSERT_LT(item, ds.size());
    EXPECT_TRUE(ds.is_unseen(ds.labels[item]));
    EXPECT_EQ(f[3], std::to_string(ds.labels[item]));
    EXPECT_EQ(f[4], ds.labels[item] == c ? "1" : "0");
    const double sim = std::stod(f[2]);
    EXPECT_LE(sim, previous);
    previous = sim;
  }
  EXPECT_EQ(run({"retrieve", model_, data_, "--class", std::to_string(ds.seen.front())}).code, 1);
  EXPECT_EQ(run({"retrieve", model_, data_}).code, 1);
}

TEST(CliGradcheck, PassesAndHonoursThreshold) {
  const Result r = run({"gradcheck"});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0], "loss,max_rel_error,coordinates,worst_tensor,worst_index,analytic,numeric,forward_gap,status");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(split(rows[i]).back(), "pass") << rows[i];

  EXPECT_EQ(run({"gradcheck", "--threshold", "1e-12"}).code, 1);
  const Result self = run({"gradcheck", "--numeric", "self", "--seed", "2"});
  EXPECT_EQ(lines(self.out).size(), 8u);
  EXPECT_EQ(run({"gradcheck", "--batch", "0"}).code, 1);
}

TEST_F(CliWorld, AblateWritesTablesForEveryVariant) {
  const std::string out_dir = (dir_ / "ablation").string();
  const Result r = run({"ablate", data_, "--config", config_, "--n-outer", "2", "--eval-every", "1", "-o", out_dir});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows[0], "variant,prec_at_50,ap_at_50,top1");
  std::vector<std::string> names;
  for (std::size_t i = 1; i < rows.size(); ++i) names.push_back(split(rows[i])[0]);
  EXPECT_EQ(names, (std::vector<std::string>{"full", "no_wrong_class", "no_reg+no_triplet", "no_triplet", "no_reg",
                                             "no_gan", "joint", "most_similar", "kmeans"}));
  EXPECT_EQ(read_file(dir_ / "ablation" / "ablation.csv"), r.out);
  const auto curves = lines(read_file(dir_ / "ablation" / "curves.csv"));
  ASSERT_EQ(curves.size(), 1u + 9u * 2u);
  EXPECT_EQ(curves[0], "variant,outer_it,prec_at_50");
}

}  // namespace
}  // namespace zscr
