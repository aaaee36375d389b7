#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "isogat/cli.hpp"
#include "test_support.hpp"

using namespace isogat;
using namespace isogat::testing;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "isogat");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string small_corpus(const std::string& name) {
  const std::string dir = temp_dir(name);
  const CliRun r = run({"gen-data", "--speakers", "4", "--utterances", "3", "--frames", "8", "--dim",
                        "4", "--layers", "2", "--held-out", "2", "--seed", "5", "--out", dir});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

}  // namespace

TEST(Cli, Theorem1Example) {
  const CliRun r = run({"theorem1", "--n", "2", "--beta", "1", "--hdot", "1,2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("injective_gap"), std::string::npos);
  std::istringstream lines(r.out);
  std::string line;
  double plain = -1, inj = -1;
  while (std::getline(lines, line)) {
    if (line.rfind("plain_gap ", 0) == 0) plain = std::stod(line.substr(10));
    if (line.rfind("injective_gap ", 0) == 0) inj = std::stod(line.substr(14));
  }
  EXPECT_LE(plain, 1e-9);
  EXPECT_GE(inj, 1e-3);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"train", "--bogus"}).code, 1);
  EXPECT_EQ(run({"theorem1", "--hdot", "1,1"}).code, 2);
  EXPECT_EQ(run({"eval", "--model", "/nonexistent.igat", "--trials", "x", "--store", "."}).code, 2);
  const std::string dir = small_corpus("cli_codes");
  const auto file = dir + "/spk000/utt000.sse";
  EXPECT_EQ(run({"pool", "--input", file, "--method", "random"}).code, 1);
  EXPECT_EQ(run({"pool", "--input", file, "--method", "random", "--seed", "3"}).code, 0);
  EXPECT_EQ(run({"pool", "--input", file, "--method", "average"}).code, 1);
}

TEST(Cli, PoolMeanEqualsFrameMean) {
  const std::string dir = small_corpus("cli_pool");
  const auto file = dir + "/spk001/utt002.sse";
  const CliRun r = run({"pool", "--input", file, "--method", "mean", "--out", dir + "/v.txt"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir + "/v.txt");
  std::string text;
  std::getline(in, text);
  std::vector<double> got;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) got.push_back(std::stod(tok));
  const EmbeddingSequence seq = read_sse(file);
  const Vector want = column_mean(seq.layer(seq.layers - 1));
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-15);
}

TEST(Cli, TrainEvalRoundTripAndDeterminism) {
  const std::string dir = small_corpus("cli_train");
  auto train_to = [&](const std::string& stem, const std::string& epochs) {
    return run({"train", "--manifest", dir + "/train.tsv", "--val-manifest", dir + "/test.tsv",
                "--mode", "all", "--hidden", "6", "--epochs", epochs, "--batch", "2", "--lr",
                "0.01", "--seed", "9", "--out-model", dir + "/" + stem + ".igat", "--metrics-csv",
                dir + "/" + stem + ".csv"});
  };
  ASSERT_EQ(train_to("a", "3").code, 0);
  ASSERT_EQ(train_to("b", "3").code, 0);
  EXPECT_EQ(read_bytes(dir + "/a.igat"), read_bytes(dir + "/b.igat"));
  EXPECT_EQ(read_bytes(dir + "/a.csv"), read_bytes(dir + "/b.csv"));

  const CliRun ev = run({"eval", "--model", dir + "/a.igat", "--trials", dir + "/trials.txt",
                         "--store", dir, "--scores-csv", dir + "/scores.csv"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("eer "), std::string::npos);
  EXPECT_NE(ev.out.find("trials 15"), std::string::npos) << ev.out;
}

TEST(Cli, ZeroEpochsSavesInitialization) {
  const std::string dir = small_corpus("cli_epoch0");
  ASSERT_EQ(run({"train", "--manifest", dir + "/train.tsv", "--hidden", "6", "--epochs", "0",
                 "--seed", "4", "--out-model", dir + "/m.igat"})
                .code,
            0);
  TrainConfig cfg;
  cfg.hidden = 6;
  cfg.seed = 4;
  const Dataset ds = load_dataset(load_manifest(dir + "/train.tsv"));
  EXPECT_EQ(flatten_parameters(load_model(dir + "/m.igat")),
            flatten_parameters(init_model(model_config_for(cfg, ds))));
}

TEST(Cli, ConfigFileAndOverride) {
  const std::string dir = small_corpus("cli_config");
  {
    std::ofstream cfg(dir + "/run.ini");
    cfg << "hidden = 6\nepochs = 0\nseed = 4\n";
  }
  const CliRun r = run({"train", "--config", dir + "/run.ini", "--manifest", dir + "/train.tsv",
                        "--seed", "8", "--out-model", dir + "/m.igat"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("hidden=6"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("seed=8"), std::string::npos) << r.out;
  {
    std::ofstream bad(dir + "/bad.ini");
    bad << "no_such_key = 1\n";
  }
  EXPECT_EQ(run({"train", "--config", dir + "/bad.ini", "--manifest", dir + "/train.tsv",
                 "--out-model", dir + "/m.igat"})
                .code,
            1);
}

TEST(Cli, DumpAdjacency) {
  const std::string dir = small_corpus("cli_dump");
  ASSERT_EQ(run({"train", "--manifest", dir + "/train.tsv", "--hidden", "6", "--epochs", "0",
                 "--out-model", dir + "/m.igat"})
                .code,
            0);
  const CliRun r = run({"dump-adjacency", "--model", dir + "/m.igat", "--input",
                        dir + "/spk000/utt000.sse", "--csv", dir + "/a.csv", "--pgm", dir + "/a.pgm"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(dir + "/a.csv");
  std::string first;
  std::getline(csv, first);
  EXPECT_EQ(first, "8");
}
