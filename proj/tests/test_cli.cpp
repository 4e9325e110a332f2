#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ltmlc/cli.hpp"
#include "ltmlc/error.hpp"
#include "support.hpp"

namespace ltmlc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json last_json_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  return json::parse(last);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    config = dir.file("cfg.json");
    std::ofstream(config) << R"({
      "seed": 5,
      "synth": {"num_classes": 5, "image_size": 16, "n_train": 40, "n_dev": 20, "n_test": 20},
      "model": {"d": 8, "num_layers": 1, "num_heads": 2, "encoder_channels": [4, 4, 8],
                "image_height": 16, "image_width": 16},
      "train": {"epochs": 2, "warmup_epochs": 1, "base_lr": 1e-3, "warmup_lr": 1e-4, "batch_size": 8,
                "mixup_alpha": 0, "upweight_k": 2}
    })";
  }
  std::vector<std::string> with_config(std::vector<std::string> args) {
    args.insert(args.begin() + 1, {"--config", config});
    return args;
  }
  std::string data() const { return dir.file("data"); }

  Outcome pipeline(const std::string& tag) {
    const auto gen = call(with_config({"generate-data", "--out", data()}));
    if (gen.code != 0) return gen;
    const auto ckpt = dir.file(tag + ".ckpt"), preds = dir.file(tag + "_p.csv");
    const auto tr = call(with_config({"train", "--data", data(), "--out", ckpt, "--history", dir.file(tag + "_h.csv")}));
    if (tr.code != 0) return tr;
    const auto pr = call(with_config({"predict", "--checkpoint", ckpt, "--input", data() + "/test.csv", "--out", preds}));
    if (pr.code != 0) return pr;
    return call(with_config({"evaluate", "--predictions", preds, "--labels", data() + "/test.csv", "--out",
                             dir.file(tag + "_r.csv")}));
  }

  testing::TempDir dir;
  std::string config;
};

TEST_F(CliTest, PipelineRunsAndIsRepeatable) {
  const auto first = pipeline("a");
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_TRUE(last_json_line(first.out).contains("mAP"));
  const auto second = pipeline("b");
  ASSERT_EQ(second.code, 0) << second.err;
  EXPECT_EQ(slurp(dir.file("a_r.csv")), slurp(dir.file("b_r.csv")));
  EXPECT_EQ(slurp(dir.file("a_p.csv")), slurp(dir.file("b_p.csv")));
  EXPECT_EQ(slurp(dir.file("a_h.csv")), slurp(dir.file("b_h.csv")));
  EXPECT_TRUE(fs::exists(data() + "/vocab.txt"));
}

TEST_F(CliTest, GenerateReportsCounts) {
  const auto r = call(with_config({"generate-data", "--out", data()}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["train"], 40);
  EXPECT_EQ(j["dev"], 20);
  EXPECT_EQ(j["test"], 20);
}

TEST_F(CliTest, UnknownKeyIsConfigErrorWithPointer) {
  const auto r = call(with_config({"train", "--set", "train.lr_rate=3"}));
  EXPECT_EQ(r.code, 2);
  const auto j = json::parse(r.err);
  EXPECT_EQ(j["error"], "config");
  EXPECT_EQ(j["pointer"], "/train/lr_rate");

  std::ofstream(dir.file("bad.json")) << R"({"model": {"head_mode": "twin"}})";
  const auto r2 = call({"train", "--config", dir.file("bad.json")});
  EXPECT_EQ(r2.code, 2);
  EXPECT_EQ(json::parse(r2.err)["pointer"], "/model/head_mode");
}

TEST_F(CliTest, OverridesApplyOnTopOfConfig) {
  const auto r = call(with_config({"generate-data", "--out", data(), "--set", "synth.n_test=7"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["test"], 7);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(call({}).code, 2);
  EXPECT_EQ(call({"fly"}).code, 2);
  const auto r = call({"ensemble", "--mode", "best-of"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["error"], "usage");
  EXPECT_EQ(call({"harmonize", "--external", "x.csv"}).code, 2);
}

TEST_F(CliTest, RuntimeErrorExitsOne) {
  const auto r = call(with_config({"train", "--data", dir.file("nowhere")}));
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.err)["error"], "runtime");
}

TEST_F(CliTest, HelpListsConfigKeys) {
  const auto r = call({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* key : {"train.base_lr", "train.mixup_alpha", "model.head_mode", "seed"}) {
    EXPECT_NE(r.out.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(r.out.find("ablate.toggles"), std::string::npos);
}

TEST_F(CliTest, PredictWithTransformBank) {
  ASSERT_EQ(pipeline("a").code, 0);
  std::ofstream(dir.file("bank.json")) << R"({"transforms":[{"type":"identity"}]})";
  const auto r = call(with_config({"predict", "--checkpoint", dir.file("a.ckpt"), "--input", data() + "/test.csv",
                                   "--out", dir.file("tta.csv"), "--tta", dir.file("bank.json")}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir.file("tta.csv")), slurp(dir.file("a_p.csv")));
}

TEST_F(CliTest, EnsembleModes) {
  ASSERT_EQ(call(with_config({"generate-data", "--out", data()})).code, 0);
  std::vector<std::string> dev_preds, test_preds;
  for (int s = 0; s < 2; ++s) {
    const auto ckpt = dir.file("m" + std::to_string(s) + ".ckpt");
    ASSERT_EQ(call(with_config({"train", "--data", data(), "--out", ckpt, "--history", dir.file("h.csv"), "--set",
                                "seed=" + std::to_string(10 + s)}))
                  .code,
              0);
    dev_preds.push_back(dir.file("d" + std::to_string(s) + ".csv"));
    test_preds.push_back(dir.file("t" + std::to_string(s) + ".csv"));
    ASSERT_EQ(call(with_config({"predict", "--checkpoint", ckpt, "--input", data() + "/dev.csv", "--out", dev_preds.back()})).code, 0);
    ASSERT_EQ(call(with_config({"predict", "--checkpoint", ckpt, "--input", data() + "/test.csv", "--out", test_preds.back()})).code, 0);
  }
  const std::string dp = dev_preds[0] + "," + dev_preds[1], tp = test_preds[0] + "," + test_preds[1];
  const auto cw = call(with_config({"ensemble", "--mode", "class-wise", "--k", "2", "--dev-preds", dp, "--test-preds",
                                    tp, "--dev-labels", data() + "/dev.csv", "--out", dir.file("cw.csv")}));
  ASSERT_EQ(cw.code, 0) << cw.err;
  const auto mw = call(with_config({"ensemble", "--mode", "model-wise", "--test-preds", tp, "--out", dir.file("mw.csv")}));
  ASSERT_EQ(mw.code, 0) << mw.err;
  EXPECT_EQ(slurp(dir.file("cw.csv")), slurp(dir.file("mw.csv")));
  const auto k3 = call(with_config({"ensemble", "--mode", "class-wise", "--k", "3", "--dev-preds", dp, "--test-preds",
                                    tp, "--dev-labels", data() + "/dev.csv", "--out", dir.file("x.csv")}));
  EXPECT_EQ(k3.code, 1);
}

TEST_F(CliTest, HarmonizeReportsZeroColumns) {
  ASSERT_EQ(call(with_config({"generate-data", "--out", data()})).code, 0);
  std::ofstream(dir.file("map.csv")) << "source,target\nclass_00,class_00\nclass_03,class_03\n";
  const auto r = call({"harmonize", "--external", data() + "/test.csv", "--mapping", dir.file("map.csv"),
                       "--target-vocab", data() + "/vocab.txt", "--out", dir.file("ext")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["zero_columns"].get<int>() >= 3, true);
  EXPECT_EQ(j["examples"], 20);
  EXPECT_TRUE(fs::exists(dir.file("ext/external.csv")));

  const auto tr = call(with_config({"train", "--data", data(), "--out", dir.file("m.ckpt"), "--history",
                                    dir.file("h.csv"), "--set",
                                    "paths.extra_train=[\"" + dir.file("ext/external.csv") + "\"]"}));
  EXPECT_EQ(tr.code, 0) << tr.err;
}

TEST_F(CliTest, AblateTwoTogglesGivesFourRows) {
  ASSERT_EQ(call(with_config({"generate-data", "--out", data()})).code, 0);
  const auto r = call(with_config({"ablate", "--data", data(), "--out", dir.file("abl.csv"), "--set",
                                   R"(ablate.toggles=["reweighting","tta"])"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["cells"], 4);
  EXPECT_EQ(j["trainings"], 2);
  std::istringstream csv(slurp(dir.file("abl.csv")));
  std::string line;
  int rows = 0;
  std::getline(csv, line);
  EXPECT_EQ(line, "separate_classifier,reweighting,mixup,tta,dev_mAP,tail_mAP");
  while (std::getline(csv, line)) rows += !line.empty();
  EXPECT_EQ(rows, 4);

  const auto dup = call(with_config({"ablate", "--data", data(), "--set", R"(ablate.toggles=["tta","tta"])"}));
  EXPECT_EQ(dup.code, 2);
}

TEST(Override, ParsesJsonOrString) {
  json doc = json::object();
  apply_override(doc, "train.epochs=3");
  apply_override(doc, "paths.data_dir=some/where");
  apply_override(doc, "tta.enabled=true");
  EXPECT_EQ(doc["train"]["epochs"], 3);
  EXPECT_EQ(doc["paths"]["data_dir"], "some/where");
  EXPECT_EQ(doc["tta"]["enabled"], true);
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
}

TEST(RunConfigJson, RoundTripAndSeedPropagation) {
  const auto cfg = RunConfig::from_json(json::parse(R"({"seed": 42})"));
  EXPECT_EQ(cfg.train.seed, 42u);
  EXPECT_EQ(cfg.synth.seed, 42u);
  EXPECT_EQ(cfg.augment.seed, 42u);
  EXPECT_EQ(RunConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
  EXPECT_EQ(cfg.ensemble.mode, EnsembleMode::class_wise);
  EXPECT_FALSE(cfg.ensemble.k.has_value());
}

}  // namespace
}  // namespace ltmlc::cli
