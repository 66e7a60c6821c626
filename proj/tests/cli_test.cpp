#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support.hpp"

using behrt::test::slurp;

namespace {

struct Result {
    int code = -1;
    std::string out, err;
};

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new behrt::test::TempDir("cli");
        auto gc = behrt::data::desk_scale_generator_config(160);
        std::ofstream(dir_->file("gen.json")) << behrt::data::to_json(gc).dump(2);
        std::ofstream(dir_->file("model.cfg"))
            << "num_layers = 1\nnum_heads = 2\nhidden_size = 16\nintermediate_size = 32\nmax_len = 48\n";
        std::ofstream(dir_->file("pre.cfg")) << "task = MLM\nbatch_size = 4\nmax_steps = 6\neval_every = 3\n"
                                                "learning_rate = 0.001\n";
        std::ofstream(dir_->file("fine.cfg")) << "batch_size = 4\nmax_steps = 4\neval_every = 2\nlearning_rate = 0.001\n";
        ASSERT_EQ(run("generate --config " + file("gen.json") + " --out " + file("cohort.jsonl") + " --seed 5").code, 0);
        ASSERT_EQ(run("pretrain --cohort " + file("cohort.jsonl") + " --model-config " + file("model.cfg") +
                      " --config " + file("pre.cfg") + " --out " + file("pre") + " --seed 2")
                      .code,
                  0);
        ASSERT_EQ(run("finetune --checkpoint " + file("pre/best.ckpt") + " --cohort " + file("cohort.jsonl") +
                      " --task T1 --config " + file("fine.cfg") + " --out " + file("t1") + " --seed 3")
                      .code,
                  0);
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }

    static std::string file(const std::string& name) { return dir_->file(name); }

    static Result run(const std::string& args) {
        static int counter = 0;
        const std::string o = dir_->file("stdout" + std::to_string(counter));
        const std::string e = dir_->file("stderr" + std::to_string(counter++));
        const std::string cmd = std::string(BEHRT_TOOL) + " " + args + " >" + o + " 2>" + e;
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(o);
        r.err = slurp(e);
        return r;
    }

    static behrt::test::TempDir* dir_;
};

behrt::test::TempDir* Cli::dir_ = nullptr;

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<std::string> cells(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string c; std::getline(in, c, '\t');) out.push_back(c);
    return out;
}

}  // namespace

TEST_F(Cli, HelpAndVersionExitZero) {
    EXPECT_EQ(run("--help").code, 0);
    const auto v = run("--version");
    EXPECT_EQ(v.code, 0);
    EXPECT_NE(v.out.find("1.0.0"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("generate --out x").code, 2);
    EXPECT_EQ(run("pretrain --cohort " + file("missing.jsonl") + " --out " + file("m") + " --seed 1").code, 2);
    const auto unknown = run("finetune --checkpoint " + file("pre/best.ckpt") + " --cohort " + file("cohort.jsonl") +
                             " --task T4 --out " + file("bad") + " --seed 1");
    EXPECT_EQ(unknown.code, 2);
    EXPECT_FALSE(unknown.err.empty());
}

TEST_F(Cli, InvalidGeneratorConfigExitsTwo) {
    auto j = nlohmann::json::parse(slurp(file("gen.json")));
    j["rules"][0]["q"] = 1.5;
    std::ofstream(file("badgen.json")) << j.dump();
    const auto r = run("generate --config " + file("badgen.json") + " --out " + file("bad.jsonl") + " --seed 1");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("[0,1]"), std::string::npos) << r.err;
}

TEST_F(Cli, TruncatedCohortReportsLine) {
    const auto text = slurp(file("cohort.jsonl"));
    const auto second = text.find('\n') + 1;
    std::ofstream(file("cut.jsonl")) << text.substr(0, second + 20);
    std::ofstream(file("cut.jsonl.vocab")) << slurp(file("cohort.jsonl.vocab"));
    const auto r = run("pretrain --cohort " + file("cut.jsonl") + " --model-config " + file("model.cfg") + " --out " +
                       file("cut") + " --seed 1");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(Cli, DivergenceExitsThree) {
    std::ofstream(file("hot.cfg")) << "task = MLM\nbatch_size = 4\nmax_steps = 20\neval_every = 10\n"
                                      "learning_rate = 1e30\nwarmup_fraction = 0\n";
    const auto r = run("pretrain --cohort " + file("cohort.jsonl") + " --model-config " + file("model.cfg") +
                       " --config " + file("hot.cfg") + " --out " + file("hot") + " --seed 2");
    EXPECT_EQ(r.code, 3) << r.err;
    EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
}

TEST_F(Cli, GenerateIsByteIdenticalForASeed) {
    ASSERT_EQ(run("generate --config " + file("gen.json") + " --out " + file("again.jsonl") + " --seed 5").code, 0);
    EXPECT_EQ(slurp(file("again.jsonl")), slurp(file("cohort.jsonl")));
    EXPECT_EQ(slurp(file("again.jsonl.vocab")), slurp(file("cohort.jsonl.vocab")));
    ASSERT_EQ(run("generate --config " + file("gen.json") + " --out " + file("other.jsonl") + " --seed 6").code, 0);
    EXPECT_NE(slurp(file("other.jsonl")), slurp(file("cohort.jsonl")));
}

TEST_F(Cli, ManifestRecordsRunAndReplayReproduces) {
    const auto m = nlohmann::json::parse(slurp(file("pre/manifest.json")));
    EXPECT_EQ(m.at("command"), "pretrain");
    EXPECT_EQ(m.at("seeds").at("seed"), 2);
    EXPECT_EQ(m.at("threads"), 1);
    EXPECT_TRUE(m.contains("wall_clock_seconds"));
    const auto metrics = slurp(file("pre/metrics.tsv"));
    const auto best = slurp(file("pre/best.ckpt"));
    ASSERT_EQ(run("replay --manifest " + file("pre/manifest.json")).code, 0);
    EXPECT_EQ(slurp(file("pre/metrics.tsv")), metrics);
    EXPECT_EQ(slurp(file("pre/best.ckpt")), best);
}

TEST_F(Cli, PretrainResumeMatchesFullRun) {
    const std::string base = "pretrain --cohort " + file("cohort.jsonl") + " --model-config " + file("model.cfg") +
                             " --config " + file("pre.cfg") + " --seed 2 --out ";
    ASSERT_EQ(run(base + file("half") + " --stop-after 3").code, 0);
    ASSERT_EQ(run(base + file("resumed") + " --resume " + file("half/last.ckpt")).code, 0);
    EXPECT_EQ(slurp(file("resumed/metrics.tsv")), slurp(file("pre/metrics.tsv")));
    EXPECT_EQ(slurp(file("resumed/best.ckpt")), slurp(file("pre/best.ckpt")));
}

TEST_F(Cli, FinetuneManifestNamesBaseCheckpoint) {
    const auto m = nlohmann::json::parse(slurp(file("t1/manifest.json")));
    EXPECT_EQ(m.at("base_checkpoint"), file("pre/best.ckpt"));
    EXPECT_EQ(m.at("task"), "T1");
    EXPECT_TRUE(m.at("skipped").contains("train"));
}

TEST_F(Cli, OracleScoresArePerfect) {
    const auto r = run("evaluate --cohort " + file("cohort.jsonl") + " --checkpoint " + file("t1/best.ckpt") +
                       " --task T1 --scores oracle --out " + file("oracle") + " --seed 3");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = lines(slurp(file("oracle/summary.tsv")));
    ASSERT_EQ(summary.size(), 2u);
    const auto row = cells(summary[1]);
    EXPECT_EQ(row[0], "oracle");
    EXPECT_EQ(row[2], "1.000000");
    EXPECT_EQ(row[3], "1.000000");
}

TEST_F(Cli, ModelEvaluationWritesReports) {
    const std::string args = "evaluate --cohort " + file("cohort.jsonl") + " --checkpoint " + file("t1/best.ckpt") +
                             " --task T1 --seed 3 --out ";
    ASSERT_EQ(run(args + file("eval")).code, 0);
    const auto diseases = lines(slurp(file("eval/diseases.tsv")));
    ASSERT_FALSE(diseases.empty());
    EXPECT_EQ(diseases[0], "Code\tAPS\tAUROC\tDescription\tRatio\tChapter");
    for (std::size_t i = 1; i < diseases.size(); ++i) EXPECT_EQ(cells(diseases[i]).size(), 6u);
    ASSERT_EQ(run(args + file("eval2")).code, 0);
    EXPECT_EQ(slurp(file("eval2/summary.tsv")), slurp(file("eval/summary.tsv")));
    EXPECT_EQ(slurp(file("eval2/diseases.tsv")), slurp(file("eval/diseases.tsv")));
    EXPECT_EQ(run(args.substr(0, args.find("T1")) + "T2 --seed 3 --out " + file("wrong")).code, 2);
    EXPECT_EQ(run("evaluate --cohort " + file("cohort.jsonl") + " --checkpoint " + file("t1/best.ckpt") +
                  " --task T1 --scores prevalence --out " + file("prev") + " --seed 3")
                  .code,
              0);
}

TEST_F(Cli, ModelConfigMismatchIsRejected) {
    std::ofstream(file("wide.cfg")) << "num_layers = 2\nnum_heads = 2\nhidden_size = 16\nintermediate_size = 32\n";
    const auto r = run("evaluate --cohort " + file("cohort.jsonl") + " --checkpoint " + file("t1/best.ckpt") +
                       " --model-config " + file("wide.cfg") + " --task T1 --out " + file("wide") + " --seed 3");
    EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, EmbeddingExportHasOneRowPerDisease) {
    ASSERT_EQ(run("export --checkpoint " + file("pre/best.ckpt") + " --what embeddings --out " + file("emb.tsv")).code, 0);
    const auto rows = lines(slurp(file("emb.tsv")));
    ASSERT_EQ(rows.size(), 61u);
    EXPECT_EQ(cells(rows[1]).size(), 17u);
}

TEST_F(Cli, AttentionExportRowsSumToOne) {
    const auto first = nlohmann::json::parse(lines(slurp(file("cohort.jsonl")))[0]);
    const std::string pid = first.at("patient_id");
    ASSERT_EQ(run("export --checkpoint " + file("pre/best.ckpt") + " --what attention --cohort " +
                  file("cohort.jsonl") + " --patient " + pid + " --out " + file("att.tsv"))
                  .code,
              0);
    const auto rows = lines(slurp(file("att.tsv")));
    ASSERT_GE(rows.size(), 2u);
    EXPECT_EQ(cells(rows[0]).size(), rows.size());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto c = cells(rows[i]);
        double z = 0.0;
        for (std::size_t k = 1; k < c.size(); ++k) z += std::stod(c[k]);
        EXPECT_NEAR(z, 1.0, 1e-5);
    }
    EXPECT_EQ(run("export --checkpoint " + file("pre/best.ckpt") + " --what attention --cohort " +
                  file("cohort.jsonl") + " --patient nobody --out " + file("none.tsv"))
                  .code,
              2);
}
