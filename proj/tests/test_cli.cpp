#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#ifndef DNAT_CLI_PATH
#error "DNAT_CLI_PATH must name the dialect-nat executable"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("dnat_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Outcome run(const std::vector<std::string>& args, const fs::path& cwd = {}) const {
        std::string cmd = "cd " + quote((cwd.empty() ? dir_ : cwd).string()) + " && " + quote(DNAT_CLI_PATH);
        for (const auto& a : args) cmd += " " + quote(a);
        cmd += " >" + quote((dir_ / "stdout.txt").string()) + " 2>" + quote((dir_ / "stderr.txt").string());
        const int status = std::system(cmd.c_str());
        Outcome r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(dir_ / "stdout.txt");
        r.err = slurp(dir_ / "stderr.txt");
        return r;
    }

    void write(const std::string& name, const std::string& content) const {
        std::ofstream(dir_ / name, std::ios::binary) << content;
    }

    // Small corpus plus a tiny training config.
    void make_corpus() const {
        ASSERT_EQ(run({"synth", "--n", "40", "--seed", "3", "--inventory", "12", "--min-words", "2", "--max-words", "4",
                       "--rep-rate", "0", "--out", "c.tsv"})
                      .code,
                  0);
        write("run.conf",
              "d_model = 16\nn_heads = 2\nd_seg = 4\nmax_len = 32\nlength_offset_range = 4\n"
              "epochs = 3\nbatch_size = 4\noptimizer = adam\nlearning_rate = 0.003\n");
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, SynthIsDeterministic) {
    const std::vector<std::string> args = {"synth", "--n", "50", "--seed", "7", "--inventory", "20"};
    auto a = args, b = args;
    a.insert(a.end(), {"--out", "a.tsv"});
    b.insert(b.end(), {"--out", "b.tsv"});
    ASSERT_EQ(run(a).code, 0);
    ASSERT_EQ(run(b).code, 0);
    EXPECT_EQ(count_lines(slurp(dir_ / "a.tsv")), 50u);
    EXPECT_EQ(slurp(dir_ / "a.tsv"), slurp(dir_ / "b.tsv"));
    EXPECT_EQ(slurp(dir_ / "a.tsv.align"), slurp(dir_ / "b.tsv.align"));
    EXPECT_EQ(slurp(dir_ / "a.tsv.rules"), slurp(dir_ / "b.tsv.rules"));
}

TEST_F(Cli, ManifestDescribesRun) {
    ASSERT_EQ(run({"synth", "--n", "10", "--seed", "4", "--inventory", "15", "--out", "c.tsv"}).code, 0);
    const json m = json::parse(slurp(dir_ / "c.tsv.manifest.json"));
    EXPECT_EQ(m["subcommand"], "synth");
    EXPECT_EQ(m["seed"], 4);
    EXPECT_TRUE(m["versions"].contains("tool"));
    EXPECT_TRUE(m["versions"].contains("checkpoint_format"));
    EXPECT_GE(m["wall_seconds"].get<double>(), 0.0);
    EXPECT_EQ(m["options"]["n"], "10");
    EXPECT_EQ(m["options"]["max-words"], "8");
}

TEST_F(Cli, SynthReproducibleFromManifest) {
    ASSERT_EQ(run({"synth", "--n", "30", "--seed", "9", "--inventory", "25", "--out", "c.tsv"}).code, 0);
    const json m = json::parse(slurp(dir_ / "c.tsv.manifest.json"));
    const fs::path other = dir_ / "replay";
    fs::create_directories(other);
    ASSERT_EQ(run(m["replay_argv"].get<std::vector<std::string>>(), other).code, 0);
    EXPECT_EQ(slurp(other / "c.tsv"), slurp(dir_ / "c.tsv"));
    EXPECT_EQ(slurp(other / "c.tsv.align"), slurp(dir_ / "c.tsv.align"));
}

TEST_F(Cli, TrainReproducibleFromManifest) {
    make_corpus();
    ASSERT_EQ(run({"train-nat", "--config", "run.conf", "--corpus", "c.tsv", "--align", "c.tsv.align", "--out", "m.ckpt"})
                  .code,
              0);
    const json m = json::parse(slurp(dir_ / "m.ckpt.manifest.json"));
    EXPECT_EQ(m["run_config"]["epochs"], "3");
    fs::copy_file(dir_ / "m.ckpt", dir_ / "first.ckpt");
    fs::remove(dir_ / "run.conf");
    ASSERT_EQ(run(m["replay_argv"].get<std::vector<std::string>>()).code, 0);
    EXPECT_EQ(slurp(dir_ / "m.ckpt"), slurp(dir_ / "first.ckpt"));
}

TEST_F(Cli, TranslatePrintsOneLine) {
    make_corpus();
    ASSERT_EQ(run({"train-nat", "--config", "run.conf", "--corpus", "c.tsv", "--out", "m.ckpt"}).code, 0);
    const auto r = run({"translate", "--model", "m.ckpt", "--text", "看 https://a.com/x"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_lines(r.out), 1u);
    EXPECT_NE(r.out.find("https://a.com/x"), std::string::npos);
    write("in.txt", "甲\n乙 www.b.cn\n");
    const auto many = run({"translate", "--model", "m.ckpt", "--input", "in.txt"});
    EXPECT_EQ(count_lines(many.out), 2u);
}

TEST_F(Cli, BleuOfIdenticalFilesIsOne) {
    write("c.txt", "我哋去\n你好呀\n");
    write("r.txt", "我哋去\n你好呀\n");
    const auto r = run({"bleu", "--cand", "c.txt", "--ref", "r.txt", "--report", "bleu.tsv"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "1.0000\n");
    EXPECT_TRUE(fs::exists(dir_ / "bleu.tsv.manifest.json"));
}

TEST_F(Cli, BleuLineCountMismatch) {
    write("c.txt", "我\n");
    write("r.txt", "我\n你\n");
    const auto r = run({"bleu", "--cand", "c.txt", "--ref", "r.txt"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error[dimension]:", 0), 0u) << r.err;
}

TEST_F(Cli, HelpListsEveryFlag) {
    const std::map<std::string, std::vector<std::string>> flags = {
        {"synth", {"--n", "--seed", "--inventory", "--min-words", "--max-words", "--rep-rate", "--rules", "--out",
                   "--align", "--rules-out"}},
        {"align", {"--corpus", "--out", "--iterations", "--direction"}},
        {"train-nat", {"--config", "--set", "--corpus", "--valid", "--align", "--augmented", "--out", "--report"}},
        {"train-at", {"--config", "--set", "--corpus", "--valid", "--out", "--report"}},
        {"augment", {"--teacher", "--sources", "--out", "--max-len"}},
        {"translate", {"--model", "--text", "--input", "--out", "--patterns", "--no-collapse", "--max-len"}},
        {"pipeline", {"--model", "--identity", "--stages", "--patterns", "--text", "--input", "--out", "--trace"}},
        {"bleu", {"--cand", "--ref", "--model", "--test", "--smooth", "--report"}},
        {"bench", {"--nat", "--at", "--test", "--n", "--repetitions", "--seconds-per-char", "--max-len", "--report"}},
    };
    for (const auto& [sub, names] : flags) {
        const auto r = run({sub, "--help"});
        EXPECT_EQ(r.code, 0) << sub;
        for (const auto& n : names) EXPECT_NE(r.out.find(n), std::string::npos) << sub << " " << n;
    }
}

TEST_F(Cli, UsageErrorsExitTwo) {
    for (const std::vector<std::string>& args :
         {std::vector<std::string>{}, {"bogus"}, {"synth"}, {"synth", "--out", "x", "--n", "abc"}, {"bleu", "--cand", "a"},
          {"translate", "--model", "m.ckpt"}}) {
        const auto r = run(args);
        EXPECT_EQ(r.code, 2) << r.err;
        EXPECT_EQ(r.err.rfind("error[usage]:", 0), 0u) << r.err;
        EXPECT_EQ(count_lines(r.err), 1u) << r.err;
    }
}

TEST_F(Cli, IoErrorsExitThree) {
    for (const std::vector<std::string>& args :
         {std::vector<std::string>{"translate", "--model", "missing.ckpt", "--text", "x"},
          {"align", "--corpus", "missing.tsv", "--out", "a.txt"},
          {"synth", "--n", "3", "--out", "no/such/dir/c.tsv"}}) {
        const auto r = run(args);
        EXPECT_EQ(r.code, 3) << r.err;
        EXPECT_EQ(r.err.rfind("error[io]:", 0), 0u) << r.err;
    }
}

TEST_F(Cli, DivergenceExitsFour) {
    make_corpus();
    const auto r = run({"train-nat", "--config", "run.conf", "--corpus", "c.tsv", "--set", "learning_rate=1e305",
                        "--set", "clip_norm=0", "--out", "m.ckpt"});
    EXPECT_EQ(r.code, 4);
    EXPECT_NE(r.err.find("error[divergence]:"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir_ / "m.ckpt"));
    EXPECT_EQ(run({"translate", "--model", "m.ckpt", "--text", "甲"}).code, 0);
}

TEST_F(Cli, ConfigErrors) {
    make_corpus();
    EXPECT_EQ(run({"train-nat", "--corpus", "c.tsv", "--set", "lr=3", "--out", "m.ckpt"}).err.rfind("error[config]:", 0), 0u);
    EXPECT_EQ(run({"train-at", "--config", "run.conf", "--corpus", "c.tsv", "--set", "kind=nat", "--out", "m.ckpt"}).code, 1);
    write("stages.txt", "guard\nunguard\ntranslate\n");
    const auto r = run({"pipeline", "--identity", "--stages", "stages.txt", "--text", "x"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error[config]:", 0), 0u) << r.err;
    write("stages2.txt", "guard\njyutping\n");
    EXPECT_EQ(run({"pipeline", "--stages", "stages2.txt", "--text", "x"}).err.rfind("error[config]:", 0), 0u);
}

TEST_F(Cli, AlignWritesOneLinePerPair) {
    make_corpus();
    const auto r = run({"align", "--corpus", "c.tsv", "--out", "a.txt", "--iterations", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_lines(slurp(dir_ / "a.txt")), 40u);
    EXPECT_EQ(json::parse(slurp(dir_ / "a.txt.manifest.json"))["log_likelihood_m2c"].size(), 4u);
}

TEST_F(Cli, PipelineIdentityRow) {
    const auto r = run({"pipeline", "--identity", "--text", "我们 去"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "我们 去\t我们 去\tPH(我) PH(们) PH(去)\n");
    EXPECT_EQ(run({"pipeline", "--text", "我们"}).code, 2);
}

TEST_F(Cli, AtTrainAugmentAndBench) {
    make_corpus();
    ASSERT_EQ(run({"train-nat", "--config", "run.conf", "--corpus", "c.tsv", "--out", "nat.ckpt"}).code, 0);
    ASSERT_EQ(run({"train-at", "--config", "run.conf", "--corpus", "c.tsv", "--valid", "c.tsv", "--out", "at.ckpt",
                   "--report", "at.tsv"})
                  .code,
              0);
    EXPECT_EQ(count_lines(slurp(dir_ / "at.tsv")), 4u);
    ASSERT_EQ(run({"augment", "--teacher", "at.ckpt", "--sources", "c.tsv", "--out", "aug.tsv", "--max-len", "12"}).code, 0);
    EXPECT_TRUE(fs::exists(dir_ / "aug.tsv.manifest.json"));
    ASSERT_EQ(run({"train-nat", "--config", "run.conf", "--corpus", "c.tsv", "--augmented", "aug.tsv", "--out", "aug.ckpt"})
                  .code,
              0);
    const auto b = run({"bench", "--nat", "nat.ckpt", "--at", "at.ckpt", "--test", "c.tsv", "--n", "5", "--repetitions",
                        "1", "--max-len", "12"});
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_NE(b.out.find("\nspeedup\t"), std::string::npos);
    EXPECT_EQ(count_lines(b.out), 4u);
}
