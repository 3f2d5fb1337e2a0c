#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dialect_nat/pipeline.hpp"
#include "dialect_nat/synth.hpp"
#include "dialect_nat/workflow.hpp"

using namespace dnat;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.d_model = 16;
    c.n_branches = 2;
    c.n_heads = 2;
    c.d_seg = 4;
    c.max_len = 32;
    c.length_offset_range = 4;
    return c;
}

std::shared_ptr<PipelineContext> stub_context() { return std::make_shared<PipelineContext>(); }

std::shared_ptr<PipelineContext> untrained_context() {
    auto ctx = std::make_shared<PipelineContext>();
    auto m = make_model_shell(tiny_config(), {{"我们 去", "我哋 去"}, {"看 书", "睇 书"}});
    m.params = init_params(m.config, 5);
    ctx->model = std::make_shared<const TranslationModel>(std::move(m));
    return ctx;
}

std::vector<std::string> placeholder_phonemes(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& u : split_units(text))
        if (!is_space_unit(u)) out.push_back("PH(" + u + ")");
    return out;
}

std::string temp_file(const std::string& name, const std::string& content) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream(path, std::ios::binary) << content;
    return path;
}

}  // namespace

TEST(Stubs, G2pPlaceholder) { EXPECT_EQ(g2p_placeholder("去"), (std::vector<std::string>{"PH(去)"})); }

TEST(Stubs, ProsodyInsertsNoBreaks) {
    const auto d = run_pipeline("我们 去 看 书", default_pipeline(stub_context(), true));
    EXPECT_TRUE(d.prosody_breaks.empty());
    EXPECT_EQ(d.pos_tags, std::vector<std::string>(d.words.size(), "X"));
}

TEST(Stubs, TnIsIdentityAndIdempotent) {
    auto ctx = stub_context();
    const auto once = build_pipeline({"preprocess", "tn"}, ctx);
    const auto twice = build_pipeline({"preprocess", "tn", "tn"}, ctx);
    for (const char* s : {"我们  去", "ＡＢ 看", ""}) {
        const auto a = run_pipeline(s, once), b = run_pipeline(s, twice);
        EXPECT_EQ(a.normalized, preprocess(s));
        EXPECT_EQ(b.normalized, a.normalized);
    }
}

TEST(Pipeline, IdentityTranslationWrapsEveryCharacter) {
    for (const char* s : {"我们去看书", "你 好  呀", "看 https://a.com 吧", "ｘ你"}) {
        const auto d = run_pipeline(s, default_pipeline(stub_context(), true));
        EXPECT_EQ(d.phonemes, placeholder_phonemes(preprocess(s))) << s;
    }
}

TEST(Pipeline, IdentityTranslationPreservesText) {
    for (const char* s : {"我们去看书", "  你 好\t呀 ", "发邮件到 a.b@c.org 或 访问 www.x.cn", ""}) {
        const auto d = run_pipeline(s, default_pipeline(stub_context(), true));
        EXPECT_EQ(d.translated, s);
        EXPECT_EQ(d.normalized, preprocess(s));
        EXPECT_EQ(d.original, s);
    }
}

TEST(Pipeline, GuardedSpanSurvivesUntrainedModel) {
    const auto d = run_pipeline("看 https://a.com", default_pipeline(untrained_context()));
    EXPECT_NE(d.translated.find("https://a.com"), std::string::npos);
    EXPECT_NE(std::find(d.words.begin(), d.words.end(), "https://a.com"), d.words.end());
}

TEST(Pipeline, GuardedSpanExemptFromPreprocessing) {
    auto ctx = stub_context();
    ctx->patterns = GuardPatterns({"<[^>]*>"});
    const auto d = run_pipeline("看  <Ａ  Ｂ>  吧", default_pipeline(ctx, true));
    EXPECT_EQ(d.normalized, "看 <Ａ  Ｂ> 吧");
    ASSERT_EQ(d.normalized_spans.size(), 1u);
    EXPECT_EQ(d.normalized.substr(d.normalized_spans[0].begin, d.normalized_spans[0].end - d.normalized_spans[0].begin),
              "<Ａ  Ｂ>");
    EXPECT_EQ(d.words, (std::vector<std::string>{"看", "<Ａ  Ｂ>", "吧"}));
}

TEST(Pipeline, TrainedToyModelReproducesGoldTargets) {
    const auto rules = make_rules(12, 7);
    SynthOptions so;
    so.n = 24;
    so.min_words = 2;
    so.max_words = 4;
    so.rep_rate = 0.0;
    const auto pairs = generate(rules, so);
    auto m = make_model_shell(tiny_config(), to_text_pairs(pairs));
    std::vector<LinkSet> links;
    for (const auto& p : pairs) links.push_back(p.gold.links);
    TrainOptions o;
    o.epochs = 60;
    o.batch_size = 4;
    o.optimizer.kind = OptimizerKind::adam;
    o.optimizer.learning_rate = 3e-3;
    m.params = train_nat(m.config, make_examples(to_word_pairs(pairs), m.vocab, m.config.max_len, &links), {}, {}, o).params;
    auto ctx = std::make_shared<PipelineContext>();
    ctx->model = std::make_shared<const TranslationModel>(std::move(m));
    const auto stages = default_pipeline(ctx);
    std::size_t exact = 0;
    for (const auto& p : pairs) {
        std::string want;
        for (const auto& w : p.target) want += w;
        const auto d = run_pipeline(join_words(p.source), stages);
        exact += d.translated == want;
        EXPECT_EQ(d.phonemes, placeholder_phonemes(d.normalized));
    }
    EXPECT_GE(exact, pairs.size() * 9 / 10);
}

TEST(Pipeline, TraceRecordsEveryStageInOrder) {
    const std::string text = "我们 去 www.a.cn";
    const auto d = run_pipeline(text, default_pipeline(stub_context(), true));
    ASSERT_EQ(d.trace.size(), default_stage_names().size());
    auto names = default_stage_names();
    names[1] = "translate-identity";
    for (std::size_t i = 0; i < names.size(); ++i) {
        EXPECT_EQ(d.trace[i].stage, names[i]);
        if (i > 0) { EXPECT_EQ(d.trace[i].input, d.trace[i - 1].output); }
    }
    EXPECT_EQ(d.trace.front().input, text);
    EXPECT_EQ(d.trace[0].output, d.guarded.guarded);
    EXPECT_EQ(d.trace.back().output, join_words(d.phonemes));
}

TEST(Pipeline, StageFailureAbortsWithTrace) {
    auto ctx = stub_context();
    auto stages = build_pipeline({"guard", "translate", "unguard"}, ctx);
    try {
        run_pipeline("我们", stages);
        FAIL() << "expected abort";
    } catch (const PipelineAbort& e) {
        EXPECT_EQ(e.stage(), "translate");
        EXPECT_EQ(e.category(), "pipeline");
        ASSERT_EQ(e.trace().size(), 2u);
        EXPECT_EQ(e.trace()[1].stage, "translate");
        EXPECT_EQ(e.trace()[1].output, "");
    }
}

TEST(Pipeline, CustomStageFailureAborts) {
    auto stages = build_pipeline({"guard"}, stub_context());
    stages.push_back({"boom", {}, {}, [](FrontendDoc&) { throw std::runtime_error("bad"); }});
    EXPECT_THROW(run_pipeline("x", stages), PipelineError);
}

TEST(PipelineConfig, UnguardBeforeTranslateRejected) {
    auto ctx = stub_context();
    EXPECT_THROW(build_pipeline({"guard", "unguard", "translate"}, ctx), ConfigError);
    EXPECT_THROW(build_pipeline({"translate", "guard", "unguard"}, ctx), ConfigError);
    EXPECT_THROW(build_pipeline({"guard", "translate", "unguard", "g2p"}, ctx), ConfigError);
    EXPECT_NO_THROW(build_pipeline({"guard", "translate", "unguard"}, ctx));
}

TEST(PipelineConfig, UnknownOrEmptyStageList) {
    EXPECT_THROW(build_pipeline({"guard", "jyutping"}, stub_context()), ConfigError);
    EXPECT_THROW(build_pipeline({}, stub_context()), ConfigError);
}

TEST(PipelineConfig, FileLoading) {
    const auto ok = temp_file("dnat_pipe_ok.txt", "# frontend\nguard\ntranslate-identity  # stub\n\nunguard\npreprocess\n");
    EXPECT_EQ(load_pipeline_config(ok), (std::vector<std::string>{"guard", "translate-identity", "unguard", "preprocess"}));
    const auto bad = temp_file("dnat_pipe_bad.txt", "guard translate\n");
    EXPECT_THROW(load_pipeline_config(bad), ConfigError);
    const auto unknown = temp_file("dnat_pipe_unknown.txt", "guard\nnormalise\n");
    EXPECT_THROW(build_pipeline(load_pipeline_config(unknown), stub_context()), ConfigError);
    EXPECT_THROW(load_pipeline_config("/nonexistent/dnat_pipe.txt"), IoError);
    for (const auto& p : {ok, bad, unknown}) std::filesystem::remove(p);
}

TEST(Batch, OneTsvRowPerLine) {
    const auto rows = run_batch({"我们 去", "a\tb 看", ""}, default_pipeline(stub_context(), true));
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0], "我们 去\t我们 去\tPH(我) PH(们) PH(去)");
    EXPECT_EQ(std::count(rows[1].begin(), rows[1].end(), '\t'), 2);
    EXPECT_EQ(rows[1].substr(0, rows[1].find('\t')), "a b 看");
    EXPECT_EQ(rows[2], "\t\t");
}
