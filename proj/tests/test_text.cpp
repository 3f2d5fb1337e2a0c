#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "dialect_nat/text.hpp"
#include "dialect_nat/utf8.hpp"

using namespace dnat;

namespace {

std::vector<std::pair<std::string, std::string>> corpus(std::initializer_list<std::pair<std::string, std::string>> l) {
    return {l};
}

std::string random_text(std::mt19937_64& rng, std::size_t n) {
    static const std::vector<std::string> pool = {"我", "们", "去", "哋", "a",  "Z",  " ",  "\t", "\x07", "　",
                                                  "Ａ", "！", "⟨rep⟩", "x", "\n", "  ", "，", "\x7f", "ｚ", "好"};
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += pool[pick(rng)];
    return s;
}

}  // namespace

TEST(BuildVocab, ReservedPlusCorpusCharacters) {
    const Vocab v = build_vocab(corpus({{"我们", "我哋"}}));
    EXPECT_EQ(v.size(), 8u);
    EXPECT_EQ(v.token(kPadId), "<pad>");
    EXPECT_EQ(v.token(kRepId), kRepMarker);
    EXPECT_EQ(v.id("我"), 5);
    EXPECT_EQ(v.id("们"), 6);
    EXPECT_EQ(v.id("哋"), 7);
}

TEST(BuildVocab, DeterministicAcrossRuns) {
    const auto c = corpus({{"我们 去", "我哋 去"}, {"你好", "你好呀"}});
    EXPECT_EQ(build_vocab(c), build_vocab(c));
}

TEST(BuildVocab, MarkerNotDuplicated) {
    const Vocab v = build_vocab(corpus({{"看⟨rep⟩", "睇⟨rep⟩"}}));
    EXPECT_EQ(v.size(), 7u);
    EXPECT_EQ(v.id(std::string(kRepMarker)), kRepId);
}

TEST(BuildVocab, WhitespaceIsNotAToken) {
    const Vocab v = build_vocab(corpus({{"我 们", "我\t哋"}}));
    EXPECT_FALSE(v.contains(" "));
    EXPECT_FALSE(v.contains("\t"));
}

TEST(BuildVocab, EmptyCorpus) { EXPECT_THROW(build_vocab(corpus({})), EmptyInputError); }

TEST(Tokenize, DirectLookup) {
    const Vocab v = build_vocab(corpus({{"我们", "我哋"}}));
    EXPECT_EQ(tokenize("我们", v).ids, (std::vector<int>{5, 6}));
}

TEST(Tokenize, MarkerIsOneToken) {
    const Vocab v = build_vocab(corpus({{"去啦", "去啦"}}));
    EXPECT_EQ(tokenize("去⟨rep⟩啦", v).ids, (std::vector<int>{v.id("去"), kRepId, v.id("啦")}));
}

TEST(Tokenize, UnknownCharacter) {
    const Vocab v = build_vocab(corpus({{"我", "我"}}));
    EXPECT_EQ(tokenize("¤", v).ids, (std::vector<int>{kUnkId}));
}

TEST(Tokenize, RoundTripOnInVocabularyText) {
    const Vocab v = build_vocab(corpus({{"我们去⟨rep⟩", "我哋去啦"}}));
    std::mt19937_64 rng(1);
    const std::vector<std::string> units = {"我", "们", "去", "⟨rep⟩", "哋", "啦"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string s;
        for (int k = 0; k < 1 + trial % 9; ++k) s += units[rng() % units.size()];
        EXPECT_EQ(detokenize(tokenize(s, v).ids, v), s);
    }
}

TEST(VocabFile, SaveLoadRoundTrip) {
    const Vocab v = build_vocab(corpus({{"我们", "我哋"}}));
    const auto path = (std::filesystem::temp_directory_path() / "dnat_vocab_test.txt").string();
    v.save(path);
    EXPECT_EQ(Vocab::load(path), v);
    std::filesystem::remove(path);
}

TEST(VocabFile, MissingReservedTokensRejected) {
    EXPECT_THROW(Vocab::from_tokens({"<pad>", "<bos>", "x", "<unk>", "⟨rep⟩"}), ConfigError);
}

TEST(SegmentGreedy, LongestMatchFlags) {
    EXPECT_EQ(segment_greedy("我们去", Lexicon(std::vector<std::string>{"我们"})).flags,
              (std::vector<std::uint8_t>{1, 0, 1}));
}

TEST(SegmentGreedy, EmptyLexiconAllOnes) {
    EXPECT_EQ(segment_greedy("我们去", Lexicon()).flags, (std::vector<std::uint8_t>{1, 1, 1}));
}

TEST(SegmentGreedy, LongerEntryWins) {
    EXPECT_EQ(segment_greedy("我们去", Lexicon(std::vector<std::string>{"我们", "我们去"})).flags,
              (std::vector<std::uint8_t>{1, 0, 0}));
}

TEST(SegmentGreedy, MarkerIsItsOwnWord) {
    const auto seg = segment_greedy("去⟨rep⟩啦", Lexicon(std::vector<std::string>{"去⟨rep⟩啦"}));
    EXPECT_EQ(seg.flags, (std::vector<std::uint8_t>{1, 1, 1}));
}

TEST(SegmentGreedy, PropertiesOnRandomText) {
    std::mt19937_64 rng(2);
    const Lexicon lex(std::vector<std::string>{"我们", "我们去", "去哋", "好", "aZ"});
    for (int trial = 0; trial < 300; ++trial) {
        const std::string t = random_text(rng, 1 + trial % 12);
        const auto seg = segment_greedy(t, lex);
        EXPECT_EQ(seg.text(), t);
        ASSERT_EQ(seg.flags.size(), seg.units.size());
        if (!seg.units.empty()) { EXPECT_EQ(seg.flags[0], 1); }
        for (std::size_t i = 0; i < seg.units.size(); ++i)
            if (seg.units[i] == kRepMarker) {
                EXPECT_EQ(seg.flags[i], 1);
                if (i + 1 < seg.units.size()) { EXPECT_EQ(seg.flags[i + 1], 1); }
            }
    }
}

TEST(SegmentForModel, WhitespaceSeparatesOnly) {
    const auto seg = segment_for_model("我们 去", Lexicon(std::vector<std::string>{"我们去"}));
    EXPECT_EQ(seg.units, (std::vector<std::string>{"我", "们", "去"}));
    EXPECT_EQ(seg.flags, (std::vector<std::uint8_t>{1, 1, 1}));
}

TEST(Preprocess, FullWidthToHalfWidth) { EXPECT_EQ(preprocess("Ａ　Ｂ"), "A B"); }

TEST(Preprocess, ControlCharacterRemoved) { EXPECT_EQ(preprocess("我\x07们"), "我们"); }

TEST(Preprocess, WhitespaceCollapsed) { EXPECT_EQ(preprocess("a \t\n b"), "a b"); }

TEST(Preprocess, Idempotent) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const std::string once = preprocess(random_text(rng, trial % 15));
        EXPECT_EQ(preprocess(once), once);
    }
}

TEST(Utf8, MalformedBytesBecomeReplacement) {
    const auto cps = utf8::decode(std::string("a\xff") + "b");
    ASSERT_EQ(cps.size(), 3u);
    EXPECT_EQ(cps[1], 0xFFFDu);
}

TEST(Utf8, EncodeDecodeRoundTrip) {
    const std::string s = "我们⟨rep⟩ Ａ😀";
    EXPECT_EQ(utf8::encode(utf8::decode(s)), s);
}
