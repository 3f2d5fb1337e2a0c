#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dialect_nat/guard.hpp"

using namespace dnat;

namespace {

std::size_t count_markers(std::string_view s) {
    std::size_t n = 0;
    for (auto p = s.find(kRepMarker); p != std::string_view::npos; p = s.find(kRepMarker, p + 1)) ++n;
    return n;
}

std::string random_mixed(std::mt19937_64& rng) {
    static const std::vector<std::string> pieces = {"见", "哈", " ", "https://a.com/x?q=1", "www.example.org",
                                                    "a@b.com", "x.y@mail.cn", "NASA", "TTS", "a", ":)", ";-)",
                                                    "^_^", "，", "去", "GPU2", "<3", "我们", "1.5", "⟨rep⟩"};
    std::string s;
    const std::size_t n = 1 + rng() % 10;
    for (std::size_t i = 0; i < n; ++i) s += pieces[rng() % pieces.size()];
    return s;
}

}  // namespace

TEST(Guard, UrlReplacedByMarker) {
    const auto g = guard("见 https://a.com 哈", GuardPatterns::defaults());
    EXPECT_EQ(g.guarded, "见 ⟨rep⟩ 哈");
    EXPECT_EQ(g.originals, (std::vector<std::string>{"https://a.com"}));
}

TEST(Guard, NoMatchIsIdentity) {
    const auto g = guard("我们去吃饭", GuardPatterns::defaults());
    EXPECT_EQ(g.guarded, "我们去吃饭");
    EXPECT_TRUE(g.originals.empty());
}

TEST(Guard, EmailsKeptInOrder) {
    const auto g = guard("a@b.com 和 c@d.com", GuardPatterns::defaults());
    EXPECT_EQ(g.originals, (std::vector<std::string>{"a@b.com", "c@d.com"}));
    EXPECT_EQ(g.guarded, "⟨rep⟩ 和 ⟨rep⟩");
}

TEST(Guard, AbbreviationAndEmoticon) {
    const auto g = guard("用TTS读:)", GuardPatterns::defaults());
    EXPECT_EQ(g.originals, (std::vector<std::string>{"TTS", ":)"}));
}

TEST(Guard, SingleLetterIsNotAnAbbreviation) {
    EXPECT_TRUE(guard("a 我", GuardPatterns::defaults()).originals.empty());
}

TEST(Guard, SpansAscendingAndNonOverlapping) {
    std::mt19937_64 rng(4);
    const auto pats = GuardPatterns::defaults();
    for (int trial = 0; trial < 300; ++trial) {
        const std::string t = random_mixed(rng);
        const auto g = guard(t, pats);
        ASSERT_EQ(g.spans.size(), g.originals.size());
        for (std::size_t i = 0; i < g.spans.size(); ++i) {
            EXPECT_LT(g.spans[i].begin, g.spans[i].end);
            EXPECT_EQ(t.substr(g.spans[i].begin, g.spans[i].end - g.spans[i].begin), g.originals[i]);
            if (i) { EXPECT_LE(g.spans[i - 1].end, g.spans[i].begin); }
        }
    }
}

TEST(Guard, MarkerCountEqualsOriginalsForFreshText) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        std::string t = random_mixed(rng);
        if (t.find(kRepMarker) != std::string::npos) continue;
        const auto g = guard(t, GuardPatterns::defaults());
        EXPECT_EQ(count_markers(g.guarded), g.originals.size()) << t;
    }
}

TEST(Guard, RoundTripRestoresText) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 500; ++trial) {
        std::string t = random_mixed(rng);
        if (t.find(kRepMarker) != std::string::npos) continue;
        const auto g = guard(t, GuardPatterns::defaults());
        EXPECT_EQ(unguard(g.guarded, g), t);
    }
}

TEST(Guard, StableUnderReguarding) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const auto g = guard(random_mixed(rng), GuardPatterns::defaults());
        const auto again = guard(g.guarded, GuardPatterns::defaults());
        EXPECT_TRUE(again.originals.empty()) << g.guarded;
        EXPECT_EQ(again.guarded, g.guarded);
    }
}

TEST(Unguard, MarkerReplacedByOriginal) {
    GuardedText g{"", {"https://a.com"}, {{0, 13}}};
    EXPECT_EQ(unguard("睇 ⟨rep⟩ 喇", g), "睇 https://a.com 喇");
}

TEST(Unguard, MissingMarkerAppendsOriginal) {
    GuardedText g{"", {"https://a.com"}, {{0, 13}}};
    EXPECT_EQ(unguard("睇喇", g), "睇喇 https://a.com");
}

TEST(Unguard, SurplusMarkerDeleted) {
    GuardedText g{"", {"a@b.com"}, {{0, 7}}};
    EXPECT_EQ(unguard("⟨rep⟩去⟨rep⟩", g), "a@b.com去");
}

TEST(Unguard, RestoredSpansPointAtOriginals) {
    GuardedText g{"", {"a@b.com", "NASA"}, {{0, 7}, {8, 12}}};
    const auto r = unguard_with_spans("去⟨rep⟩啦", g);
    ASSERT_EQ(r.restored.size(), 2u);
    EXPECT_EQ(r.text.substr(r.restored[0].begin, r.restored[0].end - r.restored[0].begin), "a@b.com");
    EXPECT_EQ(r.text.substr(r.restored[1].begin, r.restored[1].end - r.restored[1].begin), "NASA");
}

TEST(GuardPatterns, InvalidPatternFailsAtLoad) { EXPECT_THROW(GuardPatterns({"(unclosed"}), PatternError); }

TEST(GuardPatterns, FileOrderIsPriority) {
    const auto path = (std::filesystem::temp_directory_path() / "dnat_patterns_test.txt").string();
    {
        std::ofstream out(path);
        out << "[0-9]+\n\n[a-z0-9]+\n";
    }
    const auto pats = GuardPatterns::load(path);
    EXPECT_EQ(pats.sources().size(), 2u);
    EXPECT_EQ(guard("去12ab", pats).originals, (std::vector<std::string>{"12", "ab"}));
    EXPECT_EQ(guard("去12ab", GuardPatterns({"[a-z0-9]+", "[0-9]+"})).originals, (std::vector<std::string>{"12ab"}));
    std::filesystem::remove(path);
    EXPECT_THROW(GuardPatterns::load(path), IoError);
}
