#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "support/oracles.hpp"
#include "support/synthetic_trace.hpp"
#include "tracelens/doc_generator.hpp"

using namespace tracelens;

namespace {

const std::filesystem::path kSourceDir = TRACELENS_SOURCE_DIR;

std::string call(Seq seq, ActId act, const std::string& method, const std::string& args_json = "[]",
                 const std::string& recv = "null", const std::string& thread = "t0") {
  return fmt::format(
      R"({{"seq":{},"kind":"call","thread":"{}","act":{},"loc":{{"file":"a.x","line":1}},"method":"{}","args":{},"recv_before":{}}})"
      "\n",
      seq, thread, act, method, args_json, recv);
}

std::string ret(Seq seq, ActId act, const std::string& method, const std::string& value = "null",
                const std::string& recv = "null") {
  return fmt::format(
      R"({{"seq":{},"kind":"return","thread":"t0","act":{},"loc":{{"file":"a.x","line":1}},"method":"{}","ret":{},"recv_after":{}}})"
      "\n",
      seq, act, method, value, recv);
}

std::string thrown(Seq seq, ActId act, const std::string& method, const std::string& type) {
  return fmt::format(
      R"({{"seq":{},"kind":"exception","thread":"t0","act":{},"loc":{{"file":"a.x","line":1}},"method":"{}","exc_type":"{}","msg":"m"}})"
      "\n",
      seq, act, method, type);
}

std::string value(const std::string& repr) { return fmt::format(R"({{"repr":"{}","is_string":false}})", repr); }

MethodCallRecord record(std::optional<std::string> recv_before, std::optional<std::string> ret,
                        std::optional<std::string> recv_after = std::nullopt,
                        std::optional<std::string> exc = std::nullopt) {
  MethodCallRecord r;
  r.method = "Range.lowerBoundType";
  r.recv_before = std::move(recv_before);
  r.ret = std::move(ret);
  r.recv_after = std::move(recv_after);
  r.exc_type = std::move(exc);
  return r;
}

DocOptions options(std::size_t k, std::string prefix = "", std::optional<std::string> marker = std::nullopt) {
  DocOptions out;
  out.max_sentences = k;
  out.method_prefix = std::move(prefix);
  out.constructor_marker = std::move(marker);
  return out;
}

}  // namespace

TEST(CollectRecords, ReceiverAndReturnLifted) {
  auto store = ingest_file((kSourceDir / "tests/fixtures/range_lower_bound_type.jsonl").string());
  auto records = collect_records(store);
  ASSERT_EQ(records.size(), 4u);
  const auto& first = records[1];
  EXPECT_EQ(first.method, "Range.lowerBoundType");
  EXPECT_EQ(first.recv_before, "(5..8)");
  EXPECT_EQ(first.ret, "OPEN");
  EXPECT_EQ(first.recv_after, "(5..8)");
  EXPECT_FALSE(first.exc_type);
}

TEST(CollectRecords, ExceptionClosedActivation) {
  auto store = ingest_text(call(1, 1, "A.f") + thrown(2, 1, "A.f", "ValueError"));
  auto records = collect_records(store);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].exc_type, "ValueError");
  EXPECT_FALSE(records[0].ret);
}

TEST(CollectRecords, TruncatedActivationsSkipped) {
  std::string text;
  Seq seq = 0;
  ActId act = 0;
  for (int i = 0; i < 93; ++i) {
    ++act;
    text += call(++seq, act, "A.f");
    text += ret(++seq, act, "A.f", value(std::to_string(i)));
  }
  for (int i = 0; i < 7; ++i) text += call(++seq, ++act, "A.g", "[]", "null", "t" + std::to_string(i + 1));

  std::size_t closed = 0;
  for (const auto& r : oracle::read_records(text)) closed += r["kind"] == "return" || r["kind"] == "exception";
  auto store = ingest_text(text);
  EXPECT_EQ(store.activations().size(), 100u);
  EXPECT_EQ(collect_records(store).size(), closed);
  EXPECT_EQ(closed, 93u);
}

TEST(Classify, DecisionTable) {
  EXPECT_EQ(classify(record("(5..8)", "OPEN")), TemplateKind::returned_only);
  EXPECT_EQ(classify(record("[]", std::nullopt, "[1]")), TemplateKind::changed_only);
  EXPECT_EQ(classify(record(std::nullopt, std::nullopt, std::nullopt, "IndexError")), TemplateKind::threw);
  EXPECT_EQ(classify(record("[]", "1", "[1]")), TemplateKind::returned_and_changed);
  EXPECT_EQ(classify(record("[1]", "1", "[1]")), TemplateKind::returned_only);
  EXPECT_EQ(classify(record("[1]", std::nullopt, "[1]")), TemplateKind::no_effect);
  EXPECT_EQ(classify(record(std::nullopt, std::nullopt)), TemplateKind::no_effect);

  auto ctor = record(std::nullopt, std::nullopt, "Counter(6)");
  ctor.method = "app.Counter.<init>";
  EXPECT_EQ(classify(ctor), TemplateKind::constructed);
  EXPECT_EQ(classify(ctor, "__init__"), TemplateKind::no_effect);
  ctor.exc_type = "ValueError";
  EXPECT_EQ(classify(ctor), TemplateKind::threw);
}

TEST(RenderSentence, ListingSentences) {
  EXPECT_EQ(render_sentence(record("(5..8)", "OPEN")), "When called on (5..8), the method returned OPEN.");
  EXPECT_EQ(render_sentence(record("[5..8)", "CLOSED")), "When called on [5..8), the method returned CLOSED.");
}

TEST(RenderSentence, EveryTemplate) {
  auto threw = record(std::nullopt, std::nullopt, std::nullopt, "ValueError");
  threw.args = {{"n", "3"}};
  EXPECT_EQ(render_sentence(threw), "When called with arguments (3), the method threw ValueError.");

  auto both = record("[]", "1", "[1]");
  both.args = {{"x", "1"}, {"y", "'a'"}};
  EXPECT_EQ(render_sentence(both),
            "When called on [] with arguments (1, 'a'), the method returned 1 and the object changed to [1].");
  EXPECT_EQ(render_sentence(record("[]", std::nullopt, "[1]")), "When called on [], the object changed to [1].");
  EXPECT_EQ(render_sentence(record(std::nullopt, std::nullopt)),
            "When called, the method completed with no observable effect.");

  auto ctor = record(std::nullopt, std::nullopt, "Counter(6)");
  ctor.method = "Counter.__init__";
  ctor.args = {{"start", "6"}};
  EXPECT_EQ(render_sentence(ctor, "__init__"), "When constructed with arguments (6), the object became Counter(6).");
}

TEST(RenderSentence, PropertiesOverRandomRecords) {
  std::mt19937 rng(99);
  auto maybe = [&](const std::string& token) {
    return rng() % 2 ? std::optional<std::string>(token) : std::nullopt;
  };
  for (int i = 0; i < 5000; ++i) {
    MethodCallRecord r;
    r.method = rng() % 5 == 0 ? "T.<init>" : "T.m";
    for (unsigned a = 0, n = rng() % 3; a < n; ++a) r.args.emplace_back("a", "ARG" + std::to_string(a));
    r.recv_before = maybe("BEFORE");
    r.recv_after = rng() % 3 == 0 ? r.recv_before : maybe("AFTER");
    r.exc_type = rng() % 4 == 0 ? std::optional<std::string>("EXC") : std::nullopt;
    if (!r.exc_type) r.ret = maybe("RET");

    auto kind = classify(r);
    auto sentence = render_sentence(r);
    bool shows_return = kind == TemplateKind::returned_only || kind == TemplateKind::returned_and_changed;
    EXPECT_EQ(r.ret.has_value() && sentence.find("RET") != std::string::npos, shows_return) << sentence;
    EXPECT_EQ(sentence.find("EXC") != std::string::npos, kind == TemplateKind::threw) << sentence;
    EXPECT_EQ(sentence.find("with arguments (") != std::string::npos, !r.args.empty()) << sentence;
    EXPECT_TRUE(sentence.starts_with("When ")) << sentence;
    EXPECT_TRUE(sentence.ends_with(".")) << sentence;
  }
}

TEST(GenerateDocs, DeduplicatesIdenticalCalls) {
  auto text = call(1, 1, "A.f", "[]", "\"s\"") + ret(2, 1, "A.f", value("1"), "\"s\"") +
              call(3, 2, "A.f", "[]", "\"s\"") + ret(4, 2, "A.f", value("1"), "\"s\"");
  auto docs = generate_docs(ingest_text(text));
  ASSERT_EQ(docs.size(), 1u);
  EXPECT_EQ(docs[0].sentences, (std::vector<std::string>{"When called on s, the method returned 1."}));
  EXPECT_EQ(docs[0].example_count, 2u);
  EXPECT_EQ(docs[0].distinct_count, 1u);
}

TEST(GenerateDocs, PrefersKindCoverage) {
  auto text = call(1, 1, "A.f") + ret(2, 1, "A.f", value("1")) + call(3, 2, "A.f") + ret(4, 2, "A.f", value("2")) +
              call(5, 3, "A.f") + ret(6, 3, "A.f", value("3")) + call(7, 4, "A.f") + thrown(8, 4, "A.f", "IOError");
  auto docs = generate_docs(ingest_text(text), options(2));
  ASSERT_EQ(docs.size(), 1u);
  EXPECT_EQ(docs[0].sentences, (std::vector<std::string>{"When called, the method returned 1.",
                                                         "When called, the method threw IOError."}));
  EXPECT_EQ(docs[0].distinct_count, 4u);

  auto three = generate_docs(ingest_text(text), options(3));
  EXPECT_EQ(three[0].sentences,
            (std::vector<std::string>{"When called, the method returned 1.", "When called, the method returned 2.",
                                      "When called, the method threw IOError."}));
}

TEST(GenerateDocs, PrefixFilterAndOrdering) {
  std::string text;
  Seq seq = 0;
  const std::vector<std::string> methods = {"Range.upper", "Util.a", "Range.lower", "Util.b", "Range.span",
                                            "List.add",    "List.get", "Map.put",   "Map.get", "Range.<init>"};
  for (std::size_t i = 0; i < methods.size(); ++i) {
    auto act = static_cast<ActId>(i + 1);
    text += call(++seq, act, methods[i]);
    text += ret(++seq, act, methods[i], value("1"));
  }
  auto docs = generate_docs(ingest_text(text), options(3, "Range."));
  std::vector<std::string> names;
  for (const auto& d : docs) names.push_back(d.method);
  EXPECT_EQ(names, (std::vector<std::string>{"Range.<init>", "Range.lower", "Range.span", "Range.upper"}));
  EXPECT_EQ(generate_docs(ingest_text(text)).size(), 10u);
}

TEST(GenerateDocs, CapMustBePositive) {
  EXPECT_THROW(generate_docs(ingest_text(""), options(0)), error);
}

TEST(GenerateDocs, DedupSoundnessOnRandomTraces) {
  for (std::uint64_t seed = 500; seed < 510; ++seed) {
    auto store = ingest_text(oracle::synthetic_trace(seed, {.min_events = 800, .threads = 2}));
    auto records = collect_records(store);
    for (std::size_t k : {1u, 2u, 3u, 5u}) {
      for (const auto& entry : generate_docs(store, options(k))) {
        std::set<std::string> rendered;
        for (const auto& r : records) {
          if (r.method == entry.method) rendered.insert(render_sentence(r));
        }
        std::set<std::string> kept(entry.sentences.begin(), entry.sentences.end());
        EXPECT_EQ(kept.size(), entry.sentences.size());
        EXPECT_LE(entry.sentences.size(), k);
        EXPECT_EQ(entry.sentences.size(), std::min(k, entry.distinct_count));
        EXPECT_EQ(entry.distinct_count, rendered.size());
        for (const auto& s : entry.sentences) EXPECT_TRUE(rendered.contains(s)) << s;
      }
    }
  }
}

TEST(GenerateDocs, ByteIdenticalOutput) {
  auto text = oracle::synthetic_trace(321, {.min_events = 1000, .threads = 2});
  auto a = generate_docs(ingest_text(text));
  auto b = generate_docs(ingest_text(text));
  EXPECT_EQ(docs_to_text(a), docs_to_text(b));
  EXPECT_EQ(docs_to_json(a).dump(), docs_to_json(b).dump());
  EXPECT_EQ(docs_from_json(nlohmann::json::parse(docs_to_json(a).dump())), a);
}

TEST(GenerateDocs, ConstructorMarkerFromHeaderOrOverride) {
  auto text = call(1, 1, "C.__init__", R"([{"name":"v","repr":"1","is_string":false}])") +
              ret(2, 1, "C.__init__", "null", "\"C(1)\"");
  auto plain = generate_docs(ingest_text(text));
  EXPECT_EQ(plain[0].sentences[0], "When called with arguments (1), the method completed with no observable effect.");
  auto with_header = generate_docs(ingest_text("# tracelens constructor=__init__\n" + text));
  EXPECT_EQ(with_header[0].sentences[0], "When constructed with arguments (1), the object became C(1).");
  auto overridden = generate_docs(ingest_text(text), options(3, "", "__init__"));
  EXPECT_EQ(overridden[0].sentences, with_header[0].sentences);
}

class SuccinctnessTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = std::filesystem::temp_directory_path() / fmt::format("tracelens_succ_{}", ::getpid());
    std::filesystem::create_directories(root_ / "src");
    // 10 lines of 40 characters each, indented: 400 characters once
    // whitespace is normalized (39 visible + 1 joining space per line).
    std::ofstream out(root_ / "src/m.x");
    out << "header line\n";
    for (int i = 0; i < 10; ++i) out << "    " << std::string(39, 'x') << "   \n";
    out.close();
    map_.add("M.f", {"src/m.x", 2, 11});
  }
  void TearDown() override { std::filesystem::remove_all(root_); }

  std::filesystem::path root_;
  SourceMap map_;
};

TEST_F(SuccinctnessTest, RatioOfSentenceToBody) {
  DocEntry entry{"M.f", {std::string(40, 's')}, 1, 1};
  // 10 * 39 characters plus 9 separating spaces.
  EXPECT_DOUBLE_EQ(succinctness(entry, map_, root_), 40.0 / 399.0);
  map_.add("M.g", {"src/m.x", 1, 1});
  DocEntry header{"M.g", {std::string(11, 's'), std::string(33, 's')}, 2, 2};
  EXPECT_DOUBLE_EQ(succinctness(header, map_, root_), 2.0);
}

TEST_F(SuccinctnessTest, ExactTenPercent) {
  SourceMap map;
  std::ofstream(root_ / "src/flat.x") << std::string(200, 'y') << "\n\t " << std::string(199, 'z') << "\n";
  map.add("M.h", {"src/flat.x", 1, 2});
  DocEntry entry{"M.h", {std::string(40, 's')}, 1, 1};
  EXPECT_DOUBLE_EQ(succinctness(entry, map, root_), 0.10);
}

TEST_F(SuccinctnessTest, MissingSource) {
  DocEntry entry{"Other.f", {"x"}, 1, 1};
  EXPECT_THROW(succinctness(entry, map_, root_), missing_source);
  map_.add("Gone.f", {"src/absent.x", 1, 2});
  EXPECT_THROW(succinctness(DocEntry{"Gone.f", {"x"}, 1, 1}, map_, root_), missing_source);

  auto report = succinctness_report({entry, DocEntry{"M.f", {std::string(40, 's')}, 1, 1}}, map_, root_);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_FALSE(report.rows[0].ratio);
  ASSERT_TRUE(report.mean);
  EXPECT_DOUBLE_EQ(*report.mean, 40.0 / 399.0);
}

TEST(SourceMapLoading, RejectsBadRanges) {
  EXPECT_THROW(SourceMap::from_json(nlohmann::json::parse(R"([{"method":"a","file":"f","start":5,"end":2}])")), error);
  EXPECT_THROW(SourceMap::from_json(nlohmann::json::parse(R"({})")), error);
  EXPECT_NO_THROW(SourceMap::load(kSourceDir / "demo/source_map.json"));
}

TEST(TextMetrics, CharLengthCountsCodePoints) {
  EXPECT_EQ(char_length("abc"), 3u);
  EXPECT_EQ(char_length("a\xE2\x80\xA6"), 2u);  // "a…"
  EXPECT_EQ(normalize_whitespace("  a \n\t b  "), "a b");
}
