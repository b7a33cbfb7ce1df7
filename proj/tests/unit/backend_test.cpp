#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "treerec/error.hpp"
#include "treerec/http_backend.hpp"
#include "treerec/llm_backend.hpp"
#include "treerec/mock_backend.hpp"
#include "treerec/rng.hpp"
#include "treerec/text.hpp"

using namespace treerec;

namespace {

const TemplateSet& templates() {
  static const TemplateSet t = TemplateSet::defaults();
  return t;
}

MockBackend mock_with(MockBackend::Knowledge knowledge = {}) { return MockBackend(templates(), std::move(knowledge)); }

std::string random_text(Rng& rng) {
  static const char* pieces[] = {"a", "bb", " ", "  ", "\t", "\n", "ccc", "d-e", "\xc3\xa9t\xc3\xa9"};
  std::string s;
  const auto n = uniform_index(rng, 12);
  for (std::size_t i = 0; i < n; ++i) s += pieces[uniform_index(rng, std::size(pieces))];
  return s;
}

}  // namespace

TEST(CountTokens, Examples) {
  EXPECT_EQ(count_tokens(""), 0u);
  EXPECT_EQ(count_tokens("Garrett banned for season"), 4u);
  EXPECT_EQ(count_tokens("  spaced \t\n out  "), 2u);
}

TEST(CountTokens, AdditiveOverJoin) {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_text(rng);
    const auto b = random_text(rng);
    EXPECT_EQ(count_tokens(a + " " + b), count_tokens(a) + count_tokens(b));
  }
}

TEST(ChatSession, LedgerMatchesTurns) {
  ChatSession s("s1");
  s.add_system("you rank news");
  s.append_exchange("rank these two", "{1. a}");
  s.append_exchange("and again please", "{1. b, 2. c}");
  ASSERT_EQ(s.turns().size(), 5u);
  EXPECT_EQ(s.input_tokens(), 3u + 3u + 3u);
  EXPECT_EQ(s.output_tokens(), 2u + 4u);
  std::size_t in = 0, out = 0;
  for (const auto& t : s.turns()) (t.role == Role::assistant ? out : in) += count_tokens(t.text);
  EXPECT_EQ(in, s.input_tokens());
  EXPECT_EQ(out, s.output_tokens());
  EXPECT_THROW(s.add_system("late"), std::logic_error);
  EXPECT_EQ(s.to_json()["turns"].size(), 5u);
}

TEST(BackendConfig, Validation) {
  BackendConfig c;
  EXPECT_NO_THROW(c.validate());
  c.max_retries = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = BackendConfig{};
  c.timeout_s = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = BackendConfig{};
  c.endpoint = "ftp://x";
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(MockBackend, CompleteAppendsTwoTurns) {
  const auto mock = mock_with();
  ChatSession s;
  const std::vector<std::string> pool{"a", "b"};
  mock.complete(s, render_rerank_prompt(templates(), pool));
  EXPECT_EQ(s.turns().size(), 2u);
  EXPECT_EQ(s.turns()[0].role, Role::user);
  EXPECT_EQ(s.turns()[1].role, Role::assistant);
  EXPECT_THROW(mock.complete(s, "   "), std::invalid_argument);
  EXPECT_EQ(s.turns().size(), 2u);
}

TEST(MockBackend, DeterministicAcrossFreshSessions) {
  const auto mock = mock_with({{"alpha story", {"sports", "nfl"}}});
  const std::vector<std::string> history{"alpha story"};
  const auto prompt = render_profile_prompt(templates(), history, Perspective::interest);
  ChatSession a, b;
  EXPECT_EQ(mock.complete(a, prompt), mock.complete(b, prompt));
}

TEST(MockBackend, OverlapThenLexicographic) {
  const auto mock = mock_with();
  const std::vector<std::string> history{"alpha"};
  const std::vector<std::string> candidates{"gamma", "alpha beta"};
  ChatSession s;
  const auto reply =
      mock.complete(s, render_flat_rank_prompt(templates(), history, candidates, 2, Perspective::interest));
  EXPECT_EQ(reply, "{1. alpha beta, 2. gamma}");
}

TEST(MockBackend, HistoryTokensRankCandidateFirst) {
  const auto mock = mock_with({{"c2 rally continues", {"finance"}}});
  ChatSession s;
  const std::vector<std::string> history{"c2 rally continues"};
  mock.complete(s, render_profile_prompt(templates(), history, Perspective::interest));
  const std::vector<std::string> candidates{"c1 quiet day", "c2 rally slows"};
  const auto reply = mock.complete(s, render_leaf_recall_prompt(templates(), candidates, 2,
                                                                std::vector<std::string>{"finance"},
                                                                Perspective::interest));
  EXPECT_EQ(reply, "{1. c2 rally slows, 2. c1 quiet day}");
}

TEST(MockBackend, ZeroOverlapIsLexicographic) {
  const auto mock = mock_with();
  ChatSession s;
  const std::vector<std::string> pool{"zeta", "beta", "mu"};
  EXPECT_EQ(mock.complete(s, render_rerank_prompt(templates(), pool)), "{1. beta, 2. mu, 3. zeta}");
}

TEST(MockBackend, RequestedCountClamped) {
  const auto mock = mock_with();
  ChatSession s;
  const std::vector<std::string> children{"b", "a"};
  const auto reply = mock.complete(s, render_tree_search_prompt(templates(), "all categories", children, 3,
                                                                Perspective::interest));
  EXPECT_EQ(reply, "{1. a, 2. b}");
  const std::vector<std::string> many{"d", "c", "b", "a"};
  EXPECT_EQ(mock.complete(s, render_tree_search_prompt(templates(), "x", many, 2, Perspective::interest)),
            "{1. a, 2. b}");
}

TEST(MockBackend, ProfileByFrequencyThenLexicographic) {
  const auto mock = mock_with({{"t1", {"sports", "nfl"}}, {"t2", {"sports", "nba"}}, {"t3", {"finance", "nba"}}});
  ChatSession s;
  const std::vector<std::string> history{"t1", "t2", "t3"};
  const auto reply = mock.complete(s, render_profile_prompt(templates(), history, Perspective::interest));
  EXPECT_EQ(reply, "{1. nba, 2. sports, 3. finance, 4. nfl}");
}

TEST(MockBackend, ProfileOrderDrivesTreeSearch) {
  const auto mock = mock_with({{"t1", {"sports", "nfl"}}, {"t2", {"sports", "nba"}}, {"t3", {"finance", "markets"}}});
  ChatSession s;
  const std::vector<std::string> history{"t1", "t2", "t3"};
  mock.complete(s, render_profile_prompt(templates(), history, Perspective::interest));
  const std::vector<std::string> children{"finance", "sports"};
  EXPECT_EQ(mock.complete(s, render_tree_search_prompt(templates(), "all categories", children, 10,
                                                       Perspective::interest)),
            "{1. sports, 2. finance}");
}

TEST(MockBackend, UnknownPromptIsProtocolError) {
  const auto mock = mock_with();
  ChatSession s;
  EXPECT_THROW(mock.complete(s, "Tell me a joke"), MockProtocolError);
  EXPECT_TRUE(s.turns().empty());
}

TEST(MockBackend, FollowsCustomTemplates) {
  const auto custom = TemplateSet::from_json({{"rerank", {{"text", "Shuffle for variety please.<Item list>"}}}});
  const MockBackend mock(custom, {});
  ChatSession s;
  const std::vector<std::string> pool{"b", "a"};
  EXPECT_EQ(mock.complete(s, render_rerank_prompt(custom, pool)), "{1. a, 2. b}");
}

// A local chat-completions endpoint whose behaviour each test scripts.
class HttpBackendTest : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  BackendConfig config(int retries = 3) const {
    BackendConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    c.max_retries = retries;
    c.backoff_base_s = 0.001;
    c.timeout_s = 5;
    c.api_key_env = "TREEREC_TEST_KEY";
    return c;
  }

  static std::string ok_body(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpBackendTest, WireFormatAndSessionContext) {
  nlohmann::json last;
  std::string auth;
  server_.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    last = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(ok_body("{1. a}"), "application/json");
  });
  setenv("TREEREC_TEST_KEY", "sk-test", 1);
  const HttpBackend backend(config());
  ChatSession s;
  s.add_system("be brief");
  EXPECT_EQ(backend.complete(s, "first"), "{1. a}");
  EXPECT_EQ(backend.complete(s, "second"), "{1. a}");
  unsetenv("TREEREC_TEST_KEY");

  EXPECT_EQ(auth, "Bearer sk-test");
  EXPECT_EQ(last["model"], "gpt-3.5-turbo");
  EXPECT_EQ(last["temperature"], 0.0);
  ASSERT_EQ(last["messages"].size(), 4u);
  EXPECT_EQ(last["messages"][0]["role"], "system");
  EXPECT_EQ(last["messages"][2]["content"], "{1. a}");
  EXPECT_EQ(last["messages"][3]["role"], "user");
  EXPECT_EQ(last["messages"][3]["content"], "second");
  EXPECT_EQ(s.turns().size(), 5u);
}

TEST_F(HttpBackendTest, RetriesServerErrorsThenSucceeds) {
  std::atomic<int> calls{0};
  server_.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = 503;
      return;
    }
    res.set_content(ok_body("done"), "application/json");
  });
  std::vector<double> waits;
  const HttpBackend backend(config(), [&](std::chrono::duration<double> d) { waits.push_back(d.count()); });
  ChatSession s;
  EXPECT_EQ(backend.complete(s, "hi"), "done");
  EXPECT_EQ(calls.load(), 3);
  ASSERT_EQ(waits.size(), 2u);
  EXPECT_DOUBLE_EQ(waits[0], 0.001);
  EXPECT_DOUBLE_EQ(waits[1], 0.002);
}

TEST_F(HttpBackendTest, AttemptsBoundedByRetries) {
  std::atomic<int> calls{0};
  server_.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 429;
  });
  const HttpBackend backend(config(2), [](auto) {});
  ChatSession s;
  EXPECT_THROW(backend.complete(s, "hi"), BackendUnavailable);
  EXPECT_EQ(calls.load(), 3);
  EXPECT_TRUE(s.turns().empty());
}

TEST_F(HttpBackendTest, ClientErrorIsNotRetried) {
  std::atomic<int> calls{0};
  server_.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 400;
    res.set_content("bad request", "text/plain");
  });
  const HttpBackend backend(config(), [](auto) {});
  ChatSession s;
  try {
    backend.complete(s, "hi");
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(e.status(), 400);
  }
  EXPECT_EQ(calls.load(), 1);
}

TEST_F(HttpBackendTest, MalformedBodyIsBackendFailure) {
  server_.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[]})", "application/json");
  });
  const HttpBackend backend(config(), [](auto) {});
  ChatSession s;
  EXPECT_THROW(backend.complete(s, "hi"), BackendFailure);
}

TEST(HttpBackend, ConnectionRefusedIsUnavailable) {
  httplib::Server probe;
  const int port = probe.bind_to_any_port("127.0.0.1");
  std::thread t([&] { probe.listen_after_bind(); });
  probe.wait_until_ready();
  probe.stop();  // nothing listens on the port any more
  t.join();
  BackendConfig c;
  c.endpoint = "http://127.0.0.1:" + std::to_string(port);
  c.max_retries = 2;
  c.timeout_s = 1;
  int sleeps = 0;
  const HttpBackend backend(c, [&](auto) { ++sleeps; });
  ChatSession s;
  EXPECT_THROW(backend.complete(s, "hi"), BackendUnavailable);
  EXPECT_EQ(sleeps, 2);
}

TEST(HttpBackend, ParseResponse) {
  EXPECT_EQ(HttpBackend::parse_response(R"({"choices":[{"message":{"content":"x"}}]})"), "x");
  EXPECT_THROW(HttpBackend::parse_response("nope"), BackendFailure);
  EXPECT_THROW(HttpBackend::parse_response(R"({"choices":[{"message":{"content":3}}]})"), BackendFailure);
}

TEST(HttpBackend, RejectsMockEndpoint) { EXPECT_THROW(HttpBackend(BackendConfig{}), ConfigError); }
