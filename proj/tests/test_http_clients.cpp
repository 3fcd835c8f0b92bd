#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "airrag/http_clients.hpp"

using namespace airrag;
using nlohmann::json;

namespace {

struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit StubServer() = default;

  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this]() { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~StubServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }

  clients::HttpClientConfig config(int max_retries = 3) const {
    clients::HttpClientConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.model = "stub-model";
    cfg.timeout_seconds = 5.0;
    cfg.max_retries = max_retries;
    cfg.backoff_base_ms = 1;
    cfg.backoff_cap_ms = 4;
    return cfg;
  }
};

json chat_ok(const std::vector<std::string>& contents, int prompt_tokens) {
  json choices = json::array();
  for (const auto& c : contents) choices.push_back({{"message", {{"role", "assistant"}, {"content", c}}}});
  return {{"choices", choices},
          {"usage", {{"prompt_tokens", prompt_tokens}, {"completion_tokens", 1}}}};
}

}  // namespace

TEST_CASE("chat client retries 429 with backoff and succeeds") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    int h = ++hits;
    if (h <= 3) {
      res.status = 429;
      return;
    }
    res.set_content(chat_ok({"hello"}, 12).dump(), "application/json");
  });
  stub.start();

  clients::HttpChatClient client(stub.config(3));
  auto out = client.generate({"prompt text", {1, 0.8, 50, 0.0}, {}});
  REQUIRE(out.size() == 1);
  CHECK(out[0].text == "hello");
  CHECK(out[0].tokens_in == 12);
  CHECK(client.stats().retries.load() == 3);
  CHECK(hits.load() == 4);
}

TEST_CASE("chat client surfaces ClientError after the retry cap") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  stub.start();

  clients::HttpChatClient client(stub.config(2));
  CHECK_THROWS_AS(client.generate({"p", {1, 0.8, 50, 0.0}, {}}), ClientError);
  CHECK(hits.load() == 3);  // total attempts = 1 + max_retries
  CHECK(client.stats().failures.load() == 1);
}

TEST_CASE("non-retryable statuses fail immediately") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
  });
  stub.start();

  clients::HttpChatClient client(stub.config(3));
  CHECK_THROWS_AS(client.generate({"p", {1, 0.8, 50, 0.0}, {}}), ClientError);
  CHECK(hits.load() == 1);
}

TEST_CASE("a parseable but truncated response is returned without retrying") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.set_content(chat_ok({"only one"}, 5).dump(), "application/json");
  });
  stub.start();

  clients::HttpChatClient client(stub.config(3));
  auto out = client.generate({"p", {3, 0.8, 50, 0.7}, {}});  // asked for 3, backend gave 1
  CHECK(out.size() == 1);
  CHECK(hits.load() == 1);
  CHECK(client.stats().retries.load() == 0);
}

TEST_CASE("unparseable bodies are retried then surfaced as ClientError") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.set_content("not json {{{", "application/json");
  });
  stub.start();

  clients::HttpChatClient client(stub.config(1));
  CHECK_THROWS_AS(client.generate({"p", {1, 0.8, 50, 0.0}, {}}), ClientError);
  CHECK(hits.load() == 2);
}

TEST_CASE("embedding and retrieval clients parse their wire formats") {
  StubServer stub;
  stub.server.Post("/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    json data = json::array();
    for (std::size_t i = 0; i < body["input"].size(); ++i)
      data.push_back({{"embedding", {1.0, 0.0, static_cast<double>(i)}}});
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  stub.server.Post("/retrieve", [&](const httplib::Request&, httplib::Response& res) {
    json docs = json::array({{{"doc_id", "a"}, {"content", "x"}, {"score", 0.5}},
                             {{"doc_id", "b"}, {"content", "y"}, {"score", 0.9}},
                             {{"doc_id", "b"}, {"content", "dup"}, {"score", 0.1}}});
    res.set_content(json{{"docs", docs}}.dump(), "application/json");
  });
  stub.start();

  clients::HttpEmbeddingClient emb(stub.config());
  auto vectors = emb.embed({"t1", "t2"});
  REQUIRE(vectors.size() == 2);
  CHECK(vectors[0].values.size() == 3);
  CHECK(vectors[0].norm > 0.0);

  clients::HttpRetrieverClient ret(stub.config());
  auto docs = ret.retrieve("query", 5);
  REQUIRE(docs.size() == 2);  // duplicate id dropped
  CHECK(docs[0].doc_id == "b");
  CHECK(docs[0].score == 0.9);
  CHECK(docs[1].doc_id == "a");
}

TEST_CASE("connection failures are retried then surfaced") {
  clients::HttpClientConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";  // nothing listens here
  cfg.timeout_seconds = 1.0;
  cfg.max_retries = 1;
  cfg.backoff_base_ms = 1;
  clients::HttpChatClient client(cfg);
  CHECK_THROWS_AS(client.generate({"p", {1, 0.8, 50, 0.0}, {}}), ClientError);
  CHECK(client.stats().requests.load() == 2);
}
