#include <gtest/gtest.h>

#include <atomic>
#include <memory>
#include <thread>

#include "p2c/error.hpp"
#include "p2c/index.hpp"
#include "p2c/service.hpp"
#include "test_support.hpp"

// After the Eigen-based headers: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace p2c::service {
namespace {

using nlohmann::json;

std::vector<CodeSnippet> toy_snippets() {
  return {{"s1", "void f() { safe_copy(dst, src); }", {}},
          {"s2", "void g() { raw_copy(dst, src); }", {}},
          {"s3", "int open_file(const char* path) { return fd; }", {}},
          {"s4", "void h() { close(fd); }", {}},
          {"s5", "void k() { log(password); }", {}}};
}

struct Env {
  testing::TempDir dir;
  std::vector<CodeSnippet> snippets = toy_snippets();
  std::shared_ptr<JudgmentStore> store = std::make_shared<JudgmentStore>(dir / "judgments.jsonl");
  std::unique_ptr<Service> service;

  Env() {
    auto a = std::make_shared<const Model>(testing::toy_model(1));
    auto b = std::make_shared<const Model>(testing::toy_model(2));
    auto ia = std::make_shared<const EmbeddingIndex>(build_index(snippets, *a));
    auto ib = std::make_shared<const EmbeddingIndex>(build_index(std::span(snippets).first(3), *b));
    service = std::make_unique<Service>(std::vector<ServedModel>{{"A", a, ia}, {"B", b, ib}}, snippets, store,
                                        ServiceOptions{4.0, 100});
  }

  Response post(std::string_view path, const json& body) const { return service->handle("POST", path, {}, body.dump()); }
  Response get(std::string_view path, QueryParams q = {}) const { return service->handle("GET", path, q, ""); }
};

json judgment(std::string id, std::string snippet, std::string tag = "A", std::string decision = "accept") {
  return {{"id", id},          {"policy_text", "never log the raw password"},
          {"snippet_id", snippet}, {"facet", "noncompliant"},
          {"model_tag", tag},  {"decision", decision},
          {"timestamp", 1700000000}, {"reviewer", "r1"}};
}

TEST(Service, Health) {
  Env env;
  const auto r = env.get("/health");
  ASSERT_EQ(r.status, 200);
  const auto j = json::parse(r.body);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["model_hash"], env.service->default_model().model->hash());
  EXPECT_EQ(env.service->handle("POST", "/health", {}, "").status, 405);
}

TEST(Service, SearchReturnsKResults) {
  Env env;
  const auto r = env.post("/search", {{"policy_text", "prefer safe_copy"}, {"facet", "compliant"}, {"k", 3}});
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = json::parse(r.body);
  ASSERT_EQ(j["results"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(j["results"][i]["rank"], i + 1);
    EXPECT_FALSE(j["results"][i]["code"].get<std::string>().empty());
    if (i > 0) EXPECT_LE(j["results"][i - 1]["distance"].get<double>(), j["results"][i]["distance"].get<double>());
  }
  EXPECT_EQ(j["model_tag"], "A");
  const auto b = json::parse(
      env.post("/search", {{"policy_text", "x"}, {"facet", "compliant"}, {"k", 10}, {"model_tag", "B"}}).body);
  EXPECT_EQ(b["results"].size(), 3u);
  EXPECT_EQ(b["model_tag"], "B");
}

TEST(Service, BadRequests) {
  Env env;
  EXPECT_EQ(env.service->handle("POST", "/search", {}, "{not json").status, 400);
  EXPECT_EQ(env.post("/search", {{"policy_text", "x"}, {"facet", "sideways"}, {"k", 3}}).status, 400);
  EXPECT_EQ(env.post("/search", {{"policy_text", "x"}, {"facet", "compliant"}, {"k", 0}}).status, 400);
  EXPECT_EQ(env.post("/search", {{"policy_text", "x"}, {"facet", "compliant"}, {"k", 101}}).status, 400);
  EXPECT_EQ(env.post("/search", {{"policy_text", "  "}, {"facet", "compliant"}, {"k", 1}}).status, 400);
  EXPECT_EQ(env.post("/search", {{"policy_text", "x"}, {"facet", "compliant"}, {"k", 1}, {"model_tag", "Z"}}).status,
            400);
  EXPECT_EQ(env.get("/nowhere").status, 404);
  const auto err = json::parse(env.post("/classify", {{"policy_text", "x"}}).body);
  EXPECT_TRUE(err.contains("error"));
  EXPECT_TRUE(err.contains("message"));
}

TEST(Service, Classify) {
  Env env;
  const auto r = env.post("/classify", {{"policy_text", "prefer safe_copy"}, {"code", "void f() { safe_copy(a, b); }"}});
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = json::parse(r.body);
  EXPECT_TRUE(j.contains("label"));
  EXPECT_EQ(j["model_tag"], "A");
}

TEST(Service, JudgmentReadYourWrites) {
  Env env;
  ASSERT_EQ(env.post("/judgments", judgment("j1", "s1")).status, 200);
  ASSERT_EQ(env.post("/judgments", judgment("j2", "s2", "A", "reject")).status, 200);
  const auto j = json::parse(env.get("/metrics/acceptance", {{"model_tag", "A"}}).body);
  EXPECT_EQ(j["n_judgments"], 2);
  EXPECT_EQ(j["noncompliant"]["accepted"], 1);
  EXPECT_DOUBLE_EQ(j["overall"]["percent"].get<double>(), 50.0);
  const auto none = json::parse(env.get("/metrics/acceptance", {{"model_tag", "B"}}).body);
  EXPECT_EQ(none["n_judgments"], 0);
  EXPECT_TRUE(none["overall"]["percent"].is_null());
}

TEST(Service, JudgmentErrors) {
  Env env;
  EXPECT_EQ(env.post("/judgments", judgment("j1", "s1")).status, 200);
  EXPECT_EQ(env.post("/judgments", judgment("j1", "s1")).status, 200);
  EXPECT_EQ(env.post("/judgments", judgment("j1", "s1", "A", "reject")).status, 409);
  EXPECT_EQ(env.post("/judgments", judgment("j2", "nope")).status, 404);
  EXPECT_EQ(env.post("/judgments", judgment("j3", "s5", "B")).status, 404);  // not in B's index
  EXPECT_EQ(env.post("/judgments", judgment("j4", "s1", "Z")).status, 400);
  auto bad = judgment("j5", "s1");
  bad["decision"] = "maybe";
  EXPECT_EQ(env.post("/judgments", bad).status, 400);
  EXPECT_EQ(env.store->size(), 1u);
}

TEST(Service, Snippets) {
  Env env;
  const auto r = env.get("/snippets/s3");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(json::parse(r.body)["code"], toy_snippets()[2].code);
  EXPECT_EQ(env.get("/snippets/unknown").status, 404);
}

TEST(Service, ModelOrderSeededByNonce) {
  Env env;
  const auto a = json::parse(env.get("/models", {{"nonce", "abc"}}).body)["model_tags"];
  EXPECT_EQ(a, json::parse(env.get("/models", {{"nonce", "abc"}}).body)["model_tags"]);
  EXPECT_EQ(a.size(), 2u);
  bool varies = false;
  for (int i = 0; i < 20 && !varies; ++i) {
    varies = json::parse(env.get("/models", {{"nonce", std::to_string(i)}}).body)["model_tags"] != a;
  }
  EXPECT_TRUE(varies);
}

TEST(Service, StartupMismatchRejected) {
  testing::TempDir dir;
  auto store = std::make_shared<JudgmentStore>(dir / "j.jsonl");
  const auto snippets = toy_snippets();
  auto a = std::make_shared<const Model>(testing::toy_model(1));
  auto b = std::make_shared<const Model>(testing::toy_model(2));
  auto ib = std::make_shared<const EmbeddingIndex>(build_index(snippets, *b));
  auto ia = std::make_shared<const EmbeddingIndex>(build_index(snippets, *a));
  const auto expect_conflict = [&](std::vector<ServedModel> models, std::span<const CodeSnippet> s) {
    try {
      Service svc(std::move(models), s, store);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConflict) << e.what();
    }
  };
  expect_conflict({{"A", a, ib}}, snippets);
  expect_conflict({{"A", a, ia}, {"A", a, ia}}, snippets);
  expect_conflict({{"A", a, ia}}, std::span(snippets).first(2));
}

TEST(Service, ConcurrentIdenticalSearchesOverHttp) {
  Env env;
  httplib::Server server;
  env.service->mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string body = json{{"policy_text", "prefer safe_copy"}, {"facet", "noncompliant"}, {"k", 4}}.dump();
  const std::string expected = env.service->handle("POST", "/search", {}, body).body;
  std::atomic<int> mismatches{0}, failures{0};
  std::vector<std::thread> clients;
  for (int t = 0; t < 8; ++t) {
    clients.emplace_back([&] {
      httplib::Client cli("127.0.0.1", port);
      for (int i = 0; i < 10; ++i) {
        auto res = cli.Post("/search", body, "application/json");
        if (!res || res->status != 200) {
          ++failures;
        } else if (res->body != expected) {
          ++mismatches;
        }
      }
    });
  }
  for (auto& c : clients) c.join();

  httplib::Client cli("127.0.0.1", port);
  auto jr = cli.Post("/judgments", judgment("h1", "s2").dump(), "application/json");
  ASSERT_TRUE(jr);
  EXPECT_EQ(jr->status, 200);
  auto metrics = cli.Get("/metrics/acceptance?model_tag=A");
  ASSERT_TRUE(metrics);
  EXPECT_EQ(json::parse(metrics->body)["n_judgments"], 1);
  auto bad = cli.Post("/search", "{", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);

  server.stop();
  runner.join();
  EXPECT_EQ(failures.load(), 0);
  EXPECT_EQ(mismatches.load(), 0);
}

}  // namespace
}  // namespace p2c::service
