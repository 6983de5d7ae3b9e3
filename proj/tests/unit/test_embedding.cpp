#include <doctest.h>

#include <httplib.h>

#include <cmath>
#include <json.hpp>
#include <thread>

#include "support.hpp"
#include "tstr/error.hpp"
#include "tstr/io.hpp"

using namespace tstr;

namespace {

/// Returns caller-chosen vectors and records every call.
class ScriptedProvider final : public EmbeddingProvider {
 public:
  explicit ScriptedProvider(std::function<std::vector<double>(const std::string&)> fn) : fn_(std::move(fn)) {}
  std::string tag() const override { return "scripted/v1"; }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override {
    std::lock_guard lock(mu_);
    calls.emplace_back(texts.begin(), texts.end());
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) out.push_back(fn_(t));
    return out;
  }
  std::vector<std::vector<std::string>> calls;

 private:
  std::function<std::vector<double>(const std::string&)> fn_;
  std::mutex mu_;
};

double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("normalization and cosine") {
  std::vector<double> v{3.0, 4.0};
  REQUIRE(normalize_in_place(v));
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[1] == doctest::Approx(0.8));
  std::vector<double> zero{0.0, 0.0};
  CHECK_FALSE(normalize_in_place(zero));
  CHECK(zero[0] == 0.0);
  const std::vector<double> a{1.0, 0.0}, b{0.0, 1.0};
  CHECK(cosine(a, b) == 0.0);
  CHECK(cosine(a, a) == 1.0);
  CHECK_THROWS_AS(cosine(a, std::vector<double>{1.0, 0.0, 0.0}), ShapeError);
}

TEST_CASE("fallback embedder") {
  const EmbeddingVector v = fallback_embed("Sort the table by Price", 64);
  CHECK(v.dim() == 64);
  CHECK(norm(v.values) == doctest::Approx(1.0));
  CHECK(v.provider_tag == "fallback/trigram-64");
  CHECK(fallback_embed("Sort the table by Price", 64) == v);
  CHECK(fallback_embed("SORT THE TABLE BY PRICE", 64).values == v.values);
  CHECK_THROWS_AS(fallback_embed("x", 8), UsageError);

  // No trigram at all: the first basis vector.
  const EmbeddingVector e0 = fallback_embed("ab", 32);
  CHECK(e0.values[0] == 1.0);
  CHECK(norm(e0.values) == 1.0);

  // Single-trigram texts in different buckets are orthogonal.
  const std::size_t dim = 64;
  const std::u32string first = U"abc";
  const TrigramSlot s1 = trigram_slot(first, dim);
  std::u32string other;
  for (char32_t c = U'd'; c <= U'z'; ++c) {
    const std::u32string cand{c, c, c};
    if (trigram_slot(cand, dim).bucket != s1.bucket) {
      other = cand;
      break;
    }
  }
  REQUIRE(!other.empty());
  std::string other_utf8(other.begin(), other.end());
  CHECK(cosine(fallback_embed("abc", dim), fallback_embed(other_utf8, dim)) == 0.0);
  CHECK(std::abs(fallback_embed("abc", dim).values[s1.bucket]) == 1.0);
}

TEST_CASE("embed_batch serves repeats from the cache") {
  ScriptedProvider provider([](const std::string& t) { return std::vector<double>{double(t.size()), 1.0, 0.0}; });
  EmbeddingStore store;
  const std::vector<std::string> texts{"aa", "bbb", "aa"};
  const auto first = embed_batch(texts, provider, store);
  REQUIRE(provider.calls.size() == 1);
  CHECK(provider.calls[0] == std::vector<std::string>{"aa", "bbb"});
  CHECK(first[0] == first[2]);
  CHECK(norm(first[1].values) == doctest::Approx(1.0));
  const auto again = embed_batch(texts, provider, store);
  CHECK(provider.calls.size() == 1);
  CHECK(again == first);
  CHECK(store.size() == 2);
  CHECK_THROWS_AS(embed_batch(std::vector<std::string>{}, provider, store), UsageError);
}

TEST_CASE("embed_batch batches misses") {
  ScriptedProvider provider([](const std::string& t) { return std::vector<double>{1.0, double(t.size())}; });
  EmbeddingStore store;
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) texts.push_back(std::string(static_cast<std::size_t>(i + 1), 'x'));
  const auto out = embed_batch(texts, provider, store, {.batch_size = 3, .max_in_flight = 2});
  CHECK(provider.calls.size() == 4);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    CHECK(out[i].values[1] / out[i].values[0] == doctest::Approx(double(i + 1)));
  }
}

TEST_CASE("embed_batch rejects degenerate provider output") {
  EmbeddingStore store;
  ScriptedProvider zeros([](const std::string&) { return std::vector<double>{0.0, 0.0}; });
  CHECK_THROWS_AS(embed_batch(std::vector<std::string>{"a"}, zeros, store), IntegrityError);
  ScriptedProvider ragged([](const std::string& t) { return std::vector<double>(t.size(), 1.0); });
  CHECK_THROWS_AS(embed_batch(std::vector<std::string>{"a", "bb"}, ragged, store), IntegrityError);
}

TEST_CASE("store persists and tolerates a torn tail") {
  test::TempDir dir;
  const auto path = dir / "cache.jsonl";
  FallbackProvider provider(32);
  std::vector<EmbeddingVector> original;
  {
    EmbeddingStore store(path);
    original = embed_batch(std::vector<std::string>{"one text", "two text"}, provider, store);
  }
  {
    std::string text = io::read_file(path);
    text += "{\"key\":\"abc\",\"provi";
    io::write_file_atomic(path, text);
  }
  EmbeddingStore reopened(path);
  CHECK(reopened.size() == 2);
  const auto hit = reopened.get(provider.tag(), "one text");
  REQUIRE(hit.has_value());
  CHECK(hit->values == original[0].values);
  CHECK_FALSE(reopened.get("other/tag", "one text").has_value());
  CHECK(EmbeddingStore::key("a", "bc") != EmbeddingStore::key("ab", "c"));
}

TEST_CASE("embedding set round-trips") {
  test::TempDir dir;
  const Corpus c = test::make_corpus({{"sort rows", "a"}, {"drop column", "b"}});
  const EmbeddingSet set = test::fallback_embeddings(c, 32);
  CHECK(set.size() == 2);
  CHECK(set.corpus_digest() == c.digest());
  set.save(dir / "e.jsonl");
  const EmbeddingSet back = EmbeddingSet::load(dir / "e.jsonl");
  CHECK(back.digest() == set.digest());
  CHECK(std::vector<double>(back.at("e1").begin(), back.at("e1").end()) ==
        std::vector<double>(set.at("e1").begin(), set.at("e1").end()));
  CHECK_THROWS_AS(set.at("missing"), DataError);
}

namespace {

/// Local stand-in for an embeddings endpoint.
class StubServer {
 public:
  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/embeddings", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/embeddings"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpProviderConfig stub_config(const StubServer& s) {
  HttpProviderConfig cfg;
  cfg.url = s.url();
  cfg.model = "stub-model";
  cfg.api_key = "secret";
  cfg.retry.initial_backoff = std::chrono::milliseconds(1);
  cfg.retry.max_attempts = 4;
  return cfg;
}

void answer(const httplib::Request& req, httplib::Response& res, std::size_t drop = 0) {
  const auto body = nlohmann::json::parse(req.body);
  const auto inputs = body.at("input").get<std::vector<std::string>>();
  nlohmann::json data = nlohmann::json::array();
  // Reverse order: clients must honour "index".
  for (std::size_t i = inputs.size(); i-- > drop;) {
    data.push_back({{"index", i}, {"embedding", {3.0 * double(inputs[i].size()), 4.0 * double(inputs[i].size())}}});
  }
  res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
}

}  // namespace

TEST_CASE("http provider: request shape, ordering, normalization") {
  std::string auth, model;
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    model = nlohmann::json::parse(req.body).at("model");
    answer(req, res);
  });
  HttpProvider provider(stub_config(server));
  CHECK(provider.tag() == "http/stub-model");
  EmbeddingStore store;
  const auto out = embed_batch(std::vector<std::string>{"a", "bb"}, provider, store);
  CHECK(auth == "Bearer secret");
  CHECK(model == "stub-model");
  CHECK(out[0].values[0] == doctest::Approx(0.6));
  CHECK(out[1].values[1] == doctest::Approx(0.8));
  CHECK(provider.requests() == 1);
}

TEST_CASE("http provider: wrong count is an integrity error") {
  StubServer server([](const httplib::Request& req, httplib::Response& res) { answer(req, res, 1); });
  HttpProvider provider(stub_config(server));
  CHECK_THROWS_AS(provider.embed(std::vector<std::string>{"a", "b"}), IntegrityError);
}

TEST_CASE("http provider: 429 honours Retry-After, 5xx is retried") {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    const int n = calls++;
    if (n == 0) {
      res.status = 429;
      res.set_header("Retry-After", "0.05");
    } else if (n == 1) {
      res.status = 503;
    } else {
      answer(req, res);
    }
  });
  HttpProvider provider(stub_config(server));
  const auto start = std::chrono::steady_clock::now();
  const auto out = provider.embed(std::vector<std::string>{"abc"});
  CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(50));
  CHECK(out.size() == 1);
  CHECK(provider.requests() == 3);
}

TEST_CASE("http provider: persistent failure and client errors") {
  StubServer failing([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  HttpProvider p1(stub_config(failing));
  CHECK_THROWS_AS(p1.embed(std::vector<std::string>{"x"}), ProviderError);
  CHECK(p1.requests() == 4);

  StubServer rejecting([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  HttpProvider p2(stub_config(rejecting));
  CHECK_THROWS_AS(p2.embed(std::vector<std::string>{"x"}), ProviderError);
  CHECK(p2.requests() == 1);

  HttpProviderConfig no_url;
  no_url.model = "m";
  CHECK_THROWS_AS(HttpProvider{no_url}, UsageError);
}
