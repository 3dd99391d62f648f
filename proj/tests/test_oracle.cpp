#include <catch_amalgamated.hpp>

#include <cmath>

#include "codeopt/oracle.hpp"

using namespace codeopt;
using Catch::Approx;

namespace {

class FlakyBackend : public OracleBackend {
public:
    explicit FlakyBackend(int failures) : failures_(failures) {}
    OracleResponse complete(const OracleRequest&) override {
        ++calls;
        if (calls <= failures_) throw TransientBackendError("HTTP 503");
        return OracleResponse{"ok", std::nullopt, std::nullopt};
    }
    bool deterministic() const override { return false; }
    std::string name() const override { return "flaky"; }
    int calls = 0;

private:
    int failures_;
};

class BrokenScripted : public ScriptedBackend {
public:
    OracleResponse complete(const OracleRequest&) override {
        ++calls;
        throw TransientBackendError("always");
    }
    int calls = 0;
};

}  // namespace

TEST_CASE("scripted backend echoes fixtures by role and ordinal") {
    auto b = ScriptedBackend::from_jsonl(
        R"({"role":"InitHypothesis","ordinal":1,"response_text":"use gradient boosting"}
{"role":"judge","ordinal":"*","response_text":"ACCEPT"}
{"role":"Judge","ordinal":2,"response_text":"REJECT"})");
    OracleClient client(b);
    CHECK(client.ask(OracleRole::InitHypothesis, {}).text == "use gradient boosting");
    CHECK(client.ask(OracleRole::Judge, {}).text == "ACCEPT");
    CHECK(client.ask(OracleRole::Judge, {}).text == "REJECT");
    CHECK(client.ask(OracleRole::Judge, {}).text == "ACCEPT");
    CHECK(b->served(OracleRole::Judge) == 3);
    try {
        client.ask(OracleRole::InitHypothesis, {});
        FAIL("expected a fixture miss");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::FixtureMiss);
    }
}

TEST_CASE("malformed fixture files are config errors") {
    CHECK_THROWS_AS(ScriptedBackend::from_jsonl("{not json"), Error);
    CHECK_THROWS_AS(ScriptedBackend::from_jsonl(R"({"role":"Judge","response_text":"x"})"), Error);
    CHECK_THROWS_AS(ScriptedBackend::from_jsonl(R"({"role":"Judge","ordinal":"two","response_text":"x"})"), Error);
    CHECK_THROWS_AS(ScriptedBackend::from_jsonl(R"({"role":"Chef","ordinal":1,"response_text":"x"})"), Error);
    CHECK_THROWS_AS(ScriptedBackend::from_file("/nonexistent/fixture.jsonl"), Error);
}

TEST_CASE("request context is checked against the role schema") {
    auto b = std::make_shared<ScriptedBackend>();
    b->add(OracleRole::Judge, 0, "ACCEPT");
    OracleClient client(b);
    CHECK_NOTHROW(client.ask(OracleRole::Judge, {{"h_current", "1"}}));
    CHECK_THROWS_AS(client.ask(OracleRole::Judge, {{"test_labels", "1"}}), Error);
    for (auto role : kAllRoles) {
        CHECK(parse_role(to_string(role)) == role);
        CHECK(parse_role(template_stem(role)) == role);
    }
}

TEST_CASE("retry with backoff") {
    SECTION("two transient failures then success") {
        FlakyBackend b(2);
        int attempts = 0;
        std::vector<double> waits;
        const auto r = with_retry(b, {}, RetryPolicy{3, 5.0}, [&](double s) { waits.push_back(s); }, &attempts);
        CHECK(r.text == "ok");
        CHECK(attempts == 3);
        CHECK(waits == std::vector<double>{5.0, 5.0});
    }
    SECTION("no retries allowed") {
        FlakyBackend b(1);
        try {
            with_retry(b, {}, RetryPolicy{0, 5.0}, [](double) {});
            FAIL("expected BackendUnavailable");
        } catch (const BackendUnavailable& e) {
            CHECK(e.attempts() == 1);
            CHECK(exit_code_for(e.code()) == 4);
        }
    }
    SECTION("deterministic backends get one attempt") {
        BrokenScripted b;
        int attempts = 0;
        CHECK_THROWS_AS(with_retry(b, {}, RetryPolicy{10, 0.0}, [](double) {}, &attempts), BackendUnavailable);
        CHECK(attempts == 1);
        CHECK(b.calls == 1);
    }
    CHECK_THROWS_AS((RetryPolicy{-1, 1.0}.check()), Error);
}

TEST_CASE("client numbers requests and keeps a transcript") {
    auto b = std::make_shared<ScriptedBackend>();
    b->add(OracleRole::Sketch, 0, "plan");
    OracleClient client(b);
    client.ask(OracleRole::Sketch, {{"hypothesis", "a"}});
    client.embed("some text");
    client.ask(OracleRole::Sketch, {{"hypothesis", "b"}});
    const auto t = client.transcript();
    REQUIRE(t.size() == 3);
    CHECK(t[0].nonce < t[2].nonce);
    CHECK(client.calls() == 2);
    CHECK(client.calls(true) == 3);
    CHECK(client.roles_called() == std::vector<OracleRole>{OracleRole::Sketch, OracleRole::Sketch});
    client.clear_transcript();
    CHECK(client.calls(true) == 0);
}

TEST_CASE("embeddings are unit vectors") {
    OracleClient client(std::make_shared<ScriptedBackend>());
    for (const char* s : {"abc", "xyz", "use gradient boosting", "a"}) {
        const auto v = client.embed(s);
        double n = 0;
        for (double x : v) n += x * x;
        CHECK(std::sqrt(n) == Approx(1.0).margin(1e-9));
        CHECK(cosine(v, v) == Approx(1.0).margin(1e-12));
    }
    const double c = cosine(client.embed("abc"), client.embed("xyz"));
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(cosine(client.embed("add lag features"), client.embed("add lag features please")) >
          cosine(client.embed("add lag features"), client.embed("tune the learning rate")));
    CHECK_THROWS_AS(client.embed(""), Error);
    EmbeddingConfig other;
    other.seed = 99;
    CHECK(hash_embedding("abc", other) != hash_embedding("abc", EmbeddingConfig{}));
}

TEST_CASE("synthetic backend judges by fidelity") {
    const OracleContext improving{{"h_current", "0.9"}, {"h_best", "0.8"}, {"direction", "HigherBetter"}};
    const OracleContext worsening{{"h_current", "0.7"}, {"h_best", "0.8"}, {"direction", "HigherBetter"}};
    {
        OracleClient exact(std::make_shared<SyntheticBackend>(SyntheticOracleParams{1.0, 2.0, 3}));
        CHECK(exact.ask(OracleRole::Judge, improving).text == "ACCEPT");
        CHECK(exact.ask(OracleRole::Judge, worsening).text == "REJECT");
    }
    {
        OracleClient wrong(std::make_shared<SyntheticBackend>(SyntheticOracleParams{0.0, 2.0, 3}));
        CHECK(wrong.ask(OracleRole::Judge, improving).text == "REJECT");
    }
    auto half = std::make_shared<SyntheticBackend>(SyntheticOracleParams{0.7, 2.0, 11});
    OracleClient client(half);
    int accepts = 0;
    for (int i = 0; i < 4000; ++i) accepts += client.ask(OracleRole::Judge, improving).text == "ACCEPT";
    CHECK(accepts / 4000.0 == Approx(0.7).margin(0.03));
    CHECK(client.ask(OracleRole::Implement, {{"base_code", "print(1)"}}).text == "print(1)");
    CHECK_THROWS_AS((SyntheticBackend(SyntheticOracleParams{1.5, 2.0, 1})), Error);
}

TEST_CASE("prompt templates") {
    CHECK(render_template("a {{x}} b {{ y }} {{missing}}.", {{"x", "1"}, {"y", "2"}}) == "a 1 b 2 .");
    PromptTemplates tpl(CODEOPT_TEMPLATE_DIR);
    for (auto role : kAllRoles) {
        if (role == OracleRole::Embed) continue;
        OracleRequest req;
        req.role = role;
        for (const auto& key : context_schema(role)) req.context[key] = "<" + key + ">";
        const auto text = tpl.render(req);
        for (const auto& key : context_schema(role)) CHECK(text.find("<" + key + ">") != std::string::npos);
    }
    CHECK_THROWS_AS(PromptTemplates("/nonexistent").render(OracleRequest{}), Error);
}

TEST_CASE("live backend request body and unreachable endpoint") {
    LiveBackendConfig cfg;
    cfg.url = "http://127.0.0.1:9/v1/chat/completions";
    cfg.template_dir = CODEOPT_TEMPLATE_DIR;
    cfg.model = "test-model";
    cfg.timeout_seconds = 2;
    auto live = std::make_shared<LiveBackend>(cfg);
    OracleRequest req;
    req.role = OracleRole::Judge;
    req.context = {{"hypothesis", "add lag features"}};
    const auto body = live->build_body(req);
    CHECK(body["model"] == "test-model");
    REQUIRE(body["messages"].size() == 2);
    CHECK(body["messages"][1]["content"].get<std::string>().find("add lag features") != std::string::npos);

    OracleClient client(live, RetryPolicy{1, 0.0});
    CHECK_THROWS_AS(client.ask(OracleRole::Judge, {{"hypothesis", "x"}}), BackendUnavailable);
    CHECK(client.embed("offline").size() == 64);
}
