#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "anchor/cli.hpp"
#include "anchor/eval.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "stub_server.hpp"

using namespace anchor;
using namespace anchor::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = anchor::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workspace {
  fs::path dir;
  std::vector<eval::BenchmarkItem> items;

  Workspace() : dir(fs::temp_directory_path() / "anchor_cli_test") {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto tok = tokenizer_backend();
    ScriptBuilder b;
    std::ofstream data(dir / "data.jsonl");
    for (int k = 0; k < 4; ++k) {
      eval::BenchmarkItem it{"n" + std::to_string(k), eval::TaskKind::numeric,
                             "What is " + std::to_string(k) + " + 2?", {}, std::to_string(k + 2)};
      data << nlohmann::json{{"id", it.id}, {"task_kind", "numeric"}, {"question", it.question}, {"gold", it.gold}}
                  .dump()
           << '\n';
      const std::string wrong = k == 0 ? "5" : it.gold;
      b.script(assemble_prompt(render_prompt(it, eval::Method::self_anchor),
                               eval::method_template(eval::Method::self_anchor), tok)
                   .tokens,
               tok.tokenize(plan_output(2, it.gold, k)));
      b.script(assemble_prompt(render_prompt(it, eval::Method::cot), eval::method_template(eval::Method::cot), tok)
                   .tokens,
               tok.tokenize("Add them.\n\nFinal answer: " + wrong));
      items.push_back(it);
    }
    std::ofstream(dir / "stub.json") << stub_fixture_to_json(b.build("clistub"));
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string stub() const { return "stub:" + (dir / "stub.json").string(); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(invoke({}).code == anchor::cli::kUsageError);
  CHECK(invoke({"frobnicate"}).code == anchor::cli::kUsageError);
  CHECK(invoke({"run"}).code == anchor::cli::kUsageError);
  CHECK(invoke({"--help"}).code == anchor::cli::kOk);
  ::unsetenv("ANCHOR_BACKEND_URL");
  const auto r = invoke({"run", "What is 1 + 2?"});
  CHECK(r.code == anchor::cli::kUsageError);
  CHECK(r.err.find("--backend") != std::string::npos);
}

TEST_CASE("run prints steps and the final answer") {
  const Workspace ws;
  const auto& it = ws.items[1];
  const auto r = invoke({"run", it.question, "--backend", ws.stub(), "--trace", ws.path("t.json")});
  CHECK(r.code == anchor::cli::kOk);
  CHECK(r.out.find("final answer: 3") != std::string::npos);
  CHECK(r.out.find("step 1 plan_key omega=1.5000: Step 1:") != std::string::npos);
  const auto trace = nlohmann::json::parse(std::ifstream(ws.path("t.json")));
  CHECK(trace.at("status") == "answered");
  CHECK(trace.at("final_answer") == "3");
}

TEST_CASE("flags override the config file") {
  const Workspace ws;
  std::ofstream(ws.path("cfg.json")) << R"({"omega": 2.5, "mean": "arithmetic", "backend": ")" << ws.stub() << "\"}";
  auto r = invoke({"run", ws.items[0].question, "--config", ws.path("cfg.json"), "--trace", ws.path("a.json")});
  CHECK(r.code == anchor::cli::kOk);
  CHECK(nlohmann::json::parse(std::ifstream(ws.path("a.json"))).at("steps")[0].at("omega") == 2.5);
  r = invoke({"run", ws.items[0].question, "--config", ws.path("cfg.json"), "--omega", "1.25", "--trace",
           ws.path("b.json")});
  CHECK(r.code == anchor::cli::kOk);
  CHECK(nlohmann::json::parse(std::ifstream(ws.path("b.json"))).at("steps")[0].at("omega") == 1.25);
  CHECK(invoke({"run", "q", "--config", ws.path("missing.json")}).code == anchor::cli::kUsageError);
  CHECK(invoke({"run", "q", "--backend", ws.stub(), "--mean", "median"}).code == anchor::cli::kUsageError);
  CHECK(invoke({"run", "q", "--backend", ws.stub(), "--omega", "-1"}).code == anchor::cli::kUsageError);
}

TEST_CASE("exit codes: no answer 3, backend failure 2") {
  const Workspace ws;
  // the stub knows no continuation for this question: default logits pick token 0 forever
  auto r = invoke({"run", "Unknown question!", "--backend", ws.stub(), "--max-new-tokens", "20"});
  CHECK(r.code == anchor::cli::kNoAnswer);
  CHECK(r.out.find("no final answer (truncated)") != std::string::npos);
  r = invoke({"run", "q", "--backend", "remote:http://127.0.0.1:1"});
  CHECK(r.code == anchor::cli::kBackendError);
  CHECK(invoke({"run", "q", "--backend", "ftp://x"}).code == anchor::cli::kUsageError);
}

TEST_CASE("remote backend from the environment") {
  const Workspace ws;
  const StubBackend stub(load_stub_fixture(ws.path("stub.json")));
  StubServer server(stub, std::string("tok"));
  ::setenv("ANCHOR_BACKEND_URL", server.url().c_str(), 1);
  ::setenv("ANCHOR_BACKEND_TOKEN", "tok", 1);
  const auto r = invoke({"run", ws.items[2].question});
  ::unsetenv("ANCHOR_BACKEND_URL");
  ::unsetenv("ANCHOR_BACKEND_TOKEN");
  CHECK(r.code == anchor::cli::kOk);
  CHECK(r.out.find("final answer: 4") != std::string::npos);
  CHECK(server.requests() > 0);
}

TEST_CASE("eval, analyze and ablate-means write their files") {
  const Workspace ws;
  auto r = invoke({"eval", ws.path("data.jsonl"), "--backend", ws.stub(), "--out", ws.path("sa"), "--trace",
                ws.path("traces"), "--jobs", "2"});
  REQUIRE(r.code == anchor::cli::kOk);
  CHECK(r.out.find("default,self_anchor,clistub,4,1.0000") != std::string::npos);
  CHECK(fs::exists(ws.path("sa/summary.csv")));
  CHECK(fs::exists(ws.path("sa/summary.json")));
  CHECK(fs::exists(ws.path("traces/n0.json")));
  r = invoke({"eval", ws.path("data.jsonl"), "--backend", ws.stub(), "--out", ws.path("cot"), "--method", "cot"});
  REQUIRE(r.code == anchor::cli::kOk);
  CHECK(r.out.find("default,cot,clistub,4,0.7500") != std::string::npos);

  const auto a = ws.path("sa/results.jsonl");
  const auto b = ws.path("cot/results.jsonl");
  r = invoke({"analyze", a, b, "--report", "gains", "--method", "self_anchor,cot", "--out", ws.path("gains.json")});
  CHECK(r.code == anchor::cli::kOk);
  const auto gains = nlohmann::json::parse(std::ifstream(ws.path("gains.json")));
  CHECK(gains.at("items").size() == 4);
  CHECK(gains.at("items")[0].at("gain") == 1.0);
  r = invoke({"analyze", a, b, "--report", "complexity"});
  CHECK(r.code == anchor::cli::kOk);
  CHECK(r.out.find("n0,0.5000,0.5000") != std::string::npos);
  r = invoke({"analyze", a, "--report", "throughput"});
  CHECK(r.code == anchor::cli::kOk);
  CHECK(r.out.rfind("model,method,tokens,seconds,tokens_per_sec\n", 0) == 0);
  r = invoke({"analyze", a, "--report", "chains"});
  CHECK(r.code == anchor::cli::kOk);
  CHECK(r.out.find("default,self_anchor,clistub,4,1.00,1,1,1") != std::string::npos);
  CHECK(invoke({"analyze", a, "--report", "gains"}).code == anchor::cli::kUsageError);
  CHECK(invoke({"analyze", ws.path("nope.jsonl"), "--report", "chains"}).code == anchor::cli::kUsageError);

  r = invoke({"ablate-means", ws.path("data.jsonl"), "--backend", ws.stub(), "--out", ws.path("abl")});
  CHECK(r.code == anchor::cli::kOk);
  for (const char* k : {"harmonic", "geometric", "arithmetic"}) {
    CHECK(fs::exists(ws.path(std::string("abl/") + k + "/results.jsonl")));
  }
  std::ifstream csv(ws.path("abl/ablation_means.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "mean_kind,suite,method,model,n,accuracy,mean_chain_length,tokens_per_sec");
}

TEST_CASE("the executable runs") {
  CHECK(std::system(ANCHOR_CLI_PATH " --help > /dev/null") == 0);
  CHECK(WEXITSTATUS(std::system(ANCHOR_CLI_PATH " run q > /dev/null 2>&1")) == anchor::cli::kUsageError);
}
