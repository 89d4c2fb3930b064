#include "medeval/cli.hpp"

#include <doctest.h>

#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medeval/common.hpp"
#include "medeval/slidegrid.hpp"
#include "medeval/volgrid.hpp"
#include "testutil.hpp"

using namespace medeval;
using nlohmann::json;

namespace {

const std::filesystem::path kSource = std::filesystem::path(MEDEVAL_SOURCE_DIR);

int run_cli(const std::vector<std::string>& args, std::string* captured = nullptr) {
  std::vector<const char*> argv{"medeval"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream sink;
  std::streambuf* old = std::cout.rdbuf(sink.rdbuf());
  const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  if (captured) *captured = sink.str();
  return code;
}

}  // namespace

TEST_CASE("help exits 0 and lists subcommands; unknown flags exit 1") {
  std::string out;
  CHECK(run_cli({"--help"}, &out) == 0);
  for (const char* sub :
       {"prep-volume", "prep-wsi", "render-prompt", "run", "score", "verify-report"}) {
    CHECK(out.find(sub) != std::string::npos);
  }
  CHECK(run_cli({"run", "--help"}, &out) == 0);
  for (const char* flag : {"--task", "--manifest", "--endpoint", "--out", "--temperature",
                           "--max-in-flight", "--max-output-tokens", "--model-kind"}) {
    CHECK(out.find(flag) != std::string::npos);
  }
  CHECK(run_cli({"--definitely-not-a-flag"}) == 1);
  CHECK(run_cli({"score", "--task", "bbox"}) == 1);  // missing required flags
}

TEST_CASE("score bbox on the shipped fixture prints the mean IoU") {
  test::TempDir tmp("clibbox");
  std::string out;
  const int code = run_cli({"score", "--task", "bbox",
                            "--pred", (kSource / "fixtures/bbox/pred.jsonl").string(),
                            "--gold", (kSource / "fixtures/bbox/gold.jsonl").string(),
                            "--out", (tmp.path() / "report.json").string(),
                            "--config", (tmp.path() / "missing.json").string()});
  CHECK(code == 1);  // config file must exist when named

  const int ok = run_cli({"score", "--task", "bbox",
                          "--pred", (kSource / "fixtures/bbox/pred.jsonl").string(),
                          "--gold", (kSource / "fixtures/bbox/gold.jsonl").string(),
                          "--out", (tmp.path() / "report.json").string()},
                         &out);
  CHECK(ok == 0);
  CHECK(out.find("mean_iou") != std::string::npos);
  const json report = json::parse(read_text_file(tmp.path() / "report.json"));
  // bbox001 exact (IoU 1.0), bbox002 half-height overlap (IoU 0.5)
  CHECK(report["aggregates"]["mean_iou"].get<double>() == doctest::Approx(0.75));
}

TEST_CASE("score lab on the shipped matcher fixture") {
  test::TempDir tmp("clilab");
  std::string out;
  const int code = run_cli({"score", "--task", "lab",
                            "--pred", (kSource / "fixtures/lab/pred.jsonl").string(),
                            "--gold", (kSource / "fixtures/lab/gold.jsonl").string(),
                            "--out", (tmp.path() / "report.json").string()},
                           &out);
  CHECK(code == 0);
  const json report = json::parse(read_text_file(tmp.path() / "report.json"));
  CHECK(report["aggregates"]["overall"]["f1"].get<double>() == doctest::Approx(0.8));
  CHECK(report["aggregates"]["per_field"]["result"]["f1"].get<double>() ==
        doctest::Approx(0.6));
  CHECK(report["aggregates"]["per_field"]["unit"]["f1"].get<double>() == doctest::Approx(0.8));
}

TEST_CASE("missing manifest exits 1") {
  CHECK(run_cli({"score", "--task", "mcq", "--pred", "/nonexistent/p.jsonl", "--gold",
                 "/nonexistent/g.jsonl", "--out", "/tmp/r.json"}) == 1);
}

TEST_CASE("prep-volume pipeline over a synthetic study directory") {
  test::TempDir tmp("cliprep");
  auto vol = test::make_volume("ser1", volgrid::Modality::CT, 32, 32, 8,
                               [](int x, int y, int z) {
                                 return static_cast<float>(x * 4 + y * 2 - z * 30);
                               });
  volgrid::save_volume(tmp.path() / "study42", "vol0", vol);

  std::string out;
  const int code = run_cli({"prep-volume", "--in", (tmp.path() / "study42").string(),
                            "--out", (tmp.path() / "prepped").string(), "--cap", "85",
                            "--modality", "auto"},
                           &out);
  CHECK(code == 0);
  CHECK(out.find("8 slices") != std::string::npos);
  CHECK(std::filesystem::exists(tmp.path() / "prepped/study42/sequence.json"));
  CHECK(std::filesystem::exists(tmp.path() / "prepped/manifest.jsonl"));
  CHECK(std::filesystem::exists(tmp.path() / "prepped/study42/0000_ser1_0000.png"));

  // forcing the wrong modality is a validation error
  CHECK(run_cli({"prep-volume", "--in", (tmp.path() / "study42").string(), "--out",
                 (tmp.path() / "p2").string(), "--modality", "mr"}) == 1);
}

TEST_CASE("prep-wsi pipeline over a synthetic slide directory") {
  test::TempDir tmp("cliwsi");
  const slidegrid::SlidePyramid slide =
      test::make_tissue_slide("slideA", 1000, 1000, 100, 100, 800, 800);
  slidegrid::save_slide(tmp.path() / "slideA", slide);

  std::string out;
  const int code = run_cli({"prep-wsi", "--in", (tmp.path() / "slideA").string(), "--out",
                            (tmp.path() / "patches").string(), "--cap", "126", "--seed", "7"},
                           &out);
  CHECK(code == 0);
  CHECK(std::filesystem::exists(tmp.path() / "patches/slideA/patches.json"));
  const json manifest = json::parse(read_text_file(tmp.path() / "patches/slideA/patches.json"));
  CHECK(manifest["seed"].get<int>() == 7);
  CHECK(manifest["caption_label"].get<std::string>() == "colon biopsy");
  CHECK(manifest["patches"].size() >= 1);
}

TEST_CASE("render-prompt renders templates and lists ids") {
  std::string out;
  CHECK(run_cli({"render-prompt", "--templates", (kSource / "templates").string(), "--list"},
                &out) == 0);
  CHECK(out.find("ct_rate") != std::string::npos);
  CHECK(run_cli({"render-prompt", "--templates", (kSource / "templates").string(),
                 "--template", "ct_rate", "--slot", "label=Emphysema"},
                &out) == 0);
  CHECK(out.find("is there Emphysema?") != std::string::npos);
  CHECK(run_cli({"render-prompt", "--templates", (kSource / "templates").string(),
                 "--template", "nope"}) == 1);
}

TEST_CASE("run against the gold mock, then verify-report round trip") {
  test::TempDir tmp("clirun");
  std::string out;
  const int code = run_cli({"run", "--task", "mcq",
                            "--manifest", (kSource / "fixtures/mcq/gold.jsonl").string(),
                            "--endpoint", "mock:gold",
                            "--out", (tmp.path() / "out").string(),
                            "--templates", (kSource / "templates").string(),
                            "--max-in-flight", "2"},
                           &out);
  CHECK(code == 0);
  CHECK(out.find("accuracy: 1") != std::string::npos);
  CHECK(std::filesystem::exists(tmp.path() / "out/report.json"));
  CHECK(std::filesystem::exists(tmp.path() / "out/summary.csv"));

  CHECK(run_cli({"verify-report", "--report", (tmp.path() / "out/report.json").string()},
                &out) == 0);
  CHECK(out.find("report OK") != std::string::npos);

  json tampered = json::parse(read_text_file(tmp.path() / "out/report.json"));
  tampered["aggregates"]["accuracy"] = 0.123;
  write_text_file(tmp.path() / "out/report.json", tampered.dump(2) + "\n");
  CHECK(run_cli({"verify-report", "--report", (tmp.path() / "out/report.json").string()}) == 1);

  // flags echo into run metadata
  json fresh;
  {
    test::TempDir tmp2("clirun2");
    run_cli({"run", "--task", "mcq",
             "--manifest", (kSource / "fixtures/mcq/gold.jsonl").string(),
             "--endpoint", "mock:gold", "--out", (tmp2.path() / "o").string(),
             "--templates", (kSource / "templates").string(), "--temperature", "0.5",
             "--seed", "17"});
    fresh = json::parse(read_text_file(tmp2.path() / "o/report.json"));
  }
  CHECK(fresh["metadata"]["temperature"].get<double>() == doctest::Approx(0.5));
  CHECK(fresh["metadata"]["seed"].get<int>() == 17);
  CHECK(fresh["metadata"]["config"]["evalrunner"]["temperature"].get<double>() ==
        doctest::Approx(0.5));
  CHECK(fresh["metadata"]["config"]["run"]["task"] == "mcq");
}

TEST_CASE("run against an unreachable endpoint exits 2") {
  test::TempDir tmp("clifail");
  write_text_file(tmp.path() / "conf.json",
                  R"({"evalrunner": {"retry_count": 1, "retry_backoff_ms": 1}})");
  const int code = run_cli({"--config", (tmp.path() / "conf.json").string(),
                            "run", "--task", "mcq",
                            "--manifest", (kSource / "fixtures/mcq/gold.jsonl").string(),
                            "--endpoint", "http://127.0.0.1:9",
                            "--out", (tmp.path() / "out").string(),
                            "--templates", (kSource / "templates").string()});
  CHECK(code == 2);
  // the report is still emitted with per-call errors recorded
  const json report = json::parse(read_text_file(tmp.path() / "out/report.json"));
  CHECK(report["aggregates"]["error_count"].get<int>() == 4);
}

TEST_CASE("config file values flow through and unknown keys are rejected") {
  test::TempDir tmp("cliconf");
  write_text_file(tmp.path() / "conf.json", R"({"volgrid": {"cap": 3}})");
  auto vol = test::make_ct("s", 16, 16, 8, 40.0f);
  volgrid::save_volume(tmp.path() / "study", "v", vol);
  std::string out;
  CHECK(run_cli({"--config", (tmp.path() / "conf.json").string(), "prep-volume", "--in",
                 (tmp.path() / "study").string(), "--out", (tmp.path() / "o").string()},
                &out) == 0);
  CHECK(out.find("3 slices") != std::string::npos);

  write_text_file(tmp.path() / "bad.json", R"({"volgrid": {"caps": 3}})");
  CHECK(run_cli({"--config", (tmp.path() / "bad.json").string(), "prep-volume", "--in",
                 (tmp.path() / "study").string(), "--out", (tmp.path() / "o2").string()}) == 1);
}
