#include "medeval/evalrunner.hpp"

#include <doctest.h>
#include <httplib.h>

#include <chrono>
#include <thread>

#include "medeval/common.hpp"
#include "medeval/endpoint.hpp"
#include "medeval/manifest.hpp"
#include "testutil.hpp"

using namespace medeval;
using namespace medeval::evalrunner;
using nlohmann::json;
using promptforge::TaskKind;

namespace {

const std::filesystem::path kTemplates = std::filesystem::path(MEDEVAL_SOURCE_DIR) / "templates";

RunConfig base_config(TaskKind task) {
  RunConfig config;
  config.task = task;
  config.templates_dir = kTemplates;
  config.endpoint.max_in_flight = 4;
  return config;
}

/// One tiny prepared sequence reused by every classification record.
std::filesystem::path make_sequence_fixture(const std::filesystem::path& dir) {
  std::vector<volgrid::VoxelVolume> vols{test::make_volume(
      "fix", volgrid::Modality::CT, 16, 16, 5,
      [](int x, int y, int z) { return static_cast<float>(40 * z + x - y); })};
  const volgrid::RenderResult res = volgrid::render_sequence(vols);
  volgrid::write_sequence(res.sequence, "study", dir);
  return dir / "study" / "sequence.json";
}

std::vector<ManifestRecord> classification_manifest(const std::filesystem::path& seq,
                                                    TaskKind task, int n_records,
                                                    const std::vector<std::string>& conditions) {
  std::vector<ManifestRecord> records;
  for (int i = 0; i < n_records; ++i) {
    ManifestRecord r;
    r.example_id = "ex" + std::to_string(100 + i);
    r.task_kind = task;
    r.inputs = {{"sequence", seq.string()}};
    if (task != TaskKind::CtRateCls) r.inputs["history"] = "persistent cough";
    r.conditions = conditions;
    json labels = json::object();
    for (std::size_t c = 0; c < conditions.size(); ++c) {
      labels[conditions[c]] = ((i + static_cast<int>(c)) % 2) == 0;
    }
    r.gold = {{"labels", labels}};
    validate_record(r);
    records.push_back(std::move(r));
  }
  return records;
}

std::filesystem::path tiny_png(const std::filesystem::path& dir, const std::string& name) {
  const std::filesystem::path p = dir / name;
  save_png(p, test::solid_image(8, 8, 10, 20, 30));
  return p;
}

const std::vector<std::string> kCtConditions{
    "cardiac calcification", "suspicious lung nodules", "aortic aneurysm",
    "renal calculus",        "tumors",                  "appendicitis",
    "hemorrhage"};

}  // namespace

TEST_CASE("manifest loading validates shape and uniqueness") {
  test::TempDir tmp("manifest");
  const std::filesystem::path path = tmp.path() / "m.jsonl";

  SUBCASE("valid file loads") {
    write_text_file(path,
                    R"({"example_id": "a", "task_kind": "TEXT_MCQ", "inputs": {"question": "Q?"}, "gold": {"choice": "B"}})"
                    "\n");
    const auto records = load_manifest(path, TaskKind::TextMcq);
    REQUIRE(records.size() == 1);
    CHECK(records[0].example_id == "a");
    CHECK(gold_choice(records[0]) == 'B');
  }
  SUBCASE("duplicate example ids are rejected") {
    write_text_file(path,
                    R"({"example_id": "a", "task_kind": "TEXT_MCQ", "inputs": {"question": "Q?"}, "gold": {"choice": "B"}})"
                    "\n"
                    R"({"example_id": "a", "task_kind": "TEXT_MCQ", "inputs": {"question": "R?"}, "gold": {"choice": "C"}})"
                    "\n");
    CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("duplicate"), ValidationError);
  }
  SUBCASE("gold shape must match the task kind") {
    write_text_file(path,
                    R"({"example_id": "a", "task_kind": "BBOX_LOC", "inputs": {"image": "i.png", "object": "lung"}, "gold": {"choice": "B"}})"
                    "\n");
    CHECK_THROWS_AS(load_manifest(path), ValidationError);
  }
  SUBCASE("task kind mismatch against the expected task") {
    write_text_file(path,
                    R"({"example_id": "a", "task_kind": "TEXT_MCQ", "inputs": {"question": "Q?"}, "gold": {"choice": "B"}})"
                    "\n");
    CHECK_THROWS_AS(load_manifest(path, TaskKind::BboxLoc), ValidationError);
  }
  SUBCASE("empty manifest is an error") {
    write_text_file(path, "\n");
    CHECK_THROWS_AS(load_manifest(path), ValidationError);
  }
}

TEST_CASE("condition classification obeys the call-count law and gold scores 1.0") {
  test::TempDir tmp("ctcls");
  const auto seq = make_sequence_fixture(tmp.path());
  const auto manifest = classification_manifest(seq, TaskKind::CtCls, 10, kCtConditions);

  auto endpoint = make_mock("gold");
  const EvalReport report = run_eval(manifest, *endpoint, base_config(TaskKind::CtCls));

  CHECK(endpoint->calls() == 70);  // 10 records x 7 conditions
  CHECK(report.metadata.at("generate_calls").get<long>() == 70);
  CHECK(report.aggregates.at("primary_metric").get<std::string>() == "macro_accuracy");
  CHECK(report.aggregates.at("primary_value").get<double>() == doctest::Approx(1.0));
  CHECK(report.per_example.size() == 70);
  // rows sorted by (example_id, condition)
  for (std::size_t i = 1; i < report.per_example.size(); ++i) {
    const auto& a = report.per_example[i - 1];
    const auto& b = report.per_example[i];
    CHECK((a.example_id < b.example_id ||
           (a.example_id == b.example_id && a.condition < b.condition)));
  }
}

TEST_CASE("wrong and silent mocks bottom out the classification metrics") {
  test::TempDir tmp("ctwrong");
  const auto seq = make_sequence_fixture(tmp.path());
  const auto manifest = classification_manifest(seq, TaskKind::CtCls, 4, {"hemorrhage", "tumors"});

  auto wrong = make_mock("wrong");
  const EvalReport r1 = run_eval(manifest, *wrong, base_config(TaskKind::CtCls));
  CHECK(r1.aggregates.at("macro_accuracy").get<double>() == doctest::Approx(0.0));

  auto silent = make_mock("silent");
  const EvalReport r2 = run_eval(manifest, *silent, base_config(TaskKind::CtCls));
  CHECK(r2.aggregates.at("macro_accuracy").get<double>() == doctest::Approx(0.0));
  CHECK(r2.aggregates.at("parse_miss_count").get<long>() == 8);
}

TEST_CASE("CT-RATE task aggregates macro F1") {
  test::TempDir tmp("ctrate");
  const auto seq = make_sequence_fixture(tmp.path());
  const auto manifest =
      classification_manifest(seq, TaskKind::CtRateCls, 4, {"Emphysema", "Atelectasis"});
  auto endpoint = make_mock("gold");
  const EvalReport report = run_eval(manifest, *endpoint, base_config(TaskKind::CtRateCls));
  CHECK(report.aggregates.at("primary_metric").get<std::string>() == "macro_f1");
  CHECK(report.aggregates.at("primary_value").get<double>() == doctest::Approx(1.0));
}

TEST_CASE("bbox eval: gold echo, empty, and an analytic shifted box") {
  test::TempDir tmp("bbox");
  const auto img = tiny_png(tmp.path(), "cxr.png");
  std::vector<ManifestRecord> manifest;
  ManifestRecord r;
  r.example_id = "b1";
  r.task_kind = TaskKind::BboxLoc;
  r.inputs = {{"image", img.string()}, {"object", "right lung"}};
  r.gold = {{"box", {0.0, 0.0, 1.0, 0.5}}};
  validate_record(r);
  manifest.push_back(r);

  SUBCASE("gold echo reaches mean IoU 1.0") {
    auto endpoint = make_mock("gold");
    const EvalReport report = run_eval(manifest, *endpoint, base_config(TaskKind::BboxLoc));
    CHECK(report.aggregates.at("mean_iou").get<double>() == doctest::Approx(1.0));
  }
  SUBCASE("always-empty mock scores 0.0") {
    auto endpoint = make_mock("wrong");
    const EvalReport report = run_eval(manifest, *endpoint, base_config(TaskKind::BboxLoc));
    CHECK(report.aggregates.at("mean_iou").get<double>() == doctest::Approx(0.0));
  }
  SUBCASE("box shifted +0.1 on x gives IoU 2/3") {
    MockEndpoint endpoint("shift", [](const promptforge::RenderedPrompt&, const CallContext&) {
      return std::string(R"([{"label": "right lung", "box_2d": [0.0, 0.1, 1.0, 0.6]}])");
    });
    const EvalReport report = run_eval(manifest, endpoint, base_config(TaskKind::BboxLoc));
    CHECK(report.aggregates.at("mean_iou").get<double>() == doctest::Approx(2.0 / 3.0));
  }
}

TEST_CASE("temporal, wsi, lab, and mcq tasks score gold at the maximum") {
  test::TempDir tmp("tasks");

  SUBCASE("temporal") {
    std::vector<ManifestRecord> manifest;
    const char* classes[] = {"IMPROVED", "STABLE", "WORSENED"};
    for (int i = 0; i < 6; ++i) {
      ManifestRecord r;
      r.example_id = "t" + std::to_string(i);
      r.task_kind = TaskKind::Temporal;
      r.inputs = {{"prior_image", tiny_png(tmp.path(), "p" + std::to_string(i) + ".png").string()},
                  {"current_image", tiny_png(tmp.path(), "c" + std::to_string(i) + ".png").string()},
                  {"pathology", i < 3 ? "edema" : "pneumonia"}};
      r.gold = {{"class", classes[i % 3]}};
      validate_record(r);
      manifest.push_back(r);
    }
    auto gold = make_mock("gold");
    const EvalReport report = run_eval(manifest, *gold, base_config(TaskKind::Temporal));
    CHECK(report.aggregates.at("macro_accuracy").get<double>() == doctest::Approx(1.0));
    auto wrong = make_mock("wrong");
    const EvalReport worst = run_eval(manifest, *wrong, base_config(TaskKind::Temporal));
    CHECK(worst.aggregates.at("macro_accuracy").get<double>() == doctest::Approx(0.0));
  }

  SUBCASE("wsi report generation") {
    std::vector<ManifestRecord> manifest;
    ManifestRecord r;
    r.example_id = "w1";
    r.task_kind = TaskKind::WsiReport;
    r.inputs = {{"patches",
                 {tiny_png(tmp.path(), "patch0.png").string(),
                  tiny_png(tmp.path(), "patch1.png").string()}},
                {"type_procedure", "colon biopsy"}};
    r.gold = {{"reference", "fragments of benign colonic mucosa with no dysplasia"}};
    validate_record(r);
    manifest.push_back(r);
    auto gold = make_mock("gold");
    const EvalReport report = run_eval(manifest, *gold, base_config(TaskKind::WsiReport));
    CHECK(report.aggregates.at("mean_rouge_l").get<double>() == doctest::Approx(1.0));
    auto wrong = make_mock("wrong");
    const EvalReport worst = run_eval(manifest, *wrong, base_config(TaskKind::WsiReport));
    CHECK(worst.aggregates.at("mean_rouge_l").get<double>() == doctest::Approx(0.0));
  }

  SUBCASE("lab extraction with a field dropped by the mock") {
    std::vector<ManifestRecord> manifest;
    ManifestRecord r;
    r.example_id = "l1";
    r.task_kind = TaskKind::LabExtract;
    r.inputs = {{"images", {tiny_png(tmp.path(), "page0.png").string()}}};
    r.gold = {{"entries",
               {{{"name", "Hemoglobin"}, {"result", "13.5"}, {"unit", "g/dL"},
                 {"range", "12-16"}, {"panel", "CBC"}, {"method", "automated"},
                 {"specimen", "blood"}, {"sample_collection_time", "01-02-2024 08:30:00"}},
                {{"name", "WBC"}, {"result", "9800"}, {"unit", "/uL"},
                 {"range", "4000-11000"}, {"panel", "CBC"}, {"method", "automated"},
                 {"specimen", "blood"}, {"sample_collection_time", "01-02-2024 08:31:00"}},
                {{"name", "Platelets"}, {"result", "250000"}, {"unit", "/uL"},
                 {"range", "150000-400000"}, {"panel", "CBC"}, {"method", "automated"},
                 {"specimen", "blood"}, {"sample_collection_time", "01-02-2024 08:32:00"}}}}};
    validate_record(r);
    manifest.push_back(r);

    auto gold = make_mock("gold");
    const EvalReport report = run_eval(manifest, *gold, base_config(TaskKind::LabExtract));
    CHECK(report.aggregates.at("overall").at("f1").get<double>() == doctest::Approx(1.0));
    CHECK(report.aggregates.at("per_field").at("unit").at("f1").get<double>() ==
          doctest::Approx(1.0));

    // mock that echoes gold minus the unit field: recall on unit drops to 0,
    // everything else stays perfect
    MockEndpoint minus_unit("minus-unit",
                            [](const promptforge::RenderedPrompt&, const CallContext& ctx) {
                              json entries = json::array();
                              for (const LabTestEntry& e : gold_lab_entries(*ctx.record)) {
                                json j = lab_entry_to_json(e);
                                j.erase("unit");
                                entries.push_back(j);
                              }
                              return entries.dump();
                            });
    const EvalReport dropped = run_eval(manifest, minus_unit, base_config(TaskKind::LabExtract));
    CHECK(dropped.aggregates.at("overall").at("f1").get<double>() == doctest::Approx(1.0));
    CHECK(dropped.aggregates.at("per_field").at("unit").at("recall").get<double>() ==
          doctest::Approx(0.0));
    CHECK(dropped.aggregates.at("per_field").at("result").at("f1").get<double>() ==
          doctest::Approx(1.0));
  }

  SUBCASE("text and EHR note MCQ") {
    std::vector<ManifestRecord> manifest;
    ManifestRecord r;
    r.example_id = "q1";
    r.task_kind = TaskKind::EhrNoteMcq;
    r.inputs = {{"discharge_note", "DISCHARGE 1: stable course."},
                {"question", "What was the disposition?"},
                {"choices",
                 {{"A", "home"}, {"B", "rehab"}, {"C", "expired"}, {"D", "transfer"},
                  {"E", "unknown"}}}};
    r.gold = {{"choice", "A"}};
    validate_record(r);
    manifest.push_back(r);
    auto gold = make_mock("gold");
    const EvalReport report = run_eval(manifest, *gold, base_config(TaskKind::EhrNoteMcq));
    CHECK(report.aggregates.at("accuracy").get<double>() == doctest::Approx(1.0));
    auto silent = make_mock("silent");
    const EvalReport missed = run_eval(manifest, *silent, base_config(TaskKind::EhrNoteMcq));
    CHECK(missed.aggregates.at("accuracy").get<double>() == doctest::Approx(0.0));
    CHECK(missed.aggregates.at("parse_miss_count").get<long>() == 1);
  }
}

TEST_CASE("bounded concurrency: cap respected and result independent of k") {
  test::TempDir tmp("conc");
  const auto seq = make_sequence_fixture(tmp.path());
  const auto manifest = classification_manifest(seq, TaskKind::CtCls, 6, kCtConditions);

  auto slow_gold = [](const promptforge::RenderedPrompt& p, const CallContext& ctx) {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    return gold_label(*ctx.record, ctx.condition) ? "Final Answer: yes" : "Final Answer: no";
  };

  RunConfig c1 = base_config(TaskKind::CtCls);
  c1.endpoint.max_in_flight = 1;
  MockEndpoint e1("slow", slow_gold);
  const EvalReport r1 = run_eval(manifest, e1, c1);
  CHECK(e1.max_observed_in_flight() == 1);

  RunConfig c8 = base_config(TaskKind::CtCls);
  c8.endpoint.max_in_flight = 8;
  MockEndpoint e8("slow", slow_gold);
  const EvalReport r8 = run_eval(manifest, e8, c8);
  CHECK(e8.max_observed_in_flight() <= 8);
  CHECK(e8.max_observed_in_flight() >= 2);

  // aggregates and rows identical regardless of k; metadata differs only in
  // the recorded max_in_flight
  CHECK(r1.aggregates == r8.aggregates);
  json rows1 = json::array(), rows8 = json::array();
  for (const auto& row : r1.per_example) rows1.push_back(row.score);
  for (const auto& row : r8.per_example) rows8.push_back(row.score);
  CHECK(rows1 == rows8);
}

TEST_CASE("report emission is deterministic and verifiable") {
  test::TempDir tmp("report");
  const auto seq = make_sequence_fixture(tmp.path());
  const auto manifest = classification_manifest(seq, TaskKind::CtCls, 3, {"hemorrhage"});

  auto run_once = [&](const std::filesystem::path& out) {
    auto endpoint = make_mock("gold");
    const EvalReport report = run_eval(manifest, *endpoint, base_config(TaskKind::CtCls));
    emit_report(report, out);
    return report;
  };
  run_once(tmp.path() / "out1");
  run_once(tmp.path() / "out2");
  CHECK(read_text_file(tmp.path() / "out1" / "report.json") ==
        read_text_file(tmp.path() / "out2" / "report.json"));
  CHECK(read_text_file(tmp.path() / "out1" / "summary.csv") ==
        read_text_file(tmp.path() / "out2" / "summary.csv"));

  SUBCASE("verify passes on an intact report and names a tampered aggregate") {
    CHECK(verify_report_file(tmp.path() / "out1" / "report.json").ok);
    json tampered = json::parse(read_text_file(tmp.path() / "out1" / "report.json"));
    tampered["aggregates"]["macro_accuracy"] = 0.25;
    write_text_file(tmp.path() / "out1" / "report.json", tampered.dump(2) + "\n");
    const VerifyResult result = verify_report_file(tmp.path() / "out1" / "report.json");
    CHECK_FALSE(result.ok);
    CHECK(result.mismatch.find("macro_accuracy") != std::string::npos);
  }
}

TEST_CASE("offline scoring from prediction files") {
  test::TempDir tmp("offline");
  const auto seq = make_sequence_fixture(tmp.path());
  const auto manifest = classification_manifest(seq, TaskKind::CtCls, 2, {"hemorrhage", "tumors"});

  std::map<std::pair<std::string, std::string>, std::string> replies;
  for (const auto& r : manifest) {
    for (const auto& c : r.conditions) {
      replies[{r.example_id, c}] =
          gold_label(r, c) ? "Final Answer: yes" : "Final Answer: no";
    }
  }
  const EvalReport report = score_predictions(manifest, replies, base_config(TaskKind::CtCls));
  CHECK(report.aggregates.at("macro_accuracy").get<double>() == doctest::Approx(1.0));

  // a missing prediction scores as wrong with an error marker
  replies.erase({manifest[0].example_id, "hemorrhage"});
  const EvalReport partial = score_predictions(manifest, replies, base_config(TaskKind::CtCls));
  CHECK(partial.aggregates.at("error_count").get<long>() == 1);
  CHECK(partial.aggregates.at("macro_accuracy").get<double>() < 1.0);
}

TEST_CASE("echo mock replies deterministically for equal prompts") {
  auto endpoint = make_mock("echo");
  promptforge::RenderedPrompt prompt;
  prompt.parts.push_back(promptforge::PromptPart::make_text("the same prompt"));
  const std::string a = endpoint->generate(prompt, CallContext{});
  const std::string b = endpoint->generate(prompt, CallContext{});
  CHECK(a == b);
  promptforge::RenderedPrompt other;
  other.parts.push_back(promptforge::PromptPart::make_text("a different prompt"));
  CHECK(endpoint->generate(other, CallContext{}) != a);
  CHECK_THROWS_AS(make_mock("no-such-mock"), ValidationError);
}

TEST_CASE("emit_report refuses an empty report") {
  test::TempDir tmp("empty");
  CHECK_THROWS_AS(emit_report(EvalReport{}, tmp.path()), ValidationError);
}

TEST_CASE("prediction files reject duplicates and malformed lines") {
  test::TempDir tmp("preds");
  const std::filesystem::path p = tmp.path() / "pred.jsonl";
  write_text_file(p,
                  R"({"example_id": "a", "reply": "Final Answer: yes"})"
                  "\n"
                  R"({"example_id": "a", "reply": "Final Answer: no"})"
                  "\n");
  CHECK_THROWS_AS(load_predictions(p), ValidationError);
  write_text_file(p, "not json\n");
  CHECK_THROWS_AS(load_predictions(p), ValidationError);
}

TEST_CASE("http endpoint speaks the chat-completion shape") {
  httplib::Server server;
  json captured;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    captured = json::parse(req.body);
    res.set_content(
        json{{"choices", {{{"message", {{"content", "Final Answer: yes"}}}}}}}.dump(),
        "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  EndpointConfig config;
  config.target = "http://127.0.0.1:" + std::to_string(port);
  config.temperature = 0.0;
  HttpEndpoint endpoint(config);

  promptforge::RenderedPrompt prompt;
  prompt.system_text = "You are a helpful radiology assistant.";
  prompt.temperature = 0.0;
  for (int i = 0; i < 3; ++i) {
    prompt.parts.push_back(promptforge::PromptPart::make_text("SLICE " + std::to_string(i)));
    prompt.parts.push_back(promptforge::PromptPart::make_image(promptforge::ImageRef::from_bytes(
        "s" + std::to_string(i), encode_png(test::solid_image(4, 4, 9, 9, 9)))));
  }
  prompt.parts.push_back(promptforge::PromptPart::make_text("Is there hemorrhage?"));

  const std::string reply = endpoint.generate(prompt, CallContext{});
  CHECK(reply == "Final Answer: yes");

  server.stop();
  listener.join();

  REQUIRE(captured.contains("messages"));
  REQUIRE(captured["messages"].size() == 2);
  CHECK(captured["messages"][0]["role"] == "system");
  CHECK(captured["messages"][0]["content"] == "You are a helpful radiology assistant.");
  const json& content = captured["messages"][1]["content"];
  int images = 0, texts = 0;
  for (const json& part : content) {
    if (part.at("type") == "image_url") {
      ++images;
      const std::string url = part.at("image_url").at("url").get<std::string>();
      CHECK(url.rfind("data:image/png;base64,", 0) == 0);
    } else {
      ++texts;
    }
  }
  CHECK(images == 3);
  CHECK(texts == 4);
  CHECK(captured.at("temperature").get<double>() == 0.0);
  CHECK(captured.at("max_tokens").get<int>() == 1024);
}

TEST_CASE("transport failures retry then raise TransportError") {
  EndpointConfig config;
  config.target = "http://127.0.0.1:9";  // discard port, nothing listens
  config.retry.count = 3;
  config.retry.backoff_ms = 1;
  config.timeout_s = 1;
  HttpEndpoint endpoint(config);
  promptforge::RenderedPrompt prompt;
  prompt.parts.push_back(promptforge::PromptPart::make_text("ping"));
  CHECK_THROWS_AS(endpoint.generate(prompt, CallContext{}), TransportError);
}

TEST_CASE("non-2xx responses raise EndpointError with a body excerpt") {
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content("model overloaded, try later", "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  EndpointConfig config;
  config.target = "http://127.0.0.1:" + std::to_string(port);
  HttpEndpoint endpoint(config);
  promptforge::RenderedPrompt prompt;
  prompt.parts.push_back(promptforge::PromptPart::make_text("ping"));
  CHECK_THROWS_WITH_AS(endpoint.generate(prompt, CallContext{}),
                       doctest::Contains("model overloaded"), EndpointError);
  server.stop();
  listener.join();
}

TEST_CASE("per-call endpoint failures are recorded and the run continues") {
  test::TempDir tmp("partial");
  const auto seq = make_sequence_fixture(tmp.path());
  const auto manifest = classification_manifest(seq, TaskKind::CtCls, 2, {"hemorrhage"});

  std::atomic<int> n{0};
  MockEndpoint flaky("flaky", [&](const promptforge::RenderedPrompt&, const CallContext& ctx) {
    if (n.fetch_add(1) == 0) throw TransportError("synthetic outage");
    return gold_label(*ctx.record, ctx.condition) ? std::string("Final Answer: yes")
                                                  : std::string("Final Answer: no");
  });
  RunConfig config = base_config(TaskKind::CtCls);
  config.endpoint.max_in_flight = 1;
  const EvalReport report = run_eval(manifest, flaky, config);
  CHECK(report.aggregates.at("error_count").get<long>() == 1);
  CHECK(report.per_example.size() == 2);
  int with_error = 0;
  for (const auto& row : report.per_example) {
    if (!row.error.empty()) {
      ++with_error;
      CHECK(row.error.find("TransportError") != std::string::npos);
      CHECK_FALSE(row.score.at("correct").get<bool>());
    }
  }
  CHECK(with_error == 1);
}
