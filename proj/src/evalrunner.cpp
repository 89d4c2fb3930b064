#include "medeval/evalrunner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "medeval/common.hpp"
#include "medeval/medmetrics.hpp"

namespace medeval::evalrunner {

using nlohmann::json;
using promptforge::ImageRef;
using promptforge::ModelKind;
using promptforge::PromptPart;
using promptforge::RenderedPrompt;
using promptforge::TemplateStore;

namespace {

bool is_classification(TaskKind task) {
  return task == TaskKind::CtCls || task == TaskKind::MrCls || task == TaskKind::CtRateCls;
}

bool default_thinking(TaskKind task) {
  return task == TaskKind::TextMcq || task == TaskKind::EhrNoteMcq;
}

struct CallSpec {
  std::size_t record_index = 0;
  std::string condition;
};

std::vector<CallSpec> build_calls(const std::vector<ManifestRecord>& manifest, TaskKind task) {
  std::vector<CallSpec> calls;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (manifest[i].task_kind != task) {
      throw ValidationError("record '" + manifest[i].example_id + "' has task_kind " +
                            promptforge::to_string(manifest[i].task_kind) + ", run expects " +
                            promptforge::to_string(task));
    }
    if (is_classification(task)) {
      for (const std::string& condition : manifest[i].conditions) {
        calls.push_back(CallSpec{i, condition});
      }
    } else {
      calls.push_back(CallSpec{i, {}});
    }
  }
  return calls;
}

std::vector<ImageRef> patch_refs(const ManifestRecord& record) {
  const json& patches = record.inputs.at("patches");
  std::vector<ImageRef> refs;
  if (patches.is_string()) {
    const std::filesystem::path manifest_path = patches.get<std::string>();
    const json j = json::parse(read_text_file(manifest_path));
    const std::filesystem::path dir = manifest_path.parent_path();
    for (const json& p : j.at("patches")) {
      refs.push_back(ImageRef::from_path((dir / p.at("file").get<std::string>()).string()));
    }
  } else if (patches.is_array()) {
    for (const json& p : patches) refs.push_back(ImageRef::from_path(p.get<std::string>()));
  } else {
    throw ValidationError("record '" + record.example_id +
                          "': inputs.patches must be a patches.json path or a path list");
  }
  if (refs.empty()) {
    throw ValidationError("record '" + record.example_id + "': empty patch set");
  }
  return refs;
}

RenderedPrompt render_call(const TemplateStore& store, const ManifestRecord& record,
                           const std::string& condition, const RunConfig& config) {
  RenderedPrompt prompt;
  switch (config.task) {
    case TaskKind::CtCls:
    case TaskKind::MrCls:
    case TaskKind::CtRateCls: {
      const promptforge::SequenceView view =
          promptforge::load_sequence_view(record.inputs.at("sequence").get<std::string>());
      prompt = promptforge::render_volume_prompt(
          store, view, record.inputs.value("history", std::string{}), condition, config.task);
      break;
    }
    case TaskKind::WsiReport:
      prompt = promptforge::render_wsi_prompt(
          store, patch_refs(record), record.inputs.at("type_procedure").get<std::string>());
      break;
    case TaskKind::Temporal:
      prompt = promptforge::render_task_prompt(
          store, "temporal",
          {{"pathology", record.inputs.at("pathology").get<std::string>()}},
          {ImageRef::from_path(record.inputs.at("prior_image").get<std::string>()),
           ImageRef::from_path(record.inputs.at("current_image").get<std::string>())});
      break;
    case TaskKind::BboxLoc:
      prompt = promptforge::render_task_prompt(
          store, "bbox_loc", {{"object", record.inputs.at("object").get<std::string>()}},
          {ImageRef::from_path(record.inputs.at("image").get<std::string>())});
      break;
    case TaskKind::LabExtract: {
      std::vector<ImageRef> images;
      for (const json& p : record.inputs.at("images")) {
        images.push_back(ImageRef::from_path(p.get<std::string>()));
      }
      prompt = promptforge::render_task_prompt(store, "lab_extract", {}, images);
      break;
    }
    case TaskKind::TextMcq:
      prompt = promptforge::render_task_prompt(
          store, "text_mcq", {{"question", record.inputs.at("question").get<std::string>()}});
      break;
    case TaskKind::EhrNoteMcq: {
      const json& choices = record.inputs.at("choices");
      prompt = promptforge::render_task_prompt(
          store, "ehrnoteqa",
          {{"discharge_note", record.inputs.at("discharge_note").get<std::string>()},
           {"orig_question", record.inputs.at("question").get<std::string>()},
           {"choice_A", choices.at("A").get<std::string>()},
           {"choice_B", choices.at("B").get<std::string>()},
           {"choice_C", choices.at("C").get<std::string>()},
           {"choice_D", choices.at("D").get<std::string>()},
           {"choice_E", choices.at("E").get<std::string>()}});
      break;
    }
  }
  const bool thinking = config.thinking.value_or(
      config.model_kind == ModelKind::MedGemma && default_thinking(config.task));
  prompt.system_text = promptforge::resolve_system_text(config.model_kind, config.task, thinking);
  prompt.temperature = config.endpoint.temperature;
  return prompt;
}

/// Loads every image part's bytes so the request build and digest see the
/// same data and each file is read once per call.
void materialize(RenderedPrompt& prompt) {
  for (PromptPart& part : prompt.parts) {
    if (part.kind == PromptPart::Kind::Image && !part.image.png) {
      part.image = ImageRef::from_bytes(part.image.source, part.image.load());
    }
  }
}

std::string prompt_digest(const RenderedPrompt& prompt) {
  std::string acc;
  if (prompt.system_text) acc += "S\n" + *prompt.system_text + "\n";
  for (const PromptPart& part : prompt.parts) {
    if (part.kind == PromptPart::Kind::Text) {
      acc += "T\n" + part.text + "\n";
    } else {
      acc += "I\n" + sha256_hex(part.image.load()) + "\n";
    }
  }
  return sha256_hex(acc);
}

std::string error_class(const std::exception& e) {
  if (dynamic_cast<const TransportError*>(&e)) return "TransportError";
  if (dynamic_cast<const EndpointError*>(&e)) return "EndpointError";
  if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  return "Error";
}

PerExampleRow score_call(const ManifestRecord& record, const std::string& condition,
                         const std::string& reply, const std::string& error, TaskKind task) {
  PerExampleRow row;
  row.example_id = record.example_id;
  row.condition = condition;
  row.reply = reply;
  row.error = error;
  row.parsed = nullptr;
  const bool usable = error.empty();
  bool parse_miss = false;

  switch (task) {
    case TaskKind::CtCls:
    case TaskKind::MrCls:
    case TaskKind::CtRateCls: {
      const bool gold = gold_label(record, condition);
      std::optional<bool> pred;
      if (usable) pred = promptforge::parse_yes_no(reply);
      parse_miss = usable && !pred;
      row.parsed = pred ? json(*pred) : json(nullptr);
      row.score = {{"gold", gold},
                   {"pred", pred ? json(*pred) : json(nullptr)},
                   {"correct", pred && *pred == gold}};
      break;
    }
    case TaskKind::WsiReport: {
      const medmetrics::PrF1 r =
          medmetrics::rouge_l_scores(usable ? reply : std::string{}, gold_reference(record));
      row.parsed = usable ? json(reply) : json(nullptr);
      row.score = {{"rouge_l", r.f1}, {"precision", r.precision}, {"recall", r.recall}};
      break;
    }
    case TaskKind::Temporal: {
      const TemporalClass gold = gold_temporal(record);
      std::optional<TemporalClass> pred;
      if (usable) pred = promptforge::parse_temporal(reply);
      parse_miss = usable && !pred;
      row.parsed = pred ? json(to_string(*pred)) : json(nullptr);
      row.score = {{"pathology", record.inputs.at("pathology").get<std::string>()},
                   {"gold", to_string(gold)},
                   {"pred", pred ? json(to_string(*pred)) : json(nullptr)},
                   {"correct", pred && *pred == gold}};
      break;
    }
    case TaskKind::BboxLoc: {
      const BBox gold = gold_box(record);
      std::optional<std::vector<BBox>> boxes;
      if (usable) boxes = promptforge::parse_bboxes(reply);
      parse_miss = usable && !boxes;
      std::optional<BBox> pred;
      if (boxes) {
        pred = medmetrics::select_bbox(*boxes, record.inputs.at("object").get<std::string>());
      }
      if (boxes) {
        json parsed = json::array();
        for (const BBox& b : *boxes) {
          parsed.push_back({{"label", b.label}, {"box", {b.y0, b.x0, b.y1, b.x1}}});
        }
        row.parsed = parsed;
      }
      row.score = {{"iou", pred ? medmetrics::iou(*pred, gold) : 0.0},
                   {"n_boxes", boxes ? boxes->size() : 0}};
      break;
    }
    case TaskKind::LabExtract: {
      const std::vector<LabTestEntry> gold = gold_lab_entries(record);
      std::optional<std::vector<LabTestEntry>> entries;
      if (usable) entries = promptforge::parse_lab_entries(reply);
      parse_miss = usable && !entries;
      const std::vector<LabTestEntry> pred = entries.value_or(std::vector<LabTestEntry>{});
      const medmetrics::Matching matching = medmetrics::match_lab_entries(pred, gold);
      const medmetrics::ExtractionScore ex = medmetrics::score_extraction(matching, pred, gold);
      if (entries) {
        json parsed = json::array();
        for (const LabTestEntry& e : pred) parsed.push_back(lab_entry_to_json(e));
        row.parsed = parsed;
      }
      json per_field = json::object();
      for (const auto& [field, f] : ex.per_field) {
        per_field[field] = {{"precision", f.precision}, {"recall", f.recall}, {"f1", f.f1}};
      }
      row.score = {{"overall",
                    {{"precision", ex.overall.precision},
                     {"recall", ex.overall.recall},
                     {"f1", ex.overall.f1}}},
                   {"per_field", per_field},
                   {"matched", matching.pairs.size()},
                   {"spurious", matching.unmatched_pred.size()},
                   {"missed", matching.unmatched_gold.size()}};
      break;
    }
    case TaskKind::TextMcq:
    case TaskKind::EhrNoteMcq: {
      const char gold = gold_choice(record);
      std::optional<char> pred;
      if (usable) pred = promptforge::parse_choice_letter(reply);
      parse_miss = usable && !pred;
      row.parsed = pred ? json(std::string(1, *pred)) : json(nullptr);
      row.score = {{"gold", std::string(1, gold)},
                   {"pred", pred ? json(std::string(1, *pred)) : json(nullptr)},
                   {"correct", pred && *pred == gold}};
      break;
    }
  }
  row.score["parse_miss"] = parse_miss;
  return row;
}

std::string iso_utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

}  // namespace

nlohmann::json aggregate_rows(TaskKind task, const std::vector<PerExampleRow>& rows) {
  json agg;
  long parse_miss_count = 0;
  long error_count = 0;
  std::set<std::string> example_ids;
  for (const PerExampleRow& row : rows) {
    if (row.score.value("parse_miss", false)) ++parse_miss_count;
    if (!row.error.empty()) ++error_count;
    example_ids.insert(row.example_id);
  }
  agg["n_rows"] = rows.size();
  agg["n_examples"] = example_ids.size();
  agg["parse_miss_count"] = parse_miss_count;
  agg["error_count"] = error_count;

  switch (task) {
    case TaskKind::CtCls:
    case TaskKind::MrCls:
    case TaskKind::CtRateCls: {
      std::map<std::string, medmetrics::ConfusionCounts> per_condition;
      for (const PerExampleRow& row : rows) {
        const bool gold = row.score.at("gold").get<bool>();
        // A miss or an errored call scores as the wrong binary answer.
        const bool pred = row.score.at("pred").is_boolean()
                              ? row.score.at("pred").get<bool>()
                              : !gold;
        per_condition[row.condition].add(gold, pred);
      }
      json conditions = json::object();
      std::vector<double> accuracies;
      std::vector<double> f1s;
      for (const auto& [condition, counts] : per_condition) {
        conditions[condition] = {{"tp", counts.tp},
                                 {"fp", counts.fp},
                                 {"fn", counts.fn},
                                 {"tn", counts.tn},
                                 {"accuracy", medmetrics::accuracy_from_counts(counts)},
                                 {"f1", medmetrics::f1_from_counts(counts)},
                                 {"precision", medmetrics::precision_from_counts(counts)},
                                 {"recall", medmetrics::recall_from_counts(counts)}};
        accuracies.push_back(medmetrics::accuracy_from_counts(counts));
        f1s.push_back(medmetrics::f1_from_counts(counts));
      }
      agg["per_condition"] = conditions;
      agg["macro_accuracy"] = medmetrics::macro(accuracies);
      agg["macro_f1"] = medmetrics::macro(f1s);
      // Accuracy for the balanced internal sets, F1 for imbalanced CT-RATE.
      if (task == TaskKind::CtRateCls) {
        agg["primary_metric"] = "macro_f1";
        agg["primary_value"] = agg["macro_f1"];
      } else {
        agg["primary_metric"] = "macro_accuracy";
        agg["primary_value"] = agg["macro_accuracy"];
      }
      break;
    }
    case TaskKind::WsiReport: {
      double sum = 0.0;
      for (const PerExampleRow& row : rows) sum += row.score.at("rouge_l").get<double>();
      agg["mean_rouge_l"] = rows.empty() ? 0.0 : sum / rows.size();
      agg["primary_metric"] = "mean_rouge_l";
      agg["primary_value"] = agg["mean_rouge_l"];
      break;
    }
    case TaskKind::Temporal: {
      std::vector<medmetrics::TemporalRecord> records;
      for (const PerExampleRow& row : rows) {
        medmetrics::TemporalRecord r;
        r.pathology = row.score.at("pathology").get<std::string>();
        r.gold = temporal_from_string(row.score.at("gold").get<std::string>());
        if (row.score.at("pred").is_string()) {
          r.pred = temporal_from_string(row.score.at("pred").get<std::string>());
        }
        records.push_back(std::move(r));
      }
      std::map<std::string, std::vector<medmetrics::TemporalRecord>> by_pathology;
      for (const auto& r : records) by_pathology[r.pathology].push_back(r);
      json per_pathology = json::object();
      for (const auto& [pathology, recs] : by_pathology) {
        per_pathology[pathology] = medmetrics::temporal_macro_accuracy(recs);
      }
      agg["per_pathology"] = per_pathology;
      agg["macro_accuracy"] = medmetrics::temporal_macro_accuracy(records);
      agg["primary_metric"] = "macro_accuracy";
      agg["primary_value"] = agg["macro_accuracy"];
      break;
    }
    case TaskKind::BboxLoc: {
      double sum = 0.0;
      for (const PerExampleRow& row : rows) sum += row.score.at("iou").get<double>();
      agg["mean_iou"] = rows.empty() ? 0.0 : sum / rows.size();
      agg["primary_metric"] = "mean_iou";
      agg["primary_value"] = agg["mean_iou"];
      break;
    }
    case TaskKind::LabExtract: {
      double p = 0.0, r = 0.0, f = 0.0;
      std::map<std::string, std::array<double, 3>> fields;
      for (const PerExampleRow& row : rows) {
        const json& overall = row.score.at("overall");
        p += overall.at("precision").get<double>();
        r += overall.at("recall").get<double>();
        f += overall.at("f1").get<double>();
        for (const auto& [field, v] : row.score.at("per_field").items()) {
          auto& acc = fields[field];
          acc[0] += v.at("precision").get<double>();
          acc[1] += v.at("recall").get<double>();
          acc[2] += v.at("f1").get<double>();
        }
      }
      const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
      json per_field = json::object();
      for (const auto& [field, acc] : fields) {
        per_field[field] = {
            {"precision", acc[0] / n}, {"recall", acc[1] / n}, {"f1", acc[2] / n}};
      }
      agg["overall"] = {{"precision", p / n}, {"recall", r / n}, {"f1", f / n}};
      agg["per_field"] = per_field;
      agg["primary_metric"] = "macro_f1";
      agg["primary_value"] = agg["overall"]["f1"];
      break;
    }
    case TaskKind::TextMcq:
    case TaskKind::EhrNoteMcq: {
      long correct = 0;
      for (const PerExampleRow& row : rows) {
        if (row.score.at("correct").get<bool>()) ++correct;
      }
      agg["accuracy"] = rows.empty() ? 0.0 : static_cast<double>(correct) / rows.size();
      agg["primary_metric"] = "accuracy";
      agg["primary_value"] = agg["accuracy"];
      break;
    }
  }
  return agg;
}

json EvalReport::to_json() const {
  json rows = json::array();
  for (const PerExampleRow& row : per_example) {
    rows.push_back({{"example_id", row.example_id},
                    {"condition", row.condition},
                    {"prompt_digest", row.prompt_digest},
                    {"reply", row.reply},
                    {"parsed", row.parsed},
                    {"score", row.score},
                    {"error", row.error}});
  }
  return json{{"metadata", metadata}, {"per_example", rows}, {"aggregates", aggregates}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport report;
  report.metadata = j.at("metadata");
  report.aggregates = j.at("aggregates");
  for (const json& r : j.at("per_example")) {
    PerExampleRow row;
    row.example_id = r.at("example_id").get<std::string>();
    row.condition = r.at("condition").get<std::string>();
    row.prompt_digest = r.at("prompt_digest").get<std::string>();
    row.reply = r.at("reply").get<std::string>();
    row.parsed = r.at("parsed");
    row.score = r.at("score");
    row.error = r.at("error");
    report.per_example.push_back(std::move(row));
  }
  return report;
}

namespace {

void sort_rows(std::vector<PerExampleRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const PerExampleRow& a, const PerExampleRow& b) {
    if (a.example_id != b.example_id) return a.example_id < b.example_id;
    return a.condition < b.condition;
  });
}

json run_metadata(const RunConfig& config, const std::string& endpoint_desc, long calls,
                  const TemplateStore* store) {
  json template_digests = json::object();
  if (store) {
    for (const auto& [id, digest] : store->digests()) template_digests[id] = digest;
  }
  const bool thinking = config.thinking.value_or(
      config.model_kind == ModelKind::MedGemma && default_thinking(config.task));
  json meta{{"schema_version", 1},
            {"task", promptforge::to_string(config.task)},
            {"endpoint", endpoint_desc},
            {"model", config.endpoint.model},
            {"model_kind",
             config.model_kind == ModelKind::MedGemma ? "medgemma" : "general"},
            {"thinking", thinking},
            {"temperature", config.endpoint.temperature},
            {"max_output_tokens", config.endpoint.max_output_tokens},
            {"max_in_flight", config.endpoint.max_in_flight},
            {"retry",
             {{"count", config.endpoint.retry.count},
              {"backoff_ms", config.endpoint.retry.backoff_ms}}},
            {"timeout_s", config.endpoint.timeout_s},
            {"seed", config.endpoint.seed},
            {"generate_calls", calls},
            {"config", config.config_echo},
            {"config_digest", sha256_hex(config.config_echo.dump())},
            {"template_digests", template_digests}};
  if (config.stamp_time) {
    meta["timestamps"] = {{"started", iso_utc_now()}, {"finished", ""}};
  } else {
    meta["timestamps"] = {{"started", ""}, {"finished", ""}};
  }
  return meta;
}

}  // namespace

EvalReport run_eval(const std::vector<ManifestRecord>& manifest, Endpoint& endpoint,
                    const RunConfig& config) {
  if (manifest.empty()) throw ValidationError("run_eval: empty manifest");
  TemplateStore store(config.templates_dir);
  store.set_fix_typos(config.fix_typos);

  const std::vector<CallSpec> calls = build_calls(manifest, config.task);

  struct CallOut {
    std::string reply;
    std::string error;
    std::string digest;
  };
  std::vector<CallOut> outs(calls.size());

  const long calls_before = endpoint.calls();
  std::atomic<std::size_t> next{0};
  const int workers = static_cast<int>(std::min<std::size_t>(
      std::max(config.endpoint.max_in_flight, 1), calls.size()));
  auto work = [&]() {
    for (std::size_t i = next.fetch_add(1); i < calls.size(); i = next.fetch_add(1)) {
      const CallSpec& call = calls[i];
      const ManifestRecord& record = manifest[call.record_index];
      try {
        RenderedPrompt prompt = render_call(store, record, call.condition, config);
        materialize(prompt);
        outs[i].digest = prompt_digest(prompt);
        outs[i].reply = endpoint.generate(prompt, CallContext{&record, call.condition});
      } catch (const std::exception& e) {
        outs[i].error = error_class(e) + ": " + e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();

  EvalReport report;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    const ManifestRecord& record = manifest[calls[i].record_index];
    PerExampleRow row = score_call(record, calls[i].condition, outs[i].reply, outs[i].error,
                                   config.task);
    row.prompt_digest = outs[i].digest;
    report.per_example.push_back(std::move(row));
  }
  sort_rows(report.per_example);
  report.aggregates = aggregate_rows(config.task, report.per_example);
  report.metadata =
      run_metadata(config, endpoint.describe(), endpoint.calls() - calls_before, &store);
  if (config.stamp_time) report.metadata["timestamps"]["finished"] = iso_utc_now();
  return report;
}

EvalReport score_predictions(
    const std::vector<ManifestRecord>& manifest,
    const std::map<std::pair<std::string, std::string>, std::string>& replies,
    const RunConfig& config) {
  if (manifest.empty()) throw ValidationError("score_predictions: empty manifest");
  const std::vector<CallSpec> calls = build_calls(manifest, config.task);

  EvalReport report;
  for (const CallSpec& call : calls) {
    const ManifestRecord& record = manifest[call.record_index];
    const auto it = replies.find({record.example_id, call.condition});
    PerExampleRow row =
        it != replies.end()
            ? score_call(record, call.condition, it->second, {}, config.task)
            : score_call(record, call.condition, {}, "missing_prediction", config.task);
    report.per_example.push_back(std::move(row));
  }
  sort_rows(report.per_example);
  report.aggregates = aggregate_rows(config.task, report.per_example);
  report.metadata = run_metadata(config, "offline", 0, nullptr);
  return report;
}

std::map<std::pair<std::string, std::string>, std::string> load_predictions(
    const std::filesystem::path& path) {
  std::map<std::pair<std::string, std::string>, std::string> replies;
  std::istringstream lines(read_text_file(path));
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ValidationError("predictions " + path.string() + " line " +
                            std::to_string(line_no) + ": invalid JSON");
    }
    const std::pair<std::string, std::string> key{j.at("example_id").get<std::string>(),
                                                  j.value("condition", std::string{})};
    if (!replies.emplace(key, j.at("reply").get<std::string>()).second) {
      throw ValidationError("predictions " + path.string() + ": duplicate key (" + key.first +
                            ", " + key.second + ")");
    }
  }
  return replies;
}

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  if (report.per_example.empty()) throw ValidationError("emit_report: empty report");
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "report.json", report.to_json().dump(2) + "\n");

  std::ostringstream csv;
  csv << "task,condition,metric,value\n";
  const std::string task = report.metadata.value("task", std::string{});
  const auto emit_value = [&](const std::string& condition, const std::string& metric,
                              const json& value) {
    csv << task << "," << condition << "," << metric << "," << value.dump() << "\n";
  };
  if (report.aggregates.contains("per_condition")) {
    for (const auto& [condition, stats] : report.aggregates.at("per_condition").items()) {
      emit_value(condition, "accuracy", stats.at("accuracy"));
      emit_value(condition, "f1", stats.at("f1"));
    }
  }
  if (report.aggregates.contains("per_pathology")) {
    for (const auto& [pathology, value] : report.aggregates.at("per_pathology").items()) {
      emit_value(pathology, "macro_accuracy", value);
    }
  }
  if (report.aggregates.contains("per_field")) {
    for (const auto& [field, stats] : report.aggregates.at("per_field").items()) {
      emit_value(field, "f1", stats.at("f1"));
    }
  }
  emit_value("", report.aggregates.at("primary_metric").get<std::string>(),
             report.aggregates.at("primary_value"));
  write_text_file(out_dir / "summary.csv", csv.str());
}

namespace {

bool json_close(const json& a, const json& b, std::string path, std::string* mismatch) {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>();
    const double y = b.get<double>();
    if (std::abs(x - y) <= 1e-12 * std::max({1.0, std::abs(x), std::abs(y)})) return true;
    *mismatch = path;
    return false;
  }
  if (a.type() != b.type()) {
    *mismatch = path;
    return false;
  }
  if (a.is_object()) {
    for (const auto& [key, value] : a.items()) {
      if (!b.contains(key)) {
        *mismatch = path + "." + key;
        return false;
      }
      if (!json_close(value, b.at(key), path + "." + key, mismatch)) return false;
    }
    for (const auto& [key, value] : b.items()) {
      if (!a.contains(key)) {
        *mismatch = path + "." + key;
        return false;
      }
    }
    return true;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) {
      *mismatch = path;
      return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!json_close(a[i], b[i], path + "[" + std::to_string(i) + "]", mismatch)) return false;
    }
    return true;
  }
  if (a != b) {
    *mismatch = path;
    return false;
  }
  return true;
}

}  // namespace

VerifyResult verify_report(const EvalReport& report) {
  const TaskKind task =
      promptforge::task_kind_from_string(report.metadata.at("task").get<std::string>());
  const json recomputed = aggregate_rows(task, report.per_example);
  VerifyResult result;
  std::string mismatch;
  if (!json_close(recomputed, report.aggregates, "aggregates", &mismatch)) {
    result.ok = false;
    result.mismatch = mismatch;
  }
  return result;
}

VerifyResult verify_report_file(const std::filesystem::path& report_json) {
  const json j = json::parse(read_text_file(report_json));
  return verify_report(EvalReport::from_json(j));
}

}  // namespace medeval::evalrunner
