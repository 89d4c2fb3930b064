#include "medeval/promptforge.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <nlohmann/json.hpp>

#include "medeval/common.hpp"

namespace medeval::promptforge {

using nlohmann::json;

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::CtCls: return "CT_CLS";
    case TaskKind::MrCls: return "MR_CLS";
    case TaskKind::CtRateCls: return "CTRATE_CLS";
    case TaskKind::WsiReport: return "WSI_REPORT";
    case TaskKind::Temporal: return "TEMPORAL";
    case TaskKind::BboxLoc: return "BBOX_LOC";
    case TaskKind::LabExtract: return "LAB_EXTRACT";
    case TaskKind::TextMcq: return "TEXT_MCQ";
    default: return "EHRNOTE_MCQ";
  }
}

TaskKind task_kind_from_string(const std::string& s) {
  const std::string u = to_lower(s);
  if (u == "ct_cls" || u == "ct") return TaskKind::CtCls;
  if (u == "mr_cls" || u == "mr") return TaskKind::MrCls;
  if (u == "ctrate_cls" || u == "ctrate") return TaskKind::CtRateCls;
  if (u == "wsi_report" || u == "wsi") return TaskKind::WsiReport;
  if (u == "temporal") return TaskKind::Temporal;
  if (u == "bbox_loc" || u == "bbox") return TaskKind::BboxLoc;
  if (u == "lab_extract" || u == "lab") return TaskKind::LabExtract;
  if (u == "text_mcq" || u == "mcq") return TaskKind::TextMcq;
  if (u == "ehrnote_mcq" || u == "ehrnote") return TaskKind::EhrNoteMcq;
  throw ValidationError("unknown task kind: " + s);
}

std::vector<std::uint8_t> ImageRef::load() const {
  if (png) return *png;
  return read_binary_file(source);
}

std::size_t RenderedPrompt::image_count() const {
  return static_cast<std::size_t>(
      std::count_if(parts.begin(), parts.end(),
                    [](const PromptPart& p) { return p.kind == PromptPart::Kind::Image; }));
}

std::string RenderedPrompt::debug_text() const {
  std::string out;
  for (const PromptPart& p : parts) {
    if (p.kind == PromptPart::Kind::Text) {
      out += p.text;
    } else {
      out += "<image:" + p.image.source + ">";
    }
    out += "\n";
  }
  return out;
}

SequenceView to_view(const volgrid::SliceSequence& sequence) {
  SequenceView view;
  view.modality = sequence.modality;
  for (const volgrid::SliceEntry& entry : sequence.entries) {
    const std::string name = "slice_" + std::to_string(entry.global_index) + ".png";
    view.slices.push_back(SequenceView::Slice{
        entry.global_index, ImageRef::from_bytes(name, encode_png(entry.image))});
  }
  return view;
}

SequenceView load_sequence_view(const std::filesystem::path& sequence_json) {
  const json j = json::parse(read_text_file(sequence_json));
  const std::filesystem::path dir = sequence_json.parent_path();
  SequenceView view;
  view.modality = volgrid::modality_from_string(j.at("modality").get<std::string>());
  for (const auto& entry : j.at("entries")) {
    const std::filesystem::path file = dir / entry.at("file").get<std::string>();
    const PngHeader header = read_png_header(read_binary_file(file));
    if (header.width != volgrid::kSliceEdge || header.height != volgrid::kSliceEdge) {
      throw ValidationError("sequence slice " + file.string() + " is " +
                            std::to_string(header.width) + "x" + std::to_string(header.height) +
                            ", expected 896x896");
    }
    view.slices.push_back(SequenceView::Slice{entry.at("global_index").get<int>(),
                                              ImageRef::from_path(file.string())});
  }
  return view;
}

// ---- template store -------------------------------------------------------

namespace {

struct TemplateInfo {
  const char* file;
  // logical slot name -> exact placeholder text in the fixture
  std::vector<std::pair<const char*, const char*>> slots;
};

const std::map<std::string, TemplateInfo>& registry() {
  static const std::map<std::string, TemplateInfo> reg = {
      {"text_mcq", {"text_mcq.txt", {{"question", "{{ question }}"}}}},
      {"binarized_mcq", {"binarized_mcq.txt", {{"question", "{{ question }}"}}}},
      {"visual_vqa", {"visual_vqa.txt", {{"question", "{{ question }}"}}}},
      {"wsi_report",
       {"wsi_report.txt",
        {{"type_procedure", "{{ type_procedure }}"}, {"question", "{{ question }}"}}}},
      {"dermmcqa", {"dermmcqa.txt", {{"question", "{{ question }}"}}}},
      {"eyepacs", {"eyepacs.txt", {}}},
      {"ehrnoteqa",
       {"ehrnoteqa.txt",
        {{"discharge_note", "{discharge_note}"},
         {"orig_question", "{orig_question}"},
         {"choice_A", "{choice_A}"},
         {"choice_B", "{choice_B}"},
         {"choice_C", "{choice_C}"},
         {"choice_D", "{choice_D}"},
         {"choice_E", "{choice_E}"}}}},
      {"lab_extract", {"lab_extract.txt", {}}},
      {"bbox_loc", {"bbox_loc.txt", {{"object", "{object}"}}}},
      {"ct_us1", {"ct_us1.txt", {{"HISTORY", "{HISTORY}"}, {"Label", "{Label}"}}}},
      {"mri_us1",
       {"mri_us1.txt", {{"history_text", "{history_text}"}, {"label", "{{label}}"}}}},
      {"ct_rate", {"ct_rate.txt", {{"label", "{label}"}}}},
      {"temporal", {"temporal.txt", {{"pathology", "{pathology}"}}}},
  };
  return reg;
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

}  // namespace

TemplateStore::TemplateStore(const std::filesystem::path& dir) {
  // Parse the checked-in digest list: "<hex>  <filename>" per line.
  std::map<std::string, std::string> listed;
  std::istringstream lines(read_text_file(dir / "digests.txt"));
  std::string line;
  while (std::getline(lines, line)) {
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    const std::size_t space = t.find(' ');
    if (space == std::string_view::npos) {
      throw ValidationError("digests.txt: malformed line '" + line + "'");
    }
    listed[std::string(trim(t.substr(space)))] = std::string(t.substr(0, space));
  }

  for (const auto& [id, info] : registry()) {
    const std::filesystem::path path = dir / info.file;
    const std::string body = read_text_file(path);
    const std::string digest = sha256_hex(body);
    auto it = listed.find(info.file);
    if (it == listed.end()) {
      throw ValidationError("template " + std::string(info.file) +
                            " has no entry in digests.txt; refusing to render");
    }
    if (it->second != digest) {
      throw ValidationError("template " + std::string(info.file) + " digest mismatch (have " +
                            digest + ", expected " + it->second + "); refusing to render");
    }
    bodies_[id] = body;
    digests_[id] = digest;
  }
}

const std::string& TemplateStore::raw(const std::string& id) const {
  auto it = bodies_.find(id);
  if (it == bodies_.end()) throw ValidationError("unknown template: " + id);
  return it->second;
}

std::vector<std::string> TemplateStore::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : bodies_) out.push_back(id);
  return out;
}

std::string TemplateStore::render(const std::string& id,
                                  const std::map<std::string, std::string>& slots) const {
  const auto reg_it = registry().find(id);
  if (reg_it == registry().end()) throw ValidationError("unknown template: " + id);
  const TemplateInfo& info = reg_it->second;

  for (const auto& [name, _] : slots) {
    const bool known = std::any_of(info.slots.begin(), info.slots.end(),
                                   [&](const auto& s) { return name == s.first; });
    if (!known) throw ValidationError("template " + id + ": unknown slot '" + name + "'");
  }

  std::string text = raw(id);
  for (const auto& [name, placeholder] : info.slots) {
    auto it = slots.find(name);
    if (it == slots.end()) {
      throw ValidationError("template " + id + ": unbound slot '" + name + "'");
    }
    text = replace_all(std::move(text), placeholder, it->second);
  }
  if (fix_typos_) text = replace_all(std::move(text), "responce", "response");
  return text;
}

// ---- prompt rendering -------------------------------------------------------

RenderedPrompt render_volume_prompt(const TemplateStore& store, const SequenceView& sequence,
                                    const std::string& history,
                                    const std::string& condition_label, TaskKind task) {
  if (sequence.slices.empty()) {
    throw ValidationError("render_volume_prompt: empty slice sequence");
  }

  std::string question;
  switch (task) {
    case TaskKind::CtCls:
      if (history.empty()) {
        throw ValidationError("CT classification prompt requires a patient history");
      }
      question = store.render("ct_us1", {{"HISTORY", history}, {"Label", condition_label}});
      break;
    case TaskKind::MrCls:
      if (history.empty()) {
        throw ValidationError("MR classification prompt requires a patient history");
      }
      question =
          store.render("mri_us1", {{"history_text", history}, {"label", condition_label}});
      break;
    case TaskKind::CtRateCls:
      if (!history.empty()) {
        throw ValidationError("CT-RATE prompt does not take a history");
      }
      question = store.render("ct_rate", {{"label", condition_label}});
      break;
    default:
      throw ValidationError("render_volume_prompt: not a volume task: " + to_string(task));
  }

  RenderedPrompt prompt;
  for (const SequenceView::Slice& slice : sequence.slices) {
    prompt.parts.push_back(
        PromptPart::make_text("SLICE " + std::to_string(slice.global_index)));
    prompt.parts.push_back(PromptPart::make_image(slice.image));
  }
  prompt.parts.push_back(PromptPart::make_text(std::move(question)));
  return prompt;
}

RenderedPrompt render_wsi_prompt(const TemplateStore& store,
                                 const std::vector<ImageRef>& patches,
                                 const std::string& type_procedure) {
  if (patches.empty()) throw ValidationError("render_wsi_prompt: empty patch set");
  RenderedPrompt prompt;
  for (const ImageRef& patch : patches) {
    prompt.parts.push_back(PromptPart::make_image(patch));
  }
  prompt.parts.push_back(PromptPart::make_text(
      store.render("wsi_report", {{"type_procedure", type_procedure}, {"question", ""}})));
  return prompt;
}

RenderedPrompt render_task_prompt(const TemplateStore& store, const std::string& template_id,
                                  const std::map<std::string, std::string>& slots,
                                  const std::vector<ImageRef>& images) {
  RenderedPrompt prompt;
  for (const ImageRef& image : images) {
    prompt.parts.push_back(PromptPart::make_image(image));
  }
  prompt.parts.push_back(PromptPart::make_text(store.render(template_id, slots)));
  return prompt;
}

bool is_radiology_task(TaskKind task) {
  return task == TaskKind::Temporal || task == TaskKind::BboxLoc;
}

std::optional<std::string> resolve_system_text(ModelKind model, TaskKind task, bool thinking) {
  static const std::string kThink = "SYSTEM INSTRUCTION: think silently if needed.";
  if (model == ModelKind::MedGemma) {
    if (thinking) return kThink;
    return std::nullopt;
  }
  return is_radiology_task(task) ? std::string("You are a helpful radiology assistant.")
                                 : std::string("You are a helpful medical assistant.");
}

// ---- reply parsers ----------------------------------------------------------

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

/// Position just past the last case-insensitive occurrence of `marker`.
std::optional<std::size_t> find_last_marker(const std::string& text, std::string_view marker) {
  const std::string hay = to_lower(text);
  const std::string ndl = to_lower(std::string(marker));
  const std::size_t pos = hay.rfind(ndl);
  if (pos == std::string::npos) return std::nullopt;
  return pos + ndl.size();
}

std::string clean_answer_token(std::string_view rest) {
  std::size_t b = 0;
  while (b < rest.size() &&
         (rest[b] == ':' || rest[b] == ',' || rest[b] == '*' || is_space(rest[b]))) {
    ++b;
  }
  std::string s(trim(rest.substr(b)));

  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    while (!s.empty()) {
      const char c = s.back();
      if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '*') {
        s.pop_back();
        changed = true;
      } else {
        break;
      }
    }
    const auto unwrap = [&](char open, char close) {
      if (s.size() >= 2 && s.front() == open && s.back() == close) {
        s = std::string(trim(std::string_view(s).substr(1, s.size() - 2)));
        changed = true;
      }
    };
    unwrap('(', ')');
    unwrap('[', ']');
    unwrap('"', '"');
    unwrap('\'', '\'');
    unwrap('*', '*');
    const std::string t(trim(s));
    if (t.size() != s.size()) {
      s = t;
      changed = true;
    }
  }
  return s;
}

std::optional<std::string> parse_marker_answer(const std::string& text,
                                               std::string_view marker) {
  const auto after = find_last_marker(text, marker);
  if (!after) return std::nullopt;
  std::size_t end = text.find('\n', *after);
  if (end == std::string::npos) end = text.size();
  return clean_answer_token(std::string_view(text).substr(*after, end - *after));
}

std::vector<std::string> alnum_runs(const std::string& s) {
  std::vector<std::string> runs;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      runs.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) runs.push_back(std::move(cur));
  return runs;
}

std::string strip_code_fences(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (trim(line).substr(0, 3) == "```") continue;
    out += line;
    out.push_back('\n');
  }
  return out;
}

/// Balanced [...] slice starting at `start`, honoring strings and escapes.
std::optional<std::string> balanced_array_at(const std::string& text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      ++depth;
    } else if (c == ']' || c == '}') {
      --depth;
      if (depth == 0) return text.substr(start, i - start + 1);
      if (depth < 0) return std::nullopt;
    }
  }
  return std::nullopt;
}

std::optional<json> first_json_array(const std::string& reply) {
  const std::string text = strip_code_fences(reply);
  for (std::size_t pos = text.find('['); pos != std::string::npos;
       pos = text.find('[', pos + 1)) {
    const auto slice = balanced_array_at(text, pos);
    if (!slice) continue;
    json parsed = json::parse(*slice, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_array()) return parsed;
  }
  return std::nullopt;
}

std::string json_to_text(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_null()) return "";
  return j.dump();
}

}  // namespace

std::optional<std::string> parse_final_answer(const std::string& text) {
  return parse_marker_answer(text, "final answer");
}

std::optional<std::string> parse_diagnosis_answer(const std::string& text) {
  return parse_marker_answer(text, "the most likely diagnosis is");
}

std::optional<bool> parse_yes_no(const std::string& text) {
  const auto token = parse_final_answer(text);
  if (!token) return std::nullopt;
  const std::string t = to_lower(*token);
  if (t.rfind("yes", 0) == 0) return true;
  if (t.rfind("no", 0) == 0) return false;
  return std::nullopt;
}

std::optional<char> parse_choice_letter(const std::string& text) {
  auto token = parse_final_answer(text);
  if (!token) token = parse_diagnosis_answer(text);
  if (!token) return std::nullopt;
  const std::vector<std::string> runs = alnum_runs(*token);
  if (runs.empty()) return std::nullopt;
  const std::string& first = runs.front();
  if (first.size() == 1 && std::isalpha(static_cast<unsigned char>(first[0]))) {
    return static_cast<char>(std::toupper(static_cast<unsigned char>(first[0])));
  }
  return std::nullopt;
}

std::optional<std::vector<BBox>> parse_bboxes(const std::string& text,
                                              std::vector<std::string>* diagnostics) {
  const auto array = first_json_array(text);
  if (!array) return std::nullopt;

  static const char* kBoxKeys[] = {"box_2d", "box", "bbox", "box2d", "bounding_box",
                                   "coordinates"};
  std::vector<BBox> boxes;
  for (std::size_t i = 0; i < array->size(); ++i) {
    const json& element = (*array)[i];
    const auto drop = [&](const std::string& why) {
      if (diagnostics) {
        diagnostics->push_back("element " + std::to_string(i) + " dropped: " + why);
      }
    };
    if (!element.is_object()) {
      drop("not an object");
      continue;
    }
    std::string label;
    if (element.contains("label") && element["label"].is_string()) {
      label = element["label"].get<std::string>();
    } else if (element.contains("name") && element["name"].is_string()) {
      label = element["name"].get<std::string>();
    } else {
      drop("no label");
      continue;
    }
    const json* coords = nullptr;
    for (const char* key : kBoxKeys) {
      if (element.contains(key) && element[key].is_array()) {
        coords = &element[key];
        break;
      }
    }
    if (!coords) {
      for (const auto& [key, value] : element.items()) {
        if (value.is_array() && value.size() == 4) {
          coords = &value;
          break;
        }
      }
    }
    if (!coords || coords->size() != 4) {
      drop("no 4-element coordinate list");
      continue;
    }
    double c[4];
    bool numeric = true;
    for (int k = 0; k < 4; ++k) {
      if (!(*coords)[k].is_number()) {
        numeric = false;
        break;
      }
      c[k] = std::clamp((*coords)[k].get<double>(), 0.0, 1.0);
    }
    if (!numeric) {
      drop("non-numeric coordinate");
      continue;
    }
    BBox box;
    box.y0 = std::min(c[0], c[2]);
    box.y1 = std::max(c[0], c[2]);
    box.x0 = std::min(c[1], c[3]);
    box.x1 = std::max(c[1], c[3]);
    box.label = std::move(label);
    boxes.push_back(std::move(box));
  }
  return boxes;
}

std::optional<std::vector<LabTestEntry>> parse_lab_entries(const std::string& text) {
  const auto array = first_json_array(text);
  if (!array) return std::nullopt;

  std::vector<LabTestEntry> entries;
  for (const json& element : *array) {
    if (!element.is_object()) continue;
    LabTestEntry entry;
    if (element.contains("name")) entry.name = json_to_text(element["name"]);
    for (const char* field : kLabFields) {
      if (element.contains(field)) {
        lab_field(entry, field) = json_to_text(element[field]);
      }
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::optional<TemporalClass> parse_temporal(const std::string& text) {
  const auto token = parse_final_answer(text);
  if (!token) return std::nullopt;
  const std::vector<std::string> runs = alnum_runs(*token);
  if (runs.empty()) return std::nullopt;
  const std::string& first = runs.front();
  if (first == "a" || first == "improved") return TemporalClass::Improved;
  if (first == "b" || first == "stable") return TemporalClass::Stable;
  if (first == "c" || first == "worsened") return TemporalClass::Worsened;
  return std::nullopt;
}

}  // namespace medeval::promptforge
