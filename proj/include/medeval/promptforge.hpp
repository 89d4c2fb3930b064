#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "medeval/answers.hpp"
#include "medeval/image.hpp"
#include "medeval/volgrid.hpp"

namespace medeval::promptforge {

enum class TaskKind {
  CtCls,
  MrCls,
  CtRateCls,
  WsiReport,
  Temporal,
  BboxLoc,
  LabExtract,
  TextMcq,
  EhrNoteMcq,
};

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

enum class ModelKind { MedGemma, General };

/// Reference to a prepared image: either inline PNG bytes or a file path
/// resolved when the request is built.
struct ImageRef {
  std::string source;  // file path or a synthetic name for inline bytes
  std::shared_ptr<const std::vector<std::uint8_t>> png;

  static ImageRef from_path(std::string path) { return ImageRef{std::move(path), nullptr}; }
  static ImageRef from_bytes(std::string name, std::vector<std::uint8_t> bytes) {
    return ImageRef{std::move(name),
                    std::make_shared<const std::vector<std::uint8_t>>(std::move(bytes))};
  }
  /// Inline bytes if present, otherwise the file contents.
  std::vector<std::uint8_t> load() const;
};

struct PromptPart {
  enum class Kind { Text, Image };
  Kind kind = Kind::Text;
  std::string text;
  ImageRef image;

  static PromptPart make_text(std::string t) {
    PromptPart p;
    p.text = std::move(t);
    return p;
  }
  static PromptPart make_image(ImageRef ref) {
    PromptPart p;
    p.kind = Kind::Image;
    p.image = std::move(ref);
    return p;
  }
};

struct RenderedPrompt {
  std::vector<PromptPart> parts;
  std::optional<std::string> system_text;
  double temperature = 0.0;

  std::size_t image_count() const;
  /// Concatenated text parts, image parts rendered as "<image:NAME>".
  std::string debug_text() const;
};

/// Slice sequence as the prompt layer sees it: ordered image refs with their
/// stacked-volume indices.
struct SequenceView {
  volgrid::Modality modality = volgrid::Modality::CT;
  struct Slice {
    int global_index = 0;
    ImageRef image;
  };
  std::vector<Slice> slices;
};

/// Encodes the in-memory sequence to PNG bytes.
SequenceView to_view(const volgrid::SliceSequence& sequence);

/// Loads {study}/sequence.json written by the volume pipeline; image dims are
/// checked against 896x896 from the PNG headers.
SequenceView load_sequence_view(const std::filesystem::path& sequence_json);

/// Appendix prompt templates as digest-pinned fixture files.
class TemplateStore {
 public:
  /// Loads every known template from `dir` and refuses to construct if any
  /// file digest disagrees with the checked-in digest list.
  explicit TemplateStore(const std::filesystem::path& dir);

  /// Renders template `id`, substituting every declared placeholder. All
  /// declared slots must be bound; unknown slot names are rejected.
  std::string render(const std::string& id,
                     const std::map<std::string, std::string>& slots) const;

  const std::string& raw(const std::string& id) const;
  std::vector<std::string> ids() const;
  const std::map<std::string, std::string>& digests() const { return digests_; }

  /// Opt-out for source typos such as "responce" (off by default: prompts are
  /// bit-exact to the evaluated configuration).
  void set_fix_typos(bool fix) { fix_typos_ = fix; }

 private:
  std::map<std::string, std::string> bodies_;
  std::map<std::string, std::string> digests_;
  bool fix_typos_ = false;
};

/// Slice images interleaved with "SLICE {index}" markers, then the verbatim
/// condition question. CT and MR tasks require a history; CT-RATE must not
/// have one.
RenderedPrompt render_volume_prompt(const TemplateStore& store, const SequenceView& sequence,
                                    const std::string& history,
                                    const std::string& condition_label, TaskKind task);

/// All patch images, then the instruction text with the specimen label.
RenderedPrompt render_wsi_prompt(const TemplateStore& store,
                                 const std::vector<ImageRef>& patches,
                                 const std::string& type_procedure);

/// Generic render: `images` first, then the rendered template text.
RenderedPrompt render_task_prompt(const TemplateStore& store, const std::string& template_id,
                                  const std::map<std::string, std::string>& slots,
                                  const std::vector<ImageRef>& images = {});

/// MedGemma has no system instruction except the "think silently" line on
/// thinking tasks; general models get a radiology or medical assistant line.
std::optional<std::string> resolve_system_text(ModelKind model, TaskKind task, bool thinking);

bool is_radiology_task(TaskKind task);

// ---- reply parsers ----------------------------------------------------------
//
// Parsers are total: any input yields a value or nullopt (ParseMiss), never a
// crash. Scoring policy for misses lives with the metrics, not here.

/// Remainder of the line after the LAST case-insensitive "final answer",
/// stripped of leading ':'/',', wrapping quotes/parens/asterisks and trailing
/// punctuation. nullopt when the marker is absent.
std::optional<std::string> parse_final_answer(const std::string& text);

/// Same extraction keyed on "the most likely diagnosis is".
std::optional<std::string> parse_diagnosis_answer(const std::string& text);

std::optional<bool> parse_yes_no(const std::string& text);

/// Single choice letter (upper-cased) from the final-answer token, falling
/// back to the diagnosis phrasing when no final-answer marker exists.
std::optional<char> parse_choice_letter(const std::string& text);

/// First well-formed JSON array in the reply (code fences stripped). Elements
/// need a label and a 4-number [y0, x0, y1, x1] list; coordinates are clamped
/// to [0, 1] and swapped corners fixed by sorting each axis pair. Malformed
/// elements are dropped into `diagnostics`. nullopt when no array parses.
std::optional<std::vector<BBox>> parse_bboxes(const std::string& text,
                                              std::vector<std::string>* diagnostics = nullptr);

/// First JSON array of objects; the target keys are read as text, absent keys
/// become empty strings, non-text scalars keep their JSON spelling.
std::optional<std::vector<LabTestEntry>> parse_lab_entries(const std::string& text);

std::optional<TemporalClass> parse_temporal(const std::string& text);

}  // namespace medeval::promptforge
