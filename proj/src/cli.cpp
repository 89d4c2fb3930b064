#include "medeval/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medeval/common.hpp"
#include "medeval/config.hpp"
#include "medeval/evalrunner.hpp"
#include "medeval/manifest.hpp"
#include "medeval/promptforge.hpp"
#include "medeval/slidegrid.hpp"
#include "medeval/volgrid.hpp"

namespace medeval::cli {

namespace {

using nlohmann::json;

int log_threshold = 1;  // 0 debug, 1 info, 2 warn, 3 error

int level_from_string(const std::string& level) {
  if (level == "debug") return 0;
  if (level == "info") return 1;
  if (level == "warn") return 2;
  if (level == "error") return 3;
  throw ValidationError("unknown log level: " + level);
}

void log(int level, const std::string& msg) {
  static const char* names[] = {"debug", "info", "warn", "error"};
  if (level >= log_threshold) std::cerr << "[" << names[level] << "] " << msg << "\n";
}

std::string study_id_from_dir(const std::filesystem::path& dir) {
  std::filesystem::path p = dir;
  if (p.filename().empty()) p = p.parent_path();
  const std::string id = p.filename().string();
  return id.empty() ? std::string("study") : id;
}

int cmd_prep_volume(const GlobalConfig& config, const std::string& in_dir,
                    const std::string& out_dir, int cap, const std::string& modality) {
  std::vector<volgrid::VoxelVolume> volumes = volgrid::load_study(in_dir);
  if (modality != "auto") {
    const volgrid::Modality want = volgrid::modality_from_string(modality);
    for (const auto& v : volumes) {
      if (v.modality != want) {
        throw ValidationError("volume " + v.series_id + " is " + to_string(v.modality) +
                              ", --modality requested " + modality);
      }
    }
  }

  volgrid::RenderResult result =
      volgrid::render_sequence(std::move(volumes), config.criteria, config.windows, cap);
  for (const auto& rejected : result.rejected) {
    std::string reasons;
    for (const auto& r : rejected.reasons) reasons += " [" + r + "]";
    log(2, "rejected volume " + rejected.series_id + ":" + reasons);
  }
  for (const auto& warning : result.warnings) log(2, warning);

  const std::string study = study_id_from_dir(in_dir);
  const volgrid::SequenceManifest manifest =
      volgrid::write_sequence(result.sequence, study, out_dir);

  json files = json::array();
  for (const auto& f : manifest.files) files.push_back(study + "/" + f);
  json line{{"study", study},
            {"modality", to_string(manifest.modality)},
            {"n_slices", manifest.files.size()},
            {"vision_tokens", manifest.vision_tokens},
            {"files", files}};
  std::ofstream manifest_out(std::filesystem::path(out_dir) / "manifest.jsonl", std::ios::app);
  manifest_out << line.dump() << "\n";

  std::cout << "wrote " << manifest.files.size() << " slices (" << manifest.vision_tokens
            << " vision tokens) for study " << study << " to " << out_dir << "\n";
  return 0;
}

int cmd_prep_wsi(const GlobalConfig& config, const std::string& in_dir,
                 const std::string& out_dir, int cap, std::uint64_t seed) {
  const slidegrid::SlidePyramid slide = slidegrid::load_slide(in_dir);
  const slidegrid::TissueMask mask = slidegrid::tissue_mask(slide, config.mask);
  const double mag = slidegrid::choose_magnification(config.mag_probs, seed);
  const std::vector<slidegrid::GridCell> candidates =
      slidegrid::grid_candidates(mask, slide, mag, config.tissue_fraction_min);
  if (candidates.empty()) {
    throw ValidationError("slide " + slide.slide_id() + ": no tissue candidates at " +
                          std::to_string(static_cast<int>(mag)) + "x");
  }
  slidegrid::PatchSet patches = slidegrid::extract_patches(slide, candidates, mag);
  for (const auto& diag : patches.diagnostics) log(2, diag);
  patches = slidegrid::subsample_patches(std::move(patches), cap, seed);
  const slidegrid::PatchManifest manifest = slidegrid::write_patchset(patches, seed, out_dir);

  std::cout << "wrote " << manifest.files.size() << " patches at "
            << static_cast<int>(manifest.magnification) << "x ("
            << volgrid::vision_token_count(static_cast<std::int64_t>(manifest.files.size()))
            << " vision tokens) for slide " << manifest.slide_id << " to " << out_dir << "\n";
  return 0;
}

int cmd_render_prompt(const GlobalConfig& config, const std::string& templates_dir,
                      const std::string& template_id, bool list,
                      const std::vector<std::string>& slot_args) {
  promptforge::TemplateStore store(templates_dir.empty() ? config.templates_dir
                                                         : std::filesystem::path(templates_dir));
  store.set_fix_typos(config.fix_typos);
  if (list) {
    for (const auto& id : store.ids()) std::cout << id << "\n";
    return 0;
  }
  if (template_id.empty()) {
    throw ValidationError("render-prompt: --template is required (or use --list)");
  }
  std::map<std::string, std::string> slots;
  for (const std::string& arg : slot_args) {
    const std::size_t eq = arg.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("--slot expects name=value, got '" + arg + "'");
    }
    slots[arg.substr(0, eq)] = arg.substr(eq + 1);
  }
  std::cout << store.render(template_id, slots) << "\n";
  return 0;
}

int cmd_run(GlobalConfig config, const std::string& task_str, const std::string& manifest_path,
            const std::string& endpoint_target, const std::string& out_dir,
            const std::string& model, const std::string& model_kind,
            std::optional<bool> thinking, bool stamp_time) {
  evalrunner::RunConfig run;
  run.task = promptforge::task_kind_from_string(task_str);
  run.endpoint.target = endpoint_target;
  run.endpoint.model = model;
  run.endpoint.temperature = config.temperature;
  run.endpoint.max_output_tokens = config.max_output_tokens;
  run.endpoint.max_in_flight = config.max_in_flight;
  run.endpoint.retry = config.retry;
  run.endpoint.seed = config.seed;
  run.model_kind = model_kind == "general" ? promptforge::ModelKind::General
                                           : promptforge::ModelKind::MedGemma;
  run.thinking = thinking;
  run.templates_dir = config.templates_dir;
  run.fix_typos = config.fix_typos;
  run.stamp_time = stamp_time;
  json echo = config.to_json();
  echo["run"] = {{"task", task_str}, {"manifest", manifest_path}, {"model_kind", model_kind}};
  run.config_echo = echo;

  const std::vector<evalrunner::ManifestRecord> manifest =
      evalrunner::load_manifest(manifest_path, run.task);
  std::unique_ptr<evalrunner::Endpoint> endpoint = evalrunner::make_endpoint(run.endpoint);
  const evalrunner::EvalReport report = evalrunner::run_eval(manifest, *endpoint, run);
  evalrunner::emit_report(report, out_dir);

  const std::string metric = report.aggregates.at("primary_metric").get<std::string>();
  std::cout << metric << ": " << report.aggregates.at("primary_value").dump() << "\n";
  std::cout << "report: " << (std::filesystem::path(out_dir) / "report.json").string() << "\n";

  const long n_rows = report.aggregates.at("n_rows").get<long>();
  const long errors = report.aggregates.at("error_count").get<long>();
  if (n_rows > 0 && errors == n_rows) {
    log(3, "every call failed; see per-example errors in the report");
    return 2;
  }
  return 0;
}

int cmd_score(GlobalConfig config, const std::string& task_str, const std::string& pred_path,
              const std::string& gold_path, const std::string& out_path) {
  evalrunner::RunConfig run;
  run.task = promptforge::task_kind_from_string(task_str);
  run.templates_dir = config.templates_dir;
  run.endpoint.temperature = config.temperature;
  run.endpoint.seed = config.seed;
  json echo = config.to_json();
  echo["score"] = {{"task", task_str}, {"pred", pred_path}, {"gold", gold_path}};
  run.config_echo = echo;

  const std::vector<evalrunner::ManifestRecord> manifest =
      evalrunner::load_manifest(gold_path, run.task);
  const auto replies = evalrunner::load_predictions(pred_path);
  const evalrunner::EvalReport report = evalrunner::score_predictions(manifest, replies, run);
  write_text_file(out_path, report.to_json().dump(2) + "\n");

  const std::string metric = report.aggregates.at("primary_metric").get<std::string>();
  std::cout << metric << ": " << report.aggregates.at("primary_value").dump() << "\n";
  return 0;
}

int cmd_verify_report(const std::string& report_path) {
  const evalrunner::VerifyResult result = evalrunner::verify_report_file(report_path);
  if (!result.ok) {
    std::cerr << "aggregate mismatch at " << result.mismatch << "\n";
    return 1;
  }
  std::cout << "report OK: aggregates match the per-example rows\n";
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"medeval: medical imaging preprocessing and evaluation harness"};
  app.require_subcommand(1);

  std::string config_file;
  std::optional<std::uint64_t> seed_flag;
  std::string log_level;
  app.add_option("--config", config_file, "JSON config file overriding ledger defaults");
  app.add_option("--seed", seed_flag, "Global RNG seed");
  app.add_option("--log-level", log_level, "debug|info|warn|error");

  std::function<int(GlobalConfig&)> action;

  // prep-volume
  auto* prep_volume =
      app.add_subcommand("prep-volume", "Convert a CT/MR study to a capped 896x896 slice sequence");
  {
    auto in_dir = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto cap = std::make_shared<int>(volgrid::kSliceCap);
    auto modality = std::make_shared<std::string>("auto");
    prep_volume->add_option("--in", *in_dir, "Study directory (.raw/.meta volume pairs)")
        ->required();
    prep_volume->add_option("--out", *out_dir, "Output directory")->required();
    auto* cap_opt = prep_volume->add_option("--cap", *cap, "Maximum slices per sequence");
    prep_volume->add_option("--modality", *modality, "auto|ct|mr")
        ->check(CLI::IsMember({"auto", "ct", "mr"}));
    prep_volume->callback([=, &action]() {
      action = [=](GlobalConfig& config) {
        const int effective_cap = cap_opt->count() ? *cap : config.volume_cap;
        return cmd_prep_volume(config, *in_dir, *out_dir, effective_cap, *modality);
      };
    });
  }

  // prep-wsi
  auto* prep_wsi = app.add_subcommand("prep-wsi", "Tile a whole-slide image into capped patches");
  {
    auto in_dir = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto cap = std::make_shared<int>(slidegrid::kPatchCap);
    prep_wsi->add_option("--in", *in_dir, "Slide directory (slide.json + level PNGs)")
        ->required();
    prep_wsi->add_option("--out", *out_dir, "Output directory")->required();
    auto* cap_opt = prep_wsi->add_option("--cap", *cap, "Maximum patches per slide");
    prep_wsi->callback([=, &action]() {
      action = [=](GlobalConfig& config) {
        const int effective_cap = cap_opt->count() ? *cap : config.patch_cap;
        return cmd_prep_wsi(config, *in_dir, *out_dir, effective_cap, config.seed);
      };
    });
  }

  // render-prompt
  auto* render = app.add_subcommand("render-prompt", "Render a prompt template to stdout");
  {
    auto template_id = std::make_shared<std::string>();
    auto templates_dir = std::make_shared<std::string>();
    auto list = std::make_shared<bool>(false);
    auto fix_typos = std::make_shared<bool>(false);
    auto slots = std::make_shared<std::vector<std::string>>();
    render->add_option("--template", *template_id, "Template id (see --list)");
    render->add_option("--templates", *templates_dir, "Templates directory");
    render->add_flag("--list", *list, "List available template ids");
    render->add_flag("--fix-typos", *fix_typos,
                     "Correct source typos instead of rendering them verbatim");
    render->add_option("--slot", *slots, "Slot binding name=value (repeatable)");
    render->callback([=, &action]() {
      action = [=](GlobalConfig& config) {
        if (*fix_typos) config.fix_typos = true;
        return cmd_render_prompt(config, *templates_dir, *template_id, *list, *slots);
      };
    });
  }

  // run
  auto* run = app.add_subcommand("run", "Run a full evaluation against an endpoint");
  {
    auto task = std::make_shared<std::string>();
    auto manifest = std::make_shared<std::string>();
    auto endpoint = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto temperature = std::make_shared<double>(0.0);
    auto max_in_flight = std::make_shared<int>(8);
    auto max_output_tokens = std::make_shared<int>(1024);
    auto model = std::make_shared<std::string>("default");
    auto model_kind = std::make_shared<std::string>("medgemma");
    auto thinking_on = std::make_shared<bool>(false);
    auto thinking_off = std::make_shared<bool>(false);
    auto stamp_time = std::make_shared<bool>(false);
    auto fix_typos = std::make_shared<bool>(false);
    auto templates_dir = std::make_shared<std::string>();
    run->add_option("--task", *task, "ct|mr|ctrate|wsi|temporal|bbox|lab|mcq|ehrnote")
        ->required();
    run->add_option("--manifest", *manifest, "JSONL manifest file")->required();
    run->add_option("--endpoint", *endpoint, "Base URL or mock:NAME")->required();
    run->add_option("--out", *out_dir, "Report output directory")->required();
    auto* temp_opt = run->add_option("--temperature", *temperature, "Sampling temperature");
    auto* flight_opt = run->add_option("--max-in-flight", *max_in_flight,
                                       "Maximum concurrent requests");
    auto* tokens_opt =
        run->add_option("--max-output-tokens", *max_output_tokens, "Reply token budget");
    run->add_option("--model", *model, "Model name sent to the endpoint");
    run->add_option("--model-kind", *model_kind, "medgemma|general")
        ->check(CLI::IsMember({"medgemma", "general"}));
    run->add_flag("--thinking", *thinking_on, "Force the think-silently system line on");
    run->add_flag("--no-thinking", *thinking_off, "Force the think-silently system line off");
    run->add_flag("--stamp-time", *stamp_time,
                  "Record wall-clock timestamps (breaks byte-identical re-emission)");
    run->add_flag("--fix-typos", *fix_typos,
                  "Correct source typos in templates instead of rendering them verbatim");
    auto* templates_opt = run->add_option("--templates", *templates_dir, "Templates directory");
    run->callback([=, &action]() {
      action = [=](GlobalConfig& config) {
        if (temp_opt->count()) config.temperature = *temperature;
        if (flight_opt->count()) config.max_in_flight = *max_in_flight;
        if (tokens_opt->count()) config.max_output_tokens = *max_output_tokens;
        if (templates_opt->count()) config.templates_dir = *templates_dir;
        if (*fix_typos) config.fix_typos = true;
        std::optional<bool> think;
        if (*thinking_on) think = true;
        if (*thinking_off) think = false;
        return cmd_run(config, *task, *manifest, *endpoint, *out_dir, *model, *model_kind,
                       think, *stamp_time);
      };
    });
  }

  // score
  auto* score = app.add_subcommand("score", "Score prediction files offline");
  {
    auto task = std::make_shared<std::string>();
    auto pred = std::make_shared<std::string>();
    auto gold = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("report.json");
    score->add_option("--task", *task, "bbox|ct|mr|ctrate|temporal|wsi|lab|mcq|ehrnote")
        ->required();
    score->add_option("--pred", *pred, "JSONL predictions ({example_id, condition?, reply})")
        ->required();
    score->add_option("--gold", *gold, "JSONL manifest with gold annotations")->required();
    score->add_option("--out", *out, "Report JSON output path");
    score->callback([=, &action]() {
      action = [=](GlobalConfig& config) {
        return cmd_score(config, *task, *pred, *gold, *out);
      };
    });
  }

  // verify-report
  auto* verify = app.add_subcommand("verify-report", "Recompute report aggregates from rows");
  {
    auto report = std::make_shared<std::string>();
    verify->add_option("--report", *report, "report.json to verify")->required();
    verify->callback([=, &action]() {
      action = [=](GlobalConfig&) { return cmd_verify_report(*report); };
    });
  }

  // Global options (--config, --seed, --log-level) are accepted after the
  // subcommand name as well.
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    GlobalConfig config = load_config(
        config_file.empty() ? std::nullopt
                            : std::optional<std::filesystem::path>(config_file));
    if (seed_flag) config.seed = *seed_flag;
    if (!log_level.empty()) config.log_level = log_level;
    log_threshold = level_from_string(config.log_level);
    return action(config);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return 1;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return 2;
  } catch (const EndpointError& e) {
    std::cerr << "endpoint error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace medeval::cli
