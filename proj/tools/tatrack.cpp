// Command-line front end: data generation, training, tracking, evaluation.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tatrack/core/error.hpp"
#include "tatrack/data/synth.hpp"
#include "tatrack/eval/ablation.hpp"
#include "tatrack/eval/plot.hpp"
#include "tatrack/eval/runner.hpp"
#include "tatrack/model/checkpoint.hpp"
#include "tatrack/track/variant.hpp"
#include "tatrack/train/gradcheck_suite.hpp"
#include "tatrack/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace tatrack;

namespace {

// The option is only registered for help and validation; main() expands the
// file into flags before parsing.
void add_config_option(CLI::App* app) {
  static std::string sink;
  app->add_option("--config", sink, "key=value file; keys are this command's flag names without the leading dashes");
}

// Rewrites `<sub> ... --config FILE ...` so that every key=value line of FILE
// becomes `--key=value` right after the subcommand name. Flags given on the
// command line come later and win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> injected;
  for (size_t i = 0; i < args.size(); ++i) {
    std::string file;
    if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
    else continue;
    for (const auto& [k, v] : read_key_values(file)) injected.push_back("--" + k + "=" + v);
  }
  if (!injected.empty() && !args.empty()) args.insert(args.begin() + 1, injected.begin(), injected.end());
  std::reverse(args.begin(), args.end());  // CLI11 expects the reversed order for vector parsing
  return args;
}

std::set<int> parse_layers(const std::string& text) {
  std::set<int> out;
  std::string s = text;
  if (!s.empty() && s.front() == '{') s = s.substr(1);
  if (!s.empty() && s.back() == '}') s.pop_back();
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.insert(static_cast<int>(parse_int("layer", item)));
  }
  return out;
}

model::BackboneConfig profile_backbone(const std::string& name) {
  if (name == "ablation") return model::ablation_backbone();
  if (name == "desk") return model::desk_scale_backbone();
  if (name == "paper") return model::paper_scale_backbone();
  throw ConfigError("unknown profile '" + name + "' (ablation, desk, paper)");
}

// Every training hyperparameter becomes a --<key> flag and a config-file key.
struct TrainFlags {
  std::map<std::string, std::string> values;
  void add_to(CLI::App* app) {
    for (const auto& [k, v] : train::TrainConfig{}.to_key_values()) {
      app->add_option("--" + k, values[k], "training: " + k)->default_str(v)->group("Training");
    }
  }
  train::TrainConfig resolve(CLI::App* app) const {
    train::TrainConfig c;
    KeyValues kv;
    for (const auto& [k, v] : values) {
      if (app->count("--" + k) > 0) kv[k] = v;
    }
    c.apply(kv);
    c.validate();
    return c;
  }
};

struct LogSink {
  std::ofstream file;
  std::ostream* out = &std::cout;
  explicit LogSink(const std::string& path) {
    if (path.empty()) return;
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    file.open(path);
    if (!file) throw LoadError("cannot open log file " + path);
    out = &file;
  }
};

void write_train_summary(const fs::path& ckpt, const train::TrainConfig& cfg, const train::TrainReport& r) {
  std::ofstream f(ckpt / "train.txt");
  for (const auto& [k, v] : cfg.to_key_values()) f << k << "=" << v << "\n";
  f << "steps=" << r.steps << "\nseconds=" << r.seconds << "\n";
  if (!r.frozen_hash_before.empty()) {
    f << "frozen_hash_before=" << r.frozen_hash_before << "\nfrozen_hash_after=" << r.frozen_hash_after << "\n";
  }
  for (const auto& d : r.dead_params) f << "dead_param=" << d << "\n";
}

void report_dead(const train::TrainReport& r) {
  for (const auto& d : r.dead_params) std::cerr << "warning: parameter " << d << " never received a gradient\n";
}

// ---- synthgen ---------------------------------------------------------------

struct SynthgenCmd {
  data::SynthConfig cfg;
  std::string out;
  int count = 1;
  std::string prefix = "seq";
  bool random_events = false;
  std::vector<std::string> events;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("synthgen", "Render synthetic RGBT sequences");
    add_config_option(c);
    c->add_option("--out", out, "output directory (a dataset root when --count > 1)")->required();
    c->add_option("--count", count, "number of sequences")->capture_default_str();
    c->add_option("--prefix", prefix, "sequence name prefix for --count > 1")->capture_default_str();
    c->add_option("--name", cfg.name, "sequence name for a single sequence")->capture_default_str();
    c->add_option("--frames", cfg.frames)->capture_default_str();
    c->add_option("--width", cfg.width)->capture_default_str();
    c->add_option("--height", cfg.height)->capture_default_str();
    c->add_option("--target-min-side", cfg.target_min_side)->capture_default_str();
    c->add_option("--target-max-side", cfg.target_max_side)->capture_default_str();
    c->add_option("--max-speed", cfg.max_speed, "pixels per frame")->capture_default_str();
    c->add_option("--scale-drift", cfg.scale_drift, "std of the per-frame log-scale step")->capture_default_str();
    c->add_option("--distractors", cfg.distractors)->capture_default_str();
    c->add_option("--noise", cfg.noise, "Gaussian pixel noise, 8-bit units")->capture_default_str();
    c->add_option("--seed", cfg.seed)->capture_default_str();
    c->add_option("--event", events, "KIND:START:END, KIND in LI TC PO DEF SA (repeatable)")->take_all();
    c->add_flag("--random-events", random_events, "random event schedule per sequence");
    c->callback([this] { run(); });
  }

  void run() {
    for (const auto& e : events) {
      std::stringstream ss(e);
      std::string kind, a, b;
      if (!std::getline(ss, kind, ':') || !std::getline(ss, a, ':') || !std::getline(ss, b)) {
        throw ConfigError("event '" + e + "' is not KIND:START:END");
      }
      cfg.events.push_back({data::parse_event_kind(kind), static_cast<int>(parse_int("event start", a)),
                            static_cast<int>(parse_int("event end", b))});
    }
    if (count == 1) {
      if (random_events) {
        std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
        cfg.events = data::random_event_schedule(cfg.frames, rng);
      }
      const auto seq = data::generate_synthetic(cfg, out);
      std::cout << "wrote " << seq.size() << " frames to " << out << "\n";
      return;
    }
    if (!cfg.events.empty()) throw ConfigError("--event applies to a single sequence; use --random-events with --count");
    const auto ds = data::generate_dataset(out, count, cfg, cfg.seed, random_events, prefix);
    std::cout << "wrote " << ds.size() << " sequences to " << out << "\n";
  }
};

// ---- pretrain / finetune ------------------------------------------------------

struct PretrainCmd {
  CLI::App* app = nullptr;
  TrainFlags train;
  std::string data, out, profile = "desk", log;

  void add(CLI::App& root) {
    app = root.add_subcommand("pretrain", "Train the RGB-only base tracker from scratch");
    add_config_option(app);
    app->add_option("--data", data, "dataset root")->required();
    app->add_option("--out", out, "checkpoint directory")->required();
    app->add_option("--profile", profile, "ablation, desk or paper")->capture_default_str();
    app->add_option("--log", log, "training log file (default stdout)");
    train.add_to(app);
    app->callback([this] { run(); });
  }

  void run() {
    const auto cfg = train.resolve(app);
    const auto ds = data::load_dataset(data);
    model::TATrackModel<float> m(track::variant_model(track::Variant::kRgbOnly, profile_backbone(profile), {}));
    LogSink sink(log);
    const auto r = train::pretrain_base(m, ds, cfg, sink.out);
    model::save_checkpoint(m, out);
    write_train_summary(out, cfg, r);
    report_dead(r);
    std::cout << "saved " << out << " (" << r.steps << " steps, " << r.seconds << " s)\n";
  }
};

struct FinetuneCmd {
  CLI::App* app = nullptr;
  TrainFlags train;
  std::string base, data, out, variant = "full", sti_layers, log;

  void add(CLI::App& root) {
    app = root.add_subcommand("finetune", "Freeze a base tracker and train prompts, STI and fusion");
    add_config_option(app);
    app->add_option("--base", base, "base checkpoint from pretrain")->required();
    app->add_option("--data", data, "dataset root")->required();
    app->add_option("--out", out, "checkpoint directory")->required();
    app->add_option("--variant", variant, "prompt_baseline, no_sti or full")->capture_default_str();
    app->add_option("--sti-layers", sti_layers, "e.g. 4,7,10 (default: scaled to depth)");
    app->add_option("--log", log, "training log file (default stdout)");
    train.add_to(app);
    app->callback([this] { run(); });
  }

  void run() {
    const auto cfg = train.resolve(app);
    const auto v = track::parse_variant(variant);
    if (v == track::Variant::kRgbOnly || v == track::Variant::kPerFrameUpdate) {
      throw ConfigError("finetune trains prompt_baseline, no_sti or full (per_frame_update reuses full)");
    }
    const auto bb = model::read_checkpoint_config(base).backbone;
    const auto layers = sti_layers.empty() ? model::default_sti_layers(bb.depth) : parse_layers(sti_layers);
    model::TATrackModel<float> m(track::variant_model(v, bb, layers));
    const auto ds = data::load_dataset(data);
    LogSink sink(log);
    const auto r = train::finetune_tatrack(m, base, ds, cfg, sink.out);
    model::save_checkpoint(m, out);
    write_train_summary(out, cfg, r);
    report_dead(r);
    std::cout << "saved " << out << " (" << r.steps << " steps, " << r.seconds << " s)\n"
              << "frozen hash " << (r.frozen_hash_before == r.frozen_hash_after ? "unchanged " : "CHANGED ")
              << r.frozen_hash_after << "\n";
    if (r.frozen_hash_before != r.frozen_hash_after) throw NumericalError("frozen parameters changed");
  }
};

// ---- track ----------------------------------------------------------------------

void draw_box(cv::Mat& img, const ImageBox& b, const cv::Scalar& color) {
  cv::rectangle(img, cv::Point2d(b.x, b.y), cv::Point2d(b.x + b.w, b.y + b.h), color, 1, cv::LINE_AA);
}

struct TrackCmd {
  std::string checkpoint, sequence, dataset, out, overlays, update_interval;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("track", "Run a checkpoint over sequences and write result boxes");
    add_config_option(c);
    c->add_option("--checkpoint", checkpoint)->required();
    auto* s = c->add_option("--sequence", sequence, "one sequence directory; --out is the result file");
    auto* d = c->add_option("--dataset", dataset, "dataset root; --out is a directory of <name>.txt files");
    s->excludes(d);
    c->add_option("--out", out)->required();
    c->add_option("--update-interval", update_interval,
                  "frames per online-template update, or 'never' (default 50 for dual-branch models)");
    c->add_option("--emit-overlays", overlays, "directory for per-frame overlay images");
    c->callback([this] { run(); });
  }

  void run() {
    if (sequence.empty() == dataset.empty()) throw ConfigError("track needs exactly one of --sequence, --dataset");
    const auto model = model::load_checkpoint<float>(checkpoint);
    auto opts = track::default_options(model->config().backbone);
    if (update_interval == "never") opts.update_interval = track::kNeverUpdate;
    else if (!update_interval.empty()) opts.update_interval = static_cast<int>(parse_int("update-interval", update_interval));
    if (!model->config().dual_branch) opts.update_interval = track::kNeverUpdate;

    std::vector<data::Sequence> seqs;
    if (!sequence.empty()) seqs.push_back(data::load_sequence(sequence));
    else seqs = data::load_dataset(dataset);
    for (const auto& seq : seqs) {
      const fs::path file = sequence.empty() ? fs::path(out) / (seq.name + ".txt") : fs::path(out);
      if (file.has_parent_path()) fs::create_directories(file.parent_path());
      const auto run = eval::run_sequence(*model, seq, opts);
      data::write_boxes(file, run.boxes);
      std::ofstream conf(fs::path(file).replace_extension(".confidence.txt"));
      conf.precision(9);
      for (double c : run.confidence) conf << c << "\n";
      if (!overlays.empty()) write_overlays(seq, run, fs::path(overlays) / seq.name);
      std::cout << seq.name << ": " << run.tracked_frames / std::max(run.seconds, 1e-9) << " fps -> " << file.string() << "\n";
    }
  }

  static void write_overlays(const data::Sequence& seq, const eval::TrackRun& run, const fs::path& dir) {
    fs::create_directories(dir);
    for (int i = 0; i < seq.size(); ++i) {
      auto f = seq.frame(i);
      for (cv::Mat* m : {&f.rgb, &f.tir}) {
        draw_box(*m, seq.groundtruth[static_cast<size_t>(i)], cv::Scalar(0, 0, 255));
        draw_box(*m, run.boxes[static_cast<size_t>(i)], cv::Scalar(0, 255, 0));
      }
      cv::Mat both;
      cv::hconcat(f.rgb, f.tir, both);
      char name[32];
      std::snprintf(name, sizeof(name), "%06d.png", i);
      cv::imwrite((dir / name).string(), both);
    }
  }
};

// ---- eval -------------------------------------------------------------------------

std::string attribute_report(const std::vector<eval::SequenceResult>& rs, const std::string& prefix,
                             std::ostream& text) {
  std::set<std::string> codes;
  for (const auto& r : rs) {
    for (const auto& a : r.attributes) codes.insert(a.code);
  }
  std::string kv;
  char line[128];
  for (const auto& c : codes) {
    const auto m = eval::aggregate(rs, c);
    kv += eval::to_key_values(m, prefix + c + ".", false);
    std::snprintf(line, sizeof(line), "  %-4s frames=%-6lld PR=%.4f NPR=%.4f SR=%.4f\n", c.c_str(),
                  static_cast<long long>(m.frames), m.precision.value_or(0), m.norm_precision.value_or(0),
                  m.success.value_or(0));
    text << line;
  }
  return kv;
}

struct EvalCmd {
  std::vector<std::string> results;
  std::string data, out;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("eval", "Score result files against ground truth");
    add_config_option(c);
    c->add_option("--results", results, "result directory, or NAME=DIR to compare several")->required()->take_all();
    c->add_option("--data", data, "dataset root with ground truth")->required();
    c->add_option("--out", out, "report directory")->required();
    c->callback([this] { run(); });
  }

  void run() {
    const auto ds = data::load_dataset(data);
    if (ds.empty()) throw InputError("no sequences under " + data);
    fs::create_directories(out);
    std::ofstream report(fs::path(out) / "report.txt"), metrics(fs::path(out) / "metrics.txt");
    std::vector<eval::Curve> sc, pc;
    for (const auto& spec : results) {
      const auto eq = spec.find('=');
      const std::string name = eq == std::string::npos ? fs::path(spec).filename().string() : spec.substr(0, eq);
      const fs::path dir = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
      std::vector<eval::SequenceResult> rs;
      for (const auto& seq : ds) {
        const fs::path file = dir / (seq.name + ".txt");
        if (!fs::exists(file)) throw LoadError("missing result file " + file.string());
        eval::SequenceResult r;
        r.name = seq.name;
        r.errors = eval::eval_sequence(data::read_boxes(file), seq.groundtruth);
        r.attributes = seq.attributes;
        rs.push_back(std::move(r));
      }
      const auto m = eval::aggregate(rs);
      const std::string prefix = results.size() > 1 ? name + "." : "";
      char line[160];
      std::snprintf(line, sizeof(line), "%s: sequences=%zu frames=%lld PR=%.4f NPR=%.4f SR=%.4f\n", name.c_str(),
                    rs.size(), static_cast<long long>(m.frames), *m.precision, *m.norm_precision, *m.success);
      report << line;
      std::cout << line;
      metrics << eval::to_key_values(m, prefix, false);
      metrics << attribute_report(rs, prefix, report);
      const auto pooled = eval::pooled_errors(rs);
      sc.push_back(eval::success_plot_curve(name, pooled.iou));
      pc.push_back(eval::precision_plot_curve(name, pooled.center_error));
    }
    eval::plot_curves(fs::path(out) / "success.png", "Success plot", "overlap threshold", sc);
    eval::plot_curves(fs::path(out) / "precision.png", "Precision plot", "location error threshold (px)", pc);
    std::cout << "report in " << out << "\n";
  }
};

// ---- ablate ---------------------------------------------------------------------

struct AblateCmd {
  std::string data, out, checkpoint_dir, profile;
  std::vector<std::string> checkpoints, sweep_checkpoints;
  bool sweep = false;
  int repeats = 3;
  int ots_interval = 50;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("ablate", "Component table and STI insertion sweep");
    add_config_option(c);
    c->add_option("--data", data, "test dataset root")->required();
    c->add_option("--out", out, "report directory")->required();
    c->add_option("--checkpoint", checkpoints, "VARIANT=DIR (repeatable)")->take_all();
    c->add_option("--checkpoint-dir", checkpoint_dir, "directory with one subdirectory per variant name");
    c->add_option("--ots-interval", ots_interval)->capture_default_str();
    c->add_flag("--sweep", sweep, "also run the STI insertion sweep");
    c->add_option("--sweep-checkpoint", sweep_checkpoints, "LAYERS=DIR, e.g. 2,3=ckpt (repeatable)")->take_all();
    c->add_option("--profile", profile, "backbone for the sweep when no full checkpoint is given");
    c->add_option("--repeats", repeats, "timing passes per sweep row")->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() {
    std::map<track::Variant, fs::path> ckpts;
    if (!checkpoint_dir.empty()) {
      for (const auto v : track::all_variants()) ckpts[v] = fs::path(checkpoint_dir) / track::variant_name(v);
    }
    for (const auto& spec : checkpoints) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw ConfigError("--checkpoint expects VARIANT=DIR, got '" + spec + "'");
      ckpts[track::parse_variant(spec.substr(0, eq))] = spec.substr(eq + 1);
    }
    const auto test = data::load_dataset(data);
    fs::create_directories(out);
    const auto rows = eval::run_component_ablation(ckpts, test, ots_interval);
    const std::string table = eval::format_component_table(rows);
    std::cout << table;
    std::ofstream(fs::path(out) / "ablation.txt") << table;
    std::ofstream metrics(fs::path(out) / "metrics.txt");
    std::vector<eval::Curve> sc, pc;
    for (const auto& r : rows) {
      const std::string name = track::variant_name(r.variant);
      if (!r.overall) {
        metrics << name << ".status=absent\n";
        continue;
      }
      metrics << eval::to_key_values(*r.overall, name + ".");
      for (const auto& [code, m] : r.by_attribute) metrics << eval::to_key_values(m, name + "." + code + ".", false);
      const auto pooled = eval::pooled_errors(r.sequences);
      sc.push_back(eval::success_plot_curve(track::variant_label(r.variant) + " " + name, pooled.iou));
      pc.push_back(eval::precision_plot_curve(track::variant_label(r.variant) + " " + name, pooled.center_error));
    }
    if (!sc.empty()) {
      eval::plot_curves(fs::path(out) / "success.png", "Success plot", "overlap threshold", sc);
      eval::plot_curves(fs::path(out) / "precision.png", "Precision plot", "location error threshold (px)", pc);
    }
    if (!sweep) return;

    model::BackboneConfig bb;
    if (!profile.empty()) bb = profile_backbone(profile);
    else if (auto it = ckpts.find(track::Variant::kFull); it != ckpts.end() && fs::exists(it->second / "manifest.txt"))
      bb = model::read_checkpoint_config(it->second).backbone;
    else throw ConfigError("sweep needs --profile or a full checkpoint to fix the backbone");
    std::map<std::set<int>, fs::path> sweep_ckpts;
    for (const auto& spec : sweep_checkpoints) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw ConfigError("--sweep-checkpoint expects LAYERS=DIR, got '" + spec + "'");
      sweep_ckpts[parse_layers(spec.substr(0, eq))] = spec.substr(eq + 1);
    }
    const auto sweep_rows = eval::run_sti_sweep(bb, eval::default_sweep_sets(bb.depth), sweep_ckpts, test, repeats);
    const std::string st = eval::format_sweep_table(sweep_rows);
    std::cout << "\n" << st;
    std::ofstream(fs::path(out) / "sweep.txt") << st;
    for (const auto& r : sweep_rows) {
      metrics << "sweep." << eval::format_layers(r.layers) << ".fps=" << r.fps << "\n";
      if (r.overall) metrics << eval::to_key_values(*r.overall, "sweep." + eval::format_layers(r.layers) + ".");
    }
  }
};

// ---- gradcheck ------------------------------------------------------------------

struct GradcheckCmd {
  int seeds = 10;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("gradcheck", "Finite-difference check of every op and the total loss");
    add_config_option(c);
    c->add_option("--seeds", seeds)->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() {
    const auto s = train::run_gradcheck_suite(seeds, &std::cout);
    std::cout << "worst op " << s.worst_op << " " << s.worst_op_error << " (tolerance " << train::kOpTolerance
              << ")\nworst total-loss input " << s.worst_model_input << " " << s.worst_model_error << " (tolerance "
              << train::kModelTolerance << ")\n"
              << (s.passed() ? "PASS" : "FAIL") << "\n";
    if (!s.passed()) throw NumericalError("gradient check failed");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGBT tracker with modality prompts and spatio-temporal interaction", "tatrack"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  SynthgenCmd synthgen;
  PretrainCmd pretrain;
  FinetuneCmd finetune;
  TrackCmd track_cmd;
  EvalCmd eval_cmd;
  AblateCmd ablate;
  GradcheckCmd gradcheck;
  synthgen.add(app);
  pretrain.add(app);
  finetune.add(app);
  track_cmd.add(app);
  eval_cmd.add(app);
  ablate.add(app);
  gradcheck.add(app);
  try {
    auto args = expand_config(argc, argv);
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
