#include "tatrack/eval/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <memory>
#include <sstream>

#include "tatrack/core/error.hpp"
#include "tatrack/eval/runner.hpp"
#include "tatrack/model/checkpoint.hpp"

namespace tatrack::eval {

namespace fs = std::filesystem;

namespace {

void check_layout(track::Variant v, const model::ModelConfig& cfg, const fs::path& dir) {
  const auto want = track::variant_model(v, cfg.backbone, cfg.sti_layers);
  const bool sti_ok = track::variant_flags(v).sti ? !cfg.sti_layers.empty() : cfg.sti_layers.empty();
  if (want.use_prompts != cfg.use_prompts || want.dual_branch != cfg.dual_branch || !sti_ok) {
    throw ConfigError("checkpoint " + dir.string() + " (" + model::describe(cfg) + ") does not have the layout of " +
                      track::variant_name(v));
  }
}

std::set<std::string> attribute_codes_in(const std::vector<data::Sequence>& test) {
  std::set<std::string> codes;
  for (const auto& s : test) {
    for (const auto& a : s.attributes) codes.insert(a.code);
  }
  return codes;
}

std::string fmt(const std::optional<double>& v, double scale = 100.0) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", *v * scale);
  return buf;
}

}  // namespace

std::vector<AblationRow> run_component_ablation(const std::map<track::Variant, fs::path>& checkpoints,
                                                const std::vector<data::Sequence>& test, int ots_interval) {
  if (test.empty()) throw InputError("ablation: empty test set");
  const auto codes = attribute_codes_in(test);
  std::vector<AblationRow> rows;
  for (const track::Variant v : track::all_variants()) {
    AblationRow row;
    row.variant = v;
    const auto it = checkpoints.find(track::weights_source(v));
    if (it == checkpoints.end() || !fs::exists(it->second / "manifest.txt")) {
      rows.push_back(std::move(row));
      continue;
    }
    row.checkpoint = it->second;
    const auto model = model::load_checkpoint<float>(it->second);
    check_layout(track::weights_source(v), model->config(), it->second);
    auto opts = track::default_options(model->config().backbone);
    opts.update_interval = track::variant_update_interval(v, ots_interval);
    for (const auto& seq : test) row.sequences.push_back(score_run(seq, run_sequence(*model, seq, opts)));
    row.overall = aggregate(row.sequences);
    for (const auto& c : codes) row.by_attribute[c] = aggregate(row.sequences, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::set<int>> default_sweep_sets(int64_t depth) {
  const std::set<int> full = model::default_sti_layers(depth);
  std::vector<std::set<int>> sets{{}};
  std::set<int> acc;
  for (const int l : full) {
    acc.insert(l);
    sets.push_back(acc);
  }
  return sets;
}

template <typename T>
std::vector<double> interleaved_fps(const std::vector<const model::TATrackModel<T>*>& models,
                                    const data::Sequence& seq, int repeats, int max_frames) {
  if (seq.size() < 2) throw InputError("interleaved_fps: sequence " + seq.name + " has fewer than 2 frames");
  const int n = max_frames > 0 ? std::min(max_frames, seq.size()) : seq.size();
  std::vector<data::FramePair> frames;
  for (int i = 0; i < n; ++i) frames.push_back(seq.frame(i));
  // best[m][i]: fastest timing of frame i for model m over all passes. Every
  // pass repeats the same deterministic work, so the per-frame minimum
  // strips preemption spikes without averaging them in.
  const size_t k = models.size();
  std::vector<std::vector<double>> best(k, std::vector<double>(static_cast<size_t>(n), std::numeric_limits<double>::infinity()));
  using clock = std::chrono::steady_clock;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    std::vector<std::unique_ptr<track::Tracker<T>>> trackers;
    for (const auto* m : models) {
      trackers.push_back(std::make_unique<track::Tracker<T>>(*m, track::default_options(m->config().backbone)));
      trackers.back()->init(frames[0], seq.groundtruth[0]);
    }
    for (int i = 1; i < n; ++i) {
      // Rotate the starting model so no model always runs on a cold cache.
      for (size_t j = 0; j < k; ++j) {
        const size_t m = (j + static_cast<size_t>(i + r)) % k;
        const auto t0 = clock::now();
        trackers[m]->track(frames[static_cast<size_t>(i)]);
        auto& b = best[m][static_cast<size_t>(i)];
        b = std::min(b, std::chrono::duration<double>(clock::now() - t0).count());
      }
    }
  }
  std::vector<double> fps;
  for (const auto& b : best) {
    double total = 0;
    for (int i = 1; i < n; ++i) total += b[static_cast<size_t>(i)];
    fps.push_back(static_cast<double>(n - 1) / total);
  }
  return fps;
}

std::vector<SweepRow> run_sti_sweep(const model::BackboneConfig& bb, const std::vector<std::set<int>>& sets,
                                    const std::map<std::set<int>, fs::path>& checkpoints,
                                    const std::vector<data::Sequence>& test, int repeats) {
  if (test.empty()) throw InputError("sti sweep: empty test set");
  std::vector<SweepRow> rows;
  std::vector<std::unique_ptr<model::TATrackModel<float>>> timing_models;
  for (const auto& layers : sets) {
    SweepRow row;
    row.layers = layers;
    auto cfg = track::variant_model(layers.empty() ? track::Variant::kNoSti : track::Variant::kFull, bb, layers);
    timing_models.push_back(std::make_unique<model::TATrackModel<float>>(cfg));
    timing_models.back()->init(1);
    const auto it = checkpoints.find(layers);
    if (it != checkpoints.end() && fs::exists(it->second / "manifest.txt")) {
      row.checkpoint = it->second;
      const auto model = model::load_checkpoint<float>(it->second);
      if (model->config().sti_layers != layers || !model->config().dual_branch) {
        throw ConfigError("sweep checkpoint " + it->second.string() + " has STI layers " +
                          format_layers(model->config().sti_layers) + ", expected " + format_layers(layers));
      }
      std::vector<SequenceResult> rs;
      const auto opts = track::default_options(model->config().backbone);
      for (const auto& seq : test) rs.push_back(score_run(seq, run_sequence(*model, seq, opts)));
      row.overall = aggregate(rs);
    }
    rows.push_back(std::move(row));
  }
  std::vector<const model::TATrackModel<float>*> ptrs;
  for (const auto& m : timing_models) ptrs.push_back(m.get());
  const auto fps = interleaved_fps(ptrs, test.front(), repeats);
  for (size_t i = 0; i < rows.size(); ++i) rows[i].fps = fps[i];
  return rows;
}

std::string format_layers(const std::set<int>& layers) {
  std::string s = "{";
  for (const int l : layers) s += (s.size() > 1 ? "," : "") + std::to_string(l);
  return s + "}";
}

std::string format_component_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant                   MCP STI OTS     PR   NPR    SR  LI-SR      fps\n";
  for (const auto& r : rows) {
    const auto f = track::variant_flags(r.variant);
    char line[160];
    std::optional<double> li;
    if (auto it = r.by_attribute.find("LI"); it != r.by_attribute.end()) li = it->second.success;
    std::snprintf(line, sizeof(line), "%-8s%-18s %s   %s   %s  %6s %5s %5s  %5s %8s\n",
                  track::variant_label(r.variant).c_str(), track::variant_name(r.variant).c_str(),
                  f.mcp ? "x" : "-", f.sti ? "x" : "-", f.ots ? "x" : "-",
                  r.overall ? fmt(r.overall->precision).c_str() : "absent",
                  r.overall ? fmt(r.overall->norm_precision).c_str() : "",
                  r.overall ? fmt(r.overall->success).c_str() : "", fmt(li).c_str(),
                  r.overall ? fmt(r.overall->fps, 1.0).c_str() : "");
    os << line;
  }
  return os.str();
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "inserting layers      PR   NPR    SR      fps\n";
  for (const auto& r : rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-18s %5s %5s %5s %8.1f\n", format_layers(r.layers).c_str(),
                  r.overall ? fmt(r.overall->precision).c_str() : "-",
                  r.overall ? fmt(r.overall->norm_precision).c_str() : "-",
                  r.overall ? fmt(r.overall->success).c_str() : "-", r.fps);
    os << line;
  }
  return os.str();
}

template std::vector<double> interleaved_fps(const std::vector<const model::TATrackModel<float>*>&,
                                             const data::Sequence&, int, int);
template std::vector<double> interleaved_fps(const std::vector<const model::TATrackModel<double>*>&,
                                             const data::Sequence&, int, int);

}  // namespace tatrack::eval
