#include "tatrack/model/tatrack_model.hpp"

#include "tatrack/core/error.hpp"

namespace tatrack::model {

template <typename T>
TATrackModel<T>::TATrackModel(const ModelConfig& cfg)
    : cfg_(cfg), backbone_((cfg.validate(), cfg.backbone)), head_(cfg.backbone.token_dim) {
  const auto& bb = cfg_.backbone;
  if (cfg_.use_prompts) {
    mcp_initial_.emplace("mcp.initial", bb);
    if (cfg_.dual_branch) mcp_online_.emplace("mcp.online", bb);
  }
  if (cfg_.dual_branch) {
    for (int l : cfg_.sti_layers) {
      sti_.try_emplace(l, "sti." + std::to_string(l), bb.token_dim, bb.ffn_ratio);
    }
    fusion_.emplace(bb.token_dim);
  }
}

template <typename T>
void TATrackModel<T>::init(uint64_t seed) {
  std::mt19937_64 rng(seed);
  backbone_.init(rng);
  head_.init(rng);
  init_prompt_params(seed ^ 0x9e3779b97f4a7c15ULL);
}

template <typename T>
void TATrackModel<T>::init_prompt_params(uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (mcp_initial_) mcp_initial_->init(rng);
  if (mcp_online_) mcp_online_->init(rng);
  for (auto& [l, w] : sti_) w.init(rng);
  if (fusion_) fusion_->init(rng);
}

template <typename T>
void TATrackModel<T>::freeze_base() {
  for (auto* p : base_parameters()) {
    if (!p->is_buffer()) p->set_trainable(false);
  }
  for (auto* p : prompt_parameters()) {
    if (!p->is_buffer()) p->set_trainable(true);
  }
  base_frozen_ = true;
}

template <typename T>
void TATrackModel<T>::set_all_trainable() {
  for (auto* p : parameters()) {
    if (!p->is_buffer()) p->set_trainable(true);
  }
  base_frozen_ = false;
}

template <typename T>
ParamList<T> TATrackModel<T>::base_parameters() {
  ParamList<T> out;
  backbone_.collect(out);
  head_.collect(out);
  return out;
}

template <typename T>
ParamList<T> TATrackModel<T>::prompt_parameters() {
  ParamList<T> out;
  if (mcp_initial_) mcp_initial_->collect(out);
  if (mcp_online_) mcp_online_->collect(out);
  for (auto& [l, w] : sti_) w.collect(out);
  if (fusion_) fusion_->collect(out);
  return out;
}

template <typename T>
ParamList<T> TATrackModel<T>::parameters() {
  ParamList<T> out = base_parameters();
  for (auto* p : prompt_parameters()) out.push_back(p);
  return out;
}

template <typename T>
Mcp<T>* TATrackModel<T>::mcp(TemplateKind which) {
  auto& m = which == TemplateKind::kInitial ? mcp_initial_ : mcp_online_;
  return m ? &*m : nullptr;
}

template <typename T>
const Mcp<T>* TATrackModel<T>::mcp(TemplateKind which) const {
  const auto& m = which == TemplateKind::kInitial ? mcp_initial_ : mcp_online_;
  return m ? &*m : nullptr;
}

template <typename T>
BranchState<T> TATrackModel<T>::start_branch(const ImagePair<T>& tpl, const ImagePair<T>& search,
                                             TemplateKind which) const {
  BranchState<T> b;
  b.which = which;
  b.fused = backbone_.embed(tpl.rgb, search.rgb);
  if (cfg_.use_prompts) {
    const TokenSequence<T> thermal = backbone_.embed(tpl.tir, search.tir);
    b.prompt = {thermal.tokens, thermal.boundary};
  }
  return b;
}

template <typename T>
void TATrackModel<T>::step_branch(BranchState<T>& b) const {
  const int l = b.layer + 1;
  if (l > cfg_.backbone.depth) throw UsageError("step_branch: branch already at the last layer");
  if (cfg_.use_prompts) {
    const Mcp<T>* m = mcp(b.which);
    if (!m) throw UsageError("step_branch: no prompter for this branch");
    b.prompt = mcp_forward(b.prompt, b.fused, m->layer(l), m->grids());
    b.fused = inject(b.fused, b.prompt);
  }
  b.fused.tokens = backbone_.encode_layer(l, b.fused.tokens);
  b.layer = l;
}

template <typename T>
Var<T> TATrackModel<T>::search_map(const BranchState<T>& b) const {
  const auto& bb = cfg_.backbone;
  const Var<T> normed = backbone_.final_norm(b.fused.tokens);
  const Var<T> x = core::split(normed, 1, {b.fused.boundary, b.fused.search_length()})[1];
  const int64_t batch = x.dim(0);
  const int64_t s = bb.search_grid();
  return core::reshape(core::transpose(x, 1, 2), Shape{batch, bb.token_dim, s, s});
}

template <typename T>
HeadOutputs<T> TATrackModel<T>::single_forward(const ImagePair<T>& tpl, const ImagePair<T>& search,
                                               bool training) const {
  BranchState<T> b = start_branch(tpl, search, TemplateKind::kInitial);
  for (int l = 1; l <= cfg_.backbone.depth; ++l) step_branch(b);
  return head_.forward(search_map(b), training && !base_frozen_);
}

template <typename T>
HeadOutputs<T> TATrackModel<T>::dual_forward(const ImagePair<T>& initial_tpl, const ImagePair<T>& online_tpl,
                                             const ImagePair<T>& search, bool training) const {
  if (!cfg_.dual_branch) throw UsageError("dual_forward on a single-branch model");
  BranchState<T> bi = start_branch(initial_tpl, search, TemplateKind::kInitial);
  BranchState<T> bo = start_branch(online_tpl, search, TemplateKind::kOnline);
  const StiConfig sti_cfg{cfg_.sti_layers, cfg_.sti_heads()};
  for (int l = 1; l <= cfg_.backbone.depth; ++l) {
    if (bi.layer != bo.layer) throw UsageError("dual_forward: branches are desynchronized");
    if (sti_cfg.insertion_layers.count(l)) {
      apply_sti_at_layer(bi, bo, l, sti_cfg, sti_, cfg_.backbone.depth);
    }
    step_branch(bi);
    step_branch(bo);
  }
  // Initial branch first along the channel axis.
  const Var<T> both = core::concat<T>({search_map(bi), search_map(bo)}, 1);
  const Var<T> fused =
      core::relu(fusion_->bn(core::conv1x1(both, fusion_->w.var(), fusion_->b.var()), training));
  return head_.forward(fused, training && !base_frozen_);
}

template <typename T>
HeadOutputs<T> TATrackModel<T>::forward(const ModelInputs<T>& in, bool training) const {
  if (cfg_.dual_branch) return dual_forward(in.initial_template, in.online_template, in.search, training);
  return single_forward(in.initial_template, in.search, training);
}

namespace {

template <typename T>
int64_t map_side(const Tensor<T>& m, int64_t channels, const char* what) {
  const auto& s = m.shape();
  const bool ok3 = s.size() == 3 && s[0] == channels;
  const bool ok4 = s.size() == 4 && s[0] == 1 && s[1] == channels;
  if (!(ok3 || ok4) || s[s.size() - 1] != s[s.size() - 2]) {
    throw DimensionError(std::string("decode_box: bad ") + what + " map " + core::shape_str(s));
  }
  return s.back();
}

}  // namespace

template <typename T>
DecodedBox decode_box(const Tensor<T>& score, const Tensor<T>& offset, const Tensor<T>& size) {
  const int64_t s = map_side(score, 1, "score");
  if (map_side(offset, 2, "offset") != s || map_side(size, 2, "size") != s) {
    throw DimensionError("decode_box: map sides differ");
  }
  const auto sc = score.data();
  size_t best = 0;
  for (size_t k = 1; k < sc.size(); ++k) {
    if (sc[k] > sc[best]) best = k;
  }
  const auto cells = static_cast<size_t>(s * s);
  const auto off = offset.data();
  const auto sz = size.data();
  DecodedBox d;
  d.row = static_cast<int64_t>(best) / s;
  d.col = static_cast<int64_t>(best) % s;
  d.confidence = static_cast<double>(sc[best]);
  d.box.cx = (static_cast<double>(d.col) + static_cast<double>(off[best])) / static_cast<double>(s);
  d.box.cy = (static_cast<double>(d.row) + static_cast<double>(off[cells + best])) / static_cast<double>(s);
  d.box.w = static_cast<double>(sz[best]);
  d.box.h = static_cast<double>(sz[cells + best]);
  return d;
}

template <typename T>
Var<T> boxes_at_cells(const HeadOutputs<T>& out, const std::vector<int64_t>& flat_cells) {
  const int64_t batch = out.score.dim(0);
  const int64_t s = out.score.dim(-1);
  if (static_cast<int64_t>(flat_cells.size()) != batch) {
    throw DimensionError("boxes_at_cells: one cell per batch item expected");
  }
  Tensor<T> cell_xy(Shape{batch, 2});
  for (int64_t b = 0; b < batch; ++b) {
    const int64_t k = flat_cells[static_cast<size_t>(b)];
    if (k < 0 || k >= s * s) throw DimensionError("boxes_at_cells: cell index out of range");
    cell_xy[static_cast<size_t>(2 * b)] = static_cast<T>(k % s);
    cell_xy[static_cast<size_t>(2 * b + 1)] = static_cast<T>(k / s);
  }
  const Var<T> off = core::gather_spatial(out.offset, flat_cells);
  const Var<T> wh = core::gather_spatial(out.size, flat_cells);
  const Var<T> centers = core::scale(core::add(core::constant(cell_xy), off), T(1) / static_cast<T>(s));
  return core::concat<T>({centers, wh}, 1);
}

#define TATRACK_INSTANTIATE(T)                                                                     \
  template class TATrackModel<T>;                                                                  \
  template DecodedBox decode_box(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Var<T> boxes_at_cells(const HeadOutputs<T>&, const std::vector<int64_t>&);

TATRACK_INSTANTIATE(float)
TATRACK_INSTANTIATE(double)
#undef TATRACK_INSTANTIATE

}  // namespace tatrack::model
