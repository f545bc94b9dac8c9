#include "tatrack/train/gradcheck_suite.hpp"

#include <memory>
#include <ostream>

#include "tatrack/core/ops.hpp"
#include "tatrack/model/tatrack_model.hpp"
#include "tatrack/train/losses.hpp"

namespace tatrack::train {

using namespace tatrack::core;

namespace {

using VarD = Var<double>;
using TensorD = Tensor<double>;

VarD leaf(TensorD t) { return VarD(std::move(t), true); }

VarD rand_leaf(Shape s, std::mt19937_64& rng, double stddev = 1.0) {
  return leaf(TensorD::randn(std::move(s), rng, stddev));
}

// Projects a tensor-valued op onto a scalar with fixed random weights so that
// every output coordinate contributes to the checked gradient.
VarD project(const VarD& y, const TensorD& weights) { return sum(mul(y, constant(weights))); }

}  // namespace


std::vector<GradCheckCase> op_gradcheck_cases() {
  std::vector<GradCheckCase> cases;
  auto unary = [&](std::string name, std::function<VarD(const VarD&)> op, Shape shape) {
    cases.push_back({name, [op, shape](std::mt19937_64& rng, std::vector<VarD>& in,
                                       std::function<VarD()>& f) {
                       VarD x = rand_leaf(shape, rng);
                       auto w = TensorD::randn(op(x).shape(), rng);
                       in = {x};
                       f = [x, w, op] { return project(op(x), w); };
                     }});
  };
  unary("softmax", [](const VarD& x) { return softmax_lastdim(x); }, {3, 6});
  unary("gelu", [](const VarD& x) { return gelu(x); }, {4, 5});
  unary("sigmoid", [](const VarD& x) { return sigmoid(x); }, {4, 5});
  unary("relu", [](const VarD& x) { return relu(add_scalar(x, 0.05)); }, {4, 5});
  unary("transpose", [](const VarD& x) { return transpose(x, 0, 2); }, {2, 3, 4});
  unary("permute", [](const VarD& x) { return permute(x, {1, 2, 0}); }, {2, 3, 4});
  unary("reshape", [](const VarD& x) { return reshape(x, {6, 4}); }, {2, 3, 4});
  unary("scale", [](const VarD& x) { return scale(x, 2.5); }, {3, 3});
  unary("mean", [](const VarD& x) { return mean(x); }, {3, 3});
  unary("patchify", [](const VarD& x) { return patchify(x, 2); }, {2, 3, 4, 4});
  unary("gather_spatial", [](const VarD& x) { return gather_spatial(x, {3, 7}); }, {2, 3, 4, 4});
  unary("split", [](const VarD& x) {
    auto parts = split(x, 1, {1, 3});
    return add(scale(parts[0], 2.0), sum(parts[1]));
  }, {3, 4});

  auto binary = [&](std::string name, std::function<VarD(const VarD&, const VarD&)> op, Shape sa,
                    Shape sb) {
    cases.push_back({name, [op, sa, sb](std::mt19937_64& rng, std::vector<VarD>& in,
                                        std::function<VarD()>& f) {
                       VarD a = rand_leaf(sa, rng);
                       VarD b = rand_leaf(sb, rng);
                       auto w = TensorD::randn(op(a, b).shape(), rng);
                       in = {a, b};
                       f = [a, b, w, op] { return project(op(a, b), w); };
                     }});
  };
  binary("matmul", [](const VarD& a, const VarD& b) { return matmul(a, b); }, {4, 5}, {5, 3});
  binary("matmul_batched", [](const VarD& a, const VarD& b) { return matmul(a, b); }, {2, 4, 5},
         {2, 5, 3});
  binary("matmul_shared_rhs", [](const VarD& a, const VarD& b) { return matmul(a, b); },
         {2, 4, 5}, {5, 3});
  binary("matmul_shared_lhs", [](const VarD& a, const VarD& b) { return matmul(a, b); }, {4, 5},
         {2, 5, 3});
  binary("add_broadcast", [](const VarD& a, const VarD& b) { return add(a, b); }, {2, 3, 4}, {3, 4});
  binary("sub", [](const VarD& a, const VarD& b) { return sub(a, b); }, {3, 4}, {3, 4});
  binary("mul_broadcast", [](const VarD& a, const VarD& b) { return mul(a, b); }, {2, 3, 4}, {4});
  binary("concat", [](const VarD& a, const VarD& b) { return concat<double>({a, b}, 1); }, {2, 3, 4},
         {2, 1, 4});

  cases.push_back({"linear", [](std::mt19937_64& rng, std::vector<VarD>& in, std::function<VarD()>& f) {
                     VarD x = rand_leaf({2, 3, 5}, rng), w = rand_leaf({5, 4}, rng), b = rand_leaf({4}, rng);
                     auto r = TensorD::randn({2, 3, 4}, rng);
                     in = {x, w, b};
                     f = [=] { return project(linear(x, w, b), r); };
                   }});
  cases.push_back({"layer_norm", [](std::mt19937_64& rng, std::vector<VarD>& in, std::function<VarD()>& f) {
                     VarD x = rand_leaf({3, 8}, rng), g = rand_leaf({8}, rng), b = rand_leaf({8}, rng);
                     auto r = TensorD::randn({3, 8}, rng);
                     in = {x, g, b};
                     f = [=] { return project(layer_norm(x, g, b), r); };
                   }});
  cases.push_back({"conv1x1", [](std::mt19937_64& rng, std::vector<VarD>& in, std::function<VarD()>& f) {
                     VarD x = rand_leaf({2, 4, 3, 3}, rng), w = rand_leaf({5, 4}, rng), b = rand_leaf({5}, rng);
                     auto r = TensorD::randn({2, 5, 3, 3}, rng);
                     in = {x, w, b};
                     f = [=] { return project(conv1x1(x, w, b), r); };
                   }});
  cases.push_back({"conv2d", [](std::mt19937_64& rng, std::vector<VarD>& in, std::function<VarD()>& f) {
                     VarD x = rand_leaf({2, 3, 4, 4}, rng), w = rand_leaf({2, 3, 3, 3}, rng), b = rand_leaf({2}, rng);
                     auto r = TensorD::randn({2, 2, 4, 4}, rng);
                     in = {x, w, b};
                     f = [=] { return project(conv2d(x, w, b, 1), r); };
                   }});
  cases.push_back({"batch_norm_train", [](std::mt19937_64& rng, std::vector<VarD>& in, std::function<VarD()>& f) {
                     VarD x = rand_leaf({3, 2, 2, 2}, rng), g = rand_leaf({2}, rng), b = rand_leaf({2}, rng);
                     auto r = TensorD::randn({3, 2, 2, 2}, rng);
                     auto rm = std::make_shared<TensorD>(Shape{2}, 0.0);
                     auto rv = std::make_shared<TensorD>(Shape{2}, 1.0);
                     in = {x, g, b};
                     f = [=] { return project(batch_norm(x, g, b, *rm, *rv, true), r); };
                   }});
  cases.push_back({"batch_norm_eval", [](std::mt19937_64& rng, std::vector<VarD>& in, std::function<VarD()>& f) {
                     VarD x = rand_leaf({3, 2, 2, 2}, rng), g = rand_leaf({2}, rng), b = rand_leaf({2}, rng);
                     auto r = TensorD::randn({3, 2, 2, 2}, rng);
                     auto rm = std::make_shared<TensorD>(TensorD::randn({2}, rng));
                     auto rv = std::make_shared<TensorD>(Shape{2}, 1.7);
                     in = {x, g, b};
                     f = [=] { return project(batch_norm(x, g, b, *rm, *rv, false), r); };
                   }});
  cases.push_back({"giou_loss", [](std::mt19937_64& rng, std::vector<VarD>& in, std::function<VarD()>& f) {
                     // Boxes with positive sides in a 2x2 frame, overlapping or not.
                     std::uniform_real_distribution<double> c(0.2, 1.8), s(0.2, 0.8);
                     TensorD p(Shape{3, 4}), g(Shape{3, 4});
                     for (int64_t i = 0; i < 3; ++i) {
                       p.at({i, 0}) = c(rng), p.at({i, 1}) = c(rng), p.at({i, 2}) = s(rng), p.at({i, 3}) = s(rng);
                       g.at({i, 0}) = c(rng), g.at({i, 1}) = c(rng), g.at({i, 2}) = s(rng), g.at({i, 3}) = s(rng);
                     }
                     VarD x = leaf(p);
                     in = {x};
                     f = [=] { return loss::giou_loss(x, g); };
                   }});
  cases.push_back({"l1_loss", [](std::mt19937_64& rng, std::vector<VarD>& in, std::function<VarD()>& f) {
                     VarD x = rand_leaf({3, 4}, rng);
                     // Offset targets keep every residual well away from the kink at zero.
                     TensorD g = x.value();
                     std::uniform_real_distribution<double> d(0.1, 0.5);
                     for (auto& v : g.data()) v += (rng() & 1 ? 1 : -1) * d(rng);
                     in = {x};
                     f = [=] { return loss::l1_loss(x, g); };
                   }});
  cases.push_back({"focal_loss", [](std::mt19937_64& rng, std::vector<VarD>& in, std::function<VarD()>& f) {
                     const TensorD gt = loss::gaussian_target_map<double>({0.4, 0.6, 0.3, 0.3}, 4).reshaped({1, 1, 4, 4});
                     std::uniform_real_distribution<double> u(0.1, 0.9);
                     TensorD p(Shape{1, 1, 4, 4});
                     for (auto& v : p.data()) v = u(rng);
                     VarD x = leaf(p);
                     in = {x};
                     f = [=] { return loss::weighted_focal(x, gt); };
                   }});
  return cases;
}

GradCheckResult total_loss_gradcheck(uint64_t seed) {
  model::ModelConfig cfg;
  cfg.backbone.patch_size = 4;
  cfg.backbone.token_dim = 16;
  cfg.backbone.depth = 2;
  cfg.backbone.num_heads = 2;
  cfg.backbone.template_side = 8;
  cfg.backbone.search_side = 16;
  cfg.sti_layers = {2};
  model::TATrackModel<double> m(cfg);
  m.init(seed);
  m.init_prompt_params(seed + 1);
  m.freeze_base();
  std::mt19937_64 rng(seed * 1000003 + 7);
  auto pair = [&](int64_t side) {
    return model::ImagePair<double>{constant(TensorD::randn(Shape{2, 3, side, side}, rng)),
                                    constant(TensorD::randn(Shape{2, 3, side, side}, rng))};
  };
  const auto zi = pair(8), zo = pair(8), x = pair(16);
  std::uniform_real_distribution<double> c(0.25, 0.75), s(0.15, 0.4);
  const std::vector<BBox> gt{{c(rng), c(rng), s(rng), s(rng)}, {c(rng), c(rng), s(rng), s(rng)}};
  std::vector<VarD> wrt;
  std::vector<std::string> names;
  for (auto* p : m.prompt_parameters()) {
    if (!p->trainable()) continue;
    wrt.push_back(p->var());
    names.push_back(p->name());
  }
  auto loss = [&] { return loss::tracking_loss(m.dual_forward(zi, zo, x, true), gt).total; };
  // 12 sampled coordinates per tensor keep the run short. The fusion conv
  // bias feeds a training-mode batch norm, so its true gradient is zero; the
  // 1e-6 floor keeps that input from dividing rounding noise by zero.
  return gradcheck(loss, wrt, names, 1e-5, 12, seed, 1e-6);
}

GradCheckSummary run_gradcheck_suite(int seeds, std::ostream* log) {
  GradCheckSummary s;
  s.seeds = seeds;
  const auto cases = op_gradcheck_cases();
  for (const auto& c : cases) {
    double worst = 0;
    for (int seed = 0; seed < seeds; ++seed) {
      std::mt19937_64 rng(static_cast<uint64_t>(seed) * 7919 + 17);
      std::vector<VarD> in;
      std::function<VarD()> f;
      c.build(rng, in, f);
      worst = std::max(worst, gradcheck(f, in).max_rel_error);
    }
    if (log) *log << "op " << c.name << " max_rel_error=" << worst << "\n";
    if (worst >= s.worst_op_error) {
      s.worst_op_error = worst;
      s.worst_op = c.name;
    }
  }
  for (int seed = 0; seed < seeds; ++seed) {
    const auto r = total_loss_gradcheck(static_cast<uint64_t>(seed) + 1);
    if (log) *log << "total_loss seed=" << seed + 1 << " max_rel_error=" << r.max_rel_error << " worst=" << r.worst_input << "\n";
    if (r.max_rel_error >= s.worst_model_error) {
      s.worst_model_error = r.max_rel_error;
      s.worst_model_input = r.worst_input;
    }
  }
  return s;
}

}  // namespace tatrack::train
