#include "otcg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "otcg/errors.hpp"

namespace otcg::ad {

namespace {

thread_local bool g_grad_enabled = true;
// Nodes on a path to one of the requested inputs during the current grad().
thread_local const std::unordered_set<Node*>* g_needed = nullptr;

bool wants(const Var& v) { return v.requires_grad() && (!g_needed || g_needed->count(v.node()) != 0); }

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(g_grad_enabled) { g_grad_enabled = enabled; }
  ~GradModeGuard() { g_grad_enabled = previous_; }

 private:
  bool previous_;
};

Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out;
  int* dims[] = {&out.n, &out.c, &out.h, &out.w};
  for (int i = 0; i < 4; ++i) {
    const int x = a[i], y = b[i];
    if (x != y && x != 1 && y != 1)
      throw DimensionError("cannot broadcast " + a.str() + " with " + b.str());
    *dims[i] = x == 1 ? y : x;
  }
  return out;
}

bool reducible(const Shape& from, const Shape& to) {
  for (int i = 0; i < 4; ++i)
    if (to[i] != from[i] && to[i] != 1) return false;
  return true;
}

Tensor expand_tensor(const Tensor& a, const Shape& to) {
  const Shape s = a.shape();
  if (!reducible(to, s)) throw DimensionError("cannot expand " + s.str() + " to " + to.str());
  Tensor out(to);
  std::size_t k = 0;
  for (int n = 0; n < to.n; ++n)
    for (int c = 0; c < to.c; ++c)
      for (int h = 0; h < to.h; ++h)
        for (int w = 0; w < to.w; ++w)
          out[k++] = a.at(s.n == 1 ? 0 : n, s.c == 1 ? 0 : c, s.h == 1 ? 0 : h, s.w == 1 ? 0 : w);
  return out;
}

Tensor reduce_tensor(const Tensor& a, const Shape& to) {
  const Shape s = a.shape();
  if (!reducible(s, to)) throw DimensionError("cannot reduce " + s.str() + " to " + to.str());
  Tensor out(to);
  std::size_t k = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w)
          out.at(to.n == 1 ? 0 : n, to.c == 1 ? 0 : c, to.h == 1 ? 0 : h, to.w == 1 ? 0 : w) += a[k++];
  return out;
}

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i]);
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
  return out;
}

// Brings both operands to a common shape through differentiable expands.
std::pair<Var, Var> broadcast_pair(const Var& a, const Var& b) {
  if (a.shape() == b.shape()) return {a, b};
  const Shape s = broadcast_shape(a.shape(), b.shape());
  return {expand(a, s), expand(b, s)};
}

Var maybe_add(const Var& acc, const Var& g) { return acc.defined() ? add(acc, g) : g; }

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

const Tensor& Var::value() const {
  if (!node_) throw Error("access to undefined Var");
  return node_->value;
}

Tensor& Var::mutable_value() {
  if (!node_) throw Error("access to undefined Var");
  if (!node_->parents.empty()) throw Error("mutable_value() on a non-leaf Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Var make_op(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(value);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents = std::move(parents);
  out.node_->backward = std::move(backward);
  return out;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs, bool create_graph,
                      const Var& seed) {
  std::vector<Var> result;
  result.reserve(inputs.size());
  if (!output.requires_grad()) {
    for (const auto& in : inputs) result.push_back(constant(Tensor(in.shape())));
    return result;
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_map<Node*, bool> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{output.node(), 0}};
  visited[output.node()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].node();
      if (p->requires_grad && !visited[p]) {
        visited[p] = true;
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Prune branches that cannot reach a requested input.
  std::unordered_set<Node*> needed;
  for (const auto& in : inputs)
    if (in.defined()) needed.insert(in.node());
  for (Node* node : order)
    for (const auto& p : node->parents)
      if (needed.count(p.node())) {
        needed.insert(node);
        break;
      }
  struct NeededScope {
    const std::unordered_set<Node*>* previous;
    explicit NeededScope(const std::unordered_set<Node*>* s) : previous(g_needed) { g_needed = s; }
    ~NeededScope() { g_needed = previous; }
  } scope(&needed);

  GradModeGuard mode(create_graph);
  std::unordered_map<Node*, Var> grads;
  if (seed.defined()) {
    require_same_shape(seed.shape(), output.shape(), "grad seed");
    grads[output.node()] = seed;
  } else {
    grads[output.node()] = constant(Tensor(output.shape(), 1.0));
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto g = grads.find(node);
    if (g == grads.end() || !node->backward || !needed.count(node)) continue;
    std::vector<Var> pg = node->backward(g->second);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const Var& p = node->parents[i];
      if (!wants(p) || i >= pg.size() || !pg[i].defined()) continue;
      Var& slot = grads[p.node()];
      slot = maybe_add(slot, pg[i]);
    }
  }

  for (const auto& in : inputs) {
    auto g = grads.find(in.node());
    result.push_back(g != grads.end() ? g->second : constant(Tensor(in.shape())));
  }
  return result;
}

Var constant(Tensor t) { return Var(std::move(t), false); }
Var constant_like(const Shape& s, double v) { return constant(Tensor(s, v)); }

Var add(const Var& a0, const Var& b0) {
  auto [a, b] = broadcast_pair(a0, b0);
  return make_op(map_binary(a.value(), b.value(), [](double x, double y) { return x + y; }), {a, b},
                 [](const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a0, const Var& b0) {
  auto [a, b] = broadcast_pair(a0, b0);
  return make_op(map_binary(a.value(), b.value(), [](double x, double y) { return x - y; }), {a, b},
                 [](const Var& g) { return std::vector<Var>{g, neg(g)}; });
}

Var mul(const Var& a0, const Var& b0) {
  auto [a, b] = broadcast_pair(a0, b0);
  return make_op(map_binary(a.value(), b.value(), [](double x, double y) { return x * y; }), {a, b},
                 [a, b](const Var& g) {
                   return std::vector<Var>{wants(a) ? mul(g, b) : Var{},
                                           wants(b) ? mul(g, a) : Var{}};
                 });
}

Var div(const Var& a0, const Var& b0) {
  auto [a, b] = broadcast_pair(a0, b0);
  return make_op(map_binary(a.value(), b.value(), [](double x, double y) { return x / y; }), {a, b},
                 [a, b](const Var& g) {
                   return std::vector<Var>{
                       wants(a) ? div(g, b) : Var{},
                       wants(b) ? neg(div(mul(g, a), mul(b, b))) : Var{}};
                 });
}

Var neg(const Var& a) {
  return make_op(map_unary(a.value(), [](double x) { return -x; }), {a},
                 [](const Var& g) { return std::vector<Var>{neg(g)}; });
}

Var scale(const Var& a, double s) {
  return make_op(map_unary(a.value(), [s](double x) { return s * x; }), {a},
                 [s](const Var& g) { return std::vector<Var>{scale(g, s)}; });
}

Var add_scalar(const Var& a, double s) {
  return make_op(map_unary(a.value(), [s](double x) { return x + s; }), {a},
                 [](const Var& g) { return std::vector<Var>{g}; });
}

Var square(const Var& a) { return mul(a, a); }

Var sqrt(const Var& a) {
  return make_op(map_unary(a.value(), [](double x) { return std::sqrt(x); }), {a},
                 [a](const Var& g) { return std::vector<Var>{div(scale(g, 0.5), sqrt(a))}; });
}

Var log(const Var& a) {
  return make_op(map_unary(a.value(), [](double x) { return std::log(x); }), {a},
                 [a](const Var& g) { return std::vector<Var>{div(g, a)}; });
}

Var abs(const Var& a) {
  return make_op(map_unary(a.value(), [](double x) { return std::abs(x); }), {a},
                 [a](const Var& g) {
                   Tensor sign = map_unary(a.value(), [](double x) { return (x > 0) - (x < 0) + 0.0; });
                   return std::vector<Var>{mul(g, constant(std::move(sign)))};
                 });
}

Var sigmoid(const Var& a) {
  return make_op(map_unary(a.value(), [](double x) { return 1.0 / (1.0 + std::exp(-x)); }), {a},
                 [a](const Var& g) {
                   Var s = sigmoid(a);
                   return std::vector<Var>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
                 });
}

Var leaky_relu(const Var& a, double slope) {
  return make_op(map_unary(a.value(), [slope](double x) { return x > 0 ? x : slope * x; }), {a},
                 [a, slope](const Var& g) {
                   Tensor m = map_unary(a.value(), [slope](double x) { return x > 0 ? 1.0 : slope; });
                   return std::vector<Var>{mul(g, constant(std::move(m)))};
                 });
}

Var clamp(const Var& a, double lo, double hi) {
  return make_op(map_unary(a.value(), [lo, hi](double x) { return x < lo ? lo : x > hi ? hi : x; }),
                 {a}, [a, lo, hi](const Var& g) {
                   Tensor m = map_unary(a.value(),
                                        [lo, hi](double x) { return (x < lo || x > hi) ? 0.0 : 1.0; });
                   return std::vector<Var>{mul(g, constant(std::move(m)))};
                 });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }

Var expand(const Var& a, const Shape& to) {
  if (a.shape() == to) return a;
  const Shape from = a.shape();
  return make_op(expand_tensor(a.value(), to), {a},
                 [from](const Var& g) { return std::vector<Var>{reduce_to(g, from)}; });
}

Var reduce_to(const Var& a, const Shape& to) {
  if (a.shape() == to) return a;
  const Shape from = a.shape();
  return make_op(reduce_tensor(a.value(), to), {a},
                 [from](const Var& g) { return std::vector<Var>{expand(g, from)}; });
}

Var sum(const Var& a) { return reduce_to(a, Shape{}); }
Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_per_sample(const Var& a) { return reduce_to(a, Shape{a.shape().n, 1, 1, 1}); }
Var mean_per_sample(const Var& a) {
  return scale(sum_per_sample(a), 1.0 / static_cast<double>(a.shape().sample()));
}

Var reshape(const Var& a, const Shape& to) {
  if (a.shape() == to) return a;
  const Shape from = a.shape();
  return make_op(a.value().reshaped(to), {a},
                 [from](const Var& g) { return std::vector<Var>{reshape(g, from)}; });
}

Var conv2d(const Var& x, const Var& w, kernels::ConvGeometry geo) {
  return make_op(kernels::conv2d(x.value(), w.value(), geo), {x, w}, [x, w, geo](const Var& g) {
    const Shape xs = x.shape(), ws = w.shape();
    return std::vector<Var>{
        wants(x) ? conv2d_transpose(g, w, geo, xs.h, xs.w) : Var{},
        wants(w) ? conv2d_weight_grad(x, g, geo, ws.h, ws.w) : Var{}};
  });
}

Var conv2d_transpose(const Var& gy, const Var& w, kernels::ConvGeometry geo, int out_h, int out_w) {
  return make_op(kernels::conv2d_input_grad(gy.value(), w.value(), geo, out_h, out_w), {gy, w},
                 [gy, w, geo](const Var& u) {
                   const Shape ws = w.shape();
                   return std::vector<Var>{
                       wants(gy) ? conv2d(u, w, geo) : Var{},
                       wants(w) ? conv2d_weight_grad(u, gy, geo, ws.h, ws.w) : Var{}};
                 });
}

Var conv2d_weight_grad(const Var& x, const Var& gy, kernels::ConvGeometry geo, int kh, int kw) {
  return make_op(kernels::conv2d_weight_grad(x.value(), gy.value(), geo, kh, kw), {x, gy},
                 [x, gy, geo](const Var& v) {
                   const Shape xs = x.shape();
                   return std::vector<Var>{
                       wants(x) ? conv2d_transpose(gy, v, geo, xs.h, xs.w) : Var{},
                       wants(gy) ? conv2d(x, v, geo) : Var{}};
                 });
}

Var avg_pool2(const Var& x) {
  return make_op(kernels::avg_pool2(x.value()), {x},
                 [](const Var& g) { return std::vector<Var>{scale(upsample2(g), 0.25)}; });
}

Var upsample2(const Var& x) {
  return make_op(kernels::upsample2(x.value()), {x},
                 [](const Var& g) { return std::vector<Var>{scale(avg_pool2(g), 4.0)}; });
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw DimensionError("concat_channels: " + sa.str() + " vs " + sb.str());
  Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().data() + sa.sample() * n, sa.sample(), out.data() + out.shape().sample() * n);
    std::copy_n(b.value().data() + sb.sample() * n, sb.sample(),
                out.data() + out.shape().sample() * n + sa.sample());
  }
  const int ca = sa.c, cb = sb.c;
  return make_op(std::move(out), {a, b}, [ca, cb](const Var& g) {
    return std::vector<Var>{slice_channels(g, 0, ca), slice_channels(g, ca, cb)};
  });
}

Var slice_channels(const Var& x, int start, int count) {
  const Shape s = x.shape();
  if (start < 0 || count < 0 || start + count > s.c)
    throw DimensionError("slice_channels out of range for " + s.str());
  if (start == 0 && count == s.c) return x;
  Tensor out(Shape{s.n, count, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    std::copy_n(x.value().data() + s.sample() * n + s.plane() * start, s.plane() * count,
                out.data() + out.shape().sample() * n);
  const int total = s.c;
  return make_op(std::move(out), {x}, [start, total](const Var& g) {
    return std::vector<Var>{embed_channels(g, start, total)};
  });
}

Var embed_channels(const Var& x, int start, int total) {
  const Shape s = x.shape();
  if (start < 0 || start + s.c > total) throw DimensionError("embed_channels out of range");
  if (start == 0 && s.c == total) return x;
  Tensor out(Shape{s.n, total, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    std::copy_n(x.value().data() + s.sample() * n, s.sample(),
                out.data() + out.shape().sample() * n + s.plane() * start);
  const int count = s.c;
  return make_op(std::move(out), {x}, [start, count](const Var& g) {
    return std::vector<Var>{slice_channels(g, start, count)};
  });
}

Var gather(const Var& x, std::shared_ptr<const kernels::PlaneMap> m) {
  return make_op(kernels::gather_planes(x.value(), *m), {x},
                 [m](const Var& g) { return std::vector<Var>{scatter_add(g, m)}; });
}

Var scatter_add(const Var& x, std::shared_ptr<const kernels::PlaneMap> m) {
  return make_op(kernels::scatter_add_planes(x.value(), *m), {x},
                 [m](const Var& g) { return std::vector<Var>{gather(g, m)}; });
}

}  // namespace otcg::ad
