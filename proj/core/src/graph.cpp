#include "gograd/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace gograd {

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw std::invalid_argument("graph: " + what);
}

int family_arity(Family f, int declared_slots) {
  switch (f) {
    case Family::kDelta:
    case Family::kBernoulli:
    case Family::kExponential:
    case Family::kPoisson:
    case Family::kGeometric:
      return 1;
    case Family::kNormal:
    case Family::kLogNormal:
    case Family::kGamma:
    case Family::kBeta:
    case Family::kWeibull:
    case Family::kLaplace:
    case Family::kNegativeBinomial:
      return 2;
    case Family::kCategorical:
      // Arity equals the alphabet size; taken from the declared transforms.
      return declared_slots;
  }
  fail("unknown family");
}

bool family_continuous(Family f) {
  switch (f) {
    case Family::kBernoulli:
    case Family::kPoisson:
    case Family::kGeometric:
    case Family::kNegativeBinomial:
    case Family::kCategorical:
      return false;
    default:
      return true;
  }
}

}  // namespace

StochasticGraph::StochasticGraph(std::vector<NodeSpec> nodes) {
  if (nodes.empty()) fail("empty node list");

  std::map<std::string, int> raw_index;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.id.empty()) fail("node with empty id");
    if (raw_index.count(n.id)) fail("duplicate node id '" + n.id + "'");
    raw_index[n.id] = static_cast<int>(i);
    if (n.dim < 1) fail("node '" + n.id + "' needs dim >= 1");
    const int arity =
        family_arity(n.family, static_cast<int>(n.param_transforms.size()));
    if (static_cast<int>(n.param_transforms.size()) != arity) {
      fail("node '" + n.id + "': " + family_name(n.family) + " expects " +
           std::to_string(arity) + " parameter transform(s)");
    }
    if (n.family == Family::kCategorical && arity < 2) {
      fail("node '" + n.id + "': categorical needs >= 2 states");
    }
    if (n.role == NodeRole::kInternal && !family_continuous(n.family)) {
      fail("node '" + n.id + "': discrete families are only allowed at "
           "leaves (internal variables must be continuous)");
    }
  }

  // Validate parent references and input dimensions.
  for (const auto& n : nodes) {
    int in_dim = 0;
    for (const auto& p : n.parents) {
      auto it = raw_index.find(p);
      if (it == raw_index.end()) {
        fail("node '" + n.id + "' references unknown parent '" + p + "'");
      }
      in_dim += nodes[static_cast<size_t>(it->second)].dim;
    }
    for (size_t k = 0; k < n.param_transforms.size(); ++k) {
      const auto& t = n.param_transforms[k];
      if (t.in_dim() != in_dim) {
        fail("node '" + n.id + "' transform " + std::to_string(k) +
             ": input dim " + std::to_string(t.in_dim()) +
             " does not match concatenated parent dim " +
             std::to_string(in_dim));
      }
      if (t.out_dim() != n.dim) {
        fail("node '" + n.id + "' transform " + std::to_string(k) +
             ": output dim " + std::to_string(t.out_dim()) +
             " does not match node dim " + std::to_string(n.dim));
      }
    }
  }

  // Kahn topological sort; rejects cycles.
  std::vector<int> indegree(nodes.size(), 0);
  std::vector<std::vector<int>> children(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& p : nodes[i].parents) {
      children[static_cast<size_t>(raw_index[p])].push_back(
          static_cast<int>(i));
      ++indegree[i];
    }
  }
  std::vector<int> order;
  std::vector<int> ready;
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (indegree[i] == 0) ready.push_back(static_cast<int>(i));
  }
  while (!ready.empty()) {
    std::sort(ready.begin(), ready.end());
    const int cur = ready.front();
    ready.erase(ready.begin());
    order.push_back(cur);
    for (int c : children[static_cast<size_t>(cur)]) {
      if (--indegree[static_cast<size_t>(c)] == 0) ready.push_back(c);
    }
  }
  if (order.size() != nodes.size()) fail("graph contains a cycle");

  for (int idx : order) nodes_.push_back(std::move(nodes[static_cast<size_t>(idx)]));
  for (size_t i = 0; i < nodes_.size(); ++i) {
    index_by_id_[nodes_[i].id] = static_cast<int>(i);
  }

  // Internal nodes need at least one child.
  std::vector<bool> has_child(nodes_.size(), false);
  for (const auto& n : nodes_) {
    for (const auto& p : n.parents) {
      has_child[static_cast<size_t>(index_by_id_[p])] = true;
    }
  }
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].role == NodeRole::kInternal && !has_child[i]) {
      fail("internal node '" + nodes_[i].id + "' has no children");
    }
    if (nodes_[i].role == NodeRole::kLeaf && has_child[i]) {
      fail("leaf node '" + nodes_[i].id + "' has children");
    }
  }

  // Flat weight layout: per node (topological order), per parameter slot.
  slice_index_.resize(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) {
    for (size_t k = 0; k < nodes_[i].param_transforms.size(); ++k) {
      Slice s;
      s.node = nodes_[i].id;
      s.param_slot = static_cast<int>(k);
      s.offset = weight_count_;
      s.count = nodes_[i].param_transforms[k].weight_count();
      weight_count_ += s.count;
      slice_index_[i].push_back(static_cast<int>(slices_.size()));
      slices_.push_back(std::move(s));
    }
  }
}

const StochasticGraph::Slice& StochasticGraph::slice(std::string_view node_id,
                                                     int param_slot) const {
  auto it = index_by_id_.find(std::string(node_id));
  if (it == index_by_id_.end()) {
    fail("unknown node '" + std::string(node_id) + "'");
  }
  const auto& per_node = slice_index_[static_cast<size_t>(it->second)];
  if (param_slot < 0 || param_slot >= static_cast<int>(per_node.size())) {
    fail("parameter slot out of range");
  }
  return slices_[static_cast<size_t>(per_node[static_cast<size_t>(param_slot)])];
}

bool StochasticGraph::is_chain() const {
  int leaves = 0;
  for (const auto& n : nodes_) {
    if (n.parents.size() > 1) return false;
    if (n.role == NodeRole::kLeaf) ++leaves;
  }
  return leaves == 1;
}

std::vector<double> StochasticGraph::init_weights(RngStream& rng) const {
  std::vector<double> w(static_cast<size_t>(weight_count_), 0.0);
  // Affine weights get small normal noise; biases and scale weights start
  // at zero (softplus(0) keeps positive-link parameters in-domain).
  size_t si = 0;
  for (const auto& n : nodes_) {
    for (const auto& t : n.param_transforms) {
      const auto& sl = slices_[si++];
      int pos = sl.offset;
      int dim = t.in_dim();
      for (const auto& stage : t.stages()) {
        if (stage.op == StageOp::kAffine) {
          for (int i = 0; i < stage.out_dim * dim; ++i) {
            w[static_cast<size_t>(pos++)] = 0.1 * rng.normal();
          }
          pos += stage.out_dim;  // biases stay 0
          dim = stage.out_dim;
        } else if (stage.op == StageOp::kScalePositive) {
          pos += dim;  // scale weights stay 0
        }
      }
    }
  }
  return w;
}

std::vector<double> StochasticGraph::gather_parents(const NodeSpec& node,
                                                    const Assignment& a) const {
  std::vector<double> in;
  for (const auto& p : node.parents) {
    auto it = a.find(p);
    if (it == a.end()) fail("assignment missing node '" + p + "'");
    in.insert(in.end(), it->second.begin(), it->second.end());
  }
  return in;
}

std::vector<std::vector<double>> StochasticGraph::node_param_blocks(
    const NodeSpec& node, std::span<const double> weights, const Assignment& a,
    std::vector<ParamTransform::Trace>* traces) const {
  const auto in = gather_parents(node, a);
  std::vector<std::vector<double>> blocks;
  if (traces) traces->resize(node.param_transforms.size());
  const auto& per_node =
      slice_index_[static_cast<size_t>(index_by_id_.at(node.id))];
  for (size_t k = 0; k < node.param_transforms.size(); ++k) {
    const auto& sl = slices_[static_cast<size_t>(per_node[k])];
    auto wslice = weights.subspan(static_cast<size_t>(sl.offset),
                                  static_cast<size_t>(sl.count));
    blocks.push_back(node.param_transforms[k].forward(
        in, wslice, traces ? &(*traces)[k] : nullptr));
  }
  return blocks;
}

StochasticGraph::Assignment StochasticGraph::forward_sample(
    std::span<const double> weights, RngStream& rng) const {
  if (static_cast<int>(weights.size()) != weight_count_) {
    fail("forward_sample: weight vector size mismatch");
  }
  Assignment a;
  for (const auto& n : nodes_) {
    const auto blocks = node_param_blocks(n, weights, a, nullptr);
    std::vector<double> value(static_cast<size_t>(n.dim), 0.0);
    if (n.family == Family::kDelta) {
      value = blocks[0];
    } else {
      for (int j = 0; j < n.dim; ++j) {
        std::vector<double> params;
        params.reserve(blocks.size());
        for (const auto& b : blocks) params.push_back(b[static_cast<size_t>(j)]);
        try {
          value[static_cast<size_t>(j)] =
              Distribution::make(n.family, std::move(params)).sample(rng);
        } catch (const std::invalid_argument& e) {
          throw std::domain_error("graph: parameter-domain violation at node '" +
                                  n.id + "' coordinate " + std::to_string(j) +
                                  " (transform bug): " + e.what());
        }
      }
    }
    a[n.id] = std::move(value);
  }
  return a;
}

std::vector<double> StochasticGraph::statistical_backprop(
    std::span<const double> weights, const Assignment& assignment,
    const std::map<std::string, std::vector<double>>& leaf_d) const {
  if (static_cast<int>(weights.size()) != weight_count_) {
    fail("statistical_backprop: weight vector size mismatch");
  }
  for (const auto& [id, d] : leaf_d) {
    auto it = index_by_id_.find(id);
    if (it == index_by_id_.end()) {
      fail("statistical_backprop: leaf_d references unknown node '" + id + "'");
    }
    if (static_cast<int>(d.size()) !=
        nodes_[static_cast<size_t>(it->second)].dim) {
      fail("statistical_backprop: leaf_d dimension mismatch at '" + id + "'");
    }
  }

  std::vector<double> grad(static_cast<size_t>(weight_count_), 0.0);
  std::vector<std::vector<double>> bp(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) {
    bp[i].assign(static_cast<size_t>(nodes_[i].dim), 0.0);
  }

  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    const auto& n = nodes_[static_cast<size_t>(i)];
    auto value_it = assignment.find(n.id);
    if (value_it == assignment.end()) {
      fail("statistical_backprop: assignment missing node '" + n.id + "'");
    }
    const auto& value = value_it->second;

    if (auto it = leaf_d.find(n.id); it != leaf_d.end()) {
      for (int j = 0; j < n.dim; ++j) {
        bp[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
            it->second[static_cast<size_t>(j)];
      }
    } else if (n.role == NodeRole::kLeaf) {
      fail("statistical_backprop: missing leaf_d entry for leaf '" + n.id +
           "'");
    }

    std::vector<ParamTransform::Trace> traces;
    const auto blocks = node_param_blocks(n, weights, assignment, &traces);

    // Parameter-space sensitivity per slot: s_k[j] = nabla_jk * BP[j].
    std::vector<std::vector<double>> s(
        blocks.size(), std::vector<double>(static_cast<size_t>(n.dim), 0.0));
    if (n.family == Family::kDelta) {
      s[0] = bp[static_cast<size_t>(i)];
    } else {
      for (int j = 0; j < n.dim; ++j) {
        const double bpj = bp[static_cast<size_t>(i)][static_cast<size_t>(j)];
        if (bpj == 0.0) continue;
        std::vector<double> params;
        params.reserve(blocks.size());
        for (const auto& b : blocks) params.push_back(b[static_cast<size_t>(j)]);
        const auto dist = Distribution::make(n.family, std::move(params));
        const auto nabla = dist.variable_nabla(value[static_cast<size_t>(j)]);
        for (size_t k = 0; k < nabla.size(); ++k) {
          s[k][static_cast<size_t>(j)] = nabla[k] * bpj;
        }
      }
    }

    // Chain through the transforms: weights via J_w^T s, parents via
    // J_in^T s scattered across the concatenated parent segments.
    std::vector<double> in_grad;
    const size_t in_dim =
        n.param_transforms.empty()
            ? 0
            : static_cast<size_t>(n.param_transforms[0].in_dim());
    in_grad.assign(in_dim, 0.0);
    const auto& per_node = slice_index_[static_cast<size_t>(i)];
    for (size_t k = 0; k < n.param_transforms.size(); ++k) {
      const auto& sl = slices_[static_cast<size_t>(per_node[k])];
      auto wslice = weights.subspan(static_cast<size_t>(sl.offset),
                                    static_cast<size_t>(sl.count));
      auto gslice = std::span<double>(grad).subspan(
          static_cast<size_t>(sl.offset), static_cast<size_t>(sl.count));
      n.param_transforms[k].vjp(traces[k], wslice, s[k], in_grad, gslice);
    }
    size_t pos = 0;
    for (const auto& p : n.parents) {
      const int pi = index_by_id_.at(p);
      const int pdim = nodes_[static_cast<size_t>(pi)].dim;
      for (int j = 0; j < pdim; ++j) {
        bp[static_cast<size_t>(pi)][static_cast<size_t>(j)] += in_grad[pos++];
      }
    }
  }
  return grad;
}

GradientEstimate deep_go_gradient(const StochasticGraph& graph,
                                  const IntegrandSpec& f, long n,
                                  std::span<const double> weights,
                                  RngStream& rng) {
  if (n < 1) fail("deep_go_gradient: sample count must be >= 1");
  if (!graph.is_chain()) {
    fail("deep_go_gradient: graph is not a simple chain");
  }
  if (!f.eval) fail("deep_go_gradient: missing f.eval");

  const NodeSpec* leaf = nullptr;
  for (const auto& node : graph.nodes()) {
    if (node.role == NodeRole::kLeaf) leaf = &node;
  }
  const bool discrete_leaf = !family_continuous(leaf->family);

  GradientEstimate est;
  est.estimator = "deep_go";
  est.n_samples = n;
  est.per_param.assign(static_cast<size_t>(graph.weight_count()), 0.0);

  for (long i = 0; i < n; ++i) {
    const auto a = graph.forward_sample(weights, rng);
    const auto& y = a.at(leaf->id);
    std::vector<double> d(static_cast<size_t>(leaf->dim), 0.0);
    if (!discrete_leaf) {
      if (!f.grad) fail("deep_go_gradient: continuous leaf requires f.grad");
      d = f.grad(y);
    } else {
      const double base = f.eval(y);
      std::vector<double> shifted(y.begin(), y.end());
      const bool finite_alphabet =
          leaf->family == Family::kBernoulli ||
          leaf->family == Family::kCategorical;
      const double top =
          leaf->family == Family::kBernoulli
              ? 1.0
              : static_cast<double>(leaf->param_transforms.size()) - 1.0;
      for (int j = 0; j < leaf->dim; ++j) {
        if (finite_alphabet && y[static_cast<size_t>(j)] >= top) {
          d[static_cast<size_t>(j)] = 0.0;  // nabla vanishes at the top state
          continue;
        }
        shifted[static_cast<size_t>(j)] += 1.0;
        d[static_cast<size_t>(j)] = f.eval(shifted) - base;
        shifted[static_cast<size_t>(j)] = y[static_cast<size_t>(j)];
      }
    }
    const auto g = graph.statistical_backprop(weights, a, {{leaf->id, d}});
    for (size_t k = 0; k < g.size(); ++k) est.per_param[k] += g[k];
  }
  for (double& g : est.per_param) g /= static_cast<double>(n);
  return est;
}

namespace {

ParamTransform transform_from_json(const nlohmann::json& stages_json,
                                   int in_dim) {
  std::vector<Stage> stages;
  for (const auto& sj : stages_json) {
    Stage s;
    s.op = stage_op_from_name(sj.at("op").get<std::string>());
    if (s.op == StageOp::kAffine) s.out_dim = sj.at("out").get<int>();
    stages.push_back(s);
  }
  return ParamTransform(in_dim, std::move(stages));
}

}  // namespace

StochasticGraph StochasticGraph::from_json(std::string_view text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
    fail("json document must contain a 'nodes' array");
  }

  // First pass: dims, so parent input widths can be resolved in any order.
  std::map<std::string, int> dim_of;
  for (const auto& nj : doc["nodes"]) {
    dim_of[nj.at("id").get<std::string>()] =
        nj.contains("dim") ? nj.at("dim").get<int>() : 1;
  }

  std::vector<NodeSpec> nodes;
  for (const auto& nj : doc["nodes"]) {
    NodeSpec n;
    n.id = nj.at("id").get<std::string>();
    n.family = family_from_name(nj.at("family").get<std::string>());
    n.dim = nj.contains("dim") ? nj.at("dim").get<int>() : 1;
    if (nj.contains("parents")) {
      n.parents = nj.at("parents").get<std::vector<std::string>>();
    }
    const std::string role = nj.at("role").get<std::string>();
    if (role == "internal") {
      n.role = NodeRole::kInternal;
    } else if (role == "leaf") {
      n.role = NodeRole::kLeaf;
    } else {
      fail("node '" + n.id + "': role must be 'internal' or 'leaf'");
    }
    int in_dim = 0;
    for (const auto& p : n.parents) {
      auto it = dim_of.find(p);
      if (it == dim_of.end()) {
        fail("node '" + n.id + "' references unknown parent '" + p + "'");
      }
      in_dim += it->second;
    }
    const auto& tj = nj.at("transform");
    if (!tj.is_array() || tj.empty()) {
      fail("node '" + n.id + "': transform must be a nonempty array");
    }
    if (tj.front().is_array()) {
      // Nested form: one stage list per parameter slot.
      for (const auto& slot : tj) {
        n.param_transforms.push_back(transform_from_json(slot, in_dim));
      }
    } else {
      // Flat form: a single composition (single-parameter families).
      n.param_transforms.push_back(transform_from_json(tj, in_dim));
    }
    nodes.push_back(std::move(n));
  }
  return StochasticGraph(std::move(nodes));
}

std::string StochasticGraph::manifest_json() const {
  nlohmann::json j;
  j["total"] = weight_count_;
  j["slices"] = nlohmann::json::array();
  for (const auto& s : slices_) {
    j["slices"].push_back({{"node", s.node},
                           {"param_slot", s.param_slot},
                           {"offset", s.offset},
                           {"count", s.count}});
  }
  return j.dump(2);
}

void write_weights(const StochasticGraph& graph, std::span<const double> w,
                   const std::string& bin_path,
                   const std::string& manifest_path) {
  if (static_cast<int>(w.size()) != graph.weight_count()) {
    fail("write_weights: weight vector size mismatch");
  }
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) fail("write_weights: cannot open '" + bin_path + "'");
  bin.write(reinterpret_cast<const char*>(w.data()),
            static_cast<std::streamsize>(w.size() * sizeof(double)));
  if (!bin) fail("write_weights: short write to '" + bin_path + "'");

  std::ofstream man(manifest_path);
  if (!man) fail("write_weights: cannot open '" + manifest_path + "'");
  man << graph.manifest_json() << "\n";
}

std::vector<double> read_weights(const StochasticGraph& graph,
                                 const std::string& bin_path,
                                 const std::string& manifest_path) {
  std::ifstream man(manifest_path);
  if (!man) fail("read_weights: cannot open '" + manifest_path + "'");
  nlohmann::json mj = nlohmann::json::parse(man);
  if (mj.at("total").get<int>() != graph.weight_count()) {
    fail("read_weights: manifest total does not match graph");
  }
  const auto& slices = graph.slices();
  const auto& js = mj.at("slices");
  if (js.size() != slices.size()) {
    fail("read_weights: manifest slice count does not match graph");
  }
  for (size_t i = 0; i < slices.size(); ++i) {
    if (js[i].at("node").get<std::string>() != slices[i].node ||
        js[i].at("param_slot").get<int>() != slices[i].param_slot ||
        js[i].at("offset").get<int>() != slices[i].offset ||
        js[i].at("count").get<int>() != slices[i].count) {
      fail("read_weights: manifest slice " + std::to_string(i) +
           " does not match graph layout");
    }
  }

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) fail("read_weights: cannot open '" + bin_path + "'");
  std::vector<double> w(static_cast<size_t>(graph.weight_count()), 0.0);
  bin.read(reinterpret_cast<char*>(w.data()),
           static_cast<std::streamsize>(w.size() * sizeof(double)));
  if (bin.gcount() !=
      static_cast<std::streamsize>(w.size() * sizeof(double))) {
    fail("read_weights: '" + bin_path + "' is shorter than the manifest total");
  }
  return w;
}

}  // namespace gograd
