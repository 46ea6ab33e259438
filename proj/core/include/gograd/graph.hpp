#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gograd/distribution.hpp"
#include "gograd/estimators.hpp"
#include "gograd/transforms.hpp"

namespace gograd {

enum class NodeRole { kInternal, kLeaf };

// One random variable of the graph: `dim` conditionally independent
// coordinates of the same family, whose per-coordinate parameters are the
// outputs of one transform per family parameter slot (each transform maps
// the concatenated parent values to a block of `dim` values).
struct NodeSpec {
  std::string id;
  Family family = Family::kDelta;
  std::vector<std::string> parents;
  std::vector<ParamTransform> param_transforms;  // one per parameter slot
  NodeRole role = NodeRole::kLeaf;
  int dim = 1;
};

// Directed acyclic graph of random variables. Internal nodes must be
// continuous (delta counts as continuous); discrete families may appear only
// at leaves. Learnable weights live in one flat vector with a per-transform
// slice manifest.
class StochasticGraph {
 public:
  explicit StochasticGraph(std::vector<NodeSpec> nodes);

  struct Slice {
    std::string node;
    int param_slot = 0;
    int offset = 0;
    int count = 0;
  };

  const std::vector<NodeSpec>& nodes() const { return nodes_; }
  int weight_count() const { return weight_count_; }
  const std::vector<Slice>& slices() const { return slices_; }
  const Slice& slice(std::string_view node_id, int param_slot) const;
  bool is_chain() const;

  std::vector<double> init_weights(RngStream& rng) const;

  using Assignment = std::map<std::string, std::vector<double>>;

  // Samples every node in topological order, feeding parent values through
  // the transforms; delta nodes take the transform output deterministically.
  Assignment forward_sample(std::span<const double> weights,
                            RngStream& rng) const;

  // One-sample gradient wrt the flat weight vector. leaf_d maps node ids to
  // the D_z[f] vector of that node; every leaf must have an entry, and an
  // entry on an internal node adds f's direct dependence on it.
  std::vector<double> statistical_backprop(
      std::span<const double> weights, const Assignment& assignment,
      const std::map<std::string, std::vector<double>>& leaf_d) const;

  static StochasticGraph from_json(std::string_view text);
  std::string manifest_json() const;

 private:
  std::vector<NodeSpec> nodes_;  // stored in topological order
  std::vector<int> node_index_of_;
  std::map<std::string, int> index_by_id_;
  std::vector<Slice> slices_;
  std::vector<std::vector<int>> slice_index_;  // per node, per param slot
  int weight_count_ = 0;

  std::vector<double> gather_parents(const NodeSpec& node,
                                     const Assignment& a) const;
  std::vector<std::vector<double>> node_param_blocks(
      const NodeSpec& node, std::span<const double> weights,
      const Assignment& a,
      std::vector<ParamTransform::Trace>* traces) const;
};

// Deep estimator for chain graphs: the integrand consumes the leaf value
// vector; internal D terms are produced by the backward recursion. Averages
// forward_sample + statistical_backprop over n draws.
GradientEstimate deep_go_gradient(const StochasticGraph& graph,
                                  const IntegrandSpec& f, long n,
                                  std::span<const double> weights,
                                  RngStream& rng);

// Weight checkpoint io: raw little-endian doubles plus a JSON manifest of
// the per-transform slices.
void write_weights(const StochasticGraph& graph, std::span<const double> w,
                   const std::string& bin_path,
                   const std::string& manifest_path);
std::vector<double> read_weights(const StochasticGraph& graph,
                                 const std::string& bin_path,
                                 const std::string& manifest_path);

}  // namespace gograd
