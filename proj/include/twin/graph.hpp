// SPDX-License-Identifier: Apache-2.0
//
// Retweet interaction graph and community detection by modularity
// maximization (Louvain local-move / aggregate phases).

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "twin/util.hpp"

namespace twin {

/// Undirected weighted graph without self-loops. Node indices follow first
/// appearance; adjacency lists are sorted by neighbor index.
class InteractionGraph {
 public:
  struct Edge {
    std::size_t neighbor;
    double weight;
  };

  std::size_t add_node(const std::string& id);
  /// Accumulates weight onto the (u, v) edge. Self-loops and non-positive
  /// weights are ignored, though both endpoints are still registered.
  void add_edge(const std::string& u, const std::string& v, double weight = 1.0);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const;
  /// Sum of edge weights (m).
  double total_weight() const;
  double weight(const std::string& u, const std::string& v) const;

  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<Edge>& neighbors(std::size_t i) const { return adjacency_[i]; }
  std::size_t index_of(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) > 0; }

 private:
  std::vector<std::string> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<Edge>> adjacency_;
};

using Interaction = std::pair<std::string, std::string>;

/// Repeated interactions between a pair accumulate as weight when `weighted`;
/// otherwise every connected pair has weight 1.
InteractionGraph build_graph(const std::vector<Interaction>& interactions, bool weighted = true);

/// Node -> cluster id. Cluster ids are contiguous from 0.
struct Partition {
  std::map<std::string, std::size_t> assignment;

  std::size_t cluster_count() const;
  /// Cluster id of every graph node, in graph index order. Throws UserError
  /// when a node is missing.
  std::vector<std::size_t> labels_for(const InteractionGraph& g) const;
  static Partition from_labels(const InteractionGraph& g, const std::vector<std::size_t>& labels);
};

/// Weighted Newman-Girvan modularity with a resolution factor.
/// Throws UserError("modularity undefined ...") on a graph without edges.
double modularity(const InteractionGraph& g, const Partition& p, double resolution = 1.0);
double modularity(const InteractionGraph& g, const std::vector<std::size_t>& labels, double resolution = 1.0);

struct LouvainOptions {
  std::uint64_t seed = 0;
  double resolution = 1.0;
  std::size_t max_levels = 64;
};

/// Modularity of the original graph after each local-move phase.
struct LouvainTrace {
  std::vector<double> phase_modularity;
};

/// Clusters are renumbered by size (largest first), ties by the earliest node.
Partition louvain(const InteractionGraph& g, const LouvainOptions& options = {}, LouvainTrace* trace = nullptr);

struct ClusterSize {
  std::size_t cluster;
  std::size_t count;
  bool operator==(const ClusterSize&) const = default;
};

/// The k largest clusters by node count, descending; ties by cluster id.
std::vector<ClusterSize> top_clusters(const Partition& p, std::size_t k = 20);

std::vector<Interaction> read_interactions(const std::filesystem::path& path);
void write_partition(const std::filesystem::path& path, const Partition& p);
Partition read_partition(const std::filesystem::path& path);

/// Manual cluster labeling: {"Pro-ED": [0, 7, 8, 9], ...} -> cluster -> community.
std::map<std::size_t, std::string> parse_community_map(const Json& j);

}  // namespace twin
