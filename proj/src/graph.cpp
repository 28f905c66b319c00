// SPDX-License-Identifier: Apache-2.0

#include "twin/graph.hpp"

#include <algorithm>
#include <numeric>

namespace twin {

std::size_t InteractionGraph::add_node(const std::string& id) {
  auto [it, inserted] = index_.emplace(id, nodes_.size());
  if (inserted) {
    nodes_.push_back(id);
    adjacency_.emplace_back();
  }
  return it->second;
}

namespace {

void accumulate(std::vector<InteractionGraph::Edge>& list, std::size_t neighbor, double w) {
  auto it = std::lower_bound(list.begin(), list.end(), neighbor,
                             [](const InteractionGraph::Edge& e, std::size_t n) { return e.neighbor < n; });
  if (it != list.end() && it->neighbor == neighbor) {
    it->weight += w;
  } else {
    list.insert(it, InteractionGraph::Edge{neighbor, w});
  }
}

}  // namespace

void InteractionGraph::add_edge(const std::string& u, const std::string& v, double weight) {
  const std::size_t a = add_node(u);
  const std::size_t b = add_node(v);
  if (a == b || !(weight > 0)) return;
  accumulate(adjacency_[a], b, weight);
  accumulate(adjacency_[b], a, weight);
}

std::size_t InteractionGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& list : adjacency_) n += list.size();
  return n / 2;
}

double InteractionGraph::total_weight() const {
  double w = 0;
  for (const auto& list : adjacency_) {
    for (const auto& e : list) w += e.weight;
  }
  return w / 2;
}

std::size_t InteractionGraph::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw UserError("unknown node '" + id + "'");
  return it->second;
}

double InteractionGraph::weight(const std::string& u, const std::string& v) const {
  if (!contains(u) || !contains(v)) return 0;
  const std::size_t b = index_of(v);
  for (const auto& e : adjacency_[index_of(u)]) {
    if (e.neighbor == b) return e.weight;
  }
  return 0;
}

InteractionGraph build_graph(const std::vector<Interaction>& interactions, bool weighted) {
  InteractionGraph g;
  for (const auto& [src, dst] : interactions) {
    if (!weighted && g.contains(src) && g.contains(dst) && g.weight(src, dst) > 0) continue;
    g.add_edge(src, dst, 1.0);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Partition / modularity
// ---------------------------------------------------------------------------

std::size_t Partition::cluster_count() const {
  std::size_t n = 0;
  for (const auto& [node, c] : assignment) n = std::max(n, c + 1);
  return n;
}

std::vector<std::size_t> Partition::labels_for(const InteractionGraph& g) const {
  std::vector<std::size_t> labels(g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    auto it = assignment.find(g.nodes()[i]);
    if (it == assignment.end()) throw UserError("partition does not cover node '" + g.nodes()[i] + "'");
    labels[i] = it->second;
  }
  return labels;
}

Partition Partition::from_labels(const InteractionGraph& g, const std::vector<std::size_t>& labels) {
  Partition p;
  for (std::size_t i = 0; i < g.node_count(); ++i) p.assignment[g.nodes()[i]] = labels.at(i);
  return p;
}

double modularity(const InteractionGraph& g, const std::vector<std::size_t>& labels, double resolution) {
  const double m = g.total_weight();
  if (!(m > 0)) throw UserError("modularity undefined for a graph without edges");
  if (labels.size() != g.node_count()) throw UserError("partition size does not match graph");
  const std::size_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> internal(k, 0.0);  // sum of A_ij over ordered pairs inside a cluster
  std::vector<double> total(k, 0.0);     // sum of degrees
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    for (const auto& e : g.neighbors(i)) {
      total[labels[i]] += e.weight;
      if (labels[e.neighbor] == labels[i]) internal[labels[i]] += e.weight;
    }
  }
  const double two_m = 2 * m;
  double q = 0;
  for (std::size_t c = 0; c < k; ++c) {
    q += internal[c] / two_m - resolution * (total[c] / two_m) * (total[c] / two_m);
  }
  return q;
}

double modularity(const InteractionGraph& g, const Partition& p, double resolution) {
  return modularity(g, p.labels_for(g), resolution);
}

// ---------------------------------------------------------------------------
// Louvain
// ---------------------------------------------------------------------------

namespace {

// Graph at one aggregation level. self_loop[i] holds A_ii (twice the internal
// edge weight of the merged cluster), so degree[i] = self_loop[i] + sum of adj.
struct Level {
  std::vector<std::vector<InteractionGraph::Edge>> adj;
  std::vector<double> self_loop;
  std::vector<double> degree;

  std::size_t size() const { return adj.size(); }
};

Level level_from_graph(const InteractionGraph& g) {
  Level lv;
  lv.adj.resize(g.node_count());
  lv.self_loop.assign(g.node_count(), 0.0);
  lv.degree.assign(g.node_count(), 0.0);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    lv.adj[i] = g.neighbors(i);
    for (const auto& e : lv.adj[i]) lv.degree[i] += e.weight;
  }
  return lv;
}

// One local-move phase. Returns true when any node changed community.
bool local_move(const Level& lv, double two_m, double resolution, Rng& rng, std::vector<std::size_t>& comm) {
  const std::size_t n = lv.size();
  comm.resize(n);
  std::iota(comm.begin(), comm.end(), 0);
  std::vector<double> tot(lv.degree);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::vector<double> link(n, 0.0);
  std::vector<std::size_t> touched;
  bool any_move = false;
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t i : order) {
      const std::size_t own = comm[i];
      const double k_i = lv.degree[i];
      touched.clear();
      touched.push_back(own);
      for (const auto& e : lv.adj[i]) {
        const std::size_t c = comm[e.neighbor];
        if (link[c] == 0.0 && std::find(touched.begin(), touched.end(), c) == touched.end()) touched.push_back(c);
        link[c] += e.weight;
      }
      tot[own] -= k_i;
      std::size_t best = own;
      double best_gain = link[own] - resolution * tot[own] * k_i / two_m;
      for (std::size_t c : touched) {
        const double gain = link[c] - resolution * tot[c] * k_i / two_m;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best = c;
        }
      }
      tot[best] += k_i;
      comm[i] = best;
      if (best != own) moved = any_move = true;
      for (std::size_t c : touched) link[c] = 0.0;
    }
  }
  return any_move;
}

// Renumbers communities 0..k-1 in first-appearance order; returns k.
std::size_t renumber(std::vector<std::size_t>& comm) {
  std::vector<std::size_t> remap(comm.size(), SIZE_MAX);
  std::size_t next = 0;
  for (auto& c : comm) {
    if (remap[c] == SIZE_MAX) remap[c] = next++;
    c = remap[c];
  }
  return next;
}

Level aggregate(const Level& lv, const std::vector<std::size_t>& comm, std::size_t k) {
  Level out;
  out.adj.resize(k);
  out.self_loop.assign(k, 0.0);
  out.degree.assign(k, 0.0);
  std::vector<std::map<std::size_t, double>> acc(k);
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const std::size_t ci = comm[i];
    out.self_loop[ci] += lv.self_loop[i];
    out.degree[ci] += lv.degree[i];
    for (const auto& e : lv.adj[i]) {
      const std::size_t cj = comm[e.neighbor];
      if (ci == cj) {
        out.self_loop[ci] += e.weight;
      } else {
        acc[ci][cj] += e.weight;
      }
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (const auto& [nb, w] : acc[c]) out.adj[c].push_back({nb, w});
  }
  return out;
}

std::vector<std::size_t> compact_by_size(const std::vector<std::size_t>& labels) {
  const std::size_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> size(k, 0), first(k, SIZE_MAX);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++size[labels[i]];
    first[labels[i]] = std::min(first[labels[i]], i);
  }
  std::vector<std::size_t> ids;
  for (std::size_t c = 0; c < k; ++c) {
    if (size[c] > 0) ids.push_back(c);
  }
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    if (size[a] != size[b]) return size[a] > size[b];
    return first[a] < first[b];
  });
  std::vector<std::size_t> remap(k, 0);
  for (std::size_t r = 0; r < ids.size(); ++r) remap[ids[r]] = r;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = remap[labels[i]];
  return out;
}

}  // namespace

Partition louvain(const InteractionGraph& g, const LouvainOptions& options, LouvainTrace* trace) {
  if (g.node_count() == 0) throw UserError("louvain: graph has no nodes");
  std::vector<std::size_t> membership(g.node_count());
  std::iota(membership.begin(), membership.end(), 0);
  const double two_m = 2 * g.total_weight();
  if (!(two_m > 0)) return Partition::from_labels(g, compact_by_size(membership));

  Level lv = level_from_graph(g);
  for (std::size_t level = 0; level < options.max_levels; ++level) {
    Rng rng = Rng::derive(options.seed, "louvain-level-" + std::to_string(level));
    std::vector<std::size_t> comm;
    const bool moved = local_move(lv, two_m, options.resolution, rng, comm);
    if (!moved) break;
    const std::size_t k = renumber(comm);
    for (auto& m : membership) m = comm[m];
    if (trace) trace->phase_modularity.push_back(modularity(g, membership, options.resolution));
    if (k == lv.size()) break;
    lv = aggregate(lv, comm, k);
  }
  return Partition::from_labels(g, compact_by_size(membership));
}

std::vector<ClusterSize> top_clusters(const Partition& p, std::size_t k) {
  std::map<std::size_t, std::size_t> counts;
  for (const auto& [node, c] : p.assignment) ++counts[c];
  std::vector<ClusterSize> out;
  for (const auto& [c, n] : counts) out.push_back({c, n});
  std::stable_sort(out.begin(), out.end(), [](const ClusterSize& a, const ClusterSize& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.cluster < b.cluster;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

namespace {
std::string as_id(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }
}  // namespace

std::vector<Interaction> read_interactions(const std::filesystem::path& path) {
  std::vector<Interaction> out;
  read_jsonl(path, [&](std::size_t line, const Json& j) {
    if (!j.is_object() || !j.contains("source") || !j.contains("target")) {
      throw UserError(path.string() + ":" + std::to_string(line) + ": interaction needs 'source' and 'target'");
    }
    out.emplace_back(as_id(j["source"]), as_id(j["target"]));
  });
  return out;
}

void write_partition(const std::filesystem::path& path, const Partition& p) {
  std::string out;
  for (const auto& [user, c] : p.assignment) {
    out += Json{{"user", user}, {"cluster", c}}.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

Partition read_partition(const std::filesystem::path& path) {
  Partition p;
  read_jsonl(path, [&](std::size_t line, const Json& j) {
    if (!j.contains("user") || !j.contains("cluster")) {
      throw UserError(path.string() + ":" + std::to_string(line) + ": partition record needs 'user' and 'cluster'");
    }
    p.assignment[as_id(j["user"])] = j["cluster"].get<std::size_t>();
  });
  return p;
}

std::map<std::size_t, std::string> parse_community_map(const Json& j) {
  if (!j.is_object()) throw UserError("community map must be an object of community -> [cluster ids]");
  std::map<std::size_t, std::string> out;
  for (const auto& [community, clusters] : j.items()) {
    if (!clusters.is_array()) throw UserError("community '" + community + "' must list cluster ids");
    for (const auto& c : clusters) {
      const auto id = c.get<std::size_t>();
      auto [it, inserted] = out.emplace(id, community);
      if (!inserted) {
        throw UserError("cluster " + std::to_string(id) + " mapped to both '" + it->second + "' and '" + community +
                        "'");
      }
    }
  }
  return out;
}

}  // namespace twin
