#include "neurofuse/netmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <unordered_map>

#include <json.hpp>

#include "neurofuse/csv.hpp"
#include "neurofuse/error.hpp"

namespace neurofuse::netmetrics {

DegreeDensity degree_density(const Graph& g) {
  const std::size_t n = g.node_count();
  if (n < 2) throw DataError("density is undefined for fewer than 2 nodes");
  DegreeDensity out;
  out.degree.resize(n);
  for (std::size_t v = 0; v < n; ++v) out.degree[v] = static_cast<double>(g.degree(v));
  const double e = static_cast<double>(g.edge_count());
  out.average_degree = 2.0 * e / static_cast<double>(n);
  out.density = 2.0 * e / (static_cast<double>(n) * static_cast<double>(n - 1));
  return out;
}

std::vector<double> betweenness(const Graph& g, bool normalized) {
  const std::size_t n = g.node_count();
  std::vector<double> cb(n, 0.0);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> pred(n);
  std::vector<double> sigma(n), delta(n);
  std::vector<int> dist(n);
  for (std::size_t s = 0; s < n; ++s) {
    stack.clear();
    for (std::size_t v = 0; v < n; ++v) pred[v].clear();
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(dist.begin(), dist.end(), -1);
    sigma[s] = 1.0;
    dist[s] = 0;
    std::queue<std::size_t> q;
    q.push(s);
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      stack.push_back(v);
      for (std::size_t w : g.neighbors(v)) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          pred[w].push_back(v);
        }
      }
    }
    std::fill(delta.begin(), delta.end(), 0.0);
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
      const std::size_t w = *it;
      for (std::size_t v : pred[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) cb[w] += delta[w];
    }
  }
  for (auto& x : cb) x *= 0.5;
  if (normalized && n > 2) {
    const double scale = 2.0 / (static_cast<double>(n - 1) * static_cast<double>(n - 2));
    for (auto& x : cb) x *= scale;
  }
  return cb;
}

Clustering clustering_transitivity(const Graph& g) {
  const std::size_t n = g.node_count();
  Clustering out;
  out.nodal.assign(n, 0.0);
  double triangles = 0.0, wedges = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const auto& nb = g.neighbors(v);
    const double k = static_cast<double>(nb.size());
    double t = 0.0;
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (std::size_t b = a + 1; b < nb.size(); ++b)
        if (g.has_edge(nb[a], nb[b])) t += 1.0;
    if (k >= 2) out.nodal[v] = 2.0 * t / (k * (k - 1.0));
    triangles += t;  // each triangle seen from its 3 corners
    wedges += k * (k - 1.0) / 2.0;
  }
  out.transitivity = wedges > 0 ? triangles / wedges : 0.0;
  out.mean = n ? std::accumulate(out.nodal.begin(), out.nodal.end(), 0.0) / static_cast<double>(n) : 0.0;
  return out;
}

std::vector<int> bfs_distances(const Graph& g, std::size_t source) {
  std::vector<int> dist(g.node_count(), -1);
  std::queue<std::size_t> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const std::size_t v = q.front();
    q.pop();
    for (std::size_t w : g.neighbors(v)) {
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        q.push(w);
      }
    }
  }
  return dist;
}

PathEfficiency path_efficiency(const Graph& g) {
  const std::size_t n = g.node_count();
  PathEfficiency out;
  if (n < 2) return out;
  double inv_sum = 0.0, len_sum = 0.0;
  std::size_t finite = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto d = bfs_distances(g, s);
    for (std::size_t t = 0; t < n; ++t) {
      if (t == s || d[t] < 0) continue;
      inv_sum += 1.0 / d[t];
      len_sum += d[t];
      ++finite;
    }
  }
  out.efficiency = inv_sum / (static_cast<double>(n) * static_cast<double>(n - 1));
  if (finite > 0) out.path_length = len_sum / static_cast<double>(finite);
  return out;
}

namespace {

// Connected components as node lists, in order of their lowest node.
std::vector<std::vector<std::size_t>> components(const Graph& g) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<bool> seen(g.node_count(), false);
  for (std::size_t s = 0; s < g.node_count(); ++s) {
    if (seen[s]) continue;
    std::vector<std::size_t> comp{s};
    seen[s] = true;
    for (std::size_t head = 0; head < comp.size(); ++head) {
      for (std::size_t w : g.neighbors(comp[head])) {
        if (!seen[w]) {
          seen[w] = true;
          comp.push_back(w);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

}  // namespace

std::vector<double> eigenvector_centrality(const Graph& g) {
  if (g.edge_count() == 0) throw DataError("eigenvector centrality needs at least one edge");
  const auto comps = components(g);
  const auto& lcc = *std::max_element(comps.begin(), comps.end(), [](const auto& a, const auto& b) {
    return a.size() < b.size();
  });

  const std::size_t n = g.node_count();
  std::vector<double> x(n, 0.0), next(n, 0.0);
  for (std::size_t v : lcc) x[v] = 1.0 / std::sqrt(static_cast<double>(lcc.size()));
  // Iterating on A + I keeps the spectrum positive, so bipartite components converge.
  constexpr int max_iter = 1000000;
  for (int it = 0; it < max_iter; ++it) {
    double norm = 0.0;
    for (std::size_t v : lcc) {
      double s = x[v];
      for (std::size_t w : g.neighbors(v)) s += x[w];
      next[v] = s;
      norm += s * s;
    }
    norm = std::sqrt(norm);
    double change = 0.0;
    for (std::size_t v : lcc) {
      next[v] /= norm;
      change = std::max(change, std::fabs(next[v] - x[v]));
    }
    x.swap(next);
    if (change < 1e-15) return x;
  }
  throw NumericalError("eigenvector centrality did not converge");
}

double assortativity(const Graph& g) {
  if (g.edge_count() == 0) throw DataError("assortativity needs at least one edge");
  // Both orientations make the two marginals identical, so one mean and variance suffice.
  double sum = 0.0, sum_sq = 0.0, cross = 0.0, m = 0.0;
  for (const auto& [i, j] : g.edges()) {
    const double a = static_cast<double>(g.degree(i));
    const double b = static_cast<double>(g.degree(j));
    sum += a + b;
    sum_sq += a * a + b * b;
    cross += 2.0 * a * b;
    m += 2.0;
  }
  const double mu = sum / m;
  const double var = sum_sq / m - mu * mu;
  if (!(var > 1e-12 * std::max(1.0, mu * mu)))
    throw NumericalError("assortativity is undefined: every edge joins nodes of equal degree");
  return (cross / m - mu * mu) / var;
}

std::size_t CommunityPartition::module_count() const {
  return module.empty() ? 0 : *std::max_element(module.begin(), module.end()) + 1;
}

double modularity(const Graph& g, std::span<const std::size_t> module) {
  if (module.size() != g.node_count()) throw DataError("partition does not cover every node");
  const double m = static_cast<double>(g.edge_count());
  if (m == 0) return 0.0;
  std::map<std::size_t, double> internal, degree;
  for (std::size_t v = 0; v < g.node_count(); ++v) degree[module[v]] += static_cast<double>(g.degree(v));
  for (const auto& [i, j] : g.edges())
    if (module[i] == module[j]) internal[module[i]] += 1.0;
  double q = 0.0;
  for (const auto& [c, d] : degree) q += internal[c] / m - (d / (2.0 * m)) * (d / (2.0 * m));
  return q;
}

namespace {

std::vector<std::size_t> renumber(std::span<const std::size_t> labels) {
  std::unordered_map<std::size_t, std::size_t> id;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t v = 0; v < labels.size(); ++v) {
    const auto [it, inserted] = id.try_emplace(labels[v], id.size());
    out[v] = it->second;
  }
  return out;
}

// Weighted graph used by the aggregation levels. `self` counts internal weight over
// ordered pairs, so a node's strength is self + the sum of its neighbour weights.
struct Level {
  std::vector<std::map<std::size_t, double>> nb;
  std::vector<double> self;

  std::size_t size() const { return nb.size(); }
  double strength(std::size_t v) const {
    double k = self[v];
    for (const auto& [w, x] : nb[v]) k += x;
    return k;
  }
};

// One round of local moving; returns true if any node changed community.
bool local_moves(const Level& level, std::vector<std::size_t>& comm, Rng& rng) {
  const std::size_t n = level.size();
  std::vector<double> k(n), tot(n, 0.0);
  double two_m = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    k[v] = level.strength(v);
    tot[comm[v]] += k[v];
    two_m += k[v];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

  bool any = false;
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t v : order) {
      std::map<std::size_t, double> links;
      for (const auto& [w, x] : level.nb[v]) links[comm[w]] += x;
      const std::size_t current = comm[v];
      tot[current] -= k[v];
      std::size_t best = current;
      double best_gain = links[current] - tot[current] * k[v] / two_m;
      for (const auto& [c, l] : links) {
        const double gain = l - tot[c] * k[v] / two_m;
        if (gain > best_gain + 1e-12) {
          best = c;
          best_gain = gain;
        }
      }
      tot[best] += k[v];
      if (best != current) {
        comm[v] = best;
        moved = any = true;
      }
    }
  }
  return any;
}

}  // namespace

CommunityPartition community_partition(const Graph& g, std::uint64_t seed) {
  const std::size_t n = g.node_count();
  CommunityPartition out;
  out.module.resize(n);
  std::iota(out.module.begin(), out.module.end(), 0);
  if (g.edge_count() == 0) return out;

  Level level;
  level.nb.resize(n);
  level.self.assign(n, 0.0);
  for (const auto& [i, j] : g.edges()) {
    level.nb[i][j] = 1.0;
    level.nb[j][i] = 1.0;
  }
  for (std::uint64_t round = 0;; ++round) {
    Rng rng = make_rng(seed, 0x6c6f7576, round);
    std::vector<std::size_t> comm(level.size());
    std::iota(comm.begin(), comm.end(), 0);
    if (!local_moves(level, comm, rng)) break;
    comm = renumber(comm);
    for (auto& m : out.module) m = comm[m];

    const std::size_t groups = *std::max_element(comm.begin(), comm.end()) + 1;
    Level next;
    next.nb.resize(groups);
    next.self.assign(groups, 0.0);
    for (std::size_t v = 0; v < level.size(); ++v) {
      next.self[comm[v]] += level.self[v];
      for (const auto& [w, x] : level.nb[v]) {
        if (comm[v] == comm[w]) next.self[comm[v]] += x;
        else next.nb[comm[v]][comm[w]] += x;
      }
    }
    level = std::move(next);
  }
  out.module = renumber(out.module);
  out.modularity = modularity(g, out.module);
  return out;
}

CommunityPartition partition_from_labels(const Graph& g, std::span<const std::string> labels) {
  if (labels.size() != g.node_count()) throw DataError("partition labels do not cover every node");
  std::unordered_map<std::string, std::size_t> id;
  CommunityPartition out;
  for (const auto& l : labels) out.module.push_back(id.try_emplace(l, id.size()).first->second);
  out.modularity = modularity(g, out.module);
  return out;
}

std::vector<double> participation_coefficient(const Graph& g, std::span<const std::size_t> module) {
  if (module.size() != g.node_count()) throw DataError("partition does not cover every node");
  std::vector<double> p(g.node_count(), 0.0);
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    const auto& nb = g.neighbors(v);
    if (nb.empty()) continue;
    std::map<std::size_t, double> per_module;
    for (std::size_t w : nb) per_module[module[w]] += 1.0;
    double s = 0.0;
    for (const auto& [c, count] : per_module) {
      const double f = count / static_cast<double>(nb.size());
      s += f * f;
    }
    p[v] = 1.0 - s;
  }
  return p;
}

std::pair<Graph, std::size_t> rewire(const Graph& g, std::size_t target, std::size_t max_attempts,
                                     Rng& rng) {
  Graph h = g;
  auto edges = g.edges();
  std::size_t accepted = 0;
  if (edges.size() < 2) return {h, 0};
  for (std::size_t attempt = 0; attempt < max_attempts && accepted < target; ++attempt) {
    const std::size_t e1 = uniform_index(rng, edges.size());
    const std::size_t e2 = uniform_index(rng, edges.size());
    auto [a, b] = edges[e1];
    auto [c, d] = edges[e2];
    if (uniform01(rng) < 0.5) std::swap(c, d);
    if (e1 == e2 || a == c || a == d || b == c || b == d) continue;
    if (h.has_edge(a, d) || h.has_edge(c, b)) continue;
    h.remove_edge(a, b);
    h.remove_edge(c, d);
    h.add_edge(a, d);
    h.add_edge(c, b);
    edges[e1] = {std::min(a, d), std::max(a, d)};
    edges[e2] = {std::min(c, b), std::max(c, b)};
    ++accepted;
  }
  return {h, accepted};
}

Graph random_gnm(std::size_t nodes, std::size_t edges, Rng& rng) {
  if (nodes < 2 || edges > nodes * (nodes - 1) / 2)
    throw DataError("random_gnm: " + std::to_string(edges) + " edges do not fit on " +
                    std::to_string(nodes) + " nodes");
  Graph g(nodes);
  while (g.edge_count() < edges) {
    const std::size_t i = uniform_index(rng, nodes);
    const std::size_t j = uniform_index(rng, nodes);
    if (i != j) g.add_edge(i, j);
  }
  return g;
}

SmallWorld small_world_norms(const Graph& g, std::size_t n_null, std::uint64_t seed) {
  const std::size_t e = g.edge_count();
  if (e < 2) throw DataError("small-world normalisation needs at least 2 edges");
  if (n_null == 0) throw DataError("small-world normalisation needs at least one null graph");
  const double c = clustering_transitivity(g).mean;
  const double l = *path_efficiency(g).path_length;

  SmallWorld out;
  out.n_null = n_null;
  double c_sum = 0.0, l_sum = 0.0;
  for (std::size_t k = 0; k < n_null; ++k) {
    Rng rng = make_rng(seed, 0x6e756c6c, k);
    auto [h, accepted] = rewire(g, 10 * e, 100 * e, rng);
    if (accepted < e) {
      h = random_gnm(g.node_count(), e, rng);
      ++out.fallback_nulls;
    }
    c_sum += clustering_transitivity(h).mean;
    l_sum += *path_efficiency(h).path_length;
  }
  out.null_clustering = c_sum / static_cast<double>(n_null);
  out.null_path_length = l_sum / static_cast<double>(n_null);
  if (!(out.null_clustering > 0.0))
    throw NumericalError("gamma undefined: null graphs have zero mean clustering (" +
                         std::to_string(n_null) + " nulls, " + std::to_string(out.fallback_nulls) +
                         " fallbacks)");
  out.gamma = c / out.null_clustering;
  out.lambda = l / out.null_path_length;
  return out;
}

HubMode hub_mode_from_string(const std::string& text) {
  if (text == "either") return HubMode::either;
  if (text == "both") return HubMode::both;
  throw DataError("unknown hub mode '" + text + "' (expected either or both)");
}

std::string to_string(HubMode mode) { return mode == HubMode::either ? "either" : "both"; }

HubSet find_hubs(std::span<const double> degree, std::span<const double> betweenness, HubMode mode) {
  if (degree.size() != betweenness.size())
    throw DataError("find_hubs: degree and betweenness vectors differ in length");
  const std::size_t n = degree.size();
  HubSet out;
  out.criteria.assign(n, "");
  if (n < 2) return out;
  const auto cutoff = [](std::span<const double> x) { return stats::mean(x) + stats::sample_sd(x); };
  out.degree_cutoff = cutoff(degree);
  out.betweenness_cutoff = cutoff(betweenness);
  // Slack keeps nodes sitting exactly on the cutoff out, whatever the rounding.
  const auto exceeds = [](double x, double c) { return x > c + 1e-12 * std::max(1.0, std::fabs(c)); };
  for (std::size_t v = 0; v < n; ++v) {
    const bool d = exceeds(degree[v], out.degree_cutoff);
    const bool b = exceeds(betweenness[v], out.betweenness_cutoff);
    const bool hub = mode == HubMode::either ? (d || b) : (d && b);
    if (!hub) continue;
    out.hubs.push_back(v);
    out.criteria[v] = d && b ? "degree+betweenness" : d ? "degree" : "betweenness";
  }
  return out;
}

stats::TestResult compare_networks(std::span<const double> a, std::span<const double> b,
                                   CompareMethod method, std::size_t n_perm, std::uint64_t seed) {
  if (a.empty() || b.empty()) throw DataError("compare_networks: empty metric vector");
  if (method == CompareMethod::student_t) return stats::student_t(a, b);
  return stats::permutation_test(a, b, stats::PermStatistic::t, n_perm, seed);
}

GraphMetricsReport compute_metrics(const Graph& g, const MetricsOptions& options) {
  GraphMetricsReport r;
  r.nodes = g.node_count();
  r.edges = g.edge_count();
  const auto dd = degree_density(g);
  r.degree = dd.degree;
  r.density = dd.density;
  r.average_degree = dd.average_degree;
  r.betweenness = betweenness(g);
  const auto cl = clustering_transitivity(g);
  r.clustering = cl.nodal;
  r.transitivity = cl.transitivity;
  r.mean_clustering = cl.mean;
  const auto pe = path_efficiency(g);
  r.global_efficiency = pe.efficiency;
  r.path_length = pe.path_length;
  if (!r.path_length) r.notices.push_back("characteristic path length undefined: no connected pairs");

  if (g.edge_count() == 0) {
    r.eigenvector.assign(g.node_count(), 0.0);
    r.notices.push_back("eigenvector centrality undefined: no edges");
  } else {
    r.eigenvector = eigenvector_centrality(g);
  }
  try {
    r.assortativity = assortativity(g);
  } catch (const std::runtime_error& e) {
    r.notices.push_back(e.what());
  }

  const auto partition = options.partition == PartitionMode::hemisphere
                             ? partition_from_labels(g, options.hemispheres)
                             : community_partition(g, stream_seed(options.seed, 0x6d6f64));
  r.module = partition.module;
  r.modularity = partition.modularity;
  r.participation = participation_coefficient(g, partition.module);

  try {
    const auto sw = small_world_norms(g, options.n_null, options.seed);
    r.gamma = sw.gamma;
    r.lambda = sw.lambda;
    r.small_world_fallback = sw.fallback();
  } catch (const std::runtime_error& e) {
    r.notices.push_back(e.what());
  }
  return r;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& x) {
  return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
}

template <typename T>
nlohmann::json keyed(std::span<const std::string> names, const std::vector<T>& values) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = values[i];
  return out;
}

}  // namespace

void write_metrics_json(const std::filesystem::path& path, const GraphMetricsReport& r,
                        std::span<const std::string> region_names) {
  if (region_names.size() != r.nodes) throw DataError("metrics: region names do not match node count");
  nlohmann::json j;
  j["nodes"] = r.nodes;
  j["edges"] = r.edges;
  j["region_order"] = std::vector<std::string>(region_names.begin(), region_names.end());
  j["scalars"] = {
      {"density", r.density},
      {"average_degree", r.average_degree},
      {"global_efficiency", r.global_efficiency},
      {"characteristic_path_length", optional_json(r.path_length)},
      {"transitivity", r.transitivity},
      {"mean_clustering", r.mean_clustering},
      {"assortativity", optional_json(r.assortativity)},
      {"modularity", r.modularity},
      {"gamma", optional_json(r.gamma)},
      {"lambda", optional_json(r.lambda)},
      {"small_world_fallback", r.small_world_fallback},
  };
  j["nodal"] = {
      {"degree", keyed(region_names, r.degree)},
      {"betweenness", keyed(region_names, r.betweenness)},
      {"clustering", keyed(region_names, r.clustering)},
      {"eigenvector_centrality", keyed(region_names, r.eigenvector)},
      {"participation_coefficient", keyed(region_names, r.participation)},
      {"module", keyed(region_names, r.module)},
  };
  j["notices"] = r.notices;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<double> read_nodal_metric(const std::filesystem::path& path, const std::string& metric) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    const auto& values = j.at("nodal").at(metric);
    std::vector<double> out;
    for (const auto& name : j.at("region_order")) out.push_back(values.at(name.get<std::string>()).get<double>());
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_hubs_csv(const std::filesystem::path& path, const HubSet& hubs,
                    std::span<const double> degree, std::span<const double> betweenness,
                    std::span<const std::string> region_names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "region,degree,betweenness,criteria\n";
  for (std::size_t v : hubs.hubs)
    out << region_names[v] << ',' << csv::format(degree[v]) << ',' << csv::format(betweenness[v]) << ',' << hubs.criteria[v] << '\n';
}

}  // namespace neurofuse::netmetrics
