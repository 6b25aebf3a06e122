#include "hsde/ensemble.hpp"

#include <algorithm>
#include <numeric>

namespace hsde {

int EventArena::add_root(double origin, int dim) {
  nodes_.push_back({origin, 0, 0.0, Vector::Zero(dim), -1});
  return static_cast<int>(nodes_.size()) - 1;
}

int EventArena::add(int parent, double tau, Vector mark, const TimeGrid& grid) {
  const EventNode& p = (*this)[parent];
  const double time = p.time + tau;
  const int step = grid.nearest_step(time);
  if (step <= p.step) {
    throw std::invalid_argument("event at t=" + std::to_string(time) +
                                " shares a grid bin with its predecessor (orderliness)");
  }
  nodes_.push_back({time, step, tau, std::move(mark), parent});
  return static_cast<int>(nodes_.size()) - 1;
}

InducingSequence EventArena::chain(int leaf, double origin) const {
  std::vector<int> ids;
  for (int e = leaf; e >= 0 && (*this)[e].parent >= 0; e = (*this)[e].parent) ids.push_back(e);
  std::vector<InducingPoint> pts;
  pts.reserve(ids.size());
  for (auto it = ids.rbegin(); it != ids.rend(); ++it) {
    pts.push_back({(*this)[*it].tau, (*this)[*it].mark});
  }
  return InducingSequence(origin, std::move(pts));
}

int EventArena::chain_length(int leaf) const {
  int n = 0;
  for (int e = leaf; e >= 0 && (*this)[e].parent >= 0; e = (*this)[e].parent) ++n;
  return n;
}

ParticleEnsemble::ParticleEnsemble(TimeGrid grid, std::vector<GenealogyLayer> layers,
                                   EventArena arena, std::vector<int> leaves,
                                   std::vector<double> weights)
    : grid_(grid),
      layers_(std::move(layers)),
      arena_(std::move(arena)),
      leaves_(std::move(leaves)),
      weights_(std::move(weights)) {
  if (layers_.size() != static_cast<std::size_t>(grid_.steps()) + 1) {
    throw std::invalid_argument("ensemble needs one layer per grid step");
  }
  if (weights_.empty() || leaves_.size() != weights_.size()) {
    throw std::invalid_argument("ensemble weights and leaves must match and be non-empty");
  }
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("ensemble weights must have positive mass");
  for (auto& w : weights_) w /= total;

  const int K = grid_.steps();
  node_weights_.assign(K + 1, {});
  node_weights_[K] = weights_;
  for (int k = K; k >= 1; --k) {
    const auto& anc = layers_[k].ancestor;
    auto& prev = node_weights_[k - 1];
    prev.assign(layers_[k - 1].x.cols(), 0.0);
    const auto& cur = node_weights_[k];
    for (std::size_t u = 0; u < cur.size(); ++u) prev[anc[u]] += cur[u];
  }
}

ParticleEnsemble ParticleEnsemble::from_paths(const TimeGrid& grid,
                                              std::span<const LatentPath> paths,
                                              std::span<const InducingSequence> events,
                                              std::span<const double> weights) {
  const int U = static_cast<int>(paths.size());
  if (U == 0 || events.size() != paths.size() || weights.size() != paths.size()) {
    throw std::invalid_argument("from_paths needs matching non-empty paths, events and weights");
  }
  const int K = grid.steps();
  const int D = static_cast<int>(paths[0].x.cols());
  std::vector<GenealogyLayer> layers(K + 1);
  for (auto& layer : layers) {
    layer.x.resize(D, U);
    layer.y.resize(D, U);
    layer.ancestor.resize(U);
    layer.event.resize(U);
  }
  EventArena arena;
  std::vector<int> leaves(U);
  for (int u = 0; u < U; ++u) {
    const LatentPath& p = paths[u];
    if (p.x.rows() != K + 1 || p.x.cols() != D || p.y.rows() != K + 1 || p.y.cols() != D) {
      throw std::invalid_argument("path shape does not match the grid");
    }
    std::vector<int> ids{arena.add_root(grid.origin(), D)};
    for (const auto& pt : events[u].points()) ids.push_back(arena.add(ids.back(), pt.tau, pt.mark, grid));
    if (arena[ids.back()].step < K) throw std::invalid_argument("events end before the grid");
    leaves[u] = ids.back();
    std::size_t pending = 0;
    for (int k = 0; k <= K; ++k) {
      while (arena[ids[pending]].step < k) ++pending;
      layers[k].x.col(u) = p.x.row(k).transpose();
      layers[k].y.col(u) = p.y.row(k).transpose();
      layers[k].ancestor[u] = k == 0 ? -1 : u;
      layers[k].event[u] = ids[pending];
    }
  }
  return ParticleEnsemble(grid, std::move(layers), std::move(arena), std::move(leaves),
                          std::vector<double>(weights.begin(), weights.end()));
}

int ParticleEnsemble::slot(int k, int u) const {
  int s = u;
  for (int j = steps(); j > k; --j) s = layers_[j].ancestor[s];
  return s;
}

LatentPath ParticleEnsemble::path(int u) const {
  const int K = steps();
  LatentPath p{Matrix(K + 1, dim()), Matrix(K + 1, dim())};
  int s = u;
  for (int k = K; k >= 0; --k) {
    p.x.row(k) = layers_[k].x.col(s).transpose();
    p.y.row(k) = layers_[k].y.col(s).transpose();
    if (k > 0) s = layers_[k].ancestor[s];
  }
  return p;
}

InducingSequence ParticleEnsemble::events(int u) const { return arena_.chain(leaf(u), grid_.origin()); }

int ParticleEnsemble::event_count(int u) const { return arena_.chain_length(leaf(u)); }

std::vector<double> ParticleEnsemble::event_weights() const {
  std::vector<double> ew(arena_.size(), 0.0);
  for (int u = 0; u < size(); ++u) ew[leaf(u)] += weights_[u];
  for (int e = static_cast<int>(arena_.size()) - 1; e >= 0; --e) {
    const int parent = arena_[e].parent;
    if (parent >= 0) ew[parent] += ew[e];
  }
  return ew;
}

ParticleEnsemble::BridgeTarget ParticleEnsemble::bridge_target(int k, int slot) const {
  const EventNode& next = arena_[layers_[k].event[slot]];
  const EventNode& prev = arena_[next.parent];
  return {grid_.time(next.step), &next.mark, grid_.time(prev.step)};
}

std::size_t genealogy_bytes(int particles, int steps, int dim) {
  const std::size_t per_node = 2 * sizeof(double) * dim + 2 * sizeof(int) + sizeof(double);
  return per_node * static_cast<std::size_t>(particles) * (static_cast<std::size_t>(steps) + 1);
}

}  // namespace hsde
