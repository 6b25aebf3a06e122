#pragma once

#include <span>
#include <vector>

#include "hsde/inducing.hpp"
#include "hsde/sde.hpp"
#include "hsde/types.hpp"

namespace hsde {

struct EventNode {
  double time;  // continuous absolute time
  int step;     // grid step the bridge pins at
  double tau;
  Vector mark;
  int parent;  // -1 for the root anchor
};

/// Append-only store of event chains shared between particles. A particle
/// owns the chain from its leaf back to the root anchor (tau_0 = 0, m_0 = 0),
/// so copying a particle on resampling copies one index.
class EventArena {
 public:
  int add_root(double origin, int dim);
  /// Appends a child of `parent`, snapping its time to the grid. Throws when
  /// the child would share a bin with its parent.
  int add(int parent, double tau, Vector mark, const TimeGrid& grid);

  const EventNode& operator[](int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  /// Events from the root (exclusive) to `leaf` (inclusive), in time order.
  InducingSequence chain(int leaf, double origin) const;
  int chain_length(int leaf) const;

 private:
  std::vector<EventNode> nodes_;
};

/// Per-step particle storage. Column u of x/y is particle u at this step;
/// ancestor[u] indexes the previous layer; event[u] is the arena node the
/// bridge was heading to on the transition into this step.
struct GenealogyLayer {
  Matrix x;
  Matrix y;
  std::vector<int> ancestor;
  std::vector<int> event;
};

/// Weighted particle trajectories on a grid, stored as a genealogy so memory
/// and time stay linear in U * K.
class ParticleEnsemble {
 public:
  ParticleEnsemble(TimeGrid grid, std::vector<GenealogyLayer> layers, EventArena arena,
                   std::vector<int> leaves, std::vector<double> weights);

  /// Builds an ensemble from explicit paths and event sequences (one per
  /// particle). Weights are normalised.
  static ParticleEnsemble from_paths(const TimeGrid& grid, std::span<const LatentPath> paths,
                                     std::span<const InducingSequence> events,
                                     std::span<const double> weights);

  int size() const { return static_cast<int>(weights_.size()); }
  int steps() const { return grid_.steps(); }
  int dim() const { return static_cast<int>(layers_.front().x.rows()); }
  const TimeGrid& grid() const { return grid_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<GenealogyLayer>& layers() const { return layers_; }
  const EventArena& arena() const { return arena_; }
  int leaf(int u) const { return leaves_[static_cast<std::size_t>(u)]; }

  /// Column of layer k on particle u's lineage.
  int slot(int k, int u) const;
  LatentPath path(int u) const;
  InducingSequence events(int u) const;
  int event_count(int u) const;

  /// For every layer, the summed final weight of the particles descending
  /// from each column.
  const std::vector<std::vector<double>>& node_weights() const { return node_weights_; }
  /// For every arena node, the summed final weight of the particles whose
  /// chain contains it.
  std::vector<double> event_weights() const;

  /// Bridge endpoints for the transition into layer k at column `slot`:
  /// (next event time, next mark, previous event time), all grid-snapped.
  struct BridgeTarget {
    double next_time;
    const Vector* mark;
    double prev_time;
  };
  BridgeTarget bridge_target(int k, int slot) const;

 private:
  TimeGrid grid_;
  std::vector<GenealogyLayer> layers_;
  EventArena arena_;
  std::vector<int> leaves_;
  std::vector<double> weights_;
  std::vector<std::vector<double>> node_weights_;
};

/// Bytes of genealogy storage for U particles over K steps in D dimensions.
std::size_t genealogy_bytes(int particles, int steps, int dim);

}  // namespace hsde
