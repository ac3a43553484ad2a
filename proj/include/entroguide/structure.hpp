#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file structure.hpp
 * @brief Reasoning structure: chains of sentence-level nodes
 *
 * A structure holds every chain built for one task. Nodes are immutable and
 * shared by pointer, so a chain forked by expand() holds the very same node
 * objects as its parent up to the split point. Depth is the longest chain.
 */

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "entroguide/metrics.hpp"

namespace entroguide {

using ChainId = int;
using NodeId = std::uint64_t;

struct ReasoningNode {
  NodeId id = 0;
  int step_index = 0;  ///< 1-based position within its chain
  std::string text;
  std::vector<TokenRecord> tokens;
  StepMetrics metrics;
};

using NodePtr = std::shared_ptr<const ReasoningNode>;

enum class ChainStatus { Active, StopPending, Finalized };

/// Where a forked chain came from: parent chain and shared prefix length.
struct ChainOrigin {
  ChainId chain = 0;
  std::size_t split_index = 0;

  bool operator==(const ChainOrigin&) const = default;
};

class StructureError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Chain {
 public:
  Chain(ChainId id, std::vector<NodePtr> prefix, std::optional<ChainOrigin> parent)
      : id_(id), nodes_(std::move(prefix)), parent_(parent) {}

  ChainId id() const { return id_; }
  const std::vector<NodePtr>& nodes() const { return nodes_; }
  std::size_t length() const { return nodes_.size(); }
  ChainStatus status() const { return status_; }
  bool is_open() const { return status_ != ChainStatus::Finalized; }
  bool is_finalized() const { return status_ == ChainStatus::Finalized; }
  /// Grace steps left while StopPending; 0 otherwise.
  int stop_remaining() const { return stop_remaining_; }
  const std::optional<ChainOrigin>& parent() const { return parent_; }
  const std::optional<std::string>& final_answer() const { return final_answer_; }

  std::vector<std::string> step_texts() const {
    std::vector<std::string> out;
    out.reserve(nodes_.size());
    for (const auto& n : nodes_) out.push_back(n->text);
    return out;
  }

  /// Mean normalized step entropy over the chain; 0 for an empty chain.
  double mean_normalized_entropy() const {
    if (nodes_.empty()) return 0.0;
    double s = 0.0;
    for (const auto& n : nodes_) s += n->metrics.normalized_entropy;
    return s / static_cast<double>(nodes_.size());
  }

  void deepen(NodePtr node) {
    if (is_finalized()) throw StructureError("chain finalized");
    check_next(node);
    nodes_.push_back(std::move(node));
  }

  /// Idempotent.
  void finalize() {
    status_ = ChainStatus::Finalized;
    stop_remaining_ = 0;
  }

  void enter_stop_pending(int remaining) {
    if (is_finalized()) throw StructureError("chain finalized");
    if (remaining < 0) throw StructureError("negative stop grace");
    status_ = ChainStatus::StopPending;
    stop_remaining_ = remaining;
  }

  /// Consumes one grace step; returns the steps still left.
  int consume_stop_grace() {
    if (status_ != ChainStatus::StopPending) throw StructureError("chain not stop-pending");
    if (stop_remaining_ > 0) --stop_remaining_;
    return stop_remaining_;
  }

  void set_final_answer(std::string answer) {
    if (is_finalized() && final_answer_) throw StructureError("chain finalized");
    final_answer_ = std::move(answer);
  }

  /// Order-sensitive hash of node identities.
  std::size_t node_hash() const {
    std::size_t h = 1469598103934665603ull;
    for (const auto& n : nodes_) h = (h ^ std::hash<NodeId>{}(n->id)) * 1099511628211ull;
    return h;
  }

 private:
  void check_next(const NodePtr& node) const {
    if (!node) throw StructureError("null node");
    if (node->step_index != static_cast<int>(nodes_.size()) + 1)
      throw StructureError("node step_index must be chain length + 1");
  }

  friend class ReasoningStructure;

  ChainId id_;
  std::vector<NodePtr> nodes_;
  std::optional<ChainOrigin> parent_;
  ChainStatus status_ = ChainStatus::Active;
  int stop_remaining_ = 0;
  std::optional<std::string> final_answer_;
};

class ReasoningStructure {
 public:
  static constexpr int kDefaultMaxChains = 16;

  /// Starts with one active, empty chain.
  ReasoningStructure(std::string task, int max_chains = kDefaultMaxChains)
      : task_(std::move(task)), max_chains_(max_chains) {
    if (task_.empty()) throw StructureError("empty task");
    if (max_chains_ < 1) throw StructureError("max_chains must be >= 1");
    chains_.emplace_back(0, std::vector<NodePtr>{}, std::nullopt);
  }

  const std::string& task() const { return task_; }
  int max_chains() const { return max_chains_; }
  std::size_t chain_count() const { return chains_.size(); }
  bool at_budget() const { return static_cast<int>(chains_.size()) >= max_chains_; }

  Chain& chain(ChainId id) { return chains_.at(static_cast<std::size_t>(id)); }
  const Chain& chain(ChainId id) const { return chains_.at(static_cast<std::size_t>(id)); }
  const std::deque<Chain>& chains() const { return chains_; }

  /// Builds a node with a fresh identifier. Metrics are computed from tokens.
  NodePtr make_node(int step_index, std::string text, std::vector<TokenRecord> tokens,
                    TokenEntropyMode mode = TokenEntropyMode::Contribution) {
    if (text.empty()) throw StructureError("empty node text");
    if (tokens.empty()) throw StructureError("node without tokens");
    auto metrics = compute_step_metrics(tokens, mode);
    return std::make_shared<const ReasoningNode>(
        ReasoningNode{next_node_id_++, step_index, std::move(text), std::move(tokens), metrics});
  }

  void deepen(ChainId id, NodePtr node) { chain(id).deepen(std::move(node)); }

  /// Forks `id` at its current end. The original receives `a`, a new chain
  /// sharing the same prefix receives `b`. At the chain budget this degrades
  /// to deepen(id, a) and returns nullopt.
  std::optional<ChainId> expand(ChainId id, NodePtr a, NodePtr b) {
    Chain& c = chain(id);
    if (c.status() != ChainStatus::Active) throw StructureError("expand requires an active chain");
    c.check_next(a);
    c.check_next(b);
    if (a->id == b->id) throw StructureError("expand requires two distinct nodes");
    if (at_budget()) {
      c.deepen(std::move(a));
      return std::nullopt;
    }
    const auto new_id = static_cast<ChainId>(chains_.size());
    std::vector<NodePtr> prefix = c.nodes();
    const std::size_t split = prefix.size();
    c.deepen(std::move(a));
    chains_.emplace_back(new_id, std::move(prefix), ChainOrigin{id, split});
    chains_.back().deepen(std::move(b));
    return new_id;
  }

  void finalize(ChainId id) { chain(id).finalize(); }

  int depth() const {
    std::size_t d = 0;
    for (const auto& c : chains_) d = std::max(d, c.length());
    return static_cast<int>(d);
  }

  /// Distinct nodes across all chains (shared prefixes count once).
  std::size_t node_count() const {
    std::vector<NodeId> ids;
    for (const auto& c : chains_)
      for (const auto& n : c.nodes()) ids.push_back(n->id);
    std::sort(ids.begin(), ids.end());
    return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
  }

  bool any_open() const {
    return std::any_of(chains_.begin(), chains_.end(), [](const Chain& c) { return c.is_open(); });
  }

  /// Ids of open chains in ascending order.
  std::vector<ChainId> open_chain_ids() const {
    std::vector<ChainId> out;
    for (const auto& c : chains_)
      if (c.is_open()) out.push_back(c.id());
    return out;
  }

 private:
  std::string task_;
  int max_chains_;
  std::deque<Chain> chains_;
  NodeId next_node_id_ = 1;
};

inline const char* to_string(ChainStatus s) {
  switch (s) {
    case ChainStatus::Active: return "active";
    case ChainStatus::StopPending: return "stop_pending";
    case ChainStatus::Finalized: return "finalized";
  }
  return "?";
}

}  // namespace entroguide
