#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svtr/tensor.hpp"

namespace svtr {

/// Tape of executed operations. Ops record themselves into the graph made
/// active by a GraphScope on the current thread; with no active graph they
/// run untracked (inference).
class Graph {
 public:
  struct Node {
    std::string op;
    std::vector<std::uint64_t> inputs;
    std::uint64_t output = 0;
    std::function<void()> backward;
    std::size_t visits = 0;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  void record(Node node) { nodes_.push_back(std::move(node)); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& nodes() { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool contains_output(std::uint64_t id) const;
  /// Drops every node and the intermediates they keep alive.
  void clear() { nodes_.clear(); }

  static Graph* active();

 private:
  friend class GraphScope;
  std::vector<Node> nodes_;
};

class GraphScope {
 public:
  explicit GraphScope(Graph& graph);
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph* previous_;
};

/// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse execution order.
template <typename T>
void backward(const BasicTensor<T>& loss, Graph& graph);

extern template void backward<float>(const BasicTensor<float>&, Graph&);
extern template void backward<double>(const BasicTensor<double>&, Graph&);

}  // namespace svtr
