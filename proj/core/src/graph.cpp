#include "svtr/graph.hpp"

#include <algorithm>

namespace svtr {
namespace {
thread_local Graph* g_active = nullptr;
}  // namespace

Graph* Graph::active() { return g_active; }

bool Graph::contains_output(std::uint64_t id) const {
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [id](const Node& n) { return n.output == id; });
}

GraphScope::GraphScope(Graph& graph) : previous_(g_active) { g_active = &graph; }
GraphScope::~GraphScope() { g_active = previous_; }

template <typename T>
void backward(const BasicTensor<T>& loss, Graph& graph) {
  SVTR_REQUIRE(loss.defined() && loss.numel() == 1, ErrorKind::kContract,
          "backward needs a scalar loss, got " +
              (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  SVTR_REQUIRE(graph.contains_output(loss.id()), ErrorKind::kContract,
          "loss tensor was not produced by this graph");
  auto impl = loss.impl();
  impl->ensure_grad();
  impl->grad[0] = T(1);
  auto& nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    it->backward();
    ++it->visits;
  }
}

template void backward<float>(const BasicTensor<float>&, Graph&);
template void backward<double>(const BasicTensor<double>&, Graph&);

}  // namespace svtr
