#include <doctest.h>

#include <algorithm>

#include "graphamp/error.hpp"
#include "graphamp/graph_core.hpp"

using namespace graphamp;

namespace {

// Spike loop on v plus a two-layer prior chain v - p1 - p2.
GraphSpec spike_two_layer() {
  GraphSpec g;
  g.add_vertex("v", 10).add_vertex("p1", 6).add_vertex("p2", 4);
  g.add_edge("v", "v").add_pair("v", "p1").add_pair("p1", "p2");
  return g;
}

}  // namespace

TEST_CASE("single loop graph is valid and N equals the node dimension") {
  auto g = loop_graph(4);
  CHECK(validate(g).ok);
  CHECK(g.N() == 4);
}

TEST_CASE("missing reverse edge is reported") {
  GraphSpec g;
  g.add_vertex("v", 2).add_vertex("w", 3).add_edge("v", "w");
  auto r = validate(g);
  CHECK_FALSE(r.ok);
  CHECK(r.message == "missing symmetric edge (w,v)");
}

TEST_CASE("asymmetric graph N sums end-node dimensions") {
  auto g = asymmetric_graph(3, 5);
  CHECK(validate(g).ok);
  CHECK(g.N() == 8);
}

TEST_CASE("validation rejects empty, duplicate and malformed graphs") {
  GraphSpec empty;
  empty.add_vertex("v", 1);
  CHECK(validate(empty).message == "graph has no edges");

  GraphSpec multi = asymmetric_graph(2, 2);
  multi.add_edge("v", "w");
  CHECK(validate(multi).message == "multi-edge (v,w)");

  GraphSpec cols;
  cols.add_vertex("v", 2).add_vertex("w", 2).add_edge("v", "w", 2).add_edge("w", "v", 1);
  CHECK(validate(cols).message == "column mismatch between (v,w) and (w,v)");

  GraphSpec dims;
  dims.add_vertex("v", 0).add_edge("v", "v");
  CHECK_FALSE(validate(dims).ok);

  GraphSpec unknown;
  unknown.add_vertex("v", 1).add_edge("v", "x");
  CHECK(validate(unknown).message == "edge (v,x) uses unknown vertex x");
}

TEST_CASE("canonical order puts loops first then forward/backward pairs") {
  auto line = line_graph({2, 3, 4});
  std::vector<EdgeId> want{{"v0", "v1"}, {"v1", "v0"}, {"v1", "v2"}, {"v2", "v1"}};
  CHECK(canonical_edge_order(line) == want);

  auto sp = spike_two_layer();
  std::vector<EdgeId> want_sp{{"v", "v"}, {"p1", "p2"}, {"p2", "p1"}, {"p1", "v"}, {"v", "p1"}};
  CHECK(canonical_edge_order(sp) == want_sp);
  CHECK(canonical_edge_order(loop_graph(3)) == std::vector<EdgeId>{{"v", "v"}});
}

TEST_CASE("edges_into lists every edge ending at the start node") {
  CHECK(edges_into(loop_graph(3), {"v", "v"}) == std::vector<EdgeId>{{"v", "v"}});
  CHECK(edges_into(asymmetric_graph(3, 5), {"v", "w"}) == std::vector<EdgeId>{{"w", "v"}});
  auto line = line_graph({2, 3, 4});
  CHECK(edges_into(line, {"v1", "v2"}) == std::vector<EdgeId>{{"v0", "v1"}, {"v2", "v1"}});
  CHECK_THROWS_WITH_AS(edges_into(line, {"v0", "v2"}), "edge not in graph: (v0,v2)", Error);
}

TEST_CASE("property: reversed edge always feeds into the edge; order is a permutation") {
  for (const auto& g : {loop_graph(2), asymmetric_graph(2, 3), line_graph({1, 2, 3, 4}), spike_two_layer()}) {
    auto order = canonical_edge_order(g);
    CHECK(order.size() == g.edges.size());
    for (const auto& d : g.edges) {
      CHECK(std::count(order.begin(), order.end(), d.id) == 1);
      auto in = edges_into(g, d.id);
      CHECK(std::count(in.begin(), in.end(), d.id.reversed()) == 1);
    }
  }
}

TEST_CASE("json round trip applies symmetric closure") {
  auto j = nlohmann::json::parse(R"({"vertices":[{"id":"v","dim":3},{"id":"w","dim":5}],
                                    "edges":[{"from":"v","to":"w","cols":2}]})");
  std::vector<EdgeId> closure;
  auto g = graph_from_json(j, &closure);
  CHECK(closure == std::vector<EdgeId>{{"w", "v"}});
  CHECK(g.cols({"w", "v"}) == 2);
  CHECK(g.N() == 8);
  auto back = graph_from_json(graph_to_json(g));
  CHECK(canonical_edge_order(back) == canonical_edge_order(g));
  CHECK_THROWS_AS(graph_from_json(nlohmann::json::parse(R"({"vertices":[]})")), Error);
}
