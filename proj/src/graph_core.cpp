#include "graphamp/graph_core.hpp"

#include <algorithm>
#include <set>

#include "graphamp/error.hpp"

namespace graphamp {

GraphSpec& GraphSpec::add_vertex(const std::string& id, int dim) {
  vertices.push_back({id, dim});
  return *this;
}

GraphSpec& GraphSpec::add_edge(const std::string& from, const std::string& to, int cols) {
  edges.push_back({{from, to}, cols});
  return *this;
}

GraphSpec& GraphSpec::add_pair(const std::string& a, const std::string& b, int cols) {
  add_edge(a, b, cols);
  if (a != b) add_edge(b, a, cols);
  return *this;
}

bool GraphSpec::has_vertex(const std::string& id) const {
  return std::any_of(vertices.begin(), vertices.end(), [&](const Vertex& v) { return v.id == id; });
}

bool GraphSpec::has_edge(const EdgeId& e) const {
  return std::any_of(edges.begin(), edges.end(), [&](const EdgeDecl& d) { return d.id == e; });
}

int GraphSpec::dim(const std::string& vertex) const {
  for (const auto& v : vertices)
    if (v.id == vertex) return v.dim;
  fail(ErrorKind::logic, "vertex not in graph: " + vertex);
}

int GraphSpec::cols(const EdgeId& e) const {
  for (const auto& d : edges)
    if (d.id == e) return d.cols;
  fail(ErrorKind::logic, "edge not in graph: " + e.label());
}

long GraphSpec::N() const {
  long n = 0;
  for (const auto& d : edges) n += dim(d.id.end);
  return n;
}

namespace {

Validation violation(std::string msg) { return {false, std::move(msg)}; }

}  // namespace

Validation validate(const GraphSpec& g) {
  if (g.vertices.empty()) return violation("graph has no vertices");
  if (g.edges.empty()) return violation("graph has no edges");

  std::set<std::string> ids;
  for (const auto& v : g.vertices) {
    if (!ids.insert(v.id).second) return violation("duplicate vertex " + v.id);
    if (v.dim < 1) return violation("vertex " + v.id + " has dim " + std::to_string(v.dim) + " < 1");
  }

  std::set<EdgeId> seen;
  for (const auto& d : g.edges) {
    const auto& e = d.id;
    if (!ids.count(e.start)) return violation("edge " + e.label() + " uses unknown vertex " + e.start);
    if (!ids.count(e.end)) return violation("edge " + e.label() + " uses unknown vertex " + e.end);
    if (!seen.insert(e).second) return violation("multi-edge " + e.label());
    if (d.cols < 1) return violation("edge " + e.label() + " has cols " + std::to_string(d.cols) + " < 1");
  }

  for (const auto& d : g.edges) {
    const EdgeId r = d.id.reversed();
    if (!seen.count(r)) return violation("missing symmetric edge " + r.label());
    if (g.cols(r) != d.cols) return violation("column mismatch between " + d.id.label() + " and " + r.label());
  }
  return {};
}

void require_valid(const GraphSpec& g) {
  auto v = validate(g);
  if (!v) fail(ErrorKind::config, "invalid graph: " + v.message);
}

std::vector<EdgeId> canonical_edge_order(const GraphSpec& g) {
  std::vector<EdgeId> loops;
  std::vector<EdgeId> forward;
  for (const auto& d : g.edges) {
    const auto& e = d.id;
    if (e.is_loop())
      loops.push_back(e);
    else if (e.start < e.end)
      forward.push_back(e);
  }
  std::sort(loops.begin(), loops.end());
  std::sort(forward.begin(), forward.end());

  std::vector<EdgeId> out = loops;
  for (const auto& e : forward) {
    out.push_back(e);
    out.push_back(e.reversed());
  }
  return out;
}

std::vector<EdgeId> edges_into(const GraphSpec& g, const EdgeId& e) {
  if (!g.has_edge(e)) fail(ErrorKind::logic, "edge not in graph: " + e.label());
  std::vector<EdgeId> out;
  for (const auto& c : canonical_edge_order(g))
    if (c.end == e.start) out.push_back(c);
  return out;
}

GraphSpec graph_from_json(const nlohmann::json& j, std::vector<EdgeId>* closure) {
  GraphSpec g;
  try {
    for (const auto& v : j.at("vertices")) g.add_vertex(v.at("id").get<std::string>(), v.at("dim").get<int>());
    for (const auto& e : j.at("edges"))
      g.add_edge(e.at("from").get<std::string>(), e.at("to").get<std::string>(), e.value("cols", 1));
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::config, std::string("graph: ") + ex.what());
  }

  const auto declared = g.edges;
  for (const auto& d : declared) {
    const EdgeId r = d.id.reversed();
    if (!g.has_edge(r)) {
      g.add_edge(r.start, r.end, d.cols);
      if (closure) closure->push_back(r);
    }
  }
  require_valid(g);
  return g;
}

nlohmann::json graph_to_json(const GraphSpec& g) {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (const auto& v : g.vertices) j["vertices"].push_back({{"id", v.id}, {"dim", v.dim}});
  j["edges"] = nlohmann::json::array();
  for (const auto& e : canonical_edge_order(g))
    j["edges"].push_back({{"from", e.start}, {"to", e.end}, {"cols", g.cols(e)}});
  return j;
}

GraphSpec asymmetric_graph(int n_v, int n_w, int q) {
  GraphSpec g;
  g.add_vertex("v", n_v).add_vertex("w", n_w).add_pair("v", "w", q);
  return g;
}

GraphSpec loop_graph(int n, int q) {
  GraphSpec g;
  g.add_vertex("v", n).add_edge("v", "v", q);
  return g;
}

GraphSpec line_graph(const std::vector<int>& dims, int q) {
  GraphSpec g;
  for (size_t i = 0; i < dims.size(); ++i) g.add_vertex("v" + std::to_string(i), dims[i]);
  for (size_t i = 0; i + 1 < dims.size(); ++i) g.add_pair("v" + std::to_string(i), "v" + std::to_string(i + 1), q);
  return g;
}

}  // namespace graphamp
