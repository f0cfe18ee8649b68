#pragma once

#include <compare>
#include <string>
#include <vector>

#include <json.hpp>

namespace graphamp {

struct EdgeId {
  std::string start;
  std::string end;

  bool is_loop() const { return start == end; }
  EdgeId reversed() const { return {end, start}; }
  std::string label() const { return "(" + start + "," + end + ")"; }
  auto operator<=>(const EdgeId&) const = default;
};

struct Vertex {
  std::string id;
  int dim = 0;
};

struct EdgeDecl {
  EdgeId id;
  int cols = 1;
};

// Vertices and edges are kept as declared so that duplicates can be reported.
struct GraphSpec {
  std::vector<Vertex> vertices;
  std::vector<EdgeDecl> edges;

  GraphSpec& add_vertex(const std::string& id, int dim);
  GraphSpec& add_edge(const std::string& from, const std::string& to, int cols = 1);
  GraphSpec& add_pair(const std::string& a, const std::string& b, int cols = 1);

  bool has_vertex(const std::string& id) const;
  bool has_edge(const EdgeId& e) const;
  int dim(const std::string& vertex) const;
  int cols(const EdgeId& e) const;
  int rows(const EdgeId& e) const { return dim(e.end); }
  long N() const;
};

struct Validation {
  bool ok = true;
  std::string message;
  explicit operator bool() const { return ok; }
};

Validation validate(const GraphSpec& g);
void require_valid(const GraphSpec& g);

std::vector<EdgeId> canonical_edge_order(const GraphSpec& g);
std::vector<EdgeId> edges_into(const GraphSpec& g, const EdgeId& e);

// Parses {"vertices":[{"id","dim"}],"edges":[{"from","to","cols"}]}; missing
// reverse edges are added and listed in `closure`.
GraphSpec graph_from_json(const nlohmann::json& j, std::vector<EdgeId>* closure = nullptr);
nlohmann::json graph_to_json(const GraphSpec& g);

// Two-node graph v<->w used by GAMP-type iterations.
GraphSpec asymmetric_graph(int n_v, int n_w, int q = 1);
GraphSpec loop_graph(int n, int q = 1);
GraphSpec line_graph(const std::vector<int>& dims, int q = 1);

}  // namespace graphamp
