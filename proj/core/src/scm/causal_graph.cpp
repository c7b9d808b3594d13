#include "capri/scm/causal_graph.hpp"

#include <deque>
#include <sstream>

#include "capri/error.hpp"

namespace capri::scm {
namespace {

const std::set<std::string> kEmpty;

std::string join(const std::set<std::string>& items) {
  std::string out = "{";
  bool first = true;
  for (const auto& s : items) {
    if (!first) out += ", ";
    out += s;
    first = false;
  }
  return out + "}";
}

}  // namespace

void CausalGraph::add_node(const std::string& name, NodeKind kind) {
  if (name.empty()) throw Error(ErrorCode::InvalidArgument, "empty node name");
  if (!kinds_.emplace(name, kind).second) {
    throw Error(ErrorCode::InvalidArgument, "duplicate node " + name);
  }
}

void CausalGraph::add_edge(const std::string& from, const std::string& to) {
  if (!has_node(from)) throw Error(ErrorCode::UnknownNode, from);
  if (!has_node(to)) throw Error(ErrorCode::UnknownNode, to);
  out_[from].insert(to);
  in_[to].insert(from);
}

NodeKind CausalGraph::kind(const std::string& name) const {
  auto it = kinds_.find(name);
  if (it == kinds_.end()) throw Error(ErrorCode::UnknownNode, name);
  return it->second;
}

const std::set<std::string>& CausalGraph::edges_from(const std::string& name) const {
  auto it = out_.find(name);
  return it == out_.end() ? kEmpty : it->second;
}

const std::set<std::string>& CausalGraph::edges_to(const std::string& name) const {
  auto it = in_.find(name);
  return it == in_.end() ? kEmpty : it->second;
}

std::vector<std::string> CausalGraph::nodes() const {
  std::vector<std::string> out;
  for (const auto& [name, kind] : kinds_) out.push_back(name);
  return out;
}

std::vector<std::pair<std::string, std::string>> CausalGraph::edges() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [from, tos] : out_) {
    for (const auto& to : tos) out.emplace_back(from, to);
  }
  return out;
}

std::set<std::string> CausalGraph::parents(const std::string& name) const {
  kind(name);
  return edges_to(name);
}

std::set<std::string> CausalGraph::children(const std::string& name) const {
  kind(name);
  return edges_from(name);
}

std::set<std::string> CausalGraph::descendants(const std::string& name) const {
  std::set<std::string> seen;
  std::deque<std::string> queue(edges_from(name).begin(), edges_from(name).end());
  while (!queue.empty()) {
    auto n = queue.front();
    queue.pop_front();
    if (!seen.insert(n).second) continue;
    for (const auto& c : edges_from(n)) queue.push_back(c);
  }
  return seen;
}

std::vector<MechanismSignature> CausalGraph::mechanisms() const {
  std::vector<MechanismSignature> out;
  for (const auto& [name, k] : kinds_) {
    MechanismSignature sig{name, {}, {}};
    for (const auto& p : edges_to(name)) {
      if (kinds_.at(p) == NodeKind::Exogenous) sig.noise = p;
      else sig.inputs.push_back(p);
    }
    if (!sig.inputs.empty()) out.push_back(std::move(sig));
  }
  return out;
}

CausalGraph CausalGraph::without_outgoing(const std::set<std::string>& cut) const {
  CausalGraph g;
  g.kinds_ = kinds_;
  for (const auto& [from, to] : edges()) {
    if (!cut.contains(from)) g.add_edge(from, to);
  }
  return g;
}

std::string CausalGraph::to_dot() const {
  std::ostringstream out;
  out << "digraph capri {\n  rankdir=LR;\n";
  for (const auto& [name, k] : kinds_) {
    out << "  \"" << name << "\"";
    if (k == NodeKind::Latent) out << " [style=dashed]";
    if (k == NodeKind::Exogenous) out << " [style=dotted, shape=plaintext]";
    out << ";\n";
  }
  for (const auto& [from, to] : edges()) out << "  \"" << from << "\" -> \"" << to << "\";\n";
  out << "}\n";
  return out.str();
}

bool check_acyclic(const CausalGraph& graph) {
  std::map<std::string, std::size_t> indegree;
  for (const auto& n : graph.nodes()) indegree[n] = graph.parents(n).size();
  std::deque<std::string> ready;
  for (const auto& [n, d] : indegree) {
    if (d == 0) ready.push_back(n);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    const auto n = ready.front();
    ready.pop_front();
    ++visited;
    for (const auto& c : graph.children(n)) {
      if (--indegree[c] == 0) ready.push_back(c);
    }
  }
  return visited == indegree.size();
}

CausalGraph build_capri_dag() {
  CausalGraph g;
  for (const char* n : {"v", "t", "a", "i", "snr"}) g.add_node(n, NodeKind::Observed);
  g.add_node("z", NodeKind::Latent);
  for (const char* n : {"u_i", "u_z", "u_snr"}) g.add_node(n, NodeKind::Exogenous);

  for (const char* p : {"v", "t", "a", "u_i"}) g.add_edge(p, "i");
  for (const char* p : {"i", "v", "t", "a", "u_z"}) g.add_edge(p, "z");
  for (const char* p : {"v", "t", "a", "z", "u_snr"}) g.add_edge(p, "snr");
  return g;
}

bool d_separated(const CausalGraph& graph, const std::set<std::string>& xs,
                 const std::set<std::string>& ys, const std::set<std::string>& zs) {
  for (const auto& s : {xs, ys, zs}) {
    for (const auto& n : s) graph.kind(n);
  }
  // Ancestors of the conditioning set (colliders with a conditioned
  // descendant are open).
  std::set<std::string> anc_z;
  std::deque<std::string> queue(zs.begin(), zs.end());
  while (!queue.empty()) {
    auto n = queue.front();
    queue.pop_front();
    if (!anc_z.insert(n).second) continue;
    for (const auto& p : graph.parents(n)) queue.push_back(p);
  }

  enum Dir { Up, Down };  // Up: arrived from a child; Down: from a parent
  std::set<std::pair<std::string, Dir>> visited;
  std::deque<std::pair<std::string, Dir>> frontier;
  for (const auto& x : xs) frontier.emplace_back(x, Up);
  while (!frontier.empty()) {
    auto [n, dir] = frontier.front();
    frontier.pop_front();
    if (!visited.insert({n, dir}).second) continue;
    if (!zs.contains(n) && ys.contains(n)) return false;

    if (dir == Up && !zs.contains(n)) {
      for (const auto& p : graph.parents(n)) frontier.emplace_back(p, Up);
      for (const auto& c : graph.children(n)) frontier.emplace_back(c, Down);
    } else if (dir == Down) {
      if (!zs.contains(n)) {
        for (const auto& c : graph.children(n)) frontier.emplace_back(c, Down);
      }
      if (anc_z.contains(n)) {
        for (const auto& p : graph.parents(n)) frontier.emplace_back(p, Up);
      }
    }
  }
  return true;
}

Identifiability backdoor_identifiable(const CausalGraph& graph,
                                      std::span<const std::string> treatments,
                                      const std::string& outcome) {
  graph.kind(outcome);
  std::set<std::string> xs;
  for (const auto& t : treatments) {
    graph.kind(t);
    xs.insert(t);
  }

  Identifiability result;
  const auto outcome_parents = graph.parents(outcome);
  if (xs.contains(outcome)) {
    result.explanation = "outcome is itself a treatment";
    return result;
  }
  bool has_endogenous_parent = false;
  for (const auto& p : outcome_parents) {
    if (graph.kind(p) != NodeKind::Exogenous) has_endogenous_parent = true;
  }
  if (!has_endogenous_parent) {
    result.explanation = outcome + " is a root: it has no mechanism to intervene through";
    return result;
  }

  auto private_noise = [&](const std::string& u, const std::string& child) {
    return graph.kind(u) == NodeKind::Exogenous && graph.children(u) == std::set<std::string>{child};
  };

  std::set<std::string> adjustment;
  for (const auto& p : outcome_parents) {
    switch (graph.kind(p)) {
      case NodeKind::Observed:
        adjustment.insert(p);
        break;
      case NodeKind::Exogenous:
        if (!private_noise(p, outcome)) {
          result.explanation = "exogenous parent " + p + " is shared with " + join(graph.children(p));
          return result;
        }
        break;
      case NodeKind::Latent: {
        bool observed_parent = false;
        for (const auto& q : graph.parents(p)) {
          if (graph.kind(q) == NodeKind::Observed) {
            observed_parent = true;
            adjustment.insert(q);
          } else if (!private_noise(q, p)) {
            result.explanation = "latent parent " + p + " depends on unobserved " + q;
            return result;
          }
        }
        if (!observed_parent) {
          result.explanation = "latent parent " + p + " has no observed causes";
          return result;
        }
        break;
      }
    }
  }
  for (const auto& x : xs) adjustment.erase(x);
  adjustment.erase(outcome);

  const CausalGraph cut = graph.without_outgoing(xs);
  if (!d_separated(cut, xs, {outcome}, adjustment)) {
    result.explanation = "an unblocked backdoor path connects " + join(xs) + " and " + outcome +
                         " given " + join(adjustment);
    return result;
  }

  result.identifiable = true;
  result.adjustment_set.assign(adjustment.begin(), adjustment.end());
  result.explanation = "all parents of " + outcome +
                       " are observed or computable from observed parents; adjusting for " +
                       join(adjustment) + " blocks every backdoor path from " + join(xs);
  return result;
}

}  // namespace capri::scm
