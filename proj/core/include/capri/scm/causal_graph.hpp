#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace capri::scm {

enum class NodeKind {
  Observed,
  Latent,     // endogenous but unmeasured (z)
  Exogenous,  // noise roots u_*
};

struct MechanismSignature {
  std::string output;
  std::vector<std::string> inputs;  // endogenous parents, sorted
  std::string noise;                // exogenous parent, empty if none
};

/// Directed graph over named causal variables. Node names are unique; edges
/// are stored as sets so insertion order never affects queries.
class CausalGraph {
 public:
  void add_node(const std::string& name, NodeKind kind);
  void add_edge(const std::string& from, const std::string& to);

  bool has_node(const std::string& name) const { return kinds_.contains(name); }
  NodeKind kind(const std::string& name) const;

  std::vector<std::string> nodes() const;
  std::vector<std::pair<std::string, std::string>> edges() const;
  std::set<std::string> parents(const std::string& name) const;
  std::set<std::string> children(const std::string& name) const;
  std::set<std::string> descendants(const std::string& name) const;

  /// One signature per node that has at least one endogenous parent.
  std::vector<MechanismSignature> mechanisms() const;

  /// Copy with every outgoing edge of `nodes` removed.
  CausalGraph without_outgoing(const std::set<std::string>& nodes) const;

  std::string to_dot() const;

 private:
  const std::set<std::string>& edges_from(const std::string& name) const;
  const std::set<std::string>& edges_to(const std::string& name) const;

  std::map<std::string, NodeKind> kinds_;
  std::map<std::string, std::set<std::string>> out_;
  std::map<std::string, std::set<std::string>> in_;
};

/// Kahn's algorithm; true iff the graph has no directed cycle.
bool check_acyclic(const CausalGraph& graph);

/// v, t, a → i; i, v, t, a → z; v, t, a, z → snr; plus exogenous u_i, u_z,
/// u_snr feeding i, z and snr respectively.
CausalGraph build_capri_dag();

/// True iff every node of `xs` is d-separated from every node of `ys` given
/// `zs` (Bayes-ball reachability).
bool d_separated(const CausalGraph& graph, const std::set<std::string>& xs,
                 const std::set<std::string>& ys, const std::set<std::string>& zs);

struct Identifiability {
  bool identifiable = false;
  std::vector<std::string> adjustment_set;
  std::string explanation;
};

/// Backdoor identifiability of P(outcome | do(treatments)).
///
/// Every endogenous parent of the outcome must be observed, or latent and
/// computable: it has an observed parent, and its other parents are observed
/// or private exogenous noise. Exogenous parents of the outcome must be
/// private to it. The adjustment set is the observed parents of the outcome
/// and of its computable latent parents, minus the treatments; the answer is
/// then confirmed by d-separation of treatments and outcome given that set in
/// the graph with the treatments' outgoing edges removed.
///
/// Throws Error(UnknownNode).
Identifiability backdoor_identifiable(const CausalGraph& graph,
                                      std::span<const std::string> treatments,
                                      const std::string& outcome);

}  // namespace capri::scm
