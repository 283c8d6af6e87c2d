use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{LogicError, Proposition, ReasoningTrace};
use crate::verifier::VerifierScore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    InputFact,
    Derived,
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub proposition: Proposition,
    pub kind: NodeKind,
}

/// One triad of the trace: two premise nodes feeding one derived node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub step_index: u32,
    pub major: usize,
    pub minor: usize,
    pub conclusion: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<VerifierScore>,
}

/// Premise/conclusion DAG built from one trace. Node ids index `nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicTree {
    pub case_id: String,
    pub nodes: Vec<TreeNode>,
    pub edges: Vec<TreeEdge>,
    pub root: usize,
    pub final_answer: String,
}

/// Assembles a trace into a [`LogicTree`].
///
/// Every premise must be one of `input_facts` or the conclusion of an earlier
/// step. A conclusion may not restate one of its own transitive premises
/// (`Cycle`) nor anything already established (`DuplicateConclusion`).
pub fn build_tree(trace: &ReasoningTrace, input_facts: &[Proposition]) -> Result<LogicTree, LogicError> {
    trace.validate()?;
    let facts: HashSet<&Proposition> = input_facts.iter().collect();
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut ids: HashMap<Proposition, usize> = HashMap::new();
    // transitive premises of each node
    let mut ancestors: Vec<BTreeSet<usize>> = Vec::new();
    let mut edges = Vec::with_capacity(trace.triads.len());

    for triad in &trace.triads {
        let mut premise_ids = [0usize; 2];
        for (slot, premise) in [&triad.major, &triad.minor].into_iter().enumerate() {
            let id = match ids.get(premise) {
                Some(&id) => id,
                None if facts.contains(premise) => {
                    nodes.push(TreeNode {
                        proposition: premise.clone(),
                        kind: NodeKind::InputFact,
                    });
                    ancestors.push(BTreeSet::new());
                    ids.insert(premise.clone(), nodes.len() - 1);
                    nodes.len() - 1
                }
                None => {
                    return Err(LogicError::DanglingPremise {
                        step: triad.step_index,
                        proposition: premise.to_string(),
                    })
                }
            };
            premise_ids[slot] = id;
        }

        let mut lineage: BTreeSet<usize> = premise_ids.iter().copied().collect();
        for &p in &premise_ids {
            lineage.extend(ancestors[p].iter().copied());
        }
        if lineage.iter().any(|&n| nodes[n].proposition == triad.conclusion) {
            return Err(LogicError::Cycle {
                step: triad.step_index,
                proposition: triad.conclusion.to_string(),
            });
        }
        if ids.contains_key(&triad.conclusion) || facts.contains(&triad.conclusion) {
            return Err(LogicError::DuplicateConclusion {
                step: triad.step_index,
                proposition: triad.conclusion.to_string(),
            });
        }
        nodes.push(TreeNode {
            proposition: triad.conclusion.clone(),
            kind: NodeKind::Derived,
        });
        ancestors.push(lineage);
        let conclusion = nodes.len() - 1;
        ids.insert(triad.conclusion.clone(), conclusion);
        edges.push(TreeEdge {
            step_index: triad.step_index,
            major: premise_ids[0],
            minor: premise_ids[1],
            conclusion,
            score: None,
        });
    }

    let root = edges.last().map(|e| e.conclusion).expect("validated nonempty");
    nodes[root].kind = NodeKind::Root;
    Ok(LogicTree {
        case_id: trace.case_id.clone(),
        nodes,
        edges,
        root,
        final_answer: trace.final_answer.clone(),
    })
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

impl LogicTree {
    /// Attaches one verifier score per edge, in step order.
    pub fn annotate(&mut self, scores: &[VerifierScore]) {
        for (edge, score) in self.edges.iter_mut().zip(scores) {
            edge.score = Some(*score);
        }
    }

    /// Index of the edge that derives `node`, if any.
    pub fn generating_edge(&self, node: usize) -> Option<usize> {
        self.edges.iter().position(|e| e.conclusion == node)
    }

    /// Graphviz rendering: input facts as boxes, derived nodes as ellipses,
    /// the root double-circled, edges labeled with step index and score.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", escape(&self.case_id));
        let _ = writeln!(out, "  rankdir=BT;");
        for (id, node) in self.nodes.iter().enumerate() {
            let shape = match node.kind {
                NodeKind::InputFact => "box",
                NodeKind::Derived => "ellipse",
                NodeKind::Root => "doublecircle",
            };
            let _ = writeln!(
                out,
                "  n{id} [label=\"{}\", shape={shape}];",
                escape(&node.proposition.to_string())
            );
        }
        for edge in &self.edges {
            let label = match &edge.score {
                Some(s) => format!("step {} ({:.1} {:?})", edge.step_index, s.value, s.rule_fired),
                None => format!("step {}", edge.step_index),
            };
            for (premise, role) in [(edge.major, "major"), (edge.minor, "minor")] {
                let _ = writeln!(
                    out,
                    "  n{premise} -> n{} [label=\"{label}\", tooltip=\"{role}\"];",
                    edge.conclusion
                );
            }
        }
        out.push_str("}\n");
        out
    }

    /// Indented tree view from the root; shared premises are repeated under
    /// every conclusion that uses them.
    pub fn render_outline(&self) -> String {
        let mut out = String::new();
        self.outline_node(self.root, 0, &mut out);
        out
    }

    fn outline_node(&self, node: usize, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match self.generating_edge(node) {
            Some(e) => {
                let edge = &self.edges[e];
                let score = edge
                    .score
                    .map(|s| format!(" f={:.1}", s.value))
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{pad}{}  [step {}{score}]",
                    self.nodes[node].proposition, edge.step_index
                );
                self.outline_node(edge.major, indent + 1, out);
                self.outline_node(edge.minor, indent + 1, out);
            }
            None => {
                let _ = writeln!(out, "{pad}{}", self.nodes[node].proposition);
            }
        }
    }
}
