//! Propositional representation of reasoning steps: the proposition grammar,
//! the tagged rollout format, and logic-tree assembly.

mod parse;
mod proposition;
mod rollout;
mod tree;

use std::fmt;

pub use parse::{is_valid_atom_name, parse_proposition, MAX_DEPTH};
pub use proposition::Proposition;
pub use rollout::{parse_rollout, parse_rollouts, ReasoningTrace, Triad};
pub use tree::{build_tree, LogicTree, NodeKind, TreeEdge, TreeNode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogicError {
    /// `position` is a byte column, within the line when `line` is set.
    Syntax {
        line: Option<usize>,
        position: usize,
        expected: String,
        found: String,
    },
    Depth {
        limit: usize,
    },
    DanglingPremise {
        step: u32,
        proposition: String,
    },
    Cycle {
        step: u32,
        proposition: String,
    },
    DuplicateConclusion {
        step: u32,
        proposition: String,
    },
}

impl LogicError {
    pub(crate) fn syntax(position: usize, expected: impl Into<String>, found: impl Into<String>) -> Self {
        LogicError::Syntax {
            line: None,
            position,
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub(crate) fn at_line(self, line_no: usize) -> Self {
        match self {
            LogicError::Syntax {
                position,
                expected,
                found,
                ..
            } => LogicError::Syntax {
                line: Some(line_no),
                position,
                expected,
                found,
            },
            other => other,
        }
    }

    pub(crate) fn shifted(self, offset: usize) -> Self {
        match self {
            LogicError::Syntax {
                line,
                position,
                expected,
                found,
            } => LogicError::Syntax {
                line,
                position: position + offset,
                expected,
                found,
            },
            other => other,
        }
    }
}

impl fmt::Display for LogicError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogicError::Syntax {
                line,
                position,
                expected,
                found,
            } => {
                if let Some(line) = line {
                    write!(f, "syntax error at line {line}, column {}: ", position + 1)?;
                } else {
                    write!(f, "syntax error at offset {position}: ")?;
                }
                write!(f, "expected {expected}, found `{found}`")
            }
            LogicError::Depth { limit } => write!(f, "proposition nested deeper than {limit}"),
            LogicError::DanglingPremise { step, proposition } => write!(
                f,
                "DanglingPremiseError: step {step} uses `{proposition}`, which is neither an input fact nor an earlier conclusion"
            ),
            LogicError::Cycle { step, proposition } => write!(
                f,
                "CycleError: step {step} concludes `{proposition}`, one of its own premises"
            ),
            LogicError::DuplicateConclusion { step, proposition } => write!(
                f,
                "step {step} concludes `{proposition}`, which is already established"
            ),
        }
    }
}

impl std::error::Error for LogicError {}
