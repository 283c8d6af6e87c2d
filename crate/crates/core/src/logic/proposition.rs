use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A propositional formula over lowercase atoms.
///
/// Serialized as nested tagged objects, e.g.
/// `{"op":"implies","antecedent":{"op":"atom","name":"a"},"consequent":{"op":"atom","name":"b"}}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Proposition {
    Atom {
        name: String,
    },
    Not {
        inner: Box<Proposition>,
    },
    Implies {
        antecedent: Box<Proposition>,
        consequent: Box<Proposition>,
    },
    And {
        left: Box<Proposition>,
        right: Box<Proposition>,
    },
}

impl Proposition {
    /// Builds an atom. The name is lowercased; callers that need validation go
    /// through the parser.
    pub fn atom(name: impl AsRef<str>) -> Self {
        Proposition::Atom {
            name: name.as_ref().to_ascii_lowercase(),
        }
    }

    pub fn not(inner: Proposition) -> Self {
        Proposition::Not {
            inner: Box::new(inner),
        }
    }

    pub fn implies(antecedent: Proposition, consequent: Proposition) -> Self {
        Proposition::Implies {
            antecedent: Box::new(antecedent),
            consequent: Box::new(consequent),
        }
    }

    pub fn and(left: Proposition, right: Proposition) -> Self {
        Proposition::And {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Proposition::Atom { name } => Some(name),
            _ => None,
        }
    }

    /// Splits an implication into `(antecedent, consequent)`.
    pub fn as_implication(&self) -> Option<(&Proposition, &Proposition)> {
        match self {
            Proposition::Implies {
                antecedent,
                consequent,
            } => Some((antecedent, consequent)),
            _ => None,
        }
    }

    pub fn as_negation(&self) -> Option<&Proposition> {
        match self {
            Proposition::Not { inner } => Some(inner),
            _ => None,
        }
    }

    /// Height of the syntax tree; atoms have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Proposition::Atom { .. } => 0,
            Proposition::Not { inner } => 1 + inner.depth(),
            Proposition::Implies {
                antecedent,
                consequent,
            } => 1 + antecedent.depth().max(consequent.depth()),
            Proposition::And { left, right } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn collect_atoms<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Proposition::Atom { name } => {
                out.insert(name);
            }
            Proposition::Not { inner } => inner.collect_atoms(out),
            Proposition::Implies {
                antecedent,
                consequent,
            } => {
                antecedent.collect_atoms(out);
                consequent.collect_atoms(out);
            }
            Proposition::And { left, right } => {
                left.collect_atoms(out);
                right.collect_atoms(out);
            }
        }
    }

    pub fn atoms(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    /// Applies `f` to every atom name, keeping the structure.
    pub fn rename_atoms(&self, f: &impl Fn(&str) -> String) -> Proposition {
        match self {
            Proposition::Atom { name } => Proposition::Atom { name: f(name) },
            Proposition::Not { inner } => Proposition::not(inner.rename_atoms(f)),
            Proposition::Implies {
                antecedent,
                consequent,
            } => Proposition::implies(antecedent.rename_atoms(f), consequent.rename_atoms(f)),
            Proposition::And { left, right } => {
                Proposition::and(left.rename_atoms(f), right.rename_atoms(f))
            }
        }
    }

    fn fmt_level(&self, f: &mut fmt::Formatter<'_>, level: Level) -> fmt::Result {
        let own = match self {
            Proposition::Atom { .. } | Proposition::Not { .. } => Level::Unary,
            Proposition::And { .. } => Level::Conj,
            Proposition::Implies { .. } => Level::Impl,
        };
        let wrap = own < level;
        if wrap {
            f.write_str("( ")?;
        }
        match self {
            Proposition::Atom { name } => f.write_str(name)?,
            Proposition::Not { inner } => {
                f.write_str("not ")?;
                inner.fmt_level(f, Level::Unary)?;
            }
            Proposition::And { left, right } => {
                left.fmt_level(f, Level::Conj)?;
                f.write_str(" and ")?;
                right.fmt_level(f, Level::Unary)?;
            }
            Proposition::Implies {
                antecedent,
                consequent,
            } => {
                f.write_str("if ")?;
                antecedent.fmt_level(f, Level::Impl)?;
                f.write_str(" then ")?;
                consequent.fmt_level(f, Level::Impl)?;
            }
        }
        if wrap {
            f.write_str(" )")?;
        }
        Ok(())
    }
}

// Binding strength, loosest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Level {
    Impl,
    Conj,
    Unary,
}

/// Renders in the surface grammar accepted by [`crate::logic::parse_proposition`],
/// with the minimum parentheses needed to parse back to the same tree.
impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_level(f, Level::Impl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_minimal_parentheses() {
        let a = Proposition::atom("a");
        let b = Proposition::atom("b");
        let c = Proposition::atom("c");
        let p = Proposition::implies(Proposition::and(a.clone(), b.clone()), c.clone());
        assert_eq!(p.to_string(), "if a and b then c");
        let q = Proposition::and(a.clone(), Proposition::and(b.clone(), c.clone()));
        assert_eq!(q.to_string(), "a and ( b and c )");
        let r = Proposition::not(Proposition::implies(a, b));
        assert_eq!(r.to_string(), "not ( if a then b )");
    }

    #[test]
    fn json_uses_op_tag() {
        let p = Proposition::not(Proposition::atom("Lesion"));
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"op":"not","inner":{"op":"atom","name":"lesion"}}"#);
        let back: Proposition = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn depth_counts_connectives() {
        let p = Proposition::implies(
            Proposition::not(Proposition::atom("a")),
            Proposition::atom("b"),
        );
        assert_eq!(p.depth(), 2);
        assert_eq!(Proposition::atom("x").depth(), 0);
    }
}
