//! Rule-based triad verifier backed by exact truth-table enumeration.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{Proposition, ReasoningTrace, Triad};

/// Largest number of distinct atoms the truth-table oracle will enumerate.
pub const MAX_ATOMS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifierError {
    #[error("TooManyAtomsError: {count} distinct atoms exceeds the limit of {limit}")]
    TooManyAtoms { count: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    ModusPonens,
    ModusTollens,
    DirectEntailment,
    WeakInference,
    Contradiction,
    NonSequitur,
}

impl Rule {
    pub fn value(self) -> f64 {
        match self {
            Rule::ModusPonens | Rule::ModusTollens | Rule::DirectEntailment => 1.0,
            Rule::WeakInference => 0.5,
            Rule::Contradiction | Rule::NonSequitur => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifierScore {
    pub value: f64,
    pub rule_fired: Rule,
}

impl From<Rule> for VerifierScore {
    fn from(rule: Rule) -> Self {
        VerifierScore {
            value: rule.value(),
            rule_fired: rule,
        }
    }
}

enum Compiled {
    Var(usize),
    Not(Box<Compiled>),
    Implies(Box<Compiled>, Box<Compiled>),
    And(Box<Compiled>, Box<Compiled>),
}

impl Compiled {
    fn new(p: &Proposition, index: &HashMap<&str, usize>) -> Self {
        match p {
            Proposition::Atom { name } => Compiled::Var(index[name.as_str()]),
            Proposition::Not { inner } => Compiled::Not(Box::new(Compiled::new(inner, index))),
            Proposition::Implies {
                antecedent,
                consequent,
            } => Compiled::Implies(
                Box::new(Compiled::new(antecedent, index)),
                Box::new(Compiled::new(consequent, index)),
            ),
            Proposition::And { left, right } => Compiled::And(
                Box::new(Compiled::new(left, index)),
                Box::new(Compiled::new(right, index)),
            ),
        }
    }

    fn eval(&self, assignment: u32) -> bool {
        match self {
            Compiled::Var(i) => assignment >> i & 1 == 1,
            Compiled::Not(p) => !p.eval(assignment),
            Compiled::Implies(a, c) => !a.eval(assignment) || c.eval(assignment),
            Compiled::And(l, r) => l.eval(assignment) && r.eval(assignment),
        }
    }
}

/// Propositions compiled against a shared atom numbering.
struct Table {
    atoms: usize,
    props: Vec<Compiled>,
}

impl Table {
    fn new(props: &[&Proposition]) -> Result<Self, VerifierError> {
        let mut names = BTreeSet::new();
        for p in props {
            p.collect_atoms(&mut names);
        }
        if names.len() > MAX_ATOMS {
            return Err(VerifierError::TooManyAtoms {
                count: names.len(),
                limit: MAX_ATOMS,
            });
        }
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        Ok(Table {
            atoms: names.len(),
            props: props.iter().map(|p| Compiled::new(p, &index)).collect(),
        })
    }

    fn assignments(&self) -> impl Iterator<Item = u32> {
        0..(1u32 << self.atoms)
    }
}

/// True iff every assignment satisfying all `premises` satisfies `conclusion`.
pub fn entails(premises: &[Proposition], conclusion: &Proposition) -> Result<bool, VerifierError> {
    let mut all: Vec<&Proposition> = premises.iter().collect();
    all.push(conclusion);
    let table = Table::new(&all)?;
    let (goal, given) = table.props.split_last().unwrap();
    Ok(table
        .assignments()
        .all(|a| !given.iter().all(|p| p.eval(a)) || goal.eval(a)))
}

/// True iff no assignment satisfies every proposition in `props`.
pub fn is_contradictory(props: &[Proposition]) -> Result<bool, VerifierError> {
    let refs: Vec<&Proposition> = props.iter().collect();
    let table = Table::new(&refs)?;
    Ok(!table
        .assignments()
        .any(|a| table.props.iter().all(|p| p.eval(a))))
}

fn is_modus_ponens(rule: &Proposition, fact: &Proposition, conclusion: &Proposition) -> bool {
    matches!(rule.as_implication(), Some((a, c)) if a == fact && c == conclusion)
}

fn is_modus_tollens(rule: &Proposition, fact: &Proposition, conclusion: &Proposition) -> bool {
    match (rule.as_implication(), fact.as_negation(), conclusion.as_negation()) {
        (Some((a, c)), Some(not_c), Some(not_a)) => c == not_c && a == not_a,
        _ => false,
    }
}

fn affirms_consequent(rule: &Proposition, fact: &Proposition, conclusion: &Proposition) -> bool {
    matches!(rule.as_implication(), Some((a, c)) if c == fact && a == conclusion)
}

fn denies_antecedent(rule: &Proposition, fact: &Proposition, conclusion: &Proposition) -> bool {
    match (rule.as_implication(), fact.as_negation(), conclusion.as_negation()) {
        (Some((a, c)), Some(not_a), Some(not_c)) => a == not_a && c == not_c,
        _ => false,
    }
}

fn shares_atom(a: &Proposition, b: &Proposition) -> bool {
    let left = a.atoms();
    b.atoms().iter().any(|x| left.contains(x))
}

/// Scores one triad. First match wins:
///
/// 1. premises (alone or with the conclusion) unsatisfiable: `Contradiction`, 0.0
/// 2. conclusion entailed: `ModusPonens` / `ModusTollens` when the syntactic
///    pattern matches, otherwise `DirectEntailment`, 1.0
/// 3. affirming the consequent, denying the antecedent, or a conclusion that
///    shares an atom with each premise: `WeakInference`, 0.5
/// 4. otherwise `NonSequitur`, 0.0
///
/// Premise order does not matter.
pub fn verify_triad(t: &Triad) -> Result<VerifierScore, VerifierError> {
    let premises = [t.major.clone(), t.minor.clone()];
    let with_conclusion = [t.major.clone(), t.minor.clone(), t.conclusion.clone()];
    if is_contradictory(&premises)? || is_contradictory(&with_conclusion)? {
        return Ok(Rule::Contradiction.into());
    }

    let orders = [(&t.major, &t.minor), (&t.minor, &t.major)];
    let c = &t.conclusion;
    if entails(&premises, c)? {
        let rule = if orders.iter().any(|(r, f)| is_modus_ponens(r, f, c)) {
            Rule::ModusPonens
        } else if orders.iter().any(|(r, f)| is_modus_tollens(r, f, c)) {
            Rule::ModusTollens
        } else {
            Rule::DirectEntailment
        };
        return Ok(rule.into());
    }

    let defeasible = orders
        .iter()
        .any(|(r, f)| affirms_consequent(r, f, c) || denies_antecedent(r, f, c));
    if defeasible || (shares_atom(c, &t.major) && shares_atom(c, &t.minor)) {
        Ok(Rule::WeakInference.into())
    } else {
        Ok(Rule::NonSequitur.into())
    }
}

/// Scores every triad of a trace, in order.
pub fn score_trace(trace: &ReasoningTrace) -> Result<Vec<VerifierScore>, VerifierError> {
    trace.triads.iter().map(verify_triad).collect()
}

/// Mean shortfall from a perfect score: `(1/K) * sum(1 - f_logic)` over the K triads.
pub fn logic_loss(trace: &ReasoningTrace) -> Result<f64, VerifierError> {
    let scores = score_trace(trace)?;
    Ok(loss_from_scores(&scores))
}

pub fn loss_from_scores(scores: &[VerifierScore]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().map(|s| 1.0 - s.value).sum::<f64>() / scores.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_proposition;

    fn p(s: &str) -> Proposition {
        parse_proposition(s).unwrap()
    }

    fn triad(a: &str, b: &str, c: &str) -> Triad {
        Triad::new(p(a), p(b), p(c), 0)
    }

    #[test]
    fn entailment_examples() {
        assert!(entails(&[p("a")], &p("a")).unwrap());
        assert!(entails(&[p("if a then b"), p("a")], &p("b")).unwrap());
        assert!(!entails(&[p("if a then b"), p("b")], &p("a")).unwrap());
    }

    #[test]
    fn contradiction_examples() {
        assert!(is_contradictory(&[p("a"), p("not a")]).unwrap());
        assert!(is_contradictory(&[p("if a then b"), p("a"), p("not b")]).unwrap());
        assert!(!is_contradictory(&[p("a"), p("b")]).unwrap());
        assert!(!is_contradictory(&[]).unwrap());
    }

    #[test]
    fn atom_limit() {
        let many: Vec<Proposition> = (0..21).map(|i| Proposition::atom(format!("x{i}"))).collect();
        let err = entails(&many, &p("x0")).unwrap_err();
        assert_eq!(err, VerifierError::TooManyAtoms { count: 21, limit: 20 });
        assert!(entails(&many[..20], &p("x19")).unwrap());
    }

    #[test]
    fn triad_examples() {
        let cases = [
            (("if a then b", "a", "b"), Rule::ModusPonens),
            (("if a then b", "not b", "not a"), Rule::ModusTollens),
            (("if a then b", "a", "not b"), Rule::Contradiction),
            (("if a then b", "b", "a"), Rule::WeakInference),
            (("if a then b", "a", "c"), Rule::NonSequitur),
            (("if a then b", "not a", "not b"), Rule::WeakInference),
            (("a", "b", "a and b"), Rule::DirectEntailment),
            (("a", "not a", "b"), Rule::Contradiction),
        ];
        for ((a, b, c), rule) in cases {
            let score = verify_triad(&triad(a, b, c)).unwrap();
            assert_eq!(score.rule_fired, rule, "{a} ; {b} => {c}");
            assert_eq!(score.value, rule.value());
        }
        assert_eq!(verify_triad(&triad("if a then b", "a", "b")).unwrap().value, 1.0);
        assert_eq!(verify_triad(&triad("if a then b", "b", "a")).unwrap().value, 0.5);
    }

    #[test]
    fn premise_order_is_irrelevant() {
        let forward = verify_triad(&triad("if a then b", "not b", "not a")).unwrap();
        let swapped = verify_triad(&triad("not b", "if a then b", "not a")).unwrap();
        assert_eq!(forward, swapped);
    }

    fn trace_with(steps: &[(&str, &str, &str)]) -> ReasoningTrace {
        let triads = steps
            .iter()
            .enumerate()
            .map(|(i, (a, b, c))| Triad::new(p(a), p(b), p(c), i as u32 + 1))
            .collect();
        ReasoningTrace::new("t", triads, "x").unwrap()
    }

    #[test]
    fn logic_loss_examples() {
        let all_valid = trace_with(&[("if a then b", "a", "b"), ("if b then c", "b", "c")]);
        assert_eq!(logic_loss(&all_valid).unwrap(), 0.0);
        let all_bad = trace_with(&[("if a then b", "a", "not b"), ("if a then b", "a", "z")]);
        assert_eq!(logic_loss(&all_bad).unwrap(), 1.0);
        let mixed = trace_with(&[("if a then b", "a", "b"), ("if a then b", "b", "a")]);
        assert_eq!(logic_loss(&mixed).unwrap(), 0.25);
    }
}
