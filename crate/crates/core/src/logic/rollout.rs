//! Tagged, line-oriented rollout format.
//!
//! ```text
//! CASE: case_0007
//! STEP 1: MAJOR: if nodule then if cough then tumor_pattern ; MINOR: nodule ; CONCLUSION: if cough then tumor_pattern
//! STEP 2: MAJOR: if cough then tumor_pattern ; MINOR: cough ; CONCLUSION: tumor_pattern
//! ANSWER: lung_cancer
//! ```
//!
//! The `CASE` header is optional. A file may hold several traces back to back;
//! each one ends at its `ANSWER` line. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{parse_proposition, LogicError, Proposition};

/// One syllogistic step: `(major, minor) -> conclusion`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triad {
    pub major: Proposition,
    pub minor: Proposition,
    pub conclusion: Proposition,
    pub step_index: u32,
}

impl Triad {
    pub fn new(major: Proposition, minor: Proposition, conclusion: Proposition, step_index: u32) -> Self {
        Triad {
            major,
            minor,
            conclusion,
            step_index,
        }
    }
}

/// A chain-of-thought trajectory of `K >= 1` triads ending in an answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub case_id: String,
    pub triads: Vec<Triad>,
    pub final_answer: String,
}

impl ReasoningTrace {
    /// Validates `K >= 1` and strictly increasing step indices.
    pub fn new(
        case_id: impl Into<String>,
        triads: Vec<Triad>,
        final_answer: impl Into<String>,
    ) -> Result<Self, LogicError> {
        let trace = ReasoningTrace {
            case_id: case_id.into(),
            triads,
            final_answer: final_answer.into(),
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<(), LogicError> {
        if self.triads.is_empty() {
            return Err(LogicError::syntax(0, "at least one STEP", "none"));
        }
        for pair in self.triads.windows(2) {
            if pair[1].step_index <= pair[0].step_index {
                return Err(LogicError::syntax(
                    0,
                    format!("step number greater than {}", pair[0].step_index),
                    pair[1].step_index.to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Number of reasoning steps.
    pub fn k(&self) -> usize {
        self.triads.len()
    }

    /// Renders in the tagged rollout format, always including the `CASE` header.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "CASE: {}", self.case_id);
        for t in &self.triads {
            let _ = writeln!(
                out,
                "STEP {}: MAJOR: {} ; MINOR: {} ; CONCLUSION: {}",
                t.step_index, t.major, t.minor, t.conclusion
            );
        }
        let _ = writeln!(out, "ANSWER: {}", self.final_answer);
        out
    }

    /// The steps and answer without the `CASE` header; used as explanation text.
    pub fn render_body(&self) -> String {
        let full = self.render();
        full.split_once('\n').map(|(_, rest)| rest.to_string()).unwrap_or_default()
    }
}

fn strip_tag<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let head = text.get(..tag.len())?;
    if head.eq_ignore_ascii_case(tag) {
        Some(&text[tag.len()..])
    } else {
        None
    }
}

fn offset_in(line: &str, part: &str) -> usize {
    part.as_ptr() as usize - line.as_ptr() as usize
}

fn parse_step(line: &str, line_no: usize) -> Result<Triad, LogicError> {
    let err = |part: &str, expected: &str| {
        let found: String = part.trim().chars().take(24).collect();
        LogicError::syntax(offset_in(line, part), expected, found).at_line(line_no)
    };
    let rest = strip_tag(line, "STEP").ok_or_else(|| err(line, "`STEP`"))?;
    let (number, body) = rest.split_once(':').ok_or_else(|| err(rest, "`:` after step number"))?;
    let step_index: u32 = number
        .trim()
        .parse()
        .map_err(|_| err(number, "step number"))?;

    let segments: Vec<&str> = body.split(';').collect();
    if segments.len() != 3 {
        return Err(err(body, "three `;`-separated parts MAJOR, MINOR, CONCLUSION"));
    }
    let mut props = Vec::with_capacity(3);
    for (segment, tag) in segments.iter().zip(["MAJOR:", "MINOR:", "CONCLUSION:"]) {
        let trimmed = segment.trim_start();
        let text = strip_tag(trimmed, tag).ok_or_else(|| err(trimmed, &format!("`{tag}`")))?;
        let base = offset_in(line, text);
        let prop = parse_proposition(text).map_err(|e| e.shifted(base).at_line(line_no))?;
        props.push(prop);
    }
    let conclusion = props.pop().unwrap();
    let minor = props.pop().unwrap();
    let major = props.pop().unwrap();
    Ok(Triad::new(major, minor, conclusion, step_index))
}

/// Parses every trace in `text`, in order.
pub fn parse_rollouts(text: &str) -> Result<Vec<ReasoningTrace>, LogicError> {
    let mut traces = Vec::new();
    let mut case_id: Option<String> = None;
    let mut triads: Vec<Triad> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = strip_tag(line, "CASE:") {
            if case_id.is_some() || !triads.is_empty() {
                return Err(LogicError::syntax(0, "`STEP` or `ANSWER`", "CASE").at_line(line_no));
            }
            let id = rest.trim();
            if id.is_empty() || id.contains(char::is_whitespace) {
                return Err(LogicError::syntax(5, "case identifier", id).at_line(line_no));
            }
            case_id = Some(id.to_string());
        } else if let Some(rest) = strip_tag(line, "ANSWER:") {
            if triads.is_empty() {
                return Err(LogicError::syntax(0, "at least one `STEP` before `ANSWER`", "ANSWER")
                    .at_line(line_no));
            }
            let answer = rest.trim();
            if answer.is_empty() {
                return Err(LogicError::syntax(7, "answer text", "end of line").at_line(line_no));
            }
            let id = case_id
                .take()
                .unwrap_or_else(|| format!("trace_{}", traces.len() + 1));
            traces.push(ReasoningTrace {
                case_id: id,
                triads: std::mem::take(&mut triads),
                final_answer: answer.to_string(),
            });
        } else if strip_tag(line, "STEP").is_some() {
            let triad = parse_step(line, line_no)?;
            if let Some(prev) = triads.last() {
                if triad.step_index <= prev.step_index {
                    return Err(LogicError::syntax(
                        5,
                        format!("step number greater than {}", prev.step_index),
                        triad.step_index.to_string(),
                    )
                    .at_line(line_no));
                }
            }
            triads.push(triad);
        } else {
            let found: String = line.chars().take(24).collect();
            return Err(LogicError::syntax(0, "`CASE:`, `STEP`, or `ANSWER:`", found).at_line(line_no));
        }
    }
    if !triads.is_empty() || case_id.is_some() {
        return Err(LogicError::syntax(0, "`ANSWER:` line", "end of input").at_line(last_line + 1));
    }
    if traces.is_empty() {
        return Err(LogicError::syntax(0, "`STEP`", "end of input").at_line(last_line + 1));
    }
    Ok(traces)
}

/// Parses exactly one trace.
pub fn parse_rollout(text: &str) -> Result<ReasoningTrace, LogicError> {
    let mut traces = parse_rollouts(text)?;
    if traces.len() != 1 {
        return Err(LogicError::syntax(0, "a single trace", format!("{} traces", traces.len())));
    }
    Ok(traces.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_STEP: &str = "STEP 1: MAJOR: if a then b ; MINOR: a ; CONCLUSION: b\nANSWER: b\n";

    #[test]
    fn single_step() {
        let t = parse_rollout(ONE_STEP).unwrap();
        assert_eq!(t.k(), 1);
        assert_eq!(t.case_id, "trace_1");
        assert_eq!(t.final_answer, "b");
        assert_eq!(t.triads[0].major.to_string(), "if a then b");
    }

    #[test]
    fn two_steps_in_order() {
        let text = "CASE: c1\n\
            STEP 1: MAJOR: if a then b ; MINOR: a ; CONCLUSION: b\n\
            STEP 2: MAJOR: if b then c ; MINOR: b ; CONCLUSION: c\n\
            ANSWER: c\n";
        let t = parse_rollout(text).unwrap();
        assert_eq!(t.k(), 2);
        assert_eq!(t.case_id, "c1");
        assert_eq!(t.triads[0].step_index, 1);
        assert_eq!(t.triads[1].step_index, 2);
    }

    #[test]
    fn answer_without_steps_is_rejected() {
        let err = parse_rollout("ANSWER: yes\n").unwrap_err();
        assert!(matches!(err, LogicError::Syntax { line: Some(1), .. }));
    }

    #[test]
    fn missing_answer_is_rejected() {
        let err = parse_rollout("STEP 1: MAJOR: a ; MINOR: b ; CONCLUSION: a\n").unwrap_err();
        assert!(err.to_string().contains("ANSWER"));
    }

    #[test]
    fn non_monotone_steps_rejected() {
        let text = "STEP 2: MAJOR: a ; MINOR: b ; CONCLUSION: a\n\
            STEP 2: MAJOR: a ; MINOR: b ; CONCLUSION: b\nANSWER: x\n";
        assert!(matches!(
            parse_rollout(text),
            Err(LogicError::Syntax { line: Some(2), .. })
        ));
    }

    #[test]
    fn missing_tag_names_line_and_column() {
        let text = "STEP 1: MAJOR: a ; MINOR: b\nANSWER: x\n";
        assert!(matches!(parse_rollout(text), Err(LogicError::Syntax { line: Some(1), .. })));
        let text = "\n\nSTEP 1: MAJOR: a ; MINUS: b ; CONCLUSION: a\nANSWER: x\n";
        match parse_rollout(text) {
            Err(LogicError::Syntax { line, position, .. }) => {
                assert_eq!(line, Some(3));
                assert_eq!(position, 19);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_proposition_reports_column_in_line() {
        let text = "STEP 1: MAJOR: if a b ; MINOR: a ; CONCLUSION: b\nANSWER: b\n";
        match parse_rollout(text) {
            Err(LogicError::Syntax { line, position, .. }) => {
                assert_eq!(line, Some(1));
                assert_eq!(position, 20);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn several_traces_per_file() {
        let text = format!("{ONE_STEP}\n# second\n{ONE_STEP}");
        let traces = parse_rollouts(&text).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[1].case_id, "trace_2");
        assert!(parse_rollout(&text).is_err());
    }

    #[test]
    fn render_then_parse() {
        let t = parse_rollout(ONE_STEP).unwrap();
        assert_eq!(parse_rollout(&t.render()).unwrap(), t);
        assert!(!t.render_body().contains("CASE"));
    }
}
