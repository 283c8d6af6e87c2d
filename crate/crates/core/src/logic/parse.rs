//! Recursive-descent parser for the proposition grammar:
//!
//! ```text
//! expr  := "if" expr "then" expr | conj
//! conj  := unary ("and" unary)*
//! unary := "not" unary | "(" expr ")" | atom
//! ```
//!
//! Keywords are case-insensitive; atoms are `[a-z0-9_]+` after lowercasing.

use super::{LogicError, Proposition};

/// Maximum nesting depth accepted by the parser.
pub const MAX_DEPTH: usize = 16;

const KEYWORDS: [&str; 4] = ["if", "then", "and", "not"];

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, LogicError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, ch)) = chars.peek() {
        if ch.is_whitespace() {
            chars.next();
        } else if ch == '(' || ch == ')' {
            tokens.push(Token {
                text: ch.to_string(),
                pos,
            });
            chars.next();
        } else if ch.is_ascii_alphanumeric() || ch == '_' {
            let mut word = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    word.push(c.to_ascii_lowercase());
                    chars.next();
                } else {
                    break;
                }
            }
            tokens.push(Token { text: word, pos });
        } else {
            return Err(LogicError::syntax(pos, "proposition token", ch.to_string()));
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    cursor: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.cursor).map(|t| t.text.as_str())
    }

    fn position(&self) -> usize {
        self.tokens.get(self.cursor).map_or(self.end, |t| t.pos)
    }

    fn found(&self) -> String {
        self.peek().map_or_else(|| "end of input".to_string(), str::to_string)
    }

    fn expect(&mut self, keyword: &str) -> Result<(), LogicError> {
        if self.peek() == Some(keyword) {
            self.cursor += 1;
            Ok(())
        } else {
            Err(LogicError::syntax(
                self.position(),
                format!("`{keyword}`"),
                self.found(),
            ))
        }
    }

    fn check_depth(depth: usize) -> Result<(), LogicError> {
        if depth > MAX_DEPTH {
            Err(LogicError::Depth { limit: MAX_DEPTH })
        } else {
            Ok(())
        }
    }

    fn expr(&mut self, depth: usize) -> Result<Proposition, LogicError> {
        Self::check_depth(depth)?;
        if self.peek() == Some("if") {
            self.cursor += 1;
            let antecedent = self.expr(depth + 1)?;
            self.expect("then")?;
            let consequent = self.expr(depth + 1)?;
            return Ok(Proposition::implies(antecedent, consequent));
        }
        let mut left = self.unary(depth)?;
        while self.peek() == Some("and") {
            self.cursor += 1;
            let right = self.unary(depth)?;
            left = Proposition::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self, depth: usize) -> Result<Proposition, LogicError> {
        Self::check_depth(depth)?;
        match self.peek() {
            Some("not") => {
                self.cursor += 1;
                Ok(Proposition::not(self.unary(depth + 1)?))
            }
            Some("(") => {
                self.cursor += 1;
                let inner = self.expr(depth + 1)?;
                self.expect(")")?;
                Ok(inner)
            }
            Some(word) if word != ")" && !KEYWORDS.contains(&word) => {
                let atom = Proposition::atom(word);
                self.cursor += 1;
                Ok(atom)
            }
            _ => Err(LogicError::syntax(
                self.position(),
                "atom, `not`, or `(`",
                self.found(),
            )),
        }
    }
}

/// Parses one proposition. The whole input must be consumed.
pub fn parse_proposition(text: &str) -> Result<Proposition, LogicError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        cursor: 0,
        end: text.len(),
    };
    let prop = parser.expr(0)?;
    if parser.cursor != parser.tokens.len() {
        return Err(LogicError::syntax(
            parser.position(),
            "end of input",
            parser.found(),
        ));
    }
    if prop.depth() > MAX_DEPTH {
        return Err(LogicError::Depth { limit: MAX_DEPTH });
    }
    Ok(prop)
}

/// True when `name` is usable as an atom: nonempty `[a-z0-9_]+`, not a keyword.
pub fn is_valid_atom_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        && !KEYWORDS.contains(&name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(s: &str) -> Proposition {
        Proposition::atom(s)
    }

    #[test]
    fn simple_implication() {
        assert_eq!(
            parse_proposition("if lesion then tumor").unwrap(),
            Proposition::implies(atom("lesion"), atom("tumor"))
        );
    }

    #[test]
    fn negation() {
        assert_eq!(parse_proposition("not a").unwrap(), Proposition::not(atom("a")));
    }

    #[test]
    fn and_binds_tighter_than_implication() {
        assert_eq!(
            parse_proposition("if a and b then c").unwrap(),
            Proposition::implies(Proposition::and(atom("a"), atom("b")), atom("c"))
        );
    }

    #[test]
    fn not_binds_tightest() {
        assert_eq!(
            parse_proposition("not a and b").unwrap(),
            Proposition::and(Proposition::not(atom("a")), atom("b"))
        );
    }

    #[test]
    fn nested_implications() {
        assert_eq!(
            parse_proposition("if a then if b then c").unwrap(),
            Proposition::implies(atom("a"), Proposition::implies(atom("b"), atom("c")))
        );
        assert_eq!(
            parse_proposition("if if a then b then c").unwrap(),
            Proposition::implies(Proposition::implies(atom("a"), atom("b")), atom("c"))
        );
    }

    #[test]
    fn keywords_are_case_insensitive_and_atoms_lowercased() {
        assert_eq!(
            parse_proposition("IF Lesion THEN (Tumor)").unwrap(),
            Proposition::implies(atom("lesion"), atom("tumor"))
        );
    }

    #[test]
    fn reports_position_and_expected_token() {
        match parse_proposition("if a b") {
            Err(LogicError::Syntax {
                position, expected, ..
            }) => {
                assert_eq!(position, 5);
                assert_eq!(expected, "`then`");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_proposition("a and"),
            Err(LogicError::Syntax { position: 5, .. })
        ));
        assert!(matches!(parse_proposition("a -> b"), Err(LogicError::Syntax { .. })));
        assert!(matches!(parse_proposition(""), Err(LogicError::Syntax { .. })));
        assert!(matches!(parse_proposition("( a"), Err(LogicError::Syntax { .. })));
        assert!(matches!(parse_proposition("then"), Err(LogicError::Syntax { .. })));
    }

    #[test]
    fn depth_limit() {
        let ok = format!("{}a", "not ".repeat(16));
        assert!(parse_proposition(&ok).is_ok());
        let too_deep = format!("{}a", "not ".repeat(17));
        assert_eq!(
            parse_proposition(&too_deep),
            Err(LogicError::Depth { limit: MAX_DEPTH })
        );
        let parens = format!("{}a{}", "( ".repeat(20), " )".repeat(20));
        assert_eq!(
            parse_proposition(&parens),
            Err(LogicError::Depth { limit: MAX_DEPTH })
        );
    }

    #[test]
    fn atom_names() {
        assert!(is_valid_atom_name("heart_failure2"));
        assert!(!is_valid_atom_name("then"));
        assert!(!is_valid_atom_name("Upper"));
        assert!(!is_valid_atom_name(""));
    }
}
