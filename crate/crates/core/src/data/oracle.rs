//! Independent exact evaluator for generated questions.
//!
//! It parses the question text back into an expression and evaluates it over
//! the rationals; generators never call into it except to check themselves.

use num_rational::Rational64;

/// Exact answer of a generated question, or `None` if it cannot be parsed.
pub fn answer(question: &str) -> Option<String> {
    for (prefix, pick_max) in [("Which is bigger: ", true), ("Which is smaller: ", false)] {
        if let Some(rest) = question.strip_prefix(prefix) {
            let rest = rest.strip_suffix('?')?;
            let (a, b) = rest.split_once(" or ")?;
            let (a, b) = (a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?);
            return Some(if pick_max { a.max(b) } else { a.min(b) }.to_string());
        }
    }
    let start = question.find(|c: char| c.is_ascii_digit() || c == '(' || c == '-')?;
    let body = question[start..].trim_end_matches(['.', '?']);
    let tokens: Vec<char> = body.chars().filter(|c| !c.is_whitespace()).collect();
    let mut parser = Parser { tokens, pos: 0 };
    let value = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return None;
    }
    Some(format(value))
}

/// `"p"` for integers, otherwise `"p/q"` in lowest terms with the sign on `p`.
pub fn format(value: Rational64) -> String {
    if value.is_integer() {
        value.to_integer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

struct Parser {
    tokens: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.tokens.get(self.pos).copied()
    }

    fn expr(&mut self) -> Option<Rational64> {
        let mut acc = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == '+' { acc + rhs } else { acc - rhs };
        }
        Some(acc)
    }

    fn term(&mut self) -> Option<Rational64> {
        let mut acc = self.factor()?;
        while let Some(op @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            acc = if op == '*' {
                acc * rhs
            } else if rhs == Rational64::from_integer(0) {
                return None;
            } else {
                acc / rhs
            };
        }
        Some(acc)
    }

    fn factor(&mut self) -> Option<Rational64> {
        match self.peek()? {
            '-' => {
                self.pos += 1;
                Some(-self.factor()?)
            }
            '(' => {
                self.pos += 1;
                let v = self.expr()?;
                (self.peek()? == ')').then(|| self.pos += 1)?;
                Some(v)
            }
            c if c.is_ascii_digit() => {
                let mut n: i64 = 0;
                while let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
                    n = n.checked_mul(10)?.checked_add(d as i64)?;
                    self.pos += 1;
                }
                Some(Rational64::from_integer(n))
            }
            _ => None,
        }
    }
}
