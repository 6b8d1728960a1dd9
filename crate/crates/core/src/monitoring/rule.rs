//! Auto-scaling rule language.
//!
//! ```text
//! rule := WHEN expr THEN (scale_out | scale_in) [COOLDOWN n]
//! expr := expr OR expr | expr AND expr | NOT expr | '(' expr ')'
//!       | agg '(' metric ',' window ')' cmp number
//! agg  := avg | max | min
//! cmp  := < | <= | > | >= | =
//! ```
//!
//! `NOT` binds tighter than `AND`, which binds tighter than `OR`. Keywords and
//! aggregate names are case-insensitive; metric references are identifiers
//! naming a monitored-info item and may contain dots (`vnfB.cpu_util`).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleDirection {
    ScaleOut,
    ScaleIn,
}

impl fmt::Display for ScaleDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScaleDirection::ScaleOut => "scale_out",
            ScaleDirection::ScaleIn => "scale_in",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Avg,
    Max,
    Min,
}

impl Aggregate {
    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Avg => "avg",
            Aggregate::Max => "max",
            Aggregate::Min => "min",
        }
    }

    /// Applies the aggregate to a non-empty slice; `None` when empty.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        Some(match self {
            Aggregate::Avg => values.iter().sum::<f64>() / values.len() as f64,
            Aggregate::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregate::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Eq => lhs == rhs,
        }
    }
}

/// A windowed aggregate over one metric stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedMetric {
    pub aggregate: Aggregate,
    pub metric: String,
    pub window: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Compare {
        lhs: WindowedMetric,
        op: Comparator,
        value: f64,
    },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    pub fn compare(aggregate: Aggregate, metric: &str, window: u64, op: Comparator, value: f64) -> Self {
        Expr::Compare {
            lhs: WindowedMetric {
                aggregate,
                metric: metric.to_string(),
                window,
            },
            op,
            value,
        }
    }

    /// Visits every windowed metric in left-to-right order.
    pub fn for_each_metric<'a>(&'a self, f: &mut impl FnMut(&'a WindowedMetric)) {
        match self {
            Expr::Compare { lhs, .. } => f(lhs),
            Expr::And(a, b) | Expr::Or(a, b) => {
                a.for_each_metric(f);
                b.for_each_metric(f);
            }
            Expr::Not(inner) => inner.for_each_metric(f),
        }
    }

    /// Evaluates with pre-computed aggregate values. `value_of` returns `None`
    /// for missing data, which makes the whole evaluation `None`.
    pub fn eval(&self, value_of: &impl Fn(&WindowedMetric) -> Option<f64>) -> Option<bool> {
        Some(match self {
            Expr::Compare { lhs, op, value } => op.holds(value_of(lhs)?, *value),
            Expr::And(a, b) => {
                let left = a.eval(value_of)?;
                let right = b.eval(value_of)?;
                left && right
            }
            Expr::Or(a, b) => {
                let left = a.eval(value_of)?;
                let right = b.eval(value_of)?;
                left || right
            }
            Expr::Not(inner) => !inner.eval(value_of)?,
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Compare { lhs, op, value } => write!(
                f,
                "{}({}, {}) {} {}",
                lhs.aggregate.name(),
                lhs.metric,
                lhs.window,
                op.symbol(),
                value
            ),
            Expr::And(a, b) => write!(f, "({a} AND {b})"),
            Expr::Or(a, b) => write!(f, "({a} OR {b})"),
            Expr::Not(inner) => write!(f, "NOT ({inner})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleAst {
    pub condition: Expr,
    pub action: ScaleDirection,
    pub cooldown: Option<u64>,
}

impl RuleAst {
    /// Distinct metric references in first-appearance order.
    pub fn metric_refs(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.condition.for_each_metric(&mut |m| {
            if seen.insert(m.metric.clone()) {
                out.push(m.metric.clone());
            }
        });
        out
    }
}

impl fmt::Display for RuleAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WHEN {} THEN {}", self.condition, self.action)?;
        if let Some(n) = self.cooldown {
            write!(f, " COOLDOWN {n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum RuleParseError {
    /// Column is 1-based, counted in characters.
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("unknown aggregate `{name}` at column {column}")]
    UnknownAggregate { column: usize, name: String },
}

impl RuleParseError {
    pub fn column(&self) -> usize {
        match self {
            RuleParseError::Syntax { column, .. } | RuleParseError::UnknownAggregate { column, .. } => {
                *column
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Cmp(Comparator),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Cmp(c) => format!("`{}`", c.symbol()),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, RuleParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '≤' => Some(Tok::Cmp(Comparator::Le)),
            '≥' => Some(Tok::Cmp(Comparator::Ge)),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((tok, column));
            i += 1;
            continue;
        }
        match c {
            '<' | '>' | '=' => {
                let next_eq = chars.get(i + 1) == Some(&'=');
                let cmp = match (c, next_eq) {
                    ('<', true) => Comparator::Le,
                    ('<', false) => Comparator::Lt,
                    ('>', true) => Comparator::Ge,
                    ('>', false) => Comparator::Gt,
                    _ => Comparator::Eq,
                };
                i += if next_eq { 2 } else { 1 };
                out.push((Tok::Cmp(cmp), column));
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let literal: String = chars[start..i].iter().collect();
                let value: f64 = literal.parse().map_err(|_| RuleParseError::Syntax {
                    column,
                    message: format!("malformed number `{literal}`"),
                })?;
                out.push((Tok::Number(value), column));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), column));
            }
            other => {
                return Err(RuleParseError::Syntax {
                    column,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn column(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> RuleParseError {
        RuleParseError::Syntax {
            column: self.column(),
            message: format!("expected {expected}, found {}", self.peek().describe()),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), RuleParseError> {
        if self.at_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(kw))
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), RuleParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn rule(&mut self) -> Result<RuleAst, RuleParseError> {
        self.keyword("WHEN")?;
        let condition = self.or_expr()?;
        self.keyword("THEN")?;
        let action = if self.at_keyword("scale_out") {
            ScaleDirection::ScaleOut
        } else if self.at_keyword("scale_in") {
            ScaleDirection::ScaleIn
        } else {
            return Err(self.error("`scale_out` or `scale_in`"));
        };
        self.bump();
        let cooldown = if self.at_keyword("COOLDOWN") {
            self.bump();
            Some(self.integer("cooldown tick count", 0)?)
        } else {
            None
        };
        if *self.peek() != Tok::End {
            return Err(self.error("end of rule"));
        }
        Ok(RuleAst {
            condition,
            action,
            cooldown,
        })
    }

    fn integer(&mut self, what: &str, min: u64) -> Result<u64, RuleParseError> {
        let column = self.column();
        match self.peek().clone() {
            Tok::Number(n) if n.fract() == 0.0 && n >= min as f64 && n <= u32::MAX as f64 => {
                self.bump();
                Ok(n as u64)
            }
            Tok::Number(n) => Err(RuleParseError::Syntax {
                column,
                message: format!("{what} must be an integer >= {min}, found {n}"),
            }),
            _ => Err(self.error(what)),
        }
    }

    fn or_expr(&mut self) -> Result<Expr, RuleParseError> {
        let mut lhs = self.and_expr()?;
        while self.at_keyword("OR") {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, RuleParseError> {
        let mut lhs = self.unary()?;
        while self.at_keyword("AND") {
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, RuleParseError> {
        if self.at_keyword("NOT") {
            self.bump();
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if *self.peek() == Tok::LParen {
            self.bump();
            let inner = self.or_expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(inner);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, RuleParseError> {
        let column = self.column();
        let name = match self.peek().clone() {
            Tok::Ident(name) => name,
            _ => return Err(self.error("aggregate expression")),
        };
        self.bump();
        let aggregate = match name.to_ascii_lowercase().as_str() {
            "avg" => Aggregate::Avg,
            "max" => Aggregate::Max,
            "min" => Aggregate::Min,
            _ if *self.peek() == Tok::LParen => {
                return Err(RuleParseError::UnknownAggregate { column, name })
            }
            _ => {
                return Err(RuleParseError::Syntax {
                    column,
                    message: format!("expected aggregate expression, found `{name}`"),
                })
            }
        };
        self.expect(Tok::LParen, "`(`")?;
        let metric = match self.peek().clone() {
            Tok::Ident(m) => {
                self.bump();
                m
            }
            _ => return Err(self.error("metric reference")),
        };
        self.expect(Tok::Comma, "`,`")?;
        let window = self.integer("window length", 1)?;
        self.expect(Tok::RParen, "`)`")?;
        let op = match self.peek() {
            Tok::Cmp(c) => *c,
            _ => return Err(self.error("comparison operator")),
        };
        self.bump();
        let value = match self.peek() {
            Tok::Number(n) => *n,
            _ => return Err(self.error("number")),
        };
        self.bump();
        Ok(Expr::Compare {
            lhs: WindowedMetric {
                aggregate,
                metric,
                window,
            },
            op,
            value,
        })
    }
}

/// Parses rule source text.
pub fn parse_rule(text: &str) -> Result<RuleAst, RuleParseError> {
    let toks = tokenize(text)?;
    Parser { toks, pos: 0 }.rule()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simple_scale_out() {
        let ast = parse_rule("WHEN avg(vnfB.cpu_util, 3) > 0.8 THEN scale_out").unwrap();
        assert_eq!(
            ast,
            RuleAst {
                condition: Expr::compare(Aggregate::Avg, "vnfB.cpu_util", 3, Comparator::Gt, 0.8),
                action: ScaleDirection::ScaleOut,
                cooldown: None,
            }
        );
    }

    #[test]
    fn parses_negation() {
        let ast = parse_rule("WHEN NOT (avg(x,1) > 0) THEN scale_in").unwrap();
        assert_eq!(
            ast.condition,
            Expr::Not(Box::new(Expr::compare(Aggregate::Avg, "x", 1, Comparator::Gt, 0.0)))
        );
        assert_eq!(ast.action, ScaleDirection::ScaleIn);
    }

    #[test]
    fn missing_comma_is_syntax_error() {
        let err = parse_rule("WHEN avg(x 1) > 0.8").unwrap_err();
        assert_eq!(
            err,
            RuleParseError::Syntax {
                column: 12,
                message: "expected `,`, found number 1".into()
            }
        );
    }

    #[test]
    fn unknown_aggregate_reported() {
        let err = parse_rule("WHEN median(x, 3) > 1 THEN scale_out").unwrap_err();
        assert_eq!(
            err,
            RuleParseError::UnknownAggregate {
                column: 6,
                name: "median".into()
            }
        );
    }

    #[test]
    fn keywords_case_insensitive_and_cooldown() {
        let ast = parse_rule("when MAX(m,2)>=5 and min(m, 4) <= 1 or not avg(n,1)=2 then SCALE_OUT cooldown 10")
            .unwrap();
        assert_eq!(ast.cooldown, Some(10));
        // AND binds tighter than OR.
        match &ast.condition {
            Expr::Or(lhs, rhs) => {
                assert!(matches!(**lhs, Expr::And(_, _)));
                assert!(matches!(**rhs, Expr::Not(_)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
        assert_eq!(ast.metric_refs(), vec!["m".to_string(), "n".to_string()]);
    }

    #[test]
    fn unicode_comparators() {
        let ast = parse_rule("WHEN avg(a,2) ≥ 1 AND avg(b,2) ≤ -0.5 THEN scale_in").unwrap();
        assert_eq!(
            ast.condition,
            Expr::And(
                Box::new(Expr::compare(Aggregate::Avg, "a", 2, Comparator::Ge, 1.0)),
                Box::new(Expr::compare(Aggregate::Avg, "b", 2, Comparator::Le, -0.5)),
            )
        );
    }

    #[test]
    fn zero_window_rejected() {
        let err = parse_rule("WHEN avg(a, 0) > 1 THEN scale_out").unwrap_err();
        assert!(matches!(err, RuleParseError::Syntax { column: 13, .. }), "{err:?}");
    }

    #[test]
    fn trailing_garbage_rejected() {
        assert!(parse_rule("WHEN avg(a, 1) > 1 THEN scale_out now").is_err());
        assert!(parse_rule("WHEN avg(a, 1) > 1").is_err());
        assert!(parse_rule("avg(a, 1) > 1 THEN scale_out").is_err());
    }

    #[test]
    fn display_reparses_to_same_ast() {
        let src = "WHEN NOT avg(a,2) > 1 AND (max(b,3) < 2 OR min(c,1) = 0.5) THEN scale_out COOLDOWN 7";
        let ast = parse_rule(src).unwrap();
        assert_eq!(parse_rule(&ast.to_string()).unwrap(), ast);
    }

    #[test]
    fn aggregates() {
        assert_eq!(Aggregate::Avg.apply(&[0.5, 0.5, 0.5]), Some(0.5));
        assert_eq!(Aggregate::Avg.apply(&[1.0, 2.0]), Some(1.5));
        assert_eq!(Aggregate::Max.apply(&[1.0, 3.0, 2.0]), Some(3.0));
        assert_eq!(Aggregate::Min.apply(&[1.0, 3.0, 2.0]), Some(1.0));
        assert_eq!(Aggregate::Avg.apply(&[]), None);
    }
}
