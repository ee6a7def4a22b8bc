//! Query AST and its text syntax.
//!
//! ```text
//! obama biden            both terms
//! obama OR biden         either term
//! "eating a sandwich"    consecutive tokens
//! (a OR b) c             grouping
//! from:2008-11-01 to:2008-11-05   time range; a date-only `to:` covers that whole day
//! *                      every document
//! ```
//!
//! `OR` binds tighter than the implicit AND, so `a b OR c` reads `a (b OR c)`.

use std::fmt;

use super::tokenize::tokenize;
use crate::calendar::{format_iso, parse_instant, MS_PER_DAY};
use crate::error::{Error, Result};
use crate::mockhose::STOP_WORDS;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Query {
    Term(String),
    Phrase(Vec<String>),
    And(Vec<Query>),
    Or(Vec<Query>),
    /// Inclusive on both ends.
    TimeRange(i64, i64),
}

impl Query {
    /// A term from raw text; errors unless it is exactly one token.
    pub fn term(text: &str) -> Result<Query> {
        match tokenize(text).as_slice() {
            [t] => Ok(Query::Term(t.clone())),
            _ => Err(Error::invalid(format!("{text:?} is not a single search token"))),
        }
    }

    pub fn phrase(text: &str) -> Result<Query> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::invalid(format!("phrase {text:?} has no searchable tokens")));
        }
        Ok(Query::Phrase(tokens))
    }

    pub fn all() -> Query {
        Query::TimeRange(i64::MIN, i64::MAX)
    }

    /// The 100-term disjunction of common English words, matching nearly every English tweet.
    pub fn stop_words() -> Query {
        Query::Or(STOP_WORDS.iter().map(|w| Query::Term(w.to_string())).collect())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Query::Term(t) if t.is_empty() => Err(Error::invalid("empty term")),
            Query::Term(_) => Ok(()),
            Query::Phrase(ts) if ts.is_empty() || ts.iter().any(String::is_empty) => {
                Err(Error::invalid("phrase needs at least one non-empty token"))
            }
            Query::Phrase(_) => Ok(()),
            Query::And(cs) | Query::Or(cs) => {
                if cs.is_empty() {
                    return Err(Error::invalid("AND/OR needs at least one operand"));
                }
                cs.iter().try_for_each(Query::validate)
            }
            Query::TimeRange(t0, t1) if t0 > t1 => Err(Error::invalid(format!("time range {t0} > {t1}"))),
            Query::TimeRange(..) => Ok(()),
        }
    }

    /// Inclusive hull of timestamps any match can have.
    pub fn time_bounds(&self) -> (i64, i64) {
        match self {
            Query::Term(_) | Query::Phrase(_) => (i64::MIN, i64::MAX),
            Query::TimeRange(a, b) => (*a, *b),
            Query::And(cs) => cs.iter().map(Query::time_bounds).fold((i64::MIN, i64::MAX), |(a, b), (c, d)| (a.max(c), b.min(d))),
            Query::Or(cs) => cs.iter().map(Query::time_bounds).fold((i64::MAX, i64::MIN), |(a, b), (c, d)| (a.min(c), b.max(d))),
        }
    }

    /// Evaluates against one tokenized document; the reference semantics the index must reproduce.
    pub fn matches(&self, tokens: &[String], timestamp: i64) -> bool {
        match self {
            Query::Term(t) => tokens.iter().any(|x| x == t),
            Query::Phrase(p) => tokens.windows(p.len()).any(|w| w == p.as_slice()),
            Query::And(cs) => cs.iter().all(|c| c.matches(tokens, timestamp)),
            Query::Or(cs) => cs.iter().any(|c| c.matches(tokens, timestamp)),
            Query::TimeRange(a, b) => (*a..=*b).contains(&timestamp),
        }
    }

    pub fn parse(text: &str) -> Result<Query> {
        let lexemes = lex(text)?;
        let mut p = Parser { lexemes, pos: 0, source: text };
        let q = p.and()?;
        if p.pos < p.lexemes.len() {
            return Err(p.error("unexpected ')'"));
        }
        q.validate()?;
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Lexeme {
    Word(String),
    Quoted(String),
    Open,
    Close,
    Or,
}

fn lex(text: &str) -> Result<Vec<Lexeme>> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                out.push(Lexeme::Open);
            }
            ')' => {
                chars.next();
                out.push(Lexeme::Close);
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some(c) => s.push(c),
                        None => return Err(Error::invalid(format!("unterminated quote in query {text:?}"))),
                    }
                }
                out.push(Lexeme::Quoted(s));
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                out.push(if s == "OR" { Lexeme::Or } else { Lexeme::Word(s) });
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    lexemes: Vec<Lexeme>,
    pos: usize,
    source: &'a str,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::invalid(format!("{what} in query {:?}", self.source))
    }

    fn peek(&self) -> Option<&Lexeme> {
        self.lexemes.get(self.pos)
    }

    fn and(&mut self) -> Result<Query> {
        let mut children = Vec::new();
        while let Some(l) = self.peek() {
            if *l == Lexeme::Close {
                break;
            }
            children.push(self.or()?);
        }
        match children.len() {
            0 => Err(self.error("empty expression")),
            1 => Ok(children.pop().expect("one child")),
            _ => Ok(Query::And(children)),
        }
    }

    fn or(&mut self) -> Result<Query> {
        let mut children = vec![self.atom()?];
        while self.peek() == Some(&Lexeme::Or) {
            self.pos += 1;
            children.push(self.atom()?);
        }
        Ok(if children.len() == 1 { children.pop().expect("one child") } else { Query::Or(children) })
    }

    fn atom(&mut self) -> Result<Query> {
        let Some(l) = self.lexemes.get(self.pos).cloned() else {
            return Err(self.error("missing operand"));
        };
        self.pos += 1;
        match l {
            Lexeme::Open => {
                let q = self.and()?;
                if self.peek() != Some(&Lexeme::Close) {
                    return Err(self.error("missing ')'"));
                }
                self.pos += 1;
                Ok(q)
            }
            Lexeme::Close | Lexeme::Or => Err(self.error("misplaced operator")),
            Lexeme::Quoted(s) => match Query::phrase(&s)? {
                Query::Phrase(mut ts) if ts.len() == 1 => Ok(Query::Term(ts.pop().expect("one token"))),
                q => Ok(q),
            },
            Lexeme::Word(w) if w == "*" => Ok(Query::all()),
            Lexeme::Word(w) => {
                if let Some(v) = w.strip_prefix("from:") {
                    Ok(Query::TimeRange(parse_bound(v, false)?, i64::MAX))
                } else if let Some(v) = w.strip_prefix("to:") {
                    Ok(Query::TimeRange(i64::MIN, parse_bound(v, true)?))
                } else {
                    let mut tokens = tokenize(&w);
                    match tokens.len() {
                        0 => Err(self.error(&format!("{w:?} has no searchable characters"))),
                        1 => Ok(Query::Term(tokens.pop().expect("one token"))),
                        _ => Ok(Query::Phrase(tokens)),
                    }
                }
            }
        }
    }
}

fn parse_bound(text: &str, upper: bool) -> Result<i64> {
    if let Ok(ms) = text.parse::<i64>() {
        return Ok(ms);
    }
    let t = parse_instant(text)?;
    let date_only = text.len() == 10 && text.as_bytes()[4] == b'-';
    Ok(if upper && date_only { t + MS_PER_DAY - 1 } else { t })
}

fn render_instant(ms: i64) -> String {
    if ms >= 0 {
        format_iso(ms)
    } else {
        ms.to_string()
    }
}

fn needs_quotes(term: &str) -> bool {
    term == "OR" || term == "*" || term.starts_with("from:") || term.starts_with("to:") || tokenize(term) != [term]
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Term(t) if needs_quotes(t) => write!(f, "\"{t}\""),
            Query::Term(t) => f.write_str(t),
            Query::Phrase(ts) => write!(f, "\"{}\"", ts.join(" ")),
            Query::TimeRange(i64::MIN, i64::MAX) => f.write_str("*"),
            Query::TimeRange(a, b) => {
                let mut parts = Vec::new();
                if *a != i64::MIN {
                    parts.push(format!("from:{}", render_instant(*a)));
                }
                if *b != i64::MAX {
                    parts.push(format!("to:{}", render_instant(*b)));
                }
                if parts.len() == 2 {
                    write!(f, "({})", parts.join(" "))
                } else {
                    f.write_str(&parts[0])
                }
            }
            Query::And(cs) => {
                let parts: Vec<String> = cs.iter().map(|c| c.to_string()).collect();
                write!(f, "({})", parts.join(" "))
            }
            Query::Or(cs) => {
                let parts: Vec<String> = cs.iter().map(|c| c.to_string()).collect();
                write!(f, "({})", parts.join(" OR "))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Query {
        Query::Term(s.into())
    }

    #[test]
    fn precedence_and_grouping() {
        assert_eq!(Query::parse("a b OR c").unwrap(), Query::And(vec![t("a"), Query::Or(vec![t("b"), t("c")])]));
        assert_eq!(
            Query::parse("(a b) OR c").unwrap(),
            Query::Or(vec![Query::And(vec![t("a"), t("b")]), t("c")])
        );
        assert_eq!(Query::parse("Obama").unwrap(), t("obama"));
        assert_eq!(Query::parse("or").unwrap(), t("or"));
    }

    #[test]
    fn phrases_and_words() {
        let q = Query::parse("\"Eating a sandwich\"").unwrap();
        assert_eq!(q, Query::Phrase(vec!["eating".into(), "a".into(), "sandwich".into()]));
        assert_eq!(Query::parse("don't").unwrap(), Query::Phrase(vec!["don".into(), "t".into()]));
        assert_eq!(Query::parse("#iranelection").unwrap(), t("#iranelection"));
    }

    #[test]
    fn time_bounds_from_dates() {
        let q = Query::parse("obama from:2008-11-01 to:2008-11-05").unwrap();
        let (a, b) = q.time_bounds();
        assert_eq!(a, parse_instant("2008-11-01").unwrap());
        assert_eq!(b, parse_instant("2008-11-06").unwrap() - 1);
        let q = Query::parse("to:2008-11-05T12:00:00Z").unwrap();
        assert_eq!(q.time_bounds().1, parse_instant("2008-11-05T12:00:00Z").unwrap());
        assert_eq!(Query::Or(vec![Query::TimeRange(5, 9), Query::TimeRange(1, 3)]).time_bounds(), (1, 9));
        assert_eq!(t("x").time_bounds(), (i64::MIN, i64::MAX));
    }

    #[test]
    fn syntax_errors() {
        for bad in ["", "(", "a OR", "OR a", "a )", "\"open", "!!!", "\"\"", "from:yesterday", "()"] {
            assert!(Query::parse(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn display_roundtrips() {
        for q in [
            "a b OR c",
            "(a b) OR \"x y z\"",
            "#tag @who from:2009-01-01 to:2009-01-31",
            "*",
            "obama OR biden from:2008-10-01T12:30:00.250Z",
        ] {
            let parsed = Query::parse(q).unwrap();
            assert_eq!(Query::parse(&parsed.to_string()).unwrap(), parsed, "{q}");
        }
        // A two-sided range comes back as the conjunction of its two bounds.
        let odd = Query::And(vec![Query::Term("OR".into()), Query::TimeRange(-5, 7)]);
        let back = Query::parse(&odd.to_string()).unwrap();
        assert_eq!(back.time_bounds(), (-5, 7));
        let Query::And(cs) = back else { panic!() };
        assert_eq!(cs[0], t("or"));
    }

    #[test]
    fn stop_word_query_has_100_terms() {
        let Query::Or(cs) = Query::stop_words() else { panic!() };
        assert_eq!(cs.len(), 100);
        Query::stop_words().validate().unwrap();
    }

    #[test]
    fn validation() {
        assert!(Query::And(vec![]).validate().is_err());
        assert!(Query::Phrase(vec![]).validate().is_err());
        assert!(Query::TimeRange(2, 1).validate().is_err());
    }

    #[test]
    fn reference_semantics() {
        let toks: Vec<String> = tokenize("I am eating a sandwich now");
        assert!(Query::parse("\"eating a sandwich\"").unwrap().matches(&toks, 0));
        let toks: Vec<String> = tokenize("eating my sandwich");
        assert!(!Query::parse("\"eating a sandwich\"").unwrap().matches(&toks, 0));
    }
}
