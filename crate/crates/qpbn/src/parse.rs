//! Parser for the textual quasi-probability notation.
//!
//! The grammar, loosest binding first:
//!
//! ```text
//! expr    := ['-'] term (('+' | '-') term)*
//! term    := juxt ('*' juxt)*                 weak product
//! juxt    := primary primary*                 strong product
//! primary := '0' | '1' | name | '(' expr ')' | '[' expr ']'
//! ```
//!
//! A purely alphabetic multi-letter name like `pqrs` is read as the monomial
//! of its letters, matching how reductions are written by hand; any name
//! with a digit or underscore (`v12`, `theta_C_01`) is a single atom, so
//! products of long-named atoms need explicit `*`s. Juxtaposed factors form
//! a strong product and must not share atoms.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::atom::Atom;
use crate::expr::{Qp, Sign};

#[derive(Debug, Error, PartialEq)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Digit(char),
    Plus,
    Minus,
    Star,
    Open(char),
    Close(char),
}

struct Lexer<'a> {
    src: &'a str,
    tokens: Vec<(usize, Tok)>,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut tokens = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                tokens.push((i, Tok::Plus));
                i += 1;
            }
            '-' => {
                tokens.push((i, Tok::Minus));
                i += 1;
            }
            '*' => {
                tokens.push((i, Tok::Star));
                i += 1;
            }
            '(' | '[' => {
                tokens.push((i, Tok::Open(c)));
                i += 1;
            }
            ')' | ']' => {
                tokens.push((i, Tok::Close(c)));
                i += 1;
            }
            '0' | '1' => {
                if i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit() {
                    return err(i, "only the constants 0 and 1 are allowed");
                }
                tokens.push((i, Tok::Digit(c)));
                i += 1;
            }
            '2'..='9' => return err(i, "only the constants 0 and 1 are allowed"),
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push((start, Tok::Name(src[start..i].to_string())));
            }
            _ => return err(i, format!("unexpected character {c:?}")),
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.lexer.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.lexer
            .tokens
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or(self.lexer.src.len())
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.lexer.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Qp, ParseError> {
        let mut terms = Vec::new();
        let mut sign = if self.peek() == Some(&Tok::Minus) {
            self.bump();
            Sign::Neg
        } else {
            Sign::Pos
        };
        loop {
            terms.push((sign, self.term()?));
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    sign = Sign::Pos;
                }
                Some(Tok::Minus) => {
                    self.bump();
                    sign = Sign::Neg;
                }
                _ => break,
            }
        }
        Ok(Qp::sum(terms))
    }

    fn term(&mut self) -> Result<Qp, ParseError> {
        let mut factors = vec![self.juxt()?];
        while self.peek() == Some(&Tok::Star) {
            self.bump();
            factors.push(self.juxt()?);
        }
        Ok(Qp::weak(factors))
    }

    fn juxt(&mut self) -> Result<Qp, ParseError> {
        let at = self.offset();
        let mut factors = vec![self.primary()?];
        while matches!(
            self.peek(),
            Some(Tok::Name(_) | Tok::Digit(_) | Tok::Open(_))
        ) {
            factors.push(self.primary()?);
        }
        if factors.len() == 1 {
            return Ok(factors.pop().unwrap());
        }
        let mut seen: BTreeSet<Atom> = BTreeSet::new();
        for f in &factors {
            for a in f.atoms() {
                if !seen.insert(a.clone()) {
                    return err(
                        at,
                        format!("juxtaposed factors share the atom {}", a.name()),
                    );
                }
            }
        }
        Ok(Qp::strong(factors))
    }

    fn primary(&mut self) -> Result<Qp, ParseError> {
        let at = self.offset();
        match self.bump() {
            Some(Tok::Digit('0')) => Ok(Qp::zero()),
            Some(Tok::Digit(_)) => Ok(Qp::one()),
            Some(Tok::Name(name)) => Ok(name_to_qp(&name)),
            Some(Tok::Open(open)) => {
                let inner = self.expr()?;
                let want = if open == '(' { ')' } else { ']' };
                match self.bump() {
                    Some(Tok::Close(c)) if c == want => Ok(inner),
                    _ => err(at, format!("unclosed {open:?}")),
                }
            }
            Some(tok) => err(at, format!("unexpected token {tok:?}")),
            None => err(at, "unexpected end of input"),
        }
    }
}

fn name_to_qp(name: &str) -> Qp {
    if name.len() > 1 && name.chars().all(|c| c.is_ascii_alphabetic()) {
        Qp::monomial(name.chars().map(|c| Atom::new(c.to_string())))
    } else {
        Qp::atom(name)
    }
}

pub fn parse_qp(input: &str) -> Result<Qp, ParseError> {
    let tokens = lex(input)?;
    let mut parser = Parser {
        lexer: Lexer { src: input, tokens },
        pos: 0,
    };
    if parser.peek().is_none() {
        return err(0, "empty input");
    }
    let e = parser.expr()?;
    if parser.peek().is_some() {
        return err(parser.offset(), "trailing input");
    }
    Ok(e)
}
