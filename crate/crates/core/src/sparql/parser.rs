use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::{GraphPattern, Projection, Query, TermPattern, TriplePattern, Variable, RDF_TYPE};
use crate::store::{Literal, Term};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

const UNSUPPORTED: &[&str] = &[
    "FILTER",
    "GROUP",
    "ORDER",
    "BY",
    "LIMIT",
    "OFFSET",
    "BIND",
    "VALUES",
    "DISTINCT",
    "REDUCED",
    "MINUS",
    "SERVICE",
    "GRAPH",
    "HAVING",
    "ASK",
    "CONSTRUCT",
    "DESCRIBE",
    "FROM",
    "NAMED",
    "EXISTS",
    "NOT",
    "INSERT",
    "DELETE",
    "BASE",
    "AS",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    PName(String, String),
    Var(String),
    Literal {
        lexical: String,
        language: Option<String>,
        datatype: Option<Box<Tok>>,
    },
    Word(String),
    Blank(String),
    Punct(char),
    Number(String),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Iri(iri) => write!(f, "<{iri}>"),
            Tok::PName(p, l) => write!(f, "{p}:{l}"),
            Tok::Var(v) => write!(f, "?{v}"),
            Tok::Literal { lexical, .. } => write!(f, "literal \"{lexical}\""),
            Tok::Word(w) => write!(f, "'{w}'"),
            Tok::Blank(b) => write!(f, "_:{b}"),
            Tok::Punct(c) => write!(f, "'{c}'"),
            Tok::Number(n) => write!(f, "number {n}"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-'
}

fn is_local_char(c: char) -> bool {
    is_name_char(c) || c == ':' || c == '%'
}

impl Lexer {
    fn new(text: &str) -> Self {
        Lexer {
            chars: text.chars().collect(),
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn peek(&self) -> Option<char> {
        self.peek_at(0)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let (line, column) = (self.line, self.column);
            let Some(c) = self.peek() else {
                out.push(Token {
                    tok: Tok::Eof,
                    line,
                    column,
                });
                return Ok(out);
            };
            let tok = match c {
                '<' => Tok::Iri(self.iri()?),
                '?' | '$' => {
                    self.bump();
                    let name = self.take_while(is_name_char);
                    if name.is_empty() {
                        return Err(self.error(line, column, "empty variable name"));
                    }
                    Tok::Var(name)
                }
                '"' | '\'' => self.literal(line, column)?,
                '_' if self.peek_at(1) == Some(':') => {
                    self.bump();
                    self.bump();
                    Tok::Blank(self.take_while(is_name_char))
                }
                '{' | '}' | '.' | '*' | ';' | ',' | '(' | ')' | '[' | ']' | '=' | '!' => {
                    self.bump();
                    Tok::Punct(c)
                }
                ':' => {
                    self.bump();
                    Tok::PName(String::new(), self.local_name())
                }
                c if c.is_alphabetic() => {
                    let word = self.take_while(is_name_char);
                    if self.peek() == Some(':') {
                        self.bump();
                        Tok::PName(word, self.local_name())
                    } else {
                        Tok::Word(word)
                    }
                }
                c if c.is_ascii_digit() || c == '+' || c == '-' => Tok::Number(
                    self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')),
                ),
                c => return Err(self.error(line, column, format!("unexpected character '{c}'"))),
            };
            out.push(Token { tok, line, column });
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while !matches!(self.peek(), None | Some('\n')) {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }

    // Local parts may contain '.' but not end with one.
    fn local_name(&mut self) -> String {
        let mut s = String::new();
        loop {
            match self.peek() {
                Some(c) if is_local_char(c) => {
                    s.push(c);
                    self.bump();
                }
                Some('.') if !s.is_empty() && self.peek_at(1).is_some_and(is_local_char) => {
                    s.push('.');
                    self.bump();
                }
                _ => return s,
            }
        }
    }

    fn iri(&mut self) -> Result<String, ParseError> {
        let (line, column) = (self.line, self.column);
        self.bump();
        let mut iri = String::new();
        loop {
            match self.bump() {
                Some('>') => return Ok(iri),
                Some(c) if c.is_whitespace() || c == '<' || c == '"' => {
                    return Err(self.error(line, column, "unterminated or malformed IRI"))
                }
                Some(c) => iri.push(c),
                None => return Err(self.error(line, column, "unterminated IRI")),
            }
        }
    }

    fn literal(&mut self, line: usize, column: usize) -> Result<Tok, ParseError> {
        let quote = self.bump().unwrap();
        let mut lexical = String::new();
        loop {
            match self.bump() {
                Some(c) if c == quote => break,
                Some('\\') => {
                    let c = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some(u @ ('u' | 'U')) => {
                            let width = if u == 'u' { 4 } else { 8 };
                            let mut code = 0u32;
                            for _ in 0..width {
                                let d =
                                    self.bump().and_then(|c| c.to_digit(16)).ok_or_else(|| {
                                        self.error(line, column, "bad unicode escape in literal")
                                    })?;
                                code = code * 16 + d;
                            }
                            char::from_u32(code)
                                .ok_or_else(|| self.error(line, column, "bad code point"))?
                        }
                        _ => return Err(self.error(line, column, "bad escape in literal")),
                    };
                    lexical.push(c);
                }
                Some('\n') | None => return Err(self.error(line, column, "unterminated literal")),
                Some(c) => lexical.push(c),
            }
        }
        let mut language = None;
        let mut datatype = None;
        if self.peek() == Some('@') {
            self.bump();
            let tag = self.take_while(|c| c.is_ascii_alphanumeric() || c == '-');
            if tag.is_empty() {
                return Err(self.error(line, column, "empty language tag"));
            }
            language = Some(tag);
        }
        if self.peek() == Some('^') && self.peek_at(1) == Some('^') {
            self.bump();
            self.bump();
            if language.is_some() {
                return Err(self.error(
                    line,
                    column,
                    "literal has both a language tag and a datatype",
                ));
            }
            let dt = match self.peek() {
                Some('<') => Tok::Iri(self.iri()?),
                Some(c) if c.is_alphabetic() || c == ':' => {
                    let prefix = self.take_while(is_name_char);
                    if self.bump() != Some(':') {
                        return Err(self.error(line, column, "expected datatype IRI"));
                    }
                    Tok::PName(prefix, self.local_name())
                }
                _ => return Err(self.error(line, column, "expected datatype IRI")),
            };
            datatype = Some(Box::new(dt));
        }
        Ok(Tok::Literal {
            lexical,
            language,
            datatype,
        })
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    prefixes: HashMap<String, String>,
    declared: Vec<(String, String)>,
    projection_tokens: Vec<Token>,
}

/// Parses a SELECT query.
///
/// Group elements are accumulated left to right: consecutive triple patterns
/// form one BGP, nested groups and UNION chains are joined onto what came
/// before, and OPTIONAL takes everything preceding it in the group as its
/// left operand.
pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    let tokens = Lexer::new(text).tokens()?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        prefixes: HashMap::new(),
        declared: Vec::new(),
        projection_tokens: Vec::new(),
    };
    parser.query()
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(token: &Token, message: impl Into<String>) -> ParseError {
        ParseError {
            line: token.line,
            column: token.column,
            message: message.into(),
        }
    }

    fn is_word(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(w) if w.eq_ignore_ascii_case(word))
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek().tok == Tok::Punct(c)
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let token = self.peek();
        if let Tok::Word(w) = &token.tok {
            let upper = w.to_ascii_uppercase();
            if UNSUPPORTED.contains(&upper.as_str()) {
                return Self::error_at(token, format!("unsupported keyword {upper}"));
            }
        }
        Self::error_at(token, format!("expected {expected}, found {}", token.tok))
    }

    fn expect_word(&mut self, word: &str) -> Result<(), ParseError> {
        if self.is_word(word) {
            self.next();
            Ok(())
        } else {
            Err(self.unexpected(word))
        }
    }

    fn query(&mut self) -> Result<Query, ParseError> {
        while self.is_word("PREFIX") {
            self.next();
            let token = self.next();
            let Tok::PName(prefix, local) = &token.tok else {
                return Err(Self::error_at(&token, "expected prefix name after PREFIX"));
            };
            if !local.is_empty() {
                return Err(Self::error_at(
                    &token,
                    "prefix declaration must end with ':'",
                ));
            }
            let iri_token = self.next();
            let Tok::Iri(iri) = &iri_token.tok else {
                return Err(Self::error_at(
                    &iri_token,
                    "expected IRI in PREFIX declaration",
                ));
            };
            self.prefixes.insert(prefix.clone(), iri.clone());
            self.declared.retain(|(p, _)| p != prefix);
            self.declared.push((prefix.clone(), iri.clone()));
        }
        self.expect_word("SELECT")?;
        let projection = if self.is_punct('*') {
            self.next();
            Projection::All
        } else {
            let mut vars: Vec<(Variable, Token)> = Vec::new();
            while let Tok::Var(name) = &self.peek().tok {
                let var = Variable::new(name);
                let token = self.next();
                if vars.iter().any(|(v, _)| *v == var) {
                    return Err(Self::error_at(&token, format!("{var} projected twice")));
                }
                vars.push((var, token));
            }
            if vars.is_empty() {
                return Err(self.unexpected("'*' or a variable"));
            }
            self.projection_tokens = vars.iter().map(|(_, t)| t.clone()).collect();
            Projection::Vars(vars.into_iter().map(|(v, _)| v).collect())
        };
        if self.is_word("WHERE") {
            self.next();
        }
        if !self.is_punct('{') {
            return Err(self.unexpected("'{'"));
        }
        let body = self.group()?;
        if self.peek().tok != Tok::Eof {
            return Err(self.unexpected("end of input"));
        }
        if let Projection::Vars(vars) = &projection {
            let bound: BTreeSet<Variable> = body.variables();
            for (var, token) in vars.iter().zip(&self.projection_tokens) {
                if !bound.contains(var) {
                    return Err(Self::error_at(
                        token,
                        format!("{var} does not occur in the query body"),
                    ));
                }
            }
        }
        Ok(Query {
            prefixes: std::mem::take(&mut self.declared),
            projection,
            body,
        })
    }

    fn group(&mut self) -> Result<GraphPattern, ParseError> {
        let open = self.next();
        debug_assert_eq!(open.tok, Tok::Punct('{'));
        let mut acc: Option<GraphPattern> = None;
        let mut run: Vec<TriplePattern> = Vec::new();
        fn flush(acc: &mut Option<GraphPattern>, run: &mut Vec<TriplePattern>) {
            if !run.is_empty() {
                let bgp = GraphPattern::Bgp(std::mem::take(run));
                *acc = Some(match acc.take() {
                    Some(left) => GraphPattern::and(left, bgp),
                    None => bgp,
                });
            }
        }
        loop {
            let token = self.peek().clone();
            match &token.tok {
                Tok::Punct('}') => {
                    self.next();
                    flush(&mut acc, &mut run);
                    break;
                }
                Tok::Eof => {
                    return Err(Self::error_at(
                        &token,
                        format!(
                            "unbalanced braces: '{{' at {}:{} is never closed",
                            open.line, open.column
                        ),
                    ))
                }
                Tok::Punct('{') => {
                    flush(&mut acc, &mut run);
                    let mut element = self.group()?;
                    while self.is_word("UNION") {
                        self.next();
                        if !self.is_punct('{') {
                            return Err(self.unexpected("'{' after UNION"));
                        }
                        element = GraphPattern::union(element, self.group()?);
                    }
                    acc = Some(match acc.take() {
                        Some(left) => GraphPattern::and(left, element),
                        None => element,
                    });
                    self.skip_dot();
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("OPTIONAL") => {
                    self.next();
                    flush(&mut acc, &mut run);
                    if !self.is_punct('{') {
                        return Err(self.unexpected("'{' after OPTIONAL"));
                    }
                    let right = self.group()?;
                    let left = acc.take().unwrap_or(GraphPattern::Bgp(Vec::new()));
                    acc = Some(GraphPattern::optional(left, right));
                    self.skip_dot();
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("UNION") => {
                    return Err(Self::error_at(&token, "UNION must follow a '{...}' group"))
                }
                _ => {
                    run.push(self.triple()?);
                    if self.is_punct('.') {
                        self.next();
                    } else if !(self.is_punct('}')
                        || self.is_punct('{')
                        || self.is_word("OPTIONAL")
                        || self.peek().tok == Tok::Eof)
                    {
                        return Err(self.unexpected("'.'"));
                    }
                }
            }
        }
        Ok(GraphPattern::group(
            acc.unwrap_or(GraphPattern::Bgp(Vec::new())),
        ))
    }

    fn skip_dot(&mut self) {
        if self.is_punct('.') {
            self.next();
        }
    }

    fn triple(&mut self) -> Result<TriplePattern, ParseError> {
        let s = self.term_pattern(Position::Subject)?;
        let p = self.term_pattern(Position::Predicate)?;
        let o = self.term_pattern(Position::Object)?;
        Ok(TriplePattern::new(s, p, o))
    }

    fn expand(&self, token: &Token, prefix: &str, local: &str) -> Result<String, ParseError> {
        match self.prefixes.get(prefix) {
            Some(ns) => Ok(format!("{ns}{local}")),
            None => Err(Self::error_at(token, format!("unknown prefix '{prefix}:'"))),
        }
    }

    fn term_pattern(&mut self, position: Position) -> Result<TermPattern, ParseError> {
        let token = self.peek().clone();
        let pattern = match &token.tok {
            Tok::Var(name) => TermPattern::Var(Variable::new(name)),
            Tok::Iri(iri) => TermPattern::Term(Term::Iri(iri.clone())),
            Tok::PName(prefix, local) => {
                TermPattern::Term(Term::Iri(self.expand(&token, prefix, local)?))
            }
            Tok::Word(w) if w == "a" && position == Position::Predicate => {
                TermPattern::Term(Term::iri(RDF_TYPE))
            }
            Tok::Literal {
                lexical,
                language,
                datatype,
            } if position == Position::Object => {
                let literal = match (language, datatype) {
                    (Some(tag), _) => Literal::lang(lexical.clone(), tag.clone()),
                    (None, Some(dt)) => {
                        let iri = match dt.as_ref() {
                            Tok::Iri(iri) => iri.clone(),
                            Tok::PName(p, l) => self.expand(&token, p, l)?,
                            _ => unreachable!("lexer only produces IRI datatypes"),
                        };
                        Literal::typed(lexical.clone(), iri)
                    }
                    (None, None) => Literal::simple(lexical.clone()),
                };
                TermPattern::Term(Term::Literal(literal))
            }
            Tok::Literal { .. } => {
                return Err(Self::error_at(
                    &token,
                    format!("literal not allowed as {position}"),
                ))
            }
            Tok::Blank(_) => {
                return Err(Self::error_at(
                    &token,
                    "blank nodes in queries are not supported",
                ))
            }
            Tok::Number(_) => {
                return Err(Self::error_at(&token, "numeric literals are not supported"))
            }
            _ => return Err(self.unexpected(&format!("a {position}"))),
        };
        self.next();
        Ok(pattern)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    Subject,
    Predicate,
    Object,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Position::Subject => "subject",
            Position::Predicate => "predicate",
            Position::Object => "object",
        })
    }
}
