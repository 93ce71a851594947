use std::io::BufRead;

use super::{Literal, StoreBuilder, Term, TripleError};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Triple {
        line: usize,
        #[source]
        source: TripleError,
    },
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
}

pub(super) fn parse_into<R: BufRead>(
    input: R,
    builder: &mut StoreBuilder,
) -> Result<(), LoadError> {
    for (index, line) in input.lines().enumerate() {
        let line = line?;
        let number = index + 1;
        let mut cursor = Cursor::new(&line);
        cursor.skip_ws();
        if cursor.at_end() || cursor.peek() == Some('#') {
            continue;
        }
        let syntax = |message: String| LoadError::Syntax {
            line: number,
            message,
        };
        let s = cursor.term().map_err(syntax)?;
        let p = cursor.term().map_err(syntax)?;
        let o = cursor.term().map_err(syntax)?;
        cursor.skip_ws();
        if !cursor.eat('.') {
            return Err(syntax("expected '.' after object".into()));
        }
        cursor.skip_ws();
        if !cursor.at_end() && cursor.peek() != Some('#') {
            return Err(syntax(format!(
                "unexpected trailing input at column {}",
                cursor.column()
            )));
        }
        builder
            .insert(s, p, o)
            .map_err(|source| LoadError::Triple {
                line: number,
                source,
            })?;
    }
    Ok(())
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            chars: text.char_indices().peekable(),
            text,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn column(&mut self) -> usize {
        let offset = self.chars.peek().map_or(self.text.len(), |(i, _)| *i);
        self.text[..offset].chars().count() + 1
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn bump(&mut self) -> Option<char> {
        self.chars.next().map(|(_, c)| c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\r')) {
            self.bump();
        }
    }

    fn term(&mut self) -> Result<Term, String> {
        self.skip_ws();
        match self.peek() {
            Some('<') => Ok(Term::Iri(self.iri()?)),
            Some('_') => {
                self.bump();
                if !self.eat(':') {
                    return Err("expected ':' after '_' in blank node".into());
                }
                let mut label = String::new();
                while let Some(c) = self.peek() {
                    // '.' is left out so that `_:b1.` still terminates the statement
                    if c.is_alphanumeric() || matches!(c, '_' | '-') {
                        label.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                if label.is_empty() {
                    return Err("empty blank node label".into());
                }
                Ok(Term::BlankNode(label))
            }
            Some('"') => self.literal(),
            Some(c) => Err(format!(
                "unexpected character '{c}' at column {}",
                self.column()
            )),
            None => Err("unexpected end of line".into()),
        }
    }

    fn iri(&mut self) -> Result<String, String> {
        self.bump();
        let mut iri = String::new();
        loop {
            match self.bump() {
                Some('>') => break,
                Some('\\') => iri.push(self.unicode_escape()?),
                Some(c) if c == ' ' || c == '<' || c == '"' => {
                    return Err(format!("invalid character '{c}' in IRI"))
                }
                Some(c) => iri.push(c),
                None => return Err("unterminated IRI".into()),
            }
        }
        if iri.is_empty() {
            return Err("empty IRI".into());
        }
        Ok(iri)
    }

    fn unicode_escape(&mut self) -> Result<char, String> {
        let width = match self.bump() {
            Some('u') => 4,
            Some('U') => 8,
            other => return Err(format!("invalid escape {other:?}")),
        };
        let mut code = 0u32;
        for _ in 0..width {
            let digit = self
                .bump()
                .and_then(|c| c.to_digit(16))
                .ok_or("invalid hex digit in escape")?;
            code = code * 16 + digit;
        }
        char::from_u32(code).ok_or_else(|| format!("invalid code point U+{code:X}"))
    }

    fn literal(&mut self) -> Result<Term, String> {
        self.bump();
        let mut lexical = String::new();
        loop {
            match self.bump() {
                Some('"') => break,
                Some('\\') => {
                    let c = match self.peek() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u' | 'U') => {
                            lexical.push(self.unicode_escape()?);
                            continue;
                        }
                        other => return Err(format!("invalid escape {other:?} in literal")),
                    };
                    self.bump();
                    lexical.push(c);
                }
                Some(c) => lexical.push(c),
                None => return Err("unterminated literal".into()),
            }
        }
        let mut language = None;
        if self.eat('@') {
            let mut tag = String::new();
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == '-' {
                    tag.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
            if tag.is_empty() {
                return Err("empty language tag".into());
            }
            language = Some(tag);
        }
        if self.peek() == Some('^') {
            self.bump();
            if !self.eat('^') {
                return Err("expected '^^' before datatype".into());
            }
            if language.is_some() {
                return Err("literal has both a language tag and a datatype".into());
            }
            if self.peek() != Some('<') {
                return Err("expected datatype IRI".into());
            }
            let datatype = self.iri()?;
            return Ok(Term::Literal(Literal::typed(lexical, datatype)));
        }
        Ok(Term::Literal(match language {
            Some(tag) => Literal::lang(lexical, tag),
            None => Literal::simple(lexical),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::super::Store;
    use super::*;

    fn load(text: &str) -> Result<Store, LoadError> {
        Store::load_ntriples(text.as_bytes())
    }

    fn line_of(err: LoadError) -> usize {
        match err {
            LoadError::Syntax { line, .. } | LoadError::Triple { line, .. } => line,
            LoadError::Io(_) => 0,
        }
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "<http://a> <http://p> <http://b> .\n\n<http://a> <http://p> .\n";
        assert_eq!(line_of(load(text).unwrap_err()), 3);
    }

    #[test]
    fn language_and_datatype_rejected() {
        let text = "<http://a> <http://p> \"x\"@en^^<http://t> .\n";
        let err = load(text).unwrap_err();
        assert_eq!(line_of(err), 1);
    }

    #[test]
    fn literal_subject_rejected() {
        let err = load("\"x\" <http://p> <http://b> .\n").unwrap_err();
        assert!(matches!(err, LoadError::Triple { line: 1, .. }));
    }

    #[test]
    fn escapes_and_comments() {
        let text = "# header\n_:b1 <http://p> \"a\\\"b\\u00e9\\n\" . # trailing\n";
        let store = load(text).unwrap();
        assert_eq!(store.len(), 1);
        let lit = Term::Literal(Literal::simple("a\"b\u{e9}\n"));
        assert!(store.encode(&lit).is_some());
        assert!(store.encode(&Term::blank("b1")).is_some());
    }

    #[test]
    fn display_round_trips_through_loader() {
        let terms = [
            Term::Literal(Literal::lang("hi there", "en")),
            Term::Literal(Literal::typed(
                "1946-08-19",
                "http://www.w3.org/2001/XMLSchema#date",
            )),
            Term::Literal(Literal::simple("tab\there \\ \"q\"")),
        ];
        for term in terms {
            let text = format!("<http://s> <http://p> {term} .\n");
            let store = load(&text).unwrap();
            assert!(store.encode(&term).is_some(), "{text}");
        }
    }

    #[test]
    fn missing_dot_is_error() {
        assert!(load("<http://a> <http://p> <http://b>\n").is_err());
        assert!(load("<http://a> <http://p> <http://b> . extra\n").is_err());
    }
}
