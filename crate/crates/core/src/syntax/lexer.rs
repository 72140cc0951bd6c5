use std::fmt;

use crate::model::SourceLocation;
use crate::syntax::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Str(String),
    /// Numeric literal, kept as written.
    Number(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    At,
    Eq,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) | TokenKind::Number(s) => f.write_str(s),
            TokenKind::Str(s) => write!(f, "{s:?}"),
            TokenKind::LBrace => f.write_str("{"),
            TokenKind::RBrace => f.write_str("}"),
            TokenKind::LParen => f.write_str("("),
            TokenKind::RParen => f.write_str(")"),
            TokenKind::Comma => f.write_str(","),
            TokenKind::Semi => f.write_str(";"),
            TokenKind::At => f.write_str("@"),
            TokenKind::Eq => f.write_str("="),
            TokenKind::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub loc: SourceLocation,
    /// Length in bytes of the token's source text.
    pub len: usize,
}

/// Splits `text` into tokens. The last token is always `Eof`.
pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer { text, pos: 0, line: 1, column: 1 };
    let mut out = Vec::new();
    loop {
        let tok = lx.next_token()?;
        let done = tok.kind == TokenKind::Eof;
        out.push(tok);
        if done {
            return Ok(out);
        }
    }
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
    line: u32,
    column: u32,
}

impl<'a> Lexer<'a> {
    fn loc(&self) -> SourceLocation {
        SourceLocation { line: self.line, column: self.column, offset: self.pos }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.text[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        self.skip_trivia();
        let start = self.loc();
        let Some(c) = self.peek() else {
            return Ok(Token { kind: TokenKind::Eof, loc: start, len: 0 });
        };
        let kind = match c {
            '{' | '}' | '(' | ')' | ',' | ';' | '@' | '=' => {
                self.bump();
                match c {
                    '{' => TokenKind::LBrace,
                    '}' => TokenKind::RBrace,
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    ',' => TokenKind::Comma,
                    ';' => TokenKind::Semi,
                    '@' => TokenKind::At,
                    _ => TokenKind::Eq,
                }
            }
            '"' => self.string(start)?,
            c if c.is_ascii_digit() || c == '-' || c == '+' => self.number(start)?,
            c if c.is_ascii_alphabetic() || c == '_' => {
                let begin = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.bump();
                }
                TokenKind::Ident(self.text[begin..self.pos].to_owned())
            }
            other => {
                return Err(ParseError::new(start, ["token"], other.to_string()));
            }
        };
        Ok(Token { kind, loc: start, len: self.pos - start.offset })
    }

    fn string(&mut self, start: SourceLocation) -> Result<TokenKind, ParseError> {
        self.bump();
        let mut s = String::new();
        loop {
            let here = self.loc();
            match self.bump() {
                None | Some('\n') => {
                    return Err(ParseError::new(start, ["closing `\"`"], "unterminated string"));
                }
                Some('"') => return Ok(TokenKind::Str(s)),
                Some('\\') => match self.bump() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('r') => s.push('\r'),
                    other => {
                        let found = other.map(|c| format!("\\{c}")).unwrap_or_else(|| "\\".into());
                        return Err(ParseError::new(here, ["escape sequence"], found));
                    }
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn number(&mut self, start: SourceLocation) -> Result<TokenKind, ParseError> {
        let begin = self.pos;
        if matches!(self.peek(), Some('-' | '+')) {
            self.bump();
        }
        if !matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            let found = self.text[begin..self.pos].to_owned();
            return Err(ParseError::new(start, ["number"], found));
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some('.') && matches!(self.peek2(), Some(c) if c.is_ascii_digit()) {
            self.bump();
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        Ok(TokenKind::Number(self.text[begin..self.pos].to_owned()))
    }
}
