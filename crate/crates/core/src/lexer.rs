//! Hand-rolled lexer for the kernel subset.
//!
//! Produces a token stream with source positions. Constructs that OpenCL-C
//! allows but the subset excludes (bitwise operators, member access,
//! preprocessor directives, ...) lex to unsupported-construct diagnostics so
//! the parser never has to guess.

use crate::error::{Diagnostic, Pos};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    IntLit(i64),
    UintLit(u64),
    FloatLit(f32),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Assign,
    PlusAssign,
    PlusPlus,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    AndAnd,
    OrOr,
    /// Single `|`; only legal between barrier fence flags.
    Pipe,
    Bang,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::IntLit(v) => format!("integer literal `{v}`"),
            Tok::UintLit(v) => format!("integer literal `{v}u`"),
            Tok::FloatLit(v) => format!("float literal `{v}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Assign => "=",
            Tok::PlusAssign => "+=",
            Tok::PlusPlus => "++",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Pipe => "|",
            Tok::Bang => "!",
            _ => "",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug)]
pub struct LexOutput {
    pub tokens: Vec<Token>,
    /// `//` comment lines seen before the first token, without the slashes.
    pub leading_comments: Vec<String>,
}

struct Lexer<'a> {
    src: &'a [u8],
    at: usize,
    line: u32,
    col: u32,
}

pub fn lex(source: &str) -> Result<LexOutput, Diagnostic> {
    let mut lx = Lexer { src: source.as_bytes(), at: 0, line: 1, col: 1 };
    let mut tokens = Vec::new();
    let mut leading_comments = Vec::new();

    loop {
        lx.skip_whitespace_and_comments(if tokens.is_empty() { Some(&mut leading_comments) } else { None })?;
        let pos = lx.pos();
        let Some(c) = lx.peek() else {
            tokens.push(Token { tok: Tok::Eof, pos });
            break;
        };
        let tok = match c {
            b'(' => lx.one(Tok::LParen),
            b')' => lx.one(Tok::RParen),
            b'{' => lx.one(Tok::LBrace),
            b'}' => lx.one(Tok::RBrace),
            b'[' => lx.one(Tok::LBracket),
            b']' => lx.one(Tok::RBracket),
            b';' => lx.one(Tok::Semi),
            b',' => lx.one(Tok::Comma),
            b'*' => lx.one(Tok::Star),
            b'/' => lx.one(Tok::Slash),
            b'%' => lx.one(Tok::Percent),
            b'+' => {
                lx.bump();
                match lx.peek() {
                    Some(b'+') => {
                        lx.bump();
                        Tok::PlusPlus
                    }
                    Some(b'=') => {
                        lx.bump();
                        Tok::PlusAssign
                    }
                    _ => Tok::Plus,
                }
            }
            b'-' => {
                lx.bump();
                match lx.peek() {
                    Some(b'>') => return Err(Diagnostic::unsupported(pos, "member access `->`")),
                    Some(b'-') => return Err(Diagnostic::unsupported(pos, "decrement operator `--`")),
                    Some(b'=') => return Err(Diagnostic::unsupported(pos, "compound assignment `-=`")),
                    _ => Tok::Minus,
                }
            }
            b'<' => {
                lx.bump();
                match lx.peek() {
                    Some(b'=') => {
                        lx.bump();
                        Tok::Le
                    }
                    Some(b'<') => return Err(Diagnostic::unsupported(pos, "shift operator `<<`")),
                    _ => Tok::Lt,
                }
            }
            b'>' => {
                lx.bump();
                match lx.peek() {
                    Some(b'=') => {
                        lx.bump();
                        Tok::Ge
                    }
                    Some(b'>') => return Err(Diagnostic::unsupported(pos, "shift operator `>>`")),
                    _ => Tok::Gt,
                }
            }
            b'=' => {
                lx.bump();
                if lx.peek() == Some(b'=') {
                    lx.bump();
                    Tok::EqEq
                } else {
                    Tok::Assign
                }
            }
            b'!' => {
                lx.bump();
                if lx.peek() == Some(b'=') {
                    lx.bump();
                    Tok::Ne
                } else {
                    Tok::Bang
                }
            }
            b'&' => {
                lx.bump();
                if lx.peek() == Some(b'&') {
                    lx.bump();
                    Tok::AndAnd
                } else {
                    return Err(Diagnostic::unsupported(pos, "address-of or bitwise `&`"));
                }
            }
            b'|' => {
                lx.bump();
                if lx.peek() == Some(b'|') {
                    lx.bump();
                    Tok::OrOr
                } else {
                    Tok::Pipe
                }
            }
            b'#' => return Err(Diagnostic::unsupported(pos, "preprocessor directive")),
            b'?' => return Err(Diagnostic::unsupported(pos, "conditional operator `?:`")),
            b'~' => return Err(Diagnostic::unsupported(pos, "bitwise `~`")),
            b'^' => return Err(Diagnostic::unsupported(pos, "bitwise `^`")),
            b'.' => {
                if lx.peek_at(1).is_some_and(|d| d.is_ascii_digit()) {
                    lx.number(pos)?
                } else {
                    return Err(Diagnostic::unsupported(pos, "member access `.`"));
                }
            }
            b'"' | b'\'' => return Err(Diagnostic::unsupported(pos, "string or character literal")),
            c if c.is_ascii_digit() => lx.number(pos)?,
            c if c == b'_' || c.is_ascii_alphabetic() => lx.ident(),
            other => {
                return Err(Diagnostic::syntax(pos, format!("unexpected character `{}`", other as char)));
            }
        };
        tokens.push(Token { tok, pos });
    }
    Ok(LexOutput { tokens, leading_comments })
}

impl<'a> Lexer<'a> {
    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.at).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.src.get(self.at + off).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.at += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn one(&mut self, tok: Tok) -> Tok {
        self.bump();
        tok
    }

    fn skip_whitespace_and_comments(
        &mut self,
        mut leading: Option<&mut Vec<String>>,
    ) -> Result<(), Diagnostic> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.peek_at(1) == Some(b'/') => {
                    self.bump();
                    self.bump();
                    let mut text = String::new();
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        text.push(self.bump().unwrap() as char);
                    }
                    if let Some(list) = leading.as_deref_mut() {
                        list.push(text.trim().to_string());
                    }
                }
                Some(b'/') if self.peek_at(1) == Some(b'*') => {
                    let open = self.pos();
                    self.bump();
                    self.bump();
                    loop {
                        match self.peek() {
                            None => return Err(Diagnostic::syntax(open, "unterminated block comment")),
                            Some(b'*') if self.peek_at(1) == Some(b'/') => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            _ => {
                                self.bump();
                            }
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn ident(&mut self) -> Tok {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c == b'_' || c.is_ascii_alphanumeric() {
                s.push(self.bump().unwrap() as char);
            } else {
                break;
            }
        }
        Tok::Ident(s)
    }

    fn number(&mut self, pos: Pos) -> Result<Tok, Diagnostic> {
        let mut text = String::new();
        let mut is_float = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                text.push(self.bump().unwrap() as char);
            } else {
                break;
            }
        }
        if self.peek() == Some(b'.') {
            is_float = true;
            text.push(self.bump().unwrap() as char);
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() {
                    text.push(self.bump().unwrap() as char);
                } else {
                    break;
                }
            }
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            is_float = true;
            text.push(self.bump().unwrap() as char);
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                text.push(self.bump().unwrap() as char);
            }
            let mut any = false;
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() {
                    text.push(self.bump().unwrap() as char);
                    any = true;
                } else {
                    break;
                }
            }
            if !any {
                return Err(Diagnostic::syntax(pos, "malformed float exponent"));
            }
        }
        match self.peek() {
            Some(b'f') | Some(b'F') => {
                self.bump();
                if !is_float {
                    return Err(Diagnostic::syntax(pos, "`f` suffix requires a fractional or exponent part"));
                }
                is_float = true;
            }
            Some(b'u') | Some(b'U') => {
                self.bump();
                if is_float {
                    return Err(Diagnostic::syntax(pos, "`u` suffix on a float literal"));
                }
                let v: u64 = text
                    .parse()
                    .map_err(|_| Diagnostic::syntax(pos, "unsigned literal out of range"))?;
                if v > u32::MAX as u64 {
                    return Err(Diagnostic::syntax(pos, "unsigned literal exceeds 32 bits"));
                }
                return Ok(Tok::UintLit(v));
            }
            Some(c) if c == b'_' || c.is_ascii_alphabetic() => {
                return Err(Diagnostic::syntax(pos, "malformed numeric literal suffix"));
            }
            _ => {}
        }
        if is_float {
            let v: f32 = text
                .parse()
                .map_err(|_| Diagnostic::syntax(pos, "malformed float literal"))?;
            Ok(Tok::FloatLit(v))
        } else {
            let v: i64 = text
                .parse()
                .map_err(|_| Diagnostic::syntax(pos, "integer literal out of range"))?;
            if v > i32::MAX as i64 {
                return Err(Diagnostic::syntax(pos, "integer literal exceeds 32 bits"));
            }
            Ok(Tok::IntLit(v))
        }
    }
}
