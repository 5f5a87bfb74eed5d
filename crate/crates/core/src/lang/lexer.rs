use super::ast::Span;
use super::LangError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    DotDot,
    Bang,
    Amp,
    Pipe,
    Arrow,
    DoubleArrow,
    EqEq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Assign,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Float(x) => format!("`{x}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::DotDot => "..",
            Tok::Bang => "!",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::Arrow => "->",
            Tok::DoubleArrow => "<->",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Assign => "=",
            _ => "",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LangError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        // comments: `//` or `#` to end of line
        if c == b'#' || (c == b'/' && bytes.get(i + 1) == Some(&b'/')) {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let (sl, sc) = (line, col);
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Tok::Ident(src[start..i].to_string())
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            // a single dot followed by a digit makes a float; `..` is a range
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let text = &src[start..i];
                Tok::Float(text.parse().map_err(|_| LangError::Syntax {
                    line: sl,
                    col: sc,
                    message: format!("invalid number `{text}`"),
                })?)
            } else {
                let text = &src[start..i];
                Tok::Int(text.parse().map_err(|_| LangError::Syntax {
                    line: sl,
                    col: sc,
                    message: format!("integer literal `{text}` out of range"),
                })?)
            }
        } else {
            let two = bytes.get(i + 1).copied();
            let three = bytes.get(i + 2).copied();
            let (t, n) = match (c, two, three) {
                (b'<', Some(b'-'), Some(b'>')) => (Tok::DoubleArrow, 3),
                (b'-', Some(b'>'), _) => (Tok::Arrow, 2),
                (b'.', Some(b'.'), _) => (Tok::DotDot, 2),
                (b'=', Some(b'='), _) => (Tok::EqEq, 2),
                (b'!', Some(b'='), _) => (Tok::Ne, 2),
                (b'<', Some(b'='), _) => (Tok::Le, 2),
                (b'>', Some(b'='), _) => (Tok::Ge, 2),
                (b'&', Some(b'&'), _) => (Tok::Amp, 2),
                (b'|', Some(b'|'), _) => (Tok::Pipe, 2),
                (b'(', ..) => (Tok::LParen, 1),
                (b')', ..) => (Tok::RParen, 1),
                (b'{', ..) => (Tok::LBrace, 1),
                (b'}', ..) => (Tok::RBrace, 1),
                (b',', ..) => (Tok::Comma, 1),
                (b';', ..) => (Tok::Semi, 1),
                (b':', ..) => (Tok::Colon, 1),
                (b'!', ..) => (Tok::Bang, 1),
                (b'&', ..) => (Tok::Amp, 1),
                (b'|', ..) => (Tok::Pipe, 1),
                (b'<', ..) => (Tok::Lt, 1),
                (b'>', ..) => (Tok::Gt, 1),
                (b'+', ..) => (Tok::Plus, 1),
                (b'-', ..) => (Tok::Minus, 1),
                (b'*', ..) => (Tok::Star, 1),
                (b'/', ..) => (Tok::Slash, 1),
                (b'%', ..) => (Tok::Percent, 1),
                (b'=', ..) => (Tok::Assign, 1),
                _ => {
                    let ch = src[i..].chars().next().unwrap_or('?');
                    return Err(LangError::Syntax {
                        line: sl,
                        col: sc,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            };
            i += n;
            t
        };
        col += (i - start) as u32;
        out.push(Token {
            tok,
            span: Span {
                line: sl,
                col: sc,
                start,
                end: i,
            },
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span {
            line,
            col,
            start: src.len(),
            end: src.len(),
        },
    });
    Ok(out)
}
