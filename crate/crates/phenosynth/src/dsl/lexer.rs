//! Tokenizer for the phenotype grammar.

use super::ast::Span;
use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    KwPhenotype,
    KwLet,
    KwIf,
    KwElse,
    KwReturn,
    KwAnd,
    KwOr,
    KwNot,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    /// Short description used in "expected X, found Y" messages.
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier `{name}`"),
            Tok::Number(v) => format!("number `{v}`"),
            Tok::KwPhenotype => "`phenotype`".into(),
            Tok::KwLet => "`let`".into(),
            Tok::KwIf => "`if`".into(),
            Tok::KwElse => "`else`".into(),
            Tok::KwReturn => "`return`".into(),
            Tok::KwAnd => "`and`".into(),
            Tok::KwOr => "`or`".into(),
            Tok::KwNot => "`not`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Assign => "`=`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::NotEq => "`!=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { chars: src.chars().peekable(), line: 1, col: 1 }
    }

    fn span(&self) -> Span {
        Span { line: self.line, col: self.col }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn eat(&mut self, want: char) -> bool {
        if self.chars.peek() == Some(&want) {
            self.bump();
            true
        } else {
            false
        }
    }
}

pub(crate) fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer::new(src);
    let mut out = Vec::new();
    loop {
        while matches!(lx.chars.peek(), Some(c) if c.is_whitespace()) {
            lx.bump();
        }
        let span = lx.span();
        let Some(c) = lx.bump() else {
            out.push(Token { tok: Tok::Eof, span });
            return Ok(out);
        };
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ';' => Tok::Semi,
            ',' => Tok::Comma,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '=' => {
                if lx.eat('=') {
                    Tok::EqEq
                } else {
                    Tok::Assign
                }
            }
            '!' => {
                if lx.eat('=') {
                    Tok::NotEq
                } else {
                    return Err(ParseError::UnexpectedChar { ch: '!', span });
                }
            }
            '<' => {
                if lx.eat('=') {
                    Tok::Le
                } else {
                    Tok::Lt
                }
            }
            '>' => {
                if lx.eat('=') {
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut name = String::new();
                name.push(c);
                while matches!(lx.chars.peek(), Some(&c) if c.is_ascii_alphanumeric() || c == '_')
                {
                    name.push(lx.bump().unwrap());
                }
                keyword_or_ident(name)
            }
            c if c.is_ascii_digit() => {
                let mut text = String::new();
                text.push(c);
                while matches!(lx.chars.peek(), Some(c) if c.is_ascii_digit()) {
                    text.push(lx.bump().unwrap());
                }
                if lx.chars.peek() == Some(&'.') {
                    text.push(lx.bump().unwrap());
                    if !matches!(lx.chars.peek(), Some(c) if c.is_ascii_digit()) {
                        return Err(ParseError::Syntax {
                            span: lx.span(),
                            expected: "a digit after the decimal point".into(),
                            found: peek_describe(&mut lx),
                        });
                    }
                    while matches!(lx.chars.peek(), Some(c) if c.is_ascii_digit()) {
                        text.push(lx.bump().unwrap());
                    }
                }
                if matches!(lx.chars.peek(), Some('e') | Some('E')) {
                    text.push(lx.bump().unwrap());
                    if matches!(lx.chars.peek(), Some('+') | Some('-')) {
                        text.push(lx.bump().unwrap());
                    }
                    if !matches!(lx.chars.peek(), Some(c) if c.is_ascii_digit()) {
                        return Err(ParseError::Syntax {
                            span: lx.span(),
                            expected: "a digit in the exponent".into(),
                            found: peek_describe(&mut lx),
                        });
                    }
                    while matches!(lx.chars.peek(), Some(c) if c.is_ascii_digit()) {
                        text.push(lx.bump().unwrap());
                    }
                }
                let value: f64 = text.parse().unwrap_or(f64::INFINITY);
                if !value.is_finite() {
                    return Err(ParseError::NumberOutOfRange { span });
                }
                Tok::Number(value)
            }
            other => return Err(ParseError::UnexpectedChar { ch: other, span }),
        };
        out.push(Token { tok, span });
    }
}

fn keyword_or_ident(name: String) -> Tok {
    match name.as_str() {
        "phenotype" => Tok::KwPhenotype,
        "let" => Tok::KwLet,
        "if" => Tok::KwIf,
        "else" => Tok::KwElse,
        "return" => Tok::KwReturn,
        "and" => Tok::KwAnd,
        "or" => Tok::KwOr,
        "not" => Tok::KwNot,
        _ => Tok::Ident(name),
    }
}

fn peek_describe(lx: &mut Lexer<'_>) -> String {
    match lx.chars.peek() {
        Some(&c) => format!("`{c}`"),
        None => "end of input".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        lex(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn lexes_minimal_program() {
        assert_eq!(
            toks("phenotype p { return 0.5; }"),
            vec![
                Tok::KwPhenotype,
                Tok::Ident("p".into()),
                Tok::LBrace,
                Tok::KwReturn,
                Tok::Number(0.5),
                Tok::Semi,
                Tok::RBrace,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn lexes_operators_longest_match() {
        assert_eq!(
            toks("<= < >= > == = != + - * /"),
            vec![
                Tok::Le,
                Tok::Lt,
                Tok::Ge,
                Tok::Gt,
                Tok::EqEq,
                Tok::Assign,
                Tok::NotEq,
                Tok::Plus,
                Tok::Minus,
                Tok::Star,
                Tok::Slash,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn lexes_numbers() {
        assert_eq!(toks("2 0.5 1e3 2.5e-2"), vec![
            Tok::Number(2.0),
            Tok::Number(0.5),
            Tok::Number(1000.0),
            Tok::Number(0.025),
            Tok::Eof,
        ]);
    }

    #[test]
    fn tracks_line_and_column() {
        let tokens = lex("let x = 1;\n  x = 2;").unwrap();
        let x2 = &tokens[5];
        assert_eq!(x2.tok, Tok::Ident("x".into()));
        assert_eq!(x2.span.line, 2);
        assert_eq!(x2.span.col, 3);
    }

    #[test]
    fn rejects_stray_characters() {
        assert!(matches!(lex("let @ = 1;"), Err(ParseError::UnexpectedChar { ch: '@', .. })));
        assert!(matches!(lex("a ! b"), Err(ParseError::UnexpectedChar { ch: '!', .. })));
    }

    #[test]
    fn rejects_out_of_range_numbers() {
        assert!(matches!(lex("1e999"), Err(ParseError::NumberOutOfRange { .. })));
    }

    #[test]
    fn rejects_trailing_decimal_point() {
        assert!(matches!(lex("1."), Err(ParseError::Syntax { .. })));
    }
}
