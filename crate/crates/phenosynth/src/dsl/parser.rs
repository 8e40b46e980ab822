//! Recursive-descent parser with parse-time identifier resolution.
//!
//! Depth is bounded two ways: a nesting counter guards the descent itself
//! (parentheses, unary chains, nested blocks), and constructed node heights
//! guard left-deep chains built iteratively (`a + a + a + ...`). Both paths
//! report the same depth-overflow error, so arbitrary input can never
//! overflow the native stack.

use crate::cohort::FeatureSchema;

use super::ast::{BinaryOp, Builtin, Expr, IdentTarget, Program, Span, Stmt, UnaryOp};
use super::lexer::{lex, Tok, Token};
use super::ParseError;

/// Maximum expression/statement nesting depth.
pub const DEPTH_LIMIT: u32 = 64;

/// Parses `source` against `schema`, resolving every identifier to a
/// let-bound variable or a schema feature.
pub fn parse(source: &str, schema: &FeatureSchema) -> Result<Program, ParseError> {
    let tokens = lex(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        schema,
        scopes: vec![Vec::new()],
        nesting: 0,
    };
    parser.program(source)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    schema: &'a FeatureSchema,
    scopes: Vec<Vec<String>>,
    nesting: u32,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<Token, ParseError> {
        if &self.peek().tok == want {
            Ok(self.bump())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let t = self.peek();
        ParseError::Syntax {
            span: t.span,
            expected: expected.to_string(),
            found: t.tok.describe(),
        }
    }

    fn descend(&mut self, span: Span) -> Result<(), ParseError> {
        self.nesting += 1;
        if self.nesting > DEPTH_LIMIT {
            Err(ParseError::DepthOverflow { span, limit: DEPTH_LIMIT })
        } else {
            Ok(())
        }
    }

    fn ascend(&mut self) {
        self.nesting -= 1;
    }

    fn resolve(&self, name: &str) -> Option<IdentTarget> {
        if self.scopes.iter().any(|frame| frame.iter().any(|n| n == name)) {
            Some(IdentTarget::Variable)
        } else if self.schema.contains(name) {
            Some(IdentTarget::Feature)
        } else {
            None
        }
    }

    fn program(&mut self, source: &str) -> Result<Program, ParseError> {
        self.expect(&Tok::KwPhenotype, "`phenotype`")?;
        let (name, _) = self.ident("a program name")?;
        self.expect(&Tok::LBrace, "`{`")?;
        let mut body = Vec::new();
        loop {
            match &self.peek().tok {
                Tok::KwReturn => break,
                Tok::RBrace | Tok::Eof => {
                    return Err(self.unexpected("`return` (every program ends with one)"));
                }
                _ => body.push(self.stmt()?),
            }
        }
        self.expect(&Tok::KwReturn, "`return`")?;
        let (result, _) = self.expr()?;
        self.expect(&Tok::Semi, "`;`")?;
        self.expect(&Tok::RBrace, "`}`")?;
        self.expect(&Tok::Eof, "end of input after the closing `}`")?;
        Ok(Program { name, body, result, source_text: source.to_string() })
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        match &self.peek().tok {
            Tok::Ident(_) => {
                let t = self.bump();
                match t.tok {
                    Tok::Ident(name) => Ok((name, t.span)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        match &self.peek().tok {
            Tok::KwLet => {
                let span = self.bump().span;
                let (name, name_span) = self.ident("a variable name")?;
                if Builtin::from_name(&name).is_some() {
                    return Err(ParseError::Syntax {
                        span: name_span,
                        expected: "a variable name that is not a builtin function".into(),
                        found: format!("`{name}`"),
                    });
                }
                self.expect(&Tok::Assign, "`=`")?;
                let (value, _) = self.expr()?;
                self.expect(&Tok::Semi, "`;`")?;
                // Declared only after its initializer parses, so `let x = x;`
                // refers to an outer binding or feature, not itself.
                self.scopes.last_mut().unwrap().push(name.clone());
                Ok(Stmt::Let { name, value, span })
            }
            Tok::KwIf => {
                let span = self.bump().span;
                self.expect(&Tok::LParen, "`(`")?;
                let (cond, _) = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                let then_block = self.block()?;
                let else_block = if self.peek().tok == Tok::KwElse {
                    self.bump();
                    Some(self.block()?)
                } else {
                    None
                };
                Ok(Stmt::If { cond, then_block, else_block, span })
            }
            Tok::Ident(_) => {
                let (name, span) = self.ident("a statement")?;
                match self.resolve(&name) {
                    Some(IdentTarget::Variable) => {}
                    Some(IdentTarget::Feature) => {
                        return Err(ParseError::AssignToFeature { name, span });
                    }
                    None => return Err(ParseError::UnknownIdentifier { name, span }),
                }
                self.expect(&Tok::Assign, "`=`")?;
                let (value, _) = self.expr()?;
                self.expect(&Tok::Semi, "`;`")?;
                Ok(Stmt::Assign { name, value, span })
            }
            _ => Err(self.unexpected("a statement (`let`, `if`, or assignment) or `return`")),
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let open = self.expect(&Tok::LBrace, "`{`")?;
        self.descend(open.span)?;
        self.scopes.push(Vec::new());
        let mut stmts = Vec::new();
        while self.peek().tok != Tok::RBrace {
            if matches!(self.peek().tok, Tok::Eof | Tok::KwReturn) {
                return Err(self.unexpected("a statement or `}`"));
            }
            stmts.push(self.stmt()?);
        }
        self.expect(&Tok::RBrace, "`}`")?;
        self.scopes.pop();
        self.ascend();
        Ok(stmts)
    }

    fn expr(&mut self) -> Result<(Expr, u32), ParseError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<(Expr, u32), ParseError> {
        self.binary_chain(&[(Tok::KwOr, BinaryOp::Or)], Self::and_expr)
    }

    fn and_expr(&mut self) -> Result<(Expr, u32), ParseError> {
        self.binary_chain(&[(Tok::KwAnd, BinaryOp::And)], Self::not_expr)
    }

    fn not_expr(&mut self) -> Result<(Expr, u32), ParseError> {
        if self.peek().tok == Tok::KwNot {
            let span = self.bump().span;
            self.descend(span)?;
            let (operand, h) = self.not_expr()?;
            self.ascend();
            let h = grow(h, span)?;
            Ok((Expr::Unary { op: UnaryOp::Not, operand: Box::new(operand), span }, h))
        } else {
            self.cmp_expr()
        }
    }

    fn cmp_expr(&mut self) -> Result<(Expr, u32), ParseError> {
        self.binary_chain(
            &[
                (Tok::Lt, BinaryOp::Lt),
                (Tok::Le, BinaryOp::Le),
                (Tok::Gt, BinaryOp::Gt),
                (Tok::Ge, BinaryOp::Ge),
                (Tok::EqEq, BinaryOp::Eq),
                (Tok::NotEq, BinaryOp::Ne),
            ],
            Self::add_expr,
        )
    }

    fn add_expr(&mut self) -> Result<(Expr, u32), ParseError> {
        self.binary_chain(
            &[(Tok::Plus, BinaryOp::Add), (Tok::Minus, BinaryOp::Sub)],
            Self::mul_expr,
        )
    }

    fn mul_expr(&mut self) -> Result<(Expr, u32), ParseError> {
        self.binary_chain(
            &[(Tok::Star, BinaryOp::Mul), (Tok::Slash, BinaryOp::Div)],
            Self::neg_expr,
        )
    }

    fn binary_chain(
        &mut self,
        ops: &[(Tok, BinaryOp)],
        next: fn(&mut Self) -> Result<(Expr, u32), ParseError>,
    ) -> Result<(Expr, u32), ParseError> {
        let (mut lhs, mut h) = next(self)?;
        loop {
            let Some(&(_, op)) = ops.iter().find(|(t, _)| t == &self.peek().tok) else {
                return Ok((lhs, h));
            };
            let span = self.bump().span;
            let (rhs, hr) = next(self)?;
            h = grow(h.max(hr), span)?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs), span };
        }
    }

    fn neg_expr(&mut self) -> Result<(Expr, u32), ParseError> {
        if self.peek().tok == Tok::Minus {
            let span = self.bump().span;
            self.descend(span)?;
            let (operand, h) = self.neg_expr()?;
            self.ascend();
            // A negated literal folds into the literal so that rendered
            // negative constants (e.g. from tuning) reparse identically.
            if let Expr::Number { value, .. } = operand {
                return Ok((Expr::Number { value: -value, span }, 1));
            }
            let h = grow(h, span)?;
            Ok((Expr::Unary { op: UnaryOp::Neg, operand: Box::new(operand), span }, h))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<(Expr, u32), ParseError> {
        match &self.peek().tok {
            Tok::Number(_) => {
                let t = self.bump();
                let value = match t.tok {
                    Tok::Number(v) => v,
                    _ => unreachable!(),
                };
                Ok((Expr::Number { value, span: t.span }, 1))
            }
            Tok::Ident(_) => {
                let (name, span) = self.ident("an expression")?;
                if self.peek().tok == Tok::LParen {
                    if let Some(builtin) = Builtin::from_name(&name) {
                        return self.call(builtin, span);
                    }
                }
                match self.resolve(&name) {
                    Some(target) => Ok((Expr::Ident { name, target, span }, 1)),
                    None => Err(ParseError::UnknownIdentifier { name, span }),
                }
            }
            Tok::LParen => {
                let span = self.bump().span;
                self.descend(span)?;
                let inner = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                self.ascend();
                Ok(inner)
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn call(&mut self, builtin: Builtin, span: Span) -> Result<(Expr, u32), ParseError> {
        self.expect(&Tok::LParen, "`(`")?;
        self.descend(span)?;
        let mut args = Vec::new();
        let mut h = 0u32;
        if self.peek().tok != Tok::RParen {
            loop {
                let (arg, ah) = self.expr()?;
                args.push(arg);
                h = h.max(ah);
                if self.peek().tok == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(&Tok::RParen, "`)` or `,`")?;
        self.ascend();
        if args.len() != builtin.arity() {
            return Err(ParseError::Arity {
                builtin: builtin.name(),
                expected: builtin.arity(),
                got: args.len(),
                span,
            });
        }
        let h = grow(h, span)?;
        Ok((Expr::Call { builtin, args, span }, h))
    }
}

fn grow(h: u32, span: Span) -> Result<u32, ParseError> {
    if h + 1 > DEPTH_LIMIT {
        Err(ParseError::DepthOverflow { span, limit: DEPTH_LIMIT })
    } else {
        Ok(h + 1)
    }
}
