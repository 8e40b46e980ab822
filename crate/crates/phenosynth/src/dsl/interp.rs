//! Row-wise program evaluation.
//!
//! Pure and deterministic: identical program and table give bit-identical
//! output. Comparisons and logic yield booleans; booleans coerce to 1.0/0.0
//! in arithmetic; guards treat nonzero numbers as true; the returned value
//! is clamped to [0, 1].

use std::collections::HashMap;

use crate::cohort::CohortTable;

use super::ast::{BinaryOp, Builtin, Expr, IdentTarget, Program, Span, Stmt, UnaryOp};
use super::{RuntimeError, RuntimeErrorKind};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    fn as_num(self) -> f64 {
        match self {
            Value::Num(x) => x,
            Value::Bool(true) => 1.0,
            Value::Bool(false) => 0.0,
        }
    }

    fn truthy(self) -> bool {
        match self {
            Value::Bool(b) => b,
            Value::Num(x) => x != 0.0,
        }
    }
}

/// Evaluates the program on every row, returning one probability per row.
pub fn evaluate(program: &Program, table: &CohortTable) -> Result<Vec<f64>, RuntimeError> {
    let columns: HashMap<&str, usize> = table
        .schema
        .names()
        .enumerate()
        .map(|(i, n)| (n, i))
        .collect();
    let mut out = Vec::with_capacity(table.len());
    for (row_index, row) in table.rows.iter().enumerate() {
        let mut ctx = RowCtx { columns: &columns, values: &row.values, env: Vec::new() };
        let result = ctx.run(program).map_err(|(span, kind)| RuntimeError {
            row_index,
            row_id: row.id.clone(),
            span,
            kind,
        })?;
        out.push(result);
    }
    Ok(out)
}

type Fault = (Span, RuntimeErrorKind);

struct RowCtx<'a> {
    columns: &'a HashMap<&'a str, usize>,
    values: &'a [Option<f64>],
    /// Flat scope stack; frames are delimited by saved lengths.
    env: Vec<(String, Value)>,
}

impl<'a> RowCtx<'a> {
    fn run(&mut self, program: &Program) -> Result<f64, Fault> {
        // Top-level bindings stay in scope for the return expression.
        for stmt in &program.body {
            self.exec(stmt)?;
        }
        let v = self.eval(&program.result)?.as_num();
        Ok(v.max(0.0).min(1.0))
    }

    fn exec_block(&mut self, stmts: &[Stmt]) -> Result<(), Fault> {
        let frame = self.env.len();
        for stmt in stmts {
            self.exec(stmt)?;
        }
        self.env.truncate(frame);
        Ok(())
    }

    fn exec(&mut self, stmt: &Stmt) -> Result<(), Fault> {
        match stmt {
            Stmt::Let { name, value, .. } => {
                let v = self.eval(value)?;
                self.env.push((name.clone(), v));
            }
            Stmt::Assign { name, value, span } => {
                let v = self.eval(value)?;
                let slot = self
                    .env
                    .iter_mut()
                    .rev()
                    .find(|(n, _)| n == name)
                    .ok_or((*span, RuntimeErrorKind::UnboundVariable { name: name.clone() }))?;
                slot.1 = v;
            }
            Stmt::If { cond, then_block, else_block, .. } => {
                if self.eval(cond)?.truthy() {
                    self.exec_block(then_block)?;
                } else if let Some(else_block) = else_block {
                    self.exec_block(else_block)?;
                }
            }
        }
        Ok(())
    }

    fn eval(&mut self, expr: &Expr) -> Result<Value, Fault> {
        match expr {
            Expr::Number { value, .. } => Ok(Value::Num(*value)),
            Expr::Ident { name, target, span } => match target {
                IdentTarget::Variable => self
                    .env
                    .iter()
                    .rev()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| *v)
                    .ok_or((*span, RuntimeErrorKind::UnboundVariable { name: name.clone() })),
                IdentTarget::Feature => {
                    let idx = self.columns.get(name.as_str()).copied().ok_or((
                        *span,
                        RuntimeErrorKind::UnknownFeature { feature: name.clone() },
                    ))?;
                    let v = self.values[idx].ok_or((
                        *span,
                        RuntimeErrorKind::MissingValue { feature: name.clone() },
                    ))?;
                    Ok(Value::Num(v))
                }
            },
            Expr::Unary { op, operand, span } => {
                let v = self.eval(operand)?;
                match op {
                    UnaryOp::Neg => Ok(Value::Num(-v.as_num())),
                    UnaryOp::Not => Ok(Value::Bool(!v.truthy())),
                }
                .and_then(|v| check_finite(v, *span))
            }
            Expr::Binary { op, lhs, rhs, span } => self.binary(*op, lhs, rhs, *span),
            Expr::Call { builtin, args, span } => {
                let mut vals = [0.0f64; 3];
                for (slot, arg) in vals.iter_mut().zip(args) {
                    *slot = self.eval(arg)?.as_num();
                }
                let v = match builtin {
                    Builtin::Min => vals[0].min(vals[1]),
                    Builtin::Max => vals[0].max(vals[1]),
                    Builtin::Clamp => {
                        let (x, lo, hi) = (vals[0], vals[1], vals[2]);
                        if lo > hi {
                            return Err((
                                *span,
                                RuntimeErrorKind::ClampBounds { lo, hi },
                            ));
                        }
                        x.max(lo).min(hi)
                    }
                    Builtin::Abs => vals[0].abs(),
                };
                check_finite(Value::Num(v), *span)
            }
        }
    }

    fn binary(&mut self, op: BinaryOp, lhs: &Expr, rhs: &Expr, span: Span) -> Result<Value, Fault> {
        // `and`/`or` short-circuit so guard patterns like
        // `bp_n > 0 and x / bp_n > 1` behave as written.
        match op {
            BinaryOp::Or => {
                let l = self.eval(lhs)?;
                if l.truthy() {
                    return Ok(Value::Bool(true));
                }
                return Ok(Value::Bool(self.eval(rhs)?.truthy()));
            }
            BinaryOp::And => {
                let l = self.eval(lhs)?;
                if !l.truthy() {
                    return Ok(Value::Bool(false));
                }
                return Ok(Value::Bool(self.eval(rhs)?.truthy()));
            }
            _ => {}
        }
        let l = self.eval(lhs)?.as_num();
        let r = self.eval(rhs)?.as_num();
        let v = match op {
            BinaryOp::Lt => return Ok(Value::Bool(l < r)),
            BinaryOp::Le => return Ok(Value::Bool(l <= r)),
            BinaryOp::Gt => return Ok(Value::Bool(l > r)),
            BinaryOp::Ge => return Ok(Value::Bool(l >= r)),
            BinaryOp::Eq => return Ok(Value::Bool(l == r)),
            BinaryOp::Ne => return Ok(Value::Bool(l != r)),
            BinaryOp::Add => l + r,
            BinaryOp::Sub => l - r,
            BinaryOp::Mul => l * r,
            BinaryOp::Div => {
                if r == 0.0 {
                    return Err((span, RuntimeErrorKind::DivisionByZero));
                }
                l / r
            }
            BinaryOp::Or | BinaryOp::And => unreachable!(),
        };
        check_finite(Value::Num(v), span)
    }
}

fn check_finite(v: Value, span: Span) -> Result<Value, Fault> {
    match v {
        Value::Num(x) if !x.is_finite() => Err((span, RuntimeErrorKind::NonFinite)),
        _ => Ok(v),
    }
}
