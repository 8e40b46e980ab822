//! Program measurement and parameterization.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ast::{Expr, IdentTarget, Program, Span, Stmt};
use super::render::render;
use super::ParamError;

/// Size and feature usage summary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramStats {
    pub size: usize,
    pub features_used: BTreeSet<String>,
    pub literal_count: usize,
}

/// Node count: one per statement (including the return) and one per
/// expression node; blocks and the program root count zero.
pub fn size(program: &Program) -> usize {
    stats(program).size
}

pub fn stats(program: &Program) -> ProgramStats {
    let mut st = ProgramStats {
        size: 1, // the return statement
        features_used: BTreeSet::new(),
        literal_count: 0,
    };
    for stmt in &program.body {
        stmt_stats(stmt, &mut st);
    }
    expr_stats(&program.result, &mut st);
    st
}

fn stmt_stats(stmt: &Stmt, st: &mut ProgramStats) {
    st.size += 1;
    match stmt {
        Stmt::Let { value, .. } | Stmt::Assign { value, .. } => expr_stats(value, st),
        Stmt::If { cond, then_block, else_block, .. } => {
            expr_stats(cond, st);
            for s in then_block {
                stmt_stats(s, st);
            }
            if let Some(else_block) = else_block {
                for s in else_block {
                    stmt_stats(s, st);
                }
            }
        }
    }
}

fn expr_stats(expr: &Expr, st: &mut ProgramStats) {
    st.size += 1;
    match expr {
        Expr::Number { .. } => st.literal_count += 1,
        Expr::Ident { name, target, .. } => {
            if *target == IdentTarget::Feature {
                st.features_used.insert(name.clone());
            }
        }
        Expr::Unary { operand, .. } => expr_stats(operand, st),
        Expr::Binary { lhs, rhs, .. } => {
            expr_stats(lhs, st);
            expr_stats(rhs, st);
        }
        Expr::Call { args, .. } => {
            for arg in args {
                expr_stats(arg, st);
            }
        }
    }
}

/// One tunable constant: where it sits in the source and its current value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamSlot {
    pub location: Span,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSlots {
    pub slots: Vec<ParamSlot>,
}

impl ParamSlots {
    pub fn values(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.value).collect()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Lists every numeric literal in left-to-right, depth-first source order.
pub fn extract_params(program: &Program) -> ParamSlots {
    let mut slots = Vec::new();
    let mut visit = |e: &Expr| {
        if let Expr::Number { value, span } = e {
            slots.push(ParamSlot { location: *span, value: *value });
        }
    };
    for stmt in &program.body {
        walk_stmt(stmt, &mut visit);
    }
    walk_expr(&program.result, &mut visit);
    ParamSlots { slots }
}

/// Substitutes literal values positionally; the program's shape (and
/// therefore its size) is unchanged, and the source text is re-rendered.
pub fn apply_params(program: &Program, values: &[f64]) -> Result<Program, ParamError> {
    let slots = extract_params(program);
    if values.len() != slots.len() {
        return Err(ParamError::Arity { expected: slots.len(), got: values.len() });
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(ParamError::NonFinite { value: bad });
    }
    let mut out = program.clone();
    let mut cursor = 0;
    let mut visit = |e: &mut Expr| {
        if let Expr::Number { value, .. } = e {
            *value = values[cursor];
            cursor += 1;
        }
    };
    for stmt in &mut out.body {
        walk_stmt_mut(stmt, &mut visit);
    }
    walk_expr_mut(&mut out.result, &mut visit);
    out.source_text = render(&out);
    Ok(out)
}

fn walk_stmt(stmt: &Stmt, visit: &mut impl FnMut(&Expr)) {
    match stmt {
        Stmt::Let { value, .. } | Stmt::Assign { value, .. } => walk_expr(value, visit),
        Stmt::If { cond, then_block, else_block, .. } => {
            walk_expr(cond, visit);
            for s in then_block {
                walk_stmt(s, visit);
            }
            if let Some(else_block) = else_block {
                for s in else_block {
                    walk_stmt(s, visit);
                }
            }
        }
    }
}

fn walk_expr(expr: &Expr, visit: &mut impl FnMut(&Expr)) {
    visit(expr);
    match expr {
        Expr::Number { .. } | Expr::Ident { .. } => {}
        Expr::Unary { operand, .. } => walk_expr(operand, visit),
        Expr::Binary { lhs, rhs, .. } => {
            walk_expr(lhs, visit);
            walk_expr(rhs, visit);
        }
        Expr::Call { args, .. } => {
            for arg in args {
                walk_expr(arg, visit);
            }
        }
    }
}

fn walk_stmt_mut(stmt: &mut Stmt, visit: &mut impl FnMut(&mut Expr)) {
    match stmt {
        Stmt::Let { value, .. } | Stmt::Assign { value, .. } => walk_expr_mut(value, visit),
        Stmt::If { cond, then_block, else_block, .. } => {
            walk_expr_mut(cond, visit);
            for s in then_block {
                walk_stmt_mut(s, visit);
            }
            if let Some(else_block) = else_block {
                for s in else_block {
                    walk_stmt_mut(s, visit);
                }
            }
        }
    }
}

fn walk_expr_mut(expr: &mut Expr, visit: &mut impl FnMut(&mut Expr)) {
    visit(expr);
    match expr {
        Expr::Number { .. } | Expr::Ident { .. } => {}
        Expr::Unary { operand, .. } => walk_expr_mut(operand, visit),
        Expr::Binary { lhs, rhs, .. } => {
            walk_expr_mut(lhs, visit);
            walk_expr_mut(rhs, visit);
        }
        Expr::Call { args, .. } => {
            for arg in args {
                walk_expr_mut(arg, visit);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::default_schema;
    use crate::dsl::parse;

    fn p(src: &str) -> Program {
        parse(src, &default_schema()).unwrap()
    }

    #[test]
    fn minimal_program_size() {
        assert_eq!(size(&p("phenotype p { return 0.5; }")), 2);
    }

    #[test]
    fn return_of_binary_size() {
        // return + binary + ident + literal
        assert_eq!(size(&p("phenotype p { return bp_n + 1.0; }")), 4);
    }

    #[test]
    fn statements_and_guards_count() {
        // let(1)+lit(1), if(1)+cmp(1)+ident(1)+lit(1), assign(1)+add(1)+ident(1)+lit(1), return(1)+ident(1)
        let src = "phenotype p { let x = 0; if (bp_n >= 2) { x = x + 0.5; } return x; }";
        assert_eq!(size(&p(src)), 12);
    }

    #[test]
    fn features_used_excludes_variables() {
        let src = "phenotype p { let bp_n = 1; return bp_n + high_bp_n; }";
        let st = stats(&p(src));
        assert_eq!(
            st.features_used.iter().collect::<Vec<_>>(),
            vec!["high_bp_n"]
        );
        assert_eq!(st.literal_count, 1);
    }

    #[test]
    fn extract_lists_literals_in_source_order() {
        let src = "phenotype p { let x = 0.6; if (bp_n >= 2) { x = x - 0.3; } return x; }";
        let slots = extract_params(&p(src));
        assert_eq!(slots.values(), vec![0.6, 2.0, 0.3]);
    }

    #[test]
    fn apply_is_identity_for_extracted_values() {
        let src = "phenotype p { let x = 0.6; if (bp_n >= 2) { x = x - 0.3; } return clamp(x, 0, 1); }";
        let prog = p(src);
        let slots = extract_params(&prog);
        let same = apply_params(&prog, &slots.values()).unwrap();
        assert_eq!(same, prog);
    }

    #[test]
    fn apply_substitutes_positionally() {
        let prog = p("phenotype p { return 0.5; }");
        let out = apply_params(&prog, &[0.9]).unwrap();
        assert_eq!(extract_params(&out).values(), vec![0.9]);
        assert!(out.source_text.contains("0.9"), "{}", out.source_text);
        assert_eq!(size(&out), size(&prog));
    }

    #[test]
    fn apply_checks_arity() {
        let prog = p("phenotype p { return 0.5; }");
        assert!(matches!(
            apply_params(&prog, &[0.1, 0.2]),
            Err(ParamError::Arity { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn apply_rejects_non_finite() {
        let prog = p("phenotype p { return 0.5; }");
        assert!(matches!(
            apply_params(&prog, &[f64::NAN]),
            Err(ParamError::NonFinite { .. })
        ));
    }

    #[test]
    fn negative_values_survive_apply_and_reparse() {
        let prog = p("phenotype p { return 0.5; }");
        let out = apply_params(&prog, &[-0.25]).unwrap();
        let back = parse(&out.source_text, &default_schema()).unwrap();
        assert_eq!(back, out);
        assert_eq!(extract_params(&back).values(), vec![-0.25]);
    }
}
