//! Canonical program formatting: four-space indent, no tabs, trailing
//! newline, and only the parentheses precedence requires.

use std::fmt::Write;

use super::ast::{BinaryOp, Expr, Program, Stmt, UnaryOp};

/// Renders a program so that reparsing yields a structurally equal tree.
pub fn render(program: &Program) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "phenotype {} {{", program.name);
    for stmt in &program.body {
        render_stmt(stmt, 1, &mut out);
    }
    let _ = writeln!(out, "    return {};", render_expr(&program.result, 0));
    out.push_str("}\n");
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn render_stmt(stmt: &Stmt, level: usize, out: &mut String) {
    indent(level, out);
    match stmt {
        Stmt::Let { name, value, .. } => {
            let _ = writeln!(out, "let {} = {};", name, render_expr(value, 0));
        }
        Stmt::Assign { name, value, .. } => {
            let _ = writeln!(out, "{} = {};", name, render_expr(value, 0));
        }
        Stmt::If { cond, then_block, else_block, .. } => {
            let _ = writeln!(out, "if ({}) {{", render_expr(cond, 0));
            for s in then_block {
                render_stmt(s, level + 1, out);
            }
            indent(level, out);
            match else_block {
                Some(else_stmts) => {
                    out.push_str("} else {\n");
                    for s in else_stmts {
                        render_stmt(s, level + 1, out);
                    }
                    indent(level, out);
                    out.push_str("}\n");
                }
                None => out.push_str("}\n"),
            }
        }
    }
}

/// Binding strength; matches the parser's precedence ladder.
fn precedence(expr: &Expr) -> u8 {
    match expr {
        Expr::Binary { op, .. } => match op {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Lt
            | BinaryOp::Le
            | BinaryOp::Gt
            | BinaryOp::Ge
            | BinaryOp::Eq
            | BinaryOp::Ne => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div => 6,
        },
        Expr::Unary { op: UnaryOp::Not, .. } => 3,
        Expr::Unary { op: UnaryOp::Neg, .. } => 7,
        Expr::Number { .. } | Expr::Ident { .. } | Expr::Call { .. } => 8,
    }
}

/// `min_prec` is the loosest precedence allowed without parentheses.
fn render_expr(expr: &Expr, min_prec: u8) -> String {
    let prec = precedence(expr);
    let text = match expr {
        Expr::Number { value, .. } => format!("{value}"),
        Expr::Ident { name, .. } => name.clone(),
        Expr::Unary { op, operand, .. } => match op {
            // Operand must bind at least as tightly as the operator.
            UnaryOp::Not => format!("not {}", render_expr(operand, prec)),
            UnaryOp::Neg => format!("-{}", render_expr(operand, prec)),
        },
        Expr::Binary { op, lhs, rhs, .. } => {
            // Left-associative: the right operand needs strictly tighter binding.
            format!(
                "{} {} {}",
                render_expr(lhs, prec),
                op.symbol(),
                render_expr(rhs, prec + 1)
            )
        }
        Expr::Call { builtin, args, .. } => {
            let args: Vec<String> = args.iter().map(|a| render_expr(a, 0)).collect();
            format!("{}({})", builtin.name(), args.join(", "))
        }
    };
    if prec < min_prec {
        format!("({text})")
    } else {
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::default_schema;
    use crate::dsl::parse;

    fn round_trip(src: &str) {
        let schema = default_schema();
        let p = parse(src, &schema).unwrap();
        let text = render(&p);
        let q = parse(&text, &schema).unwrap_or_else(|e| panic!("reparse {text:?}: {e}"));
        assert_eq!(p, q, "render changed structure:\n{text}");
    }

    #[test]
    fn minimal_round_trip() {
        round_trip("phenotype p { return 0.5; }");
    }

    #[test]
    fn formatting_contract() {
        let schema = default_schema();
        let p = parse(
            "phenotype p { let x = 0; if (bp_n >= 2) { x = 0.5; } else { x = 0.1; } return x; }",
            &schema,
        )
        .unwrap();
        let text = render(&p);
        assert!(!text.contains('\t'));
        assert!(text.ends_with('\n'));
        assert!(!text.ends_with("\n\n"));
        let expected = "phenotype p {\n    let x = 0;\n    if (bp_n >= 2) {\n        x = 0.5;\n    } else {\n        x = 0.1;\n    }\n    return x;\n}\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn precedence_parens_preserved() {
        round_trip("phenotype p { return (bp_n + high_bp_n) * 0.5; }");
        round_trip("phenotype p { return bp_n - (high_bp_n - 1); }");
        round_trip("phenotype p { return bp_n / (high_bp_n + 1) / 2; }");
        round_trip("phenotype p { return not (bp_n > 2 and high_bp_n > 1); }");
        round_trip("phenotype p { return (bp_n > 2) + (high_bp_n > 1); }");
        round_trip("phenotype p { return -(bp_n + 1); }");
        round_trip("phenotype p { return min(bp_n, max(high_bp_n, 2)) + clamp(bp_n, 0, 9); }");
    }

    #[test]
    fn needless_parens_are_dropped() {
        let schema = default_schema();
        let p = parse("phenotype p { return ((bp_n)) + (1.5); }", &schema).unwrap();
        assert_eq!(render(&p), "phenotype p {\n    return bp_n + 1.5;\n}\n");
    }

    #[test]
    fn nested_if_round_trip() {
        round_trip(
            "phenotype p { let x = 0; if (bp_n > 1) { if (high_bp_n > 1) { x = 0.7; } } else { x = 0.2; } return x; }",
        );
    }
}
