//! The `.ocp` modelling language: lexer, parser, semantic checks and a
//! canonical printer. See `docs/grammar.md` for the syntax.

mod ast;
mod lexer;
mod parser;
mod printer;
mod semantic;

use thiserror::Error;

pub use ast::{
    BinaryOp, ConstraintDecl, ConstraintKind, CostDecl, Dynamics, Expr, Instant, OcpProblem, Sense, TimeBound,
    TimeSpec, UnaryOp, VarDecl, VarKind,
};
pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub(crate) use printer::fmt_num;
pub use printer::pretty_print;

/// Every variant renders as `line <L>: <message>`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("line {line}: column {col}: {message}")]
    Lex { line: usize, col: usize, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {message}")]
    Semantic { line: usize, message: String },
}

impl DslError {
    pub fn line(&self) -> usize {
        match self {
            DslError::Lex { line, .. } | DslError::Syntax { line, .. } | DslError::Semantic { line, .. } => *line,
        }
    }
}

/// Parses and validates a problem.
pub fn parse_ocp(source: &str) -> Result<OcpProblem, DslError> {
    let tokens = tokenize(source)?;
    let statements = parser::parse_statements(source, &tokens)?;
    let last_line = source.lines().count().max(1);
    semantic::analyze(&statements, last_line)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOUBLE_INTEGRATOR: &str = "
t in [0, 1], time
x in R^2, state
u in R, control
x(0) == [-1, 0]
x(1) == [0, 0]
derivative(x1)(t) == x2(t)
derivative(x2)(t) == u(t)
integral( 0.5u(t)^2 ) => min
";

    fn err(src: &str) -> DslError {
        parse_ocp(src).expect_err("expected a parse error")
    }

    #[test]
    fn double_integrator() {
        let p = parse_ocp(DOUBLE_INTEGRATOR).unwrap();
        assert_eq!(p.state_dim(), 2);
        assert_eq!(p.control_dim(), 1);
        assert_eq!(p.variable_dim(), 0);
        assert!(p.time.is_fixed());
        assert_eq!(p.constraints.len(), 2);
        let c0 = &p.constraints[0];
        assert_eq!(c0.kind, ConstraintKind::Boundary);
        assert_eq!(c0.exprs, vec![Expr::State(0, Instant::Initial), Expr::State(1, Instant::Initial)]);
        assert_eq!(c0.lower, vec![-1.0, 0.0]);
        assert_eq!(c0.upper, c0.lower);
        assert_eq!(p.constraints[1].exprs[0], Expr::State(0, Instant::Final));
        assert_eq!(p.dynamics[0].expr, Expr::State(1, Instant::Now));
        assert_eq!(p.dynamics[1].expr, Expr::Control(0, Instant::Now));
        assert_eq!(
            p.cost.lagrange,
            Some(Expr::binary(
                BinaryOp::Mul,
                Expr::Const(0.5),
                Expr::binary(BinaryOp::Pow, Expr::Control(0, Instant::Now), Expr::Const(2.0))
            ))
        );
        assert_eq!(p.cost.mayer, None);
        assert_eq!(p.cost.sense, Sense::Min);
    }

    #[test]
    fn wrong_bound_dimension_reports_line_and_text() {
        let src = DOUBLE_INTEGRATOR.replace("x(0) == [-1, 0]", "x(0) == [-1, 0, 0]");
        let e = err(&src);
        assert_eq!(e.line(), 5);
        let msg = e.to_string();
        assert!(msg.contains("wrong bound dimension"), "{msg}");
        assert!(msg.contains("x(0) == [-1, 0, 0]"), "{msg}");
        assert!(msg.starts_with("line 5: "), "{msg}");
    }

    #[test]
    fn missing_dynamics_names_component() {
        let src = DOUBLE_INTEGRATOR.replace("derivative(x2)(t) == u(t)\n", "");
        let e = err(&src);
        assert!(e.to_string().contains("missing dynamics for state component x2"), "{e}");
        assert_eq!(e.line(), 3);
    }

    #[test]
    fn duplicate_declarations() {
        let e = err(&format!("{DOUBLE_INTEGRATOR}\ns in [0, 2], time\n"));
        assert!(e.to_string().contains("duplicate time declaration"), "{e}");
        let e = err(&format!("{DOUBLE_INTEGRATOR}\nintegral(u(t)^2) => min\n"));
        assert!(e.to_string().contains("duplicate cost"), "{e}");
        let src = DOUBLE_INTEGRATOR.replace("derivative(x2)(t) == u(t)", "derivative(x1)(t) == u(t)");
        assert!(err(&src).to_string().contains("duplicate dynamics"));
    }

    #[test]
    fn dynamics_count_must_match_state_dimension() {
        // k < n rejected, k = n accepted
        let three = DOUBLE_INTEGRATOR.replace("R^2, state", "R^3, state").replace("[-1, 0]", "[-1, 0, 0]").replace("[0, 0]", "[0, 0, 0]");
        assert!(err(&three).to_string().contains("x3"));
        let complete = three.replace("derivative(x2)", "derivative(x3)(t) == 0\nderivative(x2)");
        assert!(parse_ocp(&complete).is_ok());
    }

    #[test]
    fn chained_inequality_is_one_constraint() {
        let src = format!("{DOUBLE_INTEGRATOR}\n-2 <= u(t) + x1(t) <= 3\n0 <= u(t) <= 1\n");
        let p = parse_ocp(&src).unwrap();
        let path = &p.constraints[2];
        assert_eq!(path.kind, ConstraintKind::Path);
        assert_eq!((path.lower[0], path.upper[0]), (-2.0, 3.0));
        let b = &p.constraints[3];
        assert_eq!(b.kind, ConstraintKind::BoxControl);
        assert_eq!((b.lower[0], b.upper[0]), (0.0, 1.0));
        let src = format!("{DOUBLE_INTEGRATOR}\n3 >= x2(t) >= -1\n");
        let b = &parse_ocp(&src).unwrap().constraints[2];
        assert_eq!((b.kind, b.lower[0], b.upper[0]), (ConstraintKind::BoxState, -1.0, 3.0));
    }

    #[test]
    fn interior_instants_are_rejected() {
        let e = err(&format!("{DOUBLE_INTEGRATOR}\nx1(0.5) == 0\n"));
        assert!(e.to_string().contains("interior instants"), "{e}");
    }

    #[test]
    fn running_values_in_boundary_rejected() {
        let e = err(&format!("{DOUBLE_INTEGRATOR}\nx1(0) + x1(t) == 0\n"));
        assert!(e.to_string().contains("mixes running and endpoint"), "{e}");
        let e = err(&DOUBLE_INTEGRATOR.replace("integral( 0.5u(t)^2 )", "x1(t)"));
        assert!(e.to_string().contains("endpoint cost"), "{e}");
    }

    #[test]
    fn undeclared_and_order() {
        let e = err("x in R, state\nt in [0, 1], time\n");
        assert!(e.to_string().starts_with("line"));
        let e = err("t in [0, 1], time\nx in R, state\nderivative(x)(t) == k\nx(t) => min");
        assert!(e.to_string().contains("undeclared identifier 'k'"), "{e}");
    }

    #[test]
    fn constants_are_folded() {
        let src = "a = 2\nb = 2pi * a\nt in [0, 1], time\nx in R, state\nderivative(x)(t) == b * x(t)\nx(1) => min";
        let p = parse_ocp(src).unwrap();
        assert_eq!(
            p.dynamics[0].expr,
            Expr::binary(BinaryOp::Mul, Expr::Const(4.0 * std::f64::consts::PI), Expr::State(0, Instant::Now))
        );
    }

    #[test]
    fn max_is_negated() {
        let src = "t in [0, 1], time\nx in R, state\nderivative(x)(t) == 1\nx(1) => max";
        let p = parse_ocp(src).unwrap();
        assert_eq!(p.cost.sense, Sense::Max);
        assert_eq!(p.cost.mayer, Some(Expr::State(0, Instant::Final).negate()));
    }

    #[test]
    fn nonlinear_integral_rejected() {
        let src = "t in [0, 1], time\nx in R, state\nderivative(x)(t) == 1\nintegral(x(t))^2 => min";
        assert!(err(src).to_string().contains("linearly"));
    }

    #[test]
    fn every_error_has_a_line() {
        for src in [
            "t in [0, 1], time\nx in R, state",
            "t in [0, 1], time\nderivative(x)(t) == 1",
            "t in [1, 0], time",
            "x in R^0, state",
            "t in [0, 1], time\nx = (a, b) in R^3, state",
            "t in [0, 1], time\nx in R, state\nsin = 2",
        ] {
            let e = err(src);
            assert!(e.to_string().starts_with(&format!("line {}:", e.line())));
            assert!(e.line() >= 1);
        }
    }
}
