//! Canonical text form of an `OcpProblem`. Printing then parsing yields a
//! structurally equal problem: numbers use the shortest round-trip form and
//! every compound expression is parenthesised.

use std::fmt::Write;

use super::ast::{ConstraintDecl, Expr, Instant, OcpProblem, Sense, TimeBound, VarDecl, VarKind};

pub fn pretty_print(p: &OcpProblem) -> String {
    let pr = Printer { p };
    let mut out = String::new();
    let time_after_variable = matches!(p.time.t0, TimeBound::Variable(_)) || matches!(p.time.tf, TimeBound::Variable(_));
    if !time_after_variable {
        out.push_str(&pr.time());
    }
    for d in &p.decls {
        out.push_str(&pr.decl(d));
        if time_after_variable && d.kind == VarKind::Variable {
            out.push_str(&pr.time());
        }
    }
    out.push('\n');
    for c in &p.constraints {
        out.push_str(&pr.constraint(c));
    }
    if !p.constraints.is_empty() {
        out.push('\n');
    }
    let state = p.decl(VarKind::State).expect("validated problem has a state");
    for (k, d) in p.dynamics.iter().enumerate() {
        let _ = writeln!(
            out,
            "derivative({})({}) == {}",
            state.component_name(k),
            p.time.name,
            pr.expr(&d.expr)
        );
    }
    out.push('\n');
    out.push_str(&pr.cost());
    out
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "Inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-Inf".to_string()
    } else {
        format!("{v:?}")
    }
}

struct Printer<'a> {
    p: &'a OcpProblem,
}

impl Printer<'_> {
    fn time(&self) -> String {
        format!(
            "{} in [{}, {}], time\n",
            self.p.time.name,
            self.bound(self.p.time.t0),
            self.bound(self.p.time.tf)
        )
    }

    fn bound(&self, b: TimeBound) -> String {
        match b {
            TimeBound::Fixed(c) => fmt_num(c),
            TimeBound::Variable(k) => self.component(VarKind::Variable, k),
        }
    }

    fn decl(&self, d: &VarDecl) -> String {
        let head = match &d.component_names {
            Some(names) => format!("{} = ({})", d.name, names.join(", ")),
            None => d.name.clone(),
        };
        let domain = if d.dim == 1 {
            "R".to_string()
        } else {
            format!("R^{}", d.dim)
        };
        format!("{head} in {domain}, {}\n", d.kind.keyword())
    }

    fn component(&self, kind: VarKind, k: usize) -> String {
        self.p
            .decl(kind)
            .map_or_else(|| format!("?{k}"), |d| d.component_name(k))
    }

    fn instant(&self, at: Instant) -> String {
        match at {
            Instant::Now => self.p.time.name.clone(),
            Instant::Initial => self.bound(self.p.time.t0),
            Instant::Final => self.bound(self.p.time.tf),
        }
    }

    fn vector(&self, v: &[f64]) -> String {
        if v.len() == 1 {
            fmt_num(v[0])
        } else {
            format!("[{}]", v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(", "))
        }
    }

    fn constraint(&self, c: &ConstraintDecl) -> String {
        let body = if c.exprs.len() == 1 {
            self.expr(&c.exprs[0])
        } else {
            format!(
                "[{}]",
                c.exprs.iter().map(|e| self.expr(e)).collect::<Vec<_>>().join(", ")
            )
        };
        if c.lower == c.upper {
            format!("{body} == {}\n", self.vector(&c.lower))
        } else {
            format!("{} <= {body} <= {}\n", self.vector(&c.lower), self.vector(&c.upper))
        }
    }

    fn cost(&self) -> String {
        let c = &self.p.cost;
        let flip = |e: &Expr| {
            if c.sense == Sense::Max {
                e.clone().negate()
            } else {
                e.clone()
            }
        };
        let mayer = c.mayer.as_ref().map(|m| self.expr(&flip(m)));
        let lagrange = c.lagrange.as_ref().map(|l| format!("integral({})", self.expr(&flip(l))));
        let body = match (mayer, lagrange) {
            (Some(m), Some(l)) => format!("{m} + {l}"),
            (Some(m), None) => m,
            (None, Some(l)) => l,
            (None, None) => "0.0".to_string(),
        };
        let sense = match c.sense {
            Sense::Min => "min",
            Sense::Max => "max",
        };
        format!("{body} => {sense}\n")
    }

    fn expr(&self, e: &Expr) -> String {
        match e {
            Expr::Const(c) if c.is_sign_negative() => format!("({})", fmt_num(*c)),
            Expr::Const(c) => fmt_num(*c),
            Expr::Time => self.p.time.name.clone(),
            Expr::State(k, at) => format!("{}({})", self.component(VarKind::State, *k), self.instant(*at)),
            Expr::Control(k, at) => format!("{}({})", self.component(VarKind::Control, *k), self.instant(*at)),
            Expr::Variable(k) => self.component(VarKind::Variable, *k),
            Expr::Unary(op, a) => match op {
                super::ast::UnaryOp::Neg => format!("(-{})", self.expr(a)),
                _ => format!("{}({})", op.name(), self.expr(a)),
            },
            Expr::Binary(op, a, b) => format!("({} {} {})", self.expr(a), op.symbol(), self.expr(b)),
        }
    }
}
