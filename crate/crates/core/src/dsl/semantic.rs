//! Semantic pass: name resolution, constant folding, classification of
//! constraints and all problem-level checks.

use std::collections::HashMap;

use super::ast::{
    BinaryOp, ConstraintDecl, ConstraintKind, CostDecl, Dynamics, Expr, Instant, OcpProblem, Sense, TimeBound,
    TimeSpec, UnaryOp, VarDecl, VarKind,
};
use super::parser::{CmpOp, DeclKind, Domain, Raw, Statement, StmtKind};
use super::DslError;

const RESERVED: &[&str] = &[
    "pi", "Inf", "sin", "cos", "tan", "exp", "log", "sqrt", "zeros", "ones", "R",
];

#[derive(Debug, Clone)]
enum Value {
    Scalar(Expr),
    Vector(Vec<Expr>),
}

impl Value {
    fn into_rows(self) -> Vec<Expr> {
        match self {
            Value::Scalar(e) => vec![e],
            Value::Vector(v) => v,
        }
    }
}

enum Name<'a> {
    Def(&'a Value),
    Time,
    Builtin(f64),
    /// Declaration and component; `None` means the whole vector.
    Decl(VarKind, Option<usize>),
}

fn semantic(line: usize, message: impl Into<String>) -> DslError {
    DslError::Semantic {
        line,
        message: message.into(),
    }
}

#[derive(Default)]
struct Analyzer {
    defs: HashMap<String, Value>,
    taken: HashMap<String, usize>,
    time: Option<TimeSpec>,
    decls: Vec<VarDecl>,
    dynamics: Vec<Option<Dynamics>>,
    constraints: Vec<ConstraintDecl>,
    cost: Option<CostDecl>,
}

pub(crate) fn analyze(statements: &[Statement], last_line: usize) -> Result<OcpProblem, DslError> {
    let mut a = Analyzer::default();
    for st in statements {
        a.statement(st)?;
    }
    let time = a.time.ok_or_else(|| semantic(last_line, "missing time declaration"))?;
    let state = a
        .decls
        .iter()
        .find(|d| d.kind == VarKind::State)
        .ok_or_else(|| semantic(last_line, "missing state declaration"))?;
    let cost = a.cost.ok_or_else(|| semantic(last_line, "missing cost (expected `... => min` or `... => max`)"))?;
    let dynamics = a
        .dynamics
        .into_iter()
        .enumerate()
        .map(|(k, d)| {
            d.ok_or_else(|| {
                semantic(
                    state.line,
                    format!("missing dynamics for state component {}", state.component_name(k)),
                )
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OcpProblem {
        time,
        decls: a.decls,
        dynamics,
        constraints: a.constraints,
        cost,
    })
}

impl Analyzer {
    fn decl(&self, kind: VarKind) -> Option<&VarDecl> {
        self.decls.iter().find(|d| d.kind == kind)
    }

    fn reserve(&mut self, name: &str, line: usize) -> Result<(), DslError> {
        if RESERVED.contains(&name) {
            return Err(semantic(line, format!("'{name}' is a reserved name")));
        }
        if let Some(prev) = self.taken.get(name) {
            return Err(semantic(line, format!("'{name}' is already declared on line {prev}")));
        }
        self.taken.insert(name.to_string(), line);
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<Name<'_>> {
        if let Some(v) = self.defs.get(name) {
            return Some(Name::Def(v));
        }
        if self.time.as_ref().is_some_and(|t| t.name == name) {
            return Some(Name::Time);
        }
        match name {
            "pi" => return Some(Name::Builtin(std::f64::consts::PI)),
            "Inf" => return Some(Name::Builtin(f64::INFINITY)),
            _ => {}
        }
        for d in &self.decls {
            if d.name == name {
                return Some(Name::Decl(d.kind, (d.dim == 1).then_some(0)));
            }
            if let Some(k) = d.component_names.as_ref().and_then(|c| c.iter().position(|n| n == name)) {
                return Some(Name::Decl(d.kind, Some(k)));
            }
        }
        let digits = name.len() - name.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        if digits > 0 && digits < name.len() {
            let (prefix, idx) = name.split_at(name.len() - digits);
            if !idx.starts_with('0') {
                let k: usize = idx.parse().ok()?;
                for d in &self.decls {
                    if d.name == prefix && (1..=d.dim).contains(&k) {
                        return Some(Name::Decl(d.kind, Some(k - 1)));
                    }
                }
            }
        }
        None
    }

    fn statement(&mut self, st: &Statement) -> Result<(), DslError> {
        let line = st.line;
        match &st.kind {
            StmtKind::Define { name, value } => {
                self.reserve(name, line)?;
                let v = self.resolve(value, line)?;
                self.defs.insert(name.clone(), v);
                Ok(())
            }
            StmtKind::Declare {
                name,
                aliases,
                domain,
                kind,
            } => match kind {
                DeclKind::Time => self.declare_time(name, aliases.as_deref(), domain, line),
                DeclKind::Var(kind) => self.declare_var(name, aliases.as_deref(), domain, *kind, line),
            },
            StmtKind::Compare { sides, ops } => {
                if let [Raw::Call(f, args), rhs] = sides.as_slice() {
                    if let Raw::Derivative(name) = f.as_ref() {
                        if ops.as_slice() != [CmpOp::Eq] {
                            return Err(semantic(line, "a dynamics equation must use '=='"));
                        }
                        return self.dynamics(name, args, rhs, line);
                    }
                }
                self.constraint(sides, ops, st)
            }
            StmtKind::Cost { expr, sense } => self.cost(expr, *sense, line),
        }
    }

    fn declare_time(
        &mut self,
        name: &str,
        aliases: Option<&[String]>,
        domain: &Domain,
        line: usize,
    ) -> Result<(), DslError> {
        if let Some(prev) = &self.time {
            return Err(semantic(line, format!("duplicate time declaration (first on line {})", prev.line)));
        }
        if aliases.is_some() {
            return Err(semantic(line, "the time declaration takes no component names"));
        }
        let Domain::Interval(a, b) = domain else {
            return Err(semantic(line, "time must be declared on an interval, e.g. `t in [0, 1], time`"));
        };
        let t0 = self.time_bound(a, line)?;
        let tf = self.time_bound(b, line)?;
        match (t0, tf) {
            (TimeBound::Fixed(x), TimeBound::Fixed(y)) if x >= y => {
                return Err(semantic(line, format!("empty time interval [{x}, {y}]")));
            }
            (TimeBound::Variable(i), TimeBound::Variable(j)) if i == j => {
                return Err(semantic(line, "initial and final time cannot be the same variable"));
            }
            _ => {}
        }
        self.reserve(name, line)?;
        self.time = Some(TimeSpec {
            name: name.to_string(),
            t0,
            tf,
            line,
        });
        Ok(())
    }

    fn time_bound(&self, raw: &Raw, line: usize) -> Result<TimeBound, DslError> {
        match self.scalar(raw, line)? {
            Expr::Const(c) if c.is_finite() => Ok(TimeBound::Fixed(c)),
            Expr::Variable(k) => Ok(TimeBound::Variable(k)),
            _ => Err(semantic(
                line,
                "time bounds must be finite constants or a component declared with `variable`",
            )),
        }
    }

    fn declare_var(
        &mut self,
        name: &str,
        aliases: Option<&[String]>,
        domain: &Domain,
        kind: VarKind,
        line: usize,
    ) -> Result<(), DslError> {
        if let Some(prev) = self.decl(kind) {
            return Err(semantic(
                line,
                format!("duplicate {} declaration (first on line {})", kind.keyword(), prev.line),
            ));
        }
        let Domain::Real(dim) = *domain else {
            return Err(semantic(line, format!("a {} must be declared in R or R^n", kind.keyword())));
        };
        if dim == 0 {
            return Err(semantic(line, "dimension must be at least 1"));
        }
        if let Some(names) = aliases {
            if names.len() != dim {
                return Err(semantic(
                    line,
                    format!("expected {dim} component names, found {}", names.len()),
                ));
            }
        }
        self.reserve(name, line)?;
        for a in aliases.unwrap_or_default() {
            self.reserve(a, line)?;
        }
        for k in 1..=dim {
            let indexed = format!("{name}{k}");
            if aliases.is_some_and(|a| a.contains(&indexed)) {
                continue;
            }
            self.reserve(&indexed, line)?;
        }
        if kind == VarKind::State {
            self.dynamics = vec![None; dim];
        }
        self.decls.push(VarDecl {
            name: name.to_string(),
            kind,
            dim,
            component_names: aliases.map(<[String]>::to_vec),
            line,
        });
        Ok(())
    }

    fn dynamics(&mut self, name: &str, args: &[Raw], rhs: &Raw, line: usize) -> Result<(), DslError> {
        let k = match self.lookup(name) {
            Some(Name::Decl(VarKind::State, Some(k))) => k,
            Some(Name::Decl(VarKind::State, None)) => {
                return Err(semantic(
                    line,
                    format!("derivative({name}) of a vector state is not supported; write one equation per component"),
                ))
            }
            _ => return Err(semantic(line, format!("derivative of '{name}', which is not a state component"))),
        };
        let time_name = self.time.as_ref().map(|t| t.name.as_str());
        match args {
            [Raw::Ident(t)] if Some(t.as_str()) == time_name => {}
            _ => return Err(semantic(line, "a derivative must be taken at the time symbol, e.g. derivative(x1)(t)")),
        }
        let expr = self.scalar(rhs, line)?;
        if expr.is_endpoint() {
            return Err(semantic(line, "dynamics may not reference initial or final values"));
        }
        let slot = &mut self.dynamics[k];
        if let Some(prev) = slot {
            return Err(semantic(
                line,
                format!("duplicate dynamics for state component {name} (first on line {})", prev.line),
            ));
        }
        *slot = Some(Dynamics { expr, line });
        Ok(())
    }

    fn constraint(&mut self, sides: &[Raw], ops: &[CmpOp], st: &Statement) -> Result<(), DslError> {
        let line = st.line;
        let wrong_dim = || semantic(line, format!("wrong bound dimension in ({})", st.text));
        if sides.iter().any(|s| matches!(s, Raw::Call(f, _) if matches!(**f, Raw::Derivative(_)))) {
            return Err(semantic(line, "derivative(...)(t) may only appear alone on the left of '=='"));
        }
        let values = sides
            .iter()
            .map(|s| self.resolve(s, line).map(Value::into_rows))
            .collect::<Result<Vec<_>, _>>()?;
        let constant = |rows: &[Expr]| rows.iter().map(Expr::as_const).collect::<Option<Vec<f64>>>();
        let difference = |a: &[Expr], b: &[Expr]| -> Result<Vec<Expr>, DslError> {
            if a.len() != b.len() {
                return Err(wrong_dim());
            }
            Ok(a.iter()
                .zip(b)
                .map(|(x, y)| Expr::binary(BinaryOp::Sub, x.clone(), y.clone()))
                .collect())
        };
        let inf = f64::INFINITY;
        let (body, lower, upper) = match (ops, values.as_slice()) {
            ([CmpOp::Eq], [a, b]) => match (constant(a), constant(b)) {
                (_, Some(c)) => (a.clone(), c.clone(), c),
                (Some(c), None) => (b.clone(), c.clone(), c),
                (None, None) => (difference(a, b)?, vec![0.0; a.len()], vec![0.0; a.len()]),
            },
            ([op @ (CmpOp::Le | CmpOp::Ge)], [a, b]) => {
                let le = *op == CmpOp::Le;
                match (constant(a), constant(b)) {
                    (_, Some(c)) if le => (a.clone(), vec![-inf; c.len()], c),
                    (_, Some(c)) => (a.clone(), c.clone(), vec![inf; c.len()]),
                    (Some(c), None) if le => (b.clone(), c.clone(), vec![inf; c.len()]),
                    (Some(c), None) => (b.clone(), vec![-inf; c.len()], c),
                    (None, None) => {
                        let n = a.len();
                        let d = difference(a, b)?;
                        if le {
                            (d, vec![-inf; n], vec![0.0; n])
                        } else {
                            (d, vec![0.0; n], vec![inf; n])
                        }
                    }
                }
            }
            ([o1, o2], [a, b, c]) if o1 == o2 && *o1 != CmpOp::Eq => {
                let (Some(ca), Some(cc)) = (constant(a), constant(c)) else {
                    return Err(semantic(line, "the outer terms of a chained inequality must be constant"));
                };
                if *o1 == CmpOp::Le {
                    (b.clone(), ca, cc)
                } else {
                    (b.clone(), cc, ca)
                }
            }
            _ => return Err(semantic(line, "unsupported comparison chain")),
        };
        if lower.len() != body.len() || upper.len() != body.len() {
            return Err(wrong_dim());
        }
        if body.iter().all(|e| e.as_const().is_some()) {
            return Err(semantic(line, "constraint does not involve any decision variable"));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if l > u {
                return Err(semantic(line, format!("lower bound {l} exceeds upper bound {u}")));
            }
            if l == u && !l.is_finite() {
                return Err(semantic(line, "equality with an infinite value"));
            }
        }
        let running = body.iter().any(Expr::is_running);
        if running && body.iter().any(Expr::is_endpoint) {
            return Err(semantic(line, "constraint mixes running and endpoint values"));
        }
        let all = |p: fn(&Expr) -> bool| body.iter().all(p);
        let kind = if all(|e| matches!(e, Expr::State(_, Instant::Now))) {
            ConstraintKind::BoxState
        } else if all(|e| matches!(e, Expr::Control(_, Instant::Now))) {
            ConstraintKind::BoxControl
        } else if all(|e| matches!(e, Expr::Variable(_))) {
            ConstraintKind::BoxVariable
        } else if running {
            ConstraintKind::Path
        } else {
            ConstraintKind::Boundary
        };
        self.constraints.push(ConstraintDecl {
            kind,
            exprs: body,
            lower,
            upper,
            line,
        });
        Ok(())
    }

    fn cost(&mut self, raw: &Raw, sense: Sense, line: usize) -> Result<(), DslError> {
        if let Some(prev) = &self.cost {
            return Err(semantic(line, format!("duplicate cost (first on line {})", prev.line)));
        }
        let (mut mayer, mut lagrange) = self.split_cost(raw, line)?;
        if mayer.is_none() && lagrange.is_none() {
            return Err(semantic(line, "empty cost"));
        }
        if mayer.as_ref().is_some_and(Expr::is_running) {
            return Err(semantic(
                line,
                "the endpoint cost may only use initial/final values; wrap running terms in integral(...)",
            ));
        }
        if lagrange.as_ref().is_some_and(Expr::is_endpoint) {
            return Err(semantic(line, "the integrand may not reference initial or final values"));
        }
        if sense == Sense::Max {
            mayer = mayer.map(Expr::negate);
            lagrange = lagrange.map(Expr::negate);
        }
        self.cost = Some(CostDecl {
            mayer,
            lagrange,
            sense,
            line,
        });
        Ok(())
    }

    /// Splits a cost expression into its endpoint and integral parts. The
    /// integral may only enter linearly.
    fn split_cost(&self, raw: &Raw, line: usize) -> Result<(Option<Expr>, Option<Expr>), DslError> {
        if !raw.contains_integral() {
            return Ok((Some(self.scalar(raw, line)?), None));
        }
        let nonlinear = || semantic(line, "integral(...) must enter the cost linearly");
        let join = |a: Option<Expr>, b: Option<Expr>, op: BinaryOp| match (a, b) {
            (Some(a), Some(b)) => Some(Expr::binary(op, a, b)),
            (Some(a), None) => Some(a),
            (None, Some(b)) if op == BinaryOp::Sub => Some(b.negate()),
            (None, b) => b,
        };
        match raw {
            Raw::Integral(inner) => {
                if inner.contains_integral() {
                    return Err(nonlinear());
                }
                Ok((None, Some(self.scalar(inner, line)?)))
            }
            Raw::Neg(a) => {
                let (m, l) = self.split_cost(a, line)?;
                Ok((m.map(Expr::negate), l.map(Expr::negate)))
            }
            Raw::Binary(op @ (BinaryOp::Add | BinaryOp::Sub), a, b) => {
                let (ma, la) = self.split_cost(a, line)?;
                let (mb, lb) = self.split_cost(b, line)?;
                Ok((join(ma, mb, *op), join(la, lb, *op)))
            }
            Raw::Binary(BinaryOp::Mul, a, b) if !a.contains_integral() => {
                let Expr::Const(c) = self.scalar(a, line)? else {
                    return Err(nonlinear());
                };
                let (m, l) = self.split_cost(b, line)?;
                let scale = |e: Expr| Expr::binary(BinaryOp::Mul, Expr::Const(c), e);
                Ok((m.map(scale), l.map(scale)))
            }
            Raw::Binary(op @ (BinaryOp::Mul | BinaryOp::Div), a, b) if !b.contains_integral() => {
                let Expr::Const(c) = self.scalar(b, line)? else {
                    return Err(nonlinear());
                };
                let (m, l) = self.split_cost(a, line)?;
                let scale = |e: Expr| Expr::binary(*op, e, Expr::Const(c));
                Ok((m.map(scale), l.map(scale)))
            }
            _ => Err(nonlinear()),
        }
    }

    fn scalar(&self, raw: &Raw, line: usize) -> Result<Expr, DslError> {
        match self.resolve(raw, line)? {
            Value::Scalar(e) => Ok(e),
            Value::Vector(_) => Err(semantic(line, "expected a scalar expression, found a vector")),
        }
    }

    fn resolve(&self, raw: &Raw, line: usize) -> Result<Value, DslError> {
        let v = match raw {
            Raw::Num(v) => Value::Scalar(Expr::Const(*v)),
            Raw::Ident(name) => match self.lookup(name) {
                Some(Name::Def(v)) => v.clone(),
                Some(Name::Time) => Value::Scalar(Expr::Time),
                Some(Name::Builtin(c)) => Value::Scalar(Expr::Const(c)),
                Some(Name::Decl(VarKind::Variable, comp)) => {
                    let dim = self.decl(VarKind::Variable).map_or(0, |d| d.dim);
                    components(VarKind::Variable, comp, dim, Instant::Now)
                }
                Some(Name::Decl(_, _)) => {
                    return Err(semantic(line, format!("'{name}' needs a time argument, e.g. {name}(t)")))
                }
                None => return Err(semantic(line, format!("undeclared identifier '{name}'"))),
            },
            Raw::Call(f, args) => return self.call(f, args, line),
            Raw::Vector(items) => Value::Vector(
                items
                    .iter()
                    .map(|i| self.scalar(i, line))
                    .collect::<Result<_, _>>()?,
            ),
            Raw::Neg(a) => match self.resolve(a, line)? {
                Value::Scalar(e) => Value::Scalar(e.negate()),
                Value::Vector(v) => Value::Vector(v.into_iter().map(Expr::negate).collect()),
            },
            Raw::Binary(op, a, b) => {
                let a = self.scalar(a, line)?;
                let b = self.scalar(b, line)?;
                if *op == BinaryOp::Pow && b.as_const().is_none() {
                    return Err(semantic(line, "exponents must be constant"));
                }
                Value::Scalar(Expr::binary(*op, a, b))
            }
            Raw::Integral(_) => return Err(semantic(line, "integral(...) is only allowed in the cost")),
            Raw::Derivative(_) => {
                return Err(semantic(line, "derivative(...) may only appear on the left of a dynamics equation"))
            }
        };
        if let Value::Scalar(Expr::Const(c)) = &v {
            if c.is_nan() {
                return Err(semantic(line, "constant expression is not a number"));
            }
        }
        Ok(v)
    }

    fn call(&self, f: &Raw, args: &[Raw], line: usize) -> Result<Value, DslError> {
        let Raw::Ident(name) = f else {
            return Err(semantic(line, "only named functions and components can be called"));
        };
        if let Some(op) = UnaryOp::from_name(name) {
            let [arg] = args else {
                return Err(semantic(line, format!("{name} takes one argument")));
            };
            let e = Expr::unary(op, self.scalar(arg, line)?);
            if e.as_const().is_some_and(f64::is_nan) {
                return Err(semantic(line, format!("{name} of a constant outside its domain")));
            }
            return Ok(Value::Scalar(e));
        }
        if name == "zeros" || name == "ones" {
            let n = match args {
                [arg] => self.scalar(arg, line)?.as_const(),
                _ => None,
            };
            let Some(n) = n.filter(|n| *n >= 1.0 && n.fract() == 0.0) else {
                return Err(semantic(line, format!("{name} expects one positive integer argument")));
            };
            let fill = if name == "zeros" { 0.0 } else { 1.0 };
            return Ok(Value::Vector(vec![Expr::Const(fill); n as usize]));
        }
        match self.lookup(name) {
            Some(Name::Decl(kind @ (VarKind::State | VarKind::Control), comp)) => {
                let [arg] = args else {
                    return Err(semantic(line, format!("{name}(...) takes exactly one time argument")));
                };
                let at = self.instant(arg, line)?;
                let dim = self.decl(kind).map_or(0, |d| d.dim);
                Ok(components(kind, comp, dim, at))
            }
            Some(Name::Decl(VarKind::Variable, _)) => Err(semantic(
                line,
                format!("'{name}' is a variable and takes no time argument"),
            )),
            Some(_) => Err(semantic(line, format!("'{name}' is not callable"))),
            None => Err(semantic(line, format!("undeclared identifier '{name}'"))),
        }
    }

    fn instant(&self, arg: &Raw, line: usize) -> Result<Instant, DslError> {
        let Some(time) = &self.time else {
            return Err(semantic(line, "the time declaration must come before component references"));
        };
        if matches!(arg, Raw::Ident(t) if *t == time.name) {
            return Ok(Instant::Now);
        }
        let e = self.scalar(arg, line)?;
        let matches = |b: TimeBound| match (b, &e) {
            (TimeBound::Fixed(x), Expr::Const(y)) => x == *y,
            (TimeBound::Variable(i), Expr::Variable(j)) => i == *j,
            _ => false,
        };
        if matches(time.t0) {
            Ok(Instant::Initial)
        } else if matches(time.tf) {
            Ok(Instant::Final)
        } else {
            Err(semantic(
                line,
                format!(
                    "time argument must be {}, the initial time or the final time; interior instants are not supported",
                    time.name
                ),
            ))
        }
    }
}

fn components(kind: VarKind, comp: Option<usize>, dim: usize, at: Instant) -> Value {
    let make = |k: usize| match kind {
        VarKind::State => Expr::State(k, at),
        VarKind::Control => Expr::Control(k, at),
        VarKind::Variable => Expr::Variable(k),
    };
    match comp {
        Some(k) => Value::Scalar(make(k)),
        None => Value::Vector((0..dim).map(make).collect()),
    }
}
