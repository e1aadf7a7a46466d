use serde::Serialize;

/// Where a component reference is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Instant {
    /// The running time symbol.
    Now,
    Initial,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }

    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Neg => -a,
            UnaryOp::Sin => a.sin(),
            UnaryOp::Cos => a.cos(),
            UnaryOp::Tan => a.tan(),
            UnaryOp::Exp => a.exp(),
            UnaryOp::Log => a.ln(),
            UnaryOp::Sqrt => a.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => a.powf(b),
        }
    }
}

/// Resolved scalar expression. Constant subtrees are always folded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Const(f64),
    /// The time symbol.
    Time,
    State(usize, Instant),
    Control(usize, Instant),
    Variable(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        match (op, a) {
            (UnaryOp::Neg, a) => a.negate(),
            (op, Expr::Const(c)) => Expr::Const(op.apply(c)),
            (op, a) => Expr::Unary(op, Box::new(a)),
        }
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(op.apply(x, y)),
            (a, b) => Expr::Binary(op, Box::new(a), Box::new(b)),
        }
    }

    /// Negation that never stacks: `-(-e)` collapses to `e`, so negating
    /// twice is the identity on every tree this module builds.
    pub fn negate(self) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Unary(UnaryOp::Neg, inner) => *inner,
            e => Expr::Unary(UnaryOp::Neg, Box::new(e)),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Visits every node in prefix order.
    pub fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Unary(_, a) => a.walk(f),
            Expr::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    pub fn any(&self, pred: impl Fn(&Expr) -> bool) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= pred(e));
        found
    }

    /// True if the expression reads the time symbol or a component at `Now`.
    pub fn is_running(&self) -> bool {
        self.any(|e| {
            matches!(
                e,
                Expr::Time | Expr::State(_, Instant::Now) | Expr::Control(_, Instant::Now)
            )
        })
    }

    /// True if the expression reads a component at the initial or final instant.
    pub fn is_endpoint(&self) -> bool {
        self.any(|e| match e {
            Expr::State(_, at) | Expr::Control(_, at) => *at != Instant::Now,
            _ => false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum VarKind {
    State,
    Control,
    Variable,
}

impl VarKind {
    pub fn keyword(self) -> &'static str {
        match self {
            VarKind::State => "state",
            VarKind::Control => "control",
            VarKind::Variable => "variable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub dim: usize,
    /// Component aliases, `x = (r, v, m)`.
    pub component_names: Option<Vec<String>>,
    pub line: usize,
}

impl VarDecl {
    /// Display name of component `k` (alias if any, else indexed form).
    pub fn component_name(&self, k: usize) -> String {
        match &self.component_names {
            Some(names) => names[k].clone(),
            None if self.dim == 1 => self.name.clone(),
            None => format!("{}{}", self.name, k + 1),
        }
    }
}

/// A time bound is either a constant or the (scalar) free variable component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TimeBound {
    Fixed(f64),
    Variable(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSpec {
    pub name: String,
    pub t0: TimeBound,
    pub tf: TimeBound,
    pub line: usize,
}

impl TimeSpec {
    pub fn is_fixed(&self) -> bool {
        matches!((self.t0, self.tf), (TimeBound::Fixed(_), TimeBound::Fixed(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ConstraintKind {
    Boundary,
    Path,
    BoxState,
    BoxControl,
    BoxVariable,
}

/// One constraint statement. Rows are `lower[i] <= exprs[i] <= upper[i]`;
/// an equality has `lower == upper`. Box kinds hold bare component
/// references only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintDecl {
    pub kind: ConstraintKind,
    pub exprs: Vec<Expr>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub line: usize,
}

impl ConstraintDecl {
    pub fn rows(&self) -> usize {
        self.exprs.len()
    }
}

/// Right-hand side of `derivative(x_k)(t) == f_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dynamics {
    pub expr: Expr,
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Min,
    Max,
}

/// Bolza cost. Both parts are already negated when `sense == Max`, so the
/// stored problem is always a minimisation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostDecl {
    pub mayer: Option<Expr>,
    pub lagrange: Option<Expr>,
    pub sense: Sense,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OcpProblem {
    pub time: TimeSpec,
    pub decls: Vec<VarDecl>,
    pub dynamics: Vec<Dynamics>,
    pub constraints: Vec<ConstraintDecl>,
    pub cost: CostDecl,
}

impl OcpProblem {
    pub fn decl(&self, kind: VarKind) -> Option<&VarDecl> {
        self.decls.iter().find(|d| d.kind == kind)
    }

    pub fn dim(&self, kind: VarKind) -> usize {
        self.decl(kind).map_or(0, |d| d.dim)
    }

    pub fn state_dim(&self) -> usize {
        self.dim(VarKind::State)
    }

    pub fn control_dim(&self) -> usize {
        self.dim(VarKind::Control)
    }

    pub fn variable_dim(&self) -> usize {
        self.dim(VarKind::Variable)
    }

    /// Copy with every source line zeroed; two problems are structurally
    /// equal when their stripped copies compare equal.
    pub fn without_lines(&self) -> OcpProblem {
        let mut p = self.clone();
        p.time.line = 0;
        p.cost.line = 0;
        p.decls.iter_mut().for_each(|d| d.line = 0);
        p.dynamics.iter_mut().for_each(|d| d.line = 0);
        p.constraints.iter_mut().for_each(|c| c.line = 0);
        p
    }

    pub fn structurally_eq(&self, other: &OcpProblem) -> bool {
        self.without_lines() == other.without_lines()
    }
}
