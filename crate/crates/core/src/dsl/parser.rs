//! Syntax pass: token stream to untyped statements. Name resolution and all
//! problem-level checks happen in `semantic`.

use super::ast::{BinaryOp, Sense, VarKind};
use super::lexer::{Keyword, Token, TokenKind};
use super::DslError;

/// Untyped expression tree as written in the source.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Raw {
    Num(f64),
    Ident(String),
    Call(Box<Raw>, Vec<Raw>),
    Vector(Vec<Raw>),
    Neg(Box<Raw>),
    Binary(BinaryOp, Box<Raw>, Box<Raw>),
    Integral(Box<Raw>),
    /// `derivative(name)`; only meaningful when applied to the time symbol.
    Derivative(String),
}

impl Raw {
    pub(crate) fn contains_integral(&self) -> bool {
        match self {
            Raw::Integral(_) => true,
            Raw::Call(f, args) => f.contains_integral() || args.iter().any(Raw::contains_integral),
            Raw::Vector(items) => items.iter().any(Raw::contains_integral),
            Raw::Neg(a) => a.contains_integral(),
            Raw::Binary(_, a, b) => a.contains_integral() || b.contains_integral(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CmpOp {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DeclKind {
    Time,
    Var(VarKind),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Domain {
    Real(usize),
    Interval(Raw, Raw),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum StmtKind {
    Define {
        name: String,
        value: Raw,
    },
    Declare {
        name: String,
        aliases: Option<Vec<String>>,
        domain: Domain,
        kind: DeclKind,
    },
    Compare {
        sides: Vec<Raw>,
        ops: Vec<CmpOp>,
    },
    Cost {
        expr: Raw,
        sense: Sense,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Statement {
    pub kind: StmtKind,
    pub line: usize,
    /// Source text of the statement, for error messages.
    pub text: String,
}

pub(crate) fn parse_statements(source: &str, tokens: &[Token]) -> Result<Vec<Statement>, DslError> {
    tokens
        .split(|t| t.kind == TokenKind::Newline)
        .filter(|s| !s.is_empty())
        .map(|toks| {
            let first = &toks[0];
            let last = &toks[toks.len() - 1];
            let text = source[first.start..last.end].split_whitespace().collect::<Vec<_>>().join(" ");
            let mut p = Parser {
                toks,
                pos: 0,
                line: first.line,
            };
            let kind = p.statement()?;
            Ok(Statement {
                kind,
                line: first.line,
                text,
            })
        })
        .collect()
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> DslError {
        DslError::Syntax {
            line: self.toks.get(self.pos).map_or(self.line, |t| t.line),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&'a TokenKind> {
        self.toks.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, offset: usize) -> Option<&'a TokenKind> {
        self.toks.get(self.pos + offset).map(|t| &t.kind)
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<(), DslError> {
        if self.eat(kind) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}, found {}", self.describe())))
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of line".to_string(),
            Some(TokenKind::Ident(s)) => format!("'{s}'"),
            Some(TokenKind::Keyword(k)) => format!("'{}'", k.as_str()),
            Some(TokenKind::Int(v)) => format!("'{v}'"),
            Some(TokenKind::Real(v)) => format!("'{v}'"),
            Some(k) => format!("{k:?}"),
        }
    }

    fn ident(&mut self) -> Result<String, DslError> {
        match self.peek() {
            Some(TokenKind::Ident(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(self.error(format!("expected identifier, found {}", self.describe()))),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    /// Scans the statement at bracket depth zero for a token.
    fn top_level(&self, pred: impl Fn(&TokenKind) -> bool) -> bool {
        let mut depth = 0i32;
        for t in self.toks {
            match t.kind {
                TokenKind::LParen | TokenKind::LBracket => depth += 1,
                TokenKind::RParen | TokenKind::RBracket => depth -= 1,
                ref k if depth == 0 && pred(k) => return true,
                _ => {}
            }
        }
        false
    }

    fn statement(&mut self) -> Result<StmtKind, DslError> {
        let kind = if self.top_level(|k| *k == TokenKind::Keyword(Keyword::In)) {
            self.declaration()?
        } else if self.top_level(|k| *k == TokenKind::Arrow) {
            let expr = self.expr()?;
            self.expect(&TokenKind::Arrow, "'=>'")?;
            let sense = match self.bump().map(|t| &t.kind) {
                Some(TokenKind::Keyword(Keyword::Min)) => Sense::Min,
                Some(TokenKind::Keyword(Keyword::Max)) => Sense::Max,
                _ => {
                    self.pos -= 1;
                    return Err(self.error("expected 'min' or 'max' after '=>'"));
                }
            };
            StmtKind::Cost { expr, sense }
        } else if self.top_level(|k| matches!(k, TokenKind::EqEq | TokenKind::Le | TokenKind::Ge)) {
            self.comparison()?
        } else if matches!(self.peek(), Some(TokenKind::Ident(_))) && self.peek_at(1) == Some(&TokenKind::Assign) {
            let name = self.ident()?;
            self.bump();
            let value = self.expr()?;
            StmtKind::Define { name, value }
        } else {
            return Err(self.error("expected a declaration, constraint, definition or cost"));
        };
        if !self.at_end() {
            return Err(self.error(format!("unexpected {} at end of statement", self.describe())));
        }
        Ok(kind)
    }

    fn declaration(&mut self) -> Result<StmtKind, DslError> {
        let name = self.ident()?;
        let aliases = if self.eat(&TokenKind::Assign) {
            self.expect(&TokenKind::LParen, "'(' to open the component names")?;
            let mut names = vec![self.ident()?];
            while self.eat(&TokenKind::Comma) {
                names.push(self.ident()?);
            }
            self.expect(&TokenKind::RParen, "')'")?;
            Some(names)
        } else {
            None
        };
        self.expect(&TokenKind::Keyword(Keyword::In), "'in'")?;
        let domain = match self.peek() {
            Some(TokenKind::Ident(r)) if r == "R" => {
                self.pos += 1;
                if self.eat(&TokenKind::Caret) {
                    match self.bump().map(|t| &t.kind) {
                        Some(TokenKind::Int(n)) => Domain::Real(*n as usize),
                        _ => {
                            self.pos -= 1;
                            return Err(self.error("expected an integer dimension after 'R^'"));
                        }
                    }
                } else {
                    Domain::Real(1)
                }
            }
            Some(TokenKind::LBracket) => {
                self.pos += 1;
                let a = self.expr()?;
                self.expect(&TokenKind::Comma, "','")?;
                let b = self.expr()?;
                self.expect(&TokenKind::RBracket, "']'")?;
                Domain::Interval(a, b)
            }
            _ => return Err(self.error(format!("expected 'R' or an interval, found {}", self.describe()))),
        };
        self.expect(&TokenKind::Comma, "',' before the declaration kind")?;
        let kind = match self.bump().map(|t| &t.kind) {
            Some(TokenKind::Keyword(Keyword::Time)) => DeclKind::Time,
            Some(TokenKind::Keyword(Keyword::State)) => DeclKind::Var(VarKind::State),
            Some(TokenKind::Keyword(Keyword::Control)) => DeclKind::Var(VarKind::Control),
            Some(TokenKind::Keyword(Keyword::Variable)) => DeclKind::Var(VarKind::Variable),
            _ => {
                self.pos -= 1;
                return Err(self.error("expected 'time', 'state', 'control' or 'variable'"));
            }
        };
        Ok(StmtKind::Declare {
            name,
            aliases,
            domain,
            kind,
        })
    }

    fn comparison(&mut self) -> Result<StmtKind, DslError> {
        let mut sides = vec![self.expr()?];
        let mut ops = Vec::new();
        loop {
            let op = match self.peek() {
                Some(TokenKind::EqEq) => CmpOp::Eq,
                Some(TokenKind::Le) => CmpOp::Le,
                Some(TokenKind::Ge) => CmpOp::Ge,
                _ => break,
            };
            self.pos += 1;
            ops.push(op);
            sides.push(self.expr()?);
        }
        Ok(StmtKind::Compare { sides, ops })
    }

    fn expr(&mut self) -> Result<Raw, DslError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Plus) => BinaryOp::Add,
                Some(TokenKind::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Raw::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Raw, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Star) => BinaryOp::Mul,
                Some(TokenKind::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Raw::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Raw, DslError> {
        if self.eat(&TokenKind::Minus) {
            return Ok(Raw::Neg(Box::new(self.unary()?)));
        }
        if self.eat(&TokenKind::Plus) {
            return self.unary();
        }
        self.juxtaposed()
    }

    /// A numeric literal immediately followed by a name or a parenthesis
    /// multiplies it, binding looser than `^`: `2x^2` is `2 * (x^2)`.
    fn juxtaposed(&mut self) -> Result<Raw, DslError> {
        if let (Some(num), Some(next)) = (self.toks.get(self.pos), self.toks.get(self.pos + 1)) {
            let is_number = matches!(num.kind, TokenKind::Int(_) | TokenKind::Real(_));
            let glued = num.end == next.start
                && matches!(
                    next.kind,
                    TokenKind::Ident(_) | TokenKind::LParen | TokenKind::Keyword(Keyword::Integral)
                );
            if is_number && glued {
                let coef = self.primary()?;
                let factor = self.power()?;
                return Ok(Raw::Binary(BinaryOp::Mul, Box::new(coef), Box::new(factor)));
            }
        }
        self.power()
    }

    fn power(&mut self) -> Result<Raw, DslError> {
        let base = self.postfix()?;
        if self.eat(&TokenKind::Caret) {
            let exp = self.unary_no_juxt()?;
            return Ok(Raw::Binary(BinaryOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    /// Exponent operand: a signed power, right associative.
    fn unary_no_juxt(&mut self) -> Result<Raw, DslError> {
        if self.eat(&TokenKind::Minus) {
            return Ok(Raw::Neg(Box::new(self.unary_no_juxt()?)));
        }
        self.power()
    }

    fn postfix(&mut self) -> Result<Raw, DslError> {
        let mut e = self.primary()?;
        // a literal never takes call arguments; `2(x)` is a juxtaposition
        if matches!(e, Raw::Num(_)) {
            return Ok(e);
        }
        while self.peek() == Some(&TokenKind::LParen) {
            self.pos += 1;
            let mut args = Vec::new();
            if !self.eat(&TokenKind::RParen) {
                args.push(self.expr()?);
                while self.eat(&TokenKind::Comma) {
                    args.push(self.expr()?);
                }
                self.expect(&TokenKind::RParen, "')'")?;
            }
            e = Raw::Call(Box::new(e), args);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Raw, DslError> {
        let Some(tok) = self.bump() else {
            self.pos -= 1;
            return Err(self.error("unexpected end of line in expression"));
        };
        match &tok.kind {
            TokenKind::Int(v) => Ok(Raw::Num(*v as f64)),
            TokenKind::Real(v) => Ok(Raw::Num(*v)),
            TokenKind::Ident(s) => Ok(Raw::Ident(s.clone())),
            TokenKind::LParen => {
                let e = self.expr()?;
                self.expect(&TokenKind::RParen, "')'")?;
                Ok(e)
            }
            TokenKind::LBracket => {
                let mut items = vec![self.expr()?];
                while self.eat(&TokenKind::Comma) {
                    items.push(self.expr()?);
                }
                self.expect(&TokenKind::RBracket, "']'")?;
                Ok(Raw::Vector(items))
            }
            TokenKind::Keyword(Keyword::Integral) => {
                self.expect(&TokenKind::LParen, "'(' after 'integral'")?;
                let e = self.expr()?;
                self.expect(&TokenKind::RParen, "')'")?;
                Ok(Raw::Integral(Box::new(e)))
            }
            TokenKind::Keyword(Keyword::Derivative) => {
                self.expect(&TokenKind::LParen, "'(' after 'derivative'")?;
                let name = self.ident()?;
                self.expect(&TokenKind::RParen, "')'")?;
                Ok(Raw::Derivative(name))
            }
            _ => {
                self.pos -= 1;
                Err(self.error(format!("unexpected {} in expression", self.describe())))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::lexer::tokenize;

    fn parse_one(src: &str) -> StmtKind {
        let toks = tokenize(src).unwrap();
        let mut stmts = parse_statements(src, &toks).unwrap();
        assert_eq!(stmts.len(), 1);
        stmts.remove(0).kind
    }

    fn num(v: f64) -> Box<Raw> {
        Box::new(Raw::Num(v))
    }

    fn id(s: &str) -> Box<Raw> {
        Box::new(Raw::Ident(s.into()))
    }

    #[test]
    fn juxtaposition_binds_looser_than_power() {
        let StmtKind::Define { value, .. } = parse_one("a = 0.5u^2") else {
            panic!()
        };
        assert_eq!(
            value,
            Raw::Binary(
                BinaryOp::Mul,
                num(0.5),
                Box::new(Raw::Binary(BinaryOp::Pow, id("u"), num(2.0)))
            )
        );
    }

    #[test]
    fn juxtaposition_binds_tighter_than_division() {
        let StmtKind::Define { value, .. } = parse_one("a = 2t / T") else {
            panic!()
        };
        assert_eq!(
            value,
            Raw::Binary(
                BinaryOp::Div,
                Box::new(Raw::Binary(BinaryOp::Mul, num(2.0), id("t"))),
                id("T")
            )
        );
    }

    #[test]
    fn spaced_number_is_not_juxtaposed() {
        let toks = tokenize("a = 2 t").unwrap();
        assert!(parse_statements("a = 2 t", &toks).is_err());
    }

    #[test]
    fn negation_below_power() {
        let StmtKind::Define { value, .. } = parse_one("a = -x^2") else {
            panic!()
        };
        assert_eq!(value, Raw::Neg(Box::new(Raw::Binary(BinaryOp::Pow, id("x"), num(2.0)))));
    }

    #[test]
    fn power_is_right_associative() {
        let StmtKind::Define { value, .. } = parse_one("a = x^2^3") else {
            panic!()
        };
        assert_eq!(
            value,
            Raw::Binary(
                BinaryOp::Pow,
                id("x"),
                Box::new(Raw::Binary(BinaryOp::Pow, num(2.0), num(3.0)))
            )
        );
    }

    #[test]
    fn declaration_with_aliases() {
        let k = parse_one("x = (r, v, m) in R^3, state");
        assert_eq!(
            k,
            StmtKind::Declare {
                name: "x".into(),
                aliases: Some(vec!["r".into(), "v".into(), "m".into()]),
                domain: Domain::Real(3),
                kind: DeclKind::Var(VarKind::State),
            }
        );
    }

    #[test]
    fn dynamics_statement_shape() {
        let StmtKind::Compare { sides, ops } = parse_one("derivative(x1)(t) == x2(t)") else {
            panic!()
        };
        assert_eq!(ops, vec![CmpOp::Eq]);
        assert_eq!(sides[0], Raw::Call(Box::new(Raw::Derivative("x1".into())), vec![Raw::Ident("t".into())]));
    }

    #[test]
    fn cost_statement() {
        let StmtKind::Cost { expr, sense } = parse_one("0.5integral( u(t)^2 ) => min") else {
            panic!()
        };
        assert_eq!(sense, Sense::Min);
        assert!(expr.contains_integral());
    }

    #[test]
    fn chained_constraint() {
        let StmtKind::Compare { sides, ops } = parse_one("0 <= u(t) <= 1") else {
            panic!()
        };
        assert_eq!(ops, vec![CmpOp::Le, CmpOp::Le]);
        assert_eq!(sides.len(), 3);
    }

    #[test]
    fn statement_text_is_normalised() {
        let src = "derivative(v)(t) == -Cd *\n   v(t)";
        let toks = tokenize(src).unwrap();
        let st = parse_statements(src, &toks).unwrap();
        assert_eq!(st[0].text, "derivative(v)(t) == -Cd * v(t)");
    }

    #[test]
    fn trailing_garbage_is_an_error() {
        let src = "x in R^2, state state";
        let toks = tokenize(src).unwrap();
        let err = parse_statements(src, &toks).unwrap_err();
        assert!(err.to_string().starts_with("line 1:"));
    }
}
