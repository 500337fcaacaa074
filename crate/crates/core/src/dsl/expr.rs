//! Expression trees over `x1..xn` and their evaluation to Taylor series.

use std::fmt;

use super::series::{Layout, Series};
use super::DomainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Log,
    Exp,
    Sqrt,
    Sin,
    Cos,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "log" => Func::Log,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Log => "log",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }
}

/// Syntax tree node. Variables are stored zero-based (`x1` is `Var(0)`).
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    fn constant_value(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::Neg(e) => e.constant_value().map(|v| -v),
            _ => None,
        }
    }

    pub(crate) fn eval_series(&self, vars: &[Series]) -> Result<Series, DomainError> {
        match self {
            Expr::Num(v) => {
                let s = &vars[0];
                Ok(Series::constant(s.layout(), s.order(), *v))
            }
            Expr::Var(i) => Ok(vars[*i].clone()),
            Expr::Neg(e) => Ok(-&e.eval_series(vars)?),
            Expr::Binary(op, a, b) => {
                let lhs = a.eval_series(vars)?;
                if *op == BinOp::Pow {
                    return pow_series(&lhs, b, vars);
                }
                let rhs = b.eval_series(vars)?;
                Ok(match op {
                    BinOp::Add => &lhs + &rhs,
                    BinOp::Sub => &lhs - &rhs,
                    BinOp::Mul => &lhs * &rhs,
                    BinOp::Div => {
                        if rhs.value() == 0.0 || !rhs.value().is_finite() {
                            return Err(DomainError::new("division by zero", rhs.value()));
                        }
                        &lhs * &rhs.recip()
                    }
                    BinOp::Pow => unreachable!(),
                })
            }
            Expr::Call(f, e) => {
                let arg = e.eval_series(vars)?;
                let u = arg.value();
                match f {
                    Func::Log => {
                        if u <= 0.0 || !u.is_finite() {
                            return Err(DomainError::new("log of non-positive argument", u));
                        }
                        Ok(arg.ln())
                    }
                    Func::Exp => Ok(arg.exp()),
                    Func::Sqrt => {
                        if u < 0.0 || (u == 0.0 && arg.order() > 0) || !u.is_finite() {
                            return Err(DomainError::new("sqrt outside its smooth domain", u));
                        }
                        Ok(arg.sqrt())
                    }
                    Func::Sin => Ok(arg.sin()),
                    Func::Cos => Ok(arg.cos()),
                }
            }
        }
    }
}

fn pow_series(base: &Series, exponent: &Expr, vars: &[Series]) -> Result<Series, DomainError> {
    if let Some(p) = exponent.constant_value() {
        if p.fract() == 0.0 && p.abs() <= 64.0 {
            if p < 0.0 && base.value() == 0.0 {
                return Err(DomainError::new("negative power of zero", base.value()));
            }
            return Ok(base.powi(p as i64));
        }
        if base.value() <= 0.0 {
            return Err(DomainError::new(
                "real exponent requires a positive base",
                base.value(),
            ));
        }
        return Ok(base.powf(p));
    }
    if base.value() <= 0.0 {
        return Err(DomainError::new(
            "real exponent requires a positive base",
            base.value(),
        ));
    }
    let e = exponent.eval_series(vars)?;
    Ok((&e * &base.ln()).exp())
}

/// A parsed potential expression together with its declared dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    root: Expr,
    dim: usize,
}

impl Expression {
    pub(crate) fn new(root: Expr, dim: usize) -> Self {
        Expression { root, dim }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Taylor expansion to `order` about `x`.
    pub fn series_at(&self, x: &[f64], order: usize) -> Result<Series, DomainError> {
        assert_eq!(x.len(), self.dim, "point dimension");
        let layout = Layout::shared(self.dim.max(1), order.max(1));
        let vars: Vec<Series> = if self.dim == 0 {
            vec![Series::constant(&layout, order, 0.0)]
        } else {
            x.iter()
                .enumerate()
                .map(|(i, &xi)| Series::variable(&layout, order, i, xi))
                .collect()
        };
        self.root.eval_series(&vars)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, DomainError> {
        Ok(self.series_at(x, 0)?.value())
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Binary(BinOp::Pow, ..) => 4,
        Expr::Num(v) if *v < 0.0 || v.is_sign_negative() => 3,
        _ => 5,
    }
}

fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Num(v) => write!(f, "{v:?}"),
        Expr::Var(i) => write!(f, "x{}", i + 1),
        Expr::Neg(inner) => {
            write!(f, "-")?;
            write_operand(inner, precedence(inner) < 3, f)
        }
        Expr::Call(func, arg) => {
            write!(f, "{}(", func.name())?;
            write_expr(arg, f)?;
            write!(f, ")")
        }
        Expr::Binary(op, a, b) => {
            let p = precedence(e);
            let (wrap_left, wrap_right) = match op {
                // right-associative: a^b^c prints as a^(b^c) without brackets
                BinOp::Pow => (precedence(a) <= p, precedence(b) < 3),
                _ => (precedence(a) < p, precedence(b) <= p),
            };
            write_operand(a, wrap_left, f)?;
            match op {
                BinOp::Pow => write!(f, "^")?,
                _ => write!(f, " {} ", op.symbol())?,
            }
            write_operand(b, wrap_right, f)
        }
    }
}

fn write_operand(e: &Expr, wrap: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if wrap {
        write!(f, "(")?;
        write_expr(e, f)?;
        write!(f, ")")
    } else {
        write_expr(e, f)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(&self.root, f)
    }
}
