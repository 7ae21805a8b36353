//! Numeric expressions, comparisons and assignments shared by the lifted
//! and ground representations.

use std::fmt;

use thiserror::Error;

/// Tolerance used for `=` comparisons between floating point values.
pub const EQ_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

/// Arithmetic expression over leaf variables of type `V`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr<V> {
    Const(f64),
    Var(V),
    /// `?duration` inside a durative action.
    Duration,
    /// `total-time`, only meaningful inside a metric.
    TotalTime,
    Bin(BinOp, Box<Expr<V>>, Box<Expr<V>>),
    Neg(Box<Expr<V>>),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("`?duration` is not available here")]
    NoDuration,
    #[error("`total-time` is only allowed in the metric")]
    TotalTime,
    #[error("non-finite result")]
    NonFinite,
}

impl<V> Expr<V> {
    pub fn bin(op: BinOp, a: Expr<V>, b: Expr<V>) -> Self {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    /// Rewrites every leaf, possibly into a whole sub-expression.
    pub fn try_map<W, E>(&self, f: &mut impl FnMut(&V) -> Result<Expr<W>, E>) -> Result<Expr<W>, E> {
        Ok(match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => f(v)?,
            Expr::Duration => Expr::Duration,
            Expr::TotalTime => Expr::TotalTime,
            Expr::Bin(op, a, b) => Expr::bin(*op, a.try_map(f)?, b.try_map(f)?),
            Expr::Neg(a) => Expr::Neg(Box::new(a.try_map(f)?)),
        })
    }

    pub fn vars(&self, out: &mut Vec<V>)
    where
        V: Clone,
    {
        match self {
            Expr::Var(v) => out.push(v.clone()),
            Expr::Bin(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            Expr::Neg(a) => a.vars(out),
            Expr::Const(_) | Expr::Duration | Expr::TotalTime => {}
        }
    }

    pub fn mentions_duration(&self) -> bool {
        match self {
            Expr::Duration => true,
            Expr::Bin(_, a, b) => a.mentions_duration() || b.mentions_duration(),
            Expr::Neg(a) => a.mentions_duration(),
            _ => false,
        }
    }

    pub fn mentions_total_time(&self) -> bool {
        match self {
            Expr::TotalTime => true,
            Expr::Bin(_, a, b) => a.mentions_total_time() || b.mentions_total_time(),
            Expr::Neg(a) => a.mentions_total_time(),
            _ => false,
        }
    }

    /// Evaluates with `value` for leaves; `duration` binds `?duration`.
    pub fn eval(&self, value: &impl Fn(&V) -> f64, duration: Option<f64>) -> Result<f64, EvalError> {
        let r = match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => value(v),
            Expr::Duration => duration.ok_or(EvalError::NoDuration)?,
            Expr::TotalTime => return Err(EvalError::TotalTime),
            Expr::Neg(a) => -a.eval(value, duration)?,
            Expr::Bin(op, a, b) => {
                let x = a.eval(value, duration)?;
                let y = b.eval(value, duration)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        x / y
                    }
                }
            }
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Interval evaluation: each leaf ranges over `bounds(v) = (lo, hi)`.
    /// Returns `None` when a division by an interval containing zero occurs.
    pub fn eval_interval(&self, bounds: &impl Fn(&V) -> (f64, f64), duration: Option<f64>) -> Option<(f64, f64)> {
        match self {
            Expr::Const(c) => Some((*c, *c)),
            Expr::Var(v) => Some(bounds(v)),
            Expr::Duration => duration.map(|d| (d, d)),
            Expr::TotalTime => None,
            Expr::Neg(a) => a.eval_interval(bounds, duration).map(|(lo, hi)| (-hi, -lo)),
            Expr::Bin(op, a, b) => {
                let (a0, a1) = a.eval_interval(bounds, duration)?;
                let (b0, b1) = b.eval_interval(bounds, duration)?;
                match op {
                    BinOp::Add => Some((a0 + b0, a1 + b1)),
                    BinOp::Sub => Some((a0 - b1, a1 - b0)),
                    BinOp::Mul => {
                        let c = [a0 * b0, a0 * b1, a1 * b0, a1 * b1];
                        Some(min_max(&c))
                    }
                    BinOp::Div => {
                        if b0 <= 0.0 && b1 >= 0.0 {
                            return None;
                        }
                        let c = [a0 / b0, a0 / b1, a1 / b0, a1 / b1];
                        Some(min_max(&c))
                    }
                }
            }
        }
    }
}

fn min_max(c: &[f64]) -> (f64, f64) {
    c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

impl<V: fmt::Display> fmt::Display for Expr<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Duration => f.write_str("?duration"),
            Expr::TotalTime => f.write_str("(total-time)"),
            Expr::Bin(op, a, b) => write!(f, "({} {a} {b})", op.symbol()),
            Expr::Neg(a) => write!(f, "(- {a})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Rel {
    pub fn from_symbol(s: &str) -> Option<Rel> {
        Some(match s {
            "<" => Rel::Lt,
            "<=" => Rel::Le,
            "=" => Rel::Eq,
            ">=" => Rel::Ge,
            ">" => Rel::Gt,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "=",
            Rel::Ge => ">=",
            Rel::Gt => ">",
        }
    }

    /// Does `diff = lhs - rhs` satisfy the relation?
    pub fn holds(self, diff: f64) -> bool {
        match self {
            Rel::Lt => diff < 0.0,
            Rel::Le => diff <= EQ_TOLERANCE,
            Rel::Eq => diff.abs() <= EQ_TOLERANCE,
            Rel::Ge => diff >= -EQ_TOLERANCE,
            Rel::Gt => diff > 0.0,
        }
    }

    /// Can some value of `lhs - rhs` in `[lo, hi]` satisfy the relation?
    pub fn possible(self, lo: f64, hi: f64) -> bool {
        match self {
            Rel::Lt => lo < 0.0,
            Rel::Le => lo <= EQ_TOLERANCE,
            Rel::Eq => lo <= EQ_TOLERANCE && hi >= -EQ_TOLERANCE,
            Rel::Ge => hi >= -EQ_TOLERANCE,
            Rel::Gt => hi > 0.0,
        }
    }

    /// Distance from satisfying the relation given `diff = lhs - rhs`; zero when satisfied.
    pub fn gap(self, diff: f64) -> f64 {
        match self {
            Rel::Lt | Rel::Le => diff.max(0.0),
            Rel::Gt | Rel::Ge => (-diff).max(0.0),
            Rel::Eq => diff.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignOp {
    Assign,
    Increase,
    Decrease,
    ScaleUp,
    ScaleDown,
}

impl AssignOp {
    pub fn from_keyword(s: &str) -> Option<AssignOp> {
        Some(match s {
            "assign" => AssignOp::Assign,
            "increase" => AssignOp::Increase,
            "decrease" => AssignOp::Decrease,
            "scale-up" => AssignOp::ScaleUp,
            "scale-down" => AssignOp::ScaleDown,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            AssignOp::Assign => "assign",
            AssignOp::Increase => "increase",
            AssignOp::Decrease => "decrease",
            AssignOp::ScaleUp => "scale-up",
            AssignOp::ScaleDown => "scale-down",
        }
    }

    pub fn apply(self, old: f64, rhs: f64) -> Result<f64, EvalError> {
        let r = match self {
            AssignOp::Assign => rhs,
            AssignOp::Increase => old + rhs,
            AssignOp::Decrease => old - rhs,
            AssignOp::ScaleUp => old * rhs,
            AssignOp::ScaleDown => {
                if rhs == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                old / rhs
            }
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Two writes to the same variable commute only for increase/decrease pairs.
    pub fn commutes_with(self, other: AssignOp) -> bool {
        use AssignOp::*;
        matches!((self, other), (Increase | Decrease, Increase | Decrease))
    }
}
