//! Front end for the supported PDDL2.1 subset: STRIPS with typing, negative
//! preconditions, numeric fluents and durative actions with fixed or
//! expression-valued durations.

mod domain;
mod error;
mod model;
mod problem;
pub mod sexpr;

pub use domain::parse_domain;
pub use error::{ParseError, ParseErrorKind, Pos};
pub use model::*;
pub use problem::parse_problem;

use crate::numeric::{BinOp, Expr};
use sexpr::SExpr;

/// Resolves a fluent application like `(distance ?a ?b)` into a leaf.
pub(crate) type FluentResolver<'a> = dyn FnMut(&str, &[SExpr], Pos) -> Result<FluentRef, ParseError> + 'a;

/// Parses a numeric expression. `?duration` is accepted only when `allow_duration`.
pub(crate) fn parse_expr(
    e: &SExpr,
    allow_duration: bool,
    fluent: &mut FluentResolver<'_>,
) -> Result<LiftedExpr, ParseError> {
    match e {
        SExpr::Atom(a, pos) => {
            if a == "?duration" {
                return if allow_duration {
                    Ok(Expr::Duration)
                } else {
                    Err(ParseError::syntax(*pos, "`?duration` outside a duration-dependent context"))
                };
            }
            if a == "#t" {
                return Err(ParseError::unsupported(*pos, "continuous effect"));
            }
            if a == "total-time" {
                return Ok(Expr::TotalTime);
            }
            if let Ok(v) = a.parse::<f64>() {
                if v.is_finite() {
                    return Ok(Expr::Const(v));
                }
            }
            if a.starts_with('?') {
                return Err(ParseError::syntax(*pos, format!("parameter `{a}` used as a number")));
            }
            // 0-ary fluent written without parentheses
            fluent(a, &[], *pos).map(Expr::Var)
        }
        SExpr::List(items, pos) => {
            let head = items
                .first()
                .ok_or_else(|| ParseError::syntax(*pos, "empty numeric expression"))?
                .expect_atom("operator or function name")?;
            let args = &items[1..];
            let op = match head {
                "+" => Some(BinOp::Add),
                "-" => Some(BinOp::Sub),
                "*" => Some(BinOp::Mul),
                "/" => Some(BinOp::Div),
                _ => None,
            };
            if let Some(op) = op {
                if args.is_empty() {
                    return Err(ParseError::syntax(*pos, format!("`{head}` needs arguments")));
                }
                if args.len() == 1 {
                    let x = parse_expr(&args[0], allow_duration, fluent)?;
                    return match op {
                        BinOp::Sub => Ok(Expr::Neg(Box::new(x))),
                        BinOp::Add | BinOp::Mul => Ok(x),
                        BinOp::Div => Err(ParseError::syntax(*pos, "`/` needs two arguments")),
                    };
                }
                if matches!(op, BinOp::Sub | BinOp::Div) && args.len() != 2 {
                    return Err(ParseError::syntax(*pos, format!("`{head}` needs two arguments")));
                }
                let mut acc = parse_expr(&args[0], allow_duration, fluent)?;
                for a in &args[1..] {
                    acc = Expr::bin(op, acc, parse_expr(a, allow_duration, fluent)?);
                }
                return Ok(acc);
            }
            if head == "total-time" && args.is_empty() {
                return Ok(Expr::TotalTime);
            }
            fluent(head, args, *pos).map(Expr::Var)
        }
    }
}
