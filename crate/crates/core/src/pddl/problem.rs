use std::collections::BTreeSet;

use super::domain::{ground_atom, ground_conditions, ground_expr, ground_fluent, typed_list};
use super::error::ParseError;
use super::model::*;
use super::sexpr::{parse_one, SExpr};

/// Enumerating absent fluents stops after this many ground instances per function.
const ABSENT_SCAN_LIMIT: usize = 100_000;

/// Parses a problem against an already parsed domain.
pub fn parse_problem(text: &str, domain: &DomainModel) -> Result<ProblemModel, ParseError> {
    let root = parse_one(text)?;
    let items = root.expect_list("`(define (problem ...) ...)`")?;
    if root.head() != Some("define") {
        return Err(ParseError::syntax(root.pos(), "expected `define`"));
    }
    let header = items.get(1).ok_or_else(|| ParseError::syntax(root.pos(), "missing `(problem <name>)`"))?;
    let name = match header.as_list() {
        Some([SExpr::Atom(k, _), SExpr::Atom(n, _)]) if k == "problem" => n.clone(),
        _ => return Err(ParseError::syntax(header.pos(), "expected `(problem <name>)`")),
    };

    let mut p = ProblemModel {
        name,
        domain_name: String::new(),
        objects: Vec::new(),
        init_atoms: Vec::new(),
        init_values: Vec::new(),
        absent_values: Vec::new(),
        goals: Vec::new(),
        metric: None,
        warnings: Vec::new(),
    };

    // a copy of the domain whose constant table also holds the problem
    // objects, so goal/metric parsing can reuse the operator machinery
    let mut scope = domain.clone();
    let mut init_e = None;
    let mut goal_e = None;
    let mut metric_e = None;
    for sec in &items[2..] {
        let list = sec.expect_list("a problem section")?;
        let key = sec.head().ok_or_else(|| ParseError::syntax(sec.pos(), "expected section keyword"))?;
        let body = &list[1..];
        match key {
            ":domain" => {
                let n = body
                    .first()
                    .ok_or_else(|| ParseError::syntax(sec.pos(), "missing domain name"))?
                    .expect_atom("domain name")?;
                if n != domain.name {
                    return Err(ParseError::undeclared(
                        sec.pos(),
                        n,
                        format!("problem refers to a domain other than `{}`", domain.name),
                    ));
                }
                p.domain_name = n.to_string();
            }
            ":requirements" => {}
            ":objects" => {
                for (n, t, pos) in typed_list(body, &domain.types, false)? {
                    if scope.constants.iter().any(|(m, _)| *m == n) {
                        return Err(ParseError::syntax(pos, format!("object `{n}` declared twice")));
                    }
                    scope.constants.push((n, t));
                }
            }
            ":init" => init_e = Some(body),
            ":goal" => goal_e = Some(body.first().ok_or_else(|| ParseError::syntax(sec.pos(), "empty goal"))?),
            ":metric" => metric_e = Some((sec, body)),
            ":constraints" => return Err(ParseError::unsupported(sec.pos(), "constraints")),
            other => return Err(ParseError::syntax(sec.pos(), format!("unknown problem section `{other}`"))),
        }
    }
    // problem objects first, then domain constants
    let n_dom = domain.constants.len();
    p.objects = scope.constants[n_dom..].to_vec();
    p.objects.extend(domain.constants.iter().cloned());

    let mut assigned = BTreeSet::new();
    for e in init_e.unwrap_or(&[]) {
        match e.head() {
            Some("at") if e.as_list().is_some_and(|l| l.len() == 3 && l[1].as_atom().is_some_and(is_number)) => {
                return Err(ParseError::unsupported(e.pos(), "timed initial literal"))
            }
            Some("=") => {
                let (f, v) = match e.as_list() {
                    Some([_, f, v]) => (f, v),
                    _ => return Err(ParseError::syntax(e.pos(), "`=` in init takes a fluent and a number")),
                };
                let fr = ground_fluent(&scope, f)?;
                let value = v
                    .as_atom()
                    .and_then(|a| a.parse::<f64>().ok())
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ParseError::syntax(v.pos(), "expected a number"))?;
                let args = object_args(&fr.args);
                if !assigned.insert((fr.func, args.clone())) {
                    return Err(ParseError::syntax(e.pos(), "fluent assigned twice in init"));
                }
                p.init_values.push((fr.func, args, value));
            }
            Some("not") => return Err(ParseError::syntax(e.pos(), "negative literals are implicit in init")),
            _ => {
                let (pred, args) = ground_atom(&scope, e)?;
                p.init_atoms.push((pred, object_args(&args)));
            }
        }
    }

    if let Some(g) = goal_e {
        p.goals = ground_conditions(&scope, g)?;
    }

    if let Some((sec, body)) = metric_e {
        match body {
            [dir, e] => match dir.expect_atom("`minimize`")? {
                "minimize" => {
                    let m = ground_expr(&scope, e)?;
                    p.metric = Some(m);
                }
                "maximize" => return Err(ParseError::unsupported(dir.pos(), "metric maximize")),
                other => return Err(ParseError::syntax(dir.pos(), format!("unknown metric direction `{other}`"))),
            },
            _ => return Err(ParseError::syntax(sec.pos(), "expected `(:metric minimize <expr>)`")),
        }
    }

    // every declared fluent without an init value reads as zero
    for (fi, sig) in domain.functions.iter().enumerate() {
        let candidates: Vec<Vec<&str>> = sig
            .params
            .iter()
            .map(|&t| {
                p.objects.iter().filter(|(_, ot)| domain.types.is_subtype(*ot, t)).map(|(n, _)| n.as_str()).collect()
            })
            .collect();
        let total = candidates.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len()));
        if total.is_none_or(|t| t > ABSENT_SCAN_LIMIT) {
            continue;
        }
        for combo in cartesian(&candidates) {
            let args: Vec<String> = combo.iter().map(|s| s.to_string()).collect();
            if !assigned.contains(&(fi, args.clone())) {
                p.absent_values.push((fi, args));
            }
        }
    }
    if !p.absent_values.is_empty() {
        let msg = format!("{} numeric fluent(s) have no initial value and default to 0", p.absent_values.len());
        log::warn!("{msg}");
        p.warnings.push(msg);
    }
    Ok(p)
}

fn is_number(s: &str) -> bool {
    s.parse::<f64>().is_ok()
}

fn object_args(args: &[Term]) -> Vec<String> {
    args.iter()
        .map(|t| match t {
            Term::Object(o) => o.clone(),
            Term::Param(_) => unreachable!("no parameters in problem scope"),
        })
        .collect()
}

pub(crate) fn cartesian<'a, T: Copy>(slots: &'a [Vec<T>]) -> impl Iterator<Item = Vec<T>> + 'a {
    let total: usize = slots.iter().map(Vec::len).product();
    let mut idx = vec![0usize; slots.len()];
    let mut remaining = total;
    std::iter::from_fn(move || {
        if remaining == 0 {
            return None;
        }
        remaining -= 1;
        let item: Vec<T> = idx.iter().zip(slots).map(|(&i, s)| s[i]).collect();
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < slots[k].len() {
                break;
            }
            idx[k] = 0;
        }
        Some(item)
    })
}
