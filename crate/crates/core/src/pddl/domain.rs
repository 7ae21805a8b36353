use super::error::{ParseError, Pos};
use super::model::*;
use super::parse_expr;
use super::sexpr::{parse_one, SExpr};
use crate::numeric::{AssignOp, Expr, Rel};

/// Parses a domain description.
pub fn parse_domain(text: &str) -> Result<DomainModel, ParseError> {
    let root = parse_one(text)?;
    let items = root.expect_list("`(define (domain ...) ...)`")?;
    if root.head() != Some("define") {
        return Err(ParseError::syntax(root.pos(), "expected `define`"));
    }
    let header = items.get(1).ok_or_else(|| ParseError::syntax(root.pos(), "missing `(domain <name>)`"))?;
    let name = match header.as_list() {
        Some([SExpr::Atom(k, _), SExpr::Atom(n, _)]) if k == "domain" => n.clone(),
        _ => return Err(ParseError::syntax(header.pos(), "expected `(domain <name>)`")),
    };

    let mut d = DomainModel {
        name,
        requirements: Vec::new(),
        types: TypeTable::default(),
        constants: Vec::new(),
        predicates: Vec::new(),
        functions: Vec::new(),
        operators: Vec::new(),
    };

    // sections are order-sensitive only in that declarations precede use;
    // collect operators first and parse them once everything is declared
    let mut pending_ops = Vec::new();
    for sec in &items[2..] {
        let list = sec.expect_list("a domain section")?;
        let key = sec.head().ok_or_else(|| ParseError::syntax(sec.pos(), "expected section keyword"))?;
        let body = &list[1..];
        match key {
            ":requirements" => {
                for r in body {
                    let r = r.expect_atom("requirement flag")?;
                    match r {
                        ":duration-inequalities" => {
                            return Err(ParseError::unsupported(sec.pos(), "duration inequality"))
                        }
                        ":continuous-effects" => return Err(ParseError::unsupported(sec.pos(), "continuous effect")),
                        ":derived-predicates" => return Err(ParseError::unsupported(sec.pos(), "derived predicate")),
                        ":timed-initial-literals" => {
                            return Err(ParseError::unsupported(sec.pos(), "timed initial literal"))
                        }
                        _ => d.requirements.push(r.to_string()),
                    }
                }
            }
            ":types" => parse_types(body, &mut d.types)?,
            ":constants" => {
                for (n, t, _) in typed_list(body, &d.types, false)? {
                    d.constants.push((n, t));
                }
            }
            ":predicates" => {
                for p in body {
                    let sig = signature(p, &d.types)?;
                    if d.predicate(&sig.name).is_some() {
                        return Err(ParseError::syntax(p.pos(), format!("predicate `{}` declared twice", sig.name)));
                    }
                    d.predicates.push(sig);
                }
            }
            ":functions" => {
                let mut i = 0;
                while i < body.len() {
                    // optional `- number` after each group of function skeletons
                    if body[i].as_atom() == Some("-") {
                        match body.get(i + 1).and_then(SExpr::as_atom) {
                            Some("number") => {
                                i += 2;
                                continue;
                            }
                            _ => return Err(ParseError::unsupported(body[i].pos(), "non-numeric function type")),
                        }
                    }
                    let sig = signature(&body[i], &d.types)?;
                    if d.function(&sig.name).is_some() {
                        return Err(ParseError::syntax(
                            body[i].pos(),
                            format!("function `{}` declared twice", sig.name),
                        ));
                    }
                    d.functions.push(sig);
                    i += 1;
                }
            }
            ":action" | ":durative-action" => pending_ops.push(sec),
            ":derived" => return Err(ParseError::unsupported(sec.pos(), "derived predicate")),
            ":constraints" => return Err(ParseError::unsupported(sec.pos(), "constraints")),
            other => return Err(ParseError::syntax(sec.pos(), format!("unknown domain section `{other}`"))),
        }
    }
    for sec in pending_ops {
        let op = parse_operator(sec, &d)?;
        if d.operator(&op.name).is_some() {
            return Err(ParseError::syntax(sec.pos(), format!("operator `{}` declared twice", op.name)));
        }
        d.operators.push(op);
    }
    Ok(d)
}

fn parse_types(body: &[SExpr], types: &mut TypeTable) -> Result<(), ParseError> {
    let mut group: Vec<(&str, Pos)> = Vec::new();
    let mut i = 0;
    let declare = |types: &mut TypeTable, name: &str| -> usize {
        match types.lookup(name) {
            Some(t) => t,
            None => {
                types.names.push(name.to_string());
                types.parent.push(Some(OBJECT_TYPE));
                types.names.len() - 1
            }
        }
    };
    while i < body.len() {
        let e = &body[i];
        if e.as_atom() == Some("-") {
            let parent_e = body.get(i + 1).ok_or_else(|| ParseError::syntax(e.pos(), "missing supertype after `-`"))?;
            if parent_e.head() == Some("either") {
                return Err(ParseError::unsupported(parent_e.pos(), "either type"));
            }
            let parent_name = parent_e.expect_atom("supertype")?;
            let parent = declare(types, parent_name);
            for (n, pos) in group.drain(..) {
                if n == "object" {
                    return Err(ParseError::syntax(pos, "`object` cannot have a supertype"));
                }
                let t = declare(types, n);
                types.parent[t] = Some(parent);
                if types.is_subtype(parent, t) {
                    types.parent[t] = None;
                    return Err(ParseError::syntax(pos, format!("cyclic type hierarchy through `{n}`")));
                }
            }
            i += 2;
        } else {
            group.push((e.expect_atom("type name")?, e.pos()));
            i += 1;
        }
    }
    for (n, _) in group {
        declare(types, n);
    }
    Ok(())
}

/// `a b - t c` style list; yields (name, type, position).
pub(crate) fn typed_list(
    body: &[SExpr],
    types: &TypeTable,
    variables: bool,
) -> Result<Vec<(String, usize, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut group: Vec<(String, Pos)> = Vec::new();
    let mut i = 0;
    while i < body.len() {
        let e = &body[i];
        if e.as_atom() == Some("-") {
            let te = body.get(i + 1).ok_or_else(|| ParseError::syntax(e.pos(), "missing type after `-`"))?;
            if te.head() == Some("either") {
                return Err(ParseError::unsupported(te.pos(), "either type"));
            }
            let tn = te.expect_atom("type name")?;
            let t = types.lookup(tn).ok_or_else(|| ParseError::undeclared(te.pos(), tn, "type is not declared"))?;
            for (n, p) in group.drain(..) {
                out.push((n, t, p));
            }
            i += 2;
        } else {
            let n = e.expect_atom(if variables { "variable" } else { "name" })?;
            if variables != n.starts_with('?') {
                let msg = if variables { "expected a `?variable`" } else { "unexpected `?variable`" };
                return Err(ParseError::syntax(e.pos(), msg));
            }
            group.push((n.to_string(), e.pos()));
            i += 1;
        }
    }
    for (n, p) in group {
        out.push((n, OBJECT_TYPE, p));
    }
    Ok(out)
}

fn signature(e: &SExpr, types: &TypeTable) -> Result<Signature, ParseError> {
    let l = e.expect_list("a `(name ?x - type ...)` skeleton")?;
    let name = l.first().ok_or_else(|| ParseError::syntax(e.pos(), "empty skeleton"))?.expect_atom("name")?;
    let params = typed_list(&l[1..], types, true)?.into_iter().map(|(_, t, _)| t).collect();
    Ok(Signature { name: name.to_string(), params })
}

struct Scope<'a> {
    d: &'a DomainModel,
    params: &'a [(String, usize)],
}

impl Scope<'_> {
    fn term(&self, e: &SExpr) -> Result<Term, ParseError> {
        let a = e.expect_atom("a term")?;
        if a.starts_with('?') {
            self.params
                .iter()
                .position(|(n, _)| n == a)
                .map(Term::Param)
                .ok_or_else(|| ParseError::undeclared(e.pos(), a, "variable is not a parameter"))
        } else if self.d.constants.iter().any(|(n, _)| n == a) {
            Ok(Term::Object(a.to_string()))
        } else {
            Err(ParseError::undeclared(e.pos(), a, "constant is not declared"))
        }
    }

    fn term_type(&self, t: &Term) -> usize {
        match t {
            Term::Param(i) => self.params[*i].1,
            Term::Object(o) => self.d.constants.iter().find(|(n, _)| n == o).map_or(OBJECT_TYPE, |c| c.1),
        }
    }

    fn args(&self, sig: &Signature, items: &[SExpr], pos: Pos) -> Result<Vec<Term>, ParseError> {
        if items.len() != sig.params.len() {
            return Err(ParseError::syntax(
                pos,
                format!("`{}` expects {} arguments, got {}", sig.name, sig.params.len(), items.len()),
            ));
        }
        let mut out = Vec::with_capacity(items.len());
        for (e, &want) in items.iter().zip(&sig.params) {
            let t = self.term(e)?;
            let have = self.term_type(&t);
            // a parameter of a supertype may still be bound to a fitting object
            if !self.d.types.is_subtype(have, want) && !self.d.types.is_subtype(want, have) {
                return Err(ParseError::syntax(
                    e.pos(),
                    format!(
                        "argument of type `{}` does not fit `{}`",
                        self.d.types.names[have], self.d.types.names[want]
                    ),
                ));
            }
            out.push(t);
        }
        Ok(out)
    }

    fn atom(&self, e: &SExpr) -> Result<(usize, Vec<Term>), ParseError> {
        let l = e.expect_list("an atom")?;
        let name = l.first().ok_or_else(|| ParseError::syntax(e.pos(), "empty atom"))?.expect_atom("predicate name")?;
        let pred =
            self.d.predicate(name).ok_or_else(|| ParseError::undeclared(e.pos(), name, "predicate is not declared"))?;
        let args = self.args(&self.d.predicates[pred], &l[1..], e.pos())?;
        Ok((pred, args))
    }

    fn fluent(&self, name: &str, args: &[SExpr], pos: Pos) -> Result<FluentRef, ParseError> {
        let func =
            self.d.function(name).ok_or_else(|| ParseError::undeclared(pos, name, "function is not declared"))?;
        let args = self.args(&self.d.functions[func], args, pos)?;
        Ok(FluentRef { func, args })
    }

    fn expr(&self, e: &SExpr, allow_duration: bool) -> Result<LiftedExpr, ParseError> {
        parse_expr(e, allow_duration, &mut |n, a, p| self.fluent(n, a, p))
    }

    /// Flattens a goal description into literals and comparisons.
    fn conditions(&self, e: &SExpr, allow_duration: bool, out: &mut Vec<Condition>) -> Result<(), ParseError> {
        let l = e.expect_list("a condition")?;
        let Some(head) = e.head() else {
            if l.is_empty() {
                return Ok(()); // `()` is the empty conjunction
            }
            return Err(ParseError::syntax(e.pos(), "expected a condition"));
        };
        match head {
            "and" => {
                for c in &l[1..] {
                    self.conditions(c, allow_duration, out)?;
                }
            }
            "not" => {
                let inner = match &l[1..] {
                    [x] => x,
                    _ => return Err(ParseError::syntax(e.pos(), "`not` takes one argument")),
                };
                match inner.head() {
                    Some("=") => out.push(self.equality(inner, false)?),
                    Some("and" | "or" | "not" | "imply" | "exists" | "forall") => {
                        return Err(ParseError::unsupported(inner.pos(), "negated compound condition"))
                    }
                    _ => {
                        let (pred, args) = self.atom(inner)?;
                        out.push(Condition::Atom { pred, args, positive: false });
                    }
                }
            }
            "or" => return Err(ParseError::unsupported(e.pos(), "disjunctive condition")),
            "imply" => return Err(ParseError::unsupported(e.pos(), "implication")),
            "exists" => return Err(ParseError::unsupported(e.pos(), "existential condition")),
            "forall" => return Err(ParseError::unsupported(e.pos(), "universal condition")),
            "preference" => return Err(ParseError::unsupported(e.pos(), "preference")),
            "at" | "over" if self.d.predicate(head).is_none() => {
                return Err(ParseError::syntax(e.pos(), "temporal qualifier outside a durative action"))
            }
            "<" | "<=" | ">" | ">=" => out.push(self.comparison(e, head, allow_duration)?),
            "=" => {
                // `(= ?x ?y)` over objects, or a numeric comparison
                let is_object_eq = l.len() == 3 && l[1..].iter().all(|x| self.term(x).is_ok());
                if is_object_eq {
                    out.push(self.equality(e, true)?);
                } else {
                    out.push(self.comparison(e, head, allow_duration)?);
                }
            }
            _ => {
                let (pred, args) = self.atom(e)?;
                out.push(Condition::Atom { pred, args, positive: true });
            }
        }
        Ok(())
    }

    fn equality(&self, e: &SExpr, positive: bool) -> Result<Condition, ParseError> {
        match e.as_list() {
            Some([_, a, b]) => Ok(Condition::Equal { a: self.term(a)?, b: self.term(b)?, positive }),
            _ => Err(ParseError::syntax(e.pos(), "`=` takes two arguments")),
        }
    }

    fn comparison(&self, e: &SExpr, head: &str, allow_duration: bool) -> Result<Condition, ParseError> {
        let rel = Rel::from_symbol(head).expect("caller checked the relation");
        match e.as_list() {
            Some([_, a, b]) => {
                Ok(Condition::Compare { lhs: self.expr(a, allow_duration)?, rel, rhs: self.expr(b, allow_duration)? })
            }
            _ => Err(ParseError::syntax(e.pos(), format!("`{head}` takes two arguments"))),
        }
    }

    fn effects(&self, e: &SExpr, allow_duration: bool, out: &mut Vec<Effect>) -> Result<(), ParseError> {
        let l = e.expect_list("an effect")?;
        let Some(head) = e.head() else {
            if l.is_empty() {
                return Ok(());
            }
            return Err(ParseError::syntax(e.pos(), "expected an effect"));
        };
        match head {
            "and" => {
                for c in &l[1..] {
                    self.effects(c, allow_duration, out)?;
                }
            }
            "forall" => return Err(ParseError::unsupported(e.pos(), "quantified effect")),
            "when" => return Err(ParseError::unsupported(e.pos(), "conditional effect")),
            "at" | "over" if self.d.predicate(head).is_none() => {
                return Err(ParseError::syntax(e.pos(), "temporal qualifier outside a durative action"))
            }
            "not" => {
                let inner = match &l[1..] {
                    [x] => x,
                    _ => return Err(ParseError::syntax(e.pos(), "`not` takes one argument")),
                };
                let (pred, args) = self.atom(inner)?;
                out.push(Effect::Del { pred, args });
            }
            _ => {
                if let Some(op) = AssignOp::from_keyword(head) {
                    let (target, rhs) = match &l[1..] {
                        [t, r] => (t, r),
                        _ => return Err(ParseError::syntax(e.pos(), format!("`{head}` takes two arguments"))),
                    };
                    let target = match target {
                        SExpr::List(tl, p) => {
                            let n = tl
                                .first()
                                .ok_or_else(|| ParseError::syntax(*p, "empty fluent"))?
                                .expect_atom("function name")?;
                            self.fluent(n, &tl[1..], *p)?
                        }
                        SExpr::Atom(n, p) => self.fluent(n, &[], *p)?,
                    };
                    let expr = self.expr(rhs, allow_duration)?;
                    out.push(Effect::Numeric { op, target, expr });
                } else {
                    let (pred, args) = self.atom(e)?;
                    out.push(Effect::Add { pred, args });
                }
            }
        }
        Ok(())
    }
}

/// Splits `(and (at start c) (over all c) ...)` into tagged parts.
fn temporal_parts<'e>(e: &'e SExpr, what: &str, out: &mut Vec<(&'e str, &'e SExpr)>) -> Result<(), ParseError> {
    let l = e.expect_list(what)?;
    match e.head() {
        None if l.is_empty() => Ok(()),
        Some("and") => {
            for c in &l[1..] {
                temporal_parts(c, what, out)?;
            }
            Ok(())
        }
        Some("at") => match &l[1..] {
            [SExpr::Atom(w, _), body] if w == "start" || w == "end" => {
                out.push((if w == "start" { "start" } else { "end" }, body));
                Ok(())
            }
            [SExpr::Atom(_, p), _] => Err(ParseError::unsupported(*p, "timed literal")),
            _ => Err(ParseError::syntax(e.pos(), "expected `(at start ...)` or `(at end ...)`")),
        },
        Some("over") => match &l[1..] {
            [SExpr::Atom(w, _), body] if w == "all" => {
                out.push(("all", body));
                Ok(())
            }
            _ => Err(ParseError::syntax(e.pos(), "expected `(over all ...)`")),
        },
        Some("forall") => Err(ParseError::unsupported(e.pos(), "quantified effect")),
        Some("when") => Err(ParseError::unsupported(e.pos(), "conditional effect")),
        _ => Err(ParseError::syntax(
            e.pos(),
            format!("{what} must be qualified with `at start`, `at end` or `over all`"),
        )),
    }
}

fn parse_operator(sec: &SExpr, d: &DomainModel) -> Result<OperatorSchema, ParseError> {
    let l = sec.as_list().expect("section is a list");
    let durative = sec.head() == Some(":durative-action");
    let name = l
        .get(1)
        .ok_or_else(|| ParseError::syntax(sec.pos(), "missing operator name"))?
        .expect_atom("operator name")?
        .to_string();

    let mut params_e: Option<&SExpr> = None;
    let mut pre_e: Option<&SExpr> = None;
    let mut eff_e: Option<&SExpr> = None;
    let mut dur_e: Option<&SExpr> = None;
    let mut i = 2;
    while i < l.len() {
        let key = l[i].expect_atom("operator keyword")?;
        let val = l.get(i + 1).ok_or_else(|| ParseError::syntax(l[i].pos(), format!("missing value after `{key}`")))?;
        match (key, durative) {
            (":parameters", _) => params_e = Some(val),
            (":precondition", false) | (":condition", true) => pre_e = Some(val),
            (":effect", _) => eff_e = Some(val),
            (":duration", true) => dur_e = Some(val),
            _ => return Err(ParseError::syntax(l[i].pos(), format!("unexpected `{key}` in operator `{name}`"))),
        }
        i += 2;
    }

    let params: Vec<(String, usize)> = match params_e {
        Some(p) => {
            typed_list(p.expect_list("parameter list")?, &d.types, true)?.into_iter().map(|(n, t, _)| (n, t)).collect()
        }
        None => Vec::new(),
    };
    for (i, (n, _)) in params.iter().enumerate() {
        if n == "?duration" || params[..i].iter().any(|(m, _)| m == n) {
            return Err(ParseError::syntax(sec.pos(), format!("parameter `{n}` repeated or reserved")));
        }
    }
    let scope = Scope { d, params: &params };

    let mut conditions = Vec::new();
    let mut effects = Vec::new();
    let duration;
    if durative {
        let de = dur_e
            .ok_or_else(|| ParseError::syntax(sec.pos(), format!("durative action `{name}` lacks `:duration`")))?;
        duration = match de.as_list() {
            Some([SExpr::Atom(eq, _), SExpr::Atom(v, _), rhs]) if eq == "=" && v == "?duration" => {
                let e = scope.expr(rhs, false)?;
                if e.mentions_total_time() {
                    return Err(ParseError::syntax(rhs.pos(), "`total-time` inside a duration"));
                }
                e
            }
            _ if matches!(de.head(), Some("and" | "<=" | ">=" | "<" | ">")) => {
                return Err(ParseError::unsupported(de.pos(), "duration inequality"))
            }
            _ => return Err(ParseError::syntax(de.pos(), "expected `(= ?duration <expr>)`")),
        };
        if let Some(c) = pre_e {
            let mut parts = Vec::new();
            temporal_parts(c, "a condition", &mut parts)?;
            for (w, body) in parts {
                let tag = match w {
                    "start" => CondTag::AtStart,
                    "all" => CondTag::OverAll,
                    _ => CondTag::AtEnd,
                };
                let mut cs = Vec::new();
                scope.conditions(body, true, &mut cs)?;
                conditions.extend(cs.into_iter().map(|c| (tag, c)));
            }
        }
        if let Some(e) = eff_e {
            let mut parts = Vec::new();
            temporal_parts(e, "an effect", &mut parts)?;
            for (w, body) in parts {
                let tag = match w {
                    "start" => EffTag::AtStart,
                    "end" => EffTag::AtEnd,
                    _ => return Err(ParseError::syntax(body.pos(), "effects cannot be `over all`")),
                };
                let mut es = Vec::new();
                scope.effects(body, true, &mut es)?;
                effects.extend(es.into_iter().map(|x| (tag, x)));
            }
        }
    } else {
        duration = Expr::Const(1.0);
        if let Some(c) = pre_e {
            let mut cs = Vec::new();
            scope.conditions(c, false, &mut cs)?;
            conditions.extend(cs.into_iter().map(|c| (CondTag::OverAll, c)));
        }
        if let Some(e) = eff_e {
            let mut es = Vec::new();
            scope.effects(e, false, &mut es)?;
            effects.extend(es.into_iter().map(|x| (EffTag::AtEnd, x)));
        }
    }
    for (_, c) in &conditions {
        if let Condition::Compare { lhs, rhs, .. } = c {
            if lhs.mentions_total_time() || rhs.mentions_total_time() {
                return Err(ParseError::syntax(sec.pos(), "`total-time` is only allowed in the metric"));
            }
        }
    }
    for (_, e) in &effects {
        if let Effect::Numeric { expr, .. } = e {
            if expr.mentions_total_time() {
                return Err(ParseError::syntax(sec.pos(), "`total-time` is only allowed in the metric"));
            }
        }
    }
    Ok(OperatorSchema { name, params, durative, duration, conditions, effects })
}

/// Goal conditions over objects of `d`'s constant table (which the caller
/// extends with the problem objects).
pub(crate) fn ground_conditions(d: &DomainModel, e: &SExpr) -> Result<Vec<Condition>, ParseError> {
    let scope = Scope { d, params: &[] };
    let mut out = Vec::new();
    scope.conditions(e, false, &mut out)?;
    Ok(out)
}

pub(crate) fn ground_expr(d: &DomainModel, e: &SExpr) -> Result<LiftedExpr, ParseError> {
    Scope { d, params: &[] }.expr(e, false)
}

pub(crate) fn ground_fluent(d: &DomainModel, e: &SExpr) -> Result<FluentRef, ParseError> {
    let scope = Scope { d, params: &[] };
    match e {
        SExpr::List(l, p) => {
            let n = l.first().ok_or_else(|| ParseError::syntax(*p, "empty fluent"))?.expect_atom("function name")?;
            scope.fluent(n, &l[1..], *p)
        }
        SExpr::Atom(n, p) => scope.fluent(n, &[], *p),
    }
}

pub(crate) fn ground_atom(d: &DomainModel, e: &SExpr) -> Result<(usize, Vec<Term>), ParseError> {
    Scope { d, params: &[] }.atom(e)
}
