//! Lifted domain and problem models produced by the parsers.

use std::fmt;

use crate::numeric::{AssignOp, Expr, Rel};

/// Index of the root type `object` in every [`TypeTable`].
pub const OBJECT_TYPE: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct TypeTable {
    pub names: Vec<String>,
    /// Direct supertype; `None` only for `object`.
    pub parent: Vec<Option<usize>>,
}

impl Default for TypeTable {
    fn default() -> Self {
        TypeTable { names: vec!["object".to_string()], parent: vec![None] }
    }
}

impl TypeTable {
    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Is `sub` equal to or a descendant of `sup`?
    pub fn is_subtype(&self, mut sub: usize, sup: usize) -> bool {
        // bounded walk: the table is acyclic, but stay defensive
        for _ in 0..=self.names.len() {
            if sub == sup {
                return true;
            }
            match self.parent[sub] {
                Some(p) => sub = p,
                None => return false,
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub name: String,
    pub params: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    /// Index into the enclosing operator's parameter list.
    Param(usize),
    Object(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluentRef {
    pub func: usize,
    pub args: Vec<Term>,
}

impl fmt::Display for FluentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}(", self.func)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match a {
                Term::Param(p) => write!(f, "?{p}")?,
                Term::Object(o) => f.write_str(o)?,
            }
        }
        f.write_str(")")
    }
}

pub type LiftedExpr = Expr<FluentRef>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CondTag {
    AtStart,
    OverAll,
    AtEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EffTag {
    AtStart,
    AtEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Atom { pred: usize, args: Vec<Term>, positive: bool },
    Equal { a: Term, b: Term, positive: bool },
    Compare { lhs: LiftedExpr, rel: Rel, rhs: LiftedExpr },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Add { pred: usize, args: Vec<Term> },
    Del { pred: usize, args: Vec<Term> },
    Numeric { op: AssignOp, target: FluentRef, expr: LiftedExpr },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSchema {
    pub name: String,
    pub params: Vec<(String, usize)>,
    pub durative: bool,
    /// Constant 1 for non-durative operators.
    pub duration: LiftedExpr,
    pub conditions: Vec<(CondTag, Condition)>,
    pub effects: Vec<(EffTag, Effect)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainModel {
    pub name: String,
    pub requirements: Vec<String>,
    pub types: TypeTable,
    pub constants: Vec<(String, usize)>,
    pub predicates: Vec<Signature>,
    pub functions: Vec<Signature>,
    pub operators: Vec<OperatorSchema>,
}

impl DomainModel {
    pub fn predicate(&self, name: &str) -> Option<usize> {
        self.predicates.iter().position(|p| p.name == name)
    }

    pub fn function(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|p| p.name == name)
    }

    pub fn operator(&self, name: &str) -> Option<&OperatorSchema> {
        self.operators.iter().find(|o| o.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemModel {
    pub name: String,
    pub domain_name: String,
    /// Problem objects followed by the domain constants.
    pub objects: Vec<(String, usize)>,
    pub init_atoms: Vec<(usize, Vec<String>)>,
    pub init_values: Vec<(usize, Vec<String>, f64)>,
    /// Ground fluents with no value in `:init`; they read as 0.
    pub absent_values: Vec<(usize, Vec<String>)>,
    /// Conditions with `Term::Object` arguments only.
    pub goals: Vec<Condition>,
    /// `None` means minimise the number of actions.
    pub metric: Option<LiftedExpr>,
    pub warnings: Vec<String>,
}

impl ProblemModel {
    pub fn object_type(&self, name: &str) -> Option<usize> {
        self.objects.iter().find(|(n, _)| n == name).map(|(_, t)| *t)
    }
}
