//! Syntax trees for the supported PDDL fragment, and their canonical printer.

use std::fmt;

use crate::rational::{format_rational, Cost};

/// Source position, 1-based.
///
/// Spans never participate in equality: two trees that differ only in where
/// they were parsed from compare equal.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

pub const ROOT_TYPE: &str = "object";
pub const TOTAL_COST: &str = "total-cost";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Requirement {
    Strips,
    Typing,
    NegativePreconditions,
    ActionCosts,
}

impl Requirement {
    pub fn parse(keyword: &str) -> Option<Self> {
        Some(match keyword {
            ":strips" => Requirement::Strips,
            ":typing" => Requirement::Typing,
            ":negative-preconditions" => Requirement::NegativePreconditions,
            ":action-costs" => Requirement::ActionCosts,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Requirement::Strips => ":strips",
            Requirement::Typing => ":typing",
            Requirement::NegativePreconditions => ":negative-preconditions",
            Requirement::ActionCosts => ":action-costs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDecl {
    pub name: String,
    pub parent: String,
}

/// `?name - type`; the name is stored without the leading `?`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedParam {
    pub name: String,
    pub ty: String,
}

impl TypedParam {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        TypedParam {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Object(String),
}

/// A possibly lifted atom such as `(at ?c)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomExpr {
    pub predicate: String,
    pub args: Vec<Term>,
    pub span: Span,
}

impl AtomExpr {
    pub fn lifted(predicate: &str, vars: &[&str]) -> Self {
        AtomExpr {
            predicate: predicate.to_string(),
            args: vars.iter().map(|v| Term::Var(v.to_string())).collect(),
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Literal {
    pub positive: bool,
    pub atom: AtomExpr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<TypedParam>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<TypedParam>,
}

/// What an action adds to `total-cost`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CostExpr {
    Constant(Cost),
    Fluent(AtomExpr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<TypedParam>,
    pub precondition: Vec<Literal>,
    pub add: Vec<AtomExpr>,
    pub delete: Vec<AtomExpr>,
    /// `None` means the action is free.
    pub cost: Option<CostExpr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainAst {
    pub name: String,
    pub requirements: Vec<Requirement>,
    pub types: Vec<TypeDecl>,
    pub predicates: Vec<PredicateDecl>,
    pub functions: Vec<FunctionDecl>,
    pub actions: Vec<ActionSchema>,
}

impl DomainAst {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn has_type(&self, name: &str) -> bool {
        name == ROOT_TYPE || self.types.iter().any(|t| t.name == name)
    }

    /// `true` when `ty` equals `ancestor` or inherits from it.
    pub fn is_subtype(&self, ty: &str, ancestor: &str) -> bool {
        let mut current = ty;
        // Bounded walk guards against cyclic declarations.
        for _ in 0..=self.types.len() + 1 {
            if current == ancestor {
                return true;
            }
            match self.types.iter().find(|t| t.name == current) {
                Some(decl) => current = &decl.parent,
                None => return ancestor == ROOT_TYPE,
            }
        }
        false
    }
}

/// A variable-free atom such as `(adjacent c0 c1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new(predicate: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        GroundAtom {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    /// Parse `(pred a b)` or `pred a b`, case-insensitively.
    pub fn parse(text: &str) -> Option<Self> {
        let trimmed = text.trim();
        let inner = match trimmed.strip_prefix('(') {
            Some(rest) => rest.strip_suffix(')')?,
            None => trimmed,
        };
        if inner.contains(['(', ')']) {
            return None;
        }
        let mut words = inner.split_whitespace().map(str::to_ascii_lowercase);
        let predicate = words.next()?;
        Some(GroundAtom {
            predicate,
            args: words.collect(),
        })
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectDecl {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FluentInit {
    pub fluent: GroundAtom,
    pub value: Cost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemAst {
    pub name: String,
    pub domain_name: String,
    pub objects: Vec<ObjectDecl>,
    pub init: Vec<GroundAtom>,
    pub fluents: Vec<FluentInit>,
    pub goal: Vec<GroundAtom>,
    pub minimize_total_cost: bool,
}

impl ProblemAst {
    pub fn object_type(&self, name: &str) -> Option<&str> {
        self.objects
            .iter()
            .find(|o| o.name == name)
            .map(|o| o.ty.as_str())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Object(o) => f.write_str(o),
        }
    }
}

impl fmt::Display for AtomExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "(not {})", self.atom)
        }
    }
}

fn write_typed(f: &mut fmt::Formatter<'_>, params: &[TypedParam], prefix: &str) -> fmt::Result {
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        write!(f, "{prefix}{} - {}", p.name, p.ty)?;
    }
    Ok(())
}

impl fmt::Display for DomainAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "(define (domain {})", self.name)?;
        if !self.requirements.is_empty() {
            let reqs: Vec<_> = self.requirements.iter().map(|r| r.keyword()).collect();
            writeln!(f, "  (:requirements {})", reqs.join(" "))?;
        }
        if !self.types.is_empty() {
            f.write_str("  (:types")?;
            for t in &self.types {
                write!(f, " {} - {}", t.name, t.parent)?;
            }
            writeln!(f, ")")?;
        }
        if !self.predicates.is_empty() {
            writeln!(f, "  (:predicates")?;
            for p in &self.predicates {
                write!(f, "    ({}", p.name)?;
                if !p.params.is_empty() {
                    f.write_str(" ")?;
                    write_typed(f, &p.params, "?")?;
                }
                writeln!(f, ")")?;
            }
            writeln!(f, "  )")?;
        }
        if !self.functions.is_empty() {
            f.write_str("  (:functions")?;
            for func in &self.functions {
                write!(f, " ({}", func.name)?;
                if !func.params.is_empty() {
                    f.write_str(" ")?;
                    write_typed(f, &func.params, "?")?;
                }
                f.write_str(") - number")?;
            }
            writeln!(f, ")")?;
        }
        for a in &self.actions {
            writeln!(f, "  (:action {}", a.name)?;
            f.write_str("    :parameters (")?;
            write_typed(f, &a.params, "?")?;
            writeln!(f, ")")?;
            f.write_str("    :precondition (and")?;
            for lit in &a.precondition {
                write!(f, " {lit}")?;
            }
            writeln!(f, ")")?;
            f.write_str("    :effect (and")?;
            for d in &a.delete {
                write!(f, " (not {d})")?;
            }
            for ad in &a.add {
                write!(f, " {ad}")?;
            }
            match &a.cost {
                Some(CostExpr::Constant(c)) => {
                    write!(f, " (increase ({TOTAL_COST}) {})", format_rational(c))?
                }
                Some(CostExpr::Fluent(atom)) => write!(f, " (increase ({TOTAL_COST}) {atom})")?,
                None => {}
            }
            writeln!(f, "))")?;
        }
        writeln!(f, ")")
    }
}

impl fmt::Display for ProblemAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "(define (problem {})", self.name)?;
        writeln!(f, "  (:domain {})", self.domain_name)?;
        if !self.objects.is_empty() {
            f.write_str("  (:objects")?;
            for o in &self.objects {
                write!(f, " {} - {}", o.name, o.ty)?;
            }
            writeln!(f, ")")?;
        }
        writeln!(f, "  (:init")?;
        for atom in &self.init {
            writeln!(f, "    {atom}")?;
        }
        for fl in &self.fluents {
            writeln!(f, "    (= {} {})", fl.fluent, format_rational(&fl.value))?;
        }
        writeln!(f, "  )")?;
        f.write_str("  (:goal (and")?;
        for g in &self.goal {
            write!(f, " {g}")?;
        }
        writeln!(f, "))")?;
        if self.minimize_total_cost {
            writeln!(f, "  (:metric minimize ({TOTAL_COST}))")?;
        }
        writeln!(f, ")")
    }
}
