//! Two-stage parser: tokens are folded into s-expressions with an explicit
//! stack (so hostile nesting cannot exhaust the call stack), then the trees are
//! interpreted as a domain or problem.

use std::collections::HashSet;

use super::ast::*;
use super::lexer::{tokenize, TokenKind};
use super::PddlError;
use crate::rational::{is_negative, parse_rational};

/// Lists nested deeper than this are rejected; real domains rarely exceed 6.
pub const MAX_NESTING: usize = 32;

#[derive(Debug, Clone)]
pub(crate) enum Sexpr {
    Word(String, Span),
    List(Vec<Sexpr>, Span),
}

impl Sexpr {
    pub(crate) fn span(&self) -> Span {
        match self {
            Sexpr::Word(_, s) | Sexpr::List(_, s) => *s,
        }
    }

    fn describe(&self) -> String {
        match self {
            Sexpr::Word(w, _) => format!("`{w}`"),
            Sexpr::List(items, _) => match items.first() {
                Some(Sexpr::Word(w, _)) => format!("list `({w} ...)`"),
                _ => "list".to_string(),
            },
        }
    }

    fn word(&self) -> Option<&str> {
        match self {
            Sexpr::Word(w, _) => Some(w),
            Sexpr::List(..) => None,
        }
    }
}

fn parse_error(pos: Span, expected: impl Into<String>, found: impl Into<String>) -> PddlError {
    PddlError::Parse {
        pos,
        expected: expected.into(),
        found: found.into(),
    }
}

/// Read exactly one top-level s-expression.
pub(crate) fn read_sexpr(text: &str) -> Result<Sexpr, PddlError> {
    let tokens = tokenize(text)?;
    let mut stack: Vec<(Vec<Sexpr>, Span)> = Vec::new();
    let mut result: Option<Sexpr> = None;
    for tok in tokens {
        if result.is_some() {
            let found = match tok.kind {
                TokenKind::Close => "`)`",
                _ => "more input",
            };
            return Err(parse_error(tok.span, "end of input", found));
        }
        match tok.kind {
            TokenKind::Open => {
                if stack.len() >= MAX_NESTING {
                    return Err(parse_error(
                        tok.span,
                        format!("at most {MAX_NESTING} nested lists"),
                        "deeper nesting",
                    ));
                }
                stack.push((Vec::new(), tok.span));
            }
            TokenKind::Close => {
                let (items, span) = stack
                    .pop()
                    .ok_or_else(|| parse_error(tok.span, "`(` or end of input", "`)`"))?;
                let list = Sexpr::List(items, span);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(list),
                    None => result = Some(list),
                }
            }
            TokenKind::Word(w) => match stack.last_mut() {
                Some((parent, _)) => parent.push(Sexpr::Word(w, tok.span)),
                None => return Err(parse_error(tok.span, "`(`", format!("`{w}`"))),
            },
        }
    }
    if let Some((_, open)) = stack.last() {
        return Err(parse_error(
            *open,
            "`)` closing the list opened here",
            "end of input",
        ));
    }
    result.ok_or_else(|| parse_error(Span { line: 1, col: 1 }, "`(define ...)`", "empty input"))
}

fn as_list<'a>(s: &'a Sexpr, expected: &str) -> Result<(&'a [Sexpr], Span), PddlError> {
    match s {
        Sexpr::List(items, span) => Ok((items, *span)),
        other => Err(parse_error(other.span(), expected, other.describe())),
    }
}

fn as_word<'a>(s: &'a Sexpr, expected: &str) -> Result<&'a str, PddlError> {
    match s {
        Sexpr::Word(w, _) => Ok(w),
        other => Err(parse_error(other.span(), expected, other.describe())),
    }
}

fn as_name<'a>(s: &'a Sexpr, expected: &str) -> Result<&'a str, PddlError> {
    let w = as_word(s, expected)?;
    if !is_name(w) {
        return Err(parse_error(s.span(), expected, format!("`{w}`")));
    }
    Ok(w)
}

fn is_name(w: &str) -> bool {
    w.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && w.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn as_var<'a>(s: &'a Sexpr) -> Result<&'a str, PddlError> {
    let w = as_word(s, "variable")?;
    match w.strip_prefix('?') {
        Some(name) if is_name(name) => Ok(name),
        _ => Err(parse_error(s.span(), "variable `?name`", format!("`{w}`"))),
    }
}

/// Split a list that must start with `head`.
fn headed<'a>(s: &'a Sexpr, head: &str) -> Result<&'a [Sexpr], PddlError> {
    let (items, span) = as_list(s, &format!("`({head} ...)`"))?;
    match items.first().and_then(Sexpr::word) {
        Some(w) if w == head => Ok(&items[1..]),
        _ => Err(parse_error(
            items.first().map_or(span, Sexpr::span),
            format!("`{head}`"),
            items.first().map_or("empty list".to_string(), Sexpr::describe),
        )),
    }
}

/// `a b - t c` style lists. `item` validates one name.
fn typed_list<'a>(
    items: &'a [Sexpr],
    item: impl Fn(&'a Sexpr) -> Result<&'a str, PddlError>,
) -> Result<Vec<(String, String, Span)>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<(&str, Span)> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        if items[i].word() == Some("-") {
            let ty_expr = items
                .get(i + 1)
                .ok_or_else(|| parse_error(items[i].span(), "type name after `-`", "end of list"))?;
            if let Sexpr::List(inner, span) = ty_expr {
                if inner.first().and_then(Sexpr::word) == Some("either") {
                    return Err(PddlError::Unsupported {
                        pos: *span,
                        construct: "either types".into(),
                    });
                }
            }
            let ty = as_name(ty_expr, "type name")?;
            if pending.is_empty() {
                return Err(parse_error(items[i].span(), "name before `-`", "`-`"));
            }
            out.extend(pending.drain(..).map(|(n, s)| (n.to_string(), ty.to_string(), s)));
            i += 2;
        } else {
            pending.push((item(&items[i])?, items[i].span()));
            i += 1;
        }
    }
    out.extend(
        pending
            .into_iter()
            .map(|(n, s)| (n.to_string(), ROOT_TYPE.to_string(), s)),
    );
    Ok(out)
}

fn parse_requirements(items: &[Sexpr]) -> Result<Vec<Requirement>, PddlError> {
    let mut reqs = Vec::new();
    for it in items {
        let w = as_word(it, "requirement keyword")?;
        let req = Requirement::parse(w).ok_or_else(|| PddlError::UnsupportedRequirement {
            pos: it.span(),
            requirement: w.to_string(),
        })?;
        if !reqs.contains(&req) {
            reqs.push(req);
        }
    }
    Ok(reqs)
}

const RESERVED_HEADS: &[&str] = &[
    "and", "or", "not", "imply", "forall", "exists", "when", "=", "<", ">", "<=", ">=",
    "increase", "decrease", "assign", "scale-up", "scale-down",
];

struct Scope<'d> {
    domain: &'d DomainAst,
    vars: &'d [TypedParam],
}

impl Scope<'_> {
    fn atom(&self, s: &Sexpr) -> Result<AtomExpr, PddlError> {
        let (items, span) = as_list(s, "atom")?;
        let head = items
            .first()
            .ok_or_else(|| parse_error(span, "predicate name", "empty list"))?;
        let name = as_word(head, "predicate name")?;
        if RESERVED_HEADS.contains(&name) {
            return Err(PddlError::Unsupported {
                pos: span,
                construct: format!("`{name}` expression"),
            });
        }
        let name = as_name(head, "predicate name")?;
        let decl = self.domain.predicate(name).ok_or_else(|| PddlError::UnknownPredicate {
            pos: span,
            name: name.into(),
        })?;
        let args = self.terms(&items[1..])?;
        if args.len() != decl.params.len() {
            return Err(PddlError::Arity {
                pos: span,
                name: name.into(),
                expected: decl.params.len(),
                found: args.len(),
            });
        }
        Ok(AtomExpr {
            predicate: name.into(),
            args,
            span,
        })
    }

    fn terms(&self, items: &[Sexpr]) -> Result<Vec<Term>, PddlError> {
        items
            .iter()
            .map(|t| {
                let w = as_word(t, "term")?;
                if w.starts_with('?') {
                    let v = as_var(t)?;
                    if !self.vars.iter().any(|p| p.name == v) {
                        return Err(PddlError::UnboundVariable {
                            pos: t.span(),
                            name: v.into(),
                        });
                    }
                    Ok(Term::Var(v.into()))
                } else {
                    as_name(t, "term")?;
                    Err(PddlError::Unsupported {
                        pos: t.span(),
                        construct: format!("constant `{w}` in action schema"),
                    })
                }
            })
            .collect()
    }

    fn literal(&self, s: &Sexpr) -> Result<Literal, PddlError> {
        if let Sexpr::List(items, _) = s {
            if items.first().and_then(Sexpr::word) == Some("not") {
                let inner = match &items[1..] {
                    [one] => one,
                    _ => return Err(parse_error(s.span(), "`(not <atom>)`", s.describe())),
                };
                return Ok(Literal {
                    positive: false,
                    atom: self.atom(inner)?,
                });
            }
        }
        Ok(Literal {
            positive: true,
            atom: self.atom(s)?,
        })
    }

    /// `(and ...)`, a single literal, or `()`.
    fn conjunction<'s>(&self, s: &'s Sexpr) -> Result<&'s [Sexpr], PddlError> {
        let (items, _) = as_list(s, "condition")?;
        match items.first().and_then(Sexpr::word) {
            None if items.is_empty() => Ok(items),
            Some("and") => Ok(&items[1..]),
            _ => Ok(std::slice::from_ref(s)),
        }
    }

    fn cost(&self, s: &Sexpr) -> Result<CostExpr, PddlError> {
        match s {
            Sexpr::Word(w, span) => {
                let value = parse_rational(w).map_err(|_| parse_error(*span, "number", format!("`{w}`")))?;
                if is_negative(&value) {
                    return Err(PddlError::NegativeCost {
                        pos: *span,
                        value: w.clone(),
                    });
                }
                Ok(CostExpr::Constant(value))
            }
            Sexpr::List(items, span) => {
                let name = as_name(
                    items.first().ok_or_else(|| parse_error(*span, "fluent", "empty list"))?,
                    "fluent name",
                )?;
                let decl = self.domain.function(name).ok_or_else(|| PddlError::UnknownFunction {
                    pos: *span,
                    name: name.into(),
                })?;
                let args = self.terms(&items[1..])?;
                if args.len() != decl.params.len() {
                    return Err(PddlError::Arity {
                        pos: *span,
                        name: name.into(),
                        expected: decl.params.len(),
                        found: args.len(),
                    });
                }
                Ok(CostExpr::Fluent(AtomExpr {
                    predicate: name.into(),
                    args,
                    span: *span,
                }))
            }
        }
    }
}

fn check_type(domain: &DomainAst, ty: &str, pos: Span) -> Result<(), PddlError> {
    if domain.has_type(ty) {
        Ok(())
    } else {
        Err(PddlError::UnknownType {
            pos,
            name: ty.into(),
        })
    }
}

fn params_from(
    domain: &DomainAst,
    items: &[Sexpr],
    kind: &'static str,
) -> Result<Vec<TypedParam>, PddlError> {
    let mut seen = HashSet::new();
    typed_list(items, as_var)?
        .into_iter()
        .map(|(name, ty, span)| {
            check_type(domain, &ty, span)?;
            if !seen.insert(name.clone()) {
                return Err(PddlError::Duplicate { pos: span, kind, name });
            }
            Ok(TypedParam { name, ty })
        })
        .collect()
}

fn section_key(s: &Sexpr) -> Result<(&str, &[Sexpr], Span), PddlError> {
    let (items, span) = as_list(s, "`(:section ...)`")?;
    let key = items
        .first()
        .ok_or_else(|| parse_error(span, "section keyword", "empty list"))
        .and_then(|k| as_word(k, "section keyword"))?;
    Ok((key, &items[1..], span))
}

fn define_header<'a>(root: &'a Sexpr, kind: &str) -> Result<(&'a str, &'a [Sexpr]), PddlError> {
    let rest = headed(root, "define")?;
    let header = rest
        .first()
        .ok_or_else(|| parse_error(root.span(), format!("`({kind} <name>)`"), "end of list"))?;
    let name = match headed(header, kind)? {
        [n] => as_name(n, &format!("{kind} name"))?,
        _ => {
            return Err(parse_error(
                header.span(),
                format!("`({kind} <name>)`"),
                header.describe(),
            ))
        }
    };
    Ok((name, &rest[1..]))
}

pub fn parse_domain(text: &str) -> Result<DomainAst, PddlError> {
    let root = read_sexpr(text)?;
    let (name, sections) = define_header(&root, "domain")?;
    let mut domain = DomainAst {
        name: name.into(),
        requirements: Vec::new(),
        types: Vec::new(),
        predicates: Vec::new(),
        functions: Vec::new(),
        actions: Vec::new(),
    };

    for section in sections {
        let (key, body, span) = section_key(section)?;
        match key {
            ":requirements" => domain.requirements = parse_requirements(body)?,
            ":types" => {
                for (name, parent, pos) in typed_list(body, |s| as_name(s, "type name"))? {
                    if name == ROOT_TYPE {
                        continue;
                    }
                    if domain.has_type(&name) {
                        return Err(PddlError::Duplicate { pos, kind: "type", name });
                    }
                    domain.types.push(TypeDecl { name, parent });
                }
                // Supertypes that are only mentioned as parents hang off the root.
                let implicit: Vec<String> = domain
                    .types
                    .iter()
                    .map(|t| t.parent.clone())
                    .filter(|p| !domain.has_type(p))
                    .collect();
                for name in implicit {
                    if !domain.has_type(&name) {
                        domain.types.push(TypeDecl {
                            name,
                            parent: ROOT_TYPE.into(),
                        });
                    }
                }
            }
            ":predicates" => {
                for p in body {
                    let (items, pspan) = as_list(p, "predicate declaration")?;
                    let head = items
                        .first()
                        .ok_or_else(|| parse_error(pspan, "predicate name", "empty list"))?;
                    let pname = as_name(head, "predicate name")?;
                    if RESERVED_HEADS.contains(&pname) || domain.predicate(pname).is_some() {
                        return Err(PddlError::Duplicate {
                            pos: pspan,
                            kind: "predicate",
                            name: pname.into(),
                        });
                    }
                    let params = params_from(&domain, &items[1..], "parameter")?;
                    domain.predicates.push(PredicateDecl {
                        name: pname.into(),
                        params,
                        span: pspan,
                    });
                }
            }
            ":functions" => {
                let mut i = 0;
                while i < body.len() {
                    let (items, fspan) = as_list(&body[i], "function declaration")?;
                    let head = items
                        .first()
                        .ok_or_else(|| parse_error(fspan, "function name", "empty list"))?;
                    let fname = as_name(head, "function name")?;
                    if domain.function(fname).is_some() {
                        return Err(PddlError::Duplicate {
                            pos: fspan,
                            kind: "function",
                            name: fname.into(),
                        });
                    }
                    let params = params_from(&domain, &items[1..], "parameter")?;
                    domain.functions.push(FunctionDecl {
                        name: fname.into(),
                        params,
                    });
                    i += 1;
                    if body.get(i).and_then(Sexpr::word) == Some("-") {
                        match body.get(i + 1) {
                            Some(Sexpr::Word(t, _)) if t == "number" => i += 2,
                            Some(other) => {
                                return Err(PddlError::Unsupported {
                                    pos: other.span(),
                                    construct: "non-numeric function type".into(),
                                })
                            }
                            None => return Err(parse_error(body[i].span(), "`number`", "end of list")),
                        }
                    }
                }
            }
            ":action" => {
                let action = parse_action(&domain, body, span)?;
                if domain.action(&action.name).is_some() {
                    return Err(PddlError::Duplicate {
                        pos: span,
                        kind: "action",
                        name: action.name,
                    });
                }
                domain.actions.push(action);
            }
            other => {
                return Err(PddlError::Unsupported {
                    pos: span,
                    construct: format!("domain section `{other}`"),
                })
            }
        }
    }
    Ok(domain)
}

fn parse_action(domain: &DomainAst, body: &[Sexpr], span: Span) -> Result<ActionSchema, PddlError> {
    let name = as_name(
        body.first()
            .ok_or_else(|| parse_error(span, "action name", "end of list"))?,
        "action name",
    )?;
    let mut params = Vec::new();
    let mut precondition_expr = None;
    let mut effect_expr = None;
    let mut i = 1;
    while i < body.len() {
        let key = as_word(&body[i], "`:parameters`, `:precondition` or `:effect`")?;
        let value = body
            .get(i + 1)
            .ok_or_else(|| parse_error(body[i].span(), format!("value for `{key}`"), "end of list"))?;
        match key {
            ":parameters" => params = params_from(domain, as_list(value, "parameter list")?.0, "parameter")?,
            ":precondition" => precondition_expr = Some(value),
            ":effect" => effect_expr = Some(value),
            other => {
                return Err(parse_error(
                    body[i].span(),
                    "`:parameters`, `:precondition` or `:effect`",
                    format!("`{other}`"),
                ))
            }
        }
        i += 2;
    }

    let scope = Scope {
        domain,
        vars: &params,
    };
    let mut precondition = Vec::new();
    if let Some(expr) = precondition_expr {
        for lit in scope.conjunction(expr)? {
            precondition.push(scope.literal(lit)?);
        }
    }
    let (mut add, mut delete, mut cost) = (Vec::new(), Vec::new(), None);
    if let Some(expr) = effect_expr {
        for eff in scope.conjunction(expr)? {
            if let Sexpr::List(items, espan) = eff {
                if items.first().and_then(Sexpr::word) == Some("increase") {
                    let (target, amount) = match &items[1..] {
                        [t, a] => (t, a),
                        _ => return Err(parse_error(*espan, "`(increase (total-cost) <amount>)`", eff.describe())),
                    };
                    let is_total_cost = matches!(
                        target,
                        Sexpr::List(t, _) if t.len() == 1 && t[0].word() == Some(TOTAL_COST)
                    );
                    if !is_total_cost {
                        return Err(PddlError::Unsupported {
                            pos: target.span(),
                            construct: "numeric effects other than total-cost".into(),
                        });
                    }
                    if cost.is_some() {
                        return Err(PddlError::Duplicate {
                            pos: *espan,
                            kind: "cost effect",
                            name: name.into(),
                        });
                    }
                    cost = Some(scope.cost(amount)?);
                    continue;
                }
            }
            let lit = scope.literal(eff)?;
            if lit.positive {
                add.push(lit.atom);
            } else {
                delete.push(lit.atom);
            }
        }
    }
    Ok(ActionSchema {
        name: name.into(),
        params,
        precondition,
        add,
        delete,
        cost,
        span,
    })
}

fn ground_atom(domain: &DomainAst, s: &Sexpr, functions: bool) -> Result<GroundAtom, PddlError> {
    let (items, span) = as_list(s, "ground atom")?;
    let head = items
        .first()
        .ok_or_else(|| parse_error(span, "predicate name", "empty list"))?;
    let name = as_word(head, "predicate name")?;
    if RESERVED_HEADS.contains(&name) {
        return Err(PddlError::Unsupported {
            pos: span,
            construct: format!("`{name}` in ground formula"),
        });
    }
    let name = as_name(head, "predicate name")?;
    let expected = if functions {
        domain
            .function(name)
            .map(|f| f.params.len())
            .ok_or_else(|| PddlError::UnknownFunction { pos: span, name: name.into() })?
    } else {
        domain
            .predicate(name)
            .map(|p| p.params.len())
            .ok_or_else(|| PddlError::UnknownPredicate { pos: span, name: name.into() })?
    };
    let args = items[1..]
        .iter()
        .map(|a| as_name(a, "object name").map(str::to_string))
        .collect::<Result<Vec<_>, _>>()?;
    if args.len() != expected {
        return Err(PddlError::Arity {
            pos: span,
            name: name.into(),
            expected,
            found: args.len(),
        });
    }
    Ok(GroundAtom {
        predicate: name.into(),
        args,
    })
}

pub fn parse_problem(text: &str, domain: &DomainAst) -> Result<ProblemAst, PddlError> {
    let root = read_sexpr(text)?;
    let (name, sections) = define_header(&root, "problem")?;
    let mut problem = ProblemAst {
        name: name.into(),
        domain_name: String::new(),
        objects: Vec::new(),
        init: Vec::new(),
        fluents: Vec::new(),
        goal: Vec::new(),
        minimize_total_cost: false,
    };
    let mut seen_domain = false;

    for section in sections {
        let (key, body, span) = section_key(section)?;
        match key {
            ":domain" => {
                let dname = match body {
                    [d] => as_name(d, "domain name")?,
                    _ => return Err(parse_error(span, "`(:domain <name>)`", section.describe())),
                };
                if dname != domain.name {
                    return Err(PddlError::DomainMismatch {
                        expected: domain.name.clone(),
                        found: dname.into(),
                    });
                }
                problem.domain_name = dname.into();
                seen_domain = true;
            }
            ":requirements" => {
                parse_requirements(body)?;
            }
            ":objects" => {
                for (name, ty, pos) in typed_list(body, |s| as_name(s, "object name"))? {
                    check_type(domain, &ty, pos)?;
                    if problem.object_type(&name).is_some() {
                        return Err(PddlError::Duplicate { pos, kind: "object", name });
                    }
                    problem.objects.push(ObjectDecl { name, ty });
                }
            }
            ":init" => {
                let mut atoms = HashSet::new();
                for item in body {
                    if let Sexpr::List(items, ispan) = item {
                        if items.first().and_then(Sexpr::word) == Some("=") {
                            let (fluent, value) = match &items[1..] {
                                [f, Sexpr::Word(v, vspan)] => (
                                    ground_atom(domain, f, true)?,
                                    parse_rational(v)
                                        .map_err(|_| parse_error(*vspan, "number", format!("`{v}`")))?,
                                ),
                                _ => return Err(parse_error(*ispan, "`(= (<fluent> ...) <number>)`", item.describe())),
                            };
                            if let Some(prev) = problem.fluents.iter().find(|f| f.fluent == fluent) {
                                if prev.value != value {
                                    return Err(PddlError::Duplicate {
                                        pos: *ispan,
                                        kind: "fluent value",
                                        name: fluent.to_string(),
                                    });
                                }
                                continue;
                            }
                            problem.fluents.push(FluentInit { fluent, value });
                            continue;
                        }
                    }
                    let atom = ground_atom(domain, item, false)?;
                    if atoms.insert(atom.clone()) {
                        problem.init.push(atom);
                    }
                }
            }
            ":goal" => {
                let (items, _) = as_list(body.first().ok_or_else(|| parse_error(span, "goal formula", "end of list"))?, "goal formula")?;
                if body.len() != 1 {
                    return Err(parse_error(body[1].span(), "end of `:goal`", body[1].describe()));
                }
                let conj: &[Sexpr] = match items.first().and_then(Sexpr::word) {
                    Some("and") => &items[1..],
                    None if items.is_empty() => &[],
                    Some("not") => {
                        return Err(PddlError::Unsupported {
                            pos: body[0].span(),
                            construct: "negative goals".into(),
                        })
                    }
                    _ => std::slice::from_ref(&body[0]),
                };
                let mut seen = HashSet::new();
                for g in conj {
                    if let Sexpr::List(gi, gspan) = g {
                        if gi.first().and_then(Sexpr::word) == Some("not") {
                            return Err(PddlError::Unsupported {
                                pos: *gspan,
                                construct: "negative goals".into(),
                            });
                        }
                    }
                    let atom = ground_atom(domain, g, false)?;
                    if seen.insert(atom.clone()) {
                        problem.goal.push(atom);
                    }
                }
            }
            ":metric" => {
                let ok = matches!(body, [Sexpr::Word(dir, _), Sexpr::List(f, _)]
                    if dir == "minimize" && f.len() == 1 && f[0].word() == Some(TOTAL_COST));
                if !ok {
                    return Err(PddlError::Unsupported {
                        pos: span,
                        construct: "metrics other than `minimize (total-cost)`".into(),
                    });
                }
                problem.minimize_total_cost = true;
            }
            other => {
                return Err(PddlError::Unsupported {
                    pos: span,
                    construct: format!("problem section `{other}`"),
                })
            }
        }
    }
    if !seen_domain {
        return Err(parse_error(root.span(), "`(:domain <name>)` section", "none"));
    }
    Ok(problem)
}
