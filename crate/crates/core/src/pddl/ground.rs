//! Instantiate action schemas over problem objects.
//!
//! With pruning on (the default), only actions whose positive preconditions
//! are reachable under the delete relaxation are produced, found by a
//! semi-naive fixpoint: every newly reached fact triggers joins only for
//! bindings that use it. Facts no action can change are then compiled away:
//! they are checked once against the initial state and never stored in search
//! states. With pruning off, every type-consistent binding is produced and all
//! facts are kept as fluents; that mode exists as a reference for tests.

use std::collections::{HashMap, HashSet, VecDeque};

use num_traits::Zero;

use super::ast::*;
use super::task::{FactId, GroundAction, GroundedTask, State};
use super::GroundError;
use crate::rational::Cost;

/// Refuse to enumerate more than this many bindings of one schema.
pub const MAX_BINDINGS: u64 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundingOptions {
    pub prune: bool,
}

impl Default for GroundingOptions {
    fn default() -> Self {
        GroundingOptions { prune: true }
    }
}

pub fn ground(domain: &DomainAst, problem: &ProblemAst) -> Result<GroundedTask, GroundError> {
    ground_with(domain, problem, GroundingOptions::default())
}

type ObjId = u32;
type PredId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    pred: PredId,
    args: Box<[ObjId]>,
}

struct Pattern {
    pred: PredId,
    vars: Vec<usize>,
}

struct Schema<'d> {
    ast: &'d ActionSchema,
    /// Objects allowed for each parameter, as a membership mask.
    allowed: Vec<Vec<bool>>,
    domains: Vec<Vec<ObjId>>,
    positive: Vec<Pattern>,
}

struct Grounder<'a> {
    domain: &'a DomainAst,
    problem: &'a ProblemAst,
    objects: Vec<&'a str>,
    object_ids: HashMap<&'a str, ObjId>,
    preds: Vec<&'a str>,
    pred_ids: HashMap<&'a str, PredId>,
    schemas: Vec<Schema<'a>>,
    fluent_values: HashMap<GroundAtom, Cost>,
}

fn var_index(params: &[TypedParam], term: &Term) -> usize {
    match term {
        Term::Var(v) => params
            .iter()
            .position(|p| &p.name == v)
            .expect("parser guarantees bound variables"),
        Term::Object(_) => unreachable!("parser rejects constants in schemas"),
    }
}

impl<'a> Grounder<'a> {
    fn new(domain: &'a DomainAst, problem: &'a ProblemAst) -> Result<Self, GroundError> {
        let objects: Vec<&str> = problem.objects.iter().map(|o| o.name.as_str()).collect();
        let object_ids = objects
            .iter()
            .enumerate()
            .map(|(i, &o)| (o, i as ObjId))
            .collect();
        let preds: Vec<&str> = domain.predicates.iter().map(|p| p.name.as_str()).collect();
        let pred_ids = preds
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i as PredId))
            .collect();

        let mut schemas = Vec::with_capacity(domain.actions.len());
        for action in &domain.actions {
            let allowed: Vec<Vec<bool>> = action
                .params
                .iter()
                .map(|p| {
                    problem
                        .objects
                        .iter()
                        .map(|o| domain.is_subtype(&o.ty, &p.ty))
                        .collect()
                })
                .collect();
            let domains = allowed
                .iter()
                .map(|mask| {
                    mask.iter()
                        .enumerate()
                        .filter(|(_, &ok)| ok)
                        .map(|(i, _)| i as ObjId)
                        .collect()
                })
                .collect();
            let positive = action
                .precondition
                .iter()
                .filter(|l| l.positive)
                .map(|l| Pattern {
                    pred: domain
                        .predicates
                        .iter()
                        .position(|p| p.name == l.atom.predicate)
                        .expect("parser guarantees declared predicates") as PredId,
                    vars: l.atom.args.iter().map(|t| var_index(&action.params, t)).collect(),
                })
                .collect();
            schemas.push(Schema {
                ast: action,
                allowed,
                domains,
                positive,
            });
        }

        let fluent_values = problem
            .fluents
            .iter()
            .map(|f| (f.fluent.clone(), f.value))
            .collect();

        Ok(Grounder {
            domain,
            problem,
            objects,
            object_ids,
            preds,
            pred_ids,
            schemas,
            fluent_values,
        })
    }

    fn key_of(&self, atom: &GroundAtom) -> Result<Key, GroundError> {
        let pred = *self
            .pred_ids
            .get(atom.predicate.as_str())
            .expect("parser guarantees declared predicates");
        let args = atom
            .args
            .iter()
            .map(|a| {
                self.object_ids
                    .get(a.as_str())
                    .copied()
                    .ok_or_else(|| GroundError::UndeclaredObject { name: a.clone() })
            })
            .collect::<Result<_, _>>()?;
        Ok(Key { pred, args })
    }

    fn atom_of(&self, key: &Key) -> GroundAtom {
        GroundAtom {
            predicate: self.preds[key.pred as usize].to_string(),
            args: key.args.iter().map(|&o| self.objects[o as usize].to_string()).collect(),
        }
    }

    fn instantiate(&self, atom: &AtomExpr, params: &[TypedParam], binding: &[ObjId]) -> Key {
        Key {
            pred: self.pred_ids[atom.predicate.as_str()],
            args: atom
                .args
                .iter()
                .map(|t| binding[var_index(params, t)])
                .collect(),
        }
    }

    fn cost_of(&self, schema: &ActionSchema, binding: &[ObjId]) -> Result<Cost, GroundError> {
        match &schema.cost {
            None => Ok(Cost::zero()),
            Some(CostExpr::Constant(c)) => Ok(*c),
            Some(CostExpr::Fluent(atom)) => {
                let ground = GroundAtom {
                    predicate: atom.predicate.clone(),
                    args: atom
                        .args
                        .iter()
                        .map(|t| self.objects[binding[var_index(&schema.params, t)] as usize].to_string())
                        .collect(),
                };
                match self.fluent_values.get(&ground) {
                    Some(v) if *v < Cost::zero() => Err(GroundError::NegativeCost {
                        fluent: ground.to_string(),
                    }),
                    Some(v) => Ok(*v),
                    None => Err(GroundError::CostFluentUndefined {
                        fluent: ground.to_string(),
                    }),
                }
            }
        }
    }

    /// Every binding of the parameters not fixed by `binding`.
    fn complete(&self, schema: &Schema, binding: &mut Vec<Option<ObjId>>, at: usize, out: &mut Vec<Vec<ObjId>>) {
        if at == binding.len() {
            out.push(binding.iter().map(|b| b.expect("all parameters bound")).collect());
            return;
        }
        if binding[at].is_some() {
            return self.complete(schema, binding, at + 1, out);
        }
        for &obj in &schema.domains[at] {
            binding[at] = Some(obj);
            self.complete(schema, binding, at + 1, out);
        }
        binding[at] = None;
    }

    fn binding_count(&self, schema: &Schema) -> u64 {
        schema
            .domains
            .iter()
            .fold(1u64, |acc, d| acc.saturating_mul(d.len() as u64))
    }
}

/// Facts reached so far, indexed for joins.
#[derive(Default)]
struct FactIndex {
    by_pred: HashMap<PredId, Vec<usize>>,
    by_arg: HashMap<(PredId, usize, ObjId), Vec<usize>>,
    keys: Vec<Key>,
}

impl FactIndex {
    fn activate(&mut self, key: Key) {
        let id = self.keys.len();
        self.by_pred.entry(key.pred).or_default().push(id);
        for (pos, &obj) in key.args.iter().enumerate() {
            self.by_arg.entry((key.pred, pos, obj)).or_default().push(id);
        }
        self.keys.push(key);
    }

    fn candidates(&self, pattern: &Pattern, binding: &[Option<ObjId>]) -> &[usize] {
        let mut best: Option<&[usize]> = None;
        for (pos, &var) in pattern.vars.iter().enumerate() {
            if let Some(obj) = binding[var] {
                let list = self
                    .by_arg
                    .get(&(pattern.pred, pos, obj))
                    .map_or(&[][..], Vec::as_slice);
                if best.is_none_or(|b| list.len() < b.len()) {
                    best = Some(list);
                }
            }
        }
        best.unwrap_or_else(|| self.by_pred.get(&pattern.pred).map_or(&[][..], Vec::as_slice))
    }
}

fn unify(pattern: &Pattern, key: &Key, schema: &Schema, binding: &mut [Option<ObjId>]) -> Option<Vec<usize>> {
    if pattern.pred != key.pred {
        return None;
    }
    let mut newly = Vec::new();
    for (&var, &obj) in pattern.vars.iter().zip(key.args.iter()) {
        match binding[var] {
            Some(b) if b == obj => {}
            Some(_) => {
                for v in newly {
                    binding[v] = None;
                }
                return None;
            }
            None => {
                if !schema.allowed[var][obj as usize] {
                    for v in newly {
                        binding[v] = None;
                    }
                    return None;
                }
                binding[var] = Some(obj);
                newly.push(var);
            }
        }
    }
    Some(newly)
}

fn join(
    g: &Grounder,
    schema: &Schema,
    index: &FactIndex,
    skip: usize,
    at: usize,
    binding: &mut Vec<Option<ObjId>>,
    out: &mut Vec<Vec<ObjId>>,
) {
    if at == schema.positive.len() {
        g.complete(schema, binding, 0, out);
        return;
    }
    if at == skip {
        return join(g, schema, index, skip, at + 1, binding, out);
    }
    let pattern = &schema.positive[at];
    for &fid in index.candidates(pattern, binding) {
        if let Some(newly) = unify(pattern, &index.keys[fid], schema, binding) {
            join(g, schema, index, skip, at + 1, binding, out);
            for v in newly {
                binding[v] = None;
            }
        }
    }
}

pub fn ground_with(
    domain: &DomainAst,
    problem: &ProblemAst,
    options: GroundingOptions,
) -> Result<GroundedTask, GroundError> {
    let g = Grounder::new(domain, problem)?;
    let init_keys: Vec<Key> = problem
        .init
        .iter()
        .map(|a| g.key_of(a))
        .collect::<Result<_, _>>()?;
    let goal_keys: Vec<Key> = problem
        .goal
        .iter()
        .map(|a| g.key_of(a))
        .collect::<Result<_, _>>()?;

    // (schema index, binding) in discovery order.
    let mut bindings: Vec<(usize, Vec<ObjId>)> = Vec::new();
    if options.prune {
        let mut seen_actions: HashSet<(usize, Vec<ObjId>)> = HashSet::new();
        let mut known: HashSet<Key> = HashSet::new();
        let mut queue: VecDeque<Key> = VecDeque::new();
        let mut index = FactIndex::default();
        let mut triggers: HashMap<PredId, Vec<(usize, usize)>> = HashMap::new();
        for (si, s) in g.schemas.iter().enumerate() {
            for (pi, p) in s.positive.iter().enumerate() {
                triggers.entry(p.pred).or_default().push((si, pi));
            }
        }

        let mut emit = |si: usize,
                        found: Vec<Vec<ObjId>>,
                        known: &mut HashSet<Key>,
                        queue: &mut VecDeque<Key>,
                        bindings: &mut Vec<(usize, Vec<ObjId>)>| {
            let schema = &g.schemas[si];
            for b in found {
                if !seen_actions.insert((si, b.clone())) {
                    continue;
                }
                for add in &schema.ast.add {
                    let key = g.instantiate(add, &schema.ast.params, &b);
                    if known.insert(key.clone()) {
                        queue.push_back(key);
                    }
                }
                bindings.push((si, b));
            }
        };

        for key in &init_keys {
            if known.insert(key.clone()) {
                queue.push_back(key.clone());
            }
        }
        for (si, schema) in g.schemas.iter().enumerate() {
            if schema.positive.is_empty() {
                if g.binding_count(schema) > MAX_BINDINGS {
                    return Err(GroundError::TooLarge {
                        action: schema.ast.name.clone(),
                    });
                }
                let mut found = Vec::new();
                g.complete(schema, &mut vec![None; schema.ast.params.len()], 0, &mut found);
                emit(si, found, &mut known, &mut queue, &mut bindings);
            }
        }
        while let Some(key) = queue.pop_front() {
            let pred = key.pred;
            index.activate(key);
            let fid = index.keys.len() - 1;
            let Some(trig) = triggers.get(&pred) else { continue };
            for &(si, pi) in trig {
                let schema = &g.schemas[si];
                let mut binding = vec![None; schema.ast.params.len()];
                let mut found = Vec::new();
                if unify(&schema.positive[pi], &index.keys[fid], schema, &mut binding).is_some() {
                    join(&g, schema, &index, pi, 0, &mut binding, &mut found);
                }
                emit(si, found, &mut known, &mut queue, &mut bindings);
            }
        }
    } else {
        for (si, schema) in g.schemas.iter().enumerate() {
            if g.binding_count(schema) > MAX_BINDINGS {
                return Err(GroundError::TooLarge {
                    action: schema.ast.name.clone(),
                });
            }
            let mut found = Vec::new();
            g.complete(schema, &mut vec![None; schema.ast.params.len()], 0, &mut found);
            bindings.extend(found.into_iter().map(|b| (si, b)));
        }
    }
    // Canonical order: schema declaration order, then object declaration order.
    bindings.sort();

    struct Lifted {
        schema: usize,
        binding: Vec<ObjId>,
        pre: Vec<Key>,
        pre_neg: Vec<Key>,
        add: Vec<Key>,
        del: Vec<Key>,
        cost: Cost,
    }
    let mut lifted = Vec::with_capacity(bindings.len());
    for (si, b) in bindings {
        let s = g.schemas[si].ast;
        let inst = |a: &AtomExpr| g.instantiate(a, &s.params, &b);
        lifted.push(Lifted {
            schema: si,
            pre: s.precondition.iter().filter(|l| l.positive).map(|l| inst(&l.atom)).collect(),
            pre_neg: s.precondition.iter().filter(|l| !l.positive).map(|l| inst(&l.atom)).collect(),
            add: s.add.iter().map(inst).collect(),
            del: s.delete.iter().map(inst).collect(),
            cost: g.cost_of(s, &b)?,
            binding: b,
        });
    }

    // Fact universe: init, goal, then everything actions mention.
    let mut facts: Vec<Key> = Vec::new();
    let mut fact_ids: HashMap<Key, FactId> = HashMap::new();
    let mut intern = |k: &Key, facts: &mut Vec<Key>| -> FactId {
        if let Some(&id) = fact_ids.get(k) {
            return id;
        }
        let id = facts.len() as FactId;
        fact_ids.insert(k.clone(), id);
        facts.push(k.clone());
        id
    };
    let init_ids: Vec<FactId> = init_keys.iter().map(|k| intern(k, &mut facts)).collect();
    let goal_ids: Vec<FactId> = goal_keys.iter().map(|k| intern(k, &mut facts)).collect();
    let mut actions_ids = Vec::with_capacity(lifted.len());
    for l in &lifted {
        let mut ids = |ks: &[Key], facts: &mut Vec<Key>| ks.iter().map(|k| intern(k, facts)).collect::<Vec<_>>();
        let pre = ids(&l.pre, &mut facts);
        let pre_neg = ids(&l.pre_neg, &mut facts);
        let add = ids(&l.add, &mut facts);
        let del = ids(&l.del, &mut facts);
        actions_ids.push((pre, pre_neg, add, del));
    }

    let n = facts.len();
    let mut in_init = vec![false; n];
    for &f in &init_ids {
        in_init[f as usize] = true;
    }
    let mut modified = vec![false; n];
    if options.prune {
        for (_, _, add, del) in &actions_ids {
            for &f in add.iter().chain(del) {
                modified[f as usize] = true;
            }
        }
    } else {
        modified.iter_mut().for_each(|m| *m = true);
    }
    let always_true: Vec<bool> = (0..n).map(|f| in_init[f] && !modified[f]).collect();

    let mut actions = Vec::with_capacity(lifted.len());
    'actions: for (l, (pre, pre_neg, add, del)) in lifted.into_iter().zip(actions_ids) {
        let mut kept_pre = Vec::with_capacity(pre.len());
        for f in pre {
            if modified[f as usize] {
                kept_pre.push(f);
            } else if !in_init[f as usize] {
                continue 'actions;
            }
        }
        let mut kept_neg = Vec::with_capacity(pre_neg.len());
        for f in pre_neg {
            if modified[f as usize] {
                kept_neg.push(f);
            } else if in_init[f as usize] {
                continue 'actions;
            }
        }
        let s = g.schemas[l.schema].ast;
        actions.push(GroundAction::new(
            s.name.clone(),
            l.binding.iter().map(|&o| g.objects[o as usize].to_string()).collect(),
            kept_pre,
            kept_neg,
            add,
            del,
            l.cost,
        ));
    }

    let init = State::from_facts(init_ids.into_iter().filter(|&f| !always_true[f as usize]));
    let atoms = facts.iter().map(|k| g.atom_of(k)).collect();
    let _ = (g.domain, g.problem);
    Ok(GroundedTask::from_parts(atoms, always_true, actions, init, goal_ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{parse_domain, parse_problem};

    fn task(domain: &str, problem: &str, prune: bool) -> Result<GroundedTask, GroundError> {
        let d = parse_domain(domain).unwrap();
        let p = parse_problem(problem, &d).unwrap();
        ground_with(&d, &p, GroundingOptions { prune })
    }

    #[test]
    fn noop_task() {
        let t = task(
            "(define (domain d) (:action noop :parameters () :precondition (and) :effect (and)))",
            "(define (problem p) (:domain d) (:goal (and)))",
            true,
        )
        .unwrap();
        assert_eq!(t.actions().len(), 1);
        assert!(t.is_goal(t.init()));
    }

    #[test]
    fn one_parameter_three_objects() {
        let d = "(define (domain d) (:types cell) (:predicates (seen ?c - cell))
                 (:action look :parameters (?c - cell) :effect (seen ?c)))";
        let p = "(define (problem p) (:domain d) (:objects a b c - cell) (:goal (and)))";
        for prune in [true, false] {
            let t = task(d, p, prune).unwrap();
            let labels: Vec<_> = t.actions().iter().map(|a| a.label().to_string()).collect();
            assert_eq!(labels, ["(look a)", "(look b)", "(look c)"]);
        }
    }

    #[test]
    fn types_restrict_bindings() {
        let d = "(define (domain d) (:types cell tool) (:predicates (at ?c - cell))
                 (:action go :parameters (?c - cell) :effect (at ?c)))";
        let p = "(define (problem p) (:domain d) (:objects a b - cell h - tool) (:goal (and)))";
        let t = task(d, p, false).unwrap();
        assert_eq!(t.actions().len(), 2);
    }

    #[test]
    fn subtypes_are_compatible() {
        let d = "(define (domain d) (:types cell - place dock - place) (:predicates (at ?c - place))
                 (:action go :parameters (?c - place) :effect (at ?c)))";
        let p = "(define (problem p) (:domain d) (:objects a - cell b - dock) (:goal (and)))";
        assert_eq!(task(d, p, true).unwrap().actions().len(), 2);
    }

    #[test]
    fn pruning_drops_unreachable_and_static() {
        let d = "(define (domain d) (:types cell) (:predicates (at ?c - cell) (adj ?a ?b - cell))
                 (:action move :parameters (?a ?b - cell) :precondition (and (at ?a) (adj ?a ?b))
                  :effect (and (not (at ?a)) (at ?b))))";
        let p = "(define (problem p) (:domain d) (:objects x y z - cell)
                 (:init (at x) (adj x y) (adj y x) (adj z x)) (:goal (and (at y))))";
        let full = task(d, p, false).unwrap();
        assert_eq!(full.actions().len(), 9);
        let pruned = task(d, p, true).unwrap();
        let labels: Vec<_> = pruned.actions().iter().map(|a| a.label()).collect();
        assert_eq!(labels, ["(move x y)", "(move y x)"]);
        // adjacency is static: not part of the state, dropped from preconditions
        assert_eq!(pruned.init().len(), 1);
        assert!(pruned.actions().iter().all(|a| a.pre.len() == 1));
        let adj = pruned.fact_id(&GroundAtom::new("adj", ["x", "y"])).unwrap();
        assert!(pruned.is_always_true(adj));
    }

    #[test]
    fn cost_fluents() {
        let d = "(define (domain d) (:types cell) (:predicates (at ?c - cell))
                 (:functions (total-cost) - number (price ?c - cell) - number)
                 (:action go :parameters (?c - cell) :effect (and (at ?c) (increase (total-cost) (price ?c)))))";
        let ok = "(define (problem p) (:domain d) (:objects a b - cell)
                  (:init (= (price a) 2) (= (price b) 1/2)) (:goal (and)))";
        let t = task(d, ok, true).unwrap();
        assert_eq!(t.actions()[0].cost, Cost::from_integer(2));
        assert_eq!(t.actions()[1].cost, Cost::new(1, 2));
        let missing = "(define (problem p) (:domain d) (:objects a b - cell) (:init (= (price a) 2)) (:goal (and)))";
        assert!(matches!(
            task(d, missing, true),
            Err(GroundError::CostFluentUndefined { fluent }) if fluent == "(price b)"
        ));
    }

    #[test]
    fn undeclared_object() {
        let d = "(define (domain d) (:predicates (at ?c)))";
        let p = "(define (problem p) (:domain d) (:objects a) (:init (at b)) (:goal (and)))";
        assert!(matches!(task(d, p, true), Err(GroundError::UndeclaredObject { name }) if name == "b"));
    }
}
