//! Block-level resolution proofs: proof objects, rule application with side
//! condition checks, a whole-proof checker and export to Q-resolution.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::expansion::{expand_tree, ExpansionError, ExpansionFormula, ExpansionTree, Fragment};
use crate::formula::{canonical, ClauseId, Level, LevelRange, Lit, Pcnf, Quantifier, Var};
use crate::sat::{check_resolution_proof, resolve, ResViolation, ResViolationKind, ResolutionProof};

pub type NodeId = usize;

/// A set of clause ids at a quantifier level, plus fresh literals introduced
/// by strengthening.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct ProofObject {
    pub clauses: Vec<ClauseId>,
    pub level: Level,
    pub fresh: Vec<Lit>,
}

impl ProofObject {
    pub fn new(clauses: Vec<ClauseId>, level: Level, fresh: Vec<Lit>) -> ProofObject {
        let mut clauses = clauses;
        clauses.sort_unstable();
        clauses.dedup();
        ProofObject {
            clauses,
            level,
            fresh: canonical(fresh),
        }
    }

    /// The literals of the member clauses at this object's level, together
    /// with the fresh literals.
    pub fn lits(&self, pcnf: &Pcnf) -> Vec<Lit> {
        let mut out: Vec<Lit> = self
            .clauses
            .iter()
            .flat_map(|&i| pcnf.project(i, self.level, LevelRange::Eq))
            .collect();
        out.extend_from_slice(&self.fresh);
        canonical(out)
    }

    /// The clause this object stands for: all member literals at levels
    /// up to and including its own.
    pub fn outer_clause(&self, pcnf: &Pcnf) -> Vec<Lit> {
        canonical(
            self.clauses
                .iter()
                .flat_map(|&i| pcnf.project(i, self.level, LevelRange::Le))
                .collect(),
        )
    }
}

impl fmt::Display for ProofObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        let mut first = true;
        for l in &self.fresh {
            write!(f, "{}{}", if first { "" } else { "," }, l)?;
            first = false;
        }
        for c in &self.clauses {
            write!(f, "{}#{}", if first { "" } else { "," }, c)?;
            first = false;
        }
        write!(f, "}}^{}", self.level)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule {
    Init {
        clause: ClauseId,
        level: Level,
    },
    Res {
        premises: Vec<NodeId>,
        refutation: ResolutionProof,
    },
    ForallRed {
        premise: NodeId,
    },
    Strengthen {
        premise: NodeId,
        clause: ClauseId,
        group: Vec<ClauseId>,
        fresh: Var,
    },
    ExpRes {
        level: Level,
        clauses: Vec<ClauseId>,
        tree: ExpansionTree,
        refutation: ResolutionProof,
    },
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Init { .. } => "init",
            Rule::Res { .. } => "res",
            Rule::ForallRed { .. } => "forall-red",
            Rule::Strengthen { .. } => "strengthen",
            Rule::ExpRes { .. } => "exp-res",
        }
    }

    pub fn premises(&self) -> Vec<NodeId> {
        match self {
            Rule::Init { .. } | Rule::ExpRes { .. } => Vec::new(),
            Rule::Res { premises, .. } => premises.clone(),
            Rule::ForallRed { premise } | Rule::Strengthen { premise, .. } => vec![*premise],
        }
    }

    pub fn refutation(&self) -> Option<&ResolutionProof> {
        match self {
            Rule::Res { refutation, .. } | Rule::ExpRes { refutation, .. } => Some(refutation),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleApp {
    pub rule: Rule,
    pub conclusions: Vec<NodeId>,
}

/// A proof DAG: nodes are proof objects, each concluded by exactly one
/// rule application.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedResProof {
    pub nodes: Vec<ProofObject>,
    pub apps: Vec<RuleApp>,
    pub root: NodeId,
}

impl RedResProof {
    /// Node count plus inner nodes of the embedded resolution refutations.
    pub fn size(&self) -> usize {
        self.nodes.len()
            + self
                .apps
                .iter()
                .filter_map(|a| a.rule.refutation())
                .map(|p| p.inner_nodes())
                .sum::<usize>()
    }

    pub fn count_rule(&self, name: &str) -> usize {
        self.apps.iter().filter(|a| a.rule.name() == name).count()
    }

    /// Drops applications none of whose conclusions the root depends on and
    /// renumbers the rest.
    pub fn prune(&self) -> RedResProof {
        let mut concluded_by = vec![usize::MAX; self.nodes.len()];
        for (a, app) in self.apps.iter().enumerate() {
            for &c in &app.conclusions {
                concluded_by[c] = a;
            }
        }
        let mut keep_app = vec![false; self.apps.len()];
        let mut stack = vec![self.root];
        let mut visited = vec![false; self.nodes.len()];
        while let Some(n) = stack.pop() {
            if visited[n] {
                continue;
            }
            visited[n] = true;
            let a = concluded_by[n];
            if a == usize::MAX || keep_app[a] {
                continue;
            }
            keep_app[a] = true;
            stack.extend(self.apps[a].rule.premises());
        }
        let mut new_id = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        let mut apps = Vec::new();
        for (a, app) in self.apps.iter().enumerate() {
            if !keep_app[a] {
                continue;
            }
            for &c in &app.conclusions {
                new_id[c] = nodes.len();
                nodes.push(self.nodes[c].clone());
            }
            let rule = match &app.rule {
                Rule::Res { premises, refutation } => Rule::Res {
                    premises: premises.iter().map(|&p| new_id[p]).collect(),
                    refutation: refutation.clone(),
                },
                Rule::ForallRed { premise } => Rule::ForallRed { premise: new_id[*premise] },
                Rule::Strengthen {
                    premise,
                    clause,
                    group,
                    fresh,
                } => Rule::Strengthen {
                    premise: new_id[*premise],
                    clause: *clause,
                    group: group.clone(),
                    fresh: *fresh,
                },
                other => other.clone(),
            };
            apps.push(RuleApp {
                rule,
                conclusions: app.conclusions.iter().map(|&c| new_id[c]).collect(),
            });
        }
        RedResProof {
            nodes,
            apps,
            root: new_id[self.root],
        }
    }
}

/// The side condition a rule application or proof violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Condition {
    NodeRange,
    PremiseOrder,
    DuplicateDerivation,
    Underived,
    ConclusionMismatch,
    InitRange,
    InitInnerLiterals,
    ResQuantifier,
    ResLevels,
    ResNoPremises,
    RefutationLeaf,
    RefutationPivot,
    RefutationResolvent,
    RefutationOrder,
    RefutationRoot,
    ForallRedQuantifier,
    ForallRedFresh,
    ForallRedTautology,
    StrengthenQuantifier,
    StrengthenClause,
    StrengthenSubset,
    StrengthenFreshness,
    ExpResQuantifier,
    ExpResTree,
    ExpResProjection,
    RootLevel,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::NodeRange => "node reference out of range",
            Condition::PremiseOrder => "premise not derived by an earlier application",
            Condition::DuplicateDerivation => "node concluded more than once",
            Condition::Underived => "node is not concluded by any application",
            Condition::ConclusionMismatch => "stated conclusion differs from the rule's conclusion",
            Condition::InitRange => "init clause or level out of range",
            Condition::InitInnerLiterals => "init requires no literals beyond the level",
            Condition::ResQuantifier => "res requires an existential level",
            Condition::ResLevels => "res premises at different levels",
            Condition::ResNoPremises => "res without premises",
            Condition::RefutationLeaf => "refutation leaf not among the inputs",
            Condition::RefutationPivot => "refutation pivot invalid",
            Condition::RefutationResolvent => "refutation resolvent mismatch",
            Condition::RefutationOrder => "refutation references a later node",
            Condition::RefutationRoot => "refutation root is not empty",
            Condition::ForallRedQuantifier => "forall-red requires a universal level",
            Condition::ForallRedFresh => "forall-red premise carries fresh literals",
            Condition::ForallRedTautology => "forall-red premise is a universal tautology",
            Condition::StrengthenQuantifier => "strengthen requires an existential level",
            Condition::StrengthenClause => "strengthened clause not in premise",
            Condition::StrengthenSubset => "strengthen subset condition",
            Condition::StrengthenFreshness => "strengthen variable is not fresh",
            Condition::ExpResQuantifier => "exp-res requires an existential level",
            Condition::ExpResTree => "exp-res expansion tree shape",
            Condition::ExpResProjection => "exp-res clause projection",
            Condition::RootLevel => "root is not at level 0",
        };
        f.write_str(s)
    }
}

/// Failure of a single rule application.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{condition}: {detail}")]
pub struct RuleError {
    pub condition: Condition,
    pub detail: String,
}

fn rule_err<T>(condition: Condition, detail: impl Into<String>) -> Result<T, RuleError> {
    Err(RuleError {
        condition,
        detail: detail.into(),
    })
}

/// A checker diagnostic locating the failing node and rule.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("node {node} ({rule}, app {app}): {condition}: {detail}")]
pub struct ProofViolation {
    pub node: NodeId,
    pub app: usize,
    pub rule: &'static str,
    pub condition: Condition,
    pub detail: String,
}

fn refutation_condition(kind: &ResViolationKind) -> Condition {
    match kind {
        ResViolationKind::ForeignLeaf => Condition::RefutationLeaf,
        ResViolationKind::PivotMissing => Condition::RefutationPivot,
        ResViolationKind::ResolventMismatch => Condition::RefutationResolvent,
        ResViolationKind::ForwardReference | ResViolationKind::EmptyProof => Condition::RefutationOrder,
        ResViolationKind::NonEmptyRoot => Condition::RefutationRoot,
    }
}

fn check_refutation(pi: &ResolutionProof, inputs: &[Vec<Lit>]) -> Result<(), RuleError> {
    check_resolution_proof(pi, inputs).map_err(|v: ResViolation| RuleError {
        condition: refutation_condition(&v.kind),
        detail: v.to_string(),
    })
}

fn check_level(pcnf: &Pcnf, k: Level, cond: Condition) -> Result<Quantifier, RuleError> {
    if k == 0 || k > pcnf.num_levels() {
        return rule_err(cond, format!("level {k} has no quantifier"));
    }
    Ok(pcnf.quantifier(k))
}

/// `{i}^k`, provided clause `i` has no literals beyond level `k`.
pub fn apply_init(pcnf: &Pcnf, i: ClauseId, k: Level) -> Result<ProofObject, RuleError> {
    if i == 0 || i > pcnf.num_clauses() || k > pcnf.num_levels() {
        return rule_err(Condition::InitRange, format!("clause {i} at level {k}"));
    }
    let inner = pcnf.project(i, k, LevelRange::Gt);
    if let Some(l) = inner.first() {
        return rule_err(
            Condition::InitInnerLiterals,
            format!("clause {i} has literal {l} beyond level {k}"),
        );
    }
    Ok(ProofObject::new(vec![i], k, Vec::new()))
}

/// Merges premises at an existential level `k` refuted by `pi` into their
/// union at `k - 1`.
pub fn apply_res(pcnf: &Pcnf, premises: &[&ProofObject], pi: &ResolutionProof) -> Result<ProofObject, RuleError> {
    let Some(first) = premises.first() else {
        return rule_err(Condition::ResNoPremises, "no premises");
    };
    let k = first.level;
    if let Some(p) = premises.iter().find(|p| p.level != k) {
        return rule_err(Condition::ResLevels, format!("levels {k} and {}", p.level));
    }
    if check_level(pcnf, k, Condition::ResQuantifier)? != Quantifier::Exists {
        return rule_err(Condition::ResQuantifier, format!("level {k} is universal"));
    }
    let inputs: Vec<Vec<Lit>> = premises.iter().map(|p| p.lits(pcnf)).collect();
    check_refutation(pi, &inputs)?;
    let clauses = premises.iter().flat_map(|p| p.clauses.iter().copied()).collect();
    Ok(ProofObject::new(clauses, k - 1, Vec::new()))
}

/// Moves a non-tautological object at a universal level one level out.
pub fn apply_forall_red(pcnf: &Pcnf, premise: &ProofObject) -> Result<ProofObject, RuleError> {
    let k = premise.level;
    if check_level(pcnf, k, Condition::ForallRedQuantifier)? != Quantifier::Forall {
        return rule_err(Condition::ForallRedQuantifier, format!("level {k} is existential"));
    }
    if !premise.fresh.is_empty() {
        return rule_err(Condition::ForallRedFresh, format!("fresh literals {:?}", premise.fresh));
    }
    let lits = premise.lits(pcnf);
    let set: HashSet<Lit> = lits.iter().copied().collect();
    if let Some(&l) = lits.iter().find(|&&l| set.contains(&!l)) {
        return rule_err(
            Condition::ForallRedTautology,
            format!("complementary pair {}, {}", l, !l),
        );
    }
    Ok(ProofObject::new(premise.clauses.clone(), k - 1, Vec::new()))
}

/// Replaces clause `i` of the premise by the fresh literal `a` and yields
/// `{¬a, j}` for each `j` of the group.
pub fn apply_strengthen(
    pcnf: &Pcnf,
    premise: &ProofObject,
    i: ClauseId,
    group: &[ClauseId],
    a: Var,
) -> Result<(ProofObject, Vec<ProofObject>), RuleError> {
    let k = premise.level;
    if check_level(pcnf, k, Condition::StrengthenQuantifier)? != Quantifier::Exists {
        return rule_err(Condition::StrengthenQuantifier, format!("level {k} is universal"));
    }
    if !premise.clauses.contains(&i) {
        return rule_err(Condition::StrengthenClause, format!("clause {i} not in premise"));
    }
    let inner_i: HashSet<Lit> = pcnf.project(i, k, LevelRange::Gt).into_iter().collect();
    for &j in group {
        if j == 0 || j > pcnf.num_clauses() {
            return rule_err(Condition::StrengthenSubset, format!("clause {j} out of range"));
        }
        if let Some(l) = pcnf.project(j, k, LevelRange::Gt).into_iter().find(|l| !inner_i.contains(l)) {
            return rule_err(
                Condition::StrengthenSubset,
                format!("clause {j} has literal {l} beyond level {k} not in clause {i}"),
            );
        }
    }
    if a.id() <= pcnf.max_var() || premise.fresh.iter().any(|l| l.var() == a) {
        return rule_err(Condition::StrengthenFreshness, format!("variable {a} is not fresh"));
    }
    let clauses = premise.clauses.iter().copied().filter(|&c| c != i).collect();
    let mut fresh = premise.fresh.clone();
    fresh.push(a.pos());
    let main = ProofObject::new(clauses, k, fresh);
    let members = group
        .iter()
        .map(|&j| ProofObject::new(vec![j], k, vec![a.neg()]))
        .collect();
    Ok((main, members))
}

/// Expands the projection of `clauses` onto levels `>= k` by `tree` and
/// checks that `pi` refutes the expansion.
pub fn apply_exp_res(
    pcnf: &Pcnf,
    k: Level,
    clauses: &[ClauseId],
    tree: &ExpansionTree,
    pi: &ResolutionProof,
) -> Result<(ProofObject, ExpansionFormula), RuleError> {
    if check_level(pcnf, k, Condition::ExpResQuantifier)? != Quantifier::Exists {
        return rule_err(Condition::ExpResQuantifier, format!("level {k} is universal"));
    }
    let fragment = Fragment::from_pcnf(pcnf, k, clauses).map_err(|e| RuleError {
        condition: Condition::ExpResProjection,
        detail: e.to_string(),
    })?;
    let exp = expand_tree(tree, &fragment).map_err(|e| RuleError {
        condition: match e {
            ExpansionError::VariableOutsideFragment(_) => Condition::ExpResProjection,
            _ => Condition::ExpResTree,
        },
        detail: e.to_string(),
    })?;
    check_refutation(pi, &exp.clauses)?;
    Ok((ProofObject::new(clauses.to_vec(), k - 1, Vec::new()), exp))
}

/// Summary returned by a successful check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofReport {
    pub size: usize,
    pub nodes: usize,
    pub apps: usize,
}

/// Checks every rule application and the refutation root.
pub fn check_proof(pcnf: &Pcnf, proof: &RedResProof) -> Result<ProofReport, ProofViolation> {
    let n = proof.nodes.len();
    let mut concluded_by = vec![usize::MAX; n];
    for (a, app) in proof.apps.iter().enumerate() {
        let fail = |node, condition, detail: String| ProofViolation {
            node,
            app: a,
            rule: app.rule.name(),
            condition,
            detail,
        };
        for &c in &app.conclusions {
            if c >= n {
                return Err(fail(c, Condition::NodeRange, format!("conclusion {c} of {n} nodes")));
            }
            if concluded_by[c] != usize::MAX {
                return Err(fail(
                    c,
                    Condition::DuplicateDerivation,
                    format!("also concluded by app {}", concluded_by[c]),
                ));
            }
            concluded_by[c] = a;
        }
    }
    if let Some(c) = concluded_by.iter().position(|&a| a == usize::MAX) {
        return Err(ProofViolation {
            node: c,
            app: usize::MAX,
            rule: "none",
            condition: Condition::Underived,
            detail: format!("node {c} has no derivation"),
        });
    }

    let mut fresh_used: HashMap<Var, usize> = HashMap::new();
    for (a, app) in proof.apps.iter().enumerate() {
        let at = app.conclusions.first().copied().unwrap_or(usize::MAX);
        let fail = |condition, detail: String| ProofViolation {
            node: at,
            app: a,
            rule: app.rule.name(),
            condition,
            detail,
        };
        for p in app.rule.premises() {
            if p >= n {
                return Err(fail(Condition::NodeRange, format!("premise {p} of {n} nodes")));
            }
            if concluded_by[p] >= a {
                return Err(fail(
                    Condition::PremiseOrder,
                    format!("premise {p} is concluded by app {}", concluded_by[p]),
                ));
            }
        }
        let from_rule = |e: RuleError| fail(e.condition, e.detail);
        let expected: Vec<ProofObject> = match &app.rule {
            Rule::Init { clause, level } => vec![apply_init(pcnf, *clause, *level).map_err(from_rule)?],
            Rule::Res { premises, refutation } => {
                let objs: Vec<&ProofObject> = premises.iter().map(|&p| &proof.nodes[p]).collect();
                vec![apply_res(pcnf, &objs, refutation).map_err(from_rule)?]
            }
            Rule::ForallRed { premise } => {
                vec![apply_forall_red(pcnf, &proof.nodes[*premise]).map_err(from_rule)?]
            }
            Rule::Strengthen {
                premise,
                clause,
                group,
                fresh,
            } => {
                if let Some(prev) = fresh_used.insert(*fresh, a) {
                    return Err(fail(
                        Condition::StrengthenFreshness,
                        format!("variable {fresh} already introduced by app {prev}"),
                    ));
                }
                let (main, members) =
                    apply_strengthen(pcnf, &proof.nodes[*premise], *clause, group, *fresh).map_err(from_rule)?;
                std::iter::once(main).chain(members).collect()
            }
            Rule::ExpRes {
                level,
                clauses,
                tree,
                refutation,
            } => vec![apply_exp_res(pcnf, *level, clauses, tree, refutation).map_err(from_rule)?.0],
        };
        let stated: Vec<&ProofObject> = app.conclusions.iter().map(|&c| &proof.nodes[c]).collect();
        let matches = stated.len() == expected.len() && stated.iter().zip(&expected).all(|(s, e)| *s == e);
        if !matches {
            let condition = match app.rule {
                Rule::ExpRes { .. } => Condition::ExpResProjection,
                _ => Condition::ConclusionMismatch,
            };
            let rendered: Vec<String> = expected.iter().map(|o| o.to_string()).collect();
            return Err(fail(condition, format!("expected {}", rendered.join(" "))));
        }
    }

    let root = proof.root;
    if root >= n {
        return Err(ProofViolation {
            node: root,
            app: usize::MAX,
            rule: "none",
            condition: Condition::NodeRange,
            detail: format!("root {root} of {n} nodes"),
        });
    }
    if proof.nodes[root].level != 0 {
        let app = concluded_by[root];
        return Err(ProofViolation {
            node: root,
            app,
            rule: proof.apps[app].rule.name(),
            condition: Condition::RootLevel,
            detail: format!("root {} is at level {}", proof.nodes[root], proof.nodes[root].level),
        });
    }
    Ok(ProofReport {
        size: proof.size(),
        nodes: n,
        apps: proof.apps.len(),
    })
}

/// Incrementally assembles a proof through the checked rule functions.
pub struct ProofBuilder<'a> {
    pcnf: &'a Pcnf,
    nodes: Vec<ProofObject>,
    apps: Vec<RuleApp>,
    init_cache: HashMap<(ClauseId, Level), NodeId>,
    fresh_used: HashSet<Var>,
}

impl<'a> ProofBuilder<'a> {
    pub fn new(pcnf: &'a Pcnf) -> ProofBuilder<'a> {
        ProofBuilder {
            pcnf,
            nodes: Vec::new(),
            apps: Vec::new(),
            init_cache: HashMap::new(),
            fresh_used: HashSet::new(),
        }
    }

    pub fn node(&self, id: NodeId) -> &ProofObject {
        &self.nodes[id]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, rule: Rule, objs: Vec<ProofObject>) -> Vec<NodeId> {
        let ids: Vec<NodeId> = (self.nodes.len()..self.nodes.len() + objs.len()).collect();
        self.nodes.extend(objs);
        self.apps.push(RuleApp {
            rule,
            conclusions: ids.clone(),
        });
        ids
    }

    /// `{i}^k`, reusing an earlier identical node.
    pub fn init(&mut self, i: ClauseId, k: Level) -> Result<NodeId, RuleError> {
        if let Some(&id) = self.init_cache.get(&(i, k)) {
            return Ok(id);
        }
        let obj = apply_init(self.pcnf, i, k)?;
        let id = self.push(Rule::Init { clause: i, level: k }, vec![obj])[0];
        self.init_cache.insert((i, k), id);
        Ok(id)
    }

    pub fn res(&mut self, premises: Vec<NodeId>, refutation: ResolutionProof) -> Result<NodeId, RuleError> {
        let objs: Vec<&ProofObject> = premises.iter().map(|&p| &self.nodes[p]).collect();
        let obj = apply_res(self.pcnf, &objs, &refutation)?;
        Ok(self.push(Rule::Res { premises, refutation }, vec![obj])[0])
    }

    pub fn forall_red(&mut self, premise: NodeId) -> Result<NodeId, RuleError> {
        let obj = apply_forall_red(self.pcnf, &self.nodes[premise])?;
        Ok(self.push(Rule::ForallRed { premise }, vec![obj])[0])
    }

    pub fn strengthen(
        &mut self,
        premise: NodeId,
        clause: ClauseId,
        group: Vec<ClauseId>,
        fresh: Var,
    ) -> Result<(NodeId, Vec<NodeId>), RuleError> {
        if self.fresh_used.contains(&fresh) {
            return rule_err(Condition::StrengthenFreshness, format!("variable {fresh} reused"));
        }
        let (main, members) = apply_strengthen(self.pcnf, &self.nodes[premise], clause, &group, fresh)?;
        self.fresh_used.insert(fresh);
        let ids = self.push(
            Rule::Strengthen {
                premise,
                clause,
                group,
                fresh,
            },
            std::iter::once(main).chain(members).collect(),
        );
        Ok((ids[0], ids[1..].to_vec()))
    }

    pub fn exp_res(
        &mut self,
        level: Level,
        clauses: Vec<ClauseId>,
        tree: ExpansionTree,
        refutation: ResolutionProof,
    ) -> Result<NodeId, RuleError> {
        let (obj, _) = apply_exp_res(self.pcnf, level, &clauses, &tree, &refutation)?;
        Ok(self.push(
            Rule::ExpRes {
                level,
                clauses,
                tree,
                refutation,
            },
            vec![obj],
        )[0])
    }

    pub fn finish(self, root: NodeId) -> RedResProof {
        RedResProof {
            nodes: self.nodes,
            apps: self.apps,
            root,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QResStep {
    Axiom { clause: ClauseId },
    Resolve { left: usize, right: usize, pivot: Var },
    Reduce { premise: usize, removed: Vec<Lit> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QResNode {
    pub clause: Vec<Lit>,
    pub step: QResStep,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QResProof {
    pub nodes: Vec<QResNode>,
    pub root: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExportError {
    #[error("rule {rule} at app {app} has no Q-resolution image")]
    Unsupported { app: usize, rule: &'static str },
}

/// Replaces every node by the disjunction of its member literals up to its
/// level and unfolds each embedded refutation into resolution steps.
pub fn export_qres(pcnf: &Pcnf, proof: &RedResProof) -> Result<QResProof, ExportError> {
    let mut out = QResProof {
        nodes: Vec::new(),
        root: 0,
    };
    let mut image = vec![usize::MAX; proof.nodes.len()];
    let mut axiom_of: HashMap<ClauseId, usize> = HashMap::new();
    for (a, app) in proof.apps.iter().enumerate() {
        match &app.rule {
            Rule::Init { clause, .. } => {
                let id = *axiom_of.entry(*clause).or_insert_with(|| {
                    out.nodes.push(QResNode {
                        clause: pcnf.clause(*clause).lits.clone(),
                        step: QResStep::Axiom { clause: *clause },
                    });
                    out.nodes.len() - 1
                });
                image[app.conclusions[0]] = id;
            }
            Rule::ForallRed { premise } => {
                let src = image[*premise];
                let k = proof.nodes[*premise].level;
                let clause = &out.nodes[src].clause;
                let removed: Vec<Lit> = clause.iter().copied().filter(|&l| pcnf.lit_level(l) == k).collect();
                image[app.conclusions[0]] = if removed.is_empty() {
                    src
                } else {
                    let kept = clause.iter().copied().filter(|l| !removed.contains(l)).collect();
                    out.nodes.push(QResNode {
                        clause: kept,
                        step: QResStep::Reduce { premise: src, removed },
                    });
                    out.nodes.len() - 1
                };
            }
            Rule::Res { premises, refutation } => {
                let mut local = Vec::with_capacity(refutation.nodes.len());
                for node in &refutation.nodes {
                    let id = match node.kind {
                        crate::sat::ResNodeKind::Leaf { input } => image[premises[input]],
                        crate::sat::ResNodeKind::Resolvent { left, right, pivot } => {
                            let (l, r) = (local[left], local[right]);
                            let has = |id: usize| out.nodes[id].clause.iter().any(|x: &Lit| x.var() == pivot);
                            if !has(l) {
                                l
                            } else if !has(r) {
                                r
                            } else {
                                let clause = resolve(&out.nodes[l].clause, &out.nodes[r].clause, pivot)
                                    .expect("replayed operands keep their pivots");
                                out.nodes.push(QResNode {
                                    clause,
                                    step: QResStep::Resolve { left: l, right: r, pivot },
                                });
                                out.nodes.len() - 1
                            }
                        }
                    };
                    local.push(id);
                }
                image[app.conclusions[0]] = *local.last().expect("refutation has a root");
            }
            Rule::Strengthen { .. } | Rule::ExpRes { .. } => {
                return Err(ExportError::Unsupported {
                    app: a,
                    rule: app.rule.name(),
                })
            }
        }
    }
    out.root = image[proof.root];
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QResViolationKind {
    NotInMatrix,
    BadReference,
    UniversalPivot,
    PivotMissing,
    Tautology,
    ResolventMismatch,
    IllegalReduction,
    NonEmptyRoot,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("Q-resolution step {step}: {kind:?}: {detail}")]
pub struct QResViolation {
    pub step: usize,
    pub kind: QResViolationKind,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QResReport {
    pub level_ordered: bool,
}

/// Checks a Q-resolution refutation and reports whether it is level-ordered.
pub fn check_qres(pcnf: &Pcnf, proof: &QResProof) -> Result<QResReport, QResViolation> {
    let fail = |step, kind, detail: String| Err(QResViolation { step, kind, detail });
    // Smallest pivot level used anywhere in each node's derivation.
    let mut min_pivot = vec![usize::MAX; proof.nodes.len()];
    let mut level_ordered = true;
    for (s, node) in proof.nodes.iter().enumerate() {
        match &node.step {
            QResStep::Axiom { clause } => {
                let ok = *clause >= 1 && *clause <= pcnf.num_clauses() && pcnf.clause(*clause).lits == node.clause;
                if !ok {
                    return fail(s, QResViolationKind::NotInMatrix, format!("{:?}", node.clause));
                }
            }
            QResStep::Resolve { left, right, pivot } => {
                if *left >= s || *right >= s {
                    return fail(s, QResViolationKind::BadReference, format!("operands {left}, {right}"));
                }
                let ok_pivot = pcnf.level_of(*pivot).is_some_and(|l| pcnf.quantifier(l) == Quantifier::Exists);
                if !ok_pivot {
                    return fail(s, QResViolationKind::UniversalPivot, format!("pivot {pivot}"));
                }
                let Some(res) = resolve(&proof.nodes[*left].clause, &proof.nodes[*right].clause, *pivot) else {
                    return fail(s, QResViolationKind::PivotMissing, format!("pivot {pivot}"));
                };
                if crate::formula::is_tautology(&res) {
                    return fail(s, QResViolationKind::Tautology, format!("{res:?}"));
                }
                if res != node.clause {
                    return fail(s, QResViolationKind::ResolventMismatch, format!("expected {res:?}"));
                }
                let lvl = pcnf.lit_level(pivot.pos());
                let below = min_pivot[*left].min(min_pivot[*right]);
                if lvl > below {
                    level_ordered = false;
                }
                min_pivot[s] = below.min(lvl);
            }
            QResStep::Reduce { premise, removed } => {
                if *premise >= s {
                    return fail(s, QResViolationKind::BadReference, format!("premise {premise}"));
                }
                let src = &proof.nodes[*premise].clause;
                let max_exist = src
                    .iter()
                    .filter(|l| !pcnf.is_universal(l.var()))
                    .map(|&l| pcnf.lit_level(l))
                    .max()
                    .unwrap_or(0);
                for &u in removed {
                    if !src.contains(&u) || !pcnf.is_universal(u.var()) || pcnf.lit_level(u) < max_exist {
                        return fail(s, QResViolationKind::IllegalReduction, format!("literal {u}"));
                    }
                }
                let kept: Vec<Lit> = src.iter().copied().filter(|l| !removed.contains(l)).collect();
                if kept != node.clause {
                    return fail(s, QResViolationKind::ResolventMismatch, format!("expected {kept:?}"));
                }
                min_pivot[s] = min_pivot[*premise];
            }
        }
    }
    match proof.nodes.get(proof.root) {
        Some(n) if n.clause.is_empty() => Ok(QResReport { level_ordered }),
        Some(n) => fail(proof.root, QResViolationKind::NonEmptyRoot, format!("{:?}", n.clause)),
        None => fail(proof.root, QResViolationKind::BadReference, "root out of range".into()),
    }
}

/// Clause ids in the union of the given nodes' clause sets.
pub fn clause_union<'p>(nodes: impl IntoIterator<Item = &'p ProofObject>) -> Vec<ClauseId> {
    let set: BTreeSet<ClauseId> = nodes.into_iter().flat_map(|n| n.clauses.iter().copied()).collect();
    set.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_qdimacs;
    use crate::sat::extract_resolution_proof;

    const EXAMPLE1: &str = "p cnf 4 5\ne 1 0\na 2 0\ne 3 4 0\n-1 3 0\n-2 3 0\n1 4 0\n2 4 0\n-3 -4 0\n";

    fn example1() -> Pcnf {
        parse_qdimacs(EXAMPLE1).unwrap()
    }

    /// Hand-built refutation: the two universal branches at level 3, each
    /// reduced through level 2, merged at level 1.
    fn example1_proof(p: &Pcnf) -> RedResProof {
        let mut b = ProofBuilder::new(p);
        let branch = |b: &mut ProofBuilder, ids: [ClauseId; 3]| {
            let prem: Vec<NodeId> = ids.iter().map(|&i| b.init(i, 3).unwrap()).collect();
            let inputs: Vec<Vec<Lit>> = prem.iter().map(|&n| b.node(n).lits(p)).collect();
            let pi = extract_resolution_proof(&inputs).unwrap();
            let r = b.res(prem, pi).unwrap();
            b.forall_red(r).unwrap()
        };
        let left = branch(&mut b, [1, 4, 5]);
        let right = branch(&mut b, [2, 3, 5]);
        let inputs = vec![b.node(left).lits(p), b.node(right).lits(p)];
        let pi = extract_resolution_proof(&inputs).unwrap();
        let root = b.res(vec![left, right], pi).unwrap();
        b.finish(root)
    }

    #[test]
    fn init_side_condition() {
        let p = example1();
        assert_eq!(apply_init(&p, 5, 3).unwrap(), ProofObject::new(vec![5], 3, vec![]));
        assert_eq!(apply_init(&p, 5, 2).unwrap_err().condition, Condition::InitInnerLiterals);
        assert_eq!(apply_init(&p, 6, 3).unwrap_err().condition, Condition::InitRange);
        for i in 1..=5 {
            assert!(apply_init(&p, i, 3).is_ok());
        }
    }

    #[test]
    fn res_on_example_one() {
        let p = example1();
        let objs: Vec<ProofObject> = [1, 4, 5].iter().map(|&i| apply_init(&p, i, 3).unwrap()).collect();
        let refs: Vec<&ProofObject> = objs.iter().collect();
        let inputs: Vec<Vec<Lit>> = objs.iter().map(|o| o.lits(&p)).collect();
        let pi = extract_resolution_proof(&inputs).unwrap();
        let out = apply_res(&p, &refs, &pi).unwrap();
        assert_eq!(out, ProofObject::new(vec![1, 4, 5], 2, vec![]));
        assert_eq!(out.outer_clause(&p), canonical(vec![Lit::from_dimacs(-1), Lit::from_dimacs(2)]));
    }

    #[test]
    fn forall_red_on_example_one() {
        let p = example1();
        let obj = ProofObject::new(vec![1, 4, 5], 2, vec![]);
        assert_eq!(apply_forall_red(&p, &obj).unwrap(), ProofObject::new(vec![1, 4, 5], 1, vec![]));
        let bad = ProofObject::new(vec![2, 4], 2, vec![]);
        let err = apply_forall_red(&p, &bad).unwrap_err();
        assert_eq!(err.condition, Condition::ForallRedTautology);
        assert!(err.detail.contains("-2") && err.detail.contains('2'));
        assert!(apply_forall_red(&p, &ProofObject::new(vec![5], 2, vec![])).is_ok());
    }

    #[test]
    fn fixture_checks_and_exports() {
        let p = example1();
        let proof = example1_proof(&p);
        let report = check_proof(&p, &proof).unwrap();
        assert_eq!(report.nodes, proof.nodes.len());
        let q = export_qres(&p, &proof).unwrap();
        assert!(check_qres(&p, &q).unwrap().level_ordered);
        assert!(q.nodes[q.root].clause.is_empty());
    }

    #[test]
    fn tampered_pivot_is_rejected() {
        let p = example1();
        let mut proof = example1_proof(&p);
        let Rule::Res { refutation, .. } = &mut proof.apps.iter_mut().find(|a| a.rule.name() == "res").unwrap().rule
        else {
            unreachable!()
        };
        for n in refutation.nodes.iter_mut() {
            if let crate::sat::ResNodeKind::Resolvent { pivot, .. } = &mut n.kind {
                *pivot = Var::new(if pivot.id() == 3 { 4 } else { 3 });
                break;
            }
        }
        let err = check_proof(&p, &proof).unwrap_err();
        assert_eq!(err.condition, Condition::RefutationPivot);
        assert_eq!(err.rule, "res");
    }

    #[test]
    fn strengthen_rules() {
        // CR_2: x11=1 x12=2 x21=3 x22=4 z=5 a1=6 a2=7 b1=8 b2=9
        let text = "p cnf 9 10\ne 1 2 3 4 0\na 5 0\ne 6 7 8 9 0\n-6 -7 0\n-8 -9 0\n\
            1 5 6 0\n-1 -5 8 0\n2 5 6 0\n-2 -5 9 0\n3 5 7 0\n-3 -5 8 0\n4 5 7 0\n-4 -5 9 0\n";
        let p = parse_qdimacs(text).unwrap();
        let premise = ProofObject::new(vec![2, 4, 6], 1, vec![]);
        let a = Var::new(10);
        let (main, members) = apply_strengthen(&p, &premise, 4, &[4, 8], a).unwrap();
        assert_eq!(main, ProofObject::new(vec![2, 6], 1, vec![a.pos()]));
        assert_eq!(members[1], ProofObject::new(vec![8], 1, vec![a.neg()]));
        assert!(apply_strengthen(&p, &premise, 4, &[4], a).is_ok());

        let err = apply_strengthen(&p, &premise, 4, &[6], a).unwrap_err();
        assert_eq!(err.condition, Condition::StrengthenSubset);
        assert!(err.detail.contains("clause 6") && err.detail.contains("9"));

        let err = apply_strengthen(&p, &premise, 4, &[4], Var::new(3)).unwrap_err();
        assert_eq!(err.condition, Condition::StrengthenFreshness);
    }

    #[test]
    fn res_conclusion_drops_fresh_literals() {
        let p = parse_qdimacs("p cnf 2 2\ne 1 0\na 2 0\n1 2 0\n-1 2 0\n").unwrap();
        let premise = ProofObject::new(vec![1], 1, vec![]);
        let (main, members) = apply_strengthen(&p, &premise, 1, &[2], Var::new(3)).unwrap();
        assert_eq!(main.lits(&p), vec![Var::new(3).pos()]);
        let premises = [&main, &members[0], &premise];
        let inputs: Vec<Vec<Lit>> = premises.iter().map(|o| o.lits(&p)).collect();
        let pi = extract_resolution_proof(&inputs).unwrap();
        let out = apply_res(&p, &premises, &pi).unwrap();
        assert!(out.fresh.is_empty());
        assert_eq!(out, ProofObject::new(vec![1, 2], 0, vec![]));
    }

    #[test]
    fn prune_keeps_reachable_part() {
        let p = example1();
        let mut proof = example1_proof(&p);
        let before = proof.clone();
        // An unused init node.
        proof.nodes.push(ProofObject::new(vec![5], 3, vec![]));
        proof.apps.insert(
            0,
            RuleApp {
                rule: Rule::Init { clause: 5, level: 3 },
                conclusions: vec![proof.nodes.len() - 1],
            },
        );
        let pruned = proof.prune();
        assert_eq!(pruned.nodes.len(), before.nodes.len());
        check_proof(&p, &pruned).unwrap();
    }

    #[test]
    fn root_level_is_enforced() {
        let p = example1();
        let mut b = ProofBuilder::new(&p);
        let n = b.init(5, 3).unwrap();
        let proof = b.finish(n);
        assert_eq!(check_proof(&p, &proof).unwrap_err().condition, Condition::RootLevel);
    }

    #[test]
    fn qres_rejects_universal_pivot_and_tautology() {
        let p = example1();
        let ax = |c: ClauseId| QResNode {
            clause: p.clause(c).lits.clone(),
            step: QResStep::Axiom { clause: c },
        };
        let universal = QResProof {
            nodes: vec![
                ax(2),
                ax(4),
                QResNode {
                    clause: canonical(vec![Lit::from_dimacs(3), Lit::from_dimacs(4)]),
                    step: QResStep::Resolve {
                        left: 0,
                        right: 1,
                        pivot: Var::new(2),
                    },
                },
            ],
            root: 2,
        };
        assert_eq!(check_qres(&p, &universal).unwrap_err().kind, QResViolationKind::UniversalPivot);

        let taut = QResProof {
            nodes: vec![
                ax(1),
                ax(3),
                QResNode {
                    clause: canonical(vec![Lit::from_dimacs(3), Lit::from_dimacs(4)]),
                    step: QResStep::Resolve {
                        left: 0,
                        right: 1,
                        pivot: Var::new(1),
                    },
                },
            ],
            root: 2,
        };
        assert!(check_qres(&p, &taut).is_err());
        let taut2 = QResProof {
            nodes: vec![
                QResNode {
                    clause: p.clause(1).lits.clone(),
                    step: QResStep::Axiom { clause: 1 },
                },
                QResNode {
                    clause: p.clause(5).lits.clone(),
                    step: QResStep::Axiom { clause: 5 },
                },
                QResNode {
                    clause: canonical(vec![Lit::from_dimacs(-1), Lit::from_dimacs(-4)]),
                    step: QResStep::Resolve {
                        left: 0,
                        right: 1,
                        pivot: Var::new(3),
                    },
                },
                QResNode {
                    clause: p.clause(3).lits.clone(),
                    step: QResStep::Axiom { clause: 3 },
                },
                QResNode {
                    clause: canonical(vec![Lit::from_dimacs(-1), Lit::from_dimacs(1)]),
                    step: QResStep::Resolve {
                        left: 2,
                        right: 3,
                        pivot: Var::new(4),
                    },
                },
            ],
            root: 4,
        };
        assert_eq!(check_qres(&p, &taut2).unwrap_err().kind, QResViolationKind::Tautology);
    }
}
