//! Counterexample-guided clausal-abstraction solving over quantifier levels,
//! with clausal, strengthening and expansion refinements and refutation
//! extraction.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::calculus::{NodeId, ProofBuilder, RedResProof};
use crate::expansion::{expand_tree, ExpansionTree, Fragment};
use crate::formula::{Assignment, ClauseId, Level, Lit, Pcnf, Quantifier, Var};
use crate::sat::{extract_resolution_proof, CdclSolver, SatOracle, SatOutcome};

/// Resource budgets; `None` means unlimited.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Limits {
    pub time: Option<Duration>,
    pub conflicts: Option<u64>,
    pub iterations: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolverConfig {
    pub use_strengthen: bool,
    pub use_expansion: bool,
    pub seed: u64,
    pub proof_logging: bool,
    pub limits: Limits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RefinementMode {
    Plain,
    Strengthen,
    Expansion,
    Both,
}

impl RefinementMode {
    pub const ALL: [RefinementMode; 4] = [
        RefinementMode::Plain,
        RefinementMode::Strengthen,
        RefinementMode::Expansion,
        RefinementMode::Both,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RefinementMode::Plain => "plain",
            RefinementMode::Strengthen => "strengthen",
            RefinementMode::Expansion => "expansion",
            RefinementMode::Both => "both",
        }
    }
}

impl std::str::FromStr for RefinementMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RefinementMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown refinement mode `{s}`"))
    }
}

impl SolverConfig {
    pub fn with_mode(mode: RefinementMode) -> SolverConfig {
        SolverConfig {
            use_strengthen: matches!(mode, RefinementMode::Strengthen | RefinementMode::Both),
            use_expansion: matches!(mode, RefinementMode::Expansion | RefinementMode::Both),
            ..SolverConfig::default()
        }
    }

    pub fn proof_logging(mut self, on: bool) -> SolverConfig {
        self.proof_logging = on;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    /// SAT calls per level; index 0 is unused.
    pub sat_calls: Vec<u64>,
    pub clausal: u64,
    pub strengthen: u64,
    pub expansion: u64,
    pub universal: u64,
    pub iterations: u64,
    pub conflicts: u64,
    pub proof_size: Option<usize>,
}

impl Stats {
    /// Refinements learned at existential levels from inner counterexamples.
    pub fn existential_refinements(&self) -> u64 {
        self.clausal + self.strengthen
    }

    /// `key value` lines.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (k, n) in self.sat_calls.iter().enumerate().skip(1) {
            out.push_str(&format!("sat_calls[{k}] {n}\n"));
        }
        out.push_str(&format!("refinements.clausal {}\n", self.clausal));
        out.push_str(&format!("refinements.strengthen {}\n", self.strengthen));
        out.push_str(&format!("refinements.expansion {}\n", self.expansion));
        out.push_str(&format!("refinements.universal {}\n", self.universal));
        out.push_str(&format!("iterations {}\n", self.iterations));
        out.push_str(&format!("conflicts {}\n", self.conflicts));
        if let Some(s) = self.proof_size {
            out.push_str(&format!("proof_size {s}\n"));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefinementKind {
    Clausal,
    Strengthen,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    /// A counterexample core learned at an existential level.
    Refinement {
        level: Level,
        kind: RefinementKind,
        core: Vec<ClauseId>,
    },
    /// Strengthening groups computed for the clauses of a core.
    StrengthenGroups { level: Level, groups: Vec<Vec<ClauseId>> },
    Expansion { level: Level, assignment: Assignment },
    UniversalRefinement { level: Level, witness: Vec<ClauseId> },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    #[error("time limit exceeded")]
    TimeLimit,
    #[error("conflict limit exceeded")]
    ConflictLimit,
    #[error("iteration limit exceeded")]
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub verdict: bool,
    pub proof: Option<RedResProof>,
    pub stats: Stats,
    pub trace: Vec<TraceEvent>,
}

/// Result of a subgame at one level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LevelOutcome {
    Sat,
    Unsat {
        core: Vec<ClauseId>,
        node: Option<NodeId>,
        /// The universal assignment that refuted the obligations, when the
        /// level is universal.
        moves: Option<Assignment>,
    },
}

struct Candidate {
    clauses: Vec<ClauseId>,
    node: NodeId,
}

struct ExistsLevel {
    sat: Box<dyn SatOracle>,
    vars: HashMap<Var, Var>,
    a: Vec<Option<Var>>,
    b: Vec<Option<Var>>,
    candidates: Vec<Candidate>,
    groups: HashMap<ClauseId, Vec<ClauseId>>,
    expanded: Vec<Assignment>,
    expanded_set: HashSet<Assignment>,
    copies: HashMap<(Var, Assignment), Var>,
}

struct ForallLevel {
    sat: Box<dyn SatOracle>,
    vars: HashMap<Var, Var>,
    r: Vec<Option<Var>>,
    relevant: Vec<ClauseId>,
}

enum LevelState {
    Exists(ExistsLevel),
    Forall(ForallLevel),
}

/// The solver state for one formula.
pub struct Solver<'a> {
    pcnf: &'a Pcnf,
    config: SolverConfig,
    /// Per clause, its literals grouped by level.
    by_level: Vec<Vec<(Level, Vec<Lit>)>>,
    max_level: Vec<Level>,
    levels: Vec<Option<LevelState>>,
    innermost_forall: Option<Level>,
    builder: Option<ProofBuilder<'a>>,
    next_fresh: u32,
    stats: Stats,
    trace: Vec<TraceEvent>,
    start: Instant,
}

fn sat_lit(vars: &HashMap<Var, Var>, lit: Lit) -> Lit {
    Lit::new(vars[&lit.var()], lit.is_negated())
}

impl<'a> Solver<'a> {
    pub fn new(pcnf: &'a Pcnf, config: SolverConfig) -> Solver<'a> {
        let m = pcnf.num_clauses();
        let n = pcnf.num_levels();
        let mut by_level = vec![Vec::new(); m + 1];
        let mut max_level = vec![0; m + 1];
        for c in pcnf.clauses() {
            let mut groups: Vec<(Level, Vec<Lit>)> = Vec::new();
            let mut lits = c.lits.clone();
            lits.sort_by_key(|&l| pcnf.lit_level(l));
            for l in lits {
                let lvl = pcnf.lit_level(l);
                match groups.last_mut() {
                    Some((k, v)) if *k == lvl => v.push(l),
                    _ => groups.push((lvl, vec![l])),
                }
            }
            max_level[c.id] = groups.last().map(|g| g.0).unwrap_or(0);
            by_level[c.id] = groups;
        }
        let innermost_forall = (1..=n).rev().find(|&k| pcnf.quantifier(k) == Quantifier::Forall);
        let builder = config.proof_logging.then(|| ProofBuilder::new(pcnf));
        let mut levels = Vec::with_capacity(n + 1);
        levels.push(None);
        let mut solver = Solver {
            pcnf,
            by_level,
            max_level,
            levels: Vec::new(),
            innermost_forall,
            builder,
            next_fresh: pcnf.max_var() + 1,
            stats: Stats {
                sat_calls: vec![0; n + 1],
                ..Stats::default()
            },
            trace: Vec::new(),
            start: Instant::now(),
            config,
        };
        for k in 1..=n {
            let state = match pcnf.quantifier(k) {
                Quantifier::Exists => LevelState::Exists(solver.build_exists(k)),
                Quantifier::Forall => LevelState::Forall(solver.build_forall(k)),
            };
            levels.push(Some(state));
        }
        solver.levels = levels;
        solver
    }

    fn new_oracle(&self, k: Level) -> Box<dyn SatOracle> {
        let seed = if self.config.seed == 0 {
            0
        } else {
            self.config.seed.wrapping_add(k as u64)
        };
        Box::new(CdclSolver::with_seed(seed))
    }

    fn lits_at(&self, i: ClauseId, k: Level) -> &[Lit] {
        self.by_level[i]
            .iter()
            .find(|(l, _)| *l == k)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }

    fn build_exists(&self, k: Level) -> ExistsLevel {
        let m = self.pcnf.num_clauses();
        let mut sat = self.new_oracle(k);
        let mut vars = HashMap::new();
        for &v in &self.pcnf.block(k).vars {
            vars.insert(v, sat.new_var());
        }
        let mut a = vec![None; m + 1];
        let mut b = vec![None; m + 1];
        for i in 1..=m {
            let lits = self.lits_at(i, k);
            if lits.is_empty() {
                continue;
            }
            let bi = sat.new_var();
            b[i] = Some(bi);
            let mut clause = vec![bi.pos()];
            if self.max_level[i] > k {
                let ai = sat.new_var();
                a[i] = Some(ai);
                clause.push(ai.pos());
            }
            clause.extend(lits.iter().map(|&l| sat_lit(&vars, l)));
            sat.add_clause(&clause);
        }
        ExistsLevel {
            sat,
            vars,
            a,
            b,
            candidates: Vec::new(),
            groups: HashMap::new(),
            expanded: Vec::new(),
            expanded_set: HashSet::new(),
            copies: HashMap::new(),
        }
    }

    fn build_forall(&self, k: Level) -> ForallLevel {
        let m = self.pcnf.num_clauses();
        let mut sat = self.new_oracle(k);
        let mut vars = HashMap::new();
        for &v in &self.pcnf.block(k).vars {
            vars.insert(v, sat.new_var());
        }
        let mut r = vec![None; m + 1];
        let mut relevant = Vec::new();
        for i in 1..=m {
            if self.max_level[i] < k {
                continue;
            }
            let ri = sat.new_var();
            r[i] = Some(ri);
            relevant.push(i);
            for &l in self.lits_at(i, k) {
                sat.add_clause(&[ri.neg(), !sat_lit(&vars, l)]);
            }
        }
        let query: Vec<Lit> = relevant.iter().map(|&i| r[i].unwrap().pos()).collect();
        sat.add_clause(&query);
        ForallLevel { sat, vars, r, relevant }
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    fn check_limits(&self) -> Result<(), SolveError> {
        let limits = &self.config.limits;
        if limits.time.is_some_and(|t| self.start.elapsed() > t) {
            return Err(SolveError::TimeLimit);
        }
        if limits.conflicts.is_some_and(|c| self.stats.conflicts > c) {
            return Err(SolveError::ConflictLimit);
        }
        if limits.iterations.is_some_and(|c| self.stats.iterations > c) {
            return Err(SolveError::IterationLimit);
        }
        Ok(())
    }

    fn call_sat(&mut self, k: Level, assumptions: &[Lit]) -> SatOutcome {
        self.stats.sat_calls[k] += 1;
        let sat = match self.levels[k].as_mut().expect("level state") {
            LevelState::Exists(e) => &mut e.sat,
            LevelState::Forall(f) => &mut f.sat,
        };
        let before = sat.conflicts();
        let out = sat.solve(assumptions);
        self.stats.conflicts += sat.conflicts() - before;
        out
    }

    fn exists(&mut self, k: Level) -> &mut ExistsLevel {
        match self.levels[k].as_mut() {
            Some(LevelState::Exists(e)) => e,
            _ => panic!("level {k} is not existential"),
        }
    }

    fn forall(&mut self, k: Level) -> &mut ForallLevel {
        match self.levels[k].as_mut() {
            Some(LevelState::Forall(f)) => f,
            _ => panic!("level {k} is not universal"),
        }
    }

    /// Decides the formula.
    pub fn solve(mut self) -> Result<SolveOutcome, SolveError> {
        let pcnf = self.pcnf;
        if let Some(empty) = pcnf.clauses().iter().find(|c| c.is_empty()) {
            let proof = self.builder.take().map(|mut b| {
                let root = b.init(empty.id, 0).expect("empty clause initialises at level 0");
                b.finish(root)
            });
            return Ok(self.finish(false, proof));
        }
        if pcnf.num_clauses() == 0 {
            return Ok(self.finish(true, None));
        }
        let all: Vec<ClauseId> = (1..=pcnf.num_clauses()).collect();
        match self.solve_level(1, &all)? {
            LevelOutcome::Sat => Ok(self.finish(true, None)),
            LevelOutcome::Unsat { node, .. } => {
                let proof = match (self.builder.take(), node) {
                    (Some(b), Some(root)) => Some(b.finish(root).prune()),
                    _ => None,
                };
                Ok(self.finish(false, proof))
            }
        }
    }

    fn finish(mut self, verdict: bool, proof: Option<RedResProof>) -> SolveOutcome {
        self.stats.proof_size = proof.as_ref().map(|p| p.size());
        SolveOutcome {
            verdict,
            proof,
            stats: self.stats,
            trace: self.trace,
        }
    }

    /// Plays the subgame from level `k` with the given obligations.
    pub fn solve_level(&mut self, k: Level, obligations: &[ClauseId]) -> Result<LevelOutcome, SolveError> {
        match self.pcnf.quantifier(k) {
            Quantifier::Exists => self.solve_exists(k, obligations),
            Quantifier::Forall => self.solve_forall(k, obligations),
        }
    }

    pub fn solve_exists(&mut self, k: Level, obligations: &[ClauseId]) -> Result<LevelOutcome, SolveError> {
        if obligations.is_empty() {
            return Ok(LevelOutcome::Sat);
        }
        let n = self.pcnf.num_levels();
        let in_o: HashSet<ClauseId> = obligations.iter().copied().collect();
        loop {
            self.check_limits()?;
            self.stats.iterations += 1;
            let assumptions: Vec<Lit> = {
                let e = self.exists(k);
                (1..e.b.len())
                    .filter_map(|i| e.b[i].map(|b| if in_o.contains(&i) { b.neg() } else { b.pos() }))
                    .collect()
            };
            match self.call_sat(k, &assumptions) {
                SatOutcome::Unsat(core) => {
                    let e = self.exists(k);
                    let failed: HashSet<Lit> = core.into_iter().collect();
                    let mut p: Vec<ClauseId> = obligations
                        .iter()
                        .copied()
                        .filter(|&i| e.b[i].is_some_and(|b| failed.contains(&b.neg())))
                        .collect();
                    p.sort_unstable();
                    let node = if self.builder.is_some() {
                        let (core, node) = self.prove_exists(k, &p);
                        p = core;
                        Some(node)
                    } else {
                        None
                    };
                    return Ok(LevelOutcome::Unsat {
                        core: p,
                        node,
                        moves: None,
                    });
                }
                SatOutcome::Sat(model) => {
                    let pending: Vec<ClauseId> = {
                        let Some(LevelState::Exists(e)) = self.levels[k].as_ref() else {
                            unreachable!()
                        };
                        let vars = &e.vars;
                        obligations
                            .iter()
                            .copied()
                            .filter(|&i| {
                                !self.by_level[i]
                                    .iter()
                                    .find(|(l, _)| *l == k)
                                    .is_some_and(|(_, lits)| lits.iter().any(|&l| model.lit_true(sat_lit(vars, l))))
                            })
                            .collect()
                    };
                    if k == n || pending.is_empty() {
                        return Ok(LevelOutcome::Sat);
                    }
                    match self.solve_level(k + 1, &pending)? {
                        LevelOutcome::Sat => return Ok(LevelOutcome::Sat),
                        LevelOutcome::Unsat { core, node, moves } => {
                            self.refine(k, &core, node);
                            let expansion_level = self.config.use_expansion && self.innermost_forall == Some(k + 1);
                            if let (true, Some(beta)) = (expansion_level, moves) {
                                self.refine_expansion(k, beta);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn solve_forall(&mut self, k: Level, obligations: &[ClauseId]) -> Result<LevelOutcome, SolveError> {
        if obligations.is_empty() {
            return Ok(LevelOutcome::Sat);
        }
        let in_o: HashSet<ClauseId> = obligations.iter().copied().collect();
        loop {
            self.check_limits()?;
            self.stats.iterations += 1;
            let assumptions: Vec<Lit> = {
                let f = self.forall(k);
                f.relevant
                    .iter()
                    .filter(|i| !in_o.contains(i))
                    .map(|&i| f.r[i].unwrap().neg())
                    .collect()
            };
            let model = match self.call_sat(k, &assumptions) {
                SatOutcome::Unsat(_) => return Ok(LevelOutcome::Sat),
                SatOutcome::Sat(model) => model,
            };
            let (beta, pending) = {
                let f = self.forall(k);
                let beta: Assignment = f.vars.iter().map(|(&v, &s)| (v, model.value(s))).collect();
                let pending: Vec<ClauseId> = obligations
                    .iter()
                    .copied()
                    .filter(|&i| !beta.satisfies_any(self.lits_at(i, k)))
                    .collect();
                (beta, pending)
            };
            if let Some(&i) = pending.iter().find(|&&i| self.max_level[i] <= k) {
                let node = self.builder.as_mut().map(|b| {
                    let init = b.init(i, k).expect("clause ends at this level");
                    b.forall_red(init).expect("falsified clause is not tautological here")
                });
                return Ok(LevelOutcome::Unsat {
                    core: vec![i],
                    node,
                    moves: Some(beta),
                });
            }
            match self.solve_level(k + 1, &pending)? {
                LevelOutcome::Sat => {
                    self.stats.universal += 1;
                    let pend: HashSet<ClauseId> = pending.iter().copied().collect();
                    let f = self.forall(k);
                    let clause: Vec<Lit> = f
                        .relevant
                        .iter()
                        .filter(|i| !pend.contains(i))
                        .map(|&i| f.r[i].unwrap().pos())
                        .collect();
                    f.sat.add_clause(&clause);
                    self.trace.push(TraceEvent::UniversalRefinement {
                        level: k,
                        witness: pending,
                    });
                }
                LevelOutcome::Unsat { core, node, .. } => {
                    let node = match (self.builder.as_mut(), node) {
                        (Some(b), Some(n)) => Some(b.forall_red(n).expect("refuted core is falsified by the move")),
                        _ => None,
                    };
                    return Ok(LevelOutcome::Unsat {
                        core,
                        node,
                        moves: Some(beta),
                    });
                }
            }
        }
    }

    /// Creates `a_i`/`b_i` for a clause without literals at level `k`.
    fn ensure_selectors(&mut self, k: Level, i: ClauseId) {
        let deep = self.max_level[i] > k;
        let e = self.exists(k);
        if e.b[i].is_some() {
            return;
        }
        let bi = e.sat.new_var();
        e.b[i] = Some(bi);
        if deep {
            let ai = e.sat.new_var();
            e.a[i] = Some(ai);
            e.sat.add_clause(&[ai.pos(), bi.pos()]);
        } else {
            e.sat.add_clause(&[bi.pos()]);
        }
    }

    fn a_lit(&mut self, k: Level, i: ClauseId) -> Var {
        self.ensure_selectors(k, i);
        self.exists(k).a[i].expect("clause has literals beyond the level")
    }

    fn refine(&mut self, k: Level, core: &[ClauseId], node: Option<NodeId>) {
        let expansion_level = self.config.use_expansion && self.innermost_forall == Some(k + 1);
        let strengthen = self.config.use_strengthen && !(expansion_level && self.config.proof_logging);
        if strengthen {
            self.refine_strengthen(k, core, node);
        } else {
            self.refine_clausal(k, core, node);
        }
    }

    /// Learns that some clause of `core` must be satisfied at level `k` or
    /// earlier.
    fn refine_clausal(&mut self, k: Level, core: &[ClauseId], node: Option<NodeId>) {
        let clause: Vec<Lit> = core.iter().map(|&i| self.a_lit(k, i).neg()).collect();
        let e = self.exists(k);
        e.sat.add_clause(&clause);
        if let Some(node) = node {
            e.candidates.push(Candidate {
                clauses: core.to_vec(),
                node,
            });
        }
        self.stats.clausal += 1;
        self.trace.push(TraceEvent::Refinement {
            level: k,
            kind: RefinementKind::Clausal,
            core: core.to_vec(),
        });
    }

    /// Clauses whose literals beyond `k` are a subset of those of `i`.
    fn group(&mut self, k: Level, i: ClauseId) -> Vec<ClauseId> {
        if let Some(g) = self.exists(k).groups.get(&i) {
            return g.clone();
        }
        let inner = |s: &Self, c: ClauseId| -> Vec<Lit> {
            s.by_level[c]
                .iter()
                .filter(|(l, _)| *l > k)
                .flat_map(|(_, v)| v.iter().copied())
                .collect()
        };
        let mine: HashSet<Lit> = inner(self, i).into_iter().collect();
        let g: Vec<ClauseId> = (1..=self.pcnf.num_clauses())
            .filter(|&j| self.max_level[j] > k && inner(self, j).iter().all(|l| mine.contains(l)))
            .collect();
        self.exists(k).groups.insert(i, g.clone());
        g
    }

    fn refine_strengthen(&mut self, k: Level, core: &[ClauseId], node: Option<NodeId>) {
        let groups: Vec<Vec<ClauseId>> = core.iter().map(|&i| self.group(k, i)).collect();
        self.trace.push(TraceEvent::StrengthenGroups {
            level: k,
            groups: groups.clone(),
        });
        if groups.iter().all(|g| g.len() <= 1) {
            self.refine_clausal(k, core, node);
            return;
        }
        let mut learned = Vec::new();
        for (&i, g) in core.iter().zip(&groups) {
            if g.len() <= 1 {
                learned.push(self.a_lit(k, i).neg());
                continue;
            }
            let s = self.exists(k).sat.new_var();
            for &j in g {
                let aj = self.a_lit(k, j);
                self.exists(k).sat.add_clause(&[s.neg(), aj.neg()]);
            }
            learned.push(s.pos());
        }
        self.exists(k).sat.add_clause(&learned);

        if let (Some(mut cur), Some(_)) = (node, self.builder.as_ref()) {
            let mut new_candidates = Vec::new();
            for (&i, g) in core.iter().zip(&groups) {
                if g.len() <= 1 {
                    continue;
                }
                let fresh = Var::new(self.next_fresh);
                self.next_fresh += 1;
                let b = self.builder.as_mut().expect("proof logging");
                let (main, members) = b
                    .strengthen(cur, i, g.clone(), fresh)
                    .expect("group satisfies the subset condition");
                for (&j, &m) in g.iter().zip(&members) {
                    new_candidates.push(Candidate { clauses: vec![j], node: m });
                }
                cur = main;
            }
            let main_clauses = self.builder.as_ref().expect("proof logging").node(cur).clauses.clone();
            new_candidates.push(Candidate {
                clauses: main_clauses,
                node: cur,
            });
            self.exists(k).candidates.extend(new_candidates);
        }
        self.stats.strengthen += 1;
        self.trace.push(TraceEvent::Refinement {
            level: k,
            kind: RefinementKind::Strengthen,
            core: core.to_vec(),
        });
    }

    /// Adds the copy of every clause not satisfied by the universal move
    /// `beta` at level `k + 1`, with the innermost existential variables
    /// renamed for `beta`.
    fn refine_expansion(&mut self, k: Level, beta: Assignment) {
        if self.exists(k).expanded_set.contains(&beta) {
            return;
        }
        let m = self.pcnf.num_clauses();
        for i in 1..=m {
            if self.max_level[i] <= k || beta.satisfies_any(self.lits_at(i, k + 1)) {
                continue;
            }
            self.ensure_selectors(k, i);
            let outer: Vec<Lit> = self.lits_at(i, k).to_vec();
            let inner: Vec<Lit> = self.by_level[i]
                .iter()
                .filter(|(l, _)| *l > k + 1)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            let e = self.exists(k);
            let mut clause = vec![e.b[i].expect("selector exists").pos()];
            clause.extend(outer.iter().map(|&l| sat_lit(&e.vars, l)));
            for l in inner {
                let key = (l.var(), beta.clone());
                let v = match e.copies.get(&key) {
                    Some(&v) => v,
                    None => {
                        let v = e.sat.new_var();
                        e.copies.insert(key, v);
                        v
                    }
                };
                clause.push(Lit::new(v, l.is_negated()));
            }
            e.sat.add_clause(&clause);
        }
        let e = self.exists(k);
        e.expanded_set.insert(beta.clone());
        e.expanded.push(beta.clone());
        self.stats.expansion += 1;
        self.trace.push(TraceEvent::Expansion {
            level: k,
            assignment: beta,
        });
    }

    /// Builds the proof object refuting core `p` at existential level `k`;
    /// returns the clause set it concludes and its node.
    fn prove_exists(&mut self, k: Level, p: &[ClauseId]) -> (Vec<ClauseId>, NodeId) {
        let has_copies = !self.exists(k).expanded.is_empty();
        if has_copies {
            if let Some(out) = self.prove_by_expansion(k, p) {
                return out;
            }
        }
        self.prove_by_resolution(k, p)
            .expect("abstraction core is refuted by its premises")
    }

    fn prove_by_resolution(&mut self, k: Level, p: &[ClauseId]) -> Option<(Vec<ClauseId>, NodeId)> {
        let in_p: HashSet<ClauseId> = p.iter().copied().collect();
        let mut premises: Vec<NodeId> = Vec::new();
        for &i in p {
            if self.max_level[i] <= k {
                let b = self.builder.as_mut()?;
                premises.push(b.init(i, k).ok()?);
            }
        }
        let mut seen: HashSet<NodeId> = premises.iter().copied().collect();
        for c in &self.exists(k).candidates {
            if c.clauses.iter().all(|i| in_p.contains(i)) && seen.insert(c.node) {
                premises.push(c.node);
            }
        }
        let b = self.builder.as_mut()?;
        let inputs: Vec<Vec<Lit>> = premises.iter().map(|&n| b.node(n).lits(self.pcnf)).collect();
        let mut pi = extract_resolution_proof(&inputs).ok()?;
        let used = pi.leaf_inputs();
        let index: HashMap<usize, usize> = used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        pi.remap_inputs(|old| index[&old]);
        let used_nodes: Vec<NodeId> = used.iter().map(|&u| premises[u]).collect();
        let node = b.res(used_nodes, pi).ok()?;
        Some((b.node(node).clauses.clone(), node))
    }

    fn prove_by_expansion(&mut self, k: Level, p: &[ClauseId]) -> Option<(Vec<ClauseId>, NodeId)> {
        let pcnf = self.pcnf;
        let paths: Vec<Vec<Assignment>> = self.exists(k).expanded.iter().map(|b| vec![b.clone()]).collect();
        let tree = ExpansionTree::from_paths(&paths);
        let fragment = Fragment::from_pcnf(pcnf, k, p).ok()?;
        let exp = expand_tree(&tree, &fragment).ok()?;
        let pi = extract_resolution_proof(&exp.clauses).ok()?;

        // Keep only the clauses and paths the refutation uses.
        let leaves = pi.leaf_inputs();
        let mut clauses: Vec<ClauseId> = leaves.iter().map(|&l| exp.origins[l].1).collect();
        clauses.sort_unstable();
        clauses.dedup();
        let mut used_paths: Vec<usize> = leaves.iter().map(|&l| exp.origins[l].0).collect();
        used_paths.sort_unstable();
        used_paths.dedup();
        let tree = ExpansionTree::from_paths(&used_paths.iter().map(|&i| paths[i].clone()).collect::<Vec<_>>());
        let fragment = Fragment::from_pcnf(pcnf, k, &clauses).ok()?;
        let exp = expand_tree(&tree, &fragment).ok()?;
        let pi = extract_resolution_proof(&exp.clauses).ok()?;

        let b = self.builder.as_mut()?;
        let node = b.exp_res(k, clauses.clone(), tree, pi).ok()?;
        Some((clauses, node))
    }
}

/// Decides `pcnf` under `config`.
pub fn solve(pcnf: &Pcnf, config: SolverConfig) -> Result<SolveOutcome, SolveError> {
    Solver::new(pcnf, config).solve()
}
