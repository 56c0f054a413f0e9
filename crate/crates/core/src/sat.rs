//! Incremental CDCL SAT solver with assumptions, failed-assumption cores and
//! optional resolution-chain logging, plus propositional resolution proofs.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::formula::{canonical, Assignment, Lit, Var};

/// A satisfying assignment over every variable of the instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    values: Vec<bool>,
}

impl Model {
    pub fn value(&self, var: Var) -> bool {
        self.values.get(var.index()).copied().unwrap_or(false)
    }

    pub fn lit_true(&self, lit: Lit) -> bool {
        lit.eval(self.value(lit.var()))
    }

    pub fn num_vars(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// Restriction of the model to `vars`.
    pub fn restrict<I: IntoIterator<Item = Var>>(&self, vars: I) -> Assignment {
        vars.into_iter().map(|v| (v, self.value(v))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatOutcome {
    Sat(Model),
    /// Unsatisfiable under the assumptions. The core lists the failed
    /// assumption literals; it is empty when the clauses alone are
    /// unsatisfiable.
    Unsat(Vec<Lit>),
}

impl SatOutcome {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatOutcome::Sat(_))
    }
}

/// Interface of an incremental SAT oracle.
pub trait SatOracle {
    fn new_var(&mut self) -> Var;
    fn num_vars(&self) -> u32;
    fn add_clause(&mut self, lits: &[Lit]);
    fn solve(&mut self, assumptions: &[Lit]) -> SatOutcome;
    /// Total conflicts encountered over the lifetime of the instance.
    fn conflicts(&self) -> u64;
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Value {
    True,
    False,
    Undef,
}

#[derive(Clone, Copy, Debug)]
struct Watcher {
    cref: u32,
    blocker: Lit,
}

#[derive(Debug)]
struct StoredClause {
    lits: Vec<Lit>,
    learnt: bool,
    deleted: bool,
    activity: f64,
    proof_id: u32,
}

#[derive(Clone, Debug)]
enum LogEntry {
    Input(usize),
    Derived { first: u32, steps: Vec<(Var, u32)> },
}

const NO_REASON: u32 = u32::MAX;

/// Conflict-driven clause-learning solver.
pub struct CdclSolver {
    num_vars: u32,
    clauses: Vec<StoredClause>,
    watches: Vec<Vec<Watcher>>,
    assigns: Vec<Value>,
    level: Vec<u32>,
    reason: Vec<u32>,
    polarity: Vec<bool>,
    activity: Vec<f64>,
    heap: Vec<u32>,
    heap_pos: Vec<usize>,
    seen: Vec<bool>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    ok: bool,
    var_inc: f64,
    cla_inc: f64,
    num_learnts: usize,
    max_learnts: f64,
    conflicts: u64,
    restarts: u32,
    inputs_added: usize,
    rng: Option<ChaCha8Rng>,
    log: Option<Vec<LogEntry>>,
    empty_clause: Option<u32>,
}

const HEAP_NONE: usize = usize::MAX;

impl Default for CdclSolver {
    fn default() -> Self {
        CdclSolver::new()
    }
}

impl CdclSolver {
    pub fn new() -> CdclSolver {
        CdclSolver {
            num_vars: 0,
            clauses: Vec::new(),
            watches: vec![Vec::new(), Vec::new()],
            assigns: vec![Value::Undef],
            level: vec![0],
            reason: vec![NO_REASON],
            polarity: vec![false],
            activity: vec![0.0],
            heap: Vec::new(),
            heap_pos: vec![HEAP_NONE],
            seen: vec![false],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            ok: true,
            var_inc: 1.0,
            cla_inc: 1.0,
            num_learnts: 0,
            max_learnts: 2000.0,
            conflicts: 0,
            restarts: 0,
            inputs_added: 0,
            rng: None,
            log: None,
            empty_clause: None,
        }
    }

    /// A solver whose initial variable activities are perturbed by `seed`.
    /// Seed 0 leaves them untouched.
    pub fn with_seed(seed: u64) -> CdclSolver {
        let mut s = CdclSolver::new();
        if seed != 0 {
            s.rng = Some(ChaCha8Rng::seed_from_u64(seed));
        }
        s
    }

    /// A solver that records the resolution chain of every learnt clause.
    pub fn with_proof_logging() -> CdclSolver {
        let mut s = CdclSolver::new();
        s.log = Some(Vec::new());
        s
    }

    fn proof_logging(&self) -> bool {
        self.log.is_some()
    }

    pub fn ensure_vars(&mut self, n: u32) {
        while self.num_vars < n {
            self.new_var();
        }
    }

    fn value(&self, lit: Lit) -> Value {
        match self.assigns[lit.var().index()] {
            Value::Undef => Value::Undef,
            Value::True if lit.is_negated() => Value::False,
            Value::False if lit.is_negated() => Value::True,
            v => v,
        }
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn log_entry(&mut self, entry: LogEntry) -> u32 {
        match &mut self.log {
            Some(log) => {
                log.push(entry);
                (log.len() - 1) as u32
            }
            None => 0,
        }
    }

    fn store(&mut self, lits: Vec<Lit>, learnt: bool, proof_id: u32) -> u32 {
        self.clauses.push(StoredClause {
            lits,
            learnt,
            deleted: false,
            activity: 0.0,
            proof_id,
        });
        (self.clauses.len() - 1) as u32
    }

    fn attach(&mut self, cref: u32) {
        let c = &self.clauses[cref as usize].lits;
        let (a, b) = (c[0], c[1]);
        self.watches[(!a).code()].push(Watcher { cref, blocker: b });
        self.watches[(!b).code()].push(Watcher { cref, blocker: a });
    }

    fn enqueue(&mut self, lit: Lit, reason: u32) {
        let v = lit.var().index();
        self.assigns[v] = if lit.is_negated() { Value::False } else { Value::True };
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = reason;
        self.trail.push(lit);
    }

    fn add_input(&mut self, lits: &[Lit]) {
        let index = self.inputs_added;
        self.inputs_added += 1;
        if !self.ok {
            return;
        }
        let mut lits = canonical(lits.to_vec());
        if let Some(max) = lits.iter().map(|l| l.var().id()).max() {
            self.ensure_vars(max);
        }
        let set: HashSet<Lit> = lits.iter().copied().collect();
        if lits.iter().any(|&l| set.contains(&!l)) {
            return;
        }
        if lits.iter().any(|&l| self.value(l) == Value::True && self.level[l.var().index()] == 0) {
            return;
        }
        if !self.proof_logging() {
            lits.retain(|&l| self.value(l) != Value::False);
        }
        // Non-false literals first so the watches land on them.
        lits.sort_by_key(|&l| self.value(l) == Value::False);
        let proof_id = self.log_entry(LogEntry::Input(index));
        let open = lits.iter().filter(|&&l| self.value(l) != Value::False).count();
        let cref = self.store(lits, false, proof_id);
        match open {
            0 => {
                self.ok = false;
                self.derive_empty(cref);
            }
            1 => {
                let unit = self.clauses[cref as usize].lits[0];
                self.enqueue(unit, cref);
                if self.clauses[cref as usize].lits.len() >= 2 {
                    self.attach(cref);
                }
            }
            _ => self.attach(cref),
        }
    }

    /// Records a derivation of the empty clause from a clause falsified at
    /// level 0 by resolving with the reasons along the trail.
    fn derive_empty(&mut self, confl: u32) {
        if !self.proof_logging() {
            return;
        }
        let first = self.clauses[confl as usize].proof_id;
        if self.clauses[confl as usize].lits.is_empty() {
            self.empty_clause = Some(first);
            return;
        }
        for &l in &self.clauses[confl as usize].lits {
            self.seen[l.var().index()] = true;
        }
        let mut steps = Vec::new();
        for i in (0..self.trail.len()).rev() {
            let p = self.trail[i];
            let v = p.var().index();
            if !self.seen[v] {
                continue;
            }
            self.seen[v] = false;
            let r = self.reason[v];
            debug_assert_ne!(r, NO_REASON, "level-0 literal without reason");
            steps.push((p.var(), self.clauses[r as usize].proof_id));
            for &q in &self.clauses[r as usize].lits[1..] {
                self.seen[q.var().index()] = true;
            }
        }
        let id = self.log_entry(LogEntry::Derived { first, steps });
        self.empty_clause = Some(id);
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[p.code()]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value(w.blocker) == Value::True {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let cref = w.cref as usize;
                if self.clauses[cref].deleted {
                    continue;
                }
                {
                    let c = &mut self.clauses[cref].lits;
                    if c[0] == false_lit {
                        c.swap(0, 1);
                    }
                }
                let first = self.clauses[cref].lits[0];
                let nw = Watcher {
                    cref: w.cref,
                    blocker: first,
                };
                if first != w.blocker && self.value(first) == Value::True {
                    ws[j] = nw;
                    j += 1;
                    continue;
                }
                let len = self.clauses[cref].lits.len();
                let mut moved = false;
                for k in 2..len {
                    let l = self.clauses[cref].lits[k];
                    if self.value(l) != Value::False {
                        self.clauses[cref].lits.swap(1, k);
                        self.watches[(!l).code()].push(nw);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = nw;
                j += 1;
                if self.value(first) == Value::False {
                    conflict = Some(w.cref);
                    self.qhead = self.trail.len();
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, w.cref);
                }
            }
            ws.truncate(j);
            // Watches pushed onto p's list during the scan are kept.
            let added = std::mem::take(&mut self.watches[p.code()]);
            ws.extend(added);
            self.watches[p.code()] = ws;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    fn analyze(&mut self, mut confl: u32) -> (Vec<Lit>, usize, Option<LogEntry>) {
        let current = self.decision_level() as u32;
        let logging = self.proof_logging();
        let first = self.clauses[confl as usize].proof_id;
        let mut steps = Vec::new();
        let mut learnt = vec![Lit::from_code(0)];
        let mut path = 0usize;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        loop {
            if self.clauses[confl as usize].learnt {
                self.bump_clause(confl);
            }
            let start = usize::from(p.is_some());
            let len = self.clauses[confl as usize].lits.len();
            for k in start..len {
                let q = self.clauses[confl as usize].lits[k];
                let v = q.var().index();
                if self.seen[v] {
                    continue;
                }
                let lvl = self.level[v];
                if lvl == current {
                    self.seen[v] = true;
                    self.bump_var(q.var());
                    path += 1;
                } else if lvl > 0 {
                    self.seen[v] = true;
                    self.bump_var(q.var());
                    learnt.push(q);
                } else if logging {
                    self.seen[v] = true;
                    learnt.push(q);
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var().index()] {
                    break;
                }
            }
            let lit = self.trail[idx];
            p = Some(lit);
            self.seen[lit.var().index()] = false;
            path -= 1;
            if path == 0 {
                break;
            }
            confl = self.reason[lit.var().index()];
            steps.push((lit.var(), self.clauses[confl as usize].proof_id));
        }
        learnt[0] = !p.expect("conflict analysis found no UIP");

        if !logging {
            let mut keep = vec![learnt[0]];
            for &q in &learnt[1..] {
                let r = self.reason[q.var().index()];
                let redundant = r != NO_REASON
                    && self.clauses[r as usize].lits[1..].iter().all(|&x| {
                        self.seen[x.var().index()] || self.level[x.var().index()] == 0
                    });
                if !redundant {
                    keep.push(q);
                }
            }
            for &q in &learnt {
                self.seen[q.var().index()] = false;
            }
            learnt = keep;
        } else {
            for &q in &learnt {
                self.seen[q.var().index()] = false;
            }
        }

        let mut bt = 0usize;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for k in 2..learnt.len() {
                if self.level[learnt[k].var().index()] > self.level[learnt[max_i].var().index()] {
                    max_i = k;
                }
            }
            learnt.swap(1, max_i);
            bt = self.level[learnt[1].var().index()] as usize;
        }
        let entry = logging.then_some(LogEntry::Derived { first, steps });
        (learnt, bt, entry)
    }

    /// Collects the assumptions responsible for falsifying assumption `p`.
    fn analyze_final(&mut self, p: Lit) -> Vec<Lit> {
        let mut core = vec![p];
        if self.decision_level() == 0 {
            return core;
        }
        self.seen[p.var().index()] = true;
        for i in (self.trail_lim[0]..self.trail.len()).rev() {
            let x = self.trail[i];
            let v = x.var().index();
            if !self.seen[v] {
                continue;
            }
            let r = self.reason[v];
            if r == NO_REASON {
                core.push(x);
            } else {
                for k in 1..self.clauses[r as usize].lits.len() {
                    let q = self.clauses[r as usize].lits[k];
                    if self.level[q.var().index()] > 0 {
                        self.seen[q.var().index()] = true;
                    }
                }
            }
            self.seen[v] = false;
        }
        self.seen[p.var().index()] = false;
        core.sort_unstable();
        core.dedup();
        core
    }

    fn cancel_until(&mut self, lvl: usize) {
        if self.decision_level() <= lvl {
            return;
        }
        let lim = self.trail_lim[lvl];
        for i in (lim..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var().index();
            self.assigns[v] = Value::Undef;
            self.reason[v] = NO_REASON;
            self.polarity[v] = !l.is_negated();
            self.heap_insert(v as u32);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(lvl);
        self.qhead = lim;
    }

    fn bump_var(&mut self, var: Var) {
        let v = var.index();
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in self.activity.iter_mut() {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        if self.heap_pos[v] != HEAP_NONE {
            self.heap_up(self.heap_pos[v]);
        }
    }

    fn bump_clause(&mut self, cref: u32) {
        let c = &mut self.clauses[cref as usize];
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for c in self.clauses.iter_mut().filter(|c| c.learnt) {
                c.activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn locked(&self, cref: u32) -> bool {
        let c = &self.clauses[cref as usize];
        let v = c.lits[0].var().index();
        self.reason[v] == cref && self.value(c.lits[0]) == Value::True
    }

    fn reduce_db(&mut self) {
        let mut learnts: Vec<u32> = (0..self.clauses.len() as u32)
            .filter(|&c| {
                let sc = &self.clauses[c as usize];
                sc.learnt && !sc.deleted && sc.lits.len() > 2
            })
            .collect();
        learnts.sort_by(|&a, &b| {
            self.clauses[a as usize]
                .activity
                .total_cmp(&self.clauses[b as usize].activity)
        });
        let half = learnts.len() / 2;
        for &c in &learnts[..half] {
            if !self.locked(c) {
                let sc = &mut self.clauses[c as usize];
                sc.deleted = true;
                sc.lits = Vec::new();
                self.num_learnts -= 1;
            }
        }
        // Drop stale watchers eagerly so deleted clauses are never inspected.
        for ws in self.watches.iter_mut() {
            ws.retain(|w| !self.clauses[w.cref as usize].deleted);
        }
    }

    fn heap_less(&self, a: u32, b: u32) -> bool {
        self.activity[a as usize] > self.activity[b as usize]
    }

    fn heap_up(&mut self, mut i: usize) {
        let x = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !self.heap_less(x, self.heap[parent]) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.heap_pos[self.heap[i] as usize] = i;
            i = parent;
        }
        self.heap[i] = x;
        self.heap_pos[x as usize] = i;
    }

    fn heap_down(&mut self, mut i: usize) {
        let x = self.heap[i];
        loop {
            let left = 2 * i + 1;
            if left >= self.heap.len() {
                break;
            }
            let right = left + 1;
            let child = if right < self.heap.len() && self.heap_less(self.heap[right], self.heap[left]) {
                right
            } else {
                left
            };
            if !self.heap_less(self.heap[child], x) {
                break;
            }
            self.heap[i] = self.heap[child];
            self.heap_pos[self.heap[i] as usize] = i;
            i = child;
        }
        self.heap[i] = x;
        self.heap_pos[x as usize] = i;
    }

    fn heap_insert(&mut self, v: u32) {
        if self.heap_pos[v as usize] != HEAP_NONE {
            return;
        }
        self.heap.push(v);
        let i = self.heap.len() - 1;
        self.heap_pos[v as usize] = i;
        self.heap_up(i);
    }

    fn heap_pop(&mut self) -> Option<u32> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().expect("heap is non-empty");
        self.heap_pos[top as usize] = HEAP_NONE;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.heap_pos[last as usize] = 0;
            self.heap_down(0);
        }
        Some(top)
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap_pop() {
            if self.assigns[v as usize] == Value::Undef {
                return Some(Lit::new(Var::new(v), !self.polarity[v as usize]));
            }
        }
        None
    }

    fn model(&self) -> Model {
        let values = self.assigns.iter().map(|&v| v == Value::True).collect();
        Model { values }
    }

    fn search(&mut self, budget: u64, assumptions: &[Lit]) -> Option<SatOutcome> {
        let mut local = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                local += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    self.derive_empty(confl);
                    return Some(SatOutcome::Unsat(Vec::new()));
                }
                let (learnt, bt, entry) = self.analyze(confl);
                self.cancel_until(bt);
                let proof_id = match entry {
                    Some(e) => self.log_entry(e),
                    None => 0,
                };
                let asserting = learnt[0];
                let long = learnt.len() >= 2;
                let cref = self.store(learnt, true, proof_id);
                if long {
                    self.attach(cref);
                    self.num_learnts += 1;
                    self.bump_clause(cref);
                }
                self.enqueue(asserting, cref);
                self.var_inc /= 0.95;
                self.cla_inc /= 0.999;
            } else {
                if local >= budget {
                    self.cancel_until(0);
                    return None;
                }
                if self.num_learnts as f64 >= self.max_learnts + self.trail.len() as f64 {
                    self.reduce_db();
                    self.max_learnts *= 1.1;
                }
                let mut next = None;
                while self.decision_level() < assumptions.len() {
                    let p = assumptions[self.decision_level()];
                    match self.value(p) {
                        Value::True => self.trail_lim.push(self.trail.len()),
                        Value::False => return Some(SatOutcome::Unsat(self.analyze_final(p))),
                        Value::Undef => {
                            next = Some(p);
                            break;
                        }
                    }
                }
                let next = match next {
                    Some(p) => p,
                    None => match self.pick_branch() {
                        Some(p) => p,
                        None => return Some(SatOutcome::Sat(self.model())),
                    },
                };
                self.trail_lim.push(self.trail.len());
                self.enqueue(next, NO_REASON);
            }
        }
    }

    /// Builds the resolution proof of the empty clause, if one was derived.
    fn resolution_proof(&self, inputs: &[Vec<Lit>]) -> Option<ResolutionProof> {
        let log = self.log.as_ref()?;
        let root = self.empty_clause?;
        let mut needed = vec![false; log.len()];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if needed[id as usize] {
                continue;
            }
            needed[id as usize] = true;
            if let LogEntry::Derived { first, steps } = &log[id as usize] {
                stack.push(*first);
                stack.extend(steps.iter().map(|&(_, c)| c));
            }
        }
        let mut node_of = vec![usize::MAX; log.len()];
        let mut proof = ResolutionProof { nodes: Vec::new() };
        for id in 0..log.len() {
            if !needed[id] {
                continue;
            }
            node_of[id] = match &log[id] {
                LogEntry::Input(index) => proof.push(ResNode {
                    clause: canonical(inputs[*index].clone()),
                    kind: ResNodeKind::Leaf { input: *index },
                }),
                LogEntry::Derived { first, steps } => {
                    let mut cur = node_of[*first as usize];
                    for &(pivot, other) in steps {
                        let right = node_of[other as usize];
                        let clause = resolve(&proof.nodes[cur].clause, &proof.nodes[right].clause, pivot)
                            .expect("logged chain resolves");
                        cur = proof.push(ResNode {
                            clause,
                            kind: ResNodeKind::Resolvent { left: cur, right, pivot },
                        });
                    }
                    cur
                }
            };
        }
        // The root must be the last node.
        let root_node = node_of[root as usize];
        if root_node + 1 != proof.nodes.len() {
            return None;
        }
        Some(proof)
    }
}

impl SatOracle for CdclSolver {
    fn new_var(&mut self) -> Var {
        self.num_vars += 1;
        let v = self.num_vars;
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.assigns.push(Value::Undef);
        self.level.push(0);
        self.reason.push(NO_REASON);
        self.polarity.push(false);
        let act = match &mut self.rng {
            Some(rng) => rng.gen::<f64>() * 1e-5,
            None => 0.0,
        };
        self.activity.push(act);
        self.heap_pos.push(HEAP_NONE);
        self.seen.push(false);
        self.heap_insert(v);
        Var::new(v)
    }

    fn num_vars(&self) -> u32 {
        self.num_vars
    }

    fn add_clause(&mut self, lits: &[Lit]) {
        self.cancel_until(0);
        self.add_input(lits);
    }

    fn solve(&mut self, assumptions: &[Lit]) -> SatOutcome {
        if let Some(max) = assumptions.iter().map(|l| l.var().id()).max() {
            self.ensure_vars(max);
        }
        if !self.ok {
            return SatOutcome::Unsat(Vec::new());
        }
        let outcome = loop {
            let budget = luby(self.restarts) * 100;
            self.restarts += 1;
            if let Some(out) = self.search(budget, assumptions) {
                break out;
            }
        };
        self.cancel_until(0);
        outcome
    }

    fn conflicts(&self) -> u64 {
        self.conflicts
    }
}

/// The Luby restart sequence 1, 1, 2, 1, 1, 2, 4, ...
fn luby(i: u32) -> u64 {
    let mut size = 1u64;
    let mut seq = 0u32;
    let x = i as u64;
    while size < x + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    let mut x = x;
    let mut size = size;
    while size - 1 != x {
        size = (size - 1) >> 1;
        seq -= 1;
        x %= size;
    }
    1u64 << seq
}

/// Resolvent of `a` and `b` on `pivot`, or `None` if the pivot does not
/// occur with opposite signs.
pub fn resolve(a: &[Lit], b: &[Lit], pivot: Var) -> Option<Vec<Lit>> {
    let pos = pivot.pos();
    let neg = pivot.neg();
    let ok = (a.contains(&pos) && b.contains(&neg)) || (a.contains(&neg) && b.contains(&pos));
    if !ok {
        return None;
    }
    let lits = a
        .iter()
        .chain(b.iter())
        .copied()
        .filter(|l| l.var() != pivot)
        .collect();
    Some(canonical(lits))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResNodeKind {
    Leaf { input: usize },
    Resolvent { left: usize, right: usize, pivot: Var },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResNode {
    pub clause: Vec<Lit>,
    pub kind: ResNodeKind,
}

/// A propositional resolution derivation. Nodes reference earlier nodes only
/// and the last node is the root.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ResolutionProof {
    pub nodes: Vec<ResNode>,
}

impl ResolutionProof {
    fn push(&mut self, node: ResNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Appends a leaf for input `input` carrying `clause`.
    pub fn add_leaf(&mut self, input: usize, clause: Vec<Lit>) -> usize {
        self.push(ResNode {
            clause,
            kind: ResNodeKind::Leaf { input },
        })
    }

    /// Appends the resolvent of two earlier nodes; `None` if `pivot` does not
    /// clash between them.
    pub fn add_resolvent(&mut self, left: usize, right: usize, pivot: Var) -> Option<usize> {
        let clause = resolve(&self.nodes.get(left)?.clause, &self.nodes.get(right)?.clause, pivot)?;
        Some(self.push(ResNode {
            clause,
            kind: ResNodeKind::Resolvent { left, right, pivot },
        }))
    }

    pub fn root(&self) -> Option<&ResNode> {
        self.nodes.last()
    }

    pub fn num_steps(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, ResNodeKind::Resolvent { .. }))
            .count()
    }

    /// Nodes that are neither leaves nor the root.
    pub fn inner_nodes(&self) -> usize {
        let root_inner = matches!(self.root().map(|n| &n.kind), Some(ResNodeKind::Resolvent { .. }));
        self.num_steps() - usize::from(root_inner)
    }

    /// Input indices referenced by leaves, sorted and deduplicated.
    pub fn leaf_inputs(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n.kind {
                ResNodeKind::Leaf { input } => Some(input),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Renumbers leaf inputs through `map` (old index to new index).
    pub fn remap_inputs(&mut self, map: impl Fn(usize) -> usize) {
        for n in &mut self.nodes {
            if let ResNodeKind::Leaf { input } = &mut n.kind {
                *input = map(*input);
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SatError {
    #[error("clause set is satisfiable")]
    Satisfiable,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResViolationKind {
    EmptyProof,
    ForeignLeaf,
    ForwardReference,
    PivotMissing,
    ResolventMismatch,
    NonEmptyRoot,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("resolution node {node}: {kind:?}: {detail}")]
pub struct ResViolation {
    pub node: usize,
    pub kind: ResViolationKind,
    pub detail: String,
}

/// Derives the empty clause from `inputs` with a fresh proof-logging solver.
pub fn extract_resolution_proof(inputs: &[Vec<Lit>]) -> Result<ResolutionProof, SatError> {
    let mut solver = CdclSolver::with_proof_logging();
    for clause in inputs {
        solver.add_input(clause);
    }
    if solver.solve(&[]).is_sat() {
        return Err(SatError::Satisfiable);
    }
    Ok(solver
        .resolution_proof(inputs)
        .expect("proof-logging solver derived the empty clause"))
}

/// Checks `proof` as a refutation of `inputs`.
pub fn check_resolution_proof(proof: &ResolutionProof, inputs: &[Vec<Lit>]) -> Result<(), ResViolation> {
    let fail = |node, kind, detail: String| Err(ResViolation { node, kind, detail });
    if proof.nodes.is_empty() {
        return fail(0, ResViolationKind::EmptyProof, "proof has no nodes".into());
    }
    for (idx, node) in proof.nodes.iter().enumerate() {
        match node.kind {
            ResNodeKind::Leaf { input } => {
                let matches = inputs.get(input).is_some_and(|c| canonical(c.clone()) == canonical(node.clause.clone()));
                if !matches {
                    return fail(idx, ResViolationKind::ForeignLeaf, format!("foreign leaf {:?}", node.clause));
                }
            }
            ResNodeKind::Resolvent { left, right, pivot } => {
                if left >= idx || right >= idx {
                    return fail(idx, ResViolationKind::ForwardReference, format!("operands {left}, {right}"));
                }
                let Some(res) = resolve(&proof.nodes[left].clause, &proof.nodes[right].clause, pivot) else {
                    return fail(
                        idx,
                        ResViolationKind::PivotMissing,
                        format!("operands lack complementary pair on {pivot}"),
                    );
                };
                if res != canonical(node.clause.clone()) {
                    return fail(
                        idx,
                        ResViolationKind::ResolventMismatch,
                        format!("expected {:?}, found {:?}", res, node.clause),
                    );
                }
            }
        }
    }
    let last = proof.nodes.len() - 1;
    if !proof.nodes[last].clause.is_empty() {
        return fail(last, ResViolationKind::NonEmptyRoot, format!("root is {:?}", proof.nodes[last].clause));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cl(v: &[i64]) -> Vec<Lit> {
        v.iter().map(|&x| Lit::from_dimacs(x)).collect()
    }

    fn brute_force(n: u32, clauses: &[Vec<Lit>]) -> bool {
        (0u64..1 << n).any(|bits| {
            clauses
                .iter()
                .all(|c| c.iter().any(|l| l.eval(bits >> (l.var().id() - 1) & 1 == 1)))
        })
    }

    #[test]
    fn figure_one_is_unsat() {
        let mut s = CdclSolver::new();
        for c in [cl(&[1]), cl(&[2]), cl(&[-1, -2])] {
            s.add_clause(&c);
        }
        assert_eq!(s.solve(&[]), SatOutcome::Unsat(vec![]));
    }

    #[test]
    fn empty_instance_is_sat() {
        let mut s = CdclSolver::new();
        assert!(s.solve(&[]).is_sat());
    }

    #[test]
    fn assumption_core() {
        let mut s = CdclSolver::new();
        s.add_clause(&cl(&[1, 2]));
        s.add_clause(&cl(&[-1, 3]));
        let out = s.solve(&cl(&[-2, -3]));
        assert_eq!(out, SatOutcome::Unsat(canonical(cl(&[-2, -3]))));
        assert!(s.solve(&cl(&[-2])).is_sat());
    }

    #[test]
    fn core_excludes_irrelevant_assumptions() {
        let mut s = CdclSolver::new();
        s.ensure_vars(4);
        s.add_clause(&cl(&[1, 2]));
        let SatOutcome::Unsat(core) = s.solve(&cl(&[4, -1, -2])) else {
            panic!("expected unsat")
        };
        assert!(!core.contains(&Lit::from_dimacs(4)));
    }

    #[test]
    fn model_satisfies_clauses() {
        let clauses = vec![cl(&[1, 2, -3]), cl(&[-1, 3]), cl(&[-2, 3]), cl(&[-3, 4])];
        let mut s = CdclSolver::new();
        for c in &clauses {
            s.add_clause(c);
        }
        let SatOutcome::Sat(m) = s.solve(&[]) else { panic!() };
        assert!(clauses.iter().all(|c| c.iter().any(|&l| m.lit_true(l))));
    }

    #[test]
    fn incremental_clauses_and_vars() {
        let mut s = CdclSolver::new();
        let a = s.new_var();
        let b = s.new_var();
        s.add_clause(&[a.pos(), b.pos()]);
        assert!(s.solve(&[a.neg()]).is_sat());
        s.add_clause(&[b.neg()]);
        assert!(!s.solve(&[a.neg()]).is_sat());
        assert!(s.solve(&[]).is_sat());
        let c = s.new_var();
        s.add_clause(&[a.neg(), c.pos()]);
        s.add_clause(&[a.neg(), c.neg()]);
        assert_eq!(s.solve(&[]), SatOutcome::Unsat(vec![]));
    }

    #[test]
    fn pigeonhole_three_into_two() {
        // p(i,j): pigeon i in hole j, var = 2*i + j + 1.
        let p = |i: i64, j: i64| 2 * i + j + 1;
        let mut clauses = Vec::new();
        for i in 0..3 {
            clauses.push(cl(&[p(i, 0), p(i, 1)]));
        }
        for j in 0..2 {
            for a in 0..3 {
                for b in a + 1..3 {
                    clauses.push(cl(&[-p(a, j), -p(b, j)]));
                }
            }
        }
        let proof = extract_resolution_proof(&clauses).unwrap();
        check_resolution_proof(&proof, &clauses).unwrap();
    }

    #[test]
    fn figure_one_proof_shape() {
        let inputs = vec![cl(&[1]), cl(&[2]), cl(&[-1, -2])];
        let proof = extract_resolution_proof(&inputs).unwrap();
        assert_eq!(proof.nodes.len(), 5);
        assert_eq!(proof.num_steps(), 2);
        check_resolution_proof(&proof, &inputs).unwrap();
        let pivots: Vec<Var> = proof
            .nodes
            .iter()
            .filter_map(|n| match n.kind {
                ResNodeKind::Resolvent { pivot, .. } => Some(pivot),
                _ => None,
            })
            .collect();
        assert_eq!(pivots, vec![Var::new(2), Var::new(1)]);
        assert_eq!(proof.inner_nodes(), 1);
    }

    #[test]
    fn empty_input_gives_single_leaf() {
        let inputs = vec![cl(&[1]), vec![]];
        let proof = extract_resolution_proof(&inputs).unwrap();
        assert_eq!(proof.nodes.len(), 1);
        assert_eq!(proof.nodes[0].kind, ResNodeKind::Leaf { input: 1 });
        check_resolution_proof(&proof, &inputs).unwrap();
    }

    #[test]
    fn satisfiable_input_is_reported() {
        assert_eq!(extract_resolution_proof(&[cl(&[1, 2])]), Err(SatError::Satisfiable));
    }

    #[test]
    fn tampered_pivot_is_rejected() {
        let inputs = vec![cl(&[1]), cl(&[2]), cl(&[-1, -2])];
        let mut proof = extract_resolution_proof(&inputs).unwrap();
        let first = proof
            .nodes
            .iter()
            .position(|n| matches!(n.kind, ResNodeKind::Resolvent { .. }))
            .unwrap();
        if let ResNodeKind::Resolvent { pivot, .. } = &mut proof.nodes[first].kind {
            *pivot = Var::new(1);
        }
        let err = check_resolution_proof(&proof, &inputs).unwrap_err();
        assert_eq!(err.node, first);
        assert_eq!(err.kind, ResViolationKind::PivotMissing);
    }

    #[test]
    fn foreign_leaf_is_rejected() {
        let inputs = vec![cl(&[1]), cl(&[2]), cl(&[-1, -2])];
        let proof = extract_resolution_proof(&inputs).unwrap();
        let err = check_resolution_proof(&proof, &inputs[..2]).unwrap_err();
        assert_eq!(err.kind, ResViolationKind::ForeignLeaf);
        assert!(err.to_string().contains("foreign leaf"));
    }

    #[test]
    fn non_empty_root_is_rejected() {
        let inputs = vec![cl(&[1])];
        let proof = ResolutionProof {
            nodes: vec![ResNode {
                clause: cl(&[1]),
                kind: ResNodeKind::Leaf { input: 0 },
            }],
        };
        assert_eq!(
            check_resolution_proof(&proof, &inputs).unwrap_err().kind,
            ResViolationKind::NonEmptyRoot
        );
    }

    #[test]
    fn luby_prefix() {
        let seq: Vec<u64> = (0..15).map(luby).collect();
        assert_eq!(seq, vec![1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }

    #[test]
    fn random_instances_match_truth_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(3..=10u32);
            let m = rng.gen_range(1..=5 * n as usize);
            let clauses: Vec<Vec<Lit>> = (0..m)
                .map(|_| {
                    (0..3)
                        .map(|_| Lit::new(Var::new(rng.gen_range(1..=n)), rng.gen()))
                        .collect()
                })
                .collect();
            let mut s = CdclSolver::with_seed(rng.gen());
            s.ensure_vars(n);
            for c in &clauses {
                s.add_clause(c);
            }
            let expected = brute_force(n, &clauses);
            assert_eq!(s.solve(&[]).is_sat(), expected);
            if !expected {
                let proof = extract_resolution_proof(&clauses).unwrap();
                check_resolution_proof(&proof, &clauses).unwrap();
            }
        }
    }
}
