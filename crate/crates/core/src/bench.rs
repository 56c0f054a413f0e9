//! Formula family generators, a brute-force evaluator, random instances and
//! the constructive strengthened refutation of the row/column family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::calculus::{ProofBuilder, RedResProof};
use crate::formula::{Lit, Pcnf, Quantifier, Var};
use crate::sat::ResolutionProof;

/// Largest number of bound variables the brute-force evaluator accepts.
pub const ORACLE_MAX_VARS: usize = 25;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("formula has {0} variables, the evaluator accepts at most {ORACLE_MAX_VARS}")]
    TooLarge(usize),
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("family {family} needs n >= {min}, got {n}")]
    SizeTooSmall { family: &'static str, min: usize, n: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Crn,
    CrnPrime,
    Dag,
    QParity,
    Composite,
    Example1,
    Example2,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Crn,
        Family::CrnPrime,
        Family::Dag,
        Family::QParity,
        Family::Composite,
        Family::Example1,
        Family::Example2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Crn => "crn",
            Family::CrnPrime => "crn_prime",
            Family::Dag => "dag",
            Family::QParity => "qparity",
            Family::Composite => "composite",
            Family::Example1 => "example1",
            Family::Example2 => "example2",
        }
    }

    /// Smallest accepted size parameter.
    pub fn min_n(self) -> usize {
        match self {
            Family::QParity | Family::Composite => 2,
            _ => 1,
        }
    }

    pub fn generate(self, n: usize) -> Result<Pcnf, BenchError> {
        if n < self.min_n() {
            return Err(BenchError::SizeTooSmall {
                family: self.name(),
                min: self.min_n(),
                n,
            });
        }
        Ok(match self {
            Family::Crn => gen_crn(n),
            Family::CrnPrime => gen_crn_prime(n),
            Family::Dag => gen_dag(n),
            Family::QParity => gen_qparity(n),
            Family::Composite => gen_composite(n),
            Family::Example1 => gen_example1(),
            Family::Example2 => gen_example2(),
        })
    }
}

impl std::str::FromStr for Family {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| BenchError::UnknownFamily(s.to_string()))
    }
}

fn v(id: usize) -> Var {
    Var::new(id as u32)
}

fn vars(ids: impl IntoIterator<Item = usize>) -> Vec<Var> {
    ids.into_iter().map(v).collect()
}

fn build(max_var: usize, prefix: Vec<(Quantifier, Vec<Var>)>, clauses: Vec<Vec<Lit>>) -> Pcnf {
    Pcnf::new(max_var as u32, prefix, clauses).expect("generated formula is well formed")
}

/// Layout of the row/column family: `x(i, j)` for the matrix variables,
/// `a(i)` and `b(j)`; clause ids are 1 and 2 for the long clauses, then
/// `C_ij` at `3 + 2((i-1)n + j-1)` followed by its complement clause.
#[derive(Clone, Copy, Debug)]
pub struct CrnLayout {
    pub n: usize,
}

impl CrnLayout {
    pub fn x(&self, i: usize, j: usize) -> Var {
        v((i - 1) * self.n + j)
    }

    pub fn z(&self) -> Var {
        v(self.n * self.n + 1)
    }

    pub fn a(&self, i: usize) -> Var {
        v(self.n * self.n + 1 + i)
    }

    pub fn b(&self, j: usize) -> Var {
        v(self.n * self.n + 1 + self.n + j)
    }

    pub fn c(&self, i: usize, j: usize) -> usize {
        3 + 2 * ((i - 1) * self.n + j - 1)
    }

    pub fn c_bar(&self, i: usize, j: usize) -> usize {
        self.c(i, j) + 1
    }
}

fn crn_clauses(n: usize, x: impl Fn(usize, usize) -> Var, z: impl Fn(usize, usize) -> Var, a: impl Fn(usize) -> Var, b: impl Fn(usize) -> Var) -> Vec<Vec<Lit>> {
    let mut clauses = vec![
        (1..=n).map(|i| a(i).neg()).collect::<Vec<_>>(),
        (1..=n).map(|j| b(j).neg()).collect(),
    ];
    for i in 1..=n {
        for j in 1..=n {
            clauses.push(vec![x(i, j).pos(), z(i, j).pos(), a(i).pos()]);
            clauses.push(vec![x(i, j).neg(), z(i, j).neg(), b(j).pos()]);
        }
    }
    clauses
}

pub fn gen_crn(n: usize) -> Pcnf {
    let l = CrnLayout { n };
    let nn = n * n;
    let prefix = vec![
        (Quantifier::Exists, vars(1..=nn)),
        (Quantifier::Forall, vec![l.z()]),
        (Quantifier::Exists, vars(nn + 2..=nn + 1 + 2 * n)),
    ];
    let clauses = crn_clauses(n, |i, j| l.x(i, j), |_, _| l.z(), |i| l.a(i), |j| l.b(j));
    build(nn + 1 + 2 * n, prefix, clauses)
}

/// The row/column family with one universal variable per matrix cell.
pub fn gen_crn_prime(n: usize) -> Pcnf {
    let nn = n * n;
    let x = |i: usize, j: usize| v((i - 1) * n + j);
    let z = |i: usize, j: usize| v(nn + (i - 1) * n + j);
    let a = |i: usize| v(2 * nn + i);
    let b = |j: usize| v(2 * nn + n + j);
    let prefix = vec![
        (Quantifier::Exists, vars(1..=nn)),
        (Quantifier::Forall, vars(nn + 1..=2 * nn)),
        (Quantifier::Exists, vars(2 * nn + 1..=2 * nn + 2 * n)),
    ];
    build(2 * nn + 2 * n, prefix, crn_clauses(n, x, z, a, b))
}

/// Prefix blocks and the `4n` short clauses of the chained family, using
/// variables `1..=4n`.
fn dag_parts(n: usize) -> (Vec<(Quantifier, Vec<Var>)>, Vec<Vec<Lit>>, Vec<Lit>) {
    let mut prefix = Vec::new();
    let mut clauses = Vec::new();
    let mut long = Vec::new();
    for i in 1..=n {
        let base = 4 * (i - 1);
        let (e, u, c1, c2) = (v(base + 1), v(base + 2), v(base + 3), v(base + 4));
        prefix.push((Quantifier::Exists, vec![e]));
        prefix.push((Quantifier::Forall, vec![u]));
        prefix.push((Quantifier::Exists, vec![c1, c2]));
        clauses.push(vec![e.neg(), c1.pos()]);
        clauses.push(vec![u.neg(), c1.pos()]);
        clauses.push(vec![e.pos(), c2.pos()]);
        clauses.push(vec![u.pos(), c2.pos()]);
        long.push(c1.neg());
        long.push(c2.neg());
    }
    (prefix, clauses, long)
}

/// The chained family; the long clause comes last so that `n = 1` is the
/// first example verbatim.
pub fn gen_dag(n: usize) -> Pcnf {
    let (prefix, mut clauses, long) = dag_parts(n);
    clauses.push(long);
    build(4 * n, prefix, clauses)
}

/// Clauses forcing `o = o1 xor o2`.
pub fn xor_clauses(o1: Var, o2: Var, o: Var) -> [Vec<Lit>; 4] {
    [
        vec![o1.neg(), o2.neg(), o.neg()],
        vec![o1.pos(), o2.pos(), o.neg()],
        vec![o1.neg(), o2.pos(), o.pos()],
        vec![o1.pos(), o2.neg(), o.pos()],
    ]
}

/// Parity chain over `x`, with `t[i]` the running parity of `x[0..=i]`
/// (`t[0]` unused), returning its clauses.
fn parity_chain(x: &[Var], t: &[Var]) -> Vec<Vec<Lit>> {
    let mut clauses = Vec::new();
    clauses.extend(xor_clauses(x[0], x[1], t[1]));
    for i in 2..x.len() {
        clauses.extend(xor_clauses(t[i - 1], x[i], t[i]));
    }
    clauses
}

/// Parity family: `x_i = i`, `z = n + 1`, `t_i = n + i` for `i >= 2`.
pub fn gen_qparity(n: usize) -> Pcnf {
    let x = vars(1..=n);
    let z = v(n + 1);
    let t: Vec<Var> = std::iter::once(v(n + 1)).chain((2..=n).map(|i| v(n + i))).collect();
    let mut clauses = parity_chain(&x, &t);
    clauses.push(vec![z.pos(), t[n - 1].pos()]);
    clauses.push(vec![z.neg(), t[n - 1].neg()]);
    let prefix = vec![
        (Quantifier::Exists, x),
        (Quantifier::Forall, vec![z]),
        (Quantifier::Exists, t[1..].to_vec()),
    ];
    build(2 * n, prefix, clauses)
}

/// The chained family followed by the parity family, coupled through `a`
/// and `b`. Variables: chain `1..=4n`, `a = 4n+1`, `b = 4n+2`,
/// `x_i = 4n+2+i`, `z = 5n+3`, `t_i = 5n+2+i` for `i >= 2`.
pub fn gen_composite(n: usize) -> Pcnf {
    let (mut prefix, mut clauses, long) = dag_parts(n);
    let a = v(4 * n + 1);
    let b = v(4 * n + 2);
    let x = vars((1..=n).map(|i| 4 * n + 2 + i));
    let z = v(5 * n + 3);
    let t: Vec<Var> = std::iter::once(z).chain((2..=n).map(|i| v(5 * n + 2 + i))).collect();
    prefix.push((Quantifier::Forall, vec![a]));
    prefix.push((Quantifier::Exists, vec![b]));
    prefix.push((Quantifier::Exists, x.clone()));
    prefix.push((Quantifier::Forall, vec![z]));
    prefix.push((Quantifier::Exists, t[1..].to_vec()));
    let mut coupling = vec![a.neg(), b.neg()];
    coupling.extend(long);
    clauses.push(coupling);
    clauses.extend(parity_chain(&x, &t));
    clauses.push(vec![z.pos(), t[n - 1].pos(), b.pos()]);
    clauses.push(vec![z.neg(), t[n - 1].neg()]);
    build(6 * n + 2, prefix, clauses)
}

pub const EXAMPLE1_QDIMACS: &str = "p cnf 4 5\ne 1 0\na 2 0\ne 3 4 0\n-1 3 0\n-2 3 0\n1 4 0\n2 4 0\n-3 -4 0\n";

/// Variables: `e1 = 1`, `u1 = 2`, `c1 = 3`, `c2 = 4`, `a = 5`, `b = 6`,
/// `x = 7`, `z = 8`, `t = 9`.
pub const EXAMPLE2_QDIMACS: &str = "p cnf 9 9\ne 1 0\na 2 0\ne 3 4 0\na 5 0\ne 6 0\ne 7 0\na 8 0\ne 9 0\n\
-1 3 0\n-2 3 0\n1 4 0\n2 4 0\n-3 -4 -6 -5 0\n8 9 6 0\n-8 -9 0\n7 -9 0\n-7 9 0\n";

pub fn gen_example1() -> Pcnf {
    crate::formula::parse_qdimacs(EXAMPLE1_QDIMACS).expect("fixture parses")
}

pub fn gen_example2() -> Pcnf {
    crate::formula::parse_qdimacs(EXAMPLE2_QDIMACS).expect("fixture parses")
}

/// Deterministic random closed formula. Blocks alternate starting from a
/// random quantifier; every clause is non-empty with distinct variables.
pub fn gen_random(seed: u64, blocks: usize, vars_per_block: usize, clauses: usize, clause_width: usize) -> Pcnf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = blocks.max(1);
    let per = vars_per_block.max(1);
    let total = blocks * per;
    let mut kind = if rng.gen_bool(0.5) {
        Quantifier::Exists
    } else {
        Quantifier::Forall
    };
    let mut prefix = Vec::new();
    for b in 0..blocks {
        prefix.push((kind, vars(b * per + 1..=(b + 1) * per)));
        kind = match kind {
            Quantifier::Exists => Quantifier::Forall,
            Quantifier::Forall => Quantifier::Exists,
        };
    }
    let width = clause_width.clamp(1, total);
    let mut matrix = Vec::with_capacity(clauses);
    for _ in 0..clauses {
        let w = rng.gen_range(1..=width);
        let mut ids: Vec<usize> = Vec::with_capacity(w);
        while ids.len() < w {
            let id = rng.gen_range(1..=total);
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        matrix.push(ids.into_iter().map(|id| Lit::new(v(id), rng.gen_bool(0.5))).collect());
    }
    build(total, prefix, matrix)
}

/// Truth value by exhaustive game-tree evaluation.
pub fn oracle_eval(pcnf: &Pcnf) -> Result<bool, BenchError> {
    let bound = pcnf.num_vars();
    if bound > ORACLE_MAX_VARS {
        return Err(BenchError::TooLarge(bound));
    }
    let order: Vec<(Var, Quantifier)> = pcnf
        .blocks()
        .iter()
        .flat_map(|b| b.vars.iter().map(move |&v| (v, b.kind)))
        .collect();
    let mut values: Vec<Option<bool>> = vec![None; pcnf.max_var() as usize + 1];
    Ok(eval_rec(pcnf, &order, 0, &mut values))
}

/// `Some(false)` if some clause is falsified, `Some(true)` if all are
/// satisfied, `None` otherwise.
fn matrix_status(pcnf: &Pcnf, values: &[Option<bool>]) -> Option<bool> {
    let mut all = true;
    for c in pcnf.clauses() {
        let mut open = false;
        let mut sat = false;
        for l in &c.lits {
            match values[l.var().index()] {
                Some(val) if l.eval(val) => {
                    sat = true;
                    break;
                }
                Some(_) => {}
                None => open = true,
            }
        }
        if !sat {
            if !open {
                return Some(false);
            }
            all = false;
        }
    }
    all.then_some(true)
}

fn eval_rec(pcnf: &Pcnf, order: &[(Var, Quantifier)], pos: usize, values: &mut Vec<Option<bool>>) -> bool {
    if let Some(v) = matrix_status(pcnf, values) {
        return v;
    }
    let (var, kind) = order[pos];
    let mut result = kind == Quantifier::Forall;
    for value in [false, true] {
        values[var.index()] = Some(value);
        let r = eval_rec(pcnf, order, pos + 1, values);
        if (kind == Quantifier::Exists) == r {
            result = r;
            break;
        }
    }
    values[var.index()] = None;
    result
}

/// Resolves `acc` against each node of `steps` in turn on the paired pivot.
fn chain(pi: &mut ResolutionProof, mut acc: usize, steps: &[(usize, Var)]) -> usize {
    for &(node, pivot) in steps {
        acc = pi.add_resolvent(acc, node, pivot).expect("pivot clashes");
    }
    acc
}

/// The polynomial refutation of the row/column family that uses one
/// strengthening step per column.
pub fn gen_crn_strengthened_proof(n: usize) -> RedResProof {
    assert!(n >= 1, "size parameter must be positive");
    let pcnf = gen_crn(n);
    let l = CrnLayout { n };
    let mut b = ProofBuilder::new(&pcnf);

    // z = 0: the clauses of column j with the long a-clause refute level 3.
    let mut columns = Vec::new();
    for j in 1..=n {
        let mut premises = vec![b.init(1, 3).expect("init")];
        premises.extend((1..=n).map(|i| b.init(l.c(i, j), 3).expect("init")));
        let mut pi = ResolutionProof::default();
        let long = pi.add_leaf(0, (1..=n).map(|i| l.a(i).neg()).collect());
        let rows: Vec<(usize, Var)> = (1..=n).map(|i| (pi.add_leaf(i, vec![l.a(i).pos()]), l.a(i))).collect();
        chain(&mut pi, long, &rows);
        let node = b.res(premises, pi).expect("column refutation");
        columns.push(b.forall_red(node).expect("reduce z"));
    }

    // z = 1: the complement clauses of row 1 with the long b-clause.
    let mut premises = vec![b.init(2, 3).expect("init")];
    premises.extend((1..=n).map(|j| b.init(l.c_bar(1, j), 3).expect("init")));
    let mut pi = ResolutionProof::default();
    let long = pi.add_leaf(0, (1..=n).map(|j| l.b(j).neg()).collect());
    let cols: Vec<(usize, Var)> = (1..=n).map(|j| (pi.add_leaf(j, vec![l.b(j).pos()]), l.b(j))).collect();
    chain(&mut pi, long, &cols);
    let row = b.res(premises, pi).expect("row refutation");
    let mut main = b.forall_red(row).expect("reduce z");

    // Replace each complement clause of row 1 by its whole column.
    let fresh: Vec<Var> = (1..=n).map(|j| Var::new(pcnf.max_var() + j as u32)).collect();
    let mut members = Vec::new();
    for j in 1..=n {
        let group: Vec<usize> = (1..=n).map(|i| l.c_bar(i, j)).collect();
        let (m, ms) = b.strengthen(main, l.c_bar(1, j), group, fresh[j - 1]).expect("column group");
        main = m;
        members.push(ms);
    }

    // Final level-1 refutation: each column yields the negated fresh literal,
    // which then cancels against the strengthened main object.
    let mut premises = vec![main];
    let mut pi = ResolutionProof::default();
    let main_leaf = pi.add_leaf(0, fresh.iter().map(|f| f.pos()).collect());
    let mut negated = Vec::new();
    for j in 1..=n {
        premises.push(columns[j - 1]);
        let col_leaf = pi.add_leaf(premises.len() - 1, (1..=n).map(|i| l.x(i, j).pos()).collect());
        let mut steps = Vec::new();
        for i in 1..=n {
            premises.push(members[j - 1][i - 1]);
            let leaf = pi.add_leaf(premises.len() - 1, vec![l.x(i, j).neg(), fresh[j - 1].neg()]);
            steps.push((leaf, l.x(i, j)));
        }
        negated.push((chain(&mut pi, col_leaf, &steps), fresh[j - 1]));
    }
    chain(&mut pi, main_leaf, &negated);
    let root = b.res(premises, pi).expect("final refutation");
    b.finish(root)
}

/// Closed form of the size of [`gen_crn_strengthened_proof`].
pub fn crn_strengthened_proof_size(n: usize) -> usize {
    4 * n * n + 5 * n + 3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::check_proof;
    use crate::formula::emit_qdimacs;

    #[test]
    fn family_counts() {
        for n in 1..=10 {
            let c = gen_crn(n);
            assert_eq!((c.num_vars(), c.num_clauses()), (n * n + 1 + 2 * n, 2 + 2 * n * n));
            let p = gen_crn_prime(n);
            assert_eq!((p.num_vars(), p.num_clauses()), (2 * n * n + 2 * n, 2 + 2 * n * n));
            let d = gen_dag(n);
            assert_eq!((d.num_vars(), d.num_clauses()), (4 * n, 1 + 4 * n));
            if n >= 2 {
                let q = gen_qparity(n);
                assert_eq!((q.num_vars(), q.num_clauses()), (2 * n, 4 * (n - 1) + 2));
                let k = gen_composite(n);
                assert_eq!(k.num_clauses(), 4 * n + 1 + 4 * (n - 1) + 2);
                assert_eq!(k.num_vars(), 6 * n + 2);
            }
        }
    }

    #[test]
    fn small_instances_match_stated_sizes() {
        assert_eq!((gen_crn(2).num_vars(), gen_crn(2).num_clauses()), (9, 10));
        assert_eq!((gen_crn(1).num_vars(), gen_crn(1).num_clauses()), (4, 4));
        assert_eq!((gen_crn_prime(2).num_vars(), gen_crn_prime(2).num_clauses()), (12, 10));
        assert_eq!(gen_qparity(2).num_clauses(), 6);
        assert_eq!(gen_qparity(3).num_clauses(), 10);
        assert_eq!((gen_example1().num_clauses(), gen_example1().num_levels()), (5, 3));
        assert_eq!((gen_example2().num_clauses(), gen_example2().num_levels()), (9, 7));
    }

    #[test]
    fn crn_prime_of_one_matches_crn_of_one() {
        assert_eq!(emit_qdimacs(&gen_crn_prime(1)), emit_qdimacs(&gen_crn(1)));
    }

    #[test]
    fn chain_of_one_is_first_example() {
        assert_eq!(emit_qdimacs(&gen_dag(1)), emit_qdimacs(&gen_example1()));
    }

    #[test]
    fn composite_prefix() {
        let k = gen_composite(2);
        let kinds: String = k.blocks().iter().map(|b| b.kind.symbol()).collect();
        assert_eq!(kinds, "eaeaeaeae");
        let sizes: Vec<usize> = k.blocks().iter().map(|b| b.vars.len()).collect();
        assert_eq!(sizes, vec![1, 1, 3, 1, 2, 1, 3, 1, 1]);
        assert_eq!(k.blocks()[7].vars, vec![v(13)]);
    }

    #[test]
    fn oracle_basics() {
        assert!(!oracle_eval(&gen_example1()).unwrap());
        assert!(!oracle_eval(&gen_example2()).unwrap());
        let taut = Pcnf::new(1, vec![(Quantifier::Forall, vec![v(1)])], vec![vec![v(1).pos(), v(1).neg()]]).unwrap();
        assert!(oracle_eval(&taut).unwrap());
        let unit = Pcnf::new(1, vec![(Quantifier::Exists, vec![v(1)])], vec![vec![v(1).pos()]]).unwrap();
        assert!(oracle_eval(&unit).unwrap());
        assert!(!oracle_eval(&gen_qparity(4)).unwrap());
        assert_eq!(oracle_eval(&gen_crn(5)).unwrap_err(), BenchError::TooLarge(36));
    }

    #[test]
    fn families_are_false() {
        for n in 1..=3 {
            assert!(!oracle_eval(&gen_crn(n)).unwrap());
            assert!(!oracle_eval(&gen_crn_prime(n)).unwrap());
            assert!(!oracle_eval(&gen_dag(n)).unwrap());
        }
        for n in 2..=3 {
            assert!(!oracle_eval(&gen_qparity(n)).unwrap());
            assert!(!oracle_eval(&gen_composite(n)).unwrap());
        }
    }

    #[test]
    fn random_is_deterministic() {
        let a = gen_random(1, 3, 2, 10, 3);
        let b = gen_random(1, 3, 2, 10, 3);
        assert_eq!(emit_qdimacs(&a), emit_qdimacs(&b));
        assert_eq!(a.num_clauses(), 10);
        assert!(a.clauses().iter().all(|c| !c.is_empty()));
        assert_ne!(emit_qdimacs(&a), emit_qdimacs(&gen_random(2, 3, 2, 10, 3)));
    }

    #[test]
    fn random_verdicts_are_mixed() {
        let verdicts: Vec<bool> = (0..500)
            .map(|s| oracle_eval(&gen_random(s, 3, 3, 12, 3)).unwrap())
            .collect();
        assert!(verdicts.iter().any(|&x| x));
        assert!(verdicts.iter().any(|&x| !x));
    }

    #[test]
    fn strengthened_proof_checks_with_closed_form_size() {
        for n in 1..=6 {
            let proof = gen_crn_strengthened_proof(n);
            let report = check_proof(&gen_crn(n), &proof).unwrap();
            assert_eq!(report.size, crn_strengthened_proof_size(n), "n = {n}");
            assert_eq!(proof.count_rule("strengthen"), n);
        }
        assert_eq!(crn_strengthened_proof_size(2), 29);
    }

    #[test]
    fn family_parsing() {
        assert_eq!("qparity".parse::<Family>().unwrap(), Family::QParity);
        assert!(matches!("foo".parse::<Family>(), Err(BenchError::UnknownFamily(_))));
        assert!(Family::QParity.generate(1).is_err());
    }
}
