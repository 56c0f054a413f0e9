//! Universal expansion: annotated variables, expansion trees and expansion
//! formulas over quantified subformulas.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::formula::{canonical, Assignment, ClauseId, Level, LevelRange, Lit, Pcnf, Quantifier, Var};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExpansionError {
    #[error("expansion tree path has {found} edges, expected {expected}")]
    DepthMismatch { expected: usize, found: usize },
    #[error("edge label at depth {depth} does not assign variable {var}")]
    LabelNotTotal { depth: usize, var: u32 },
    #[error("edge label at depth {depth} assigns variable {var} outside its block")]
    LabelOutsideBlock { depth: usize, var: u32 },
    #[error("duplicate sibling label {label} at depth {depth}")]
    DuplicateSibling { depth: usize, label: String },
    #[error("variable {0} is not bound in the expanded subformula")]
    VariableOutsideFragment(u32),
    #[error("clause {0} is out of range")]
    ClauseOutOfRange(ClauseId),
    #[error("level {0} is out of range")]
    LevelOutOfRange(Level),
    #[error("full expansion would have {0} leaves")]
    TooManyLeaves(u128),
    #[error("invalid annotated variable `{0}`")]
    Parse(String),
}

/// An existential variable renamed by the universal assignment it depends on.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct AnnotatedVar {
    pub base: Var,
    annotation: Vec<(Var, bool)>,
}

impl AnnotatedVar {
    pub fn new(base: Var, annotation: &Assignment) -> AnnotatedVar {
        AnnotatedVar {
            base,
            annotation: annotation.iter().collect(),
        }
    }

    pub fn plain(base: Var) -> AnnotatedVar {
        AnnotatedVar {
            base,
            annotation: Vec::new(),
        }
    }

    pub fn annotation(&self) -> Assignment {
        self.annotation.iter().copied().collect()
    }
}

impl fmt::Display for AnnotatedVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}^{{", self.base)?;
        for (n, (v, b)) in self.annotation.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}={}", v, *b as u8)?;
        }
        write!(f, "}}")
    }
}

impl FromStr for AnnotatedVar {
    type Err = ExpansionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ExpansionError::Parse(s.to_string());
        let rest = s.strip_prefix('v').ok_or_else(err)?;
        let (base, ann) = rest.split_once("^{").ok_or_else(err)?;
        let ann = ann.strip_suffix('}').ok_or_else(err)?;
        let base: u32 = base.parse().map_err(|_| err())?;
        if base == 0 {
            return Err(err());
        }
        let mut annotation = BTreeMap::new();
        if !ann.is_empty() {
            for item in ann.split(',') {
                let (v, b) = item.split_once('=').ok_or_else(err)?;
                let v: u32 = v.parse().map_err(|_| err())?;
                let b = match b {
                    "0" => false,
                    "1" => true,
                    _ => return Err(err()),
                };
                if v == 0 || annotation.insert(Var::new(v), b).is_some() {
                    return Err(err());
                }
            }
        }
        Ok(AnnotatedVar {
            base: Var::new(base),
            annotation: annotation.into_iter().collect(),
        })
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct AnnotatedLit {
    pub var: AnnotatedVar,
    pub negated: bool,
}

impl fmt::Display for AnnotatedLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "-")?;
        }
        write!(f, "{}", self.var)
    }
}

/// A tree whose edges at depth `d` carry total assignments to the `d`-th
/// universal block of a subformula.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ExpansionTree {
    pub children: Vec<(Assignment, ExpansionTree)>,
}

impl ExpansionTree {
    pub fn leaf() -> ExpansionTree {
        ExpansionTree::default()
    }

    /// Builds the prefix tree of the given label sequences.
    pub fn from_paths(paths: &[Vec<Assignment>]) -> ExpansionTree {
        let mut root = ExpansionTree::leaf();
        for path in paths {
            let mut node = &mut root;
            for label in path {
                let pos = match node.children.iter().position(|(l, _)| l == label) {
                    Some(p) => p,
                    None => {
                        node.children.push((label.clone(), ExpansionTree::leaf()));
                        node.children.len() - 1
                    }
                };
                node = &mut node.children[pos].1;
            }
        }
        root
    }

    /// Root-to-leaf label sequences in child order.
    pub fn paths(&self) -> Vec<Vec<Assignment>> {
        if self.children.is_empty() {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for (label, child) in &self.children {
            for mut rest in child.paths() {
                rest.insert(0, label.clone());
                out.push(rest);
            }
        }
        out
    }

    pub fn num_leaves(&self) -> usize {
        if self.children.is_empty() {
            1
        } else {
            self.children.iter().map(|(_, c)| c.num_leaves()).sum()
        }
    }

    /// Number of edges.
    pub fn size(&self) -> usize {
        self.children.iter().map(|(_, c)| 1 + c.size()).sum()
    }

    /// Checks the shape against the universal blocks it expands.
    pub fn validate(&self, blocks: &[&[Var]]) -> Result<(), ExpansionError> {
        self.validate_at(blocks, 0)
    }

    fn validate_at(&self, blocks: &[&[Var]], depth: usize) -> Result<(), ExpansionError> {
        if self.children.is_empty() {
            if depth != blocks.len() {
                return Err(ExpansionError::DepthMismatch {
                    expected: blocks.len(),
                    found: depth,
                });
            }
            return Ok(());
        }
        if depth == blocks.len() {
            return Err(ExpansionError::DepthMismatch {
                expected: blocks.len(),
                found: depth + 1,
            });
        }
        let block = blocks[depth];
        let mut labels = HashSet::new();
        for (label, child) in &self.children {
            for &v in block {
                if !label.contains(v) {
                    return Err(ExpansionError::LabelNotTotal { depth, var: v.id() });
                }
            }
            if let Some(v) = label.vars().find(|v| !block.contains(v)) {
                return Err(ExpansionError::LabelOutsideBlock { depth, var: v.id() });
            }
            if !labels.insert(label.clone()) {
                return Err(ExpansionError::DuplicateSibling {
                    depth,
                    label: label.to_string(),
                });
            }
            child.validate_at(blocks, depth + 1)?;
        }
        Ok(())
    }
}

/// A quantified subformula `Q X_k ... Q X_n . C^{>=k}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fragment {
    pub blocks: Vec<(Quantifier, Vec<Var>)>,
    pub clauses: Vec<(ClauseId, Vec<Lit>)>,
    position: HashMap<Var, (Quantifier, usize)>,
}

impl Fragment {
    pub fn new(blocks: Vec<(Quantifier, Vec<Var>)>, clauses: Vec<(ClauseId, Vec<Lit>)>) -> Fragment {
        let mut position = HashMap::new();
        let mut universals = 0;
        for (kind, vars) in &blocks {
            for &v in vars {
                position.insert(v, (*kind, universals));
            }
            if *kind == Quantifier::Forall {
                universals += 1;
            }
        }
        Fragment {
            blocks,
            clauses,
            position,
        }
    }

    /// Projects clauses `ids` of `pcnf` onto levels `>= k`.
    pub fn from_pcnf(pcnf: &Pcnf, k: Level, ids: &[ClauseId]) -> Result<Fragment, ExpansionError> {
        if k == 0 || k > pcnf.num_levels() + 1 {
            return Err(ExpansionError::LevelOutOfRange(k));
        }
        let blocks = pcnf.blocks()[k - 1..]
            .iter()
            .map(|b| (b.kind, b.vars.clone()))
            .collect();
        let mut clauses = Vec::with_capacity(ids.len());
        for &i in ids {
            if i == 0 || i > pcnf.num_clauses() {
                return Err(ExpansionError::ClauseOutOfRange(i));
            }
            clauses.push((i, pcnf.project(i, k, LevelRange::Ge)));
        }
        Ok(Fragment::new(blocks, clauses))
    }

    pub fn universal_blocks(&self) -> Vec<&[Var]> {
        self.blocks
            .iter()
            .filter(|(k, _)| *k == Quantifier::Forall)
            .map(|(_, v)| v.as_slice())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PathResult {
    Satisfied,
    Clause(Vec<AnnotatedLit>),
}

/// Instantiates `clause` with the universal assignments of `path` and renames
/// existential variables by the assignments of the universal blocks before
/// them.
pub fn expand_path(path: &[Assignment], clause: &[Lit], fragment: &Fragment) -> Result<PathResult, ExpansionError> {
    let universals = fragment.universal_blocks().len();
    if path.len() != universals {
        return Err(ExpansionError::DepthMismatch {
            expected: universals,
            found: path.len(),
        });
    }
    let mut out = Vec::new();
    for &lit in clause {
        let &(kind, before) = fragment
            .position
            .get(&lit.var())
            .ok_or(ExpansionError::VariableOutsideFragment(lit.var().id()))?;
        match kind {
            Quantifier::Forall => {
                let value = path[before].get(lit.var()).ok_or(ExpansionError::LabelNotTotal {
                    depth: before,
                    var: lit.var().id(),
                })?;
                if lit.eval(value) {
                    return Ok(PathResult::Satisfied);
                }
            }
            Quantifier::Exists => {
                let mut ann = Assignment::new();
                for label in &path[..before] {
                    ann.extend(label);
                }
                out.push(AnnotatedLit {
                    var: AnnotatedVar::new(lit.var(), &ann),
                    negated: lit.is_negated(),
                });
            }
        }
    }
    Ok(PathResult::Clause(out))
}

/// Maps annotated variables to dense variable ids starting at 1.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Registry {
    ids: HashMap<AnnotatedVar, Var>,
    vars: Vec<AnnotatedVar>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    pub fn intern(&mut self, var: &AnnotatedVar) -> Var {
        if let Some(&v) = self.ids.get(var) {
            return v;
        }
        self.vars.push(var.clone());
        let v = Var::new(self.vars.len() as u32);
        self.ids.insert(var.clone(), v);
        v
    }

    pub fn get(&self, var: &AnnotatedVar) -> Option<Var> {
        self.ids.get(var).copied()
    }

    pub fn annotated(&self, var: Var) -> &AnnotatedVar {
        &self.vars[var.index() - 1]
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn lit(&mut self, lit: &AnnotatedLit) -> Lit {
        Lit::new(self.intern(&lit.var), lit.negated)
    }
}

/// A propositional expansion formula over dense variable ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpansionFormula {
    pub clauses: Vec<Vec<Lit>>,
    pub registry: Registry,
    /// For each clause, the first `(path index, clause id)` producing it.
    pub origins: Vec<(usize, ClauseId)>,
    pub paths: Vec<Vec<Assignment>>,
}

impl ExpansionFormula {
    pub fn annotated_clause(&self, index: usize) -> Vec<AnnotatedLit> {
        self.clauses[index]
            .iter()
            .map(|l| AnnotatedLit {
                var: self.registry.annotated(l.var()).clone(),
                negated: l.is_negated(),
            })
            .collect()
    }
}

/// The conjunction of `expand_path` over every root-to-leaf path,
/// deduplicated, with satisfied clauses dropped.
pub fn expand_tree(tree: &ExpansionTree, fragment: &Fragment) -> Result<ExpansionFormula, ExpansionError> {
    tree.validate(&fragment.universal_blocks())?;
    let paths = tree.paths();
    let mut registry = Registry::new();
    let mut clauses = Vec::new();
    let mut origins = Vec::new();
    let mut seen = HashSet::new();
    for (p, path) in paths.iter().enumerate() {
        for (id, clause) in &fragment.clauses {
            if let PathResult::Clause(lits) = expand_path(path, clause, fragment)? {
                let dense = canonical(lits.iter().map(|l| registry.lit(l)).collect());
                if seen.insert(dense.clone()) {
                    clauses.push(dense);
                    origins.push((p, *id));
                }
            }
        }
    }
    Ok(ExpansionFormula {
        clauses,
        registry,
        origins,
        paths,
    })
}

const MAX_LEAVES: u128 = 1 << 20;

/// The tree of every total assignment to every universal block at levels
/// `>= from_level`.
pub fn full_expansion_tree(pcnf: &Pcnf, from_level: Level) -> Result<ExpansionTree, ExpansionError> {
    if from_level == 0 || from_level > pcnf.num_levels() + 1 {
        return Err(ExpansionError::LevelOutOfRange(from_level));
    }
    let blocks: Vec<&[Var]> = pcnf.blocks()[from_level - 1..]
        .iter()
        .filter(|b| b.kind == Quantifier::Forall)
        .map(|b| b.vars.as_slice())
        .collect();
    let mut leaves: u128 = 1;
    for b in &blocks {
        leaves = leaves.saturating_mul(1u128.checked_shl(b.len() as u32).unwrap_or(u128::MAX));
        if leaves > MAX_LEAVES {
            return Err(ExpansionError::TooManyLeaves(leaves));
        }
    }
    Ok(build_full(&blocks))
}

fn build_full(blocks: &[&[Var]]) -> ExpansionTree {
    let Some((first, rest)) = blocks.split_first() else {
        return ExpansionTree::leaf();
    };
    let child = build_full(rest);
    let children = all_assignments(first)
        .into_iter()
        .map(|a| (a, child.clone()))
        .collect();
    ExpansionTree { children }
}

/// Every total assignment to `vars`, in binary counting order with the first
/// variable as the most significant bit.
pub fn all_assignments(vars: &[Var]) -> Vec<Assignment> {
    let n = vars.len();
    (0u64..1 << n)
        .map(|bits| {
            vars.iter()
                .enumerate()
                .map(|(i, &v)| (v, bits >> (n - 1 - i) & 1 == 1))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_qdimacs;
    use crate::sat::{CdclSolver, SatOracle};

    // e1=1 u1=2 c1=3 c2=4 a=5 b=6 x=7 z=8 t=9
    const EXAMPLE2: &str = "p cnf 9 9\ne 1 0\na 2 0\ne 3 4 0\na 5 0\ne 6 0\ne 7 0\na 8 0\ne 9 0\n\
        -1 3 0\n-2 3 0\n1 4 0\n2 4 0\n-3 -4 -6 -5 0\n8 9 6 0\n-8 -9 0\n7 -9 0\n-7 9 0\n";

    fn z(bit: bool) -> Assignment {
        [(Var::new(8), bit)].into_iter().collect()
    }

    fn alit(base: u32, ann: Option<bool>, negated: bool) -> AnnotatedLit {
        let a = match ann {
            Some(b) => z(b),
            None => Assignment::new(),
        };
        AnnotatedLit {
            var: AnnotatedVar::new(Var::new(base), &a),
            negated,
        }
    }

    fn example2_fragment() -> Fragment {
        let p = parse_qdimacs(EXAMPLE2).unwrap();
        Fragment::from_pcnf(&p, 5, &[5, 6, 7, 8, 9]).unwrap()
    }

    #[test]
    fn annotated_var_round_trips() {
        let a: Assignment = [(Var::new(8), false), (Var::new(2), true)].into_iter().collect();
        let v = AnnotatedVar::new(Var::new(9), &a);
        assert_eq!(v.to_string(), "v9^{2=1,8=0}");
        assert_eq!("v9^{2=1,8=0}".parse::<AnnotatedVar>().unwrap(), v);
        assert_eq!("v3^{}".parse::<AnnotatedVar>().unwrap(), AnnotatedVar::plain(Var::new(3)));
        assert!("v3^{1=2}".parse::<AnnotatedVar>().is_err());
        assert!("x3".parse::<AnnotatedVar>().is_err());
    }

    #[test]
    fn expand_path_example_two() {
        let frag = example2_fragment();
        let clause6 = &frag.clauses[1].1;
        assert_eq!(
            expand_path(&[z(false)], clause6, &frag).unwrap(),
            PathResult::Clause(vec![alit(6, None, false), alit(9, Some(false), false)])
        );
        assert_eq!(expand_path(&[z(true)], clause6, &frag).unwrap(), PathResult::Satisfied);
        assert!(matches!(
            expand_path(&[], clause6, &frag),
            Err(ExpansionError::DepthMismatch { .. })
        ));
    }

    #[test]
    fn clause_without_universals_is_unchanged() {
        let frag = example2_fragment();
        assert_eq!(
            expand_path(&[z(true)], &frag.clauses[0].1, &frag).unwrap(),
            PathResult::Clause(vec![alit(6, None, true)])
        );
    }

    #[test]
    fn example_two_expansion_formula() {
        let frag = example2_fragment();
        let tree = ExpansionTree::from_paths(&[vec![z(false)], vec![z(true)]]);
        let exp = expand_tree(&tree, &frag).unwrap();
        let got: HashSet<Vec<String>> = (0..exp.clauses.len())
            .map(|i| {
                let mut v: Vec<String> = exp.annotated_clause(i).iter().map(|l| l.to_string()).collect();
                v.sort();
                v
            })
            .collect();
        let expected: HashSet<Vec<String>> = [
            vec![alit(6, None, true)],
            vec![alit(9, Some(false), false), alit(6, None, false)],
            vec![alit(7, None, false), alit(9, Some(false), true)],
            vec![alit(7, None, true), alit(9, Some(false), false)],
            vec![alit(9, Some(true), true)],
            vec![alit(7, None, false), alit(9, Some(true), true)],
            vec![alit(7, None, true), alit(9, Some(true), false)],
        ]
        .into_iter()
        .map(|c| {
            let mut v: Vec<String> = c.iter().map(|l| l.to_string()).collect();
            v.sort();
            v
        })
        .collect();
        assert_eq!(exp.clauses.len(), 7);
        assert_eq!(got, expected);

        let mut s = CdclSolver::new();
        for c in &exp.clauses {
            s.add_clause(c);
        }
        assert!(!s.solve(&[]).is_sat());
    }

    #[test]
    fn expansion_is_deterministic() {
        let frag = example2_fragment();
        let tree = full_expansion_tree(&parse_qdimacs(EXAMPLE2).unwrap(), 6).unwrap();
        assert_eq!(expand_tree(&tree, &frag).unwrap(), expand_tree(&tree, &frag).unwrap());
    }

    #[test]
    fn small_full_expansion() {
        let p = parse_qdimacs("p cnf 2 2\na 1 0\ne 2 0\n1 2 0\n-1 -2 0\n").unwrap();
        let tree = full_expansion_tree(&p, 1).unwrap();
        let frag = Fragment::from_pcnf(&p, 1, &[1, 2]).unwrap();
        let exp = expand_tree(&tree, &frag).unwrap();
        let rendered: Vec<String> = (0..exp.clauses.len())
            .map(|i| exp.annotated_clause(i)[0].to_string())
            .collect();
        assert_eq!(rendered, vec!["v2^{1=0}", "-v2^{1=1}"]);
        let mut s = CdclSolver::new();
        for c in &exp.clauses {
            s.add_clause(c);
        }
        assert!(s.solve(&[]).is_sat());
    }

    #[test]
    fn full_tree_shapes() {
        let p = parse_qdimacs(EXAMPLE2).unwrap();
        let t = full_expansion_tree(&p, 6).unwrap();
        assert_eq!(t.paths(), vec![vec![z(false)], vec![z(true)]]);

        let q = parse_qdimacs("p cnf 2 1\ne 1 2 0\n1 2 0\n").unwrap();
        assert_eq!(full_expansion_tree(&q, 1).unwrap().paths(), vec![Vec::<Assignment>::new()]);

        let r = parse_qdimacs("p cnf 5 1\na 1 2 0\ne 3 0\na 4 5 0\n1 3 4 0\n").unwrap();
        assert_eq!(full_expansion_tree(&r, 1).unwrap().num_leaves(), 16);
    }

    #[test]
    fn size_guard() {
        let vars: Vec<String> = (1..=21).map(|v| v.to_string()).collect();
        let text = format!("p cnf 22 1\na {} 0\ne 22 0\n1 22 0\n", vars.join(" "));
        let p = parse_qdimacs(&text).unwrap();
        assert!(matches!(full_expansion_tree(&p, 1), Err(ExpansionError::TooManyLeaves(_))));
    }

    #[test]
    fn tree_validation() {
        let frag = example2_fragment();
        let blocks = frag.universal_blocks();
        let dup = ExpansionTree::from_paths(&[vec![z(false)]]);
        let mut dup2 = dup.clone();
        dup2.children.push(dup.children[0].clone());
        assert!(matches!(dup2.validate(&blocks), Err(ExpansionError::DuplicateSibling { .. })));

        let partial = ExpansionTree::from_paths(&[vec![Assignment::new()]]);
        assert!(matches!(partial.validate(&blocks), Err(ExpansionError::LabelNotTotal { .. })));

        let deep = ExpansionTree::from_paths(&[vec![z(false), z(true)]]);
        assert!(matches!(deep.validate(&blocks), Err(ExpansionError::DepthMismatch { .. })));

        assert!(matches!(
            ExpansionTree::leaf().validate(&blocks),
            Err(ExpansionError::DepthMismatch { expected: 1, found: 0 })
        ));
    }
}
