//! Prenex CNF formulas: literals, clauses, quantifier blocks, level-indexed
//! literal access, instantiation and QDIMACS input/output.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

/// 1-based index of a clause in the matrix.
pub type ClauseId = usize;

/// Quantifier level. Bound blocks occupy `1..=n`; `0` and `n + 1` are the
/// empty sentinels.
pub type Level = usize;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Var(u32);

impl Var {
    pub fn new(id: u32) -> Var {
        assert!(id >= 1, "variable ids start at 1");
        Var(id)
    }

    pub fn id(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn pos(self) -> Lit {
        Lit::new(self, false)
    }

    pub fn neg(self) -> Lit {
        Lit::new(self, true)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A literal, packed as `2 * var + sign`. Ordering sorts by variable first.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: Var, negated: bool) -> Lit {
        Lit(var.0 << 1 | negated as u32)
    }

    pub fn from_dimacs(value: i64) -> Lit {
        assert!(value != 0, "0 is not a literal");
        let var = Var::new(value.unsigned_abs() as u32);
        Lit::new(var, value < 0)
    }

    pub fn to_dimacs(self) -> i64 {
        let v = self.var().0 as i64;
        if self.is_negated() {
            -v
        } else {
            v
        }
    }

    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }

    pub fn is_negated(self) -> bool {
        self.0 & 1 == 1
    }

    /// Dense code usable as an array index (`2 * var + sign`).
    pub fn code(self) -> usize {
        self.0 as usize
    }

    pub fn from_code(code: usize) -> Lit {
        Lit(code as u32)
    }

    /// Truth value of the literal under `value` for its variable.
    pub fn eval(self, value: bool) -> bool {
        value != self.is_negated()
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

/// Sorts and deduplicates a literal list into canonical clause form.
pub fn canonical(mut lits: Vec<Lit>) -> Vec<Lit> {
    lits.sort_unstable();
    lits.dedup();
    lits
}

/// True if the literal set contains some `l` together with `¬l`.
pub fn is_tautology(lits: &[Lit]) -> bool {
    let set: HashSet<Lit> = lits.iter().copied().collect();
    lits.iter().any(|&l| set.contains(&!l))
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Quantifier {
    Exists,
    Forall,
}

impl Quantifier {
    pub fn symbol(self) -> char {
        match self {
            Quantifier::Exists => 'e',
            Quantifier::Forall => 'a',
        }
    }
}

impl fmt::Display for Quantifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantifier::Exists => write!(f, "∃"),
            Quantifier::Forall => write!(f, "∀"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct QuantBlock {
    pub kind: Quantifier,
    pub level: Level,
    pub vars: Vec<Var>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Clause {
    pub id: ClauseId,
    pub lits: Vec<Lit>,
}

impl Clause {
    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }
}

/// A partial assignment of variables to truth values.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct Assignment(BTreeMap<Var, bool>);

impl Assignment {
    pub fn new() -> Assignment {
        Assignment(BTreeMap::new())
    }

    pub fn set(&mut self, var: Var, value: bool) {
        self.0.insert(var, value);
    }

    pub fn get(&self, var: Var) -> Option<bool> {
        self.0.get(&var).copied()
    }

    pub fn contains(&self, var: Var) -> bool {
        self.0.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, bool)> + '_ {
        self.0.iter().map(|(&v, &b)| (v, b))
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.0.keys().copied()
    }

    /// `Some(true)` if the literal is satisfied, `Some(false)` if falsified,
    /// `None` if its variable is unassigned.
    pub fn lit_value(&self, lit: Lit) -> Option<bool> {
        self.get(lit.var()).map(|v| lit.eval(v))
    }

    pub fn satisfies_any(&self, lits: &[Lit]) -> bool {
        lits.iter().any(|&l| self.lit_value(l) == Some(true))
    }

    /// Merges `other` into `self`; entries of `other` win on conflict.
    pub fn extend(&mut self, other: &Assignment) {
        for (v, b) in other.iter() {
            self.set(v, b);
        }
    }

    /// The assignment as QDIMACS-style literals, sorted by variable.
    pub fn to_lits(&self) -> Vec<Lit> {
        self.iter().map(|(v, b)| Lit::new(v, !b)).collect()
    }

    pub fn from_lits(lits: &[Lit]) -> Assignment {
        let mut a = Assignment::new();
        for &l in lits {
            a.set(l.var(), !l.is_negated());
        }
        a
    }
}

impl FromIterator<(Var, bool)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (Var, bool)>>(iter: T) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, (v, b)) in self.iter().enumerate() {
            if n > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}→{}", v, b as u8)?;
        }
        write!(f, "}}")
    }
}

/// Selects which projection of a clause `lit_at` returns.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LevelRange {
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
}

impl LevelRange {
    fn contains(self, level: Level, k: Level) -> bool {
        match self {
            LevelRange::Eq => level == k,
            LevelRange::Lt => level < k,
            LevelRange::Gt => level > k,
            LevelRange::Le => level <= k,
            LevelRange::Ge => level >= k,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormulaError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: variable {var} exceeds declared maximum {max}")]
    VariableOutOfRange { line: usize, var: u64, max: u32 },
    #[error("line {line}: quantifier line binds no variables")]
    EmptyQuantifierBlock { line: usize },
    #[error("variable {0} is bound more than once")]
    DuplicateBinding(u32),
    #[error("header declares {declared} clauses but {found} were given")]
    ClauseCountMismatch { declared: usize, found: usize },
    #[error("clause {0} is out of range")]
    ClauseOutOfRange(ClauseId),
    #[error("level {0} is out of range")]
    LevelOutOfRange(Level),
    #[error("variable {0} is not bound in the prefix")]
    UnboundVariable(u32),
}

/// A closed formula in prenex conjunctive normal form.
///
/// Blocks alternate in kind and carry consecutive levels starting at 1.
/// Clause ids are dense `1..=m`, and every literal's variable is bound in
/// exactly one block.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Pcnf {
    max_var: u32,
    blocks: Vec<QuantBlock>,
    clauses: Vec<Clause>,
    var_level: Vec<Level>,
}

impl Pcnf {
    /// Builds a formula from a raw prefix and raw clauses.
    ///
    /// Empty blocks are dropped and adjacent blocks of the same kind merged.
    /// Variables that occur in clauses but are not bound are added to an
    /// outermost existential block. Clause literals are deduplicated and
    /// sorted; tautologies are kept.
    pub fn new(
        max_var: u32,
        prefix: Vec<(Quantifier, Vec<Var>)>,
        clauses: Vec<Vec<Lit>>,
    ) -> Result<Pcnf, FormulaError> {
        let mut max_var = max_var;
        for lit in clauses.iter().flatten() {
            max_var = max_var.max(lit.var().id());
        }
        for &(_, ref vars) in &prefix {
            for v in vars {
                max_var = max_var.max(v.id());
            }
        }

        let mut bound = vec![false; max_var as usize + 1];
        for (_, vars) in &prefix {
            for &v in vars {
                if bound[v.index()] {
                    return Err(FormulaError::DuplicateBinding(v.id()));
                }
                bound[v.index()] = true;
            }
        }

        let mut free = Vec::new();
        let mut seen_free = vec![false; max_var as usize + 1];
        for lit in clauses.iter().flatten() {
            let v = lit.var();
            if !bound[v.index()] && !seen_free[v.index()] {
                seen_free[v.index()] = true;
                free.push(v);
            }
        }
        free.sort_unstable();

        let mut raw: Vec<(Quantifier, Vec<Var>)> = Vec::with_capacity(prefix.len() + 1);
        if !free.is_empty() {
            raw.push((Quantifier::Exists, free));
        }
        raw.extend(prefix);

        let mut blocks: Vec<QuantBlock> = Vec::new();
        for (kind, vars) in raw {
            if vars.is_empty() {
                continue;
            }
            match blocks.last_mut() {
                Some(last) if last.kind == kind => last.vars.extend(vars),
                _ => blocks.push(QuantBlock {
                    kind,
                    level: blocks.len() + 1,
                    vars,
                }),
            }
        }

        let mut var_level = vec![0; max_var as usize + 1];
        for block in &blocks {
            for v in &block.vars {
                var_level[v.index()] = block.level;
            }
        }

        let clauses = clauses
            .into_iter()
            .enumerate()
            .map(|(n, lits)| Clause {
                id: n + 1,
                lits: canonical(lits),
            })
            .collect();

        Ok(Pcnf {
            max_var,
            blocks,
            clauses,
            var_level,
        })
    }

    pub fn max_var(&self) -> u32 {
        self.max_var
    }

    pub fn blocks(&self) -> &[QuantBlock] {
        &self.blocks
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Number of quantifier levels `n`.
    pub fn num_levels(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    /// Number of bound variables.
    pub fn num_vars(&self) -> usize {
        self.blocks.iter().map(|b| b.vars.len()).sum()
    }

    pub fn clause(&self, id: ClauseId) -> &Clause {
        &self.clauses[id - 1]
    }

    pub fn block(&self, level: Level) -> &QuantBlock {
        &self.blocks[level - 1]
    }

    pub fn quantifier(&self, level: Level) -> Quantifier {
        self.blocks[level - 1].kind
    }

    /// Level of a bound variable, `None` for unbound or out-of-range ids.
    pub fn level_of(&self, var: Var) -> Option<Level> {
        match self.var_level.get(var.index()) {
            Some(&l) if l > 0 => Some(l),
            _ => None,
        }
    }

    pub(crate) fn lit_level(&self, lit: Lit) -> Level {
        self.var_level[lit.var().index()]
    }

    pub fn is_universal(&self, var: Var) -> bool {
        self.level_of(var)
            .is_some_and(|l| self.quantifier(l) == Quantifier::Forall)
    }

    /// Highest level of a literal in the clause, 0 for the empty clause.
    pub fn max_level(&self, id: ClauseId) -> Level {
        self.clause(id)
            .lits
            .iter()
            .map(|&l| self.lit_level(l))
            .max()
            .unwrap_or(0)
    }

    /// Literals of clause `i` whose level lies in `range` relative to `k`.
    ///
    /// Accepts `0 <= k <= n + 1`; the projection at exactly `0` or `n + 1`
    /// is empty.
    pub fn lit_at(&self, i: ClauseId, k: Level, range: LevelRange) -> Result<Vec<Lit>, FormulaError> {
        if i == 0 || i > self.clauses.len() {
            return Err(FormulaError::ClauseOutOfRange(i));
        }
        if k > self.blocks.len() + 1 {
            return Err(FormulaError::LevelOutOfRange(k));
        }
        Ok(self.project(i, k, range))
    }

    /// Unchecked variant of [`Pcnf::lit_at`] for callers that already
    /// validated `i` and `k`.
    pub fn project(&self, i: ClauseId, k: Level, range: LevelRange) -> Vec<Lit> {
        self.clause(i)
            .lits
            .iter()
            .copied()
            .filter(|&l| range.contains(self.lit_level(l), k))
            .collect()
    }

    pub fn has_lits(&self, i: ClauseId, k: Level, range: LevelRange) -> bool {
        self.clause(i)
            .lits
            .iter()
            .any(|&l| range.contains(self.lit_level(l), k))
    }

    /// Substitutes `alpha` into the formula.
    ///
    /// Satisfied clauses disappear, falsified literals are removed (a clause
    /// can become empty), assigned variables leave the prefix and levels are
    /// renumbered. Clause ids of the result are dense again.
    pub fn instantiate(&self, alpha: &Assignment) -> Result<Pcnf, FormulaError> {
        for v in alpha.vars() {
            if self.level_of(v).is_none() {
                return Err(FormulaError::UnboundVariable(v.id()));
            }
        }
        let prefix = self
            .blocks
            .iter()
            .map(|b| {
                let vars = b.vars.iter().copied().filter(|&v| !alpha.contains(v)).collect();
                (b.kind, vars)
            })
            .collect();
        let clauses = self
            .clauses
            .iter()
            .filter(|c| !alpha.satisfies_any(&c.lits))
            .map(|c| {
                c.lits
                    .iter()
                    .copied()
                    .filter(|&l| !alpha.contains(l.var()))
                    .collect()
            })
            .collect();
        Pcnf::new(self.max_var, prefix, clauses)
    }

    /// Parses QDIMACS text.
    pub fn parse_qdimacs(text: &str) -> Result<Pcnf, FormulaError> {
        parse_qdimacs(text)
    }

    pub fn to_qdimacs(&self) -> String {
        emit_qdimacs(self)
    }
}

impl fmt::Display for Pcnf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            write!(f, "{}", b.kind)?;
            for v in &b.vars {
                write!(f, " {}", v)?;
            }
            write!(f, ". ")?;
        }
        for c in &self.clauses {
            write!(f, "(")?;
            for (n, l) in c.lits.iter().enumerate() {
                if n > 0 {
                    write!(f, " ∨ ")?;
                }
                write!(f, "{}", l)?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Parses a QDIMACS document.
///
/// Comment lines (`c ...`) are skipped, prefix lines (`e`/`a`) must precede
/// the clauses, and clauses are `0`-terminated and may span lines.
pub fn parse_qdimacs(text: &str) -> Result<Pcnf, FormulaError> {
    let mut header: Option<(u32, usize)> = None;
    let mut prefix: Vec<(Quantifier, Vec<Var>)> = Vec::new();
    let mut clauses: Vec<Vec<Lit>> = Vec::new();
    let mut current: Vec<Lit> = Vec::new();
    let mut in_matrix = false;
    let mut last_line = 0;

    let syntax = |line: usize, message: &str| FormulaError::Syntax {
        line,
        message: message.to_string(),
    };

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        last_line = line;
        let mut tokens = raw.split_whitespace().peekable();
        let Some(&first) = tokens.peek() else {
            continue;
        };
        if first == "c" || first.starts_with('c') && first.chars().all(|ch| ch.is_alphabetic()) {
            continue;
        }
        match first {
            "p" => {
                if header.is_some() {
                    return Err(syntax(line, "duplicate header"));
                }
                tokens.next();
                if tokens.next() != Some("cnf") {
                    return Err(syntax(line, "expected `p cnf <vars> <clauses>`"));
                }
                let vars = tokens
                    .next()
                    .and_then(|t| t.parse::<u32>().ok())
                    .ok_or_else(|| syntax(line, "invalid variable count"))?;
                let count = tokens
                    .next()
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| syntax(line, "invalid clause count"))?;
                if tokens.next().is_some() {
                    return Err(syntax(line, "trailing tokens after header"));
                }
                header = Some((vars, count));
            }
            "e" | "a" => {
                let Some((max, _)) = header else {
                    return Err(syntax(line, "quantifier line before header"));
                };
                if in_matrix {
                    return Err(syntax(line, "quantifier line after clauses"));
                }
                let kind = if first == "e" {
                    Quantifier::Exists
                } else {
                    Quantifier::Forall
                };
                tokens.next();
                let mut vars = Vec::new();
                let mut terminated = false;
                for tok in tokens {
                    if terminated {
                        return Err(syntax(line, "tokens after terminating 0"));
                    }
                    let value: i64 = tok
                        .parse()
                        .map_err(|_| syntax(line, &format!("invalid token `{tok}`")))?;
                    if value == 0 {
                        terminated = true;
                    } else if value < 0 {
                        return Err(syntax(line, "negative variable in quantifier line"));
                    } else if value > max as i64 {
                        return Err(FormulaError::VariableOutOfRange {
                            line,
                            var: value as u64,
                            max,
                        });
                    } else {
                        vars.push(Var::new(value as u32));
                    }
                }
                if !terminated {
                    return Err(syntax(line, "quantifier line is not terminated by 0"));
                }
                if vars.is_empty() {
                    return Err(FormulaError::EmptyQuantifierBlock { line });
                }
                prefix.push((kind, vars));
            }
            _ => {
                let Some((max, _)) = header else {
                    return Err(syntax(line, "clause before header"));
                };
                in_matrix = true;
                for tok in tokens {
                    let value: i64 = tok
                        .parse()
                        .map_err(|_| syntax(line, &format!("invalid token `{tok}`")))?;
                    if value == 0 {
                        clauses.push(std::mem::take(&mut current));
                    } else if value.unsigned_abs() > max as u64 {
                        return Err(FormulaError::VariableOutOfRange {
                            line,
                            var: value.unsigned_abs(),
                            max,
                        });
                    } else {
                        current.push(Lit::from_dimacs(value));
                    }
                }
            }
        }
    }

    let Some((max, count)) = header else {
        return Err(syntax(last_line.max(1), "missing `p cnf` header"));
    };
    if !current.is_empty() {
        return Err(syntax(last_line, "last clause is not terminated by 0"));
    }
    if clauses.len() != count {
        return Err(FormulaError::ClauseCountMismatch {
            declared: count,
            found: clauses.len(),
        });
    }
    Pcnf::new(max, prefix, clauses)
}

/// Renders the formula as QDIMACS.
pub fn emit_qdimacs(pcnf: &Pcnf) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "p cnf {} {}", pcnf.max_var, pcnf.clauses.len());
    for b in &pcnf.blocks {
        let _ = write!(out, "{}", b.kind.symbol());
        for v in &b.vars {
            let _ = write!(out, " {}", v);
        }
        out.push_str(" 0\n");
    }
    for c in &pcnf.clauses {
        for l in &c.lits {
            let _ = write!(out, "{} ", l);
        }
        out.push_str("0\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE1: &str = "p cnf 4 5\ne 1 0\na 2 0\ne 3 4 0\n-1 3 0\n-2 3 0\n1 4 0\n2 4 0\n-3 -4 0\n";

    fn lits(v: &[i64]) -> Vec<Lit> {
        v.iter().map(|&x| Lit::from_dimacs(x)).collect()
    }

    #[test]
    fn literal_negation_is_involution() {
        let l = Lit::from_dimacs(-7);
        assert_eq!(!!l, l);
        assert_eq!((!l).to_dimacs(), 7);
        assert_eq!(l.var(), Var::new(7));
    }

    #[test]
    fn parses_example_one() {
        let p = parse_qdimacs(EXAMPLE1).unwrap();
        assert_eq!(p.num_levels(), 3);
        assert_eq!(p.num_clauses(), 5);
        assert_eq!(p.quantifier(2), Quantifier::Forall);
        assert_eq!(p.block(3).vars, vec![Var::new(3), Var::new(4)]);
        assert_eq!(p.clause(5).lits, lits(&[-3, -4]));
    }

    #[test]
    fn parses_single_clause() {
        let p = parse_qdimacs("p cnf 1 1\ne 1 0\n1 0\n").unwrap();
        assert_eq!(p.num_levels(), 1);
        assert_eq!(p.block(1).vars, vec![Var::new(1)]);
        assert_eq!(p.clause(1).lits, lits(&[1]));
    }

    #[test]
    fn rejects_variable_beyond_header() {
        let err = parse_qdimacs("p cnf 2 1\ne 1 0\n1 3 0\n").unwrap_err();
        assert_eq!(
            err,
            FormulaError::VariableOutOfRange {
                line: 3,
                var: 3,
                max: 2
            }
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse_qdimacs("p cnf 2 1\ne 0\n1 0\n"),
            Err(FormulaError::EmptyQuantifierBlock { line: 2 })
        ));
        assert!(matches!(
            parse_qdimacs("p cnf 2 1\ne 1 0\na 1 0\n1 0\n"),
            Err(FormulaError::DuplicateBinding(1))
        ));
        assert!(matches!(
            parse_qdimacs("p cnf 2 2\ne 1 0\n1 0\n"),
            Err(FormulaError::ClauseCountMismatch { declared: 2, found: 1 })
        ));
        assert!(matches!(
            parse_qdimacs("p cnf 2 1\ne 1 0\n1 x 0\n"),
            Err(FormulaError::Syntax { line: 3, .. })
        ));
        assert!(matches!(
            parse_qdimacs("p cnf 2 1\n1 0\ne 2 0\n"),
            Err(FormulaError::Syntax { line: 3, .. })
        ));
        assert!(matches!(
            parse_qdimacs("e 1 0\n"),
            Err(FormulaError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn comments_and_whitespace_are_tolerated() {
        let p = parse_qdimacs("c hello\np  cnf\t3 2\nc mid\ne\t1  0\n1 \t -2\n 0\n3 0\n").unwrap();
        assert_eq!(p.num_clauses(), 2);
        assert_eq!(p.clause(1).lits, lits(&[1, -2]));
    }

    #[test]
    fn free_variables_join_outermost_existential() {
        let p = parse_qdimacs("p cnf 3 1\ne 1 0\na 2 0\n1 2 3 0\n").unwrap();
        assert_eq!(p.num_levels(), 2);
        assert_eq!(p.block(1).vars, vec![Var::new(3), Var::new(1)]);

        let q = parse_qdimacs("p cnf 3 1\na 2 0\ne 1 0\n1 2 3 0\n").unwrap();
        assert_eq!(q.num_levels(), 3);
        assert_eq!(q.quantifier(1), Quantifier::Exists);
        assert_eq!(q.block(1).vars, vec![Var::new(3)]);
    }

    #[test]
    fn adjacent_blocks_are_merged() {
        let p = parse_qdimacs("p cnf 3 1\ne 1 0\ne 2 0\na 3 0\n1 2 3 0\n").unwrap();
        assert_eq!(p.num_levels(), 2);
        assert_eq!(p.block(1).vars.len(), 2);
        assert_eq!(p.level_of(Var::new(3)), Some(2));
    }

    #[test]
    fn lit_at_projections() {
        let p = parse_qdimacs(EXAMPLE1).unwrap();
        assert_eq!(p.lit_at(1, 3, LevelRange::Eq).unwrap(), lits(&[3]));
        assert_eq!(p.lit_at(1, 3, LevelRange::Lt).unwrap(), lits(&[-1]));
        assert!(p.lit_at(4, 0, LevelRange::Eq).unwrap().is_empty());
        assert!(p.lit_at(4, 4, LevelRange::Eq).unwrap().is_empty());
        assert_eq!(p.lit_at(6, 1, LevelRange::Eq), Err(FormulaError::ClauseOutOfRange(6)));
        assert_eq!(p.lit_at(1, 5, LevelRange::Eq), Err(FormulaError::LevelOutOfRange(5)));
    }

    #[test]
    fn instantiate_example_one() {
        let p = parse_qdimacs(EXAMPLE1).unwrap();
        let alpha: Assignment = [(Var::new(1), true)].into_iter().collect();
        let q = p.instantiate(&alpha).unwrap();
        assert_eq!(q.num_levels(), 2);
        assert_eq!(q.quantifier(1), Quantifier::Forall);
        assert_eq!(q.block(1).vars, vec![Var::new(2)]);
        assert_eq!(q.block(2).vars, vec![Var::new(3), Var::new(4)]);
        let got: Vec<Vec<Lit>> = q.clauses().iter().map(|c| c.lits.clone()).collect();
        assert_eq!(got, vec![lits(&[3]), lits(&[-2, 3]), lits(&[2, 4]), lits(&[-3, -4])]);
    }

    #[test]
    fn instantiate_keeps_emptied_clause() {
        // QParity tail (z ∨ t)(¬z ∨ ¬t) under z → 1.
        let p = parse_qdimacs("p cnf 2 2\na 1 0\ne 2 0\n1 2 0\n-1 -2 0\n").unwrap();
        let q = p.instantiate(&[(Var::new(1), true)].into_iter().collect()).unwrap();
        assert_eq!(q.num_clauses(), 1);
        assert_eq!(q.clause(1).lits, lits(&[-2]));

        let r = q.instantiate(&[(Var::new(2), true)].into_iter().collect()).unwrap();
        assert_eq!(r.num_levels(), 0);
        assert!(r.clause(1).is_empty());
    }

    #[test]
    fn instantiate_with_empty_assignment_is_identity() {
        let p = parse_qdimacs(EXAMPLE1).unwrap();
        assert_eq!(p.instantiate(&Assignment::new()).unwrap(), p);
    }

    #[test]
    fn instantiation_merges_blocks() {
        let p = parse_qdimacs(EXAMPLE1).unwrap();
        let q = p.instantiate(&[(Var::new(2), false)].into_iter().collect()).unwrap();
        assert_eq!(q.num_levels(), 1);
        assert_eq!(q.block(1).vars.len(), 3);
    }

    #[test]
    fn emit_round_trips_example_one() {
        let p = parse_qdimacs(EXAMPLE1).unwrap();
        assert_eq!(parse_qdimacs(&emit_qdimacs(&p)).unwrap(), p);
    }

    #[test]
    fn empty_clause_emits_bare_zero() {
        let p = Pcnf::new(1, vec![(Quantifier::Exists, vec![Var::new(1)])], vec![vec![]]).unwrap();
        let text = emit_qdimacs(&p);
        assert_eq!(text.lines().last(), Some("0"));
        assert_eq!(parse_qdimacs(&text).unwrap(), p);
    }
}
