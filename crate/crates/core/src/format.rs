//! JSON proof documents.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calculus::{ProofObject, RedResProof, Rule, RuleApp};
use crate::expansion::{expand_tree, AnnotatedVar, ExpansionTree, Fragment, Registry};
use crate::formula::{emit_qdimacs, Assignment, ClauseId, Level, Lit, Pcnf, Var};
use crate::sat::{ResNode, ResNodeKind, ResolutionProof};

pub const FORMAT_TAG: &str = "redres-proof-1";

#[derive(Debug, Error)]
pub enum ProofFormatError {
    #[error("malformed proof document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported document format `{0}`")]
    Format(String),
    #[error("proof was written for a different formula (hash {found}, expected {expected})")]
    HashMismatch { expected: String, found: String },
    #[error("bad literal `{0}`")]
    BadLiteral(String),
}

/// Hex SHA-256 of the formula's QDIMACS rendering.
pub fn formula_hash(pcnf: &Pcnf) -> String {
    Sha256::digest(emit_qdimacs(pcnf).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    formula_hash: String,
    root: usize,
    nodes: Vec<NodeDoc>,
    apps: Vec<AppDoc>,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    clauses: Vec<ClauseId>,
    level: Level,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    fresh: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
enum AppDoc {
    Init {
        clause: ClauseId,
        level: Level,
        conclusions: Vec<usize>,
    },
    Res {
        premises: Vec<usize>,
        refutation: Vec<StepDoc<i64>>,
        conclusions: Vec<usize>,
    },
    ForallRed {
        premise: usize,
        conclusions: Vec<usize>,
    },
    Strengthen {
        premise: usize,
        clause: ClauseId,
        group: Vec<ClauseId>,
        fresh: u32,
        conclusions: Vec<usize>,
    },
    ExpRes {
        level: Level,
        clauses: Vec<ClauseId>,
        tree: Vec<TreeDoc>,
        refutation: Vec<StepDoc<String>>,
        conclusions: Vec<usize>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StepDoc<L> {
    Leaf { input: usize, clause: Vec<L> },
    Resolve { left: usize, right: usize, pivot: L, clause: Vec<L> },
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    label: Vec<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<TreeDoc>,
}

fn tree_to_doc(tree: &ExpansionTree) -> Vec<TreeDoc> {
    tree.children
        .iter()
        .map(|(label, child)| TreeDoc {
            label: label.to_lits().iter().map(|l| l.to_dimacs()).collect(),
            children: tree_to_doc(child),
        })
        .collect()
}

fn tree_from_doc(docs: Vec<TreeDoc>) -> Result<ExpansionTree, ProofFormatError> {
    let children = docs
        .into_iter()
        .map(|d| {
            let lits = d.label.iter().map(|&x| dimacs(x)).collect::<Result<Vec<_>, _>>()?;
            Ok((Assignment::from_lits(&lits), tree_from_doc(d.children)?))
        })
        .collect::<Result<_, ProofFormatError>>()?;
    Ok(ExpansionTree { children })
}

fn dimacs(x: i64) -> Result<Lit, ProofFormatError> {
    if x == 0 || x.unsigned_abs() > u32::MAX as u64 / 2 {
        return Err(ProofFormatError::BadLiteral(x.to_string()));
    }
    Ok(Lit::from_dimacs(x))
}

fn refutation_to_doc<L>(pi: &ResolutionProof, lit: impl Fn(Lit) -> L, var: impl Fn(Var) -> L) -> Vec<StepDoc<L>> {
    pi.nodes
        .iter()
        .map(|n| {
            let clause = n.clause.iter().map(|&l| lit(l)).collect();
            match n.kind {
                ResNodeKind::Leaf { input } => StepDoc::Leaf { input, clause },
                ResNodeKind::Resolvent { left, right, pivot } => StepDoc::Resolve {
                    left,
                    right,
                    pivot: var(pivot),
                    clause,
                },
            }
        })
        .collect()
}

fn refutation_from_doc<L>(
    steps: Vec<StepDoc<L>>,
    lit: impl Fn(&L) -> Result<Lit, ProofFormatError>,
    var: impl Fn(&L) -> Result<Var, ProofFormatError>,
) -> Result<ResolutionProof, ProofFormatError> {
    let nodes = steps
        .into_iter()
        .map(|s| {
            Ok(match s {
                StepDoc::Leaf { input, clause } => ResNode {
                    clause: clause.iter().map(&lit).collect::<Result<_, _>>()?,
                    kind: ResNodeKind::Leaf { input },
                },
                StepDoc::Resolve {
                    left,
                    right,
                    pivot,
                    clause,
                } => ResNode {
                    clause: clause.iter().map(&lit).collect::<Result<_, _>>()?,
                    kind: ResNodeKind::Resolvent {
                        left,
                        right,
                        pivot: var(&pivot)?,
                    },
                },
            })
        })
        .collect::<Result<_, ProofFormatError>>()?;
    Ok(ResolutionProof { nodes })
}

/// The variable registry an expansion step's refutation is written over.
/// When the step itself is malformed the registry stays empty and names are
/// interned on first use, leaving the rejection to the proof checker.
fn expansion_registry(pcnf: &Pcnf, level: Level, clauses: &[ClauseId], tree: &ExpansionTree) -> Registry {
    Fragment::from_pcnf(pcnf, level, clauses)
        .and_then(|f| expand_tree(tree, &f))
        .map(|e| e.registry)
        .unwrap_or_default()
}

/// Serialises `proof` for `pcnf` as pretty-printed JSON.
pub fn write_proof(pcnf: &Pcnf, proof: &RedResProof) -> String {
    let nodes = proof
        .nodes
        .iter()
        .map(|n| NodeDoc {
            clauses: n.clauses.clone(),
            level: n.level,
            fresh: n.fresh.iter().map(|l| l.to_dimacs()).collect(),
        })
        .collect();
    let apps = proof
        .apps
        .iter()
        .map(|app| {
            let conclusions = app.conclusions.clone();
            match &app.rule {
                Rule::Init { clause, level } => AppDoc::Init {
                    clause: *clause,
                    level: *level,
                    conclusions,
                },
                Rule::Res { premises, refutation } => AppDoc::Res {
                    premises: premises.clone(),
                    refutation: refutation_to_doc(refutation, |l| l.to_dimacs(), |v| v.id() as i64),
                    conclusions,
                },
                Rule::ForallRed { premise } => AppDoc::ForallRed {
                    premise: *premise,
                    conclusions,
                },
                Rule::Strengthen {
                    premise,
                    clause,
                    group,
                    fresh,
                } => AppDoc::Strengthen {
                    premise: *premise,
                    clause: *clause,
                    group: group.clone(),
                    fresh: fresh.id(),
                    conclusions,
                },
                Rule::ExpRes {
                    level,
                    clauses,
                    tree,
                    refutation,
                } => {
                    let registry = expansion_registry(pcnf, *level, clauses, tree);
                    let name = |v: Var| {
                        if v.index() <= registry.len() {
                            registry.annotated(v).to_string()
                        } else {
                            format!("#{}", v.id())
                        }
                    };
                    AppDoc::ExpRes {
                        level: *level,
                        clauses: clauses.clone(),
                        tree: tree_to_doc(tree),
                        refutation: refutation_to_doc(
                            refutation,
                            |l| format!("{}{}", if l.is_negated() { "-" } else { "" }, name(l.var())),
                            name,
                        ),
                        conclusions,
                    }
                }
            }
        })
        .collect();
    let doc = Document {
        format: FORMAT_TAG.to_string(),
        formula_hash: formula_hash(pcnf),
        root: proof.root,
        nodes,
        apps,
    };
    serde_json::to_string_pretty(&doc).expect("proof documents serialise")
}

fn annotated_var(registry: &std::cell::RefCell<Registry>, name: &str) -> Result<Var, ProofFormatError> {
    let parsed: AnnotatedVar = name.parse().map_err(|_| ProofFormatError::BadLiteral(name.to_string()))?;
    let mut reg = registry.borrow_mut();
    Ok(match reg.get(&parsed) {
        Some(v) => v,
        None => reg.intern(&parsed),
    })
}

fn annotated_lit(registry: &std::cell::RefCell<Registry>, text: &str) -> Result<Lit, ProofFormatError> {
    let (negated, name) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    Ok(Lit::new(annotated_var(registry, name)?, negated))
}

/// Parses a proof document for `pcnf`. Only the shape is validated here;
/// soundness is the proof checker's job.
pub fn read_proof(pcnf: &Pcnf, text: &str) -> Result<RedResProof, ProofFormatError> {
    let doc: Document = serde_json::from_str(text)?;
    if doc.format != FORMAT_TAG {
        return Err(ProofFormatError::Format(doc.format));
    }
    let expected = formula_hash(pcnf);
    if doc.formula_hash != expected {
        return Err(ProofFormatError::HashMismatch {
            expected,
            found: doc.formula_hash,
        });
    }
    let nodes = doc
        .nodes
        .into_iter()
        .map(|n| {
            let fresh = n.fresh.iter().map(|&x| dimacs(x)).collect::<Result<Vec<_>, _>>()?;
            Ok(ProofObject::new(n.clauses, n.level, fresh))
        })
        .collect::<Result<Vec<_>, ProofFormatError>>()?;
    let mut apps = Vec::with_capacity(doc.apps.len());
    for app in doc.apps {
        let (rule, conclusions) = match app {
            AppDoc::Init {
                clause,
                level,
                conclusions,
            } => (Rule::Init { clause, level }, conclusions),
            AppDoc::Res {
                premises,
                refutation,
                conclusions,
            } => {
                let refutation = refutation_from_doc(refutation, |&x| dimacs(x), |&x| dimacs(x).map(|l| l.var()))?;
                (Rule::Res { premises, refutation }, conclusions)
            }
            AppDoc::ForallRed { premise, conclusions } => (Rule::ForallRed { premise }, conclusions),
            AppDoc::Strengthen {
                premise,
                clause,
                group,
                fresh,
                conclusions,
            } => {
                if fresh == 0 {
                    return Err(ProofFormatError::BadLiteral("0".to_string()));
                }
                (
                    Rule::Strengthen {
                        premise,
                        clause,
                        group,
                        fresh: Var::new(fresh),
                    },
                    conclusions,
                )
            }
            AppDoc::ExpRes {
                level,
                clauses,
                tree,
                refutation,
                conclusions,
            } => {
                let tree = tree_from_doc(tree)?;
                let registry = std::cell::RefCell::new(expansion_registry(pcnf, level, &clauses, &tree));
                let refutation = refutation_from_doc(
                    refutation,
                    |s| annotated_lit(&registry, s),
                    |s| annotated_var(&registry, s),
                )?;
                (
                    Rule::ExpRes {
                        level,
                        clauses,
                        tree,
                        refutation,
                    },
                    conclusions,
                )
            }
        };
        apps.push(RuleApp { rule, conclusions });
    }
    Ok(RedResProof {
        nodes,
        apps,
        root: doc.root,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{gen_crn, gen_crn_strengthened_proof, gen_example1, gen_example2};
    use crate::calculus::check_proof;
    use crate::solver::{solve, RefinementMode, SolverConfig};

    #[test]
    fn round_trip_preserves_proofs() {
        let p = gen_example2();
        for mode in RefinementMode::ALL {
            let proof = solve(&p, SolverConfig::with_mode(mode).proof_logging(true))
                .unwrap()
                .proof
                .unwrap();
            let text = write_proof(&p, &proof);
            let back = read_proof(&p, &text).unwrap();
            assert_eq!(back, proof, "{mode:?}");
            check_proof(&p, &back).unwrap();
        }
        let crn = gen_crn(3);
        let proof = gen_crn_strengthened_proof(3);
        assert_eq!(read_proof(&crn, &write_proof(&crn, &proof)).unwrap(), proof);
    }

    #[test]
    fn expansion_refutations_use_annotated_names() {
        let p = gen_example2();
        let proof = solve(&p, SolverConfig::with_mode(RefinementMode::Expansion).proof_logging(true))
            .unwrap()
            .proof
            .unwrap();
        assert!(proof.count_rule("exp-res") >= 1);
        assert!(write_proof(&p, &proof).contains("^{8="));
    }

    #[test]
    fn rejects_other_formulas_and_garbage() {
        let p = gen_example1();
        let proof = solve(&p, SolverConfig::default().proof_logging(true)).unwrap().proof.unwrap();
        let text = write_proof(&p, &proof);
        assert!(matches!(
            read_proof(&gen_example2(), &text),
            Err(ProofFormatError::HashMismatch { .. })
        ));
        assert!(matches!(read_proof(&p, "{"), Err(ProofFormatError::Json(_))));
        let other = text.replace(FORMAT_TAG, "other-format");
        assert!(matches!(read_proof(&p, &other), Err(ProofFormatError::Format(_))));
    }

    #[test]
    fn hash_is_hex_sha256() {
        let h = formula_hash(&gen_example1());
        assert_eq!(h.len(), 64);
        assert!(h.chars().all(|c| c.is_ascii_hexdigit()));
    }
}
