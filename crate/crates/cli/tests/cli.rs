use std::io::Write;
use std::process::{Command, Output, Stdio};

fn redres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redres")).args(args).output().unwrap()
}

fn redres_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_redres"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_then_check_first_example() {
    let dir = tempfile::tempdir().unwrap();
    let formula = dir.path().join("example1.qdimacs");
    let proof = dir.path().join("p.json");
    let f = formula.to_str().unwrap();
    let p = proof.to_str().unwrap();
    assert_eq!(redres(&["gen", "example1", "-o", f]).status.code(), Some(0));

    let out = redres(&["solve", "--refinement", "both", f, "--proof", p]);
    assert_eq!(out.status.code(), Some(20), "{}", stderr(&out));
    assert_eq!(stdout(&out), "s cnf FALSE\n");

    let out = redres(&["check", p, f]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("proof ok"));
}

#[test]
fn every_mode_produces_checkable_proofs() {
    let dir = tempfile::tempdir().unwrap();
    for family in ["example2", "crn", "dag", "qparity", "composite"] {
        let formula = dir.path().join(format!("{family}.qdimacs"));
        let f = formula.to_str().unwrap();
        assert_eq!(redres(&["gen", family, "--n", "3", "-o", f]).status.code(), Some(0));
        for mode in ["plain", "strengthen", "expansion", "both"] {
            let proof = dir.path().join(format!("{family}-{mode}.json"));
            let p = proof.to_str().unwrap();
            let out = redres(&["solve", "--refinement", mode, "--proof", p, f]);
            assert_eq!(out.status.code(), Some(20), "{family} {mode}");
            let out = redres(&["check", p, f]);
            assert_eq!(out.status.code(), Some(0), "{family} {mode}: {}", stderr(&out));
        }
    }
}

#[test]
fn true_formula_exits_ten_with_stats() {
    let out = redres_stdin(&["solve", "--stats"], b"p cnf 2 1\na 1 0\ne 2 0\n1 2 0\n");
    assert_eq!(out.status.code(), Some(10));
    let text = stdout(&out);
    assert!(text.starts_with("s cnf TRUE\n"));
    assert!(text.contains("sat_calls[1] "));
    assert!(text.contains("refinements.clausal "));
    for line in text.lines().skip(1) {
        assert_eq!(line.split(' ').count(), 2, "{line}");
    }
}

#[test]
fn generator_pipes_into_oracle() {
    let generated = redres(&["gen", "qparity", "--n", "3"]);
    assert_eq!(generated.status.code(), Some(0));
    let out = redres_stdin(&["oracle"], &generated.stdout);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "FALSE\n");
    let out = redres_stdin(&["oracle", "-"], b"p cnf 1 1\na 1 0\n1 -1 0\n");
    assert_eq!(stdout(&out), "TRUE\n");
}

#[test]
fn random_generation_is_reproducible() {
    let a = redres(&["gen", "random", "--seed", "7"]);
    let b = redres(&["gen", "random", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("p cnf 6 10"));
}

#[test]
fn missing_formula_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let proof = dir.path().join("p.json");
    std::fs::write(&proof, "{}").unwrap();
    let out = redres(&["check", proof.to_str().unwrap(), "missing.qdimacs"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot read formula"));
    assert_eq!(stderr(&out).lines().count(), 1);
}

#[test]
fn tampered_proof_names_node_and_rule() {
    let dir = tempfile::tempdir().unwrap();
    let formula = dir.path().join("e.qdimacs");
    let proof = dir.path().join("p.json");
    let f = formula.to_str().unwrap();
    let p = proof.to_str().unwrap();
    redres(&["gen", "example1", "-o", f]);
    redres(&["solve", "--refinement", "plain", "--proof", p, f]);
    let text = std::fs::read_to_string(&proof).unwrap();
    let tampered = text.replacen("\"level\": 3", "\"level\": 2", 1);
    assert_ne!(text, tampered);
    std::fs::write(&proof, tampered).unwrap();
    let out = redres(&["check", p, f]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("node ") && err.contains("init"), "{err}");
}

#[test]
fn proof_for_other_formula_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("1.qdimacs");
    let two = dir.path().join("2.qdimacs");
    let proof = dir.path().join("p.json");
    redres(&["gen", "example1", "-o", one.to_str().unwrap()]);
    redres(&["gen", "example2", "-o", two.to_str().unwrap()]);
    redres(&["solve", "--proof", proof.to_str().unwrap(), one.to_str().unwrap()]);
    let out = redres(&["check", proof.to_str().unwrap(), two.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("different formula"));
}

#[test]
fn usage_and_limit_errors_exit_one() {
    assert_eq!(redres(&["solve", "--refinement", "fast"]).status.code(), Some(1));
    assert_eq!(redres(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(redres(&["gen", "qparity", "--n", "1"]).status.code(), Some(1));
    let generated = redres(&["gen", "qparity", "--n", "8"]);
    let out = redres_stdin(&["solve", "--refinement", "plain", "--iteration-limit", "5"], &generated.stdout);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("iteration limit"));
    let out = redres_stdin(&["solve"], b"p cnf 1 1\ne 1 0\n5 0\n");
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(redres(&["--help"]).status.code(), Some(0));
}

#[test]
fn oracle_refuses_large_formulas() {
    let generated = redres(&["gen", "crn", "--n", "6"]);
    let out = redres_stdin(&["oracle"], &generated.stdout);
    assert_eq!(out.status.code(), Some(1));
}
