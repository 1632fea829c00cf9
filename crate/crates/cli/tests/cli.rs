use std::path::PathBuf;
use std::process::{Command, Output};

fn ppl(args: &[&str]) -> Output {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    Command::new(env!("CARGO_BIN_EXE_ppl")).current_dir(root).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = ppl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn analyze_lists_the_hurricane_factors() {
    let s = stdout(&["analyze", "corpus/hurricane.ppl"]);
    assert!(s.starts_with("9 factors\n"));
    assert!(s.contains("  3  line 5   P1             {D0, F, P1}\n"));
    assert!(s.contains("bayesian network: none"));
    assert!(s.contains("markov network: 5 variables, 9 cliques"));
}

#[test]
fn analyze_json_and_graph_files() {
    let dir = std::env::temp_dir().join(format!("ppl-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bn = dir.join("bn.dot");
    let s = stdout(&["analyze", "mixture_switch", "--json", "--bayes-net", bn.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["factors"].as_array().unwrap().len(), 4);
    let dot = std::fs::read_to_string(&bn).unwrap();
    for edge in ["\"b\" -> \"mu\"", "\"b\" -> \"x\"", "\"mu\" -> \"x\"", "\"s\" -> \"x\""] {
        assert!(dot.contains(edge), "{edge} missing from\n{dot}");
    }
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn slice_listing() {
    let s = stdout(&["slice", "corpus/mixture_switch.ppl", "--at", "b"]);
    assert_eq!(
        s,
        "b = visit(\"b\", Bernoulli(0.5))\ns = read(\"s\")\nif b == 1 then\n    m = score(\"mu\", Normal(0, 1))\nelse\n    m = 1\nx = score(\"x\", Normal(m, s))\n"
    );
}

#[test]
fn runs_repeat_byte_for_byte() {
    for algo in ["lmh", "lmh-fast", "bbvi", "bbvi-rb", "smc", "smc-iter"] {
        let args = ["run", "program3", algo, "-n", "200", "-p", "20", "--seed", "11"];
        let (a, b) = (ppl(&args), ppl(&args));
        assert!(a.status.success(), "{algo}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{algo}");
        assert_eq!(a.stderr, b.stderr, "{algo}");
    }
}

#[test]
fn factored_lmh_streams_match_baseline() {
    let a = stdout(&["run", "gmm_variable", "lmh", "-n", "500", "--seed", "3"]);
    let b = stdout(&["run", "gmm_variable", "lmh-fast", "-n", "500", "--seed", "3"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 500);
}

#[test]
fn exit_codes() {
    assert_eq!(ppl(&["run", "nope", "lmh"]).status.code(), Some(2));
    assert_eq!(ppl(&["run", "geometric", "bbvi"]).status.code(), Some(2));
    assert_eq!(ppl(&["frob"]).status.code(), Some(2));
    let dir = std::env::temp_dir().join(format!("ppl-cli-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.ppl");
    std::fs::write(&bad, "x = = 1\n").unwrap();
    let out = ppl(&["parse", bad.to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    std::fs::remove_dir_all(dir).ok();
}
