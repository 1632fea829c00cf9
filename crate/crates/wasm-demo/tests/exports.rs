use ppl_wasm_demo::{analyze, example, examples, lmh_histogram, slice};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

fn hurricane() -> String {
    parse(example("hurricane"))["source"].as_str().unwrap().to_string()
}

#[test]
fn lists_the_corpus() {
    let names = parse(examples());
    assert!(names.as_array().unwrap().iter().any(|n| n == "sprinkler"));
    assert!(parse(example("missing")).get("error").is_some());
}

#[test]
fn analyze_reports_factors() {
    let v = parse(analyze(&hurricane()));
    assert_eq!(v["factors"].as_array().unwrap().len(), 9);
    assert!(v["bayes_net"].is_null());
    assert!(v["bayes_net_error"].as_str().unwrap().contains("more than one statement"));
    assert!(v["markov_net"].as_str().unwrap().starts_with("graph markov_net"));
}

#[test]
fn parse_errors_are_reported() {
    assert!(parse(analyze("x = = 1")).get("error").is_some());
}

#[test]
fn slice_listing() {
    let src = "A = sample(\"A\", Normal(0, 1))\nB = sample(\"B\", Normal(A, 1))\nC = sample(\"C\", Normal(0, 1))";
    let v = parse(slice(src, "A"));
    assert_eq!(v["listing"], "A = visit(\"A\", Normal(0, 1))\nB = score(\"B\", Normal(A, 1))\n");
    assert!(parse(slice(src, "Z")).get("error").is_some());
}

#[test]
fn histogram_of_a_coin() {
    let v = parse(lmh_histogram("x = sample(\"x\", Bernoulli(0.3))", "", "x", 4000, 5));
    let bars = v["bars"].as_array().unwrap();
    assert_eq!(bars.len(), 2);
    let ones = bars[1]["count"].as_f64().unwrap() / 4000.0;
    assert!((ones - 0.3).abs() < 0.05, "{ones}");
}

#[test]
fn histogram_is_deterministic_and_binned() {
    let src = "m = sample(\"m\", Normal(0, 1))\ny = sample(\"y\", Normal(m, 1))";
    let a = lmh_histogram(src, "{\"y\": 1.0}", "m", 2000, 3);
    assert_eq!(a, lmh_histogram(src, "{\"y\": 1.0}", "m", 2000, 3));
    assert_eq!(parse(a)["bars"].as_array().unwrap().len(), 20);
}
