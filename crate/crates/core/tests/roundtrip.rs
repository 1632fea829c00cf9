use ppl_core::lang::{parse, pretty_print};
use proptest::prelude::*;

fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (0i64..100).prop_map(|n| n.to_string()),
        (0.0f64..10.0).prop_map(|x| format!("{x:.3}")),
        prop::sample::select(vec!["a", "b", "c", "true", "false", "null", "\"s\""]).prop_map(String::from),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*", "/", "%", "<", "<=", "==", "!=", "and", "or"]), inner.clone())
                .prop_map(|(a, op, b)| format!("({a} {op} {b})")),
            inner.clone().prop_map(|a| format!("-({a})")),
            inner.clone().prop_map(|a| format!("(not ({a}))")),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(c, a, b)| format!("({c} ? {a} : {b})")),
            (prop::sample::select(vec!["exp", "log", "abs", "str", "len"]), inner.clone()).prop_map(|(f, a)| format!("{f}({a})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("max({a}, {b})")),
            prop::collection::vec(inner.clone(), 0..3).prop_map(|v| format!("[{}]", v.join(", "))),
            (inner.clone(), inner).prop_map(|(a, i)| format!("{a}[{i}]")),
        ]
    })
}

fn block(depth: u32) -> BoxedStrategy<Vec<String>> {
    let var = prop::sample::select(vec!["a", "b", "c"]);
    let simple = prop_oneof![
        (var.clone(), expr()).prop_map(|(v, e)| vec![format!("{v} = {e}")]),
        (var, expr(), expr()).prop_map(|(v, addr, m)| vec![format!("{v} = sample(\"x\" + str({addr}), Normal({m}, 1))")]),
        Just(vec!["skip".to_string()]),
    ];
    if depth == 0 {
        return prop::collection::vec(simple, 1..3).prop_map(|v| v.concat()).boxed();
    }
    let nested = prop_oneof![
        3 => simple,
        1 => (expr(), block(depth - 1), prop::option::of(block(depth - 1))).prop_map(|(c, t, e)| {
            let mut out = vec![format!("if {c} then")];
            out.extend(t.iter().map(|l| format!("    {l}")));
            if let Some(e) = e {
                out.push("else".into());
                out.extend(e.iter().map(|l| format!("    {l}")));
            }
            out
        }),
        1 => (expr(), block(depth - 1)).prop_map(|(c, b)| {
            let mut out = vec![format!("while {c} do")];
            out.extend(b.iter().map(|l| format!("    {l}")));
            out
        }),
    ];
    prop::collection::vec(nested, 1..4).prop_map(|v| v.concat()).boxed()
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(lines in block(2)) {
        let src = lines.join("\n");
        let p = parse(&src).map_err(|e| TestCaseError::fail(format!("{e}\n{src}")))?;
        let printed = pretty_print(&p);
        let q = parse(&printed).map_err(|e| TestCaseError::fail(format!("{e}\n{printed}")))?;
        prop_assert_eq!(pretty_print(&q), printed.clone());
        // Printing drops skips inside sequences; otherwise the tree survives.
        if !src.contains("skip") {
            prop_assert_eq!(&p, &q, "{}", printed);
        }
    }
}
