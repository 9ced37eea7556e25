use bitml::parser::{
    parse_file_bytes, parse_file_str, parse_ltl, parse_strategies, pretty_print, print_file,
};
use proptest::prelude::*;

mod common;
use common::{bench_text, small_contract, BENCHMARKS};

#[test]
fn benchmarks_round_trip() {
    for name in BENCHMARKS {
        let file = parse_file_str(&bench_text(name)).unwrap();
        let again = parse_file_str(&print_file(&file)).unwrap();
        assert_eq!(file, again, "{name}");
        let spec = parse_file_str(&pretty_print(&file.spec)).unwrap().spec;
        assert_eq!(file.spec, spec, "{name}");
    }
}

#[test]
fn benchmarks_are_in_printed_form() {
    for name in BENCHMARKS {
        let text = bench_text(name);
        let body: String = text
            .lines()
            .filter(|l| !l.starts_with(';'))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(print_file(&parse_file_str(&text).unwrap()), body, "{name}");
    }
}

#[test]
fn queries_in_files() {
    let file = parse_file_str(&bench_text("timed-commitment.bitml")).unwrap();
    assert_eq!(file.queries.len(), 2);
    let file = parse_file_str(&bench_text("escrow.bitml")).unwrap();
    assert_eq!(file.strategies.len(), 1);
}

fn sexpr_soup() -> impl Strategy<Value = String> {
    let token = prop::sample::select(vec![
        "(",
        ")",
        "(",
        ")",
        " ",
        "\n",
        "\"A\"",
        "\"",
        "a",
        "b",
        "0",
        "100",
        "-1",
        "->",
        "contract",
        "pre",
        "deposit",
        "secret",
        "participant",
        "choice",
        "reveal",
        "withdraw",
        "split",
        "after",
        "auth",
        "pred",
        "len",
        "=",
        "<",
        "not",
        "and",
        "or",
        "+",
        "-",
        "outpoint",
        "strategy",
        "do-reveal",
        "check-liquid",
        "check-query",
        ";",
        "99999999999999999999999",
        "0279be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798",
    ]);
    prop::collection::vec(token, 0..60).prop_map(|t| t.join(" "))
}

fn ltl_soup() -> impl Strategy<Value = String> {
    let token = prop::sample::select(vec![
        "(",
        ")",
        "[]",
        "<>",
        "!",
        "X",
        "U",
        "=>",
        "\\/",
        "/\\",
        "a",
        "revealed",
        "A",
        "\"B\"",
        "has-deposit>=",
        "5",
        "satoshi",
        "contract-terminated",
        "authorized",
        "(branch 0 0)",
        "true",
        "false",
        " ",
    ]);
    prop::collection::vec(token, 0..30).prop_map(|t| t.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_file_bytes(&bytes);
    }

    #[test]
    fn token_soup_never_panics(text in sexpr_soup()) {
        if let Err(e) = parse_file_str(&text) {
            prop_assert!(e.pos().line >= 1 && e.pos().column >= 1);
        }
        let _ = parse_strategies(&text);
    }

    #[test]
    fn ltl_soup_never_panics(text in ltl_soup()) {
        if let Ok(f) = parse_ltl(&text) {
            prop_assert_eq!(parse_ltl(&f.to_string()).unwrap(), f);
        }
    }

    #[test]
    fn generated_contracts_round_trip((text, _) in small_contract()) {
        let file = parse_file_str(&text).unwrap();
        prop_assert_eq!(parse_file_str(&print_file(&file)).unwrap(), file);
    }
}
