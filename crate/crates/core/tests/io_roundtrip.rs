use std::path::PathBuf;

use multibubble::configuration::Configuration;
use multibubble::dynamics::{integrate, BubbleState, IntegrateOptions};
use multibubble::io::{
    config_to_json, format_float, parse_config_file, parse_config_str, parse_trajectory_csv,
    to_canonical_json, write_rectangle_csv, write_trajectory_csv,
};
use multibubble::rectangle::{backward_verification, degenerate_rectangle};
use multibubble::{universal_constants, Dimension, Error};
use proptest::prelude::*;

fn n7() -> Dimension {
    Dimension::new(7).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn code(text: &str) -> &'static str {
    parse_config_str(text).unwrap_err().code()
}

#[test]
fn config_errors() {
    assert_eq!(
        code("{\"dim\": 6, \"signs\": [1], \"points\": [[0,0,0,0,0,0]]}"),
        "validation_error"
    );
    assert_eq!(
        code("{\"dim\": 7, \"signs\": [2], \"points\": [[0,0,0,0,0,0,0]]}"),
        "validation_error"
    );
    assert_eq!(
        code("{\"dim\": 7, \"signs\": [1, -1], \"points\": [[0,0,0,0,0,0,0], [0,0,0,0,0,0,0]]}"),
        "validation_error"
    );
    assert_eq!(
        code("{\"dim\": 7, \"signs\": [1, -1], \"points\": [[0,0,0,0,0,0,0]]}"),
        "validation_error"
    );
    assert_eq!(
        code("{\"dim\": 7, \"signs\": [1], \"points\": [[0,0,0]]}"),
        "validation_error"
    );
    assert_eq!(
        code("{\"dim\": 7, \"signs\": [1], \"points\": [[0,0,0,0,0,0,0]], \"extra\": 1}"),
        "parse_error"
    );
    assert_eq!(code("{\"dim\": 7, \"signs\": [1]}"), "parse_error");
    assert_eq!(code("not json"), "parse_error");
    match parse_config_str("{\n\"dim\": 7,\n\"signs\": [1, x]}").unwrap_err() {
        Error::Parse { line, column, .. } => {
            assert_eq!(line, 3);
            assert!(column > 1);
        }
        e => panic!("{e:?}"),
    }
}

#[test]
fn rectangle_fixture_is_canonical() {
    let cfg = degenerate_rectangle(n7()).unwrap();
    let text = std::fs::read_to_string(fixture("rectangle.json")).unwrap();
    assert_eq!(config_to_json(&cfg), text);
    assert_eq!(parse_config_file(&fixture("rectangle.json")).unwrap(), cfg);
}

#[test]
fn canonical_json_is_deterministic() {
    let cfg = degenerate_rectangle(n7()).unwrap();
    assert_eq!(config_to_json(&cfg), config_to_json(&cfg.clone()));
    let v = serde_json::json!({"z": [1.0, 2.0], "a": {"k": -0.5}});
    assert_eq!(to_canonical_json(&v), to_canonical_json(&v));
    assert!(
        to_canonical_json(&v).find("\"a\"").unwrap() < to_canonical_json(&v).find("\"z\"").unwrap()
    );
}

#[test]
fn trajectory_csv_round_trip() {
    let c = universal_constants(n7()).unwrap();
    let mut p = vec![vec![0.0; 7]; 3];
    p[1][0] = 1.0;
    p[2][1] = 1.3;
    let s = BubbleState::new(0.0, vec![0.1, 0.08, 0.12], p).unwrap();
    // The same-sign pair merges near t = 5e-3; stay well before that.
    let opts = IntegrateOptions::default().with_log_checkpoints(1e-6, 1e-3, 10);
    let traj = integrate(&c, &[1, -1, 1], &s, 1e-3, &opts).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, Some("abc123"), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# input_digest=abc123\n"));
    let table = parse_trajectory_csv(&text).unwrap();
    assert_eq!(table.bubbles, 3);
    assert_eq!(table.space_dim, 7);
    assert_eq!(table.samples, traj.samples);
    let back = table.into_trajectory(&c, &[1, -1, 1]).unwrap();
    assert_eq!(back.ledger, traj.ledger);
}

#[test]
fn trajectory_csv_rejects_bad_rows() {
    let head = "t,lambda_1,z_1_1,z_1_2,conserved\n";
    let bad = |body: &str| parse_trajectory_csv(&format!("{head}{body}")).unwrap_err();
    match bad("1,0.1,0,0,1\n0.5,0.1,0,0,1\n") {
        Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 1)),
        e => panic!("{e:?}"),
    }
    match bad("1,-0.1,0,0,1\n") {
        Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 2)),
        e => panic!("{e:?}"),
    }
    assert_eq!(bad("1,0.1,0,1\n").code(), "parse_error");
    assert_eq!(bad("1,0.1,zero,0,1\n").code(), "parse_error");
    assert_eq!(bad("").code(), "parse_error");
    assert_eq!(
        parse_trajectory_csv("t,z_1_1,conserved\n1,0,1\n")
            .unwrap_err()
            .code(),
        "parse_error"
    );
    assert_eq!(
        parse_trajectory_csv("t,lambda_1,z_2_1,conserved\n1,0.1,0,1\n")
            .unwrap_err()
            .code(),
        "parse_error"
    );
}

#[test]
fn table_shape_checked_against_signs_and_dimension() {
    let c = universal_constants(n7()).unwrap();
    let table = parse_trajectory_csv("t,lambda_1,z_1_1,z_1_2,conserved\n1,0.1,0,0,1\n").unwrap();
    assert_eq!(
        table
            .clone()
            .into_trajectory(&c, &[1, 1])
            .unwrap_err()
            .code(),
        "shape_mismatch"
    );
    assert_eq!(
        table.into_trajectory(&c, &[1]).unwrap_err().code(),
        "shape_mismatch"
    );
}

#[test]
fn rectangle_csv_columns() {
    let c = universal_constants(n7()).unwrap();
    let t = backward_verification(&c, 1e4, 1e6).unwrap();
    let mut buf = Vec::new();
    write_rectangle_csv(&t, None, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,lambda,d,q,h1,h2,h3");
    assert_eq!(lines.count(), t.samples.len());
}

proptest! {
    #[test]
    fn floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_float(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn configs_round_trip(
        pts in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 7), 1..6),
        signs in prop::collection::vec(prop::bool::ANY, 6),
    ) {
        let signs: Vec<i8> = signs[..pts.len()].iter().map(|&b| if b { 1 } else { -1 }).collect();
        let cfg = match Configuration::new(n7(), signs, pts) {
            Ok(c) => c,
            Err(_) => return Err(TestCaseError::reject("duplicate points")),
        };
        let text = config_to_json(&cfg);
        prop_assert_eq!(parse_config_str(&text).unwrap(), cfg);
    }

    #[test]
    fn arbitrary_text_never_panics(s in "\\PC{0,200}") {
        let _ = parse_config_str(&s);
        let _ = parse_trajectory_csv(&s);
    }
}
