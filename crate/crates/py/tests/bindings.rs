const PARAMS: &str = r#"{"schema_version": 1, "kind": "single", "K": 2, "d": 1, "M": 1,
  "flat": [0.1, 0.2, 0.2, -0.05, 0.1, 0.3], "birthrate": [[0.1], [0.2]],
  "interaction": [[[0.2, -0.05], [0.1, 0.3]]]}"#;

#[test]
fn probabilities_and_simulation() {
    let p = pyramping::cond_prob(PARAMS, vec![vec![1, 0]]).unwrap();
    assert!((p[0] - 0.3).abs() < 1e-12 && (p[1] - 0.3).abs() < 1e-12);
    let rows = pyramping::simulate(PARAMS, 200, 1).unwrap();
    assert_eq!(rows.len(), 200);
    assert_eq!(rows, pyramping::simulate(PARAMS, 200, 1).unwrap());
}

#[test]
fn fit_report_round_trips_as_params() {
    let rows = pyramping::simulate(PARAMS, 2000, 2).unwrap();
    let report = pyramping::fit(rows, 1, "ls", 1, 1e-3, 0.1).unwrap();
    // a fit report is accepted wherever params are
    let p = pyramping::cond_prob(&report, vec![vec![0, 0]]).unwrap();
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn thetas_bounds_and_extraction() {
    let (t1, t2, tinf) = pyramping::condition_numbers(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
    assert!((t2 - 1.0).abs() < 1e-9 && (tinf - 1.5).abs() < 1e-9 && t1 <= t2);
    assert!(pyramping::error_bound(0.0, 1.0, 3, 10.0, 0.1, "ls", 1e-3).unwrap().is_infinite());
    let states = pyramping::extract(vec![5.0; 4 * 12], 4, 3, 0.1, 0.5, 2, "intra-day").unwrap();
    assert_eq!(states.iter().filter(|s| s.is_none()).count(), 3);
    assert!(states.iter().flatten().all(|&s| s == 0));
    assert!((pyramping::f1_score(0.75, 0.6) - 2.0 / 3.0).abs() < 1e-12);
}
