use neyman_core::numerics::{DenseMatrix, RngStream};
use neyman_core::oracle::summarize;
use neyman_core::sequences::{
    check_assumptions, gen_lower_bound_degenerate_covariates, gen_lower_bound_main, gen_lower_bound_unbounded,
    gen_stationary, StationaryParams,
};
use neyman_core::{Error, PotentialOutcomeSequence};

fn generated() -> Vec<PotentialOutcomeSequence> {
    let mut rng = RngStream::new(12, 0);
    vec![
        gen_stationary(&StationaryParams::new(50, 3), &mut rng).unwrap(),
        gen_stationary(&StationaryParams { rho_target: -0.7, ..StationaryParams::new(30, 1) }, &mut rng).unwrap(),
        gen_lower_bound_main(32, &mut rng).unwrap(),
        gen_lower_bound_unbounded(10, &mut rng).unwrap(),
        gen_lower_bound_degenerate_covariates(12, &mut rng).unwrap(),
    ]
}

#[test]
fn csv_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    for (k, seq) in generated().into_iter().enumerate() {
        let path = dir.path().join(format!("seq{k}.csv"));
        seq.save_csv(&path).unwrap();
        let back = PotentialOutcomeSequence::load_csv(&path).unwrap();
        assert_eq!(back.y1, seq.y1);
        assert_eq!(back.y0, seq.y0);
        assert_eq!(back.x, seq.x);
        assert_eq!(back.label, format!("seq{k}"));
    }
}

#[test]
fn missing_column_is_named() {
    let text = "t,y1,y0,x1\n1,1.0,2.0,0.5\n";
    let seq = PotentialOutcomeSequence::read_csv(text.as_bytes(), "ok").unwrap();
    assert_eq!(seq.dim(), 1);

    let short = "t,y1,y0,x1,x2\n1,1.0,2.0,0.5\n";
    match PotentialOutcomeSequence::read_csv(short.as_bytes(), "bad") {
        Err(Error::ParseError { column, .. }) => assert_eq!(column, "x2"),
        other => panic!("expected a parse error naming x2, got {other:?}"),
    }
    let skipped = "t,y1,y0,x1,x3\n1,1.0,2.0,0.5,0.1\n";
    match PotentialOutcomeSequence::read_csv(skipped.as_bytes(), "bad") {
        Err(Error::ParseError { column, .. }) => assert_eq!(column, "x2"),
        other => panic!("expected a parse error naming x2, got {other:?}"),
    }
    let unsorted = "t,y1,y0,x1\n2,1,1,1\n1,1,1,1\n";
    assert!(matches!(PotentialOutcomeSequence::read_csv(unsorted.as_bytes(), "bad"), Err(Error::ParseError { .. })));
    let junk = "t,y1,y0,x1\n1,abc,1,1\n";
    match PotentialOutcomeSequence::read_csv(junk.as_bytes(), "bad") {
        Err(Error::ParseError { row, column, .. }) => {
            assert_eq!(row, 1);
            assert_eq!(column, "y1");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn stationary_generator_properties() {
    let p = StationaryParams { rho_target: 1.0, ..StationaryParams::new(2000, 3) };
    let seq = gen_stationary(&p, &mut RngStream::new(1, 0)).unwrap();
    let s = summarize(&seq).unwrap();
    assert!((s.rho - 1.0).abs() <= 0.05, "ρ = {}", s.rho);

    let p = StationaryParams { effect: 2.0, ..StationaryParams::new(4000, 2) };
    let seq = gen_stationary(&p, &mut RngStream::new(2, 0)).unwrap();
    let diffs: Vec<f64> = seq.y1.iter().zip(&seq.y0).map(|(a, b)| a - b).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - 2.0).abs() <= 3.0 * sd / n.sqrt(), "τ = {mean}");
    assert!(seq.max_radius() <= p.r_cap + 1e-12);

    let a = gen_stationary(&p, &mut RngStream::new(3, 3)).unwrap();
    let b = gen_stationary(&p, &mut RngStream::new(3, 3)).unwrap();
    assert_eq!(a, b);
    let a = gen_lower_bound_main(64, &mut RngStream::new(3, 3)).unwrap();
    let b = gen_lower_bound_main(64, &mut RngStream::new(3, 3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stationary_sequences_are_well_invertible() {
    // Norms are capped at 1, so trace(G/t) ≤ 1 and σ_min ≤ 1/d; with the
    // check starting at t = √T the threshold 1/c₂ = 0.1 suits small d only.
    for (seed, d) in [(1u64, 1usize), (2, 2), (3, 3)] {
        let seq = gen_stationary(&StationaryParams::new(1000, d), &mut RngStream::new(seed, 0)).unwrap();
        let r = check_assumptions(&seq, 1.0, 10.0);
        assert!(r.assumption2_pass, "d = {d}: first failure {:?}", r.assumption2_first_failure);
        assert!(r.c0_hat.unwrap() <= r.c1_hat);
        assert!(r.rho.is_some());
    }
}

#[test]
fn lower_bound_magnitudes() {
    for t in [2usize, 16, 100, 1000] {
        let seq = gen_lower_bound_main(t, &mut RngStream::new(t as u64, 0)).unwrap();
        let cap = 4.0 * ((t as f64).powf(0.25) + 1.0);
        assert!(seq.y1.iter().chain(&seq.y0).all(|y| y.abs() <= cap));
    }
}

#[test]
fn moment_growth_separates_the_two_constructions() {
    let c1 = |t: usize, unbounded: bool| -> f64 {
        // Averaged over seeds so a single draw of D cannot mask the trend.
        (0..8)
            .map(|seed| {
                let mut rng = RngStream::new(seed, t as u64);
                let seq = if unbounded {
                    gen_lower_bound_unbounded(t, &mut rng).unwrap()
                } else {
                    gen_lower_bound_main(t, &mut rng).unwrap()
                };
                check_assumptions(&seq, 1.0, 10.0).c1_hat
            })
            .sum::<f64>()
            / 8.0
    };
    let grow: Vec<f64> = [100, 1000, 10_000].iter().map(|&t| c1(t, true)).collect();
    assert!(grow[0] < grow[1] && grow[1] < grow[2], "{grow:?}");

    let bounded: Vec<f64> = (6..=14).map(|k| c1(1 << k, false)).collect();
    let (lo, hi) = bounded.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    // (1/T)Σy⁴ ≤ 4⁴(2⁴ + (T^{1/4}+1)⁴/T), so c1 stays below 4·(16 + 16)^{1/4} < 10.
    assert!(hi <= 10.0, "{bounded:?}");
    assert!(hi / lo <= 1.5, "{bounded:?}");
}

#[test]
fn degenerate_covariates_halve_the_residual_energy() {
    let seq = gen_lower_bound_degenerate_covariates(40, &mut RngStream::new(4, 0)).unwrap();
    let s = summarize(&seq).unwrap();
    assert!((s.e1 * s.e1 - 0.5).abs() <= 1e-12);
    assert!((s.rho - 1.0).abs() <= 1e-12);
    assert!(!check_assumptions(&seq, 1.0, 10.0).assumption2_pass);
}

#[test]
fn minimal_horizon_file() {
    let seq = PotentialOutcomeSequence::read_csv("t,y1,y0,x1,x2\n1,0.25,-1e-3,1,0\n".as_bytes(), "one").unwrap();
    assert_eq!(seq.len(), 1);
    assert_eq!(seq.x, DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
    assert_eq!(seq.y0, vec![-1e-3]);
}
