use std::path::Path;

use neyman_lab::config::parse_pairs;
use neyman_lab::{Command, DesignKind, ExperimentConfig, HarnessError, Overrides, SequenceSpec};

fn parse(command: Command, text: &str) -> Result<ExperimentConfig, HarnessError> {
    ExperimentConfig::from_parts(command, Some(text), Path::new("/base"), &Overrides::default())
}

fn config_error(command: Command, text: &str) -> String {
    match parse(command, text) {
        Err(HarnessError::Config(msg)) => msg,
        other => panic!("expected a configuration error for {text:?}, got {other:?}"),
    }
}

#[test]
fn defaults() {
    let cfg = ExperimentConfig::defaults(Command::Simulate).unwrap();
    assert_eq!(cfg.horizons, vec![200]);
    assert_eq!(cfg.replications, 100);
    assert_eq!(cfg.base_seed, 0);
    assert_eq!(cfg.workers, 1);
    assert_eq!(cfg.alphas, vec![0.05]);
    assert_eq!(cfg.design, DesignKind::SigmoidFtrl);
    assert!(matches!(cfg.sequence, SequenceSpec::Stationary(_)));
    assert_eq!(cfg.sigmoids.len(), 1);
    assert!(!cfg.json);

    let verify = ExperimentConfig::defaults(Command::VerifySigmoid).unwrap();
    assert_eq!(verify.sigmoids.len(), 2);
    assert_eq!((verify.grid_min, verify.grid_max, verify.grid_points), (-50.0, 50.0, 10_001));
}

#[test]
fn file_values_and_overrides() {
    let text = "[run]\nsequence = stationary\ndim = 3\nrho = 0.4\nT = 16, 64\nreps = 7\nseed = 9\nalpha = 0.1 0.05\nformat = json\nsigmoid = algebraic\n";
    let cfg = parse(Command::SweepRegret, text).unwrap();
    assert_eq!(cfg.horizons, vec![16, 64]);
    assert_eq!((cfg.replications, cfg.base_seed), (7, 9));
    assert_eq!(cfg.alphas, vec![0.1, 0.05]);
    assert!(cfg.json);
    assert_eq!(cfg.sigmoid().kind(), neyman_core::SigmoidKind::Algebraic);
    match cfg.sequence {
        SequenceSpec::Stationary(p) => assert_eq!((p.dim, p.rho_target), (3, 0.4)),
        other => panic!("{other:?}"),
    }

    let o = Overrides {
        horizons: Some(vec![8]),
        replications: Some(2),
        seed: Some(1),
        out: Some("x.csv".into()),
        workers: Some(4),
        json: false,
    };
    let cfg = ExperimentConfig::from_parts(Command::SweepRegret, Some(text), Path::new("."), &o).unwrap();
    assert_eq!(cfg.horizons, vec![8]);
    assert_eq!((cfg.replications, cfg.base_seed, cfg.workers), (2, 1, 4));
    assert_eq!(cfg.output_path.as_deref(), Some(Path::new("x.csv")));
    assert!(cfg.json, "the file's format stays unless the flag turns JSON on");
}

#[test]
fn relative_paths_resolve_against_the_config_directory() {
    let cfg = parse(Command::Simulate, "out = runs/a.csv\n").unwrap();
    assert_eq!(cfg.output_path.as_deref(), Some(Path::new("/base/runs/a.csv")));
    let cfg = parse(Command::Simulate, "out = /abs/a.csv\n").unwrap();
    assert_eq!(cfg.output_path.as_deref(), Some(Path::new("/abs/a.csv")));
}

#[test]
fn file_sequence_fixes_the_horizon() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("seq.csv"), "t,y1,y0,x1\n1,1,0,1\n2,2,1,0.5\n3,0,0,1\n").unwrap();
    std::fs::write(dir.path().join("run.ini"), "sequence = file:seq.csv\n").unwrap();
    let cfg = ExperimentConfig::load(Command::Simulate, &dir.path().join("run.ini"), &Overrides::default()).unwrap();
    assert_eq!(cfg.horizons, vec![3]);
    assert_eq!(cfg.sequence, SequenceSpec::File(dir.path().join("seq.csv")));

    let o = Overrides { horizons: Some(vec![5]), ..Overrides::default() };
    let err = ExperimentConfig::load(Command::Simulate, &dir.path().join("run.ini"), &o).unwrap_err();
    assert!(err.to_string().contains("file's length"), "{err}");
}

#[test]
fn rejected_configurations() {
    let cases: &[(Command, &str, &str)] = &[
        (Command::Simulate, "colour = blue\n", "unknown key"),
        (Command::Simulate, "[a]\nreps = 1\n[b]\nreps = 2\n", "twice"),
        (Command::Simulate, "reps = many\n", "bad value"),
        (Command::Simulate, "reps = 0\n", "reps"),
        (Command::Simulate, "workers = 0\n", "workers"),
        (Command::Simulate, "alpha = 1.5\n", "alpha"),
        (Command::Simulate, "p_floor = 0.6\n", "p_floor"),
        (Command::Simulate, "sequence = zigzag\n", "unknown sequence"),
        (Command::Simulate, "design = greedy\n", "unknown design"),
        (Command::Simulate, "format = xml\n", "unknown format"),
        (Command::Simulate, "sequence = lower_bound_main\ndim = 3\n", "stationary"),
        (Command::Simulate, "sigmoid = both\n", "verify-sigmoid"),
        (Command::Simulate, "command = coverage\n", "coverage"),
        (Command::Simulate, "T = 0\n", "positive"),
        (Command::Simulate, "sequence = degenerate_covariates\nT = 7\n", "even"),
        (Command::Simulate, "sequence = lower_bound_main\nT = 1\n", "T >= 2"),
        (Command::SweepRegret, "T = 64, 16\n", "ascending"),
        (Command::Identities, "T = 400\n", "T <= 200"),
        (Command::Identities, "design = bernoulli_half\n", "sigmoid_ftrl"),
        (Command::Simulate, "leverage_perturbation = -1\n", "leverage"),
        (Command::VerifySigmoid, "grid_points = 1\n", "grid"),
        (Command::Simulate, "sequence = file:/no/such/file.csv\n", ""),
    ];
    for (cmd, text, needle) in cases {
        let msg = config_error(*cmd, text);
        assert!(msg.contains(needle), "{text:?}: message `{msg}` lacks `{needle}`");
    }
}

#[test]
fn custom_sigmoid_constants() {
    let cfg = parse(Command::VerifySigmoid, "sigmoid = arctan\nb2 = 1\n").unwrap();
    assert_eq!(cfg.sigmoids.len(), 1);
    assert_eq!(cfg.sigmoids[0].b2(), 1.0);
    assert_eq!(cfg.sigmoids[0].b1(), std::f64::consts::PI);
    assert!(config_error(Command::VerifySigmoid, "b1 = 2\n").contains("single"));
}

#[test]
fn pairs_parser_flattens_sections() {
    let kv = parse_pairs("reps = 3\n[extra]\nseed = 4\n").unwrap();
    assert_eq!(kv.get("reps").map(String::as_str), Some("3"));
    assert_eq!(kv.get("seed").map(String::as_str), Some("4"));
}

#[test]
fn commands_parse_by_name() {
    for c in Command::ALL {
        assert_eq!(c.name().parse::<Command>().unwrap(), c);
    }
    assert_eq!("sweep_regret".parse::<Command>().unwrap(), Command::SweepRegret);
    assert!("plot".parse::<Command>().is_err());
}
