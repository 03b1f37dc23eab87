use std::fs;
use std::path::PathBuf;
use std::process::Command as Process;

use bvwave::cli::{
    cmd_convergence, cmd_pdap, cmd_solve, exit_code, standing_wave_error, Command, RunConfig, Scenario, EXIT_CONFIG,
    EXIT_GATE,
};
use bvwave::experiments::PhiVariant;
use bvwave::wave::SchemeParams;
use bvwave::Error;
use proptest::prelude::*;

fn config(command: Command, scenario: Scenario, level: u32, dir: &tempfile::TempDir) -> RunConfig {
    let mut cfg = RunConfig { command, scenario, output: dir.path().to_path_buf(), ..RunConfig::default() };
    cfg.discretization.level = level;
    cfg
}

fn example_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("config/reference.toml")
}

#[test]
fn annotated_example_config_parses_to_defaults_plus_custom_atoms() {
    let cfg = RunConfig::load(&example_config()).unwrap();
    let mut expected = RunConfig::default();
    expected.control.atoms = vec![[0.5, 1.0], [1.25, -0.5]];
    assert_eq!(cfg, expected);
}

#[test]
fn zero_scenario_dumps_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    cmd_solve(&config(Command::Solve, Scenario::Zero, 3, &dir)).unwrap();
    let csv = fs::read_to_string(dir.path().join("field.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("m,t,dof,value"));
    assert!(lines.all(|l| l.ends_with(",0")), "nonzero entry");
}

#[test]
fn standing_wave_error_matches_convergence_suite() {
    let dir = tempfile::tempdir().unwrap();
    let summary = cmd_solve(&config(Command::Solve, Scenario::StandingWave, 4, &dir)).unwrap();
    assert_eq!(summary.analytic_error, Some(standing_wave_error(4, SchemeParams::crank_nicolson()).unwrap()));
}

#[test]
fn explicit_scheme_with_large_step_fails_gate() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Command::Solve, Scenario::StandingWave, 4, &dir);
    cfg.discretization.sigma = 0.0;
    let err = cmd_solve(&cfg).unwrap_err();
    assert!(matches!(err, Error::StabilityGate(_)));
    assert_eq!(exit_code(&err), EXIT_GATE);
    assert!(err.to_string().contains("inequality 1"), "{err}");
}

#[test]
fn attainable_zero_target_gives_no_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let (summary, result) = cmd_pdap(&config(Command::Pdap, Scenario::Zero, 3, &dir)).unwrap();
    assert!(summary.atoms.is_empty());
    assert!(summary.converged);
    assert_eq!(result.control.offsets(), &[0.0]);
}

#[test]
fn custom_history_is_monotone_and_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Command::Pdap, Scenario::Custom, 4, &dir);
    cfg.control.atoms = vec![[0.5, 1.0], [1.25, -0.5]];
    let (summary, result) = cmd_pdap(&cfg).unwrap();
    assert!(summary.converged);
    assert!(result.history.is_monotone(1e-12 * result.history.records[0].cost));
    let csv = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(csv.lines().count(), result.history.records.len() + 1);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(json.get("acceptance_scenario").is_none());
    assert!(json["gap"].as_f64().unwrap() >= 0.0);
}

#[test]
fn printed_profile_runs_without_acceptance_marker() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Command::Pdap, Scenario::Reference, 3, &dir);
    cfg.discretization.k_ref = 4;
    let (corrected, _) = cmd_pdap(&cfg).unwrap();
    assert_eq!(corrected.acceptance_scenario, Some(true));
    cfg.phi = PhiVariant::Printed;
    let (printed, _) = cmd_pdap(&cfg).unwrap();
    assert_eq!(printed.acceptance_scenario, None);
}

#[test]
fn single_level_study_has_one_row_and_no_rates() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Command::Convergence, Scenario::Reference, 3, &dir);
    cfg.discretization.levels = vec![3];
    cfg.discretization.k_ref = 4;
    let (table, summary) = cmd_convergence(&cfg).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert!(summary.fitted.iter().all(|(_, r)| r.is_nan()));
    assert!(summary.pairwise.iter().all(|(_, r)| r.is_empty()));
    for file in ["rates.csv", "rates.gp", "rates_summary.json"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}

#[test]
fn study_levels_must_stay_below_reference() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Command::Convergence, Scenario::Reference, 3, &dir);
    cfg.discretization.levels = vec![3, 4];
    cfg.discretization.k_ref = 4;
    assert_eq!(exit_code(&cmd_convergence(&cfg).unwrap_err()), EXIT_CONFIG);
}

#[test]
fn reruns_write_identical_files() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let mut cfg = config(Command::Convergence, Scenario::Reference, 3, dir);
        cfg.discretization.levels = vec![3, 4];
        cfg.discretization.k_ref = 5;
        cmd_convergence(&cfg).unwrap();
        let mut cfg = config(Command::Pdap, Scenario::Random, 4, dir);
        cfg.seed = 11;
        cmd_pdap(&cfg).unwrap();
    }
    for file in ["rates.csv", "rates.gp", "rates_summary.json", "history.csv", "summary.json"] {
        let a = fs::read(dirs[0].path().join(file)).unwrap();
        let b = fs::read(dirs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_bvwave");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = |args: &[&str]| Process::new(bin).args(args).output().unwrap();

    let gate = run(&["solve", "--scenario", "standing-wave", "--levels", "4", "--sigma", "0", "--out", out]);
    assert_eq!(gate.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&gate.stderr).contains("inequality 1"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "command = \"nope\"\n").unwrap();
    assert_eq!(run(&["--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--levels", "0..2"]).status.code(), Some(2));

    let ok = run(&["pdap", "--config", example_config().to_str().unwrap(), "--scenario", "custom", "--levels", "3", "--out", out]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("summary.json").exists());
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    (
        prop_oneof![Just(Command::Solve), Just(Command::Pdap), Just(Command::Convergence)],
        prop_oneof![Just(Scenario::Reference), Just(Scenario::Custom), Just(Scenario::Random), Just(Scenario::Zero)],
        any::<u64>(),
        (1u32..8, 1u32..8, prop::collection::vec(1u32..8, 1..5), -1.0..1.0f64),
        (prop::option::of(1e-14..1.0f64), prop::option::of(0.1..100.0f64), 1e-6..1.0f64, 1usize..500),
        prop::collection::vec((0.01..1.99f64, -3.0..3.0f64), 0..4),
    )
        .prop_map(|(command, scenario, seed, (level, k_ref, levels, sigma), (gap, tv, kkt, iters), atoms)| {
            let mut cfg = RunConfig { command, scenario, seed, ..RunConfig::default() };
            cfg.phi = if seed % 2 == 0 { PhiVariant::Corrected } else { PhiVariant::Printed };
            cfg.discretization.level = level;
            cfg.discretization.k_ref = k_ref;
            cfg.discretization.levels = levels;
            cfg.discretization.sigma = sigma;
            cfg.tolerances.gap_tol = gap;
            cfg.tolerances.tv_bound = tv;
            cfg.tolerances.tol_kkt = kkt;
            cfg.tolerances.max_iter = iters;
            cfg.control.atoms = atoms.into_iter().map(|(t, w)| [t, w]).collect();
            cfg
        })
}

proptest! {
    #[test]
    fn config_round_trips(cfg in arb_config()) {
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }
}
