//! Integration tests of the experiment front end: configuration loading,
//! overrides, command outputs, and sidecar contents.

use std::path::{Path, PathBuf};

use netgain_cli::commands::{cmd_penalty_curve, cmd_simulate, cmd_solve};
use netgain_cli::config::Experiment;
use netgain_cli::output::OutDir;

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
  "m": 2,
  "delta_max": 25,
  "horizon": 6000,
  "warmup_frac": 0.1,
  "replications": 3,
  "seed": 3,
  "n": 4,
  "loss": {"labels": ["safe", "cautious", "dangerous"],
           "loss": [[0, 10, 10], [50, 0, 20], [200, 50, 0]]},
  "classes": [
    {"name": "patrol", "count": 1,
     "source": {"type": "deterministic", "path": [[1,1],[1,2]], "success_prob": 0.95}},
    {"name": "scanner", "fill": true,
     "source": {"type": "gridworld", "rows": 3, "cols": 4, "vertical_prob": 0.05,
                "horizontal_prob": 0.95,
                "row_danger": ["safe", "cautious", "dangerous"], "success_prob": 0.9}}
  ],
  "policies": ["maxage", "netgain"]
}"#,
    )
    .unwrap();
    path
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("netgain-cli-test-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn curve_uses_configured_states_on_the_fill_class() {
    let dir = temp_dir("curve");
    let config = write_config(&dir);
    let mut experiment = Experiment::load(&config, None).unwrap();
    experiment.config.curve_states =
        Some(vec!["(1,2),right".into(), "(2,2),down".into()]);
    let mut out = OutDir::create(&dir.join("out")).unwrap();
    let summary = cmd_penalty_curve(&experiment, &mut out).unwrap();
    assert_eq!(summary.class, "scanner");
    assert_eq!(summary.states.len(), 2);
    let csv = std::fs::read_to_string(dir.join("out/penalty_curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "delta,q_1_2_right,q_2_2_down");
    assert_eq!(csv.lines().count(), 26); // header + delta 1..=25
    assert!(dir.join("out/penalty_table.csv").exists());
    assert!(dir.join("out/penalty-curve.meta.json").exists());

    // the default observation set targets the full-size scanner grid and
    // cannot resolve on this 3-row world
    experiment.config.curve_states = None;
    let mut out = OutDir::create(&dir.join("out2")).unwrap();
    assert!(cmd_penalty_curve(&experiment, &mut out).is_err());
}

#[test]
fn curve_defaults_match_the_shipped_fleet() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scanner_fleet.json");
    let mut experiment = Experiment::load(&shipped, Some(10)).unwrap();
    experiment.config.curve_states = None;
    let dir = temp_dir("curve-default");
    let mut out = OutDir::create(&dir.join("out")).unwrap();
    let summary = cmd_penalty_curve(&experiment, &mut out).unwrap();
    assert_eq!(summary.states.len(), 4);
    assert!(summary.states.contains(&"(1,3),right".to_string()));
    assert!(summary.states.contains(&"(2,3),down".to_string()));
    assert!((summary.stationary_penalty - 11.25).abs() < 1e-9);
}

#[test]
fn delta_max_override_rebuilds_tables() {
    let dir = temp_dir("delta-max");
    let config = write_config(&dir);
    let experiment = Experiment::load(&config, Some(7)).unwrap();
    assert_eq!(experiment.config.delta_max, 7);
    assert_eq!(experiment.classes[1].penalty.delta_max(), 7);
}

#[test]
fn solve_with_fixed_price_skips_the_trajectory() {
    let dir = temp_dir("solve-fixed");
    let config = write_config(&dir);
    let experiment = Experiment::load(&config, None).unwrap();
    let mut out = OutDir::create(&dir.join("out")).unwrap();
    let summary = cmd_solve(&experiment, &mut out, Some(0.25)).unwrap();
    assert_eq!(summary.lambda_star, 0.25);
    assert_eq!(summary.rounds, 0);
    assert!(!dir.join("out/dual_trajectory.csv").exists());
    assert!(dir.join("out/arm_patrol.csv").exists());
    assert!(dir.join("out/arm_scanner.csv").exists());

    let head: String = std::fs::read_to_string(dir.join("out/arm_scanner.csv"))
        .unwrap()
        .lines()
        .take(1)
        .collect();
    assert_eq!(head, "delta,state_id,h,alpha,lambda");
}

#[test]
fn solve_ascent_writes_the_trajectory() {
    let dir = temp_dir("solve-ascent");
    let config = write_config(&dir);
    let mut experiment = Experiment::load(&config, None).unwrap();

    // two scanners on two channels: the constraint is slack, price zero
    experiment.config.n = Some(3);
    let mut out = OutDir::create(&dir.join("slack")).unwrap();
    let summary = cmd_solve(&experiment, &mut out, None).unwrap();
    assert_eq!(summary.lambda_star, 0.0);
    assert!(summary.converged);
    let csv = std::fs::read_to_string(dir.join("slack/dual_trajectory.csv")).unwrap();
    assert!(csv.starts_with("round,lambda,subgradient,dual_value\n"));
    assert_eq!(csv.lines().count(), summary.rounds + 1);

    // three scanners on two channels: the constraint binds and the channel
    // gets priced
    experiment.config.n = Some(4);
    let mut out = OutDir::create(&dir.join("tight")).unwrap();
    let tight = cmd_solve(&experiment, &mut out, None).unwrap();
    assert!(tight.lambda_star > 0.0);
    assert!(tight.dual_value > summary.dual_value);
}

#[test]
fn simulate_honors_seed_and_fleet_overrides() {
    let dir = temp_dir("simulate");
    let config = write_config(&dir);

    let mut experiment = Experiment::load(&config, None).unwrap();
    let mut out = OutDir::create(&dir.join("a")).unwrap();
    let a = cmd_simulate(&experiment, &mut out, "maxage", false).unwrap();

    let mut out = OutDir::create(&dir.join("b")).unwrap();
    let b = cmd_simulate(&experiment, &mut out, "maxage", false).unwrap();
    assert_eq!(a.mean_normalized_penalty, b.mean_normalized_penalty);

    experiment.config.seed = 99;
    let mut out = OutDir::create(&dir.join("c")).unwrap();
    let c = cmd_simulate(&experiment, &mut out, "maxage", false).unwrap();
    assert_ne!(a.mean_normalized_penalty, c.mean_normalized_penalty);

    experiment.config.n = Some(6);
    let mut out = OutDir::create(&dir.join("d")).unwrap();
    let d = cmd_simulate(&experiment, &mut out, "maxage", false).unwrap();
    assert_eq!(d.n, 6);

    let metrics = std::fs::read_to_string(dir.join("d/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3); // header + one row per rep
    assert!(metrics.lines().nth(1).unwrap().starts_with("maxage,6,2,"));
}

#[test]
fn netgain_simulation_beats_maxage_on_the_small_fleet() {
    let dir = temp_dir("ordering");
    let config = write_config(&dir);
    let mut experiment = Experiment::load(&config, None).unwrap();
    experiment.config.n = Some(8);
    experiment.config.horizon = 20_000;

    let mut out = OutDir::create(&dir.join("net")).unwrap();
    let net = cmd_simulate(&experiment, &mut out, "netgain", false).unwrap();
    assert!(net.lambda_star.is_some());

    let mut out = OutDir::create(&dir.join("age")).unwrap();
    let age = cmd_simulate(&experiment, &mut out, "maxage", false).unwrap();

    assert!(
        net.mean_normalized_penalty <= age.mean_normalized_penalty + age.ci95_half_width,
        "netgain {} vs maxage {}",
        net.mean_normalized_penalty,
        age.mean_normalized_penalty
    );
}

#[test]
fn missing_inputs_surface_as_config_errors() {
    let dir = temp_dir("errors");
    let config = write_config(&dir);
    let experiment = Experiment::load(&config, None).unwrap();
    let mut out = OutDir::create(&dir.join("out")).unwrap();

    // sweep and scale both need their sections
    assert!(netgain_cli::commands::cmd_sweep(&experiment, &mut out).is_err());
    assert!(netgain_cli::commands::cmd_scale(&experiment, &mut out).is_err());

    // unknown policy
    assert!(cmd_simulate(&experiment, &mut out, "whittle", false).is_err());

    // missing referenced file
    let bad = dir.join("bad.json");
    std::fs::write(
        &bad,
        r#"{"loss": "nowhere.json", "classes": [{"name": "x", "count": 1,
            "source": {"type": "deterministic", "path": [[1,1]], "success_prob": 1.0}}]}"#,
    )
    .unwrap();
    assert!(Experiment::load(&bad, None).is_err());
}
