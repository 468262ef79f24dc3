use std::path::Path;
use std::process::{Command, Output};

use dprmdi_cli::commands;
use dprmdi_cli::config::ExperimentConfig;
use dprmdi_cli::output::stats_from_csv;
use dprmdi_core::estimator::{estimate, SourceSet};
use dprmdi_core::fock::PhaseRandomization;

fn dprmdi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dprmdi"))
        .args(args)
        .output()
        .expect("spawn dprmdi")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "[source]\nphases = 12, inf\n[sweep]\nstart_km = 0\nstop_km = 40\nstep_km = 20\n\
[noise]\ne11b_start = 0\ne11b_stop = 0.2\ne11b_step = 0.05\n[intensity]\npoints = 6\n";

#[test]
fn keyrate_sweep_single_point_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.ini",
        "[source]\nphases = inf\n[sweep]\nstop_km = 0\n[intensity]\npoints = 5\n",
    );
    let out = dir.path().join("k.csv");
    let o = dprmdi(&["--config", &cfg, "--output", out.to_str().unwrap(), "keyrate-sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "num_phases,distance_km,mu_opt,nu_opt,key_rate,raw_rate,Y11_lo,e11b_hi,F11,delta,phase_error"
    );
    assert!(lines[1].starts_with("inf,0.0000000000000000e0,"));
    assert!(!text.contains('\r'));
}

#[test]
fn sweeps_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.ini", SMALL);
    for cmd in ["keyrate-sweep", "noise-sweep"] {
        let runs: Vec<Vec<u8>> = ["0", "1", "3"]
            .iter()
            .map(|t| {
                let o = dprmdi(&["--config", &cfg, "--threads", t, cmd]);
                assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
                o.stdout
            })
            .collect();
        assert!(runs.windows(2).all(|w| w[0] == w[1]), "{cmd} output differs");
    }
}

#[test]
fn noise_sweep_rows_follow_the_config_order() {
    let cfg = ExperimentConfig::parse(SMALL).unwrap();
    let rows = commands::noise_rows(&cfg).unwrap();
    assert_eq!(rows.len(), 2 * 5);
    assert_eq!(rows[0].phases, PhaseRandomization::Discrete(12));
    assert_eq!(rows[9].phases, PhaseRandomization::Continuous);
    assert!(rows.iter().all(|r| r.e11b < 0.5 || r.rate == 0.0));
    let csv = commands::noise_csv(&rows).unwrap();
    assert!(csv.lines().nth(6).unwrap().starts_with("inf,0.0000000000000000e0,"));
}

#[test]
fn estimate_from_simulated_file_matches_simulation_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = "[channel]\ndistance_km = 25\n[source]\nphases = 12\n[intensity]\nmu = 0.4\nnu = 0.02\n";
    let cfg_path = write(dir.path(), "c.ini", cfg_text);
    let stats_path = dir.path().join("stats.csv");
    let o = dprmdi(&[
        "--config",
        &cfg_path,
        "--output",
        stats_path.to_str().unwrap(),
        "simulate",
    ]);
    assert!(o.status.success());
    let o = dprmdi(&[
        "--config",
        &cfg_path,
        "estimate",
        "--stats",
        stats_path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let from_file = String::from_utf8(o.stdout).unwrap();

    let cfg = ExperimentConfig::parse(cfg_text).unwrap();
    let stats = commands::simulate(&cfg);
    let sources = SourceSet::new(cfg.phases[0], &cfg.intensities).unwrap();
    let direct = estimate(&stats, &sources, &cfg.estimation).unwrap();
    assert_eq!(from_file, commands::bounds_csv(&direct).unwrap());
    assert!(from_file.lines().last().unwrap().starts_with("final,e11b_hi,1,1,"));
}

#[test]
fn widening_epsilon_widens_the_bounds() {
    let cfg = ExperimentConfig::parse("[source]\nphases = inf\n[channel]\ndistance_km = 10\n").unwrap();
    let stats = commands::simulate(&cfg);
    let clean = commands::estimate_bounds(&cfg, &stats, None).unwrap();
    let mut prev = (clean.y11(), clean.ye11());
    for eps in [1e-4, 1e-3, 1e-2] {
        let mut c = cfg.clone();
        c.estimation.epsilon_override = Some(eps);
        let b = commands::estimate_bounds(&c, &stats, None).unwrap();
        let (y, ye) = (b.y11(), b.ye11());
        assert!(y.lo <= prev.0.lo + 1e-15 && y.hi >= prev.0.hi - 1e-15, "eps {eps}");
        assert!(ye.lo <= prev.1.lo + 1e-15 && ye.hi >= prev.1.hi - 1e-15, "eps {eps}");
        prev = (y, ye);
    }
}

#[test]
fn estimate_rejects_incomplete_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write(
        dir.path(),
        "m.csv",
        "alice_setting,bob_setting,gain,error_rate\nsignal,signal,1e-4,0.03\n",
    );
    let o = dprmdi(&["estimate", "--stats", &missing, "--phases", "inf"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("missing setting pairs") && err.contains("(vacuum, vacuum)"),
        "{err}"
    );

    let good = commands::simulate_csv(&ExperimentConfig::default()).unwrap();
    let bad = good.replacen("signal,decoy,", "signal,decoy,x", 1);
    let bad = write(dir.path(), "b.csv", &bad);
    let o = dprmdi(&["estimate", "--stats", &bad, "--phases", "inf"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");

    let _ = stats_from_csv(good.as_bytes()).unwrap();
}

#[test]
fn attack_demo_exit_codes_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("r.csv");
    let o = dprmdi(&["attack-demo", "--record", rec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("attack successful (R^l > R^u): true"));
    assert!(text.contains("mu/nu - 1"));
    let record = std::fs::read_to_string(&rec).unwrap();
    let fields: Vec<&str> = record.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields.len(), commands::ATTACK_HEADER.len());
    assert_eq!((fields[5], fields[11]), ("true", "true"));

    let o = dprmdi(&["attack-demo", "--mu", "0.1", "--nu", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("attack successful (R^l > R^u): false"));

    let o = dprmdi(&["attack-demo", "--eta", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("signal gain"));
}

#[test]
fn attack_cutoff_monotonicity() {
    let z = |c| {
        commands::attack(0.1, 0.02, None, c)
            .unwrap()
            .report
            .solution
            .unwrap()
            .z1_mu_min
    };
    assert!(z(10) <= z(2) + 1e-12);
}

#[test]
fn io_and_config_errors_name_the_path() {
    let o = dprmdi(&["--output", "/nonexistent-dir/x.csv", "simulate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent-dir/x.csv"));
    let o = dprmdi(&["--config", "/nonexistent-dir/c.ini", "simulate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent-dir/c.ini"));
}

#[test]
fn shipped_config_matches_the_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.ini");
    assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::default());
}
