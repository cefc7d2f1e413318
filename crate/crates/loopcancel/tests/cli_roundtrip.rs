//! End-to-end command tests: design and sweep pipelines through the file
//! formats, byte-identical reruns, and the documented exit codes.

use std::path::PathBuf;

use loopcancel::cli::{
    cmd_design, cmd_sweep, controller_from_text, ExperimentConfig, SweepMode, EXIT_CONFIG, EXIT_OK,
};
use loopcancel::relay::lifted_design_plant;
use loopcancel::sdh::certify;

fn sample_config(name: &str, out_dir: &std::path::Path) -> ExperimentConfig {
    let text = format!(
        "\
name = {name}
h = 1.0
carrier_freq = 10000.0
delay = 1.0
coupling = 0.15
lna_gain = 1.0
pa_gain = 2000.0
w_tau = 2.0
w_order = 1
f_order = 0
p_tau = 0.001
p_order = 1
n_fsfh = 8
n_subcarriers = 64
cp_len = 16
pulse = squared
symbol_period = 2
n_blocks = 20
seed = 1
ebn0_db_list = 2, 6
gain_sweep = 1000, 2000
gain_ebn0_db = 2.0
n_blocks_gain = 10
out_dir = {}
",
        out_dir.display()
    );
    ExperimentConfig::parse(&text).unwrap()
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("loopcancel-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn design_writes_certified_controller_and_is_idempotent() {
    let dir = temp_dir("design");
    let cfg = sample_config("demo", &dir);
    let out = cmd_design(&cfg).unwrap();
    assert!(out.controller_path.exists());
    assert!(out.report_path.exists());

    let text1 = std::fs::read_to_string(&out.controller_path).unwrap();
    let ctrl = controller_from_text(&text1).unwrap();
    assert!((ctrl.gamma - out.gamma).abs() < 1e-15);

    // The stored controller still certifies against a rebuilt plant.
    let raw = lifted_design_plant(&cfg.relay_params().unwrap()).unwrap();
    let cert = certify(&raw, &ctrl.system).unwrap();
    assert!(cert.stable);
    assert!(cert.norm <= ctrl.gamma * 1.001);

    // Re-running produces byte-identical artifacts.
    cmd_design(&cfg).unwrap();
    let text2 = std::fs::read_to_string(&out.controller_path).unwrap();
    assert_eq!(text1, text2);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn sweep_outputs_are_deterministic_and_complete() {
    let dir = temp_dir("sweep");
    let cfg = sample_config("demo", &dir);
    let out = cmd_sweep(&cfg, SweepMode::Ebn0, true).unwrap();
    assert_eq!(out.curve.points.len(), 2);
    let csv1 = std::fs::read_to_string(&out.csv_path).unwrap();
    assert!(csv1.starts_with("x,ber,bits,errors,stderr,diverged\n"));
    assert_eq!(csv1.lines().count(), 3);
    let ideal = std::fs::read_to_string(dir.join("ideal.csv")).unwrap();
    assert_eq!(ideal.lines().count(), 3);
    assert!(dir.join("plot_ebn0.py").exists());

    let out2 = cmd_sweep(&cfg, SweepMode::Ebn0, false).unwrap();
    let csv2 = std::fs::read_to_string(&out2.csv_path).unwrap();
    assert_eq!(csv1, csv2);

    let gain = cmd_sweep(&cfg, SweepMode::Gain, false).unwrap();
    assert_eq!(gain.curve.points.len(), 2);
    assert!(gain.curve.points.iter().all(|p| !p.diverged));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn cli_run_exit_codes() {
    let dir = temp_dir("exit");
    // Unknown command and missing config are configuration errors.
    assert_eq!(loopcancel::cli::run(&["bogus".to_string()]), EXIT_CONFIG);
    assert_eq!(
        loopcancel::cli::run(&["design".to_string()]),
        EXIT_CONFIG
    );
    // Config with an invalid value: exit 2 and the offending key is named.
    let bad = dir.join("bad.cfg");
    std::fs::write(
        &bad,
        "name = x\nh = 1.0\ncarrier_freq = 1.0\ndelay = 1.0\ncoupling = 0.15\nlna_gain = 1.0\n\
         pa_gain = -1\nw_tau = 2.0\nw_order = 1\nf_order = 0\np_tau = 0.001\np_order = 1\n\
         n_fsfh = 4\nn_subcarriers = 64\ncp_len = 16\npulse = squared\nsymbol_period = 2\n\
         n_blocks = 10\nseed = 1\n",
    )
    .unwrap();
    let code = loopcancel::cli::run(&[
        "design".to_string(),
        "--config".to_string(),
        bad.display().to_string(),
    ]);
    assert_eq!(code, EXIT_CONFIG);

    // A complete tiny run through the real binary path.
    let good = dir.join("good.cfg");
    std::fs::write(
        &good,
        format!(
            "name = tiny\nh = 1.0\ncarrier_freq = 10000.0\ndelay = 1.0\ncoupling = 0.15\n\
             lna_gain = 1.0\npa_gain = 2000.0\nw_tau = 2.0\nw_order = 1\nf_order = 0\n\
             p_tau = 0.001\np_order = 1\nn_fsfh = 4\nn_subcarriers = 64\ncp_len = 16\n\
             pulse = squared\nsymbol_period = 2\nn_blocks = 6\nseed = 3\n\
             ebn0_db_list = 4\nout_dir = {}\n",
            dir.display()
        ),
    )
    .unwrap();
    let code = loopcancel::cli::run(&[
        "design".to_string(),
        "--config".to_string(),
        good.display().to_string(),
    ]);
    assert_eq!(code, EXIT_OK);
    let code = loopcancel::cli::run(&[
        "sweep".to_string(),
        "--mode".to_string(),
        "ebn0".to_string(),
        "--config".to_string(),
        good.display().to_string(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(dir.join("tiny.ebn0.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn seed_override_changes_hash_and_results_match_rerun() {
    let dir = temp_dir("seed");
    let mut cfg = sample_config("demo", &dir);
    let h1 = cfg.hash();
    cfg.seed = 9;
    cfg.set("seed", "9".to_string());
    assert_ne!(h1, cfg.hash());

    let out1 = cmd_sweep(&cfg, SweepMode::Ebn0, true).unwrap();
    let csv1 = std::fs::read_to_string(&out1.csv_path).unwrap();
    let out2 = cmd_sweep(&cfg, SweepMode::Ebn0, false).unwrap();
    let csv2 = std::fs::read_to_string(&out2.csv_path).unwrap();
    assert_eq!(csv1, csv2);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn validate_recertifies_stored_controller() {
    let dir = temp_dir("validate");
    let cfg_path = dir.join("demo.cfg");
    std::fs::write(
        &cfg_path,
        format!(
            "name = demo\nh = 1.0\ncarrier_freq = 10000.0\ndelay = 1.0\ncoupling = 0.15\n\
             lna_gain = 1.0\npa_gain = 2000.0\nw_tau = 2.0\nw_order = 1\nf_order = 0\n\
             p_tau = 0.001\np_order = 1\nn_fsfh = 4\nn_subcarriers = 64\ncp_len = 16\n\
             pulse = squared\nsymbol_period = 2\nn_blocks = 6\nseed = 1\nout_dir = {}\n",
            dir.display()
        ),
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let out = cmd_design(&cfg).unwrap();

    let results = loopcancel::cli::cmd_validate(false, Some((&cfg, out.controller_path.as_path())))
        .unwrap();
    let cert = results
        .iter()
        .find(|r| r.name.contains("stored controller"))
        .expect("certificate check present");
    assert!(cert.pass, "{}", cert.detail);

    // A corrupted file fails with a parse diagnostic instead of passing.
    let corrupted = dir.join("broken.controller.txt");
    let mut text = std::fs::read_to_string(&out.controller_path).unwrap();
    text = text.replace("# Bd", "# Xd");
    std::fs::write(&corrupted, text).unwrap();
    let results =
        loopcancel::cli::cmd_validate(false, Some((&cfg, corrupted.as_path()))).unwrap();
    let cert = results
        .iter()
        .find(|r| r.name.contains("stored controller"))
        .unwrap();
    assert!(!cert.pass);
    assert!(cert.detail.contains("parse"), "{}", cert.detail);
    let _ = std::fs::remove_dir_all(&dir);
}
