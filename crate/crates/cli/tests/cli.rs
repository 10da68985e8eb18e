use std::process::Command as Process;

use ivgff_cli::config::{Command, ExperimentConfig, Flags};
use ivgff_cli::experiments::*;
use ivgff_cli::output::*;
use ivgff_cli::run;

fn flags(l: &[usize], beta: &[f64]) -> Flags {
    Flags { l: Some(l.to_vec()), beta: Some(beta.to_vec()), seed: Some(7), ..Flags::default() }
}

#[test]
fn key_value_file_and_precedence() {
    let text = "# run\nL = 16,32\nbeta=0.2\nseed = 5\nreplicas = 3\nburn-in = 10\n\ntopology = free # comment\n";
    let file = Flags::from_kv(text).unwrap();
    assert_eq!(file.l, Some(vec![16, 32]));
    assert_eq!(file.beta, Some(vec![0.2]));
    assert_eq!(file.burn_in, Some(10));
    let cli = Flags { seed: Some(9), replicas: Some(4), ..Flags::default() };
    let merged = cli.over(file);
    assert_eq!((merged.seed, merged.replicas, merged.l.clone()), (Some(9), Some(4), Some(vec![16, 32])));
    let cfg = ExperimentConfig::resolve(Command::Scaling, merged).unwrap();
    assert_eq!(cfg.topology.name(), "free");
    assert_eq!(cfg.burn_in_for(16), 10);

    assert!(Flags::from_kv("Lx = 3").is_err());
    assert!(Flags::from_kv("L 3").is_err());
    assert!(Flags::from_kv("beta = fast").is_err());
}

#[test]
fn validation_happens_up_front() {
    let no_seed = Flags { seed: None, ..flags(&[16], &[0.2]) };
    assert!(ExperimentConfig::resolve(Command::Scaling, no_seed.clone()).is_err());
    assert!(ExperimentConfig::resolve(Command::Green, no_seed).is_ok());
    let bad = |c, f| ExperimentConfig::resolve(c, f).is_err();
    assert!(bad(Command::Scaling, Flags { topology: Some("torus".into()), ..flags(&[16], &[0.2]) }));
    assert!(bad(Command::Scaling, Flags { topology: Some("periodic".into()), ..flags(&[15], &[0.2]) }));
    assert!(bad(Command::Layered, Flags { topology: Some("free".into()), ..flags(&[64], &[0.2]) }));
    assert!(bad(Command::Scaling, flags(&[16], &[-0.2])));
    assert!(bad(Command::Scaling, flags(&[], &[0.2])));
    assert!(bad(Command::Decompose, Flags { r: Some(40), ..flags(&[27], &[0.2]) }));
    assert!(bad(Command::RenormCheck, flags(&[9], &[0.05])));
    assert!(bad(Command::RenormCheck, Flags { alpha: Some(2.5), ..flags(&[4], &[0.05]) }));
    assert!(bad(Command::Mgf, flags(&[5], &[0.5])));
    assert!(bad(Command::Layered, Flags { n: Some(6), ..flags(&[16], &[0.2]) }));
    assert!(bad(Command::Layered, Flags { delta: Some(1.5), ..flags(&[64], &[0.2]) }));
    let cfg = ExperimentConfig::resolve(Command::Scaling, flags(&[16, 32], &[0.2])).unwrap();
    assert_eq!(cfg.burn_in_for(32), 6400);
}

#[test]
fn number_format_and_statistics() {
    assert_eq!(real(0.1), "1.0000000000000001e-1");
    assert_eq!(real(1.0 / 3.0).trim_start_matches('0').len(), "3.3333333333333331e-1".len());
    assert_eq!(real(f64::NAN), "NaN");
    let xs = [4.0, 1.0, 3.0, 2.0, 5.0];
    assert_eq!(quantile(&xs, 0.5), 3.0);
    assert_eq!(quantile(&xs, 0.25), 2.0);
    assert!((quantile(&xs, 0.1) - 1.4).abs() < 1e-12);
    let x = [1.0, 2.0, 3.0, 4.0];
    let y: Vec<f64> = x.iter().map(|v| 0.5 + 2.0 * v).collect();
    let (s, i, r2) = linear_fit(&x, &y);
    assert!((s - 2.0).abs() < 1e-12 && (i - 0.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    assert_eq!(drift_score(&[1.0], &[2.0]), None);
    assert_eq!(drift_score(&[1.0, 1.0], &[1.0, 1.0]), Some(0.0));
    assert!(drift_score(&[1.0, 2.0, 1.5], &[5.0, 6.0, 5.2]).unwrap() > 3.0);
}

#[test]
fn green_rows() {
    let r = green_diagonal(3).unwrap();
    assert_eq!((r.dist, r.green_diag), (1, 0.25));
    let cfg = ExperimentConfig::resolve(Command::Green, flags(&[9, 17, 33], &[])).unwrap();
    let out = run(&cfg).unwrap();
    let t = out.table.unwrap();
    assert_eq!(t.header, ["L", "dist", "log_dist", "green_diag"]);
    assert_eq!(t.rows.len(), 3);
    let slope = out.json["slope"].as_f64().unwrap();
    assert!((slope - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 0.02);
}

#[test]
fn mgf_rows_on_three_by_three() {
    let rows = mgf_rows(3, &[0.25, 1.0], &[0.0, 0.5, 2.0], 8).unwrap();
    for r in rows.iter().filter(|r| r.t == 0.0) {
        assert_eq!((r.upper, r.lower), (1.0, 1.0));
        assert!((r.exact - 1.0).abs() < 1e-14);
    }
    assert!(rows.iter().all(MgfRow::upper_holds));
    // single free site with four zero neighbours: <sigma,f> = t^2/4
    for r in &rows {
        assert!((r.upper - (r.t * r.t / (8.0 * r.beta)).exp()).abs() < 1e-12);
    }
    assert_eq!(lower_threshold(&rows), Some(1.0));
}

#[test]
fn renorm_check_single_site_and_l4() {
    let one = run_renorm(3, 2, 0.05, &ivgff::renorm::RenormParams::default(), 1).unwrap();
    assert!(one.identity_ok());
    assert!(one.expansion.terms.iter().all(|t| t.factors.iter().all(|f| f.density.support_len() == 1)));
    assert_eq!(one.checks.k_star, -1);

    let cfg = ExperimentConfig::resolve(
        Command::RenormCheck,
        Flags { m: Some(2.0), alpha: Some(1.75), n: Some(2), ..flags(&[4], &[0.05]) },
    )
    .unwrap();
    let out = run(&cfg).unwrap();
    assert!(!out.failed);
    assert_eq!(out.json["identity"]["pass"], true);
    assert!(out.json["identity"]["max_error"].as_f64().unwrap() <= 1e-8);
    assert_eq!(out.json["terms"], out.json["expansion"].as_array().unwrap().len());
}

#[test]
fn scaling_is_deterministic() {
    let f = Flags { replicas: Some(3), burn_in: Some(50), sweeps: Some(10), ..flags(&[8, 12], &[0.2, 0.4]) };
    let cfg = ExperimentConfig::resolve(Command::Scaling, f).unwrap();
    let a = run(&cfg).unwrap().table.unwrap();
    let b = run(&cfg).unwrap().table.unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let kinds: Vec<&str> = a.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "replica").count(), 12);
    assert_eq!(kinds.iter().filter(|k| **k == "summary").count(), 4);
    assert_eq!(kinds.iter().filter(|k| **k == "slope").count(), 2);
    assert!(a.to_csv().starts_with("kind,L,beta,replica,max_m,max_abs_m,"));
    // a replica's stream does not depend on the other list entries
    let single = Flags { replicas: Some(3), burn_in: Some(50), sweeps: Some(10), ..flags(&[12], &[0.4]) };
    let c = run(&ExperimentConfig::resolve(Command::Scaling, single).unwrap()).unwrap().table.unwrap();
    let rows = |t: &Table| {
        t.rows.iter().filter(|r| r[0] == "replica" && r[1] == "12" && r[2] == real(0.4)).cloned().collect::<Vec<_>>()
    };
    assert_eq!(rows(&a), rows(&c));
    for p in ["free", "periodic"] {
        let f = Flags { topology: Some(p.into()), replicas: Some(2), burn_in: Some(20), ..flags(&[8], &[0.3]) };
        assert!(run(&ExperimentConfig::resolve(Command::Scaling, f).unwrap()).is_ok());
    }
}

#[test]
fn decompose_single_box() {
    let f = Flags { r: Some(9), replicas: Some(4), burn_in: Some(100), sweeps: Some(20), ..flags(&[9], &[0.3]) };
    let out = run(&ExperimentConfig::resolve(Command::Decompose, f).unwrap()).unwrap();
    let t = out.table.unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(out.json["boxes"], 1);
    let u = out.json["min_U"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&u));
    assert!((out.json["product_bound"].as_f64().unwrap() - (1.0 - u)).abs() < 1e-15);

    let f = Flags { r: Some(5), replicas: Some(2), burn_in: Some(50), sweeps: Some(5), ..flags(&[15], &[0.3]) };
    let t = run(&ExperimentConfig::resolve(Command::Decompose, f).unwrap()).unwrap().table.unwrap();
    assert_eq!(t.rows.len(), 9);
}

#[test]
fn layered_first_layer_is_certain() {
    let f = Flags { n: Some(1), replicas: Some(4), burn_in: Some(100), ..flags(&[16], &[0.3]) };
    let t = run(&ExperimentConfig::resolve(Command::Layered, f).unwrap()).unwrap().table.unwrap();
    assert_eq!(t.rows.len(), 1);
    let e2 = t.column("e2").unwrap();
    assert_eq!(t.rows[0][e2], "4");
    // lowered boundary never exceeds more often than the zero boundary
    let f = Flags { n: Some(2), delta: Some(0.5), replicas: Some(4), burn_in: Some(100), ..flags(&[64], &[0.1]) };
    let t = run(&ExperimentConfig::resolve(Command::Layered, f).unwrap()).unwrap().table.unwrap();
    let (lo, hi) = (t.column("mono_low_exceed").unwrap(), t.column("mono_high_exceed").unwrap());
    for r in &t.rows {
        assert!(r[lo].parse::<usize>().unwrap() <= r[hi].parse::<usize>().unwrap());
    }
}

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_ivgff"))
}

#[test]
fn binary_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("green.csv");
    let st = bin().args(["green", "--L", "5,9", "--out"]).arg(&out).status().unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("L,dist,log_dist,green_diag\n5,2,"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["schema_version"], 1);

    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "L = 5\nbeta = 0.5\nseed = 1\nreplicas = 2\nburn-in = 5\n").unwrap();
    let o = bin().args(["scaling", "--config"]).arg(&conf).args(["--L", "6"]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("replica,6,"));

    let o = bin().args(["scaling", "--L", "8", "--beta", "0.2"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("--seed is required"));
}
