use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phamp::artifact::FamilyArtifact;
use tempfile::TempDir;

fn phamp(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_phamp"));
    cmd.args(args).env_remove("PHAMP_THREADS").env("SOURCE_DATE_EPOCH", "0");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("phamp runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn small_pendulum(dir: &Path, q_max: f64) -> PathBuf {
    write_config(
        dir,
        &format!(
            "[model]\nname = \"pendulum\"\n\n[family]\nq0 = 1e-3\ndelta_q = 0.02\nq_max = {q_max:?}\n\n[output]\ndir = {:?}\n",
            dir.join("out").display().to_string()
        ),
    )
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[model]\nname = \"pendulum\"\n\n[family]\nqmax = 1.0\n");
    let out = phamp(&["spectrum", "-c", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("family.qmax"), "{}", stderr(&out));
}

#[test]
fn malformed_override_and_thread_count_are_config_errors() {
    let out = phamp(&["spectrum", "--model", "pendulum", "--set", "family.q_max"], &[]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = phamp(&["spectrum", "--model", "pendulum"], &[("PHAMP_THREADS", "zero")]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = phamp(&["spectrum", "--model", "no-such-model"], &[]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn flags_override_config_keys() {
    let dir = TempDir::new().unwrap();
    let cfg = small_pendulum(dir.path(), 0.04);
    let out = phamp(&["build-family", "-c", cfg.to_str().unwrap(), "--q-max", "0.06"], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let art = FamilyArtifact::load(&dir.path().join("out/family.json")).unwrap();
    let fam = art.family().unwrap();
    assert!((fam.q_terminal() - 0.06).abs() < 1e-12, "{}", fam.q_terminal());
}

#[test]
fn csv_layout() {
    let dir = TempDir::new().unwrap();
    let cfg = small_pendulum(dir.path(), 0.04);
    let out = phamp(&["spectrum", "-c", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out/spectrum.csv")).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# phamp "), "{}", lines[0]);
    assert!(lines[0].contains("command=spectrum"));
    let hash = lines[0].split("config-sha256=").nth(1).unwrap().split(' ').next().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(lines[1], "index,re,im,mode");
    let first: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(first.len(), 4);
    let re: f64 = first[1].parse().unwrap();
    assert!((re + 0.05).abs() < 1e-3, "{re}");
}

#[test]
fn simulate_trace_ends_with_a_termination_footer() {
    let dir = TempDir::new().unwrap();
    let cfg = small_pendulum(dir.path(), 0.1);
    let args = ["simulate", "-c", cfg.to_str().unwrap(), "--full", "--t-end", "2.0", "--dt-out", "0.5"];
    let out = phamp(&args, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[1].starts_with("t,"));
    let rows: Vec<&str> = lines.iter().skip(2).filter(|l| !l.starts_with('#')).copied().collect();
    assert_eq!(rows.len(), 5);
    let footer: Vec<&str> = lines.iter().filter(|l| l.starts_with("# ")).skip(1).copied().collect();
    assert!(footer.iter().any(|l| l.starts_with("# termination=")), "{footer:?}");
    assert!(lines.last().unwrap().starts_with('#'));
}

#[test]
fn build_family_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = small_pendulum(dir.path(), 0.1);
    let mut images = Vec::new();
    for threads in ["1", "3"] {
        let out = phamp(&["build-family", "-c", cfg.to_str().unwrap()], &[("PHAMP_THREADS", threads)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        images.push((
            std::fs::read(dir.path().join("out/family.json")).unwrap(),
            std::fs::read(dir.path().join("out/backbone.csv")).unwrap(),
        ));
    }
    assert!(images[0] == images[1]);
}

#[test]
fn boundary_before_q_max_exits_4_with_a_partial_artifact() {
    let dir = TempDir::new().unwrap();
    let cfg = small_pendulum(dir.path(), 3.0);
    let out = phamp(&["build-family", "-c", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    let art = FamilyArtifact::load(&dir.path().join("out/family.json")).unwrap();
    assert!(art.provenance.partial);
    let fam = art.family().unwrap();
    let q = fam.q_terminal();
    assert!(q > 1.3 && q < 3.0, "{q}");
}

#[test]
fn export_reads_an_artifact() {
    let dir = TempDir::new().unwrap();
    let cfg = small_pendulum(dir.path(), 0.06);
    assert_eq!(code(&phamp(&["build-family", "-c", cfg.to_str().unwrap()], &[])), 0);
    let art = dir.path().join("out/family.json");
    let exp = dir.path().join("exp");
    let out = phamp(&["export", "--family", art.to_str().unwrap(), "--out", exp.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in ["orbits.csv", "floquet.csv", "backbone.csv", "samples.csv"] {
        let text = std::fs::read_to_string(exp.join(name)).unwrap();
        assert!(text.lines().next().unwrap().contains("command=export"), "{name}");
        assert!(text.lines().count() > 2, "{name}");
    }
}

#[test]
fn wrong_artifact_version_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = small_pendulum(dir.path(), 0.04);
    assert_eq!(code(&phamp(&["build-family", "-c", cfg.to_str().unwrap()], &[])), 0);
    let path = dir.path().join("out/family.json");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"version\": 1,"));
    std::fs::write(&path, text.replacen("\"version\": 1,", "\"version\": 99,", 1)).unwrap();
    let out = phamp(&["export", "--family", path.to_str().unwrap(), "--out", dir.path().join("e").to_str().unwrap()], &[]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}
