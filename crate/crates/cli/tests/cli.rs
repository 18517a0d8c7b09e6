use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectral-rates"))
}

fn write_config(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("study.cfg");
    std::fs::write(
        &path,
        format!(
            "study = spectral\nmanifold = torus2\nl = 2\nn_list = 300, 400, 500\ntrials = 1\neps_const = 1.0\nseed = 5\nout_dir = {}\n",
            dir.join("out").display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn run_writes_reports_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("out/spectral.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,study,n,eps,trial,seed,lambda_rel_err,l2_err,h1_err,E_l,aux1,aux2,wall_ms"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/spectral.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["study"], "spectral");
    assert!(json["fits"]["lambda_rel_err"]["slope"].is_number());

    let id = rows[1].split(',').next().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--replay", id])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains(id));
}

#[test]
fn flag_overrides_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let strip = |path: &std::path::Path| -> Vec<String> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--study", "lowerbound", "--manifold", "torus1", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(strip(&out.join("lowerbound.csv")));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].len(), 4);
}

#[test]
fn rejects_unknown_keys_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "colour = red\n").unwrap();
    let status = bin().args(["run", "--config"]).arg(&path).status().unwrap();
    assert!(!status.success());
    let status = bin().args(["run", "--trials", "0"]).status().unwrap();
    assert!(!status.success());
}
