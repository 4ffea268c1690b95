use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_i2v-detect");
const CROSSING: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/crossing.toml");
const TURN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/turn.toml");

fn cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("I2V_DETECT_OUT")
        .output()
        .unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cli(&["run", CROSSING, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        header(&out.join("residuals.csv")),
        "t,sensor,dimension,r,r_hat,alpha,mask"
    );
    assert_eq!(header(&out.join("masks.csv")), "t,sensor,mask");
    assert_eq!(
        header(&out.join("events.csv")),
        "sensor,dimension,onset,clear"
    );
    assert!(header(&out.join("track.csv")).starts_with("t,x,y,theta,v,v_theta,a,true_x"));
    assert_eq!(header(&out.join("truth.csv")), "t,x,y,theta,v,v_theta,a");
    let events = fs::read_to_string(out.join("events.csv")).unwrap();
    assert!(
        events.lines().skip(1).any(|l| l.starts_with("rsu,x,45.")),
        "{events}"
    );
    let truth = fs::read_to_string(out.join("truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 1 + 1201);
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = cli(&[
            "run",
            TURN,
            "--kind",
            "drift",
            "--magnitude",
            "1",
            "--start",
            "20",
            "--duration",
            "2.5",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "residuals.csv",
        "masks.csv",
        "track.csv",
        "truth.csv",
        "events.csv",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn malformed_file_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[detector]\nhorizon = \"thirty\"\n").unwrap();
    let out = dir.path().join("out");
    let o = cli(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("detector.horizon") && err.contains("line 2"),
        "{err}"
    );
    assert!(!out.exists());
}

#[test]
fn invalid_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        "[scenario]\nduration = -1.0\n",
        "[noise.radar]\nv_x = 0.1\n",
        "[detector]\nhorizon = 0\n",
        "[campaing]\nseeds = [1]\n",
    ];
    for text in cases {
        let cfg = dir.path().join("c.toml");
        fs::write(&cfg, text).unwrap();
        let o = cli(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(!o.status.success(), "accepted {text:?}");
        assert!(!out.exists());
    }
}

#[test]
fn missing_file_fails() {
    let o = cli(&["run", "/nonexistent/scenario.toml", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_ablated_sensor_fails() {
    let o = cli(&["campaign", "--ablate", "radar,sonar"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sonar"));
}

#[test]
fn bad_anomaly_flags_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cli(&[
        "run",
        CROSSING,
        "--kind",
        "bias",
        "--magnitude",
        "1",
        "--start",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let o = cli(&[
        "run",
        CROSSING,
        "--kind",
        "bias",
        "--magnitude",
        "1",
        "--start",
        "10",
        "--duration",
        "1",
        "--sensor",
        "radar",
        "--dimension",
        "theta",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(!out.exists());
}

#[test]
fn campaign_uses_env_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args([
            "campaign",
            "--seeds",
            "4",
            "--workers",
            "2",
            "--ablate",
            "radar,lidar",
        ])
        .env("I2V_DETECT_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = fs::read_to_string(dir.path().join("campaign.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(
        lines.next().unwrap(),
        "kind,magnitude,duration,detected,fp_sensors,latency_s,seed"
    );
    assert_eq!(lines.count(), 50);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("sensors: camera,rsu"), "{summary}");
    assert_eq!(String::from_utf8_lossy(&o.stdout), summary);
}

#[test]
fn campaign_grid_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut grids = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(w);
        let o = cli(&[
            "campaign",
            "--seeds",
            "1,2",
            "--workers",
            w,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        grids.push(fs::read(out.join("campaign.csv")).unwrap());
    }
    assert_eq!(grids[0], grids[1]);
}
