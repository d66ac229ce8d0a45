use std::path::Path;
use std::process::{Command, Output};

fn beamho(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamho")).args(args).output().unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        "[scenario]\nnum_ues = 2\nframes = 10\nslots_per_frame = 1\nlookbacks = [0]\n[training]\nepochs = 2\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn export_writes_one_row_per_frame_and_ue() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("rows.csv");
    let o = beamho(&["--preset", "desk", "--config", &cfg, "--export-dataset", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "frame,crnti,current_beam,previous_beam,beam_rsrp_dbm,beam_sinr_db,ue_direction,ue_speed_mps,ue_x_m,ue_y_m,rlf"
    );
    assert_eq!(lines.count(), 20);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0") || l.ends_with(",1")));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["--preset", "huge", "--output-dir", out],
        vec!["--preset", "desk", "--lookback", "11", "--output-dir", out],
        vec!["--preset", "desk", "--mode", "hybrid", "--output-dir", out],
        vec!["--preset", "desk", "--config", "/nonexistent/beamho.toml", "--output-dir", out],
        vec!["--preset", "desk"],
    ] {
        let o = beamho(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn report_on_empty_dir_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamho(&["--report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fig6_accuracy.csv"));
}

#[test]
fn unwritable_export_path_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = beamho(&["--preset", "desk", "--config", &cfg, "--export-dataset", "/nonexistent/dir/rows.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn tiny_run_writes_artifacts_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let o = beamho(&["--preset", "desk", "--config", &cfg, "--mode", "centralized", "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("INCOMPLETE").exists());
    for f in ["config.toml", "manifest.txt", "fig6_accuracy.csv", "episodes.csv", "events/centralized_k0.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let fig6 = std::fs::read_to_string(out.join("fig6_accuracy.csv")).unwrap();
    assert_eq!(fig6.lines().count(), 2);
}
