use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use plume_core::raster::{read_brf, write_brf, BrfObject};
use plume_core::{Field, Mask, Scene};

fn plume(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plume"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn plume")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn version_and_help_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let v = plume(dir.path(), &["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&v.stdout).trim(), format!("plume {}", env!("CARGO_PKG_VERSION")));
    assert_eq!(plume(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &[],
        &["detect", "--in", "a.brf", "--out", "b.brf", "--bogus"],
        &["detect", "--in", "a.brf", "--out", "b.brf", "--channel", "X"],
        &["label", "--out", "x.brf"],
        &["detect", "--in", "a.brf", "--out", "b.brf", "--k", "0"],
    ] {
        let o = plume(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn missing_band_exits_two_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let scene = Scene::new(4, 4, 20.0).with_band("B11", Field::filled(4, 4, 100.0)).unwrap();
    write_brf(&BrfObject::Scene(scene), dir.path().join("s.brf")).unwrap();
    let o = plume(dir.path(), &["enhance", "--scene", "s.brf", "--out", "stack.brf"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("B12"), "{}", stderr(&o));
    assert!(!dir.path().join("stack.brf").exists());
}

#[test]
fn unreadable_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk.brf"), b"not a brf").unwrap();
    let o = plume(dir.path(), &["detect", "--in", "junk.brf", "--out", "p.brf"]);
    assert_eq!(o.status.code(), Some(2));
    let o = plume(dir.path(), &["detect", "--in", "absent.brf", "--out", "p.brf"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn refuses_to_overwrite_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = Mask::from_fn(5, 5, |x, y| u8::from(x == y));
    write_brf(&BrfObject::Mask(m.clone()), dir.path().join("m.brf")).unwrap();
    let before = fs::read(dir.path().join("m.brf")).unwrap();
    let o = plume(dir.path(), &["diffmap", "--pred", "m.brf", "--gt", "m.brf", "--out", "m.brf"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(fs::read(dir.path().join("m.brf")).unwrap(), before);
}

#[test]
fn eval_lists_missing_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(plume(d, &["synth", "--out", "s"]).status.code(), Some(0));
    let samples: Vec<serde_json::Value> = ["a", "b"]
        .iter()
        .map(|id| {
            serde_json::json!({
                "id": id, "split": "val", "stack_path": "x.brf", "mask_path": "s/mask.brf", "has_plume": false,
                "provenance": {"scene_id": id, "origin": [0, 0], "tile_px": 64, "augmentations": [], "seed": 0}
            })
        })
        .collect();
    let manifest = serde_json::json!({ "dataset_id": "m", "config_hash": "", "global_seed": 0, "samples": samples });
    fs::write(d.join("m.json"), manifest.to_string()).unwrap();
    fs::create_dir(d.join("preds")).unwrap();
    fs::copy(d.join("s/mask.brf"), d.join("preds/a.brf")).unwrap();
    let o = plume(d, &["eval", "--manifest", "m.json", "--pred", "preds", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains('b'));
    fs::copy(d.join("s/mask.brf"), d.join("preds/b.brf")).unwrap();
    let o = plume(d, &["eval", "--manifest", "m.json", "--pred", "preds", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["micro"]["dice"], 1.0);
    assert_eq!(report["samples"][0]["fn"], 0);
    assert!(d.join("r.txt").is_file());
}

#[test]
fn run_record_echoes_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"width": 20, "height": 10}"#).unwrap();
    let o = plume(d, &["--seed", "77", "synth", "--config", "cfg.json", "--out", "out"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/run.json")).unwrap()).unwrap();
    assert_eq!(rec["subcommand"], "synth");
    assert_eq!(rec["seed"], 77);
    assert_eq!(rec["config"]["width"], 20);
    assert_eq!(rec["config"]["pixel_size_m"], 20.0);
    assert!(rec["config"]["bands"].as_array().is_some_and(|b| !b.is_empty()));
    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/config.json")).unwrap()).unwrap();
    assert_eq!(echo, rec["config"]);
    assert!(Path::new(rec["outputs"]["scene"].as_str().unwrap()).is_absolute());
    let scene = read_brf(d.join("out/scene.brf")).unwrap().into_scene().unwrap();
    assert_eq!(scene.shape(), (20, 10));
}

#[test]
fn replay_works_from_another_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(plume(d, &["synth", "--out", "s"]).status.code(), Some(0));
    assert_eq!(plume(d, &["enhance", "--scene", "s/scene.brf", "--out", "st.brf"]).status.code(), Some(0));
    let first = fs::read(d.join("st.brf")).unwrap();
    fs::remove_file(d.join("st.brf")).unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    let rec = d.join("st.run.json");
    let o = plume(elsewhere.path(), &["replay", "--record", rec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(d.join("st.brf")).unwrap(), first);
}

#[test]
fn label_assigns_vents_and_writes_contours() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = Mask::from_fn(10, 6, |x, y| u8::from((x < 2 && y < 2) || (x >= 7 && y >= 3)));
    write_brf(&BrfObject::Mask(m), d.join("m.brf")).unwrap();
    fs::write(d.join("vents.json"), r#"[{"name": "A", "xy": [9, 5]}, {"name": "B", "xy": [0, 0]}]"#).unwrap();
    let o = plume(d, &["label", "--mask", "m.brf", "--vents", "vents.json", "--out", "l.brf", "--contours", "c.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let l = read_brf(d.join("l.brf")).unwrap().into_mask().unwrap();
    assert_eq!(l.get(0, 0), 2);
    assert_eq!(l.get(8, 4), 1);
    assert_eq!(l.get(5, 0), 0);
    let c: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("c.json")).unwrap()).unwrap();
    let areas: Vec<f64> = c["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["properties"]["area_px"].as_f64().unwrap())
        .collect();
    assert_eq!(areas, vec![4.0, 9.0]);
}
