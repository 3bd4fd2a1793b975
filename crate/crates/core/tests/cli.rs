use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use parallax_dxt::cli::config::RunConfig;
use parallax_dxt::cli::raster::GridRaster;
use tempfile::TempDir;

const SMALL: &str = "\
[geometry]
n_angles = 48
[phantom]
nx = 48
ny = 48
voxel_pitch_mm = 0.025
[verify]
oracle_grid = 24
oracle_angles = 24
";

fn run(args: &[&str], dir: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_parallax-dxt"));
    cmd.args(args).current_dir(dir);
    match threads {
        Some(n) => cmd.env("PARALLAX_DXT_THREADS", n),
        None => cmd.env_remove("PARALLAX_DXT_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup(extra: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), format!("{SMALL}{extra}")).unwrap();
    dir
}

fn line<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines()
        .find(|l| l.starts_with(prefix))
        .unwrap_or_else(|| panic!("no `{prefix}` in\n{text}"))
}

#[test]
fn unknown_key_exits_with_usage_error() {
    let dir = setup("[recon]\nsmoothing = 3\n");
    let o = run(&["phantom", "--config", "run.cfg"], dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("smoothing") && err.contains("run.cfg:11"), "{err}");
}

#[test]
fn unknown_mode_flag_is_a_usage_error() {
    let dir = setup("");
    let o = run(
        &["reconstruct", "--config", "run.cfg", "--mode", "median"],
        dir.path(),
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn phantom_writes_rasters_and_resolved_config() {
    let dir = setup("");
    let o = run(&["phantom", "--config", "run.cfg", "--out", "ph"], dir.path(), None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("ph");
    for name in ["m0", "strain", "mask"] {
        let r = GridRaster::read(&out.join(format!("{name}.f32"))).unwrap();
        assert_eq!((r.nrows, r.ncols), (48, 48));
        assert_eq!(
            r.get("kind"),
            Some(if name == "strain" { "strain_offset" } else { name })
        );
    }
    let echoed = RunConfig::load(&out.join("resolved.cfg")).unwrap();
    let mut original = RunConfig::load(&dir.path().join("run.cfg")).unwrap();
    original.output.dir = "ph".into();
    original.geometry.n_translations = Some(48);
    original.geometry.translation_pitch_mm = Some(0.025);
    assert_eq!(echoed, original);
}

#[test]
fn mask_file_sets_the_grid() {
    let dir = setup("");
    let mut pgm = b"P2\n30 20\n1\n".to_vec();
    for r in 0..20 {
        for c in 0..30 {
            pgm.extend_from_slice(if (5..15).contains(&r) && (4..26).contains(&c) {
                b"1 "
            } else {
                b"0 "
            });
        }
        pgm.push(b'\n');
    }
    fs::write(dir.path().join("mask.pgm"), pgm).unwrap();
    let cfg = "[phantom]\nshape = mask_file\nmask_file = mask.pgm\nvoxel_pitch_mm = 0.02\nstrain = none\n";
    fs::write(dir.path().join("mask.cfg"), cfg).unwrap();
    let o = run(&["phantom", "--config", "mask.cfg", "--out", "m"], dir.path(), None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mask = GridRaster::read(&dir.path().join("m/mask.f32")).unwrap();
    assert_eq!((mask.nrows, mask.ncols), (20, 30));
    assert_eq!(mask.data.iter().filter(|&&v| v == 1.0).count(), 10 * 22);
}

#[test]
fn parallax_map_level_sets_follow_the_rotation() {
    let dir = setup("");
    for (phi, name) in [("0", "p0"), ("90", "p90")] {
        let o = run(
            &["parallax-map", "--config", "run.cfg", "--phi", phi, "--out", name],
            dir.path(),
            None,
        );
        assert_eq!(o.status.code(), Some(0));
    }
    let a = GridRaster::read(&dir.path().join("p0/parallax_rad.f32"))
        .unwrap()
        .to_array();
    // inside the 1 mm square (voxels 4..44): at phi = 0 constant along y, rising along x
    let inside = 4..44;
    for i in inside.clone() {
        let v0 = a[[4, i]];
        assert!(inside
            .clone()
            .all(|j| (a[[j, i]] - v0).abs() <= 1e-6 * v0.abs().max(1e-12)));
    }
    assert!(a[[10, 40]] > a[[10, 8]]);
    let b = GridRaster::read(&dir.path().join("p90/parallax_rad.f32"))
        .unwrap()
        .to_array();
    for j in inside.clone() {
        let v0 = b[[j, 4]];
        assert!(inside
            .clone()
            .all(|i| (b[[j, i]] - v0).abs() <= 1e-6 * v0.abs().max(1e-12)));
    }
    assert!(b[[40, 10]] > b[[8, 10]]);
}

#[test]
fn parallax_only_pipeline_reports_immunity() {
    let dir = setup("[recon]\nstrain_display = strain\n");
    let o = run(
        &["sinogram", "--config", "run.cfg", "--parallax", "--out", "s"],
        dir.path(),
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let m1 = GridRaster::read(&dir.path().join("s/sino_m1.f32")).unwrap().to_array();
    for row in m1.rows() {
        let finite: Vec<f64> = row.iter().copied().filter(|v| v.is_finite()).collect();
        assert!(finite
            .iter()
            .all(|v| (v - finite[0]).abs() <= 1e-6 * finite[0].abs() + 1e-12));
    }
    let o = run(&["reconstruct", "--config", "run.cfg", "--out", "s"], dir.path(), None);
    assert_eq!(o.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("s/metrics.txt")).unwrap();
    assert_eq!(line(&report, "parallax_immunity"), "parallax_immunity = PASS");
    assert!(dir.path().join("s/recon_strain.f32").is_file());
}

#[test]
fn full_pipeline_with_oracle_and_truth() {
    let dir = setup("[output]\npgm = true\n");
    let o = run(&["phantom", "--config", "run.cfg", "--out", "f"], dir.path(), None);
    assert_eq!(o.status.code(), Some(0));
    let o = run(
        &[
            "sinogram",
            "--config",
            "run.cfg",
            "--parallax",
            "--strain",
            "--oracle",
            "--out",
            "f",
        ],
        dir.path(),
        None,
    );
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(line(&text, "additivity ="), "additivity = PASS");
    assert_eq!(line(&text, "oracle ="), "oracle = PASS");
    let residual = GridRaster::read(&dir.path().join("f/additivity_residual.f32")).unwrap();
    assert!(residual.data.iter().all(|v| v.abs() < 1e-10));
    assert!(dir.path().join("f/oracle_discrepancy.meta").is_file());
    assert!(dir.path().join("f/sino_m1.pgm").is_file());

    let o = run(
        &[
            "reconstruct",
            "--config",
            "run.cfg",
            "--out",
            "f",
            "--mode",
            "weighted",
            "--truth",
            "f/strain.f32",
        ],
        dir.path(),
        None,
    );
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert_eq!(line(&text, "mode"), "mode = weighted");
    assert_eq!(line(&text, "sign_structure ="), "sign_structure = PASS");
    let r: f64 = line(&text, "pearson").trim_start_matches("pearson = ").parse().unwrap();
    assert!(r > 0.5, "{r}");
}

#[test]
fn missing_input_raster_exits_with_usage_error() {
    let dir = setup("");
    let o = run(
        &["reconstruct", "--config", "run.cfg", "nope_m0.f32", "nope_m1.f32"],
        dir.path(),
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sinogram_from_another_geometry_is_rejected() {
    let dir = setup("");
    run(&["sinogram", "--config", "run.cfg", "--out", "g"], dir.path(), None);
    fs::write(
        dir.path().join("other.cfg"),
        SMALL.replace("[geometry]\n", "[geometry]\ndet_distance_mm = 700\n"),
    )
    .unwrap();
    let o = run(
        &["reconstruct", "--config", "other.cfg", "--out", "g"],
        dir.path(),
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("geometry"));
}

#[test]
fn outputs_are_identical_across_worker_counts() {
    let dir = setup("");
    for (threads, out) in [("1", "t1"), ("3", "t3")] {
        for args in [vec!["sinogram", "--oracle"], vec!["reconstruct"]] {
            let mut a = args.clone();
            a.extend(["--config", "run.cfg", "--out", out]);
            let o = run(&a, dir.path(), Some(threads));
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let mut names: Vec<_> = fs::read_dir(dir.path().join("t1"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 10);
    for name in names {
        let a = fs::read(dir.path().join("t1").join(&name)).unwrap();
        let b = fs::read(dir.path().join("t3").join(&name)).unwrap();
        if name.to_string_lossy() == "resolved.cfg" {
            continue;
        }
        assert!(a == b, "{name:?} differs between worker counts");
    }
}

#[test]
fn verify_default_configuration_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--out", "v"], dir.path(), None);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    for id in 1..=7 {
        assert!(line(&text, &format!("AC-{id} ")).contains(" PASS "), "{text}");
    }
    assert!(dir.path().join("v/verify_report.txt").is_file());
}

#[test]
fn verify_catches_a_wrong_detector_distance_in_the_correction() {
    let dir = setup("correction_z_scale = 1.01\n");
    let o = run(&["verify", "--config", "run.cfg"], dir.path(), None);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{text}");
    assert!(line(&text, "AC-5").contains(" FAIL "), "{text}");
    for id in ["AC-1", "AC-2", "AC-3", "AC-4"] {
        assert!(line(&text, id).contains(" PASS "), "{text}");
    }
}

#[test]
fn verify_marks_half_turn_immunity_as_expected_failure() {
    let dir = setup("");
    let cfg = SMALL.replace("n_angles = 48\n", "n_angles = 48\nspan_deg = 180\n");
    fs::write(dir.path().join("half.cfg"), cfg).unwrap();
    let o = run(&["verify", "--config", "half.cfg", "--out", "h"], dir.path(), None);
    let text = stdout(&o);
    assert!(line(&text, "AC-3").contains("XFAIL"), "{text}");
}
