//! CLI surface tests: flag plumbing, exit codes, output shapes, and the
//! byte-level contracts between runs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sigvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigvar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn sigvar_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sigvar"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    gauss_params: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let ds = root.join("ds");
    assert!(sigvar(&[
        "gen-dataset",
        "--out",
        ds.to_str().unwrap(),
        "--writers",
        "5",
        "--genuine",
        "9",
        "--skilled",
        "4",
        "--seed",
        "2",
    ])
    .status
    .success());
    let gauss_params = root.join("gauss.json");
    assert!(sigvar(&[
        "init-params",
        "--preset",
        "optimized-gaussian",
        "--out",
        gauss_params.to_str().unwrap(),
    ])
    .status
    .success());
    Fixture {
        manifest: ds.join("manifest.json"),
        root,
        gauss_params,
        _dir: dir,
    }
}

#[test]
fn missing_manifest_is_a_data_error() {
    let out = sigvar(&[
        "extract",
        "--manifest",
        "/nonexistent/manifest.json",
        "--out",
        "/tmp/unused.svf",
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error:"), "stderr: {stderr}");
}

#[test]
fn future_params_schema_is_a_config_error() {
    let f = fixture();
    let bad = f.root.join("future.json");
    std::fs::write(
        &bad,
        r#"{"schema_version": 9, "kind": "gaussian", "average": {}}"#,
    )
    .unwrap();
    let out = sigvar(&[
        "augment",
        "--mode",
        "feature",
        "--params",
        bad.to_str().unwrap(),
        "--in",
        "/tmp/unused.svf",
        "--count",
        "1",
        "--out",
        "/tmp/unused-out.svf",
    ]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn unknown_preset_is_a_config_error() {
    let out = sigvar(&["init-params", "--preset", "bogus", "--out", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_d0_equals_baseline_byte_for_byte() {
    let f = fixture();
    let eval_args = |params: Option<&Path>, out: &Path| -> Vec<String> {
        let mut args: Vec<String> = [
            "evaluate",
            "--manifest",
            f.manifest.to_str().unwrap(),
            "--r",
            "1",
            "--d",
            "0",
            "--reps",
            "2",
            "--seed",
            "21",
            "--test-genuine",
            "4",
            "--test-random",
            "3",
            "--test-skilled",
            "3",
            "--neg-per-writer",
            "2",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if let Some(p) = params {
            args.push("--params".into());
            args.push(p.to_str().unwrap().into());
        }
        args.push("--out".into());
        args.push(out.to_str().unwrap().into());
        args
    };
    let with_params_dir = f.root.join("with_params");
    let baseline_dir = f.root.join("baseline");
    let a = sigvar(
        &eval_args(Some(&f.gauss_params), &with_params_dir)
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>(),
    );
    assert!(a.status.success(), "{a:?}");
    let b = sigvar(
        &eval_args(None, &baseline_dir)
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>(),
    );
    assert!(b.status.success(), "{b:?}");
    assert_eq!(
        read(&with_params_dir.join("eer.csv")),
        read(&baseline_dir.join("eer.csv")),
        "d=0 with params differs from the no-augmentation baseline"
    );
}

#[test]
fn sweep_sigma_has_one_row_per_writer_and_grid_point() {
    let f = fixture();
    let out_csv = f.root.join("curve.csv");
    let out = sigvar(&[
        "sweep-sigma",
        "--manifest",
        f.manifest.to_str().unwrap(),
        "--sigma-grid",
        "0.2:1.0:0.2",
        "--seed",
        "4",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8(read(&out_csv)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("writer,sigma,abs_silhouette"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5 * 5, "5 writers x 5 grid points");
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 3);
        let delta: f64 = fields[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&delta));
    }
}

#[test]
fn feature_augment_appends_synthetic_vectors() {
    let f = fixture();
    let store = f.root.join("feats.svf");
    assert!(sigvar(&[
        "extract",
        "--manifest",
        f.manifest.to_str().unwrap(),
        "--out",
        store.to_str().unwrap(),
    ])
    .status
    .success());
    let out_store = f.root.join("aug.svf");
    let out = sigvar(&[
        "augment",
        "--mode",
        "feature",
        "--params",
        f.gauss_params.to_str().unwrap(),
        "--in",
        store.to_str().unwrap(),
        "--count",
        "2",
        "--seed",
        "5",
        "--out",
        out_store.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8(read(&out_store)).unwrap();
    // 5 writers x (9 genuine + 4 skilled) x 2 synthetic each.
    assert_eq!(text.lines().count() - 1, 5 * 13 * 2);
}

#[test]
fn image_augment_writes_n_duplicates() {
    let f = fixture();
    let dup_params = f.root.join("dup.json");
    assert!(sigvar(&[
        "init-params",
        "--preset",
        "optimized-duplicator",
        "--out",
        dup_params.to_str().unwrap(),
    ])
    .status
    .success());
    // Any genuine PNG from the fixture works as a seed image.
    let seed_img = f.root.join("ds/w001/g00.png");
    let out_dir = f.root.join("dups");
    let out = sigvar(&[
        "augment",
        "--mode",
        "image",
        "--params",
        dup_params.to_str().unwrap(),
        "--in",
        seed_img.to_str().unwrap(),
        "--count",
        "4",
        "--seed",
        "6",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let pngs = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "png")
        })
        .count();
    assert_eq!(pngs, 4);
}

#[test]
fn external_adapter_contract_round_trips() {
    let f = fixture();
    // A stand-in duplicator: copies the input PNG count times.
    let exe = f.root.join("fake_duplicator.sh");
    std::fs::write(
        &exe,
        "#!/bin/sh\n\
         set -e\n\
         params=\"\"; input=\"\"; outdir=\"\"; count=0; seed=0\n\
         while [ $# -gt 0 ]; do\n\
           case $1 in\n\
             --params) params=$2; shift 2;;\n\
             --input) input=$2; shift 2;;\n\
             --output-dir) outdir=$2; shift 2;;\n\
             --count) count=$2; shift 2;;\n\
             --seed) seed=$2; shift 2;;\n\
             *) echo \"unknown arg $1\" >&2; exit 1;;\n\
           esac\n\
         done\n\
         grep -q alpha_A_min \"$params\" || { echo missing-params >&2; exit 1; }\n\
         grep -q psi \"$params\" || { echo missing-passthrough >&2; exit 1; }\n\
         i=0\n\
         while [ $i -lt $count ]; do\n\
           cp \"$input\" \"$outdir/dup_$i.png\"\n\
           i=$((i+1))\n\
         done\n",
    )
    .unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&exe, std::fs::Permissions::from_mode(0o755)).unwrap();
    }
    let dup_params = f.root.join("dup.json");
    assert!(sigvar(&[
        "init-params",
        "--preset",
        "default-duplicator",
        "--out",
        dup_params.to_str().unwrap(),
    ])
    .status
    .success());
    let seed_img = f.root.join("ds/w001/g00.png");
    let out_dir = f.root.join("ext_dups");
    let out = sigvar(&[
        "augment",
        "--mode",
        "image",
        "--params",
        dup_params.to_str().unwrap(),
        "--in",
        seed_img.to_str().unwrap(),
        "--count",
        "3",
        "--seed",
        "7",
        "--out",
        out_dir.to_str().unwrap(),
        "--external",
        exe.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    // The stand-in copies the input verbatim.
    assert_eq!(read(&seed_img), read(&out_dir.join("dup_000.png")));

    // A failing adapter surfaces its diagnostic and a data exit code.
    let bad = f.root.join("broken.sh");
    std::fs::write(&bad, "#!/bin/sh\necho boom >&2\nexit 9\n").unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&bad, std::fs::Permissions::from_mode(0o755)).unwrap();
    }
    let failed = sigvar(&[
        "augment",
        "--mode",
        "image",
        "--params",
        dup_params.to_str().unwrap(),
        "--in",
        seed_img.to_str().unwrap(),
        "--count",
        "1",
        "--seed",
        "7",
        "--out",
        f.root.join("ext_fail").to_str().unwrap(),
        "--external",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(failed.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&failed.stderr).contains("boom"));
}

#[test]
fn validate_features_emits_comparison_csv() {
    let f = fixture();
    let tight = f.root.join("tight.json");
    std::fs::write(
        &tight,
        r#"{"schema_version":1,"kind":"gaussian","average":{"sigma_min":0.05,"sigma_max":0.1}}"#,
    )
    .unwrap();
    let out_csv = f.root.join("compare.csv");
    let out = sigvar(&[
        "validate-features",
        "--manifest",
        f.manifest.to_str().unwrap(),
        "--params-a",
        tight.to_str().unwrap(),
        "--params-b",
        f.gauss_params.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("params A"), "stdout: {stdout}");
    assert!(stdout.contains("+/-"));
    let text = String::from_utf8(read(&out_csv)).unwrap();
    assert_eq!(text.lines().next(), Some("writer,delta_a,delta_b"));
    assert_eq!(text.lines().count() - 1, 5);
}

#[test]
fn config_file_supplies_defaults_flags_win() {
    let f = fixture();
    let config = f.root.join("sweep.conf");
    std::fs::write(&config, "sigma-grid = 0.3:0.6:0.3\nseed = 17\n").unwrap();
    let out_csv = f.root.join("from_config.csv");
    // --seed on the line beats the config; sigma-grid comes from the config.
    let out = sigvar(&[
        "sweep-sigma",
        "--manifest",
        f.manifest.to_str().unwrap(),
        "--seed",
        "99",
        "--out",
        out_csv.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8(read(&out_csv)).unwrap();
    assert_eq!(text.lines().count() - 1, 5 * 2, "grid 0.3,0.6 from config");

    let record: serde_json::Value = serde_json::from_str(
        &String::from_utf8(read(&f.root.join("from_config.run.json"))).unwrap(),
    )
    .unwrap();
    assert_eq!(record["command"]["sweep-sigma"]["seed"], 99);
    assert_eq!(
        record["command"]["sweep-sigma"]["sigma_grid"],
        "0.3:0.6:0.3"
    );
}

#[test]
fn seed_env_var_overrides_flag() {
    let f = fixture();
    let out_a = f.root.join("env_a.csv");
    let out_b = f.root.join("env_b.csv");
    // Same env seed with different --seed flags must agree.
    for (out, flag_seed) in [(&out_a, "1"), (&out_b, "2")] {
        let run = sigvar_env(
            &[
                "sweep-sigma",
                "--manifest",
                f.manifest.to_str().unwrap(),
                "--sigma-grid",
                "0.2:0.4:0.2",
                "--seed",
                flag_seed,
                "--out",
                out.to_str().unwrap(),
            ],
            &[("SIGVAR_SEED", "424242")],
        );
        assert!(run.status.success(), "{run:?}");
    }
    assert_eq!(read(&out_a), read(&out_b));
}

#[test]
fn optimize_writes_params_and_run_record() {
    let f = fixture();
    let out_params = f.root.join("opt.json");
    let out = sigvar(&[
        "optimize",
        "--mode",
        "feature",
        "--manifest",
        f.manifest.to_str().unwrap(),
        "--writers",
        "1,2,3",
        "--iterations",
        "4",
        "--particles",
        "6",
        "--seed",
        "12",
        "--out",
        out_params.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let params: serde_json::Value =
        serde_json::from_str(&String::from_utf8(read(&out_params)).unwrap()).unwrap();
    assert_eq!(params["kind"], "gaussian");
    assert_eq!(params["per_writer"].as_object().unwrap().len(), 3);
    assert!(params["average"]["sigma_min"].as_f64().unwrap() > 0.0);
    assert!(f.root.join("opt.run.json").is_file());

    // Replaying the optimize run reproduces the parameter file byte for byte.
    let replayed = f.root.join("opt_replay.json");
    let replay = sigvar(&[
        "replay",
        "--run",
        f.root.join("opt.run.json").to_str().unwrap(),
        "--out",
        replayed.to_str().unwrap(),
    ]);
    assert!(replay.status.success(), "{replay:?}");
    assert_eq!(read(&out_params), read(&replayed));
}
