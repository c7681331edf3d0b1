use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mmspot");

fn mmspot(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("MMSPOT_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(o));
}

/// Every file under `root`, relative path to contents.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_owned(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn spec(clips: &str) -> String {
    format!(
        r#"
seed = 7
dims = [64, 64]

[[subjects]]
subject_id = "s01"
texture_seed = 11
baseline_frames = 400
clips = [
{clips}
]
"#
    )
}

const ONE_EVENT: &str = r#"{ clip_id = "c1", n_frames = 200, events = [{ region_id = 7, onset = 70, apex = 100, offset = 130, amplitude = 0.1 }] },"#;

const THREE_CLIPS: &str = r#"
  { clip_id = "c1", n_frames = 200, events = [{ region_id = 7, onset = 70, apex = 100, offset = 130, amplitude = 0.1 }] },
  { clip_id = "c2", n_frames = 200, events = [{ region_id = 18, onset = 80, apex = 110, offset = 140, amplitude = 0.1 }] },
  { clip_id = "c3", n_frames = 200 },
"#;

fn synth(dir: &Path, clips: &str) -> PathBuf {
    let spec_path = dir.join("spec.toml");
    fs::write(&spec_path, spec(clips)).unwrap();
    let data = dir.join("data");
    assert_ok(&mmspot(&["synth", "--spec", p(&spec_path), p(&data)]));
    data
}

fn metrics_row(report_dir: &Path) -> BTreeMap<String, String> {
    let text = fs::read_to_string(report_dir.join("metrics.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    header
        .into_iter()
        .zip(row)
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

#[test]
fn even_n_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[spotting]\nN = 70\n").unwrap();
    let o = mmspot(&["--config", p(&cfg), "run", p(dir.path()), p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("N must be odd"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_and_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[spotting]\nradius = 3\n").unwrap();
    let o = mmspot(&["--config", p(&cfg), "run", p(dir.path()), p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = mmspot(&["run", p(&dir.path().join("nope")), p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn run_spots_single_event_and_reruns_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), ONE_EVENT);
    let out = dir.path().join("out");

    let first = mmspot(&["run", p(&data), p(&out)]);
    assert_ok(&first);
    let row = metrics_row(&out.join("report"));
    assert_eq!(row["recall"], "1.0000", "{row:?}");
    let results = fs::read_to_string(out.join("results/c1.json")).unwrap();
    assert!(results.contains("\"region_id\": 7"), "{results}");
    let before = tree(&out.join("report"));
    let results_before = tree(&out.join("results"));

    let second = mmspot(&["run", p(&data), p(&out)]);
    assert_ok(&second);
    assert!(
        stdout(&second).contains("stages computed 0"),
        "{}",
        stdout(&second)
    );
    assert_eq!(tree(&out.join("report")), before);
    assert_eq!(tree(&out.join("results")), results_before);

    // A fresh output folder sharing the cache gives byte-identical reports.
    let other = dir.path().join("other");
    let o = mmspot(&["--cache-dir", p(&out.join("cache")), "run", p(&data), p(&other)]);
    assert_ok(&o);
    assert!(stdout(&o).contains("stages computed 0"), "{}", stdout(&o));
    assert_eq!(tree(&other.join("report")), before);
}

#[test]
fn synth_writes_ingest_layout_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), THREE_CLIPS);
    for clip in ["c1", "c2", "c3"] {
        let d = data.join("s01").join(clip);
        assert!(d.join("manifest.toml").is_file());
        assert!(d.join("landmarks.json").is_file());
        assert!(d.join("000199.png").is_file());
        assert!(!d.join("000200.png").exists());
    }
    assert!(data.join("s01/baseline_00/000399.png").is_file());
    let gt = fs::read_to_string(data.join("ground_truth.csv")).unwrap();
    assert_eq!(gt.lines().count(), 3, "{gt}");
    assert!(gt.starts_with("clip_id,onset,apex,offset,aus\nc1,70,100,130,"), "{gt}");

    let again = dir.path().join("again");
    assert_ok(&mmspot(&["synth", "--spec", p(&dir.path().join("spec.toml")), p(&again)]));
    assert_eq!(tree(&data), tree(&again));

    let reseeded = dir.path().join("reseeded");
    assert_ok(&mmspot(&[
        "--seed",
        "8",
        "synth",
        "--spec",
        p(&dir.path().join("spec.toml")),
        p(&reseeded),
    ]));
    assert_ne!(tree(&data), tree(&reseeded));
}

#[test]
fn synth_rejects_region_27() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    fs::write(
        &spec_path,
        spec(r#"{ clip_id = "c1", n_frames = 200, events = [{ region_id = 27, onset = 70, apex = 100, offset = 130, amplitude = 0.1 }] },"#),
    )
    .unwrap();
    let o = mmspot(&["synth", "--spec", p(&spec_path), p(&dir.path().join("data"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("region 27"), "{}", stderr(&o));
}

#[test]
fn sweep_grid_writes_one_report_per_cell_and_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), THREE_CLIPS);
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        r#"
[align]
enabled = false

[sweep]
descriptors = ["HOG3D", "LBPTOP", "HOOF"]
planes = ["XT", "YT"]
rs = [2, 12, 26]
"#,
    )
    .unwrap();
    let out = dir.path().join("sweep");
    let o = mmspot(&["--config", p(&cfg), "sweep", p(&data), p(&out)]);
    assert_ok(&o);
    for cell in ["HOG3D_XT", "HOG3D_YT", "LBPTOP_XT", "LBPTOP_YT", "HOOF"] {
        assert!(
            out.join("cells").join(cell).join("report/report.txt").is_file(),
            "{cell}"
        );
    }
    assert_eq!(fs::read_dir(out.join("cells")).unwrap().count(), 5);
    let table = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 5, "{table}");
    let hoof: Vec<&&str> = rows.iter().filter(|r| r.starts_with("HOOF,")).collect();
    assert_eq!(hoof.len(), 1);
    assert!(hoof[0].starts_with("HOOF,-,"), "{}", hoof[0]);
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    for section in ["[HOG3D]", "[LBPTOP]", "[HOOF]"] {
        assert!(text.contains(section), "{text}");
    }
    assert!(out.join("roc_HOG3D_XT.csv").is_file());
}

#[test]
fn sweep_with_empty_grid_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[sweep]\ndescriptors = []\n").unwrap();
    let o = mmspot(&["--config", p(&cfg), "sweep", p(dir.path()), p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
}

#[test]
fn standalone_stages_chain_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), ONE_EVENT);
    let s = dir.path().join("stages");
    let clip = data.join("s01/c1");
    let base = data.join("s01/baseline_00");

    for (seq, name) in [(&clip, "c1"), (&base, "b0")] {
        assert_ok(&mmspot(&[
            "align",
            p(seq),
            "-o",
            p(&s.join(format!("{name}.shifts.json"))),
        ]));
        assert_ok(&mmspot(&[
            "fit-mask",
            p(&clip.join("landmarks.json")),
            "--frames",
            p(seq),
            "-o",
            p(&s.join(format!("{name}.mask.json"))),
        ]));
        assert_ok(&mmspot(&[
            "extract",
            p(seq),
            "--mask",
            p(&s.join(format!("{name}.mask.json"))),
            "--shifts",
            p(&s.join(format!("{name}.shifts.json"))),
            "-o",
            p(&s.join(format!("{name}.features.bin"))),
        ]));
    }
    assert!(s.join("c1.mask.png").is_file());
    let results = s.join("results");
    assert_ok(&mmspot(&[
        "spot",
        p(&s.join("c1.features.bin")),
        "--baseline",
        p(&s.join("b0.features.bin")),
        "-o",
        p(&results.join("c1.json")),
    ]));
    assert!(results.join("c1.ranked.json").is_file());
    let report = s.join("report");
    assert_ok(&mmspot(&[
        "evaluate",
        p(&results),
        "--ground-truth",
        p(&data.join("ground_truth.csv")),
        "-o",
        p(&report),
    ]));
    assert_eq!(metrics_row(&report)["recall"], "1.0000");

    // Shifts estimated on other frames.
    let o = mmspot(&[
        "extract",
        p(&clip),
        "--mask",
        p(&s.join("c1.mask.json")),
        "--shifts",
        p(&s.join("b0.shifts.json")),
        "-o",
        p(&s.join("x.bin")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("broken chain"), "{}", stderr(&o));

    // An edited artifact no longer matches its manifest.
    let mask = s.join("c1.mask.json");
    let text = fs::read_to_string(&mask).unwrap();
    fs::write(&mask, text.replacen("\"width\":64", "\"width\": 64", 1)).unwrap();
    let o = mmspot(&[
        "extract",
        p(&clip),
        "--mask",
        p(&mask),
        "-o",
        p(&s.join("x.bin")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("broken chain"), "{}", stderr(&o));

    let feats = s.join("c1.features.bin");
    let mut bytes = fs::read(&feats).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&feats, bytes).unwrap();
    let o = mmspot(&[
        "spot",
        p(&feats),
        "--baseline",
        p(&s.join("b0.features.bin")),
        "-o",
        p(&s.join("y.json")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("broken chain"), "{}", stderr(&o));
}
