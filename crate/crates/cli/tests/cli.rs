use std::path::Path;
use std::process::{Command, Output};

use mosaic_core::reference::SKIP_MADDS_B;

fn mosaic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mosaic")).args(args).output().expect("spawn mosaic")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn madds_column(csv: &str) -> Vec<(String, u64)> {
    csv.lines()
        .skip(1)
        .map(|line| {
            let (label, rest) = match line.strip_prefix('"') {
                Some(quoted) => {
                    let end = quoted.find('"').unwrap();
                    (quoted[..end].to_string(), &quoted[end + 2..])
                }
                None => {
                    let (l, r) = line.split_once(',').unwrap();
                    (l.to_string(), r)
                }
            };
            (label, rest.split(',').next().unwrap().parse().unwrap())
        })
        .collect()
}

#[test]
fn describe_lists_taps_at_backbone_widths() {
    let o = mosaic(&["describe"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for (tap, shape) in [
        ("os2", "512x1024x32"),
        ("os4", "256x512x32"),
        ("os8", "128x256x64"),
        ("os16", "64x128x480"),
        ("logits", "1024x2048x19"),
    ] {
        let line = text.lines().find(|l| l.starts_with(&format!("tap {tap} "))).unwrap();
        assert!(line.ends_with(&format!("shape={shape}")), "{line}");
    }
    assert!(text.lines().any(|l| l.starts_with("stage backbone")));
    assert!(text.lines().any(|l| l.starts_with("total")));
}

#[test]
fn describe_single_skip_has_one_merge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "one.cfg", "skips = 8-C\n");
    let text = stdout(&mosaic(&["describe", "--config", &cfg]));
    let merges: std::collections::BTreeSet<&str> = text
        .lines()
        .filter_map(|l| l.split_whitespace().next())
        .filter(|n| n.starts_with("decoder/merge"))
        .map(|n| n.split('/').nth(1).unwrap())
        .collect();
    assert_eq!(merges.len(), 1, "{merges:?}");
}

#[test]
fn malformed_config_is_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "pyramid_bins = 0\n");
    let o = mosaic(&["describe", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pyramid_bins"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "unknown.cfg", "bogus = 1\n");
    let o = mosaic(&["cost", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));

    assert_eq!(mosaic(&["cost", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(mosaic(&["describe", "--config", "/nonexistent/x.cfg"]).status.code(), Some(2));
}

#[test]
fn cost_csv_round_trips() {
    let o = mosaic(&["cost", "--csv", "--preset", "ade20k"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("label,madds,madds_B,params"));
    let rows = madds_column(&text);
    let nodes: u64 = rows.iter().filter(|(l, _)| !l.starts_with("stage:") && l != "total").map(|r| r.1).sum();
    let stages: u64 = rows.iter().filter(|(l, _)| l.starts_with("stage:")).map(|r| r.1).sum();
    let total = rows.iter().find(|(l, _)| l == "total").unwrap().1;
    assert_eq!(nodes, total);
    assert_eq!(stages, total);
    for line in text.lines().skip(1) {
        let b = line.rsplit(',').nth(1).unwrap();
        assert_eq!(b.split('.').nth(1).map(str::len), Some(2), "{line}");
    }
}

#[test]
fn cost_policy_flag_changes_totals() {
    let total = |policy: &str| {
        let rows = madds_column(&stdout(&mosaic(&["cost", "--csv", "--policy", policy])));
        rows.into_iter().find(|(l, _)| l == "total").unwrap().1
    };
    assert!(total("include-everything") > total("standard"));
}

#[test]
fn ablate_rows_follow_input_order() {
    let variants = "1,4;4,8;4,16;8,16;4,8,16;4,8,16:N;1,4,8,16";
    let o = mosaic(&["ablate", "--axis", "pyramid", "--variants", variants, "--csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(madds_column(&stdout(&o)).len(), 7);

    let labels: Vec<&str> = SKIP_MADDS_B.iter().map(|(l, _)| *l).collect();
    let o = mosaic(&["ablate", "--axis", "skips", "--variants", &labels.join(";"), "--csv"]);
    let rows = madds_column(&stdout(&o));
    assert_eq!(rows.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), labels);
}

#[test]
fn ablate_rejects_empty_and_bad_variants() {
    let o = mosaic(&["ablate", "--axis", "skips", "--variants", ""]);
    assert_eq!(o.status.code(), Some(2));
    let o = mosaic(&["ablate", "--axis", "skips", "--variants", "0;3-Q"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("3-Q"), "{}", stderr(&o));
}

fn read_pgm(path: &Path) -> (usize, usize, Vec<u8>) {
    let bytes = std::fs::read(path).unwrap();
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        fields.push(String::from_utf8(bytes[start..i].to_vec()).unwrap());
    }
    assert_eq!(fields[0], "P5");
    let (w, h) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    (h, w, bytes[i + 1..].to_vec())
}

#[test]
fn run_is_reproducible_and_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    let w = dir.path().join("w.mosw");
    let args = |out: &Path| -> Vec<String> {
        ["run", "--preset", "ade20k", "--seed", "7", "--output", out.to_str().unwrap()]
            .iter()
            .map(|s| s.to_string())
            .collect()
    };
    let mut first = args(&a);
    first.extend(["--save-weights".to_string(), w.to_str().unwrap().to_string()]);
    let o = Command::new(env!("CARGO_BIN_EXE_mosaic")).args(&first).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l.starts_with("stage backbone")));

    let (h, wd, labels) = read_pgm(&a);
    assert_eq!((h, wd, labels.len()), (512, 512, 512 * 512));
    assert!(labels.iter().all(|&l| l < 32));

    let o = Command::new(env!("CARGO_BIN_EXE_mosaic")).args(args(&b)).output().unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("c.pgm");
    let o = mosaic(&[
        "run",
        "--preset",
        "ade20k",
        "--weights",
        w.to_str().unwrap(),
        "--seed",
        "7",
        "--output",
        c.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn run_rejects_wrong_resolution_and_missing_source() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("big.ppm");
    let mut bytes = b"P6\n512 513\n255\n".to_vec();
    bytes.resize(bytes.len() + 513 * 512 * 3, 128);
    std::fs::write(&img, bytes).unwrap();
    let out = dir.path().join("o.pgm");
    let o = mosaic(&[
        "run",
        "--preset",
        "ade20k",
        "--seed",
        "1",
        "--input",
        img.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("resolution mismatch"), "{}", stderr(&o));
    assert!(!out.exists());

    let o = mosaic(&["run", "--preset", "ade20k", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes_under_both_policies() {
    for policy in ["standard", "include-everything"] {
        let o = mosaic(&["selftest", "--cases", "10", "--policy", policy]);
        assert!(o.status.success(), "{}", stdout(&o));
        let text = stdout(&o);
        assert!(text.contains("PASS skip ablation ordering"), "{text}");
        assert!(!text.contains("FAIL"));
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert!(mosaic(&["--help"]).status.success());
    assert!(mosaic(&["--version"]).status.success());
    assert_eq!(mosaic(&[]).status.code(), Some(2));
}
