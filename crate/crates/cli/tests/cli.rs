use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dpg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpg")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

/// CSV with `runs` runs of `episodes` episodes; returns come from `f(run, episode)`.
fn csv(runs: usize, episodes: usize, f: impl Fn(usize, usize) -> f64) -> String {
    let mut s = String::from("run,episode,return,steps,decisions,interventions,terminal\n");
    for r in 0..runs {
        for e in 1..=episodes {
            s.push_str(&format!("{r},{e},{},10,10,0,timeout\n", f(r, e)));
        }
    }
    s
}

const SMALL: &str = "kind = dpg_advice, vanilla_pg\nenv = table\nadvisor = combined\nruns = 2\nepisodes = 3\n";

#[test]
fn train_writes_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let out = dir.path().join("out");
    let o = dpg(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("seed: 5"));
    assert!(text.contains("dpg_advice: mean return"));
    let first = fs::read(out.join("dpg_advice.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 7);
    assert!(out.join("vanilla_pg.csv").exists());
    assert!(roxmltree::Document::parse(&fs::read_to_string(out.join("curves.svg")).unwrap()).is_ok());
    assert!(fs::read_to_string(out.join("config.txt")).unwrap().contains("seed = 5"));

    // Existing outputs are kept unless --force is given.
    let o = dpg(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));

    let o = dpg(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "5", "--force"]);
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("dpg_advice.csv")).unwrap(), first);

    let o = dpg(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "6", "--force", "--jobs", "2"]);
    assert!(o.status.success());
    assert_ne!(fs::read(out.join("dpg_advice.csv")).unwrap(), first);
}

#[test]
fn train_rejects_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "kind = vanilla_pg\nlearnig_rate = 3\n");
    let o = dpg(&["train", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learnig_rate"));

    let good = write(dir.path(), "good.cfg", SMALL);
    let o = dpg(&["train", "--config", &good, "--out", dir.path().join("o").to_str().unwrap(), "--set", "bogus=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn set_overrides_apply_after_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let out = dir.path().join("o");
    let o = dpg(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--set", "episodes=2", "--set", "runs=1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("dpg_advice.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn compare_pools_window_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", &csv(16, 1000, |r, e| ((r * 7 + e * 13) % 50) as f64));
    let b = write(dir.path(), "b.csv", &csv(16, 1000, |r, e| 100.0 + ((r * 3 + e) % 50) as f64));

    let o = dpg(&["compare", &a, &a, "--window", "960:1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("41 episodes"));
    assert!(text.contains("n: 656 vs 656"));
    let p: f64 = text
        .lines()
        .find(|l| l.starts_with("wilcoxon"))
        .and_then(|l| l.rsplit("p = ").next())
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(p >= 0.99, "{text}");

    let o = dpg(&["compare", &a, &b, "--window", "960:1000"]);
    let text = stdout(&o);
    let p: f64 = text
        .lines()
        .find(|l| l.starts_with("wilcoxon"))
        .and_then(|l| l.rsplit("p = ").next())
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(p < 0.01, "{text}");
    assert!(text.contains("welch"));

    let o = dpg(&["compare", &a, &b, "--window", "990:1200"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_passes_and_catches_a_sign_flip() {
    let o = dpg(&["gradcheck", "--trials", "100"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    for suite in ["finite-difference", "deterministic-zero", "uniform-equivalence"] {
        assert!(text.contains(suite), "{text}");
    }
    let o = dpg(&["gradcheck", "--trials", "1", "--inject-sign-flip"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_reports_fixtures_and_sealed_maps() {
    let o = dpg(&["oracle", "grid1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("shortest path: 35"));
    assert!(text.contains("optimal return: 65"));

    let o = dpg(&["oracle", "fiverooms"]);
    let text = stdout(&o);
    assert!(text.contains("shortest path: 54"));
    assert!(text.contains("optimal return: 94.6"));

    let dir = tempfile::tempdir().unwrap();
    let sealed = write(dir.path(), "sealed.map", "#####\n#S#G#\n#####\n");
    let o = dpg(&["oracle", &sealed]);
    assert_eq!(o.status.code(), Some(3));

    let broken = write(dir.path(), "broken.map", "###\n#S#\n###\n");
    let o = dpg(&["oracle", &broken]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plot_draws_one_legend_entry_per_file() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<String> = (0..3)
        .map(|i| write(dir.path(), &format!("arm{i}.csv"), &csv(3, 20, |r, e| (i * 10 + r + e) as f64)))
        .collect();
    let out = dir.path().join("plots/curves.svg");
    let mut args = vec!["plot"];
    args.extend(files.iter().map(String::as_str));
    args.extend(["--out", out.to_str().unwrap(), "--smooth", "5"]);
    let o = dpg(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(&out).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let legend = doc
        .descendants()
        .find(|n| n.attribute("class") == Some("legend"))
        .unwrap();
    let labels: Vec<_> = legend.descendants().filter(|n| n.has_tag_name("text")).collect();
    assert_eq!(labels.len(), 3);
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("curve")).count(), 3);

    let short = write(dir.path(), "short.csv", &csv(3, 10, |_, e| e as f64));
    let o = dpg(&["plot", &files[0], &short, "--out", dir.path().join("x.svg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(dpg(&["train"]).status.code(), Some(1));
    assert_eq!(dpg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(dpg(&["--help"]).status.code(), Some(0));
}
