//! End-to-end tests of the `unishap` binary: flag handling, exit codes,
//! output files, and cross-process determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn unishap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unishap"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Splits one CSV line, honoring quoted fields with doubled inner quotes.
fn split_csv(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    current.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' => quoted = true,
            ',' if !quoted => fields.push(std::mem::take(&mut current)),
            other => current.push(other),
        }
    }
    fields.push(current);
    fields
}

fn column(header: &str, name: &str) -> usize {
    header
        .split(',')
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("column {name} in {header}"))
}

fn read_phi(dir: &Path) -> Vec<f64> {
    let text = fs::read_to_string(dir.join("phi.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("feature,phi"));
    lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn estimate_example_writes_centered_attributions() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(unishap().args([
        "estimate",
        "--game",
        "adversarial:d=64,n=2,xi=1,chi=0",
        "--preset",
        "leverageshap",
        "--m",
        "1024",
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert!(output.status.success(), "{}", stderr_text(&output));

    let phi = read_phi(dir.path());
    assert_eq!(phi.len(), 64);
    // chi = 0 pins the endpoint span to zero, so the attributions sum to
    // zero up to roundoff.
    assert!(phi.iter().sum::<f64>().abs() <= 1e-12);

    let meta = fs::read_to_string(dir.path().join("phi.meta.json")).unwrap();
    assert!(meta.contains("\"m\": 1024"));
    assert!(meta.contains("\"seed\": 7"));
}

#[test]
fn preset_and_explicit_flags_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let by_preset = dir.path().join("preset");
    let by_flags = dir.path().join("flags");
    let game = "adversarial:d=16,n=2,xi=1,chi=0.5";
    let output = run(unishap().args([
        "estimate",
        "--game",
        game,
        "--preset",
        "kernelshap",
        "--m",
        "64",
        "--seed",
        "3",
        "--out",
        by_preset.to_str().unwrap(),
    ]));
    assert!(output.status.success(), "{}", stderr_text(&output));
    let output = run(unishap().args([
        "estimate",
        "--game",
        game,
        "--kind",
        "regression",
        "--tau",
        "1",
        "--lambda",
        "alpha",
        "--paired",
        "--m",
        "64",
        "--seed",
        "3",
        "--out",
        by_flags.to_str().unwrap(),
    ]));
    assert!(output.status.success(), "{}", stderr_text(&output));

    for name in ["phi.csv", "phi.meta.json"] {
        let a = fs::read(by_preset.join(name)).unwrap();
        let b = fs::read(by_flags.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between preset and explicit flags");
    }
}

#[test]
fn missing_game_file_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_table.json");
    let output = run(unishap().args([
        "estimate",
        "--game",
        &format!("table:{}", missing.display()),
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_text(&output).contains(missing.to_str().unwrap()));
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(unishap().args([
        "estimate",
        "--game",
        "random:d=6,seed=1",
        "--preset",
        "nonesuch",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn wire_protocol_child_matches_the_in_process_game() {
    let dir = tempfile::tempdir().unwrap();
    let wired = dir.path().join("wired");
    let direct = dir.path().join("direct");
    let output = run(unishap().args([
        "estimate",
        "--game",
        &format!("external:{} 10 5", env!("CARGO_BIN_EXE_refgame")),
        "--m",
        "64",
        "--seed",
        "1",
        "--out",
        wired.to_str().unwrap(),
    ]));
    assert!(output.status.success(), "{}", stderr_text(&output));
    let output = run(unishap().args([
        "estimate",
        "--game",
        "random:d=10,seed=5",
        "--m",
        "64",
        "--seed",
        "1",
        "--out",
        direct.to_str().unwrap(),
    ]));
    assert!(output.status.success(), "{}", stderr_text(&output));

    // Values cross the pipe in shortest round-trip decimal, so the two
    // attribution files agree byte for byte.
    assert_eq!(
        fs::read(wired.join("phi.csv")).unwrap(),
        fs::read(direct.join("phi.csv")).unwrap()
    );
}

#[test]
fn sweep_outputs_are_identical_across_processes_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("grid.spec");
    let outs = ["a", "b", "c"].map(|n| dir.path().join(n));
    for (run_idx, out) in outs.iter().enumerate() {
        fs::write(
            &spec_path,
            format!(
                "game random:d=8,seed=4\nout {}\nkind regression\ntau 0\n\
                 strategy without_replacement\nm 16\nm 64\nseeds 0..6\nmetric mse\n",
                out.display()
            ),
        )
        .unwrap();
        let mut cmd = unishap();
        cmd.args(["sweep", spec_path.to_str().unwrap()]);
        match run_idx {
            0 => cmd.env("UNISHAP_THREADS", "1"),
            1 => cmd.env("UNISHAP_THREADS", "4"),
            _ => cmd.args(["--threads", "2"]),
        };
        let output = run(&mut cmd);
        assert!(output.status.success(), "{}", stderr_text(&output));
    }

    let baseline = fs::read(outs[0].join("results.csv")).unwrap();
    assert!(!baseline.contains(&b'\r'));
    for out in &outs[1..] {
        assert_eq!(baseline, fs::read(out.join("results.csv")).unwrap());
    }
    let summary = fs::read(outs[0].join("summary.csv")).unwrap();
    for out in &outs[1..] {
        assert_eq!(summary, fs::read(out.join("summary.csv")).unwrap());
    }
}

#[test]
fn sweep_rejects_a_malformed_thread_env() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("grid.spec");
    fs::write(
        &spec_path,
        format!("game random:d=6,seed=0\nout {}\nm 16\n", dir.path().display()),
    )
    .unwrap();
    let output = run(unishap()
        .args(["sweep", spec_path.to_str().unwrap()])
        .env("UNISHAP_THREADS", "plenty"));
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_text(&output).contains("UNISHAP_THREADS"));
}

#[test]
fn sweep_median_mse_drops_strictly_across_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let spec_path = dir.path().join("converge.spec");
    fs::write(
        &spec_path,
        format!(
            "game random:d=12,seed=9\nout {}\nkind regression\ntau 0\n\
             strategy without_replacement\nm 256\nm 1024\nm 4096\nseeds 0..100\nmetric mse\n",
            out.display()
        ),
    )
    .unwrap();
    let output = run(unishap().args(["sweep", spec_path.to_str().unwrap()]));
    assert!(output.status.success(), "{}", stderr_text(&output));

    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 301);

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 4);
    let m_col = column(lines[0], "m");
    let median_col = column(lines[0], "mse_median");
    let points: Vec<(usize, f64)> = lines[1..]
        .iter()
        .map(|l| {
            let fields = split_csv(l);
            (
                fields[m_col].parse().unwrap(),
                fields[median_col].parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(
        points.iter().map(|p| p.0).collect::<Vec<_>>(),
        [256, 1024, 4096]
    );
    assert!(
        points[1].1 < points[0].1 && points[2].1 < points[1].1,
        "medians not strictly decreasing: {points:?}"
    );
}

#[test]
fn faithfulness_on_an_additive_game_is_order_invariant() {
    let dir = tempfile::tempdir().unwrap();
    // xi = 0 leaves a purely additive game with interchangeable features:
    // every ordering produces the same insertion curve.
    let output = run(unishap().args([
        "faithfulness",
        "--game",
        "adversarial:d=10,n=2,xi=0,chi=0.5",
        "--method",
        "exact",
        "--method",
        "kernelshap",
        "--method",
        "unbiased_kernelshap",
        "--method",
        "leverageshap",
        "--m",
        "64",
        "--seed",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert!(output.status.success(), "{}", stderr_text(&output));

    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 5);
    let insertion_col = column(lines[0], "insertion_auc");
    let rank_col = column(lines[0], "rank_corr");
    let status_col = column(lines[0], "status");
    let rows: Vec<Vec<String>> = lines[1..].iter().map(|l| split_csv(l)).collect();
    assert!(rows.iter().all(|r| r[status_col] == "ok"));
    let first = &rows[0][insertion_col];
    assert!(rows.iter().all(|r| &r[insertion_col] == first));
    // The exact row correlates with itself; the lambda = alpha presets
    // recover the additive game exactly and inherit the all-ties
    // convention, while the zero-offset matvec stays noisy.
    let ranks: Vec<f64> = rows.iter().map(|r| r[rank_col].parse().unwrap()).collect();
    assert_eq!(ranks[0], 1.0);
    assert_eq!(ranks[1], 1.0);
    assert_eq!(ranks[2], 0.0);
    assert_eq!(ranks[3], 1.0);
}

#[test]
fn faithfulness_rank_correlation_never_degrades_with_budget() {
    let dir = tempfile::tempdir().unwrap();
    let budgets = ["256", "1024", "4096", "16384"];
    let mut per_budget: Vec<Vec<f64>> = vec![Vec::new(); budgets.len()];
    for seed in 0..20u64 {
        let out = dir.path().join(format!("seed{seed}"));
        let output = run(unishap().args([
            "faithfulness",
            "--game",
            "adversarial:d=64,n=2,xi=1,chi=0.25",
            "--method",
            "leverageshap",
            "--m",
            budgets[0],
            "--m",
            budgets[1],
            "--m",
            budgets[2],
            "--m",
            budgets[3],
            "--seed",
            &seed.to_string(),
            "--out",
            out.to_str().unwrap(),
        ]));
        assert!(output.status.success(), "{}", stderr_text(&output));
        let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
        let lines: Vec<&str> = metrics.lines().collect();
        assert_eq!(lines.len(), budgets.len() + 1);
        let m_col = column(lines[0], "m");
        let rank_col = column(lines[0], "rank_corr");
        for (idx, line) in lines[1..].iter().enumerate() {
            let fields = split_csv(line);
            assert_eq!(fields[m_col], budgets[idx]);
            per_budget[idx].push(fields[rank_col].parse().unwrap());
        }
    }
    let medians: Vec<f64> = per_budget
        .iter()
        .map(|values| {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            (sorted[mid - 1] + sorted[mid]) / 2.0
        })
        .collect();
    for pair in medians.windows(2) {
        assert!(
            pair[1] >= pair[0] - 1e-12,
            "median rank correlation degraded: {medians:?}"
        );
    }
}
