use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn divfolio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divfolio")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes prices compounding `returns` from 100, one column per asset.
fn write_prices(dir: &Path, name: &str, ids: &[&str], returns: &[Vec<f64>]) -> PathBuf {
    let start = chrono_like_date(0);
    let mut text = format!("date,{}\n", ids.join(","));
    let mut p = vec![100.0; ids.len()];
    text.push_str(&row(&start, &p));
    for (t, r) in returns.iter().enumerate() {
        for (pi, ri) in p.iter_mut().zip(r) {
            *pi *= 1.0 + ri;
        }
        text.push_str(&row(&chrono_like_date(t + 1), &p));
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn row(date: &str, p: &[f64]) -> String {
    let cells: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
    format!("{date},{}\n", cells.join(","))
}

/// Consecutive calendar days from 2001-01-01, valid for up to ~27 years.
fn chrono_like_date(k: usize) -> String {
    let days_in = |y: usize, m: usize| match m {
        2 if y.is_multiple_of(4) => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    };
    let (mut y, mut m, mut d) = (2001, 1, 1 + k);
    while d > days_in(y, m) {
        d -= days_in(y, m);
        m += 1;
        if m > 12 {
            m = 1;
            y += 1;
        }
    }
    format!("{y:04}-{m:02}-{d:02}")
}

/// Sylvester Hadamard matrix of order 16: its non-constant columns are
/// orthogonal with zero mean.
fn hadamard16() -> Vec<Vec<f64>> {
    let mut h = vec![vec![1.0]];
    while h.len() < 16 {
        let n = h.len();
        let mut next = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = h[i][j];
                next[i][j + n] = h[i][j];
                next[i + n][j] = h[i][j];
                next[i + n][j + n] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

/// Returns with exactly equicorrelated sample covariance: correlation `c`,
/// volatilities `sigma`, zero mean.
fn equicorrelated(sigma: &[f64], c: f64) -> Vec<Vec<f64>> {
    let h = hadamard16();
    (0..16)
        .map(|t| {
            sigma.iter().enumerate().map(|(i, s)| s * (c.sqrt() * h[t][1] + (1.0 - c).sqrt() * h[t][2 + i])).collect()
        })
        .collect()
}

/// Deterministic pseudo-random returns (linear congruential) with a common factor.
fn synthetic(n: usize, t: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    (0..t)
        .map(|_| {
            let f = next() * 0.02;
            (0..n).map(|i| 0.0003 * i as f64 + f + next() * 0.03).collect()
        })
        .collect()
}

/// Data lines of an output file, without the config-hash comment.
fn body(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# divfolio config-hash="), "{}", path.display());
    lines.map(str::to_string).collect()
}

fn column(lines: &[String], name: &str) -> Vec<String> {
    let header: Vec<&str> = lines[0].split(',').collect();
    let c = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines[1..].iter().map(|l| l.split(',').nth(c).unwrap().to_string()).collect()
}

fn weights_of(lines: &[String], strategy: &str, assets: &[&str]) -> Vec<f64> {
    let row = lines[1..].iter().position(|l| l.starts_with(&format!("{strategy},"))).unwrap();
    assets.iter().map(|a| column(lines, a)[row].parse().unwrap()).collect()
}

#[test]
fn ingest_three_prices_gives_two_returns() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("p.csv");
    fs::write(&data, "date,A,B\n2020-01-01,100,50\n2020-01-02,110,49\n2020-01-03,121,51\n").unwrap();
    let out = dir.path().join("out");
    let o = divfolio(&["ingest", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = body(&out.join("returns.csv"));
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "date,A,B");
    assert!(lines[1].starts_with("2020-01-02,0.1"));
    assert_eq!(body(&out.join("summary.csv"))[0], "asset,mu,sigma");
}

#[test]
fn malformed_price_file_names_the_row() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "date,A,B\n2020-01-01,100,50\n2020-01-02,abc,49\n").unwrap();
    let o = divfolio(&["ingest", "--data", data.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));
}

#[test]
fn summary_prints_mean_and_volatility() {
    let dir = TempDir::new().unwrap();
    let data = write_prices(dir.path(), "p.csv", &["X", "Y"], &synthetic(2, 30, 1));
    let o = divfolio(&["ingest", "--data", data.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--summary"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("asset") && l.contains("mu") && l.contains("sigma")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("X ")));
}

#[test]
fn unknown_config_key_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let data = write_prices(dir.path(), "p.csv", &["X", "Y"], &synthetic(2, 30, 1));
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("data = {}\nwindow = 3\n", data.display())).unwrap();
    let o = divfolio(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown key"));
}

#[test]
fn drvol0_on_equicorrelated_data_is_inverse_volatility() {
    let dir = TempDir::new().unwrap();
    let sigma = [0.01, 0.02, 0.03, 0.045];
    let ids = ["A", "B", "C", "D"];
    let data = write_prices(dir.path(), "eq.csv", &ids, &equicorrelated(&sigma, 0.6));
    let out = dir.path().join("out");
    let o = divfolio(&[
        "optimize",
        "--data",
        data.to_str().unwrap(),
        "--strategy",
        "DRvol0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let w = weights_of(&body(&out.join("weights.csv")), "DRvol0", &ids);
    let inv: f64 = sigma.iter().map(|s| 1.0 / s).sum();
    for (wi, s) in w.iter().zip(sigma) {
        assert!((wi - (1.0 / s) / inv).abs() <= 1e-6, "{w:?}");
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("weights.json")).unwrap()).unwrap();
    assert_eq!(json["strategies"][0]["strategy"], "DRvol0");
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn ew_is_uniform() {
    let dir = TempDir::new().unwrap();
    let ids = ["A", "B", "C"];
    let data = write_prices(dir.path(), "p.csv", &ids, &synthetic(3, 40, 2));
    let out = dir.path().join("out");
    let o =
        divfolio(&["optimize", "--data", data.to_str().unwrap(), "--strategy", "EW", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let w = weights_of(&body(&out.join("weights.csv")), "EW", &ids);
    for wi in w {
        assert!((wi - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn unattainable_target_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let data = write_prices(dir.path(), "p.csv", &["A", "B", "C"], &synthetic(3, 60, 3));
    let out = dir.path().join("out");
    let o = divfolio(&[
        "optimize",
        "--data",
        data.to_str().unwrap(),
        "--strategy",
        "DRCVaR1",
        "--eta",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("target return unattainable"));
    assert_eq!(column(&body(&out.join("weights.csv")), "status"), ["error"]);
}

#[test]
fn two_point_frontier_has_both_endpoints() {
    let dir = TempDir::new().unwrap();
    let data = write_prices(dir.path(), "p.csv", &["A", "B", "C"], &synthetic(3, 60, 4));
    for family in ["dr", "minrisk"] {
        let out = dir.path().join(family);
        let o = divfolio(&[
            "frontier",
            "--data",
            data.to_str().unwrap(),
            "--measure",
            "mad",
            "--family",
            family,
            "--grid",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let lines = body(&out.join("frontier.csv"));
        assert_eq!(lines[0], "point,eta,status,achieved_return,risk,dr,A,B,C");
        assert_eq!(lines.len(), 3);
        assert_eq!(column(&lines, "status"), ["ok", "ok"]);
        let eta: Vec<f64> = column(&lines, "eta").iter().map(|v| v.parse().unwrap()).collect();
        assert!(eta[0] < eta[1]);
    }
}

#[test]
fn frontier_dr_column_is_nonincreasing() {
    let dir = TempDir::new().unwrap();
    let data = write_prices(dir.path(), "p.csv", &["A", "B", "C", "D"], &synthetic(4, 80, 5));
    let out = dir.path().join("out");
    let o = divfolio(&["frontier", "--data", data.to_str().unwrap(), "--grid", "6", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dr: Vec<f64> = column(&body(&out.join("frontier.csv")), "dr").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(dr.len(), 6);
    assert!(dr.windows(2).all(|w| w[1] <= w[0] + 1e-7), "{dr:?}");
}

#[test]
fn ew_backtest_has_zero_turnover() {
    let dir = TempDir::new().unwrap();
    let data = write_prices(dir.path(), "p.csv", &["A", "B", "C"], &synthetic(3, 120, 6));
    let out = dir.path().join("out");
    let o = divfolio(&[
        "backtest",
        "--data",
        data.to_str().unwrap(),
        "--strategies",
        "EW",
        "--in-len",
        "50",
        "--hold-len",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = body(&out.join("metrics.csv"));
    assert_eq!(metrics.len(), 2);
    assert_eq!(column(&metrics, "turnover"), ["0"]);
    for f in ["returns.csv", "wealth.csv", "rebalance.csv", "metrics.txt", "ranks.csv", "roi.csv"] {
        assert!(!body(&out.join(f)).is_empty(), "{f}");
    }
}

#[test]
fn full_backtest_is_byte_identical_on_rerun() {
    let dir = TempDir::new().unwrap();
    // 600 returns over nine assets plus the index column
    let ids = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "IDX"];
    let data = write_prices(dir.path(), "p.csv", &ids, &synthetic(10, 600, 7));
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = divfolio(&[
            "backtest",
            "--data",
            data.to_str().unwrap(),
            "--index-col",
            "IDX",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a");
    let b = run("b");
    let metrics = body(&a.join("metrics.csv"));
    assert_eq!(metrics.len(), 20, "{}", metrics.join("\n"));
    assert!(metrics.iter().any(|l| l.starts_with("Index,")));
    for f in ["returns.csv", "wealth.csv", "rebalance.csv", "metrics.csv", "metrics.txt", "ranks.csv", "roi.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn report_lists_asset_risks() {
    let dir = TempDir::new().unwrap();
    let data = write_prices(dir.path(), "p.csv", &["A", "B"], &synthetic(2, 60, 8));
    let out = dir.path().join("out");
    let o = divfolio(&["report", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let risks = body(&out.join("asset_risks.csv"));
    assert_eq!(risks[0], "asset,mu,vol,mad,cvar,expectile");
    assert_eq!(risks.len(), 3);
    let eta = body(&out.join("eta.csv"));
    assert_eq!(eta.len(), 10);
    assert!(eta.last().unwrap().starts_with("common,"));
}
