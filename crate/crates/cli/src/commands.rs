use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use divfolio::backtest::{run_backtest, BacktestConfig};
use divfolio::metrics::{fmt_value, MetricTable};
use divfolio::optimizer::{eta_max, Optimizer};
use divfolio::risk::{asset_risks, risk};
use divfolio::scenarios::{column_returns, load_prices, to_returns, write_matrix_csv};
use divfolio::solver::InteriorPoint;
use divfolio::strategies::{StrategyConfig, StrategyContext};
use divfolio::{diversification_ratio, PriceSeries, ProblemFamily, RiskKind, ScenarioMatrix, StrategyId, TargetPolicy};
use serde::Serialize;

use crate::config::{EtaMode, RunConfig};
use crate::CliError;

/// Loaded data shared by all commands.
pub struct Input {
    pub prices: PriceSeries<f64>,
    /// Asset returns, index column removed.
    pub scenarios: ScenarioMatrix<f64>,
    pub index_returns: Option<Vec<f64>>,
    pub hash: String,
}

impl Input {
    pub fn load(command: &str, cfg: &RunConfig) -> Result<Self, CliError> {
        let path = cfg.data.display();
        let bytes = std::fs::read(&cfg.data).map_err(|e| CliError::Input(format!("{path}: {e}")))?;
        let with_path = |e: divfolio::ScenarioError| CliError::Input(format!("{path}: {e}"));
        let prices = load_prices::<f64, _>(bytes.as_slice()).map_err(with_path)?;
        let (assets, index_returns) = match &cfg.index_col {
            Some(name) => {
                let (assets, index) = prices.split_column(name).map_err(with_path)?;
                (assets, Some(column_returns(&index)))
            }
            None => (prices.clone(), None),
        };
        let scenarios = to_returns(&assets).map_err(with_path)?;
        Ok(Self { prices, scenarios, index_returns, hash: cfg.hash(command, &bytes) })
    }
}

/// Output directory whose files all open with the config-hash line.
struct Sink {
    dir: PathBuf,
    hash: String,
}

impl Sink {
    fn new(cfg: &RunConfig, input: &Input) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::Input(format!("{}: {e}", cfg.out.display())))?;
        Ok(Self { dir: cfg.out.clone(), hash: input.hash.clone() })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# divfolio config-hash={}", self.hash)?;
        Ok(w)
    }
}

fn num(v: f64) -> String {
    fmt_value(Some(v))
}

fn opt(v: Option<f64>) -> String {
    fmt_value(v)
}

fn mean_and_vol(s: &ScenarioMatrix<f64>) -> Vec<(String, f64, f64)> {
    let vol = s.volatilities();
    s.asset_ids().iter().enumerate().map(|(i, a)| (a.clone(), s.mean_returns()[i], vol[i])).collect()
}

fn print_table(header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (c, cell) in r.iter().enumerate() {
            widths[c] = widths[c].max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        println!("{}", padded.join("  ").trim_end());
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
}

pub fn ingest(cfg: &RunConfig, input: &Input, summary: bool) -> Result<(), CliError> {
    let s = to_returns(&input.prices)?;
    let sink = Sink::new(cfg, input)?;
    let labels: Vec<String> = s.dates().unwrap_or_default().iter().map(|d| d.to_string()).collect();
    let mut out = sink.create("returns.csv")?;
    write_matrix_csv(&mut out, "date", s.asset_ids(), &labels, s.returns())?;
    out.flush()?;

    let stats = mean_and_vol(&s);
    let mut out = sink.create("summary.csv")?;
    writeln!(out, "asset,mu,sigma")?;
    for (a, mu, sigma) in &stats {
        writeln!(out, "{a},{},{}", num(*mu), num(*sigma))?;
    }
    out.flush()?;

    println!("{} assets, {} returns", s.n_assets(), s.n_scenarios());
    if summary {
        let rows: Vec<Vec<String>> =
            stats.iter().map(|(a, mu, sd)| vec![a.clone(), format!("{mu:.6}"), format!("{sd:.6}")]).collect();
        print_table(&["asset", "mu", "sigma"], &rows);
    }
    Ok(())
}

#[derive(Serialize)]
struct AssetWeight {
    asset: String,
    weight: f64,
}

#[derive(Serialize)]
struct StrategyReport {
    strategy: String,
    status: &'static str,
    error: Option<String>,
    measure: String,
    eta: Option<f64>,
    achieved_return: Option<f64>,
    risk: Option<f64>,
    diversification_ratio: Option<f64>,
    weights: Vec<AssetWeight>,
}

#[derive(Serialize)]
struct OptimizeReport {
    config_hash: String,
    n_assets: usize,
    n_scenarios: usize,
    eta_max: f64,
    common_target: Option<f64>,
    strategies: Vec<StrategyReport>,
}

/// Strategy matching `--family` and `--measure`, constrained unless no target is set.
fn default_strategy(cfg: &RunConfig) -> StrategyId {
    let constrained = cfg.eta_mode != EtaMode::None;
    StrategyId::ALL
        .into_iter()
        .find(|id| id.program() == Some((cfg.family, cfg.measure, constrained)))
        .expect("every family, measure and suffix has a strategy")
}

fn strategy_config(cfg: &RunConfig) -> StrategyConfig<f64> {
    StrategyConfig {
        epsilon: cfg.epsilon,
        alpha: cfg.alpha,
        eta_override: if cfg.eta_mode == EtaMode::Abs { cfg.eta } else { None },
    }
}

/// First error by severity: infeasible target, then solver failure, then input.
fn worst(errors: Vec<CliError>) -> Option<CliError> {
    let key = |e: &CliError| match e {
        CliError::Infeasible(_) => 0,
        CliError::Solver(_) => 1,
        CliError::Input(_) => 2,
    };
    errors.into_iter().min_by_key(key)
}

fn tag(id: StrategyId, e: CliError) -> CliError {
    match e {
        CliError::Input(m) => CliError::Input(format!("{id}: {m}")),
        CliError::Infeasible(m) => CliError::Infeasible(format!("{id}: {m}")),
        CliError::Solver(m) => CliError::Solver(format!("{id}: {m}")),
    }
}

pub fn optimize(cfg: &RunConfig, input: &Input) -> Result<(), CliError> {
    let s = &input.scenarios;
    let mut ids = cfg.strategies.clone().unwrap_or_else(|| vec![default_strategy(cfg)]);
    if ids.contains(&StrategyId::Index) {
        eprintln!("divfolio: Index has no weights and is skipped by optimize");
        ids.retain(|&id| id != StrategyId::Index);
    }
    let ctx = StrategyContext::new(s, strategy_config(cfg));
    let optimizer: Optimizer = Optimizer::default();

    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for id in ids {
        let kind = id.program().map_or(cfg.measure, |(_, k, _)| k);
        let fitted: Result<_, CliError> = match (id.program(), cfg.eta_mode, cfg.eta) {
            (Some((family, kind, true)), EtaMode::Frac, Some(f)) => optimizer
                .solve(s, &cfg.spec(kind), family, TargetPolicy::Fraction(f))
                .map(|o| (o.portfolio, o.eta))
                .map_err(Into::into),
            (Some(_), _, _) => ctx.outcome(id).map(|o| (o.portfolio, o.eta)).map_err(Into::into),
            (None, _, _) => ctx
                .run(id)
                .map(|p| (p.weights().expect("weights for non-index strategy").clone(), None))
                .map_err(Into::into),
        };
        let mut report = StrategyReport {
            strategy: id.name().to_string(),
            status: "ok",
            error: None,
            measure: kind.to_string(),
            eta: None,
            achieved_return: None,
            risk: None,
            diversification_ratio: None,
            weights: Vec::new(),
        };
        match fitted {
            Ok((p, eta)) => {
                let spec = cfg.spec(kind);
                let x = p.view();
                report.eta = eta;
                report.achieved_return = Some(x.dot(s.mean_returns()));
                report.risk = risk(s, x, &spec).ok();
                report.diversification_ratio = diversification_ratio(s, x, &spec).ok().map(|d| d.ratio);
                report.weights = s
                    .asset_ids()
                    .iter()
                    .zip(x.iter())
                    .map(|(a, &w)| AssetWeight { asset: a.clone(), weight: w })
                    .collect();
            }
            Err(e) => {
                let e = tag(id, e);
                eprintln!("divfolio: {e}");
                report.status = "error";
                report.error = Some(e.to_string());
                errors.push(e);
            }
        }
        reports.push(report);
    }

    let common_target = match cfg.eta_mode {
        EtaMode::None if reports.iter().any(|r| r.eta.is_some()) => ctx.common_target().ok().map(|t| t.eta),
        _ => None,
    };
    let doc = OptimizeReport {
        config_hash: input.hash.clone(),
        n_assets: s.n_assets(),
        n_scenarios: s.n_scenarios(),
        eta_max: eta_max(s),
        common_target,
        strategies: reports,
    };

    let sink = Sink::new(cfg, input)?;
    let mut out = sink.create("weights.csv")?;
    writeln!(out, "strategy,status,measure,eta,achieved_return,risk,dr,{}", s.asset_ids().join(","))?;
    for r in &doc.strategies {
        let w: Vec<String> = if r.weights.is_empty() {
            vec!["NA".to_string(); s.n_assets()]
        } else {
            r.weights.iter().map(|a| num(a.weight)).collect()
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.strategy,
            r.status,
            r.measure,
            opt(r.eta),
            opt(r.achieved_return),
            opt(r.risk),
            opt(r.diversification_ratio),
            w.join(",")
        )?;
    }
    out.flush()?;

    // JSON has no comment syntax; the hash is the `config_hash` field instead.
    let path = cfg.out.join("weights.json");
    let mut json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Input(e.to_string()))?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;

    for r in &doc.strategies {
        if r.status == "ok" {
            println!(
                "{:<8} return {}  risk {}  dr {}",
                r.strategy,
                opt(r.achieved_return),
                opt(r.risk),
                opt(r.diversification_ratio)
            );
        }
    }
    worst(errors).map_or(Ok(()), Err)
}

pub fn frontier(cfg: &RunConfig, input: &Input) -> Result<(), CliError> {
    let s = &input.scenarios;
    let spec = cfg.spec(cfg.measure);
    let points = Optimizer::<InteriorPoint>::default().frontier(s, &spec, cfg.family, cfg.grid)?;

    let sink = Sink::new(cfg, input)?;
    let mut out = sink.create("frontier.csv")?;
    writeln!(out, "point,eta,status,achieved_return,risk,dr,{}", s.asset_ids().join(","))?;
    for (k, p) in points.iter().enumerate() {
        match &p.outcome {
            Ok(o) => {
                let w: Vec<String> = o.portfolio.weights().iter().map(|&v| num(v)).collect();
                writeln!(
                    out,
                    "{k},{},ok,{},{},{},{}",
                    num(p.eta),
                    num(o.achieved_return),
                    num(o.achieved_risk),
                    opt(o.achieved_dr),
                    w.join(",")
                )?;
            }
            Err(e) => {
                eprintln!("divfolio: frontier point {k}: {e}");
                let status = if e.is_infeasible_target() { "infeasible" } else { "failed" };
                let na = vec!["NA"; s.n_assets() + 3].join(",");
                writeln!(out, "{k},{},{status},{na}", num(p.eta))?;
            }
        }
    }
    out.flush()?;
    let label = match cfg.family {
        ProblemFamily::MaxDiversification => "dr",
        ProblemFamily::MinRisk => "minrisk",
    };
    println!("{} points on the {label} {} frontier", points.len(), cfg.measure);
    Ok(())
}

pub fn backtest(cfg: &RunConfig, input: &Input) -> Result<(), CliError> {
    if cfg.eta_mode == EtaMode::Frac {
        return Err(CliError::Input("backtest supports eta_mode none or abs".into()));
    }
    let bcfg = BacktestConfig {
        in_len: cfg.in_len,
        hold_len: cfg.hold_len,
        strategies: cfg.strategies.clone().unwrap_or_else(|| StrategyId::ALL.to_vec()),
        strategy: strategy_config(cfg),
        turnover: cfg.turnover,
    };
    let result = run_backtest(&input.scenarios, input.index_returns.as_deref(), &bcfg).map_err(|e| match e {
        divfolio::backtest::BacktestError::Scenario(inner) => CliError::from(inner),
        other => CliError::Input(other.to_string()),
    })?;
    for w in &result.warnings {
        eprintln!("divfolio: warning: {w}");
    }
    for f in &result.failures {
        eprintln!("divfolio: {} failed in window {}: {}", f.id, f.window, f.message);
    }
    if result.runs.is_empty() {
        return Err(CliError::Solver("every requested strategy failed".into()));
    }

    let table = MetricTable::from_backtest(&result);
    let sink = Sink::new(cfg, input)?;
    let mut out = sink.create("returns.csv")?;
    result.write_returns_csv(&mut out)?;
    out.flush()?;
    let mut out = sink.create("wealth.csv")?;
    result.write_wealth_csv(&mut out)?;
    out.flush()?;
    let mut out = sink.create("rebalance.csv")?;
    result.write_rebalance_csv(&mut out)?;
    out.flush()?;
    let mut out = sink.create("metrics.csv")?;
    table.write_csv(&mut out)?;
    out.flush()?;
    let mut out = sink.create("metrics.txt")?;
    table.write_text(&mut out)?;
    out.flush()?;
    let mut out = sink.create("ranks.csv")?;
    table.write_ranks_csv(&mut out)?;
    out.flush()?;
    let mut out = sink.create("roi.csv")?;
    table.write_roi_csv(&mut out)?;
    out.flush()?;
    let mut out = sink.create("failures.csv")?;
    writeln!(out, "strategy,window,message")?;
    for f in &result.failures {
        writeln!(out, "{},{},\"{}\"", f.id, f.window, f.message.replace('"', "\"\""))?;
    }
    out.flush()?;

    let mut text = Vec::new();
    table.write_text(&mut text)?;
    print!("{}", String::from_utf8_lossy(&text));
    Ok(())
}

pub fn report(cfg: &RunConfig, input: &Input) -> Result<(), CliError> {
    let s = &input.scenarios;
    let risks: Vec<Vec<f64>> = RiskKind::ALL
        .iter()
        .map(|&k| asset_risks(s, &cfg.spec(k)).map(|r| r.to_vec()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(e.to_string()))?;

    let sink = Sink::new(cfg, input)?;
    let mut out = sink.create("asset_risks.csv")?;
    writeln!(out, "asset,mu,vol,mad,cvar,expectile")?;
    let mut rows = Vec::new();
    for (i, a) in s.asset_ids().iter().enumerate() {
        let vals: Vec<f64> = std::iter::once(s.mean_returns()[i]).chain(risks.iter().map(|r| r[i])).collect();
        writeln!(out, "{a},{}", vals.iter().map(|&v| num(v)).collect::<Vec<_>>().join(","))?;
        rows.push(std::iter::once(a.clone()).chain(vals.iter().map(|v| format!("{v:.6}"))).collect());
    }
    out.flush()?;
    print_table(&["asset", "mu", "vol", "mad", "cvar", "expectile"], &rows);

    let ctx = StrategyContext::new(s, strategy_config(cfg));
    let top = eta_max(s);
    let mut out = sink.create("eta.csv")?;
    writeln!(out, "strategy,eta_min,eta_max,eta_third")?;
    for id in StrategyId::ALL.into_iter().filter(|id| matches!(id.program(), Some((_, _, false)))) {
        match ctx.unconstrained(id) {
            Ok(o) => {
                let lo = o.achieved_return;
                writeln!(out, "{id},{},{},{}", num(lo), num(top), num(lo + (top - lo) / 3.0))?;
            }
            Err(e) => {
                eprintln!("divfolio: {id}: {e}");
                writeln!(out, "{id},NA,{},NA", num(top))?;
            }
        }
    }
    let common = ctx.common_target().ok().map(|t| t.eta);
    writeln!(out, "common,NA,{},{}", num(top), opt(common))?;
    out.flush()?;
    println!("eta_max {}  common target {}", num(top), opt(common));
    Ok(())
}
