mod common;

use common::{random_scenarios, rng};
use divfolio::backtest::{run_backtest, turnover, wealth_path, BacktestConfig, TurnoverConvention};
use divfolio::metrics::{
    drawdown_stats, jensen_alpha_info, omega, rachev10, sharpe, var5, MetricTable, METRIC_COLUMNS,
};
use divfolio::strategies::StrategyId;
use ndarray::array;
use proptest::prelude::*;

fn cfg(in_len: usize, hold: usize, ids: &[StrategyId]) -> BacktestConfig<f64> {
    BacktestConfig { in_len, hold_len: hold, strategies: ids.to_vec(), ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wealth_reproduces_compounded_returns(r in prop::collection::vec(-0.2f64..0.2, 1..300)) {
        let w = wealth_path(&r);
        prop_assert_eq!(w[0], 1.0);
        let mut prod = 1.0;
        for (t, x) in r.iter().enumerate() {
            prod *= 1.0 + x;
            prop_assert!((w[t + 1] - prod).abs() <= 1e-12 * prod);
        }
    }

    #[test]
    fn scale_invariant_ratios(r in prop::collection::vec(-0.05f64..0.05, 20..200), k in 0.1f64..10.0) {
        let scaled: Vec<f64> = r.iter().map(|v| v * k).collect();
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * a.abs().max(1.0),
            (None, None) => true,
            _ => false,
        };
        prop_assert!(close(sharpe(&r), sharpe(&scaled)));
        prop_assert!(close(rachev10(&r), rachev10(&scaled)));
        prop_assert!(close(omega(&r), omega(&scaled)));
        let idx: Vec<f64> = r.iter().enumerate().map(|(t, v)| 0.5 * v + 1e-3 * ((t % 7) as f64 - 3.0)).collect();
        let idx_scaled: Vec<f64> = idx.iter().map(|v| v * k).collect();
        prop_assert!(close(jensen_alpha_info(&r, &idx).1, jensen_alpha_info(&scaled, &idx_scaled).1));
        match (var5(&r), var5(&scaled)) {
            (Some(a), Some(b)) => prop_assert!((b - k * a).abs() <= 1e-12 * (1.0 + a.abs() * k)),
            (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
        }
    }

    #[test]
    fn new_peak_suffix_leaves_drawdowns_unchanged(
        r in prop::collection::vec(-0.1f64..0.1, 1..100),
        extra in prop::collection::vec(0.0f64..0.1, 1..10),
    ) {
        let w = wealth_path(&r);
        let (mdd, ulcer) = drawdown_stats(&w);
        prop_assert!(mdd <= 0.0 && ulcer >= 0.0);
        let peak = w.iter().cloned().fold(f64::MIN, f64::max);
        let mut longer = w.clone();
        let mut level = peak;
        for e in &extra {
            level *= 1.01 + e;
            longer.push(level);
        }
        let (mdd2, _) = drawdown_stats(&longer);
        prop_assert_eq!(mdd, mdd2);
        // the Ulcer sum of squares is unchanged; only the divisor grows
        let ss = |w: &[f64]| { let (_, u) = drawdown_stats(w); u * u * w.len() as f64 };
        prop_assert!((ss(&w) - ss(&longer)).abs() <= 1e-12);
    }

    #[test]
    fn turnover_is_zero_for_constant_weights(n in 1usize..10, s in 1usize..20) {
        let w = ndarray::Array1::from_elem(n, 1.0 / n as f64);
        let all: Vec<_> = (0..s).map(|_| &w).collect();
        prop_assert_eq!(turnover(&all, TurnoverConvention::InceptionFree), 0.0);
    }
}

#[test]
fn turnover_of_a_swap() {
    let a = array![1.0, 0.0];
    let b = array![0.0, 1.0];
    assert_eq!(turnover(&[&a, &b, &a], TurnoverConvention::InceptionFree), 2.0);
    assert_eq!(turnover(&[&a, &b], TurnoverConvention::FromCash), 1.5);
}

#[test]
fn single_window_gives_one_rebalance() {
    let mut r = rng(501);
    let s = random_scenarios(&mut r, 4, 60);
    let res = run_backtest(&s, None, &cfg(40, 20, &[StrategyId::EW, StrategyId::MV0])).unwrap();
    assert_eq!(res.plan.len(), 1);
    for run in &res.runs {
        assert_eq!(run.rebalances.len(), 1);
        assert_eq!(run.turnover, Some(0.0));
    }
}

#[test]
fn no_look_ahead_and_causality() {
    let mut r = rng(502);
    let s = random_scenarios(&mut r, 5, 160);
    let ids = [StrategyId::MV1, StrategyId::DRMAD0, StrategyId::DRCVaR1, StrategyId::RP];
    let full = run_backtest(&s, None, &cfg(100, 15, &ids)).unwrap();
    for w in &full.plan.windows {
        assert!(w.in_range.end <= w.out_range.start);
    }
    let cut = s.slice_rows(0..160 - 15).unwrap();
    let short = run_backtest(&cut, None, &cfg(100, 15, &ids)).unwrap();
    assert_eq!(short.plan.len(), full.plan.len() - 1);
    for (a, b) in full.runs.iter().zip(&short.runs) {
        assert_eq!(a.id, b.id);
        for (ra, rb) in a.rebalances.iter().zip(&b.rebalances) {
            assert_eq!(ra.weights, rb.weights, "{}", a.id);
        }
    }
}

#[test]
fn full_catalog_weights_stay_on_the_simplex() {
    let mut r = rng(503);
    let s = random_scenarios(&mut r, 6, 140);
    let index: Vec<f64> = (0..140).map(|t| s.returns().row(t).sum() / 6.0).collect();
    let res = run_backtest(&s, Some(&index), &cfg(100, 10, &StrategyId::ALL)).unwrap();
    assert!(res.failures.is_empty(), "{:?}", res.failures);
    assert_eq!(res.runs.len(), 19);
    for run in &res.runs {
        assert_eq!(run.out_returns.len(), res.plan.out_len());
        for rb in &run.rebalances {
            if let Some(w) = &rb.weights {
                assert!((w.sum() - 1.0).abs() <= 1e-9 && w.iter().all(|&v| v >= 0.0), "{}", run.id);
            }
        }
    }
    let table = MetricTable::from_backtest(&res);
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    for cell in text.lines().skip(1).flat_map(|l| l.split(',').skip(1)) {
        assert!(cell == "NA" || cell.parse::<f64>().is_ok_and(f64::is_finite), "{cell}");
    }
    assert_eq!(text.lines().next().unwrap().split(',').count(), METRIC_COLUMNS.len() + 1);
    let idx_row = table.row("Index").unwrap();
    assert!((idx_row.alpha_j.unwrap()).abs() < 1e-15);
    assert!(idx_row.info_ratio.is_none());
    assert_eq!(table.row("EW").unwrap().ave_count, Some(6.0));
}

#[test]
fn two_identical_assets_track_either_asset() {
    let mut r = rng(504);
    let base = random_scenarios(&mut r, 1, 80);
    let col: Vec<f64> = base.asset(0).to_vec();
    let s = divfolio::ScenarioMatrix::from_columns(&[col.clone(), col.clone()]).unwrap();
    let ids = [StrategyId::MV0, StrategyId::MAD1, StrategyId::CVaR0, StrategyId::Expe1, StrategyId::EW];
    let res = run_backtest(&s, None, &cfg(50, 10, &ids)).unwrap();
    for run in &res.runs {
        for (t, v) in run.out_returns.iter().enumerate() {
            assert!((v - col[50 + t]).abs() <= 1e-12, "{}", run.id);
        }
    }
}
