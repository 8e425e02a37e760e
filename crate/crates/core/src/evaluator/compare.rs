use serde::{Deserialize, Serialize};

use super::{SweepResult, SweepSpec};
use crate::error::{Error, Result};
use crate::trainer::EpochLedger;

/// Acceptance margins for the dynamic-versus-fixed comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Allowed drop in the dynamic per-depth average from n to n + 1.
    pub depth_slack_db: f64,
    /// Allowed shortfall of the dynamic grand average against the fixed one.
    pub fixed_margin_db: f64,
    /// Allowed drop between adjacent SNR points, in pooled standard errors.
    pub snr_stderr_slack: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            depth_slack_db: 0.3,
            fixed_margin_db: 0.25,
            snr_stderr_slack: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDelta {
    pub n: usize,
    pub snr_db: f64,
    pub cr: f64,
    pub dynamic_db: f64,
    pub fixed_db: Option<f64>,
    /// dynamic minus fixed.
    pub delta_db: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthAverage {
    pub n: usize,
    pub dynamic_db: f64,
    pub fixed_db: Option<f64>,
    pub delta_db: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub thresholds: Thresholds,
    pub cells: Vec<CellDelta>,
    pub per_n: Vec<DepthAverage>,
    pub grand_dynamic_db: f64,
    pub grand_fixed_db: Option<f64>,
    /// Reported only; not one of the checks.
    pub dynamic_strictly_better: Option<bool>,
    pub ledger: EpochLedger,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn same_axes(a: &SweepSpec, b: &SweepSpec) -> bool {
    a.snr_points == b.snr_points
        && a.cr_points == b.cr_points
        && a.trials == b.trials
        && a.seed == b.seed
        && a.max_i == b.max_i
        && a.channel == b.channel
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, c) = v.into_iter().fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    s / c as f64
}

/// Per-cell deltas, per-depth averages (unweighted over SNR and CR cells),
/// the epoch ledger and the acceptance checks.
pub fn compare_dynamic_vs_fixed(
    dynamic: &SweepResult,
    fixed: &[SweepResult],
    ledger: &EpochLedger,
    thresholds: Thresholds,
) -> Result<ComparisonReport> {
    for f in fixed {
        if !same_axes(&dynamic.spec, &f.spec) {
            return Err(Error::usage(format!(
                "sweep of {} used a different grid, trial count or seed than the dynamic sweep",
                f.model.label()
            )));
        }
        if let Some(n) = f.spec.n_points.iter().find(|n| !dynamic.spec.n_points.contains(n)) {
            return Err(Error::usage(format!("{} covers n={n}, absent from the dynamic sweep", f.model.label())));
        }
    }
    let fixed_at = |n: usize, snr: f64, cr: f64| fixed.iter().find_map(|f| f.cell(n, snr, cr).map(|c| c.mean_psnr_db));

    let cells: Vec<CellDelta> = dynamic
        .cells
        .iter()
        .map(|c| {
            let f = fixed_at(c.n, c.snr_db, c.cr);
            CellDelta {
                n: c.n,
                snr_db: c.snr_db,
                cr: c.cr,
                dynamic_db: c.mean_psnr_db,
                fixed_db: f,
                delta_db: f.map(|f| c.mean_psnr_db - f),
            }
        })
        .collect();

    let per_n: Vec<DepthAverage> = dynamic
        .spec
        .n_points
        .iter()
        .map(|&n| {
            let mine: Vec<&CellDelta> = cells.iter().filter(|c| c.n == n).collect();
            let dyn_avg = mean(mine.iter().map(|c| c.dynamic_db));
            let fixed_avg = if mine.iter().all(|c| c.fixed_db.is_some()) {
                Some(mean(mine.iter().filter_map(|c| c.fixed_db)))
            } else {
                None
            };
            DepthAverage {
                n,
                dynamic_db: dyn_avg,
                fixed_db: fixed_avg,
                delta_db: fixed_avg.map(|f| dyn_avg - f),
            }
        })
        .collect();

    let grand_dynamic_db = mean(dynamic.cells.iter().map(|c| c.mean_psnr_db));
    let fixed_cells: Vec<f64> = fixed.iter().flat_map(|f| f.cells.iter().map(|c| c.mean_psnr_db)).collect();
    let grand_fixed_db = (!fixed_cells.is_empty()).then(|| mean(fixed_cells.iter().copied()));

    let mut checks = vec![depth_check(&per_n, thresholds.depth_slack_db)];
    if let Some(g) = grand_fixed_db {
        let passed = grand_dynamic_db >= g - thresholds.fixed_margin_db;
        checks.push(Check {
            name: "dynamic_vs_fixed".into(),
            passed,
            detail: format!(
                "dynamic {grand_dynamic_db:.3} dB vs fixed {g:.3} dB (margin {} dB)",
                thresholds.fixed_margin_db
            ),
        });
    }
    for r in std::iter::once(dynamic).chain(fixed) {
        checks.push(snr_check(r, thresholds.snr_stderr_slack));
    }
    checks.push(Check {
        name: "epoch_ledger".into(),
        passed: ledger.is_consistent(),
        detail: ledger.summary(),
    });
    let passed = checks.iter().all(|c| c.passed);
    Ok(ComparisonReport {
        thresholds,
        cells,
        per_n,
        grand_dynamic_db,
        grand_fixed_db,
        dynamic_strictly_better: grand_fixed_db.map(|g| grand_dynamic_db > g),
        ledger: ledger.clone(),
        checks,
        passed,
    })
}

fn depth_check(per_n: &[DepthAverage], slack: f64) -> Check {
    let mut sorted: Vec<&DepthAverage> = per_n.iter().collect();
    sorted.sort_by_key(|d| d.n);
    let violations: Vec<String> = sorted
        .windows(2)
        .filter(|w| w[1].dynamic_db < w[0].dynamic_db - slack)
        .map(|w| format!("n={} {:.3} dB < n={} {:.3} dB", w[1].n, w[1].dynamic_db, w[0].n, w[0].dynamic_db))
        .collect();
    let profile: Vec<String> = sorted.iter().map(|d| format!("n={}: {:.3}", d.n, d.dynamic_db)).collect();
    Check {
        name: "depth_monotone".into(),
        passed: violations.is_empty(),
        detail: if violations.is_empty() {
            profile.join(", ")
        } else {
            violations.join("; ")
        },
    }
}

fn snr_check(r: &SweepResult, slack: f64) -> Check {
    let mut snrs = r.spec.snr_points.clone();
    snrs.sort_by(f64::total_cmp);
    let mut violations = Vec::new();
    let mut pairs = 0;
    for &n in &r.spec.n_points {
        for &cr in &r.spec.cr_points {
            for w in snrs.windows(2) {
                let (Some(a), Some(b)) = (r.cell(n, w[0], cr), r.cell(n, w[1], cr)) else {
                    continue;
                };
                pairs += 1;
                let pooled = (a.stderr_db.powi(2) + b.stderr_db.powi(2)).sqrt();
                if b.mean_psnr_db < a.mean_psnr_db - slack * pooled {
                    violations.push(format!(
                        "n={n} cr={cr:.4}: {:.3} dB at {} dB < {:.3} dB at {} dB",
                        b.mean_psnr_db, w[1], a.mean_psnr_db, w[0]
                    ));
                }
            }
        }
    }
    Check {
        name: format!("snr_monotone[{}]", r.model.label()),
        passed: violations.is_empty(),
        detail: if violations.is_empty() {
            format!("{pairs} adjacent pairs")
        } else {
            violations.join("; ")
        },
    }
}
