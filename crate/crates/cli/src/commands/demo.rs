use serde::{Deserialize, Serialize};

use pricing_lab::mech::{anonymous_welfare_counterexample, ApCounterexample};

use super::Outcome;
use crate::config::sha256_hex;
use crate::error::CliError;

pub const MIN_TRUNCATION: u64 = 10;
pub const MAX_TRUNCATION: u64 = 1_000_000_000;
/// Budgets above this are folded into closed-form tails when pricing.
const PRICE_SCAN_LIMIT: usize = 1_000_000;
const PRICE_SCAN_POINTS: usize = 200_000;

/// `pi^2 / 6`, the normalizer of the budget law `g(i) = 1 / (varpi i^2)`.
const VARPI: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialSum {
    pub m: u64,
    /// `(1 / 2 varpi) * sum_{i=2..m} 1 / (i ln i)`.
    pub partial_sum: f64,
    /// `(1 / 2 varpi) * ln ln m`.
    pub lnln: f64,
    /// Growth since the previous row.
    pub increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnboundedGapReport {
    pub digest: String,
    pub m: u64,
    pub rows: Vec<PartialSum>,
    /// Best revenue of a posted per-unit price.
    pub price_posting_revenue: f64,
    pub price_posting_price: f64,
    /// `log10` of the truncation at which the partial sum overtakes the
    /// price-posting revenue, extrapolated along `ln ln m`.
    pub crossover_log10_m: f64,
}

/// `Pr[v >= p]` for the value law with quantile `1 / ln v`.
fn value_tail(p: f64) -> f64 {
    if p <= std::f64::consts::E {
        1.0
    } else {
        1.0 / p.ln()
    }
}

/// Best posted-price revenue `Pr[v >= p] * E[min(p, b)]`, scanning a log
/// grid of prices plus every integer budget up to a thousand.
fn price_posting_optimum() -> (f64, f64) {
    // prefix sums of 1/i and 1/i^2 over budgets
    let mut h1 = vec![0.0; PRICE_SCAN_LIMIT + 1];
    let mut h2 = vec![0.0; PRICE_SCAN_LIMIT + 1];
    for i in 1..=PRICE_SCAN_LIMIT {
        let x = i as f64;
        h1[i] = h1[i - 1] + 1.0 / x;
        h2[i] = h2[i - 1] + 1.0 / (x * x);
    }
    let mean_min = |p: f64| {
        let n = (p.floor() as usize).min(PRICE_SCAN_LIMIT);
        (h1[n] + p * (VARPI - h2[n])) / VARPI
    };
    let (lo, hi) = (1e-2f64, PRICE_SCAN_LIMIT as f64);
    let mut candidates: Vec<f64> = (0..=PRICE_SCAN_POINTS)
        .map(|j| lo * (hi / lo).powf(j as f64 / PRICE_SCAN_POINTS as f64))
        .collect();
    candidates.extend((1..=1000).map(|i| i as f64));
    candidates.push(std::f64::consts::E);
    candidates
        .into_iter()
        .map(|p| (value_tail(p) * mean_min(p), p))
        .fold((0.0, 0.0), |best, c| if c.0 > best.0 { c } else { best })
}

/// Divergent lower bound on the revenue of `tau(x) = 1 / (1 - x)` against
/// the bounded revenue of price posting.
pub fn cmd_demo_unbounded_gap(m: u64) -> Result<(Outcome, UnboundedGapReport), CliError> {
    if !(MIN_TRUNCATION..=MAX_TRUNCATION).contains(&m) {
        return Err(CliError::Config {
            path: "m".into(),
            msg: format!("truncation {m} must lie in [{MIN_TRUNCATION}, {MAX_TRUNCATION}]"),
        });
    }
    let scale = 1.0 / (2.0 * VARPI);
    let mut checkpoints: Vec<u64> = std::iter::successors(Some(10u64), |&c| Some(c * 10))
        .take_while(|&c| c <= m)
        .collect();
    if checkpoints.last() != Some(&m) {
        checkpoints.push(m);
    }
    let mut rows: Vec<PartialSum> = Vec::with_capacity(checkpoints.len());
    let mut sum = 0.0;
    let mut next = 0;
    for i in 2..=m {
        let x = i as f64;
        sum += 1.0 / (x * x.ln());
        if i == checkpoints[next] {
            let s = scale * sum;
            let lnln = scale * x.ln().ln();
            let increment = rows.last().map_or(0.0, |r| s - r.partial_sum);
            rows.push(PartialSum {
                m: i,
                partial_sum: s,
                lnln,
                increment,
            });
            next += 1;
        }
    }
    let (revenue, price) = price_posting_optimum();
    let last = rows.last().expect("at least one checkpoint");
    // sum_{i<=m} 1/(i ln i) = ln ln m + c + o(1)
    let offset = last.partial_sum / scale - (last.m as f64).ln().ln();
    let crossover_log10_m = (revenue / scale - offset).exp() / std::f64::consts::LN_10;

    let digest = sha256_hex(format!("{{\"demo\":\"unbounded-gap\",\"m\":{m}}}").as_bytes());
    let report = UnboundedGapReport {
        digest,
        m,
        rows,
        price_posting_revenue: revenue,
        price_posting_price: price,
        crossover_log10_m,
    };
    let mut out = Outcome::default();
    out.line("m, partial sum, (1/2 varpi) ln ln m, increment");
    for r in &report.rows {
        out.line(format!(
            "{:>12}  {:.6}  {:.6}  {:+.6}",
            r.m, r.partial_sum, r.lnln, r.increment
        ));
    }
    out.line(format!(
        "best posted price {:.4} earns {:.6}; the partial sums pass it near m = 10^{:.1}",
        price, revenue, crossover_log10_m
    ));
    out.add_json("demo_unbounded_gap.json", &report)?;
    Ok((out, report))
}

#[derive(Debug, Serialize)]
struct AnonymousWelfareReport<'a> {
    digest: String,
    #[serde(flatten)]
    example: &'a ApCounterexample,
    /// `1 / (2 eps)`, the ratio the construction is meant to exceed.
    target_ratio: f64,
}

pub fn cmd_demo_anonymous_welfare(eps: f64) -> Result<(Outcome, ApCounterexample), CliError> {
    let example = anonymous_welfare_counterexample(eps).map_err(|e| CliError::Config {
        path: "eps".into(),
        msg: e.to_string(),
    })?;
    let target = 1.0 / (2.0 * eps);
    let mut out = Outcome::default();
    out.line(format!(
        "eps = {eps}: optimal welfare {:.6}, best anonymous price {:.6} earns {:.6}, ratio {:.4} (1/(2 eps) = {:.4})",
        example.optimal,
        example.best_anonymous.price,
        example.best_anonymous.value,
        example.ratio,
        target
    ));
    let digest = sha256_hex(format!("{{\"demo\":\"anonymous-welfare\",\"eps\":{eps}}}").as_bytes());
    out.add_json(
        "demo_anonymous_welfare.json",
        &AnonymousWelfareReport {
            digest,
            example: &example,
            target_ratio: target,
        },
    )?;
    Ok((out, example))
}
