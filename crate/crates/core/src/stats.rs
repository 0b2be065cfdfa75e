//! Correlation of a measure with WER: logistic mapping fitted by least
//! squares, then Pearson correlation of the mapped scores with WER.

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

fn check_pair(x: &[f64], y: &[f64], needed: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: alloc::format!("{} values", x.len()),
            got: alloc::format!("{} values", y.len()),
        });
    }
    if x.len() < needed {
        return Err(Error::TooFewPoints { needed, got: x.len() });
    }
    Ok(())
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    if is_constant(x) {
        return Err(Error::UndefinedCorrelation("x"));
    }
    if is_constant(y) {
        return Err(Error::UndefinedCorrelation("y"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (libm::sqrt(sxx) * libm::sqrt(syy))).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share their average rank.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = alloc::vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on fractional ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogisticParams {
    pub a: f64,
    pub b: f64,
}

/// WER estimate `100 / (1 + exp(a*m + b))`.
pub fn map_logistic(p: LogisticParams, m: f64) -> f64 {
    100.0 / (1.0 + libm::exp(p.a * m + p.b))
}

/// Sum of squared residuals of `wer` against the mapped scores.
pub fn logistic_loss(p: LogisticParams, m: &[f64], wer: &[f64]) -> f64 {
    m.iter().zip(wer).map(|(&mi, &w)| w - map_logistic(p, mi)).map(|r| r * r).sum()
}

const LOGIT_CLAMP: (f64, f64) = (0.1, 99.9);
const MAX_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 60;
const REL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub loss: f64,
    /// Closed-form start from least squares on logit-transformed WER.
    pub initial: LogisticParams,
    pub initial_loss: f64,
    pub iterations: usize,
}

fn clamp_wer(wer: &[f64]) -> Result<Vec<f64>> {
    wer.iter()
        .map(|&w| {
            if w.is_finite() && w >= 0.0 {
                Ok(w.min(100.0))
            } else {
                Err(Error::InvalidParameter(alloc::format!("WER {w} is not a finite non-negative percentage")))
            }
        })
        .collect()
}

/// Ordinary least squares of `z = ln(100/wer - 1)` on `m`.
fn logit_initialization(m: &[f64], wer: &[f64]) -> LogisticParams {
    let z: Vec<f64> = wer
        .iter()
        .map(|&w| {
            let w = w.clamp(LOGIT_CLAMP.0, LOGIT_CLAMP.1);
            libm::log(100.0 / w - 1.0)
        })
        .collect();
    let (mm, mz) = (mean(m), mean(&z));
    let (mut smz, mut smm) = (0.0, 0.0);
    for (&mi, &zi) in m.iter().zip(&z) {
        smz += (mi - mm) * (zi - mz);
        smm += (mi - mm) * (mi - mm);
    }
    let a = smz / smm;
    LogisticParams { a, b: mz - a * mm }
}

/// One Gauss-Newton direction for the squared loss.
fn gauss_newton_step(p: LogisticParams, m: &[f64], wer: &[f64]) -> Option<(f64, f64)> {
    let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&mi, &w) in m.iter().zip(wer) {
        let u = p.a * mi + p.b;
        let s = 1.0 / (1.0 + libm::exp(u));
        let s_comp = 1.0 / (1.0 + libm::exp(-u));
        // d f / d u
        let du = -100.0 * s * s_comp;
        let (da, db) = (du * mi, du);
        let r = w - 100.0 * s;
        jaa += da * da;
        jab += da * db;
        jbb += db * db;
        ga += da * r;
        gb += db * r;
    }
    // tiny ridge keeps saturated fits solvable
    let ridge = 1e-12 * (jaa + jbb);
    let (jaa, jbb) = (jaa + ridge, jbb + ridge);
    let det = jaa * jbb - jab * jab;
    if !det.is_finite() || det <= 0.0 {
        return None;
    }
    Some(((jbb * ga - jab * gb) / det, (jaa * gb - jab * ga) / det))
}

/// Least-squares fit of the logistic mapping, with diagnostics.
///
/// Starts from the logit-OLS solution and refines with damped Gauss-Newton
/// (step halved until the loss decreases), stopping after 200 iterations or
/// when the relative loss change drops below `1e-12`. WER above 100 is
/// clamped to 100 first.
pub fn fit_logistic_detailed(m: &[f64], wer: &[f64]) -> Result<LogisticFit> {
    check_pair(m, wer, 3)?;
    if is_constant(m) {
        return Err(Error::DegenerateFit);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measure values"));
    }
    let wer = clamp_wer(wer)?;
    let initial = logit_initialization(m, &wer);
    let initial_loss = logistic_loss(initial, m, &wer);
    let mut params = initial;
    let mut loss = initial_loss;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && loss > 0.0 {
        iterations += 1;
        let Some((da, db)) = gauss_newton_step(params, m, &wer) else { break };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = LogisticParams { a: params.a + t * da, b: params.b + t * db };
            let l = logistic_loss(cand, m, &wer);
            if l < loss {
                accepted = Some((cand, l));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, l)) = accepted else { break };
        let rel = (loss - l) / loss;
        params = cand;
        loss = l;
        if rel < REL_TOLERANCE {
            break;
        }
    }
    Ok(LogisticFit { params, loss, initial, initial_loss, iterations })
}

/// Least-squares logistic mapping from measure values to WER (percent).
pub fn fit_logistic(m: &[f64], wer: &[f64]) -> Result<LogisticParams> {
    Ok(fit_logistic_detailed(m, wer)?.params)
}

/// How well one measure tracks WER over a set of utterances or conditions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrelationReport {
    pub measure_name: String,
    pub n_points: usize,
    pub params: LogisticParams,
    /// `|rho_signed|`, the reported correlation strength.
    pub rho_magnitude: f64,
    /// Pearson correlation of mapped scores with WER.
    pub rho_signed: f64,
    /// Rank correlation of the raw scores with WER.
    pub spearman: f64,
    pub rmse_mapped: f64,
}

/// Fits the logistic mapping to `(m, wer)` points and correlates the mapped
/// scores with WER.
pub fn evaluate_measure(points: &[(f64, f64)], name: &str) -> Result<CorrelationReport> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: points.len() });
    }
    let m: Vec<f64> = points.iter().map(|p| p.0).collect();
    let wer = clamp_wer(&points.iter().map(|p| p.1).collect::<Vec<_>>())?;
    if is_constant(&wer) {
        return Err(Error::UndefinedCorrelation("wer"));
    }
    let params = fit_logistic(&m, &wer)?;
    let mapped: Vec<f64> = m.iter().map(|&v| map_logistic(params, v)).collect();
    let rho_signed = pearson(&mapped, &wer).map_err(|e| match e {
        Error::UndefinedCorrelation(_) => Error::UndefinedCorrelation("mapped scores"),
        e => e,
    })?;
    let spearman = spearman(&m, &wer)?;
    let rmse_mapped = libm::sqrt(logistic_loss(params, &m, &wer) / m.len() as f64);
    Ok(CorrelationReport {
        measure_name: name.into(),
        n_points: points.len(),
        params,
        rho_magnitude: rho_signed.abs(),
        rho_signed,
        spearman,
        rmse_mapped,
    })
}
