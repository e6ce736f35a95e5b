//! Metrics and experiment harnesses: network similarity, rollout prediction
//! error, whole-outbreak simulation, degree statistics, and zone ranking.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::domain::{InfectionNetwork, Metapopulation, OutbreakSeries, Zone};
use crate::dynamics::{infectious_curve, simulate_outbreak, states_from_deltas};
use crate::error::{Error, Result};
use crate::inference::fit_alpha_adjustment;
use crate::io::fmt_f64;

/// Default PageRank damping factor.
pub const DEFAULT_DAMPING: f64 = 0.85;
/// Default PageRank L1 convergence tolerance.
pub const DEFAULT_PAGERANK_TOL: f64 = 1e-10;
const PAGERANK_MAX_ITERS: usize = 100_000;

fn same_size(a: &InfectionNetwork, b: &InfectionNetwork) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "network size",
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

fn offdiag(g: &InfectionNetwork) -> impl Iterator<Item = f64> + '_ {
    g.matrix()
        .indexed_iter()
        .filter(|((a, b), _)| a != b)
        .map(|(_, &x)| x)
        .collect::<Vec<_>>()
        .into_iter()
}

/// Cosine of the angle between the off-diagonal entries of two networks.
pub fn cosine_similarity(g: &InfectionNetwork, g_ref: &InfectionNetwork) -> Result<f64> {
    same_size(g, g_ref)?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (a, b) in offdiag(g).zip(offdiag(g_ref)) {
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNetwork);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0))
}

/// Mean of `|pred - actual| / actual` over entries with `actual > 0`.
pub fn mape(predicted: ArrayView2<'_, f64>, actual: ArrayView2<'_, f64>) -> Result<f64> {
    if predicted.dim() != actual.dim() {
        return Err(Error::DimensionMismatch {
            what: "prediction rows",
            expected: actual.nrows(),
            found: predicted.nrows(),
        });
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (p, a) in predicted.iter().zip(actual.iter()) {
        if *a > 0.0 {
            sum += (p - a).abs() / a;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::AllZeroActuals);
    }
    Ok(sum / count as f64)
}

/// Predicted counts for days `from_day + 1 ..= from_day + delta` (1-based),
/// using only the first `from_day` observed days and the network
/// `alpha_adj * g`. Row `k` of the result is day `from_day + k + 1`.
pub fn rollout_predict(
    g: &InfectionNetwork,
    alpha_adj: f64,
    series: &OutbreakSeries,
    pop: &Metapopulation,
    from_day: usize,
    delta: usize,
) -> Result<Array2<f64>> {
    if from_day == 0 || delta == 0 {
        return Err(Error::InvalidArgument(format!(
            "rollout needs from_day >= 1 and delta >= 1, got {from_day} and {delta}"
        )));
    }
    let scaled = g.scaled(alpha_adj)?;
    let sim = simulate_outbreak(&scaled, pop, &series.prefix(from_day)?, delta)?;
    Ok(sim.series.deltas().slice(ndarray::s![from_day.., ..]).to_owned())
}

/// Rollout error per horizon, pooled over start days.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport {
    /// Horizons in days, ascending.
    pub horizons: Vec<usize>,
    /// MAPE at each horizon.
    pub horizon_mape: Vec<f64>,
    /// `horizons x N` per-zone MAPE; `None` where a zone had no cases on any
    /// target day.
    pub per_zone: Vec<Vec<Option<f64>>>,
    /// Start days used (1-based count of observed days).
    pub start_days: Vec<usize>,
}

/// For every start day `T0` and horizon `d`, predicts day `T0 + d` from the
/// first `T0` days and scores it against the observation. Start days whose
/// target falls past the end of the series are skipped for that horizon.
pub fn prediction_report(
    g: &InfectionNetwork,
    alpha_adj: f64,
    series: &OutbreakSeries,
    pop: &Metapopulation,
    start_days: &[usize],
    horizons: &[usize],
) -> Result<PredictionReport> {
    let mut horizons = horizons.to_vec();
    horizons.sort_unstable();
    horizons.dedup();
    let max_h = *horizons
        .last()
        .ok_or_else(|| Error::InvalidArgument("no horizons".into()))?;
    if horizons[0] == 0 {
        return Err(Error::InvalidArgument("horizon 0".into()));
    }
    let n = pop.len();
    let t_len = series.days();
    let actual = series.deltas();
    let mut preds: Vec<Vec<f64>> = vec![Vec::new(); horizons.len()];
    let mut obs: Vec<Vec<f64>> = vec![Vec::new(); horizons.len()];
    for &t0 in start_days {
        if t0 == 0 || t0 >= t_len {
            continue;
        }
        let steps = max_h.min(t_len - t0);
        let roll = rollout_predict(g, alpha_adj, series, pop, t0, steps)?;
        for (hi, &h) in horizons.iter().enumerate() {
            if h <= steps {
                preds[hi].extend(roll.row(h - 1).iter());
                obs[hi].extend(actual.row(t0 + h - 1).iter());
            }
        }
    }
    let mut horizon_mape = Vec::with_capacity(horizons.len());
    let mut per_zone = Vec::with_capacity(horizons.len());
    for (p, a) in preds.iter().zip(&obs) {
        let rows = p.len() / n.max(1);
        let pm = ArrayView2::from_shape((rows, n), p).expect("rows of N");
        let am = ArrayView2::from_shape((rows, n), a).expect("rows of N");
        horizon_mape.push(mape(pm, am)?);
        per_zone.push(
            (0..n)
                .map(|k| mape(pm.slice(ndarray::s![.., k..=k]), am.slice(ndarray::s![.., k..=k])).ok())
                .collect(),
        );
    }
    Ok(PredictionReport {
        horizons,
        horizon_mape,
        per_zone,
        start_days: start_days.to_vec(),
    })
}

/// Citywide infectious curves from the comparison of three models against
/// the observation. Each curve holds `sum_n i_n(t)` for every day.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonCurves {
    pub actual: Vec<f64>,
    pub d2pri: Vec<f64>,
    pub basic: Vec<f64>,
    pub sir: Vec<f64>,
    /// Rate adjustments fitted on the warmup window.
    pub alpha_d2pri: f64,
    pub alpha_basic: f64,
    pub alpha_sir: f64,
}

/// Fits the rate adjustment on the first `warmup` days, or 0 when the window
/// carries no infection pressure.
fn warmup_alpha(g: &InfectionNetwork, series: &OutbreakSeries, pop: &Metapopulation, warmup: usize) -> Result<f64> {
    let states = states_from_deltas(&series.prefix(warmup)?, pop)?;
    match fit_alpha_adjustment(g, &states) {
        Err(Error::NoSignal) => Ok(0.0),
        other => other,
    }
}

fn rolled_curve(
    g: &InfectionNetwork,
    alpha: f64,
    series: &OutbreakSeries,
    pop: &Metapopulation,
    warmup: usize,
) -> Result<Vec<f64>> {
    let sim = simulate_outbreak(&g.scaled(alpha)?, pop, &series.prefix(warmup)?, series.days() - warmup)?;
    infectious_curve(&sim.series, pop)
}

/// The whole metapopulation as a single well-mixed population, with the
/// series summed over zones.
pub fn aggregate(series: &OutbreakSeries, pop: &Metapopulation) -> Result<(OutbreakSeries, Metapopulation)> {
    pop.check_len("series zones", series.zones())?;
    let one = Metapopulation::new(vec![Zone::new("all", pop.total_population())])?;
    let totals = series.totals();
    let deltas = Array2::from_shape_vec((totals.len(), 1), totals).expect("one column");
    let agg = OutbreakSeries::new(deltas, series.dates().to_vec(), series.beta(), &one)?;
    Ok((agg, one))
}

/// Simulates the outbreak from its first `warmup` days under the D2PRI
/// network, the Basic network, and a single-population SIR model, each with
/// its rate refitted on the warmup window.
pub fn simulate_comparison(
    g_d2pri: &InfectionNetwork,
    g_basic: &InfectionNetwork,
    series: &OutbreakSeries,
    pop: &Metapopulation,
    warmup: usize,
) -> Result<ComparisonCurves> {
    if warmup == 0 || warmup >= series.days() {
        return Err(Error::InvalidArgument(format!(
            "warmup {warmup} must be within 1..{}",
            series.days()
        )));
    }
    same_size(g_d2pri, g_basic)?;
    pop.check_len("network zones", g_d2pri.len())?;
    let alpha_d2pri = warmup_alpha(g_d2pri, series, pop, warmup)?;
    let alpha_basic = warmup_alpha(g_basic, series, pop, warmup)?;
    let (agg, one) = aggregate(series, pop)?;
    let unit = InfectionNetwork::new(Array2::ones((1, 1)))?;
    let alpha_sir = warmup_alpha(&unit, &agg, &one, warmup)?;
    Ok(ComparisonCurves {
        actual: infectious_curve(series, pop)?,
        d2pri: rolled_curve(g_d2pri, alpha_d2pri, series, pop, warmup)?,
        basic: rolled_curve(g_basic, alpha_basic, series, pop, warmup)?,
        sir: rolled_curve(&unit, alpha_sir, &agg, &one, warmup)?,
        alpha_d2pri,
        alpha_basic,
        alpha_sir,
    })
}

/// Index and height of the first maximum of a curve.
pub fn peak(curve: &[f64]) -> Option<(usize, f64)> {
    curve
        .iter()
        .copied()
        .enumerate()
        .fold(None, |best, (t, x)| match best {
            Some((_, b)) if b >= x => best,
            _ => Some((t, x)),
        })
}

/// Log-binned degree histogram with a least-squares power-law fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeDistribution {
    /// `n_bins + 1` logarithmically spaced bin edges.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// `count / (zones with positive degree * bin width)`.
    pub density: Vec<f64>,
    /// `k` in `p(x) ~ x^-k`, from a fit over non-empty bins.
    pub exponent: f64,
    /// Root mean square of the fit residuals in `log10` density.
    pub residual_rms: f64,
    pub nonempty_bins: usize,
}

/// Histogram of off-diagonal degrees `sum_{m != n} g_nm` over `n_bins`
/// logarithmic bins between the smallest and largest positive degree.
/// Zones of degree zero are left out.
pub fn degree_distribution(g: &InfectionNetwork, n_bins: usize) -> Result<DegreeDistribution> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be positive".into()));
    }
    let degrees: Vec<f64> = g.out_degrees().into_iter().filter(|&d| d > 0.0).collect();
    if degrees.is_empty() {
        return Err(Error::ZeroNetwork);
    }
    let lo = degrees.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = degrees.iter().copied().fold(0.0, f64::max);
    // Relative spread below rounding: every zone has the same degree.
    if hi <= lo * (1.0 + 1e-12) {
        return Err(Error::InsufficientSupport { nonempty: 1 });
    }
    let (llo, lhi) = (lo.log10(), hi.log10());
    let step = (lhi - llo) / n_bins as f64;
    let bin_edges: Vec<f64> = (0..=n_bins).map(|b| 10f64.powf(llo + step * b as f64)).collect();
    let mut counts = vec![0usize; n_bins];
    for d in &degrees {
        let b = (((d.log10() - llo) / step) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let total = degrees.len() as f64;
    let density: Vec<f64> = counts
        .iter()
        .zip(bin_edges.windows(2))
        .map(|(&c, e)| c as f64 / (total * (e[1] - e[0])))
        .collect();
    // The power law is fitted from the most populated bin upward.
    let mode = (0..n_bins).fold(0, |best, b| if counts[b] > counts[best] { b } else { best });
    let points: Vec<(f64, f64)> = (mode..n_bins)
        .filter(|&b| counts[b] > 0)
        .map(|b| (llo + step * (b as f64 + 0.5), density[b].log10()))
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientSupport {
            nonempty: points.len(),
        });
    }
    let (slope, intercept) = least_squares_line(&points);
    let rss: f64 = points
        .iter()
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(DegreeDistribution {
        bin_edges,
        counts,
        density,
        exponent: -slope,
        residual_rms: (rss / points.len() as f64).sqrt(),
        nonempty_bins: points.len(),
    })
}

/// Ordinary least-squares `(slope, intercept)`.
pub(crate) fn least_squares_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// PageRank by power iteration on the column-stochastic normalization of
/// the off-diagonal part of `g`, with uniform teleportation. Zones with no
/// links spread their score uniformly.
pub fn pagerank_importance(g: &InfectionNetwork, damping: f64, tol: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&damping) {
        return Err(Error::InvalidArgument(format!("damping {damping}")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {tol}")));
    }
    let n = g.len();
    if n == 0 || g.matrix().iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroNetwork);
    }
    let m = g.matrix();
    let col_sums = g.out_degrees();
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..PAGERANK_MAX_ITERS {
        let dangling: f64 = (0..n).filter(|&j| col_sums[j] == 0.0).map(|j| rank[j]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        for (i, out) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                if j != i && col_sums[j] > 0.0 {
                    acc += m[(i, j)] / col_sums[j] * rank[j];
                }
            }
            *out = base + damping * acc;
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let diff: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if diff < tol {
            return Ok(rank);
        }
    }
    Err(Error::NoConvergence(PAGERANK_MAX_ITERS))
}

/// Share of all observed infections in each zone.
pub fn infection_count_importance(series: &OutbreakSeries) -> Result<Vec<f64>> {
    let per_zone: Vec<f64> = series.deltas().columns().into_iter().map(|c| c.sum()).collect();
    let total: f64 = per_zone.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroActuals);
    }
    Ok(per_zone.into_iter().map(|x| x / total).collect())
}

/// `metric,horizon,value` rows: overall MAPE, then per-zone MAPE as
/// `mape:<zone_id>` where defined.
pub fn write_prediction_csv<W: Write>(report: &PredictionReport, pop: &Metapopulation, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "horizon", "value"])?;
    for (h, m) in report.horizons.iter().zip(&report.horizon_mape) {
        w.write_record(["mape".to_string(), h.to_string(), fmt_f64(*m)])?;
    }
    for (h, zones) in report.horizons.iter().zip(&report.per_zone) {
        for (id, m) in pop.ids().zip(zones) {
            if let Some(m) = m {
                w.write_record([format!("mape:{id}"), h.to_string(), fmt_f64(*m)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `zone_id,pagerank,infection_share`.
pub fn write_ranking_csv<W: Write>(
    pop: &Metapopulation,
    pagerank: &[f64],
    infections: &[f64],
    writer: W,
) -> Result<()> {
    pop.check_len("pagerank scores", pagerank.len())?;
    pop.check_len("infection scores", infections.len())?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["zone_id", "pagerank", "infection_share"])?;
    for ((id, p), c) in pop.ids().zip(pagerank).zip(infections) {
        w.write_record([id.to_string(), fmt_f64(*p), fmt_f64(*c)])?;
    }
    w.flush()?;
    Ok(())
}

/// `day,actual,d2pri,basic,sir` with the series' own day labels.
pub fn write_curves_csv<W: Write>(curves: &ComparisonCurves, dates: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["day", "actual", "d2pri", "basic", "sir"])?;
    for (t, day) in dates.iter().enumerate().take(curves.actual.len()) {
        w.write_record([
            day.clone(),
            fmt_f64(curves.actual[t]),
            fmt_f64(curves.d2pri[t]),
            fmt_f64(curves.basic[t]),
            fmt_f64(curves.sir[t]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
