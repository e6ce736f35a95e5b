//! Forward epidemic dynamics.
//!
//! Two views of the same process live here. The continuous SIR equations
//! (single population and metapopulation) are stepped with explicit Euler.
//! The discrete daily network recursion works on the incidence rate `u` and
//! the recovery-discounted infectious count `v`:
//!
//! ```text
//! u_n(t) = sum_m g_nm v_m(t)
//! delta_n(t) = u_n(t) * s_n(t)
//! s_n(t+1) = s_n(t) - delta_n(t)
//! v_n(t+1) = (1 - beta) v_n(t) + delta_n(t)
//! ```
//!
//! Both [`states_from_deltas`] and [`simulate_outbreak`] advance the same
//! per-zone ledger, so a noise-free series generated by the recursion maps
//! back onto its states with no drift.

use ndarray::{Array2, ArrayView2};

use crate::domain::{InfectionNetwork, Metapopulation, MobilityVolumes, OutbreakSeries, StateSeries};
use crate::error::{Error, Result};

/// Default Euler step for the continuous models, in days.
pub const DEFAULT_DT: f64 = 0.1;

/// Compartment sizes per zone.
#[derive(Debug, Clone, PartialEq)]
pub struct SirState {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl SirState {
    pub fn new(s: Vec<f64>, i: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if s.len() != i.len() || s.len() != r.len() {
            return Err(Error::DimensionMismatch {
                what: "SIR compartments",
                expected: s.len(),
                found: if i.len() != s.len() { i.len() } else { r.len() },
            });
        }
        for x in s.iter().chain(&i).chain(&r) {
            if !(x.is_finite() && *x >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "compartment size {x} must be finite and non-negative"
                )));
            }
        }
        Ok(Self { s, i, r })
    }

    pub fn single(s: f64, i: f64, r: f64) -> Result<Self> {
        Self::new(vec![s], vec![i], vec![r])
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Largest `|s + i + r - P| / P` over zones.
    pub fn conservation_error(&self, populations: &[f64]) -> f64 {
        populations
            .iter()
            .enumerate()
            .map(|(n, &p)| ((self.s[n] + self.i[n] + self.r[n]) - p).abs() / p)
            .fold(0.0, f64::max)
    }
}

fn check_rates(alpha: f64, beta: f64, dt: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("infection rate {alpha}")));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("recovery rate {beta}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt}")));
    }
    Ok(())
}

/// Applies one Euler step given per-zone infection pressure (`alpha * force`).
fn euler_step(state: &SirState, pressure: &[f64], beta: f64, dt: f64) -> SirState {
    let n = state.len();
    let mut next = SirState {
        s: Vec::with_capacity(n),
        i: Vec::with_capacity(n),
        r: Vec::with_capacity(n),
    };
    for (k, &force) in pressure.iter().enumerate().take(n) {
        let (s, i, r) = (state.s[k], state.i[k], state.r[k]);
        let infections = (force * s * dt).min(s);
        let recoveries = (beta * i * dt).min(i);
        next.s.push(s - infections);
        next.i.push(i + infections - recoveries);
        next.r.push(r + recoveries);
    }
    next
}

/// One Euler step of the single-population SIR model.
///
/// New infections are capped at `s` so no compartment goes negative.
pub fn step_single_sir(state: &SirState, alpha: f64, beta: f64, dt: f64) -> Result<SirState> {
    if state.len() != 1 {
        return Err(Error::DimensionMismatch {
            what: "single-population state",
            expected: 1,
            found: state.len(),
        });
    }
    SirState::new(state.s.clone(), state.i.clone(), state.r.clone())?;
    check_rates(alpha, beta, dt)?;
    Ok(euler_step(state, &[alpha * state.i[0]], beta, dt))
}

/// One Euler step of the metapopulation SIR model, where zone `n` feels
/// `alpha * sum_m (h_mn / P_m + h_nm / P_n) i_m`.
pub fn step_metapop_sir(
    state: &SirState,
    h: &MobilityVolumes,
    pop: &Metapopulation,
    alpha: f64,
    beta: f64,
    dt: f64,
) -> Result<SirState> {
    pop.check_len("SIR state zones", state.len())?;
    pop.check_len("mobility zones", h.len())?;
    SirState::new(state.s.clone(), state.i.clone(), state.r.clone())?;
    check_rates(alpha, beta, dt)?;
    let p = pop.populations();
    let hm = h.matrix();
    let pressure: Vec<f64> = (0..p.len())
        .map(|n| {
            let force: f64 = (0..p.len())
                .map(|m| (hm[(m, n)] / p[m] + hm[(n, m)] / p[n]) * state.i[m])
                .sum();
            alpha * force
        })
        .collect();
    Ok(euler_step(state, &pressure, beta, dt))
}

/// Integrates `days` days with Euler steps of `dt` (which must divide one day)
/// and returns the state at every whole day, starting with `initial`.
pub fn integrate_daily<F>(initial: &SirState, days: usize, dt: f64, mut step: F) -> Result<Vec<SirState>>
where
    F: FnMut(&SirState, f64) -> Result<SirState>,
{
    let per_day = (1.0 / dt).round();
    if dt.is_nan() || dt <= 0.0 || per_day < 1.0 || (per_day * dt - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "time step {dt} does not divide one day"
        )));
    }
    let mut out = Vec::with_capacity(days + 1);
    out.push(initial.clone());
    let mut cur = initial.clone();
    for _ in 0..days {
        for _ in 0..per_day as usize {
            cur = step(&cur, dt)?;
        }
        out.push(cur.clone());
    }
    Ok(out)
}

/// Per-zone cumulative infections and discounted infectious counts, advanced
/// one day at a time.
#[derive(Debug, Clone)]
pub(crate) struct ZoneLedger {
    cumulative: Vec<f64>,
    infectious: Vec<f64>,
    keep: f64,
}

impl ZoneLedger {
    pub(crate) fn new(zones: usize, beta: f64) -> Self {
        Self {
            cumulative: vec![0.0; zones],
            infectious: vec![0.0; zones],
            keep: 1.0 - beta,
        }
    }

    /// Susceptibles before today's infections: `P_n - sum_{t < today} delta_n(t)`.
    pub(crate) fn susceptible(&self, n: usize, population: f64) -> f64 {
        population - self.cumulative[n]
    }

    /// `v_n(today) = sum_{t < today} (1 - beta)^(today - t - 1) delta_n(t)`.
    pub(crate) fn infectious(&self) -> &[f64] {
        &self.infectious
    }

    pub(crate) fn advance<'a>(&mut self, deltas: impl IntoIterator<Item = &'a f64>) {
        for (n, &d) in deltas.into_iter().enumerate() {
            self.infectious[n] = self.keep * self.infectious[n] + d;
            self.cumulative[n] += d;
        }
    }
}

/// Incidence rates and effective infectious counts from daily case counts.
pub fn states_from_deltas(series: &OutbreakSeries, pop: &Metapopulation) -> Result<StateSeries> {
    pop.check_len("series zones", series.zones())?;
    let (t_len, n) = series.deltas().dim();
    let p = pop.populations();
    let mut u = Array2::zeros((t_len, n));
    let mut v = Array2::zeros((t_len, n));
    let mut ledger = ZoneLedger::new(n, series.beta());
    for (t, row) in series.deltas().rows().into_iter().enumerate() {
        for k in 0..n {
            let denom = ledger.susceptible(k, p[k]);
            if denom <= 0.0 {
                return Err(Error::ExhaustedPopulation { zone: k, day: t });
            }
            u[(t, k)] = (row[k] / denom).min(1.0);
            v[(t, k)] = ledger.infectious()[k];
        }
        ledger.advance(row.iter());
    }
    StateSeries::new(u, v)
}

/// SIR compartments on day `at` (1-based) rebuilt from the incidence history:
/// `s = P * prod_{t < at} (1 - u(t))`, `i = v(at)`, `r = P - s - i`.
pub fn reconstruct_sir(series: &OutbreakSeries, pop: &Metapopulation, at: usize) -> Result<SirState> {
    if at == 0 || at > series.days() {
        return Err(Error::InvalidArgument(format!(
            "day {at} outside 1..={}",
            series.days()
        )));
    }
    let states = states_from_deltas(&series.prefix(at)?, pop)?;
    let n = pop.len();
    let mut s = Vec::with_capacity(n);
    let mut i = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for k in 0..n {
        let p = pop.population(k);
        let sk = p * states.u.column(k).iter().take(at - 1).map(|u| 1.0 - u).product::<f64>();
        let ik = states.v[(at - 1, k)];
        // r is a difference of nearly equal numbers; rounding can dip below 0.
        let rk = (p - sk - ik).max(0.0);
        s.push(sk.max(0.0));
        i.push(ik);
        r.push(rk);
    }
    SirState::new(s, i, r)
}

/// Clamping applied to `u` during a simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClampEvents {
    /// Entries where `u` exceeded 1 and was cut to 1.
    pub above_one: usize,
    /// Entries where `u` was negative and was raised to 0.
    pub below_zero: usize,
}

impl ClampEvents {
    pub fn total(&self) -> usize {
        self.above_one + self.below_zero
    }
}

/// Output of [`simulate_outbreak`]: the prefix followed by simulated days.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub series: OutbreakSeries,
    pub clamps: ClampEvents,
}

/// Runs the daily recursion on top of `prefix` for `horizon` more days.
/// `perturb(day, zone, u)` may replace the model incidence `u` before it is
/// clamped to `[0, 1]`.
pub(crate) fn propagate<F>(
    g: ArrayView2<'_, f64>,
    pop: &Metapopulation,
    prefix: &OutbreakSeries,
    horizon: usize,
    mut perturb: F,
) -> Result<Simulation>
where
    F: FnMut(usize, usize, f64) -> f64,
{
    let n = pop.len();
    pop.check_len("network zones", g.nrows())?;
    pop.check_len("prefix zones", prefix.zones())?;
    let p = pop.populations();
    let start = prefix.days();
    let total = start + horizon;
    let mut deltas = Array2::zeros((total, n));
    deltas
        .slice_mut(ndarray::s![..start, ..])
        .assign(&prefix.deltas());
    let mut ledger = ZoneLedger::new(n, prefix.beta());
    for row in prefix.deltas().rows() {
        ledger.advance(row.iter());
    }
    let mut clamps = ClampEvents::default();
    let mut today = vec![0.0; n];
    for t in start..total {
        let v = ledger.infectious();
        for k in 0..n {
            let model: f64 = g.row(k).iter().zip(v).map(|(a, b)| a * b).sum();
            let mut u = perturb(t, k, model);
            if u > 1.0 {
                clamps.above_one += 1;
                u = 1.0;
            } else if u < 0.0 {
                clamps.below_zero += 1;
                u = 0.0;
            }
            today[k] = u * ledger.susceptible(k, p[k]).max(0.0);
        }
        deltas.row_mut(t).assign(&ndarray::aview1(&today));
        ledger.advance(today.iter());
    }
    let mut dates = prefix.dates().to_vec();
    let last = dates.last().cloned().unwrap_or_default();
    let numeric = last.parse::<i64>().ok();
    for k in 1..=horizon {
        dates.push(match numeric {
            Some(d) => (d + k as i64).to_string(),
            None => format!("{last}+{k}"),
        });
    }
    Ok(Simulation {
        series: OutbreakSeries::from_parts_unchecked(deltas, dates, prefix.beta()),
        clamps,
    })
}

/// Extends `prefix` by `horizon` days of the network recursion driven by `g`.
/// The recovery rate is the prefix's own.
pub fn simulate_outbreak(
    g: &InfectionNetwork,
    pop: &Metapopulation,
    prefix: &OutbreakSeries,
    horizon: usize,
) -> Result<Simulation> {
    propagate(g.matrix(), pop, prefix, horizon, |_, _, u| u)
}

/// Daily totals of the effective infectious count, `sum_n v_n(t)`.
pub fn infectious_curve(series: &OutbreakSeries, pop: &Metapopulation) -> Result<Vec<f64>> {
    let states = states_from_deltas(series, pop)?;
    Ok(states.v.rows().into_iter().map(|r| r.sum()).collect())
}
