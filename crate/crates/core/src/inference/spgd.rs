//! Alternating projected (proximal) gradient descent over the network and
//! the regression weights.
//!
//! Each iteration takes one gradient step on `G` with `w` fixed, projects it
//! onto non-negative symmetric matrices, then takes one projected step on
//! `w` with the new `G` fixed.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objective::{grad_g, grad_w, objective_terms, ObjectiveTerms};
use crate::domain::{symmetrize_in_place, InferenceConfig, InfectionNetwork, StateSeries, StepPolicy};
use crate::error::{Error, Result};
use crate::features::{FeatureTensor, RegressionWeights};

/// Iterations without a new best objective tolerated under a fixed step.
const DIVERGENCE_GUARD: usize = 50;
/// Backtracking halvings before a step is abandoned.
const MAX_BACKTRACKS: usize = 200;

/// Which objective to minimise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Least-squares fit only.
    Basic,
    /// Fit plus the power-law degree prior.
    Plpri,
    /// Fit plus the data prior.
    Datpri,
    /// Fit plus an L1 penalty.
    L1pri,
    /// Fit plus a squared Frobenius penalty.
    L2pri,
    /// Fit plus both the degree and the data priors.
    D2pri,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Basic,
        Variant::Plpri,
        Variant::Datpri,
        Variant::L1pri,
        Variant::L2pri,
        Variant::D2pri,
    ];

    pub fn needs_features(self) -> bool {
        matches!(self, Variant::Datpri | Variant::D2pri)
    }

    /// Copy of `cfg` with every weight this variant does not use set to 0.
    pub fn restrict(self, cfg: &InferenceConfig) -> InferenceConfig {
        let mut out = cfg.clone();
        let (lambda, data, l1, l2) = match self {
            Variant::Basic => (false, false, false, false),
            Variant::Plpri => (true, false, false, false),
            Variant::Datpri => (false, true, false, false),
            Variant::L1pri => (false, false, true, false),
            Variant::L2pri => (false, false, false, true),
            Variant::D2pri => (true, true, false, false),
        };
        if !lambda {
            out.lambda = 0.0;
        }
        if !data {
            out.eta = 0.0;
            out.mu = 0.0;
        }
        if !l1 {
            out.l1 = 0.0;
        }
        if !l2 {
            out.l2 = 0.0;
        }
        out
    }

    /// Names of the weights in `cfg` that are non-zero but unused by this
    /// variant.
    pub fn unused_weights(self, cfg: &InferenceConfig) -> Vec<&'static str> {
        let r = self.restrict(cfg);
        let mut out = Vec::new();
        for (name, given, kept) in [
            ("lambda", cfg.lambda, r.lambda),
            ("eta", cfg.eta, r.eta),
            ("mu", cfg.mu, r.mu),
            ("l1", cfg.l1, r.l1),
            ("l2", cfg.l2, r.l2),
        ] {
            if given != 0.0 && kept == 0.0 {
                out.push(name);
            }
        }
        out
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::Plpri => "plpri",
            Variant::Datpri => "datpri",
            Variant::L1pri => "l1pri",
            Variant::L2pri => "l2pri",
            Variant::D2pri => "d2pri",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub network: InfectionNetwork,
    pub weights: Option<RegressionWeights>,
    /// Objective before the first iteration followed by one value per
    /// iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Optional warm start for [`spgd_infer_from`].
#[derive(Debug, Clone, Copy, Default)]
pub struct WarmStart<'a> {
    pub network: Option<&'a InfectionNetwork>,
    pub weights: Option<&'a [f64]>,
}

/// Infers the network with a random positive start. See [`spgd_infer_from`].
pub fn spgd_infer(
    states: &StateSeries,
    x: Option<&FeatureTensor>,
    cfg: &InferenceConfig,
    variant: Variant,
) -> Result<InferenceResult> {
    spgd_infer_from(states, x, cfg, variant, WarmStart::default())
}

/// Upper bound of the uniform initial edge weights when the config leaves
/// it open: twice the level at which a constant network would match the mean
/// incidence, `sum u / sum v`, spread over `N` zones.
fn auto_init_bound(states: &StateSeries) -> f64 {
    let su: f64 = states.u.sum();
    let sv: f64 = states.v.sum();
    let n = states.zones() as f64;
    let scale = if sv > 0.0 && su > 0.0 { 2.0 * su / sv } else { 1.0 };
    scale / n
}

/// Runs the optimizer. Weights in `cfg` that `variant` does not use are
/// ignored (treated as zero).
///
/// Initial `G` entries are drawn i.i.d. uniform on `(0, b]`, where
/// `b = init_scale / N` (or a data-derived bound when `init_scale` is unset),
/// and symmetrized by mirroring the upper triangle. Weights start uniform on
/// the same interval. The draws for `G` come first, so variants with and
/// without weights share the same initial network for the same seed.
pub fn spgd_infer_from(
    states: &StateSeries,
    x: Option<&FeatureTensor>,
    cfg: &InferenceConfig,
    variant: Variant,
    warm: WarmStart<'_>,
) -> Result<InferenceResult> {
    cfg.validate()?;
    if states.days() == 0 {
        return Err(Error::InvalidArgument("empty state series".into()));
    }
    let cfg = variant.restrict(cfg);
    let x = if variant.needs_features() {
        Some(x.ok_or(Error::MissingFeatures)?)
    } else {
        None
    };
    let n = states.zones();
    if let Some(x) = x {
        if x.zones() != n {
            return Err(Error::DimensionMismatch {
                what: "feature tensor zones",
                expected: n,
                found: x.zones(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = cfg.init_scale.map_or_else(|| auto_init_bound(states), |s| s / n as f64);
    let mut draw = move || bound * (1.0 - rng.random::<f64>());
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let val = draw();
            g[(i, j)] = val;
            g[(j, i)] = val;
        }
    }
    if let Some(init) = warm.network {
        if init.len() != n {
            return Err(Error::DimensionMismatch {
                what: "initial network",
                expected: n,
                found: init.len(),
            });
        }
        g.assign(&init.matrix());
    }
    let mut w: Option<Vec<f64>> = x.map(|x| (0..x.len()).map(|_| draw()).collect());
    if let (Some(w), Some(init)) = (w.as_mut(), warm.weights) {
        if init.len() != w.len() {
            return Err(Error::DimensionMismatch {
                what: "initial weights",
                expected: w.len(),
                found: init.len(),
            });
        }
        RegressionWeights::new(init.to_vec())?;
        w.copy_from_slice(init);
    }

    let mut opt = Optimizer::new(states, x, &cfg);
    let mut terms = objective_terms(g.view(), w.as_deref(), states, x, &cfg)?;
    let mut trace = vec![terms.total()];
    // Objective changes below rounding of the signal energy count as none.
    let floor = f64::EPSILON * states.u.iter().map(|x| x * x).sum::<f64>();
    let mut converged = false;
    let mut best = terms.total();
    let mut stalled = 0;

    for _ in 0..cfg.max_iters {
        let prev = terms.total();
        terms = opt.step_network(&mut g, w.as_deref(), terms)?;
        if let (Some(wv), Some(xt)) = (w.as_mut(), x) {
            terms = opt.step_weights(g.view(), wv, xt, terms)?;
        }
        let cur = terms.total();
        trace.push(cur);
        if !cur.is_finite() {
            return Err(Error::Diverged { trace });
        }
        if cur < best {
            best = cur;
            stalled = 0;
        } else if cur > prev || stalled > 0 {
            stalled += 1;
            if stalled >= DIVERGENCE_GUARD {
                return Err(Error::Diverged { trace });
            }
        }
        if (prev - cur).abs() <= cfg.tol * prev.abs().max(cur.abs()).max(floor) {
            converged = true;
            break;
        }
    }

    let network = InfectionNetwork::new(g)?;
    let weights = w.map(RegressionWeights::new).transpose()?;
    Ok(InferenceResult {
        network,
        weights,
        iterations: trace.len() - 1,
        objective_trace: trace,
        converged,
    })
}

/// Step-size and momentum state for the two blocks.
struct Optimizer<'a> {
    states: &'a StateSeries,
    x: Option<&'a FeatureTensor>,
    cfg: &'a InferenceConfig,
    g_step: f64,
    w_step: f64,
    /// Previous network iterate and extrapolation counter.
    prev: Option<Array2<f64>>,
    t_mom: f64,
    /// Per-entry step scaling of the network block.
    scale: Array2<f64>,
}

/// Inverse diagonal of the Hessian of the quadratic terms with respect to
/// the free parameters of a symmetric network (one per unordered pair).
/// Entries whose curvature vanishes get the smallest nonzero scale.
fn jacobi_scale(states: &StateSeries, cfg: &InferenceConfig) -> Array2<f64> {
    let energy: Vec<f64> = states
        .v
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|x| x * x).sum())
        .collect();
    let n = energy.len();
    let ridge = cfg.eta + cfg.l2;
    let mut curv = Array2::from_shape_fn((n, n), |(a, b)| {
        if a == b {
            2.0 * (energy[a] + ridge)
        } else {
            2.0 * (energy[a] + energy[b]) + 4.0 * ridge
        }
    });
    let max = curv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Array2::ones((n, n));
    }
    curv.mapv_inplace(|c| if c > 0.0 { max / c } else { f64::NAN });
    let cap = curv.iter().copied().filter(|x| !x.is_nan()).fold(0.0, f64::max);
    curv.mapv_inplace(|x| if x.is_nan() { cap } else { x });
    curv
}

impl<'a> Optimizer<'a> {
    fn new(states: &'a StateSeries, x: Option<&'a FeatureTensor>, cfg: &'a InferenceConfig) -> Self {
        let first = match cfg.step_policy {
            StepPolicy::Fixed { step } => step,
            StepPolicy::Backtracking { init, .. } => init,
        };
        Self {
            states,
            x,
            cfg,
            g_step: first,
            w_step: first,
            prev: None,
            t_mom: 1.0,
            scale: if cfg.precondition {
                jacobi_scale(states, cfg)
            } else {
                Array2::ones((states.zones(), states.zones()))
            },
        }
    }

    /// Scaled proximal map of `l1 ||.||_1` plus the feasible-set indicator,
    /// followed by symmetrization.
    fn prox_network(&self, g: &Array2<f64>, grad: &Array2<f64>, step: f64) -> Array2<f64> {
        let l1 = self.cfg.l1;
        let mut next = Array2::zeros(g.raw_dim());
        Zip::from(&mut next)
            .and(g)
            .and(grad)
            .and(&self.scale)
            .for_each(|out, &gi, &di, &si| *out = (gi - step * si * (di + l1)).max(0.0));
        symmetrize_in_place(&mut next);
        next
    }

    fn terms(&self, g: &Array2<f64>, w: Option<&[f64]>) -> Result<ObjectiveTerms> {
        objective_terms(g.view(), w, self.states, self.x, self.cfg)
    }

    fn step_network(
        &mut self,
        g: &mut Array2<f64>,
        w: Option<&[f64]>,
        terms: ObjectiveTerms,
    ) -> Result<ObjectiveTerms> {
        match self.cfg.step_policy {
            StepPolicy::Fixed { step } => {
                let grad = grad_g(g.view(), w, self.states, self.x, self.cfg)?;
                *g = self.prox_network(g, &grad, step);
                self.terms(g, w)
            }
            StepPolicy::Backtracking { init, shrink, c } => {
                let old = g.clone();
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * self.t_mom * self.t_mom).sqrt());
                if self.cfg.momentum && self.t_mom > 1.0 {
                    if let Some(next) = self.extrapolated_step(g, w, terms, (self.t_mom - 1.0) / t_next, init, shrink) {
                        self.prev = Some(old);
                        self.t_mom = t_next;
                        return Ok(next);
                    }
                    // Restart the extrapolation from a plain step.
                    self.t_mom = 1.0;
                } else {
                    self.t_mom = t_next;
                }
                let next = self.armijo_step(g, w, terms, init, shrink, c)?;
                self.prev = Some(old);
                Ok(next)
            }
        }
    }

    /// Backtracking proximal step from `g` along the Armijo rule
    /// `F(new) <= F(g) + c (<grad, new - g> + h(new) - h(g))`.
    fn armijo_step(
        &mut self,
        g: &mut Array2<f64>,
        w: Option<&[f64]>,
        terms: ObjectiveTerms,
        init: f64,
        shrink: f64,
        c: f64,
    ) -> Result<ObjectiveTerms> {
        let grad = grad_g(g.view(), w, self.states, self.x, self.cfg)?;
        let before = terms.total();
        let mut step = self.g_step;
        for _ in 0..MAX_BACKTRACKS {
            let cand = self.prox_network(g, &grad, step);
            let mut lin = 0.0;
            let mut moved = false;
            Zip::from(&cand).and(&*g).and(&grad).for_each(|&a, &b, &d| {
                lin += d * (a - b);
                moved |= a != b;
            });
            if !moved {
                self.g_step = (step / shrink).min(init);
                return Ok(terms);
            }
            lin += terms_l1_delta(&cand.view(), &g.view(), self.cfg.l1);
            if let Ok(next) = self.terms(&cand, w) {
                if next.total() <= before + c * lin {
                    *g = cand;
                    self.g_step = (step / shrink).min(init);
                    return Ok(next);
                }
            }
            step *= shrink;
        }
        self.g_step = step;
        Ok(terms)
    }

    /// Proximal step from the extrapolated point
    /// `y = max(0, g + b (g - g_prev))`, accepted only if it lowers the
    /// objective below its value at `g`. The step size backtracks on the
    /// quadratic upper bound of the smooth part around `y`.
    fn extrapolated_step(
        &mut self,
        g: &mut Array2<f64>,
        w: Option<&[f64]>,
        terms: ObjectiveTerms,
        b: f64,
        init: f64,
        shrink: f64,
    ) -> Option<ObjectiveTerms> {
        let prev = self.prev.as_ref()?;
        let mut y = g.clone();
        Zip::from(&mut y)
            .and(prev)
            .for_each(|yi, &pi| *yi = (*yi + b * (*yi - pi)).max(0.0));
        let ty = self.terms(&y, w).ok()?;
        let grad = grad_g(y.view(), w, self.states, self.x, self.cfg).ok()?;
        let smooth_y = ty.total() - ty.l1;
        let mut step = self.g_step;
        for _ in 0..MAX_BACKTRACKS {
            let cand = self.prox_network(&y, &grad, step);
            let (mut lin, mut sq) = (0.0, 0.0);
            Zip::from(&cand)
                .and(&y)
                .and(&grad)
                .and(&self.scale)
                .for_each(|&a, &b, &d, &si| {
                    lin += d * (a - b);
                    sq += (a - b) * (a - b) / si;
                });
            if let Ok(next) = self.terms(&cand, w) {
                if next.total() - next.l1 <= smooth_y + lin + sq / (2.0 * step) {
                    self.g_step = (step / shrink).min(init);
                    if next.total() < terms.total() {
                        *g = cand;
                        return Some(next);
                    }
                    return None;
                }
            }
            step *= shrink;
        }
        None
    }

    fn step_weights(
        &mut self,
        g: ArrayView2<'_, f64>,
        w: &mut [f64],
        x: &FeatureTensor,
        terms: ObjectiveTerms,
    ) -> Result<ObjectiveTerms> {
        let grad = grad_w(g, w, x, self.cfg)?;
        let project = |step: f64| -> Vec<f64> {
            w.iter()
                .zip(&grad)
                .map(|(wk, dk)| (wk - step * dk).max(0.0))
                .collect()
        };
        let with = |cand: &[f64]| -> Result<ObjectiveTerms> {
            let mut t = terms;
            t.data_terms(&g, Some(cand), Some(x), self.cfg)?;
            Ok(t)
        };
        match self.cfg.step_policy {
            StepPolicy::Fixed { step } => {
                let cand = project(step);
                let t = with(&cand)?;
                w.copy_from_slice(&cand);
                Ok(t)
            }
            StepPolicy::Backtracking { init, shrink, c } => {
                let before = terms.total();
                let mut step = self.w_step;
                for _ in 0..MAX_BACKTRACKS {
                    let cand = project(step);
                    if cand == w {
                        self.w_step = (step / shrink).min(init);
                        return Ok(terms);
                    }
                    let lin: f64 = cand
                        .iter()
                        .zip(w.iter())
                        .zip(&grad)
                        .map(|((a, b), d)| d * (a - b))
                        .sum();
                    let next = with(&cand)?;
                    if next.total() <= before + c * lin {
                        w.copy_from_slice(&cand);
                        self.w_step = (step / shrink).min(init);
                        return Ok(next);
                    }
                    step *= shrink;
                }
                self.w_step = step;
                Ok(terms)
            }
        }
    }
}

fn terms_l1_delta(cand: &ArrayView2<'_, f64>, cur: &ArrayView2<'_, f64>, l1: f64) -> f64 {
    if l1 == 0.0 {
        return 0.0;
    }
    l1 * (cand.iter().map(|x| x.abs()).sum::<f64>() - cur.iter().map(|x| x.abs()).sum::<f64>())
}

/// Least-squares rescaling of a reference network to new data:
/// `argmin_a sum_t ||u(t) - a G v(t)||^2`, clipped at zero.
pub fn fit_alpha_adjustment(g_ref: &InfectionNetwork, states: &StateSeries) -> Result<f64> {
    if g_ref.len() != states.zones() {
        return Err(Error::DimensionMismatch {
            what: "network size vs. state zones",
            expected: states.zones(),
            found: g_ref.len(),
        });
    }
    if states.days() == 0 {
        return Err(Error::InvalidArgument("empty state series".into()));
    }
    let pred = states.v.dot(&g_ref.matrix().t());
    let num: f64 = pred.iter().zip(states.u.iter()).map(|(p, u)| p * u).sum();
    let den: f64 = pred.iter().map(|p| p * p).sum();
    if den == 0.0 {
        return Err(Error::NoSignal);
    }
    Ok((num / den).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn variant_parsing_and_restriction() {
        assert_eq!("D2PRI".parse::<Variant>().unwrap(), Variant::D2pri);
        assert!("arima".parse::<Variant>().is_err());
        let cfg = InferenceConfig {
            lambda: 1.0,
            eta: 2.0,
            mu: 3.0,
            l1: 4.0,
            l2: 5.0,
            ..Default::default()
        };
        let r = Variant::Plpri.restrict(&cfg);
        assert_eq!((r.lambda, r.eta, r.mu, r.l1, r.l2), (1.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(Variant::Basic.unused_weights(&cfg).len(), 5);
        assert_eq!(Variant::D2pri.unused_weights(&cfg), vec!["l1", "l2"]);
    }

    #[test]
    fn alpha_adjustment_exact_scale() {
        let g = InfectionNetwork::new(array![[0.2, 0.1], [0.1, 0.3]]).unwrap();
        let v = array![[1.0, 2.0], [0.5, 4.0], [3.0, 0.0]];
        let u = v.dot(&g.matrix().t()) * 1.75;
        let st = StateSeries::new(u, v).unwrap();
        assert!((fit_alpha_adjustment(&g, &st).unwrap() - 1.75).abs() < 1e-12);
    }

    #[test]
    fn alpha_adjustment_orthogonal_and_no_signal() {
        let g = InfectionNetwork::new(array![[1.0, 0.0], [0.0, 0.0]]).unwrap();
        // G v(t) = (v_0, 0); u only has mass in zone 1.
        let st = StateSeries::new(array![[0.0, 0.5]], array![[2.0, 1.0]]).unwrap();
        assert_eq!(fit_alpha_adjustment(&g, &st).unwrap(), 0.0);
        let st = StateSeries::new(array![[0.0, 0.5]], array![[0.0, 1.0]]).unwrap();
        assert!(matches!(fit_alpha_adjustment(&g, &st), Err(Error::NoSignal)));
    }

    #[test]
    fn data_variants_require_features() {
        let st = StateSeries::new(array![[0.1]], array![[1.0]]).unwrap();
        let cfg = InferenceConfig {
            eta: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            spgd_infer(&st, None, &cfg, Variant::D2pri),
            Err(Error::MissingFeatures)
        ));
    }

    #[test]
    fn fixed_step_divergence_is_reported() {
        let v = array![[10.0, 1.0], [3.0, 8.0], [5.0, 5.0]];
        let st = StateSeries::new(v.clone() * 0.01, v).unwrap();
        let cfg = InferenceConfig {
            step_policy: StepPolicy::Fixed { step: 10.0 },
            max_iters: 500,
            ..Default::default()
        };
        match spgd_infer(&st, None, &cfg, Variant::Basic) {
            Err(Error::Diverged { trace }) => assert!(trace.len() > 2),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
