//! Inference objectives and their gradients.
//!
//! The full objective over a network `G` and regression weights `w` is
//!
//! ```text
//! J = sum_t ||u(t) - G v(t)||^2                      (fit)
//!   + lambda sum_n ln(eps + sum_{m != n} g_nm)       (power-law degree prior)
//!   + eta ||G - X x_k w||_F^2 + mu ||w||^2           (data prior)
//!   + l1 ||G||_1 + l2 ||G||_F^2                      (baseline regularizers)
//! ```
//!
//! Matrices are taken as views so the functions can be probed at arbitrary,
//! even asymmetric, points.

use ndarray::{Array2, ArrayView2};

use crate::domain::{InferenceConfig, StateSeries};
use crate::error::{Error, Result};
use crate::features::{mode_k_product, FeatureTensor};

/// The objective split into its additive pieces.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObjectiveTerms {
    pub fit: f64,
    pub degree: f64,
    pub data: f64,
    pub weight_decay: f64,
    pub l1: f64,
    pub l2: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.fit + self.degree + self.data + self.weight_decay + self.l1 + self.l2
    }
}

fn check_shapes(g: &ArrayView2<'_, f64>, states: &StateSeries) -> Result<()> {
    let n = states.zones();
    if g.nrows() != n || g.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "network size vs. state zones",
            expected: n,
            found: if g.nrows() != n { g.nrows() } else { g.ncols() },
        });
    }
    Ok(())
}

/// `R = V G^T - U`: row `t` holds `G v(t) - u(t)`.
fn residuals(g: &ArrayView2<'_, f64>, states: &StateSeries) -> Array2<f64> {
    let mut r = states.v.dot(&g.t());
    r -= &states.u;
    r
}

/// `sum_t ||u(t) - G v(t)||^2`.
pub fn objective_j1(g: ArrayView2<'_, f64>, states: &StateSeries) -> Result<f64> {
    check_shapes(&g, states)?;
    Ok(residuals(&g, states).iter().map(|x| x * x).sum())
}

pub(crate) fn offdiag_degrees(g: &ArrayView2<'_, f64>) -> Vec<f64> {
    g.rows()
        .into_iter()
        .enumerate()
        .map(|(n, row)| {
            row.iter()
                .enumerate()
                .filter(|&(m, _)| m != n)
                .map(|(_, &x)| x)
                .sum()
        })
        .collect()
}

/// Data-prior residual `G - X x_k w`, when the data prior is in play.
fn regression_residual(
    g: &ArrayView2<'_, f64>,
    w: Option<&[f64]>,
    x: Option<&FeatureTensor>,
) -> Result<Option<Array2<f64>>> {
    match (w, x) {
        (Some(w), Some(x)) => {
            if x.zones() != g.nrows() {
                return Err(Error::DimensionMismatch {
                    what: "feature tensor zones",
                    expected: g.nrows(),
                    found: x.zones(),
                });
            }
            let mut r = g.to_owned();
            r -= &mode_k_product(x, w)?;
            Ok(Some(r))
        }
        _ => Ok(None),
    }
}

fn require_data_prior(cfg: &InferenceConfig, w: Option<&[f64]>, x: Option<&FeatureTensor>) -> Result<()> {
    if cfg.eta > 0.0 && (w.is_none() || x.is_none()) {
        return Err(Error::MissingFeatures);
    }
    Ok(())
}

/// The objective split into terms. Terms whose weight is zero are zero.
pub fn objective_terms(
    g: ArrayView2<'_, f64>,
    w: Option<&[f64]>,
    states: &StateSeries,
    x: Option<&FeatureTensor>,
    cfg: &InferenceConfig,
) -> Result<ObjectiveTerms> {
    check_shapes(&g, states)?;
    require_data_prior(cfg, w, x)?;
    let mut terms = ObjectiveTerms {
        fit: residuals(&g, states).iter().map(|x| x * x).sum(),
        ..Default::default()
    };
    if cfg.lambda > 0.0 {
        let logs: f64 = offdiag_degrees(&g)
            .iter()
            .map(|d| (cfg.epsilon_deg + d).ln())
            .sum();
        terms.degree = cfg.lambda * logs;
    }
    terms.data_terms(&g, w, x, cfg)?;
    if cfg.l1 > 0.0 {
        terms.l1 = cfg.l1 * g.iter().map(|x| x.abs()).sum::<f64>();
    }
    if cfg.l2 > 0.0 {
        terms.l2 = cfg.l2 * g.iter().map(|x| x * x).sum::<f64>();
    }
    if !terms.total().is_finite() {
        return Err(Error::NumericalBlowup("objective"));
    }
    Ok(terms)
}

impl ObjectiveTerms {
    /// Recomputes only the terms that depend on `w`.
    pub(crate) fn data_terms(
        &mut self,
        g: &ArrayView2<'_, f64>,
        w: Option<&[f64]>,
        x: Option<&FeatureTensor>,
        cfg: &InferenceConfig,
    ) -> Result<()> {
        self.data = 0.0;
        self.weight_decay = 0.0;
        if cfg.eta > 0.0 {
            if let Some(r) = regression_residual(g, w, x)? {
                self.data = cfg.eta * r.iter().map(|x| x * x).sum::<f64>();
            }
        }
        if cfg.mu > 0.0 {
            if let Some(w) = w {
                self.weight_decay = cfg.mu * w.iter().map(|x| x * x).sum::<f64>();
            }
        }
        Ok(())
    }
}

/// Value of the full objective.
pub fn objective_full(
    g: ArrayView2<'_, f64>,
    w: Option<&[f64]>,
    states: &StateSeries,
    x: Option<&FeatureTensor>,
    cfg: &InferenceConfig,
) -> Result<f64> {
    objective_terms(g, w, states, x, cfg).map(|t| t.total())
}

/// Entrywise partial derivatives of the smooth part of the objective with
/// respect to each `g_nm`, treating all `N^2` entries as free:
///
/// ```text
/// 2 sum_t (g_n. v(t) - u_n(t)) v_m(t)
///   + lambda / (eps + sum_{k != n} g_nk)     (m != n only)
///   + 2 eta (g_nm - w . x_nm) + 2 l2 g_nm
/// ```
///
/// The `l1` term is non-smooth and handled by its proximal map instead.
pub fn grad_g_raw(
    g: ArrayView2<'_, f64>,
    w: Option<&[f64]>,
    states: &StateSeries,
    x: Option<&FeatureTensor>,
    cfg: &InferenceConfig,
) -> Result<Array2<f64>> {
    check_shapes(&g, states)?;
    require_data_prior(cfg, w, x)?;
    let r = residuals(&g, states);
    let mut grad = r.t().dot(&states.v);
    grad *= 2.0;
    if cfg.lambda > 0.0 {
        for (n, deg) in offdiag_degrees(&g).into_iter().enumerate() {
            let penalty = cfg.lambda / (cfg.epsilon_deg + deg);
            for (m, gm) in grad.row_mut(n).iter_mut().enumerate() {
                if m != n {
                    *gm += penalty;
                }
            }
        }
    }
    if cfg.eta > 0.0 {
        if let Some(res) = regression_residual(&g, w, x)? {
            grad.scaled_add(2.0 * cfg.eta, &res);
        }
    }
    if cfg.l2 > 0.0 {
        grad.scaled_add(2.0 * cfg.l2, &g);
    }
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalBlowup("network gradient"));
    }
    Ok(grad)
}

/// Gradient of the objective restricted to symmetric networks: the raw
/// gradient averaged with its transpose. Along any symmetric direction `D`,
/// `<grad_g, D>` is the directional derivative of the objective.
pub fn grad_g(
    g: ArrayView2<'_, f64>,
    w: Option<&[f64]>,
    states: &StateSeries,
    x: Option<&FeatureTensor>,
    cfg: &InferenceConfig,
) -> Result<Array2<f64>> {
    let mut grad = grad_g_raw(g, w, states, x, cfg)?;
    crate::domain::symmetrize_in_place(&mut grad);
    Ok(grad)
}

/// `dJ/dw_k = -2 eta sum_{n,m} (g_nm - w . x_nm) x_nm,k + 2 mu w_k`.
pub fn grad_w(
    g: ArrayView2<'_, f64>,
    w: &[f64],
    x: &FeatureTensor,
    cfg: &InferenceConfig,
) -> Result<Vec<f64>> {
    let res = regression_residual(&g, Some(w), Some(x))?.expect("both present");
    let grad: Vec<f64> = x
        .slices()
        .iter()
        .zip(w)
        .map(|(slice, &wk)| {
            let dot: f64 = res.iter().zip(slice.iter()).map(|(r, s)| r * s).sum();
            -2.0 * cfg.eta * dot + 2.0 * cfg.mu * wk
        })
        .collect();
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalBlowup("weight gradient"));
    }
    Ok(grad)
}
