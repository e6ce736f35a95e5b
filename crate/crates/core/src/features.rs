//! Data-prior features for the regression `g_nm ~ w . x_nm`.

use ndarray::{Array2, ArrayView2};

use crate::domain::Metapopulation;
use crate::error::{Error, Result};

/// `N x N x K` stack of non-negative feature slices, each max-normalized
/// to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    slices: Vec<Array2<f64>>,
    names: Vec<String>,
}

impl FeatureTensor {
    pub fn zones(&self) -> usize {
        self.slices.first().map_or(0, |s| s.nrows())
    }

    /// Number of features `K`.
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn slice(&self, k: usize) -> ArrayView2<'_, f64> {
        self.slices[k].view()
    }

    pub fn slices(&self) -> &[Array2<f64>] {
        &self.slices
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Non-negative regression weights, one per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionWeights(Vec<f64>);

impl RegressionWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(x) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidArgument(format!("regression weight {x}")));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Gravity-model visitor volumes `P_n P_m / D_nm^2` between zone centroids,
/// with a zero diagonal, max-normalized.
pub fn gravity_feature(pop: &Metapopulation) -> Result<Array2<f64>> {
    let raw = gravity_raw(pop)?;
    let max = raw.iter().cloned().fold(0.0, f64::max);
    Ok(if max > 0.0 { raw / max } else { raw })
}

/// Unnormalized gravity volumes.
pub fn gravity_raw(pop: &Metapopulation) -> Result<Array2<f64>> {
    let zones = pop.zones();
    let coords: Vec<(f64, f64)> = zones
        .iter()
        .map(|z| z.centroid.ok_or_else(|| Error::MissingCentroid(z.id.clone())))
        .collect::<Result<_>>()?;
    let n = zones.len();
    let mut x = Array2::zeros((n, n));
    for a in 0..n {
        for b in (a + 1)..n {
            let (dx, dy) = (coords[a].0 - coords[b].0, coords[a].1 - coords[b].1);
            let d2 = dx * dx + dy * dy;
            if d2 == 0.0 {
                return Err(Error::DegenerateDistance(zones[a].id.clone(), zones[b].id.clone()));
            }
            let val = zones[a].population * zones[b].population / d2;
            x[(a, b)] = val;
            x[(b, a)] = val;
        }
    }
    Ok(x)
}

/// Validates and max-normalizes feature slices, preserving their order.
pub fn build_feature_tensor(slices: Vec<Array2<f64>>, names: Vec<String>) -> Result<FeatureTensor> {
    if slices.is_empty() {
        return Err(Error::InvalidArgument("no feature slices".into()));
    }
    if names.len() != slices.len() {
        return Err(Error::DimensionMismatch {
            what: "feature names",
            expected: slices.len(),
            found: names.len(),
        });
    }
    let n = slices[0].nrows();
    let mut out = Vec::with_capacity(slices.len());
    for (slice, name) in slices.into_iter().zip(&names) {
        if slice.nrows() != n || slice.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "feature slice size",
                expected: n,
                found: if slice.nrows() != n { slice.nrows() } else { slice.ncols() },
            });
        }
        if slice.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::NegativeFeature(name.clone()));
        }
        let max = slice.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return Err(Error::DegenerateFeature(name.clone()));
        }
        out.push(slice / max);
    }
    Ok(FeatureTensor { slices: out, names })
}

/// `sum_k w_k X[:, :, k]`.
pub fn mode_k_product(x: &FeatureTensor, w: &[f64]) -> Result<Array2<f64>> {
    if w.len() != x.len() {
        return Err(Error::DimensionMismatch {
            what: "regression weights",
            expected: x.len(),
            found: w.len(),
        });
    }
    let n = x.zones();
    let mut out = Array2::zeros((n, n));
    for (slice, &wk) in x.slices.iter().zip(w) {
        out.scaled_add(wk, slice);
    }
    Ok(out)
}
