//! Shared domain types.
//!
//! Every matrix or series indexed by zone uses the canonical zone order of
//! the [`Metapopulation`] it was built against: zones sorted by id. Matrices
//! carry no labels of their own.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sub-population record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    /// Number of residents, `P_n`.
    pub population: f64,
    /// Planar centroid in kilometres.
    pub centroid: Option<(f64, f64)>,
}

impl Zone {
    pub fn new(id: impl Into<String>, population: f64) -> Self {
        Self {
            id: id.into(),
            population,
            centroid: None,
        }
    }

    pub fn with_centroid(mut self, x_km: f64, y_km: f64) -> Self {
        self.centroid = Some((x_km, y_km));
        self
    }
}

/// Registry of zones in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Metapopulation {
    zones: Vec<Zone>,
}

impl Metapopulation {
    /// Validates raw zone records and fixes the canonical (sorted by id) order.
    pub fn new(mut zones: Vec<Zone>) -> Result<Self> {
        if zones.is_empty() {
            return Err(Error::EmptyMetapopulation);
        }
        let mut seen = HashSet::with_capacity(zones.len());
        for z in &zones {
            if !seen.insert(z.id.as_str()) {
                return Err(Error::DuplicateZone(z.id.clone()));
            }
            if !(z.population.is_finite() && z.population > 0.0) {
                return Err(Error::NonPositivePopulation {
                    zone: z.id.clone(),
                    population: z.population,
                });
            }
            if let Some((x, y)) = z.centroid {
                if !(x.is_finite() && y.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "zone `{}` has a non-finite centroid",
                        z.id
                    )));
                }
            }
        }
        zones.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { zones })
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.zones.iter().map(|z| z.id.as_str())
    }

    pub fn populations(&self) -> Vec<f64> {
        self.zones.iter().map(|z| z.population).collect()
    }

    pub fn population(&self, n: usize) -> f64 {
        self.zones[n].population
    }

    pub fn total_population(&self) -> f64 {
        self.zones.iter().map(|z| z.population).sum()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.zones
            .binary_search_by(|z| z.id.as_str().cmp(id))
            .ok()
    }

    pub(crate) fn check_len(&self, what: &'static str, found: usize) -> Result<()> {
        if found != self.len() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.len(),
                found,
            });
        }
        Ok(())
    }
}

/// Daily newly-infected counts per zone, `T x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutbreakSeries {
    deltas: Array2<f64>,
    dates: Vec<String>,
    beta: f64,
}

impl OutbreakSeries {
    /// Builds a series, checking it against the metapopulation it describes.
    ///
    /// `dates` labels each row; when empty, rows are labelled `0, 1, ...`.
    pub fn new(
        deltas: Array2<f64>,
        dates: Vec<String>,
        beta: f64,
        pop: &Metapopulation,
    ) -> Result<Self> {
        let (t_len, n) = deltas.dim();
        if t_len == 0 {
            return Err(Error::InvalidSeries("series has no days".into()));
        }
        pop.check_len("series zones", n)?;
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidSeries(format!(
                "recovery rate {beta} outside (0, 1]"
            )));
        }
        let dates = if dates.is_empty() {
            (0..t_len).map(|t| t.to_string()).collect()
        } else {
            dates
        };
        if dates.len() != t_len {
            return Err(Error::DimensionMismatch {
                what: "date labels",
                expected: t_len,
                found: dates.len(),
            });
        }
        for (n, col) in deltas.columns().into_iter().enumerate() {
            let mut cum = 0.0;
            for (t, &d) in col.iter().enumerate() {
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::InvalidSeries(format!(
                        "entry ({t}, {n}) is {d}; counts must be finite and non-negative"
                    )));
                }
                cum += d;
            }
            let p = pop.population(n);
            // Cumulative sums accumulate rounding; allow a few ulps.
            if cum > p * (1.0 + 1e-12) {
                return Err(Error::InvalidSeries(format!(
                    "zone `{}` has {cum} cumulative infections but population {p}",
                    pop.zones()[n].id
                )));
            }
        }
        Ok(Self {
            deltas,
            dates,
            beta,
        })
    }

    pub fn deltas(&self) -> ArrayView2<'_, f64> {
        self.deltas.view()
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn day0(&self) -> &str {
        &self.dates[0]
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn days(&self) -> usize {
        self.deltas.nrows()
    }

    pub fn zones(&self) -> usize {
        self.deltas.ncols()
    }

    /// The first `days` rows as a new series.
    pub fn prefix(&self, days: usize) -> Result<Self> {
        if days == 0 || days > self.days() {
            return Err(Error::InvalidArgument(format!(
                "prefix of {days} days from a {}-day series",
                self.days()
            )));
        }
        Ok(Self {
            deltas: self.deltas.slice(ndarray::s![..days, ..]).to_owned(),
            dates: self.dates[..days].to_vec(),
            beta: self.beta,
        })
    }

    /// Citywide daily totals.
    pub fn totals(&self) -> Vec<f64> {
        self.deltas.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub(crate) fn from_parts_unchecked(deltas: Array2<f64>, dates: Vec<String>, beta: f64) -> Self {
        Self {
            deltas,
            dates,
            beta,
        }
    }
}

/// Incidence rates `u` and effective infectious counts `v`, both `T x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSeries {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl StateSeries {
    pub fn new(u: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        if u.dim() != v.dim() {
            return Err(Error::DimensionMismatch {
                what: "state series rows",
                expected: u.nrows(),
                found: v.nrows(),
            });
        }
        if u.iter().any(|x| !x.is_finite()) || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalBlowup("state series"));
        }
        Ok(Self { u, v })
    }

    pub fn days(&self) -> usize {
        self.u.nrows()
    }

    pub fn zones(&self) -> usize {
        self.u.ncols()
    }

    /// Rows `range` of both series.
    pub fn window(&self, start: usize, end: usize) -> Self {
        Self {
            u: self.u.slice(ndarray::s![start..end, ..]).to_owned(),
            v: self.v.slice(ndarray::s![start..end, ..]).to_owned(),
        }
    }
}

/// Symmetric, non-negative `N x N` infection network.
#[derive(Debug, Clone, PartialEq)]
pub struct InfectionNetwork {
    g: Array2<f64>,
}

impl InfectionNetwork {
    /// Wraps a matrix after checking it is square, finite, non-negative and
    /// exactly symmetric.
    pub fn new(g: Array2<f64>) -> Result<Self> {
        let (r, c) = g.dim();
        if r != c || r == 0 {
            return Err(Error::InvalidNetwork(format!("shape {r}x{c} is not square")));
        }
        for ((i, j), &x) in g.indexed_iter() {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidNetwork(format!("entry ({i}, {j}) is {x}")));
            }
            if x.to_bits() != g[(j, i)].to_bits() {
                return Err(Error::InvalidNetwork(format!(
                    "entries ({i}, {j}) and ({j}, {i}) differ"
                )));
            }
        }
        Ok(Self { g })
    }

    /// Projects an arbitrary finite square matrix onto the feasible set:
    /// clips negatives to zero, then averages with its transpose.
    pub fn project(g: Array2<f64>) -> Result<Self> {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalBlowup("network projection"));
        }
        let mut g = g;
        g.mapv_inplace(|x| x.max(0.0));
        symmetrize_in_place(&mut g);
        Self::new(g)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            g: Array2::zeros((n, n)),
        }
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.g.view()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.g
    }

    pub fn len(&self) -> usize {
        self.g.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// The network with every edge multiplied by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::InvalidArgument(format!("scale factor {factor}")));
        }
        Ok(Self {
            g: self.g.mapv(|x| x * factor),
        })
    }

    /// Off-diagonal row sums `sum_{m != n} g_nm`.
    pub fn out_degrees(&self) -> Vec<f64> {
        self.g
            .rows()
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
}

/// Replaces `g` with `(g + g^T) / 2`. Both triangles receive bit-identical
/// values because floating-point addition is commutative.
pub(crate) fn symmetrize_in_place(g: &mut Array2<f64>) {
    let n = g.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (g[(i, j)] + g[(j, i)]) / 2.0;
            g[(i, j)] = avg;
            g[(j, i)] = avg;
        }
    }
}

/// Average daily visitor volumes `h_nm` from zone `n` to zone `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityVolumes {
    h: Array2<f64>,
}

impl MobilityVolumes {
    /// Checks non-negativity and the `h_nn = P_n / 2` diagonal convention.
    pub fn new(h: Array2<f64>, pop: &Metapopulation) -> Result<Self> {
        let (r, c) = h.dim();
        pop.check_len("mobility rows", r)?;
        pop.check_len("mobility columns", c)?;
        for ((i, j), &x) in h.indexed_iter() {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidMobility(format!("entry ({i}, {j}) is {x}")));
            }
        }
        for n in 0..r {
            if h[(n, n)] != pop.population(n) / 2.0 {
                return Err(Error::InvalidMobility(format!(
                    "diagonal entry {n} is {}, expected P_n/2 = {}",
                    h[(n, n)],
                    pop.population(n) / 2.0
                )));
            }
        }
        Ok(Self { h })
    }

    /// Builds volumes from off-diagonal visits, filling the diagonal.
    pub fn from_offdiagonal(mut h: Array2<f64>, pop: &Metapopulation) -> Result<Self> {
        if h.nrows() == h.ncols() && h.nrows() == pop.len() {
            for n in 0..pop.len() {
                h[(n, n)] = pop.population(n) / 2.0;
            }
        }
        Self::new(h, pop)
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.h.view()
    }

    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

/// How the optimizer picks its step length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    Fixed { step: f64 },
    Backtracking { init: f64, shrink: f64, c: f64 },
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Backtracking {
            init: 1.0,
            shrink: 0.5,
            c: 1e-4,
        }
    }
}

/// Hyperparameters of the network inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Power-law degree prior weight.
    pub lambda: f64,
    /// Data prior weight.
    pub eta: f64,
    /// Weight decay on the regression weights.
    pub mu: f64,
    /// L1 penalty (L1PRI baseline).
    pub l1: f64,
    /// Squared Frobenius penalty (L2PRI baseline).
    pub l2: f64,
    pub max_iters: usize,
    /// Relative objective change below which the optimizer stops.
    pub tol: f64,
    pub step_policy: StepPolicy,
    /// Extrapolate network steps from the previous iterate, falling back to
    /// a plain step whenever that would not lower the objective. Only used
    /// with backtracking.
    pub momentum: bool,
    /// Scale each network entry's step by the inverse curvature of the
    /// quadratic terms along it.
    pub precondition: bool,
    /// Smoothing added inside the degree logarithm.
    pub epsilon_deg: f64,
    pub seed: u64,
    /// Upper bound of the uniform initial edge weights. `None` derives it
    /// from the data (see [`crate::inference::spgd_infer`]).
    pub init_scale: Option<f64>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            eta: 0.0,
            mu: 0.0,
            l1: 0.0,
            l2: 0.0,
            max_iters: 5000,
            tol: 1e-7,
            step_policy: StepPolicy::default(),
            momentum: true,
            precondition: true,
            epsilon_deg: 1e-8,
            seed: 0,
            init_scale: None,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda", self.lambda),
            ("eta", self.eta),
            ("mu", self.mu),
            ("l1", self.l1),
            ("l2", self.l2),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} = {w} must be >= 0")));
            }
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol = {} must be > 0", self.tol)));
        }
        if !(self.epsilon_deg.is_finite() && self.epsilon_deg > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon_deg = {} must be > 0",
                self.epsilon_deg
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        match self.step_policy {
            StepPolicy::Fixed { step } if !(step.is_finite() && step > 0.0) => {
                return Err(Error::InvalidArgument(format!("fixed step {step}")));
            }
            StepPolicy::Backtracking { init, shrink, c }
                if !(init > 0.0 && shrink > 0.0 && shrink < 1.0 && c > 0.0 && c < 1.0) =>
            {
                return Err(Error::InvalidArgument(format!(
                    "backtracking parameters init={init} shrink={shrink} c={c}"
                )));
            }
            _ => {}
        }
        if let Some(s) = self.init_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!("init_scale = {s}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn validate_metapopulation_orders_zones() {
        let pop = Metapopulation::new(vec![
            Zone::new("c", 300.0),
            Zone::new("a", 100.0),
            Zone::new("b", 200.0),
        ])
        .unwrap();
        assert_eq!(pop.len(), 3);
        assert_eq!(pop.ids().collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(pop.populations(), vec![100.0, 200.0, 300.0]);
        assert_eq!(pop.index_of("c"), Some(2));
        assert_eq!(pop.index_of("zz"), None);
    }

    #[test]
    fn duplicate_zone_rejected() {
        let err = Metapopulation::new(vec![Zone::new("z1", 1.0), Zone::new("z1", 2.0)]);
        assert!(matches!(err, Err(Error::DuplicateZone(id)) if id == "z1"));
    }

    #[test]
    fn non_positive_population_rejected() {
        let err = Metapopulation::new(vec![Zone::new("z1", 10.0), Zone::new("z2", 0.0)]);
        assert!(matches!(err, Err(Error::NonPositivePopulation { .. })));
    }

    #[test]
    fn empty_metapopulation_rejected() {
        assert!(matches!(
            Metapopulation::new(vec![]),
            Err(Error::EmptyMetapopulation)
        ));
    }

    #[test]
    fn series_cumulative_bound() {
        let pop = Metapopulation::new(vec![Zone::new("a", 10.0)]).unwrap();
        let ok = OutbreakSeries::new(array![[4.0], [6.0]], vec![], 0.5, &pop);
        assert!(ok.is_ok());
        let bad = OutbreakSeries::new(array![[4.0], [6.5]], vec![], 0.5, &pop);
        assert!(matches!(bad, Err(Error::InvalidSeries(_))));
        let neg = OutbreakSeries::new(array![[-1.0]], vec![], 0.5, &pop);
        assert!(neg.is_err());
        let beta = OutbreakSeries::new(array![[1.0]], vec![], 0.0, &pop);
        assert!(beta.is_err());
    }

    #[test]
    fn network_rejects_asymmetry_and_negatives() {
        assert!(InfectionNetwork::new(array![[0.0, 1.0], [1.0, 0.0]]).is_ok());
        assert!(InfectionNetwork::new(array![[0.0, 1.0], [1.5, 0.0]]).is_err());
        assert!(InfectionNetwork::new(array![[-1.0, 0.0], [0.0, 0.0]]).is_err());
        let p = InfectionNetwork::project(array![[-1.0, 1.0], [2.0, 3.0]]).unwrap();
        assert_eq!(p.matrix(), array![[0.0, 1.5], [1.5, 3.0]]);
    }

    #[test]
    fn mobility_diagonal_convention() {
        let pop = Metapopulation::new(vec![Zone::new("a", 10.0), Zone::new("b", 4.0)]).unwrap();
        let h = MobilityVolumes::from_offdiagonal(array![[0.0, 1.0], [2.0, 0.0]], &pop).unwrap();
        assert_eq!(h.matrix()[(0, 0)], 5.0);
        assert_eq!(h.matrix()[(1, 1)], 2.0);
        assert!(MobilityVolumes::new(array![[1.0, 1.0], [2.0, 2.0]], &pop).is_err());
    }

    #[test]
    fn config_json_defaults_and_validation() {
        let cfg: InferenceConfig = serde_json::from_str(r#"{"lambda": 0.5}"#).unwrap();
        assert_eq!(cfg.lambda, 0.5);
        assert_eq!(cfg.max_iters, 5000);
        assert_eq!(cfg.tol, 1e-7);
        cfg.validate().unwrap();
        let cfg: InferenceConfig =
            serde_json::from_str(r#"{"step_policy": {"fixed": {"step": 0.1}}}"#).unwrap();
        assert_eq!(cfg.step_policy, StepPolicy::Fixed { step: 0.1 });
        let bad = InferenceConfig {
            eta: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<InferenceConfig>(r#"{"lamda": 1}"#).is_err());
    }
}
