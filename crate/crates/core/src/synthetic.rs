//! Ground-truth generators: zone layouts, mobility networks, and outbreaks
//! with controlled observation noise.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{InfectionNetwork, Metapopulation, MobilityVolumes, OutbreakSeries, Zone};
use crate::dynamics::{propagate, ClampEvents};
use crate::error::{Error, Result};

/// Side of the square that random zone centroids are drawn in, in km.
pub const LAYOUT_KM: f64 = 40.0;

/// `n` zones with ids `z000, z001, ...`, populations uniform on
/// `[10 000, 50 000]` and centroids uniform in a `LAYOUT_KM` square.
pub fn random_metapopulation(n: usize, seed: u64) -> Result<Metapopulation> {
    if n == 0 {
        return Err(Error::EmptyMetapopulation);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.saturating_sub(1).to_string().len().max(3);
    let zones = (0..n)
        .map(|k| {
            let p = rng.random_range(10_000.0..=50_000.0_f64).round();
            let x = rng.random_range(0.0..LAYOUT_KM);
            let y = rng.random_range(0.0..LAYOUT_KM);
            Zone::new(format!("z{k:0width$}"), p).with_centroid(x, y)
        })
        .collect();
    Metapopulation::new(zones)
}

/// Undirected preferential-attachment edge list on `n` nodes.
///
/// Starts from a complete graph on `m + 1` nodes; each later node links to
/// `m` distinct earlier nodes chosen with probability proportional to
/// degree. With `m = 1` the result is a tree.
pub fn scale_free_edges(n: usize, m: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if m == 0 || n <= m {
        return Err(Error::InvalidArgument(format!(
            "preferential attachment needs zones > attach_m >= 1, got {n} zones and attach_m {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    // Every edge endpoint once, so uniform picks are degree-weighted.
    let mut ends = Vec::new();
    for a in 0..=m {
        for b in (a + 1)..=m {
            edges.push((a, b));
            ends.extend([a, b]);
        }
    }
    let mut chosen = Vec::with_capacity(m);
    for node in (m + 1)..n {
        chosen.clear();
        while chosen.len() < m {
            let target = ends[rng.random_range(0..ends.len())];
            if !chosen.contains(&target) {
                chosen.push(target);
            }
        }
        for &t in &chosen {
            edges.push((t, node));
            ends.extend([t, node]);
        }
    }
    Ok(edges)
}

/// Mobility on a preferential-attachment topology. Each edge carries a
/// symmetric volume uniform on `(0, volume_scale]`; the diagonal holds
/// `P_n / 2`.
pub fn generate_scale_free_mobility(
    pop: &Metapopulation,
    attach_m: usize,
    volume_scale: f64,
    seed: u64,
) -> Result<MobilityVolumes> {
    check_scale(volume_scale)?;
    let edges = scale_free_edges(pop.len(), attach_m, seed)?;
    // Volumes use a stream separate from the topology draws.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    mobility_from_edges(pop, &edges, |_, _| volume_scale * (1.0 - rng.random::<f64>()))
}

/// Layout of [`generate_modular_mobility`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModularLayout {
    /// Number of modules; zones are split into contiguous blocks.
    pub modules: usize,
    /// Probability of an edge between two zones of the same module, on top
    /// of a chain that keeps each module connected.
    pub intra_p: f64,
    /// Upper bound of within-module edge volumes.
    pub intra_scale: f64,
    /// Upper bound of the volume of the single edge linking consecutive
    /// modules.
    pub bridge_scale: f64,
}

/// Mobility made of dense modules joined in a chain by single weak bridges.
pub fn generate_modular_mobility(
    pop: &Metapopulation,
    layout: ModularLayout,
    seed: u64,
) -> Result<MobilityVolumes> {
    let n = pop.len();
    let k = layout.modules;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("{k} modules for {n} zones")));
    }
    if !(0.0..=1.0).contains(&layout.intra_p) {
        return Err(Error::InvalidArgument(format!("intra_p {}", layout.intra_p)));
    }
    check_scale(layout.intra_scale)?;
    check_scale(layout.bridge_scale)?;
    let bounds: Vec<usize> = (0..=k).map(|b| b * n / k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut volumes = Vec::new();
    for blk in bounds.windows(2) {
        let (lo, hi) = (blk[0], blk[1]);
        for a in lo..hi {
            for b in (a + 1)..hi {
                if b == a + 1 || rng.random::<f64>() < layout.intra_p {
                    edges.push((a, b));
                    volumes.push(layout.intra_scale * (1.0 - rng.random::<f64>()));
                }
            }
        }
    }
    for w in bounds.windows(3) {
        let a = rng.random_range(w[0]..w[1]);
        let b = rng.random_range(w[1]..w[2]);
        edges.push((a, b));
        volumes.push(layout.bridge_scale * (1.0 - rng.random::<f64>()));
    }
    let mut it = volumes.into_iter();
    mobility_from_edges(pop, &edges, |_, _| it.next().expect("one volume per edge"))
}

/// Module index of each zone under [`generate_modular_mobility`].
pub fn module_of(zones: usize, modules: usize) -> Vec<usize> {
    (0..zones)
        .map(|z| {
            (0..modules)
                .rev()
                .find(|&b| z >= b * zones / modules)
                .unwrap_or(0)
        })
        .collect()
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!("volume scale {scale}")));
    }
    Ok(())
}

fn mobility_from_edges<F>(pop: &Metapopulation, edges: &[(usize, usize)], mut volume: F) -> Result<MobilityVolumes>
where
    F: FnMut(usize, usize) -> f64,
{
    let n = pop.len();
    let mut h = Array2::zeros((n, n));
    for &(a, b) in edges {
        let x = volume(a, b);
        h[(a, b)] = x;
        h[(b, a)] = x;
    }
    MobilityVolumes::from_offdiagonal(h, pop)
}

/// `g_nm = alpha (h_mn / P_m + h_nm / P_n)`.
pub fn network_from_mobility(h: &MobilityVolumes, pop: &Metapopulation, alpha: f64) -> Result<InfectionNetwork> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("infection rate {alpha}")));
    }
    pop.check_len("mobility zones", h.len())?;
    let p = pop.populations();
    let hm = h.matrix();
    let n = pop.len();
    let g = Array2::from_shape_fn((n, n), |(a, b)| alpha * (hm[(b, a)] / p[b] + hm[(a, b)] / p[a]));
    InfectionNetwork::new(g)
}

/// A noisy observation of inter-zone mobility intensity, usable as a data
/// prior feature: the off-diagonal of the `alpha = 1` network times
/// symmetric log-normal noise with log-scale standard deviation `log_sd`.
pub fn mobility_proxy_feature(
    h: &MobilityVolumes,
    pop: &Metapopulation,
    log_sd: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    let noise = Normal::new(0.0, log_sd)
        .map_err(|e| Error::InvalidArgument(format!("proxy noise {log_sd}: {e}")))?;
    let mut x = network_from_mobility(h, pop, 1.0)?.into_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.nrows();
    for a in 0..n {
        x[(a, a)] = 0.0;
        for b in (a + 1)..n {
            let val = x[(a, b)] * noise.sample(&mut rng).exp();
            x[(a, b)] = val;
            x[(b, a)] = val;
        }
    }
    Ok(x)
}

/// A metapopulation, its mobility, and the infection network they imply.
#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub pop: Metapopulation,
    pub h: MobilityVolumes,
    pub g_true: InfectionNetwork,
    pub alpha: f64,
    pub beta: f64,
    /// Standard deviation of the Gaussian noise added to `u`.
    pub noise_sigma: f64,
    /// Seed of the observation noise.
    pub seed: u64,
}

impl SyntheticScenario {
    pub fn new(
        pop: Metapopulation,
        h: MobilityVolumes,
        alpha: f64,
        beta: f64,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidArgument(format!("recovery rate {beta}")));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma {noise_sigma}")));
        }
        let g_true = network_from_mobility(&h, &pop, alpha)?;
        Ok(Self {
            pop,
            h,
            g_true,
            alpha,
            beta,
            noise_sigma,
            seed,
        })
    }

    /// Same scenario with a different noise seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Same scenario with a different noise level.
    pub fn with_noise(&self, noise_sigma: f64) -> Self {
        Self {
            noise_sigma,
            ..self.clone()
        }
    }
}

/// Output of [`generate_outbreak`].
#[derive(Debug, Clone)]
pub struct GeneratedOutbreak {
    pub series: OutbreakSeries,
    pub clamps: ClampEvents,
    /// Set when the epidemic never spreads past its first day.
    pub warning: Option<String>,
}

/// Runs the daily recursion on the scenario's ground-truth network.
///
/// Day 0 holds `seed_counts`. On each later day, zero-mean Gaussian noise
/// with the scenario's `noise_sigma` is added to every incidence rate that
/// the network makes positive, and the result is clamped to `[0, 1]` before
/// it is turned into counts. Zones with no infection pressure stay at zero,
/// so noise alone never starts an outbreak.
pub fn generate_outbreak(
    scenario: &SyntheticScenario,
    t_days: usize,
    seed_counts: &[f64],
) -> Result<GeneratedOutbreak> {
    if t_days == 0 {
        return Err(Error::InvalidArgument("outbreak needs at least one day".into()));
    }
    let pop = &scenario.pop;
    pop.check_len("seed counts", seed_counts.len())?;
    let first = Array2::from_shape_vec((1, pop.len()), seed_counts.to_vec())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let prefix = OutbreakSeries::new(first, vec![], scenario.beta, pop)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let noise = Normal::new(0.0, scenario.noise_sigma)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let sigma = scenario.noise_sigma;
    let sim = propagate(scenario.g_true.matrix(), pop, &prefix, t_days - 1, |_, _, u| {
        if sigma > 0.0 && u > 0.0 {
            u + noise.sample(&mut rng)
        } else {
            u
        }
    })?;
    let later = sim.series.deltas().rows().into_iter().skip(1).flatten().any(|&d| d > 0.0);
    let warning = (t_days > 1 && !later).then(|| "epidemic died out after day 1".to_string());
    Ok(GeneratedOutbreak {
        series: sim.series,
        clamps: sim.clamps,
        warning,
    })
}

/// `count` infections in each of `zones` zones picked uniformly at random.
pub fn random_seed_counts(pop: &Metapopulation, zones: usize, count: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.shuffle(&mut rng);
    let mut out = vec![0.0; pop.len()];
    for &k in idx.iter().take(zones) {
        out[k] = count.min(pop.population(k));
    }
    out
}

/// The series as a surveillance system would report it: whole cases per
/// zone and day. Tails of fractional infections round away to zero.
pub fn report_whole_cases(series: &OutbreakSeries, pop: &Metapopulation) -> Result<OutbreakSeries> {
    OutbreakSeries::new(
        series.deltas().mapv(f64::round),
        series.dates().to_vec(),
        series.beta(),
        pop,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_outbreak, states_from_deltas};
    use crate::inference::objective_j1;

    fn scenario(n: usize, sigma: f64) -> SyntheticScenario {
        let pop = random_metapopulation(n, 3).unwrap();
        let mean = pop.total_population() / n as f64;
        let h = generate_scale_free_mobility(&pop, 2, 0.05 * mean, 4).unwrap();
        SyntheticScenario::new(pop, h, 2.0 * 0.2 / mean, 0.2, sigma, 5).unwrap()
    }

    #[test]
    fn tree_when_attaching_one_edge() {
        for seed in 0..5 {
            let e = scale_free_edges(30, 1, seed).unwrap();
            assert_eq!(e.len(), 29);
        }
    }

    #[test]
    fn attachment_counts_and_errors() {
        let e = scale_free_edges(20, 3, 0).unwrap();
        assert_eq!(e.len(), 3 * 2 + 3 * (20 - 4));
        assert!(scale_free_edges(3, 3, 0).is_err());
        assert!(scale_free_edges(5, 0, 0).is_err());
    }

    #[test]
    fn mobility_is_deterministic_and_well_formed() {
        let pop = random_metapopulation(25, 1).unwrap();
        let a = generate_scale_free_mobility(&pop, 2, 100.0, 9).unwrap();
        let b = generate_scale_free_mobility(&pop, 2, 100.0, 9).unwrap();
        assert_eq!(a, b);
        let h = a.matrix();
        for i in 0..25 {
            assert_eq!(h[(i, i)], pop.population(i) / 2.0);
            for j in 0..25 {
                assert_eq!(h[(i, j)], h[(j, i)]);
                if i != j {
                    assert!(h[(i, j)] <= 100.0);
                }
            }
        }
    }

    #[test]
    fn network_matches_mobility_formula() {
        let s = scenario(12, 0.0);
        let h = s.h.matrix();
        let g = s.g_true.matrix();
        for a in 0..12 {
            for b in 0..12 {
                let p = (s.pop.population(a), s.pop.population(b));
                let want = s.alpha * (h[(b, a)] / p.1 + h[(a, b)] / p.0);
                assert_eq!(g[(a, b)], want);
            }
        }
    }

    #[test]
    fn noise_free_round_trip() {
        let s = scenario(10, 0.0);
        let seeds = random_seed_counts(&s.pop, 2, 10.0, 1);
        let out = generate_outbreak(&s, 40, &seeds).unwrap();
        let sim = simulate_outbreak(&s.g_true, &s.pop, &out.series.prefix(1).unwrap(), 39).unwrap();
        assert_eq!(sim.series.deltas(), out.series.deltas());
        let st = states_from_deltas(&out.series, &s.pop).unwrap();
        // Day 0 is the seeding, which the network does not explain.
        let later = st.window(1, st.days());
        assert!(objective_j1(s.g_true.matrix(), &later).unwrap() < 1e-12);
    }

    #[test]
    fn zero_seeds_give_zero_series_with_warning() {
        let s = scenario(8, 0.01);
        let out = generate_outbreak(&s, 20, &[0.0; 8]).unwrap();
        assert!(out.series.deltas().iter().all(|&d| d == 0.0));
        assert!(out.warning.is_some());
    }

    #[test]
    fn noisy_outbreak_is_seeded() {
        let s = scenario(10, 1e-3);
        let seeds = random_seed_counts(&s.pop, 2, 10.0, 1);
        let a = generate_outbreak(&s, 30, &seeds).unwrap();
        let b = generate_outbreak(&s, 30, &seeds).unwrap();
        assert_eq!(a.series, b.series);
        let c = generate_outbreak(&s.with_seed(6), 30, &seeds).unwrap();
        assert_ne!(a.series, c.series);
    }

    #[test]
    fn modular_layout_blocks() {
        let pop = random_metapopulation(12, 0).unwrap();
        let layout = ModularLayout {
            modules: 3,
            intra_p: 1.0,
            intra_scale: 50.0,
            bridge_scale: 1.0,
        };
        let h = generate_modular_mobility(&pop, layout, 2).unwrap();
        let m = module_of(12, 3);
        assert_eq!(m, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
        let hm = h.matrix();
        let mut bridges = 0;
        for a in 0..12 {
            for b in (a + 1)..12 {
                if m[a] == m[b] {
                    assert!(hm[(a, b)] > 0.0);
                } else if hm[(a, b)] > 0.0 {
                    bridges += 1;
                    assert!(hm[(a, b)] <= 1.0);
                }
            }
        }
        assert_eq!(bridges, 2);
    }

    #[test]
    fn proxy_feature_is_symmetric_with_empty_diagonal() {
        let s = scenario(9, 0.0);
        let x = mobility_proxy_feature(&s.h, &s.pop, 0.3, 1).unwrap();
        assert_eq!(x, x.t());
        assert!((0..9).all(|i| x[(i, i)] == 0.0));
        let g = s.g_true.matrix();
        for ((a, b), &v) in x.indexed_iter() {
            assert_eq!(v > 0.0, a != b && g[(a, b)] > 0.0);
        }
    }

    #[test]
    fn whole_cases_round_each_entry() {
        let pop = Metapopulation::new(vec![Zone::new("a", 10.0), Zone::new("b", 10.0)]).unwrap();
        let s = OutbreakSeries::new(ndarray::array![[1.0, 0.4], [2.5, 0.6]], vec![], 0.2, &pop).unwrap();
        let r = report_whole_cases(&s, &pop).unwrap();
        assert_eq!(r.deltas(), ndarray::array![[1.0, 0.0], [3.0, 1.0]]);
        assert_eq!(r.dates(), s.dates());
    }
}
