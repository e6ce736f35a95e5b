//! Results checked against independent computations: closed forms, scalar
//! searches, dense linear solves, and regressions on generated samples.

mod common;

use ndarray::{array, Array1, Array2};

use common::BETA;
use metapop::dynamics::{simulate_outbreak, states_from_deltas};
use metapop::evaluation::{
    cosine_similarity, degree_distribution, infection_count_importance, pagerank_importance, prediction_report,
    rollout_predict, simulate_comparison, DEFAULT_DAMPING, DEFAULT_PAGERANK_TOL,
};
use metapop::inference::{fit_alpha_adjustment, objective_j1, spgd_infer, spgd_infer_from, WarmStart};
use metapop::synthetic::{
    generate_outbreak, generate_scale_free_mobility, network_from_mobility, random_metapopulation,
    random_seed_counts, scale_free_edges, SyntheticScenario,
};
use metapop::{InferenceConfig, InfectionNetwork, Metapopulation, OutbreakSeries, StateSeries, Variant, Zone};

fn scenario(n: usize, sigma: f64, seed: u64) -> SyntheticScenario {
    let pop = random_metapopulation(n, seed).unwrap();
    let mean = pop.total_population() / n as f64;
    let h = generate_scale_free_mobility(&pop, 2, 0.05 * mean, seed + 1).unwrap();
    SyntheticScenario::new(pop, h, 2.0 * BETA / mean, BETA, sigma, seed + 2).unwrap()
}

#[test]
fn scalar_fit_is_closed_form_least_squares() {
    let v = array![[1.0], [3.0], [2.5], [6.0], [4.0]];
    let noise = array![[0.002], [-0.001], [0.0015], [-0.003], [0.001]];
    let u = &v * 0.04 + &noise;
    let expected = (&u * &v).sum() / (&v * &v).sum();
    let states = StateSeries::new(u, v).unwrap();
    let cfg = InferenceConfig {
        tol: 1e-14,
        ..Default::default()
    };
    let fit = spgd_infer(&states, None, &cfg, Variant::Basic).unwrap();
    let g = fit.network.matrix()[(0, 0)];
    assert!((g - expected).abs() <= 1e-6 * expected, "{g} vs {expected}");
}

#[test]
fn optimum_is_a_fixed_point() {
    let sc = scenario(4, 0.0, 40);
    let seeds = random_seed_counts(&sc.pop, 2, 10.0, 41);
    let out = generate_outbreak(&sc, 30, &seeds).unwrap();
    let states = states_from_deltas(&out.series, &sc.pop).unwrap().window(1, 30);
    let fit = spgd_infer_from(
        &states,
        None,
        &InferenceConfig::default(),
        Variant::Basic,
        WarmStart {
            network: Some(&sc.g_true),
            weights: None,
        },
    )
    .unwrap();
    assert!(fit.converged && fit.iterations <= 2, "{} iterations", fit.iterations);
    let drift = (&fit.network.matrix() - &sc.g_true.matrix())
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    assert!(drift <= 1e-7 * sc.alpha, "moved by {drift}");
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while (b - a).abs() > 1e-13 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    (a + b) / 2.0
}

#[test]
fn alpha_adjustment_matches_golden_section() {
    for seed in 0..4 {
        let sc = scenario(6, 1e-3, 50 + seed);
        let seeds = random_seed_counts(&sc.pop, 2, 10.0, 60 + seed);
        let out = generate_outbreak(&sc, 40, &seeds).unwrap();
        let states = states_from_deltas(&out.series, &sc.pop).unwrap();
        // A network of the right shape but the wrong scale.
        let g = sc.g_true.scaled(0.37).unwrap();
        let fitted = fit_alpha_adjustment(&g, &states).unwrap();
        let j = |a: f64| objective_j1((&g.matrix() * a).view(), &states).unwrap();
        let searched = golden_section(j, 0.0, 20.0);
        assert!((fitted - searched).abs() <= 1e-8 * searched.max(1.0), "{fitted} vs {searched}");
    }
}

fn dense_pagerank(m: &Array2<f64>, d: f64) -> Array1<f64> {
    // Solve (I - d M D^-1) r = (1 - d)/n 1 by Gaussian elimination.
    let n = m.nrows();
    let col: Vec<f64> = (0..n).map(|j| m.column(j).sum()).collect();
    let mut a = Array2::<f64>::eye(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= d * m[(i, j)] / col[j];
        }
    }
    let mut b = Array1::from_elem(n, (1.0 - d) / n as f64);
    for p in 0..n {
        let piv = (p..n).max_by(|&x, &y| a[(x, p)].abs().total_cmp(&a[(y, p)].abs())).unwrap();
        for k in 0..n {
            a.swap((p, k), (piv, k));
        }
        b.swap(p, piv);
        for r in (p + 1)..n {
            let f = a[(r, p)] / a[(p, p)];
            for k in p..n {
                a[(r, k)] -= f * a[(p, k)];
            }
            b[r] -= f * b[p];
        }
    }
    let mut x = Array1::zeros(n);
    for p in (0..n).rev() {
        let s: f64 = ((p + 1)..n).map(|k| a[(p, k)] * x[k]).sum();
        x[p] = (b[p] - s) / a[(p, p)];
    }
    &x / x.sum()
}

#[test]
fn pagerank_star_matches_linear_solve() {
    let mut m = Array2::zeros((5, 5));
    for leaf in 1..5 {
        m[(0, leaf)] = 1.0 + leaf as f64;
        m[(leaf, 0)] = 1.0 + leaf as f64;
    }
    let g = InfectionNetwork::new(m.clone()).unwrap();
    let scores = pagerank_importance(&g, DEFAULT_DAMPING, 1e-14).unwrap();
    let oracle = dense_pagerank(&m, DEFAULT_DAMPING);
    for (a, b) in scores.iter().zip(oracle.iter()) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    assert!(scores[1..].iter().all(|&leaf| scores[0] > leaf));
}

fn log_binned_tail_exponent(degrees: &[f64], bins: usize) -> f64 {
    let mut d: Vec<f64> = degrees.to_vec();
    d.sort_by(f64::total_cmp);
    let upper = &d[d.len() / 2..];
    let (lo, hi) = (upper[0].ln(), upper[upper.len() - 1].ln() + 1e-9);
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for x in upper {
        counts[(((x.ln() - lo) / w) as usize).min(bins - 1)] += 1.0;
    }
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0.0)
        .map(|(b, &c)| {
            let (e0, e1) = ((lo + w * b as f64).exp(), (lo + w * (b + 1) as f64).exp());
            (((e0 * e1).sqrt()).ln(), (c / (e1 - e0)).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    -sxy / sxx
}

#[test]
fn preferential_attachment_tail() {
    let mut exps = Vec::new();
    for seed in 0..5 {
        let mut deg = vec![0.0; 200];
        for (a, b) in scale_free_edges(200, 3, seed).unwrap() {
            deg[a] += 1.0;
            deg[b] += 1.0;
        }
        exps.push(log_binned_tail_exponent(&deg, 6));
    }
    let mean = exps.iter().sum::<f64>() / exps.len() as f64;
    assert!((2.0..=3.5).contains(&mean), "exponents {exps:?}");
}

#[test]
fn generated_network_degree_exponent() {
    let pop = random_metapopulation(500, 70).unwrap();
    let mean = pop.total_population() / 500.0;
    let h = generate_scale_free_mobility(&pop, 2, 0.05 * mean, 71).unwrap();
    let g = network_from_mobility(&h, &pop, 1e-5).unwrap();
    let d = degree_distribution(&g, 10).unwrap();
    assert!((2.0..=3.5).contains(&d.exponent), "exponent {}", d.exponent);
    let scaled = degree_distribution(&g.scaled(10.0).unwrap(), 10).unwrap();
    assert!((scaled.exponent - d.exponent).abs() < 1e-9);
}

#[test]
fn usable_outbreak_at_reproduction_number_two() {
    for seed in 0..3 {
        let sc = scenario(50, 0.0, 80 + 10 * seed);
        let mean = sc.pop.total_population() / 50.0;
        assert!((sc.alpha * mean / sc.beta - 2.0).abs() < 1e-12);
        let seeds = random_seed_counts(&sc.pop, 3, 10.0, 81 + seed);
        let out = generate_outbreak(&sc, 100, &seeds).unwrap();
        let share = out.series.totals().iter().sum::<f64>() / sc.pop.total_population();
        assert!((0.05..=0.95).contains(&share), "attack rate {share}");
    }
}

#[test]
fn one_day_rollout_with_true_network_is_exact() {
    let sc = scenario(8, 0.0, 90);
    let seeds = random_seed_counts(&sc.pop, 2, 10.0, 91);
    let out = generate_outbreak(&sc, 40, &seeds).unwrap();
    for from in [1, 10, 25, 39] {
        let pred = rollout_predict(&sc.g_true, 1.0, &out.series, &sc.pop, from, 1).unwrap();
        for (p, a) in pred.row(0).iter().zip(out.series.deltas().row(from)) {
            assert!((p - a).abs() <= 1e-9 * a.max(1.0), "{p} vs {a}");
        }
    }
    let zero = InfectionNetwork::zeros(8);
    let pred = rollout_predict(&zero, 1.0, &out.series, &sc.pop, 10, 5).unwrap();
    assert!(pred.iter().all(|&x| x == 0.0));
    let rep = prediction_report(&sc.g_true, 1.0, &out.series, &sc.pop, &[5, 10, 20], &[1, 3]).unwrap();
    assert!(rep.horizon_mape.iter().all(|&m| m < 1e-9));
}

#[test]
fn comparison_with_true_network_tracks_actual() {
    let sc = scenario(10, 0.0, 95);
    let seeds = random_seed_counts(&sc.pop, 2, 10.0, 96);
    let out = generate_outbreak(&sc, 60, &seeds).unwrap();
    let c = simulate_comparison(&sc.g_true, &sc.g_true, &out.series, &sc.pop, 10).unwrap();
    assert!((c.alpha_d2pri - 1.0).abs() < 1e-9);
    for (a, d) in c.actual.iter().zip(&c.d2pri) {
        assert!((a - d).abs() <= 1e-6 * a.max(1.0));
    }
    assert_eq!(c.d2pri, c.basic);

    let quiet = OutbreakSeries::new(Array2::zeros((30, 10)), vec![], BETA, &sc.pop).unwrap();
    let c = simulate_comparison(&sc.g_true, &sc.g_true, &quiet, &sc.pop, 10).unwrap();
    for curve in [&c.actual, &c.d2pri, &c.basic, &c.sir] {
        assert!(curve.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn noise_free_simulation_reproduces_series() {
    let sc = scenario(12, 0.0, 97);
    let seeds = random_seed_counts(&sc.pop, 3, 10.0, 98);
    let out = generate_outbreak(&sc, 50, &seeds).unwrap();
    let sim = simulate_outbreak(&sc.g_true, &sc.pop, &out.series.prefix(1).unwrap(), 49).unwrap();
    for (a, b) in sim.series.deltas().iter().zip(out.series.deltas().iter()) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-12));
    }
}

#[test]
fn rankings_by_hand() {
    let pop = Metapopulation::new(vec![Zone::new("a", 100.0), Zone::new("b", 100.0), Zone::new("c", 100.0)]).unwrap();
    let s = OutbreakSeries::new(array![[0.0, 7.0, 0.0], [0.0, 3.0, 0.0]], vec![], BETA, &pop).unwrap();
    assert_eq!(infection_count_importance(&s).unwrap(), vec![0.0, 1.0, 0.0]);
    let s = OutbreakSeries::new(array![[4.0, 4.0, 4.0]], vec![], BETA, &pop).unwrap();
    assert_eq!(infection_count_importance(&s).unwrap(), vec![1.0 / 3.0; 3]);

    let complete = InfectionNetwork::new(Array2::from_elem((4, 4), 0.3)).unwrap();
    let pr = pagerank_importance(&complete, DEFAULT_DAMPING, DEFAULT_PAGERANK_TOL).unwrap();
    assert!(pr.iter().all(|x| (x - 0.25).abs() < 1e-12));
}

#[test]
fn cosine_spec_cases() {
    let a = InfectionNetwork::new(array![[5.0, 1.0], [1.0, 0.0]]).unwrap();
    let b = InfectionNetwork::new(array![[0.0, 2.0], [2.0, 9.0]]).unwrap();
    assert!((cosine_similarity(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    let c = InfectionNetwork::new(array![[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
    let d = InfectionNetwork::new(array![[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
    assert_eq!(cosine_similarity(&c, &d).unwrap(), 0.0);
}
