#![allow(dead_code)]

use metapop::dynamics::states_from_deltas;
use metapop::features::{build_feature_tensor, gravity_feature, FeatureTensor};
use metapop::synthetic::{
    generate_outbreak, generate_scale_free_mobility, mobility_proxy_feature, random_metapopulation,
    random_seed_counts, SyntheticScenario,
};
use metapop::{InferenceConfig, OutbreakSeries, StateSeries};

pub const BETA: f64 = 0.2;

/// A noisy outbreak on a preferential-attachment city, with its features.
pub struct Case {
    pub scenario: SyntheticScenario,
    pub series: OutbreakSeries,
    pub states: StateSeries,
    pub features: FeatureTensor,
}

/// `n` zones, two attachments per new zone, edge volumes up to
/// `volume_frac` of the mean population, and an infection rate giving a
/// within-zone reproduction number of 1.5. Three zones are seeded with ten
/// cases each.
pub fn scale_free_case(n: usize, volume_frac: f64, sigma: f64, days: usize, seed: u64) -> Case {
    let pop = random_metapopulation(n, 100 + seed).unwrap();
    let mean = pop.total_population() / n as f64;
    let h = generate_scale_free_mobility(&pop, 2, volume_frac * mean, 200 + seed).unwrap();
    let scenario = SyntheticScenario::new(pop, h, 1.5 * BETA / mean, BETA, sigma, 300 + seed).unwrap();
    let seeds = random_seed_counts(&scenario.pop, 3, 10.0, 400 + seed);
    let series = generate_outbreak(&scenario, days, &seeds).unwrap().series;
    let states = states_from_deltas(&series, &scenario.pop).unwrap();
    let features = city_features(&scenario, seed);
    Case {
        scenario,
        series,
        states,
        features,
    }
}

/// Gravity volumes plus a log-normally perturbed observation of mobility.
pub fn city_features(scenario: &SyntheticScenario, seed: u64) -> FeatureTensor {
    let grav = gravity_feature(&scenario.pop).unwrap();
    let proxy = mobility_proxy_feature(&scenario.h, &scenario.pop, 0.5, 500 + seed).unwrap();
    build_feature_tensor(vec![grav, proxy], vec!["gravity".into(), "proxy".into()]).unwrap()
}

/// Prior weights used for the 50-zone experiments.
pub fn prior_config() -> InferenceConfig {
    InferenceConfig {
        lambda: 1e-6,
        eta: 1e4,
        mu: 1.0,
        max_iters: 50_000,
        ..Default::default()
    }
}

pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {id} [{name}]: {} {detail}", if pass { "PASS" } else { "FAIL" });
}
