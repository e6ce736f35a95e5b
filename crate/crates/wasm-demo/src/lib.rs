//! Browser bindings for a small synthetic-city demo. Each exported function
//! rebuilds the city from its seed and returns a JSON string.

use metapop::evaluation::{
    cosine_similarity, degree_distribution, infection_count_importance, pagerank_importance, DEFAULT_DAMPING,
};
use metapop::features::{build_feature_tensor, gravity_feature};
use metapop::synthetic::{
    generate_outbreak, generate_scale_free_mobility, mobility_proxy_feature, random_metapopulation, random_seed_counts,
    SyntheticScenario,
};
use metapop::{dynamics, inference, InferenceConfig, OutbreakSeries, Result, Variant};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const BETA: f64 = 0.2;
const ATTACH_M: usize = 2;
const SEED_ZONES: usize = 3;
const SEED_CASES: f64 = 10.0;
/// Longest trace sent to the page.
const TRACE_POINTS: usize = 200;

/// A city of `zones` zones and an outbreak of `days` days.
#[derive(Debug, Clone, Copy)]
pub struct CityParams {
    pub zones: usize,
    pub days: usize,
    pub r0: f64,
    pub noise: f64,
    pub seed: u64,
}

struct City {
    scenario: SyntheticScenario,
    series: OutbreakSeries,
}

fn build_city(p: CityParams) -> Result<City> {
    if p.zones <= ATTACH_M || p.zones < SEED_ZONES {
        return Err(metapop::Error::InvalidArgument(format!("need more than {ATTACH_M} zones")));
    }
    let pop = random_metapopulation(p.zones, p.seed)?;
    let mean = pop.total_population() / p.zones as f64;
    let h = generate_scale_free_mobility(&pop, ATTACH_M, 0.2 * mean, p.seed.wrapping_add(1))?;
    let scenario = SyntheticScenario::new(pop, h, p.r0 * BETA / mean, BETA, p.noise, p.seed.wrapping_add(2))?;
    let seeds = random_seed_counts(&scenario.pop, SEED_ZONES, SEED_CASES, p.seed.wrapping_add(3));
    let series = generate_outbreak(&scenario, p.days, &seeds)?.series;
    Ok(City { scenario, series })
}

#[derive(Debug, Serialize)]
pub struct ZoneCurve {
    pub id: String,
    pub population: f64,
    pub infectious: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct OutbreakView {
    pub citywide: Vec<f64>,
    pub attack_rate: f64,
    /// The five zones with the most infections.
    pub top_zones: Vec<ZoneCurve>,
}

pub fn outbreak_view(p: CityParams) -> Result<OutbreakView> {
    let city = build_city(p)?;
    let pop = &city.scenario.pop;
    let states = dynamics::states_from_deltas(&city.series, pop)?;
    let totals = city.series.totals();
    let mut order: Vec<usize> = (0..pop.len()).collect();
    let per_zone: Vec<f64> = (0..pop.len()).map(|n| city.series.deltas().column(n).sum()).collect();
    order.sort_by(|&a, &b| per_zone[b].total_cmp(&per_zone[a]));
    let top_zones = order
        .into_iter()
        .take(5)
        .map(|n| {
            let z = &pop.zones()[n];
            ZoneCurve {
                id: z.id.clone(),
                population: z.population,
                infectious: states.v.column(n).to_vec(),
            }
        })
        .collect();
    Ok(OutbreakView {
        citywide: dynamics::infectious_curve(&city.series, pop)?,
        attack_rate: totals.iter().sum::<f64>() / pop.total_population(),
        top_zones,
    })
}

#[derive(Debug, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub density: Vec<f64>,
    pub exponent: f64,
}

#[derive(Debug, Serialize)]
pub struct InferenceView {
    pub model: &'static str,
    pub iterations: usize,
    pub converged: bool,
    pub cosine: f64,
    pub weights: Option<Vec<f64>>,
    pub trace: Vec<f64>,
    pub degree: Option<Histogram>,
    pub truth_degree: Option<Histogram>,
}

fn histogram(g: &metapop::InfectionNetwork) -> Option<Histogram> {
    degree_distribution(g, 8).ok().map(|d| Histogram {
        bin_edges: d.bin_edges,
        density: d.density,
        exponent: d.exponent,
    })
}

fn thin(trace: &[f64]) -> Vec<f64> {
    if trace.is_empty() {
        return Vec::new();
    }
    let stride = trace.len().div_ceil(TRACE_POINTS).max(1);
    let mut out: Vec<f64> = trace.iter().step_by(stride).copied().collect();
    if !(trace.len() - 1).is_multiple_of(stride) {
        out.extend(trace.last());
    }
    out
}

pub fn inference_view(p: CityParams, model: &str, max_iters: usize) -> Result<InferenceView> {
    let variant: Variant = model.parse()?;
    let city = build_city(p)?;
    let sc = &city.scenario;
    let states = dynamics::states_from_deltas(&city.series, &sc.pop)?;
    let x = build_feature_tensor(
        vec![
            gravity_feature(&sc.pop)?,
            mobility_proxy_feature(&sc.h, &sc.pop, 0.5, p.seed.wrapping_add(4))?,
        ],
        vec!["gravity".into(), "proxy".into()],
    )?;
    let all = InferenceConfig {
        lambda: 1e-6,
        eta: 1e4,
        mu: 1.0,
        l1: 1e-4,
        l2: 1e2,
        max_iters,
        ..Default::default()
    };
    let fit = inference::spgd_infer(&states, Some(&x), &variant.restrict(&all), variant)?;
    Ok(InferenceView {
        model: variant.name(),
        iterations: fit.iterations,
        converged: fit.converged,
        cosine: cosine_similarity(&fit.network, &sc.g_true)?,
        weights: fit.weights.map(|w| w.into_vec()),
        trace: thin(&fit.objective_trace),
        degree: histogram(&fit.network),
        truth_degree: histogram(&sc.g_true),
    })
}

#[derive(Debug, Serialize)]
pub struct RankedZone {
    pub id: String,
    pub pagerank: f64,
    pub infection_share: f64,
}

/// Zones of the true network ordered by PageRank.
pub fn ranking_view(p: CityParams) -> Result<Vec<RankedZone>> {
    let city = build_city(p)?;
    let pop = &city.scenario.pop;
    let pr = pagerank_importance(&city.scenario.g_true, DEFAULT_DAMPING, 1e-10)?;
    let share = infection_count_importance(&city.series)?;
    let mut out: Vec<RankedZone> = pop
        .zones()
        .iter()
        .enumerate()
        .map(|(n, z)| RankedZone {
            id: z.id.clone(),
            pagerank: pr[n],
            infection_share: share[n],
        })
        .collect();
    out.sort_by(|a, b| b.pagerank.total_cmp(&a.pagerank));
    Ok(out)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn outbreak(zones: usize, days: usize, r0: f64, noise: f64, seed: u64) -> std::result::Result<String, JsError> {
    to_js(outbreak_view(CityParams { zones, days, r0, noise, seed }))
}

#[wasm_bindgen]
pub fn infer(
    zones: usize,
    days: usize,
    r0: f64,
    noise: f64,
    seed: u64,
    model: &str,
    max_iters: usize,
) -> std::result::Result<String, JsError> {
    to_js(inference_view(CityParams { zones, days, r0, noise, seed }, model, max_iters))
}

#[wasm_bindgen]
pub fn rank(zones: usize, days: usize, r0: f64, noise: f64, seed: u64) -> std::result::Result<String, JsError> {
    to_js(ranking_view(CityParams { zones, days, r0, noise, seed }))
}
