use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use metapop::dynamics::states_from_deltas;
use metapop::evaluation::{
    cosine_similarity, degree_distribution, infection_count_importance, pagerank_importance, peak,
    prediction_report, simulate_comparison, write_curves_csv, write_prediction_csv, write_ranking_csv,
    DegreeDistribution, DEFAULT_PAGERANK_TOL,
};
use metapop::features::{build_feature_tensor, gravity_feature};
use metapop::inference::{fit_alpha_adjustment, spgd_infer};
use metapop::synthetic::{
    generate_outbreak, generate_scale_free_mobility, mobility_proxy_feature, random_metapopulation,
    random_seed_counts, SyntheticScenario,
};
use metapop::{io, InferenceConfig, InfectionNetwork, Metapopulation, OutbreakSeries, Variant};

use crate::manifest::Recorder;
use crate::{EvalArgs, GenArgs, InferArgs, PredictArgs, RankArgs, SeriesArgs, SimulateArgs};

/// Inconsistent or invalid flags; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "usage: {}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_zones(path: &Path, rec: &mut Recorder) -> Result<Metapopulation> {
    rec.input(path)?;
    io::read_zones(io::open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn read_series(args: &SeriesArgs, rec: &mut Recorder) -> Result<(Metapopulation, OutbreakSeries)> {
    let pop = read_zones(&args.zones, rec)?;
    rec.input(&args.deltas)?;
    let series = io::read_deltas(io::open(&args.deltas)?, &pop, args.beta)
        .with_context(|| format!("reading {}", args.deltas.display()))?;
    Ok((pop, series))
}

fn read_network(path: &Path, pop: &Metapopulation, rec: &mut Recorder) -> Result<InfectionNetwork> {
    rec.input(path)?;
    io::read_network(io::open(path)?, pop).with_context(|| format!("reading {}", path.display()))
}

// ------------------------------------------------------------------ gen

#[derive(Serialize)]
struct GenConfig {
    zones: usize,
    attach_m: usize,
    alpha: f64,
    beta: f64,
    volume_scale: f64,
    days: usize,
    noise: f64,
    seed_zones: usize,
    seed_cases: f64,
    proxy_noise: f64,
}

pub fn gen(a: &GenArgs) -> Result<()> {
    if a.attach_m == 0 || a.attach_m >= a.zones {
        return Err(usage(format!(
            "--attach-m must be in 1..zones, got {} with --zones {}",
            a.attach_m, a.zones
        )));
    }
    if a.seed_zones > a.zones {
        return Err(usage(format!("--seed-zones {} exceeds --zones {}", a.seed_zones, a.zones)));
    }
    if a.days == 0 {
        return Err(usage("--days must be positive"));
    }
    let pop = random_metapopulation(a.zones, a.seed)?;
    let mean = pop.total_population() / a.zones as f64;
    let alpha = a.alpha.unwrap_or(a.r0 * a.beta / mean);
    let h = generate_scale_free_mobility(&pop, a.attach_m, a.volume_scale * mean, a.seed.wrapping_add(1))
        .map_err(|e| usage(e.to_string()))?;
    let sc = SyntheticScenario::new(pop, h, alpha, a.beta, a.noise, a.seed.wrapping_add(2))
        .map_err(|e| usage(e.to_string()))?;
    let seeds = random_seed_counts(&sc.pop, a.seed_zones, a.seed_cases, a.seed.wrapping_add(3));
    let outbreak = generate_outbreak(&sc, a.days, &seeds)?;
    if let Some(w) = &outbreak.warning {
        eprintln!("warning: {w}");
    }
    let gravity = gravity_feature(&sc.pop)?;
    let proxy = mobility_proxy_feature(&sc.h, &sc.pop, a.proxy_noise, a.seed.wrapping_add(4))?;

    let cfg = GenConfig {
        zones: a.zones,
        attach_m: a.attach_m,
        alpha,
        beta: a.beta,
        volume_scale: a.volume_scale,
        days: a.days,
        noise: a.noise,
        seed_zones: a.seed_zones,
        seed_cases: a.seed_cases,
        proxy_noise: a.proxy_noise,
    };
    let mut rec = Recorder::new("gen", &a.out, cfg, Some(a.seed))?;
    rec.output("zones.csv", |w| io::write_zones(&sc.pop, w))?;
    rec.output("mobility.csv", |w| io::write_matrix(sc.h.matrix(), w))?;
    rec.output("network.csv", |w| io::write_matrix(sc.g_true.matrix(), w))?;
    rec.output("deltas.csv", |w| io::write_deltas(&outbreak.series, &sc.pop, w))?;
    rec.output("feature_gravity.csv", |w| io::write_matrix(gravity.view(), w))?;
    rec.output("feature_proxy.csv", |w| io::write_matrix(proxy.view(), w))?;
    rec.finish()?;

    let total: f64 = outbreak.series.totals().iter().sum();
    println!(
        "generated {} zones, {} days, {:.0} infections ({:.1}% of population), {} clamped rates",
        a.zones,
        a.days,
        total,
        100.0 * total / sc.pop.total_population(),
        outbreak.clamps.total()
    );
    Ok(())
}

// ---------------------------------------------------------------- infer

#[derive(Serialize)]
struct InferConfig<'a> {
    model: &'static str,
    beta: f64,
    features: Vec<String>,
    inference: &'a InferenceConfig,
}

fn resolve_config(a: &InferArgs) -> Result<InferenceConfig> {
    let mut cfg = match &a.config {
        Some(p) => io::read_config(io::open(p)?).with_context(|| format!("reading {}", p.display()))?,
        None => InferenceConfig::default(),
    };
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut cfg.lambda, a.lambda);
    set(&mut cfg.eta, a.eta);
    set(&mut cfg.mu, a.mu);
    set(&mut cfg.l1, a.l1);
    set(&mut cfg.l2, a.l2);
    set(&mut cfg.tol, a.tol);
    if let Some(m) = a.max_iters {
        cfg.max_iters = m;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn feature_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("feature_").map(str::to_string).unwrap_or(stem)
}

pub fn infer(a: &InferArgs) -> Result<()> {
    let variant: Variant = a.model.parse().map_err(|e: metapop::Error| usage(e.to_string()))?;
    let cfg = resolve_config(a)?;
    let unused = variant.unused_weights(&cfg);
    if !unused.is_empty() {
        return Err(usage(format!("model {variant} does not use {}", unused.join(", "))));
    }
    if variant.needs_features() && a.features.is_empty() {
        return Err(usage(format!("model {variant} needs at least one --feature")));
    }
    let names: Vec<String> = a.features.iter().map(|p| feature_name(p)).collect();
    let shown = InferConfig {
        model: variant.name(),
        beta: a.series.beta,
        features: names.clone(),
        inference: &cfg,
    };
    let mut rec = Recorder::new("infer", &a.out, shown, Some(cfg.seed))?;
    if let Some(p) = &a.config {
        rec.input(p)?;
    }
    let (pop, series) = read_series(&a.series, &mut rec)?;
    let states = states_from_deltas(&series, &pop)?;
    let x = if a.features.is_empty() {
        None
    } else {
        let mut slices = Vec::new();
        for p in &a.features {
            rec.input(p)?;
            let m = io::read_matrix(io::open(p)?).with_context(|| format!("reading {}", p.display()))?;
            slices.push(m);
        }
        Some(build_feature_tensor(slices, names.clone())?)
    };
    let truth = match &a.truth {
        Some(p) => Some(read_network(p, &pop, &mut rec)?),
        None => None,
    };

    let fit = spgd_infer(&states, x.as_ref(), &cfg, variant)?;
    rec.output("network.csv", |w| io::write_matrix(fit.network.matrix(), w))?;
    if let Some(weights) = &fit.weights {
        rec.output("weights.csv", |w| {
            let mut out = csv_writer(w);
            out.write_record(["feature", "weight"])?;
            for (name, v) in names.iter().zip(weights.as_slice()) {
                out.write_record([name.as_str(), &format!("{v:?}")])?;
            }
            out.flush()?;
            Ok(())
        })?;
    }
    rec.output("trace.csv", |w| io::write_trace(&fit.objective_trace, w))?;
    rec.finish()?;

    let last = fit.objective_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "model {variant}: {} iterations, converged {}, objective {last:.6e}",
        fit.iterations, fit.converged
    );
    if let Some(t) = &truth {
        println!("cosine similarity to truth {:.4}", cosine_similarity(&fit.network, t)?);
    }
    Ok(())
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

// -------------------------------------------------------------- predict

#[derive(Serialize)]
struct PredictConfig<'a> {
    beta: f64,
    horizons: &'a [usize],
    fit_days: usize,
    alpha_adj: Option<f64>,
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    if a.horizons.is_empty() || a.horizons.contains(&0) {
        return Err(usage("--horizons must be positive day counts"));
    }
    let shown = PredictConfig {
        beta: a.series.beta,
        horizons: &a.horizons,
        fit_days: a.fit_days,
        alpha_adj: a.alpha_adj,
    };
    let mut rec = Recorder::new("predict", &a.out, shown, None)?;
    let (pop, series) = read_series(&a.series, &mut rec)?;
    let g = read_network(&a.network, &pop, &mut rec)?;
    if a.fit_days == 0 || a.fit_days >= series.days() {
        return Err(usage(format!(
            "--fit-days must be in 1..{} for a {}-day series",
            series.days(),
            series.days()
        )));
    }
    let alpha = match a.alpha_adj {
        Some(x) => x,
        None => fit_alpha_adjustment(&g, &states_from_deltas(&series.prefix(a.fit_days)?, &pop)?)?,
    };
    let starts: Vec<usize> = (a.fit_days..series.days()).collect();
    let report = prediction_report(&g, alpha, &series, &pop, &starts, &a.horizons)?;
    rec.output("prediction.csv", |w| write_prediction_csv(&report, &pop, w))?;
    rec.output("prediction.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        Ok(())
    })?;
    rec.finish()?;

    println!("rate adjustment {alpha:.4}");
    println!("horizon  mape");
    for (h, m) in report.horizons.iter().zip(&report.horizon_mape) {
        println!("{h:>7}  {m:.4}");
    }
    Ok(())
}

// ------------------------------------------------------------- simulate

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let shown = serde_json::json!({ "beta": a.series.beta, "warmup": a.warmup });
    let mut rec = Recorder::new("simulate", &a.out, shown, None)?;
    let (pop, series) = read_series(&a.series, &mut rec)?;
    if a.warmup == 0 || a.warmup >= series.days() {
        return Err(usage(format!("--warmup must be in 1..{}", series.days())));
    }
    let d2 = read_network(&a.d2pri, &pop, &mut rec)?;
    let basic = read_network(&a.basic, &pop, &mut rec)?;
    let curves = simulate_comparison(&d2, &basic, &series, &pop, a.warmup)?;
    rec.output("curves.csv", |w| write_curves_csv(&curves, series.dates(), w))?;
    rec.finish()?;

    for (name, curve, alpha) in [
        ("actual", &curves.actual, None),
        ("d2pri", &curves.d2pri, Some(curves.alpha_d2pri)),
        ("basic", &curves.basic, Some(curves.alpha_basic)),
        ("sir", &curves.sir, Some(curves.alpha_sir)),
    ] {
        let (day, height) = peak(curve).unwrap_or((0, 0.0));
        match alpha {
            Some(x) => println!("{name:<7} peak day {day:>4}  height {height:>12.1}  rate {x:.4e}"),
            None => println!("{name:<7} peak day {day:>4}  height {height:>12.1}"),
        }
    }
    Ok(())
}

// ----------------------------------------------------------------- rank

pub fn rank(a: &RankArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.damping) {
        return Err(usage(format!("--damping {} outside [0, 1]", a.damping)));
    }
    let shown = serde_json::json!({ "beta": a.series.beta, "damping": a.damping });
    let mut rec = Recorder::new("rank", &a.out, shown, None)?;
    let (pop, series) = read_series(&a.series, &mut rec)?;
    let g = read_network(&a.network, &pop, &mut rec)?;
    let pr = pagerank_importance(&g, a.damping, DEFAULT_PAGERANK_TOL)?;
    let counts = infection_count_importance(&series)?;
    rec.output("ranking.csv", |w| write_ranking_csv(&pop, &pr, &counts, w))?;
    rec.finish()?;

    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&x, &y| pr[y].total_cmp(&pr[x]));
    println!("zone        pagerank  infections");
    for &k in order.iter().take(10) {
        println!("{:<10} {:>9.4} {:>11.4}", pop.zones()[k].id, pr[k], counts[k]);
    }
    Ok(())
}

// ----------------------------------------------------------------- eval

#[derive(Serialize)]
struct EvalReport {
    cosine_to_truth: Option<f64>,
    degree: Option<DegreeDistribution>,
    truth_degree: Option<DegreeDistribution>,
    note: Vec<String>,
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if a.n_bins == 0 {
        return Err(usage("--n-bins must be positive"));
    }
    let shown = serde_json::json!({ "n_bins": a.n_bins });
    let mut rec = Recorder::new("eval", &a.out, shown, None)?;
    let pop = read_zones(&a.zones, &mut rec)?;
    let g = read_network(&a.network, &pop, &mut rec)?;
    let truth = match &a.truth {
        Some(p) => Some(read_network(p, &pop, &mut rec)?),
        None => None,
    };
    let mut note = Vec::new();
    let mut describe = |what: &str, g: &InfectionNetwork| match degree_distribution(g, a.n_bins) {
        Ok(d) => Some(d),
        Err(e) => {
            note.push(format!("{what}: {e}"));
            None
        }
    };
    let degree = describe("network", &g);
    let truth_degree = truth.as_ref().and_then(|t| describe("truth", t));
    let report = EvalReport {
        cosine_to_truth: truth.as_ref().map(|t| cosine_similarity(&g, t)).transpose()?,
        degree,
        truth_degree,
        note,
    };
    rec.output("eval.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        Ok(())
    })?;
    rec.finish()?;

    if let Some(c) = report.cosine_to_truth {
        println!("cosine similarity to truth {c:.4}");
    }
    if let Some(d) = &report.degree {
        println!(
            "degree exponent {:.3} (fit residual {:.3}, {} bins)",
            d.exponent, d.residual_rms, d.nonempty_bins
        );
    }
    for n in &report.note {
        println!("note: {n}");
    }
    Ok(())
}
