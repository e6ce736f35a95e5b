use metapop_wasm::{inference_view, outbreak_view, ranking_view, CityParams};

const CITY: CityParams = CityParams {
    zones: 25,
    days: 60,
    r0: 1.5,
    noise: 0.0,
    seed: 11,
};

#[test]
fn outbreak_curves_add_up() {
    let v = outbreak_view(CITY).unwrap();
    assert_eq!(v.citywide.len(), CITY.days);
    assert_eq!(v.top_zones.len(), 5);
    assert!(v.attack_rate > 0.0 && v.attack_rate < 1.0);
    for t in 0..CITY.days {
        let part: f64 = v.top_zones.iter().map(|z| z.infectious[t]).sum();
        assert!(part <= v.citywide[t] * (1.0 + 1e-12));
    }
}

#[test]
fn inference_recovers_the_network() {
    let v = inference_view(CITY, "d2pri", 3000).unwrap();
    assert_eq!(v.model, "d2pri");
    assert!(v.cosine > 0.7, "{}", v.cosine);
    assert_eq!(v.weights.as_ref().map(Vec::len), Some(2));
    assert!(v.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(v.truth_degree.is_some());

    let basic = inference_view(CITY, "basic", 3000).unwrap();
    assert!(basic.weights.is_none());
}

#[test]
fn unknown_model_is_rejected() {
    assert!(inference_view(CITY, "nope", 10).is_err());
}

#[test]
fn ranking_is_sorted_and_normalised() {
    let r = ranking_view(CITY).unwrap();
    assert_eq!(r.len(), CITY.zones);
    assert!(r.windows(2).all(|w| w[0].pagerank >= w[1].pagerank));
    let pr: f64 = r.iter().map(|z| z.pagerank).sum();
    let share: f64 = r.iter().map(|z| z.infection_share).sum();
    assert!((pr - 1.0).abs() < 1e-9);
    assert!((share - 1.0).abs() < 1e-9);
}

#[test]
fn tiny_city_is_an_error() {
    assert!(outbreak_view(CityParams { zones: 2, ..CITY }).is_err());
}
