use metaddc::controller::ControllerBasis;
use metaddc::lti::{check_similarity, feedback};
use metaddc::motor::{
    check_loop, collect_campaign, conservative_pi, default_family, make_plant, run_closed_loop, CampaignProtocol,
    NoiseConfig, ReferenceProtocol, SAMPLE_TIME,
};
use proptest::prelude::*;
use rayon::prelude::*;

#[test]
fn noise_free_loop_matches_closed_form() {
    let r = ReferenceProtocol::default().signal(SAMPLE_TIME).unwrap();
    let c = conservative_pi();
    let c_tf = ControllerBasis::pi(SAMPLE_TIME).unwrap().controller_tf(&c).unwrap();
    for cfg in default_family() {
        let g = make_plant(&cfg).unwrap();
        let looped = run_closed_loop(&g, &c, &r, &NoiseConfig::noiseless()).unwrap();
        let closed = feedback(&g, &c_tf).unwrap().simulate(&r).unwrap();
        let worst = looped.y.iter().zip(&closed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let peak = closed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-9 * peak, "config {}: {worst} on peak {peak}", cfg.config_id);
    }
}

#[test]
fn conservative_pi_stabilizes_every_plant() {
    let c_tf = ControllerBasis::pi(SAMPLE_TIME).unwrap().controller_tf(&conservative_pi()).unwrap();
    for cfg in default_family() {
        check_loop(&make_plant(&cfg).unwrap(), &c_tf).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noise_variance_matches_sigma(sigma in 0.1..50.0f64, seed in any::<u64>()) {
        let v = NoiseConfig { sigma, seed }.sequence(20_000).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        prop_assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "{var} vs {}", sigma * sigma);
    }
}

#[test]
fn rise_times_sort_like_inertias() {
    let mut fam = default_family();
    fam.sort_by(|a, b| a.inertia.total_cmp(&b.inertia));
    let rise: Vec<usize> = fam
        .iter()
        .map(|cfg| {
            let g = make_plant(cfg).unwrap();
            let (a, dc) = (-g.den()[1], g.dc_gain());
            // first sample with y ≥ 0.632·dc, from y(k) = dc (1 − aᵏ)
            let k = ((1.0 - 0.632f64).ln() / a.ln()).ceil() as usize;
            let y = |n: usize| dc * (1.0 - a.powi(n as i32));
            assert!(y(k) >= 0.632 * dc && (k == 0 || y(k - 1) < 0.632 * dc));
            k
        })
        .collect();
    assert!(rise.windows(2).all(|w| w[0] <= w[1]), "{rise:?}");
    // short-horizon check against the simulator itself for the fastest plant
    let g = make_plant(&fam[0]).unwrap();
    let s = g.step_response(rise[0] + 1);
    assert!(s[rise[0]] >= 0.632 * g.dc_gain() && s[rise[0] - 1] < 0.632 * g.dc_gain());
}

#[test]
fn family_members_are_pairwise_similar() {
    let plants: Vec<_> = default_family().iter().map(|c| make_plant(c).unwrap()).collect();
    let n = plants.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let dist: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| check_similarity(&plants[i], &plants[j], 0.0).unwrap().delta_g)
        .collect();
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0;
    let eps = 2.0 * median;
    for i in 0..n {
        let near = pairs.iter().zip(&dist).any(|(&(a, b), &d)| (a == i || b == i) && d <= eps);
        assert!(near, "plant {i} has no ε-similar neighbour");
    }
}

#[test]
fn campaign_is_order_independent_and_labelled() {
    let fam = default_family();
    let proto = CampaignProtocol {
        reference: ReferenceProtocol {
            duration: 1.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let all = collect_campaign(&fam, &proto).unwrap();
    let rev: Vec<_> = fam.iter().rev().cloned().collect();
    let back = collect_campaign(&rev, &proto).unwrap();
    for (a, b) in all.iter().zip(back.iter().rev()) {
        assert_eq!(a, b);
    }
    assert_eq!(all[0].label, "cfg01-s0");
    assert_eq!(all[0].len(), 1000);
    assert!(all.iter().all(|d| d.r.as_ref().unwrap()[0] == 1500.0));
}
