use std::f64::consts::LN_2;
use std::sync::Arc;

use proptest::prelude::*;

use jamshield::config::Config;
use jamshield::detector::features::block_average;
use jamshield::detector::pca::Pca;
use jamshield::detector::prediction_entropy;
use jamshield::env::{JamEnv, RewardWeights};
use jamshield::evaluation::{ecdf, replay, Policy};
use jamshield::linalg::Matrix;
use jamshield::link_abstraction::{
    effective_sinr, harq_episode, per_closed_form, sinr_to_bler, EsmConfig, HarqConfig, PerMode, R_MAX,
};
use jamshield::marl::dist::softmax;
use jamshield::marl::gae::compute_gae;
use jamshield::marl::ppo::ppo_clip_objective;
use jamshield::propagation::{array_gain, path_loss, steering_vector, ArrayGeometry, PathLossConstants};
use jamshield::rng::{derive_seed, stream, Stream};
use jamshield::scenario::ScenarioConfig;

fn esm() -> EsmConfig {
    ScenarioConfig::default().esm
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_loss_decreases_with_distance(d in 1.0f64..5000.0, k in 1.01f64..10.0, los in any::<bool>()) {
        let c = PathLossConstants::default();
        let near = path_loss(d, los, &c).unwrap();
        let far = path_loss(d * k, los, &c).unwrap();
        prop_assert!(near > far && far > 0.0);
    }

    #[test]
    fn steering_vectors_are_unit_norm_and_gain_is_bounded(
        m in 1usize..9, t in 0.0f64..3.14, p in 0.0f64..6.28, t2 in 0.0f64..3.14, p2 in 0.0f64..6.28
    ) {
        let g = ArrayGeometry::for_count(m, 0.0857);
        let w = steering_vector(t, p, &g);
        let norm: f64 = w.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        prop_assert!((array_gain(&w, t, p, &g) - m as f64).abs() < 1e-9);
        let off = array_gain(&w, t2, p2, &g);
        prop_assert!((-1e-12..=m as f64 + 1e-9).contains(&off));
    }

    #[test]
    fn effective_sinr_lies_between_extremes(sinr in prop::collection::vec(1e-3f64..1e3, 1..32)) {
        let e = effective_sinr(&sinr, &esm()).unwrap();
        let lo = sinr.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sinr.iter().cloned().fold(0.0, f64::max);
        prop_assert!(e >= lo * (1.0 - 1e-9) && e <= hi * (1.0 + 1e-9));
    }

    #[test]
    fn bler_is_a_decreasing_probability(s in 1e-4f64..1e4, k in 1.01f64..10.0) {
        let (a, b) = (sinr_to_bler(s, &esm()), sinr_to_bler(s * k, &esm()));
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(b <= a);
    }

    #[test]
    fn per_is_a_probability(b in 0.0f64..=1.0, r in 0u32..8) {
        for mode in [PerMode::AsWritten, PerMode::Residual] {
            prop_assert!((0.0..=1.0).contains(&per_closed_form(b, r, mode)));
        }
        prop_assert!(per_closed_form(b, r, PerMode::Residual) <= b + 1e-15);
    }

    #[test]
    fn harq_attempts_are_bounded(b in 0.0f64..=1.0, r in 0u32..=R_MAX, seed in any::<u64>()) {
        let h = HarqConfig::new(r).unwrap();
        let mut rng = stream(seed, Stream::Harq);
        for _ in 0..20 {
            let (ok, a) = harq_episode(b, &h, &mut rng);
            prop_assert!(a >= 1 && a <= r + 1);
            prop_assert!(ok || a == r + 1);
        }
    }

    #[test]
    fn gae_with_unit_lambda_is_the_discounted_return(
        rv in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20), gamma in 0.0f64..0.99, tail in -3.0f64..3.0
    ) {
        let (r, v): (Vec<f64>, Vec<f64>) = rv.into_iter().unzip();
        let (adv, ret) = compute_gae(&r, &v, tail, gamma, 1.0);
        let mut g = tail;
        for t in (0..r.len()).rev() {
            g = r[t] + gamma * g;
            prop_assert!((ret[t] - g).abs() < 1e-9 * (1.0 + g.abs()));
            prop_assert!((adv[t] - (g - v[t])).abs() < 1e-9 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn clipped_objective_never_exceeds_unclipped(ratio in 0.0f64..3.0, adv in -5.0f64..5.0, eps in 0.01f64..0.5) {
        prop_assert!(ppo_clip_objective(ratio, adv, eps) <= ratio * adv + 1e-12);
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let h = prediction_entropy(&p).unwrap();
        prop_assert!(h >= -1e-12 && h <= (z.len() as f64).ln() + 1e-12);
        if z.len() == 2 {
            prop_assert!(h <= LN_2 + 1e-12);
        }
    }

    #[test]
    fn ecdf_is_monotone_and_ends_at_one(v in prop::collection::vec(0.0f64..1.0, 1..100)) {
        let c = ecdf(&v);
        prop_assert!(c.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 > w[0].1));
        prop_assert!((c.last().unwrap().1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_average_preserves_the_mean(v in prop::collection::vec(-10.0f64..10.0, 1..20), k in 1usize..6) {
        let x: Vec<f64> = v.iter().flat_map(|&a| std::iter::repeat(a).take(k)).collect();
        let b = block_average(&x, v.len());
        prop_assert_eq!(b.len(), v.len());
        for (a, e) in b.iter().zip(&v) {
            prop_assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_seeds_are_deterministic_and_distinct(m in any::<u64>(), i in 0u64..1000) {
        prop_assert_eq!(derive_seed(m, i), derive_seed(m, i));
        prop_assert_ne!(derive_seed(m, i), derive_seed(m, i + 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pca_matches_a_dense_eigensolver(rows in 6usize..20, cols in 2usize..6, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = stream(seed, Stream::Dataset);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let pca = Pca::fit(&Matrix::from_vec(rows, cols, data.clone()).unwrap(), cols).unwrap();
        let dm = nalgebra::DMatrix::from_row_slice(rows, cols, &data);
        let centered = &dm - nalgebra::DMatrix::from_fn(rows, cols, |_, j| dm.column(j).mean());
        let cov = centered.transpose() * &centered / rows as f64;
        let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in pca.explained_variance.iter().zip(&ev) {
            prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn random_episodes_produce_valid_kpis(topology in 0u64..1000, episode in any::<u64>()) {
        let sc = Arc::new(ScenarioConfig { episode_slots: 20, ..ScenarioConfig::default() });
        let mut env = JamEnv::new(sc, RewardWeights::default(), topology, None).unwrap();
        let kpis = replay(&mut env, Policy::Random, episode).unwrap();
        prop_assert!(!kpis.is_empty());
        for k in &kpis {
            prop_assert!((0.0..=1.0).contains(&k.packet_loss_rate));
            prop_assert!(k.attempts >= 1.0 && k.attempts <= (R_MAX + 1) as f64);
            prop_assert!(k.latency_s >= 0.0 && k.jitter_s >= 0.0);
            prop_assert!(k.sinr_eff >= 0.0 && k.rssi_w > 0.0);
            prop_assert!(k.reward_agent1.is_finite() && k.reward_agent2.is_finite());
        }
    }

    #[test]
    fn config_hash_is_stable_under_round_trip(epochs in 1usize..1000, gamma in 0.0f64..0.999, seed in 0u64..1 << 40) {
        let mut c = Config::default();
        c.trainer.epochs = epochs;
        c.trainer.gamma = gamma;
        c.scenario.seed = seed;
        let back = Config::from_toml(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }
}
