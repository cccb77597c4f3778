use bess_core::env::safety_project;
use bess_core::profiles::{scale_profile, synth_scenario, ScenarioData};
use bess_core::sac::{scale_action, unscale_action, Mlp, ReplayBuffer};
use bess_core::system::{balance_residual, simulate_schedule, BatteryParams, GridParams, Schedule};
use bess_core::uncertainty::{entropy_bits, DistSpec, Family};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn day() -> ScenarioData {
    synth_scenario(7, 48, 0.5).unwrap()
}

fn schedule_strategy(n: usize) -> impl Strategy<Value = Schedule> {
    (
        prop::collection::vec(0.0..5000.0f64, n),
        prop::collection::vec(-1000.0..1000.0f64, n),
        prop::collection::vec(1.0..1000.0f64, n),
        prop::collection::vec(1.0..1000.0f64, n),
    )
        .prop_map(|(p_g, p_b, alpha_g, alpha_b)| Schedule { p_g, p_b, alpha_g, alpha_b })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soc_telescopes(sched in schedule_strategy(48)) {
        let s = day();
        let b = BatteryParams::default();
        let tr = simulate_schedule(&s, &sched, &b, &[0.0; 48]).unwrap();
        let drawn: f64 = sched.p_b.iter().sum::<f64>() * s.dt_hours() / b.capacity_kwh;
        prop_assert!((tr.end_soc - (b.soc_init - drawn)).abs() < 1e-9);
        prop_assert!((tr.min_soc - tr.soc[1..].iter().cloned().fold(f64::INFINITY, f64::min)).abs() == 0.0);
    }

    #[test]
    fn cost_is_homogeneous_in_prices(sched in schedule_strategy(48), k in 0.1..10.0f64) {
        let s = day();
        let b = BatteryParams::default();
        let scaled = scale_profile(&s, 1.0, k).unwrap();
        let c1 = simulate_schedule(&s, &sched, &b, &[0.0; 48]).unwrap().total_cost;
        let ck = simulate_schedule(&scaled, &sched, &b, &[0.0; 48]).unwrap().total_cost;
        prop_assert!((ck - k * c1).abs() <= 1e-9 * ck.abs().max(1.0));
    }

    #[test]
    fn balanced_schedule_has_zero_residual(t in 0usize..48, share in 0.0..1.0f64, unc in -300.0..300.0f64) {
        let s = day();
        let need = s.p_d()[t] + unc - s.p_pv()[t];
        let p_g = share * need;
        let p_b = need - p_g;
        prop_assert!(balance_residual(p_g, p_b, s.p_pv()[t], s.p_d()[t], unc).abs() < 1e-9);
    }

    #[test]
    fn entropy_never_exceeds_bin_capacity(xs in prop::collection::vec(-1e3..1e3f64, 1..400), bins in 1usize..40) {
        let h = entropy_bits(&xs, bins).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (bins as f64).log2() + 1e-12);
    }

    #[test]
    fn action_scaling_round_trips(u0 in -1.0..1.0f64, u1 in -1.0..1.0f64) {
        let (g, b) = (GridParams::default(), BatteryParams::default());
        let p = scale_action([u0, u1], &g, &b);
        prop_assert!(g.p_g_min <= p.0 && p.0 <= g.p_g_max);
        prop_assert!(b.p_b_min <= p.1 && p.1 <= b.p_b_max);
        let back = unscale_action(p, &g, &b);
        prop_assert!((back[0] - u0).abs() < 1e-12 && (back[1] - u1).abs() < 1e-12);
    }

    #[test]
    fn safety_keeps_ratio_when_nothing_clamps(p_g in 10.0..2000.0f64, p_b in 10.0..400.0f64, k in 0.5..1.5f64) {
        // required power is a rescaled copy of the request, so no clamp binds
        let (g, b) = (GridParams::default(), BatteryParams::default());
        let required = k * (p_g + p_b);
        let out = safety_project(p_g, p_b, 0.0, required, &g, &b);
        prop_assert!((out.kappa - k).abs() < 1e-12);
        prop_assert!((out.p_g * p_b - out.p_b * p_g).abs() < 1e-6 * (p_g * p_b));
        prop_assert_eq!(out.leftover_kw, 0.0);
    }

    #[test]
    fn soft_update_contracts(seed in 0u64..1000, tau in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Mlp::new(&[3, 5, 1], &mut rng).unwrap();
        let mut target = Mlp::new(&[3, 5, 1], &mut rng).unwrap();
        let dist = |a: &Mlp, b: &Mlp| a.params().iter().zip(b.params()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let before = dist(&target, &online);
        target.soft_update_from(&online, tau).unwrap();
        prop_assert!((dist(&target, &online) - (1.0 - tau) * before).abs() < 1e-12);
    }
}

#[test]
fn safety_layer_balances_random_pairs() {
    let (g, b) = (GridParams::default(), BatteryParams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut scaled = 0;
    for _ in 0..10_000 {
        use rand::Rng;
        let required = rng.random_range(b.p_b_min + g.p_g_min..=b.p_b_max + g.p_g_max);
        let p_pv = rng.random_range(0.0..2000.0);
        let out = safety_project(
            rng.random_range(g.p_g_min..=g.p_g_max),
            rng.random_range(b.p_b_min..=b.p_b_max),
            p_pv,
            required + p_pv,
            &g,
            &b,
        );
        assert!(g.p_g_min <= out.p_g && out.p_g <= g.p_g_max);
        assert!(b.p_b_min <= out.p_b && out.p_b <= b.p_b_max);
        assert!(out.leftover_kw.abs() <= 1e-6);
        assert!((out.p_g + out.p_b + p_pv - (required + p_pv)).abs() <= 1e-6);
        scaled += usize::from(out.kappa != 1.0);
    }
    assert!(scaled > 9_000);
}

#[test]
fn synth_is_valid_for_many_seeds() {
    for seed in 0..100 {
        let s = synth_scenario(seed, 48, 0.5).unwrap();
        // the constructor rejects negative and non-finite entries, so a
        // round trip through it must succeed
        ScenarioData::new("check", 0.5, s.p_pv().to_vec(), s.p_d().to_vec(), s.c_g().to_vec(), s.c_b().to_vec())
            .unwrap();
        assert!(s.p_pv()[..12].iter().all(|&v| v == 0.0), "seed {seed}: PV before 06:00");
        assert!(s.p_d().iter().all(|&d| (500.0..=3000.0).contains(&d)));
        assert!(s.c_g().iter().all(|&c| (0.05..=0.50).contains(&c)));
    }
}

#[test]
fn sampled_factor_means_match_analytic() {
    let n = 200_000;
    for fam in Family::ALL {
        let spec = DistSpec::default_for(fam);
        let mut rng = ChaCha8Rng::seed_from_u64(fam as u64);
        let mean = (0..n).map(|_| spec.sample_factor(&mut rng)).sum::<f64>() / n as f64;
        let tol = 5.0 * spec.factor_sd() / (n as f64).sqrt();
        assert!((mean - spec.factor_mean()).abs() < tol, "{fam:?}: {mean} vs {}", spec.factor_mean());
    }
}

#[test]
fn replay_ring_keeps_latest_rows() {
    let mut buf = ReplayBuffer::new(5, 1, 2);
    for i in 0..12 {
        buf.push(&[i as f64], &[0.0, 0.0], i as f64, &[0.0], false).unwrap();
    }
    assert_eq!(buf.len(), 5);
    assert_eq!(buf.cursor(), 12 % 5);
    let mut kept: Vec<f64> = (0..5).map(|i| buf.reward_at(i).unwrap()).collect();
    kept.sort_by(f64::total_cmp);
    assert_eq!(kept, vec![7.0, 8.0, 9.0, 10.0, 11.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = buf.sample(5, &mut rng).unwrap();
    assert!(batch.rewards.iter().all(|r| (7.0..=11.0).contains(r)));
    assert!(batch.obs.column(0).iter().zip(&batch.rewards).all(|(o, r)| o == r));
}
