//! Helpers shared by several test targets.

#![allow(dead_code)]

use bess_core::grad_opt::{alpha_targets, penalty_loss, GradOptConfig};
use bess_core::profiles::synth_scenario;
use bess_core::system::GridParams;
use bess_core::uncertainty::{draw_scenario_uncertainty, DistSpec, Family};
use bess_core::profiles::ScenarioData;
use bess_core::sac::Mlp;
use ndarray::Array2;
use bess_core::system::{BatteryParams, Schedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// A schedule near balance with multipliers near their targets, kept away
/// from every kink of the loss (|p_b| = 0, box edges, SOC band edges).
pub fn interior_point(s: &ScenarioData, unc: &[f64], b: &BatteryParams, rng: &mut ChaCha8Rng) -> Schedule {
    let targets = alpha_targets(s.c_g(), 1.0, 1000.0);
    loop {
        let n = s.n_steps();
        let mut p_b = Vec::with_capacity(n);
        let mut p_g = Vec::with_capacity(n);
        for (t, u) in unc.iter().enumerate().take(n) {
            let need = s.p_d()[t] + u - s.p_pv()[t];
            let mag = rng.random_range(20.0..300.0);
            let pb = if rng.random_bool(0.5) { mag } else { -mag };
            p_b.push(pb);
            p_g.push((need - pb + rng.random_range(-20.0..20.0)).max(5.0));
        }
        let mut soc = b.soc_init;
        let mut clear = true;
        for &pb in &p_b {
            soc -= s.dt_hours() * pb / b.capacity_kwh;
            clear &= (soc - b.soc_min).abs() > 1e-5 && (soc - b.soc_max).abs() > 1e-5;
        }
        if clear {
            let alpha_g = targets.iter().map(|a| a + rng.random_range(-1.0..1.0)).collect();
            let alpha_b = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
            return Schedule { p_g, p_b, alpha_g, alpha_b };
        }
    }
}

/// Worst relative error of the analytic penalty gradient against central
/// differences, over every coordinate of `points` random interior points.
pub fn penalty_fd_worst(points: usize, seed: u64) -> f64 {
    let s = synth_scenario(3, 48, 0.5).unwrap();
    let (b, g, cfg) = (BatteryParams::default(), GridParams::default(), GradOptConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = DistSpec::default_for(Family::Normal);
    let n = s.n_steps();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let unc = draw_scenario_uncertainty(&s, &spec, &mut rng).unwrap().p_unc;
        let x = interior_point(&s, &unc, &b, &mut rng);
        let (_, grad) = penalty_loss(&x, &s, &unc, &b, &g, &cfg).unwrap();
        for i in 0..4 * n {
            // the loss is piecewise quadratic in the powers and globally
            // quadratic in the multipliers, so central differences carry no
            // truncation error and the step only sets the rounding error
            let (h, scale) = if i < 2 * n { (1e-4, cfg.power_norm_k) } else { (1.0, 1.0) };
            let eval = |d: f64| {
                let mut y = x.clone();
                let slot = match i / n {
                    0 => &mut y.p_g,
                    1 => &mut y.p_b,
                    2 => &mut y.alpha_g,
                    _ => &mut y.alpha_b,
                };
                slot[i % n] += d * scale;
                penalty_loss(&y, &s, &unc, &b, &g, &cfg).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max(rel_err(fd, grad[i]));
        }
    }
    worst
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Worst relative error of reverse-mode parameter gradients of a 6-64-64-2
/// net against central differences on `coords` sampled coordinates.
pub fn mlp_fd_worst(coords: usize, seed: u64) -> f64 {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(&[6, 64, 64, 2], &mut rng).unwrap();
    let x = random_matrix(4, 6, &mut rng);
    let w = random_matrix(4, 2, &mut rng);
    // loss = sum(w .* net(x))
    let loss = |n: &Mlp| (n.forward_batch(x.view()).unwrap() * &w).sum();
    let cache = net.forward_cached(x.view()).unwrap();
    let (grads, _) = net.backward(&cache, w.view()).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let i = rng.random_range(0..grads.len());
        let (mut p, mut m) = (net.clone(), net.clone());
        p.params_mut()[i] += H;
        m.params_mut()[i] -= H;
        let fd = (loss(&p) - loss(&m)) / (2.0 * H);
        worst = worst.max(rel_err(fd, grads[i]));
    }
    worst
}
