//! SAC checks against closed forms and independent numerical integration.

use ndarray::{Array1, Array2};

use freemesh_core::sac::{squash_sample, Batch, SacAgent, SacConfig, Transition};

/// Trapezoid expectation of `f(ε)` for ε ~ N(0, 1).
pub fn gauss_expect(f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, n) = (-9.0, 9.0, 1801);
    let h = (hi - lo) / (n - 1) as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let e = lo + k as f64 * h;
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += w * f(e) * (-0.5 * e * e).exp();
    }
    acc * h / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[log(1 − tanh²(μ + σε))]`, computed in a numerically safe form.
fn expected_log_jacobian(mu: f64, sigma: f64) -> f64 {
    gauss_expect(|e| {
        let u: f64 = mu + sigma * e;
        let x = -2.0 * u.abs();
        2.0 * (std::f64::consts::LN_2 - u.abs() - x.exp().ln_1p())
    })
}

/// Differential entropy of a tanh-squashed diagonal Gaussian.
pub fn squashed_entropy(mu: &[f64], log_std: &[f64]) -> f64 {
    mu.iter()
        .zip(log_std)
        .map(|(&m, &ls)| 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + ls + expected_log_jacobian(m, ls.exp()))
        .sum()
}

/// Objective of one action dimension under reward `−(a − c)²` with
/// entropy weight `alpha`.
fn bandit_objective(mu: f64, log_std: f64, c: f64, alpha: f64) -> f64 {
    let sigma = log_std.exp();
    let reward = gauss_expect(|e| -((mu + sigma * e).tanh() - c).powi(2));
    reward + alpha * squashed_entropy(&[mu], &[log_std])
}

/// Maximizer `(μ, log σ)` found by successively zoomed grid searches.
pub fn bandit_optimum(c: f64, alpha: f64) -> (f64, f64) {
    let (mut mu, mut ls) = (0.0, -1.0);
    let (mut span_mu, mut span_ls) = (3.0, 4.0);
    for _ in 0..7 {
        let mut best = (f64::NEG_INFINITY, mu, ls);
        for i in -12..=12 {
            for j in -12..=12 {
                let m = mu + span_mu * i as f64 / 12.0;
                let l = (ls + span_ls * j as f64 / 12.0).clamp(-20.0, 2.0);
                let v = bandit_objective(m, l, c, alpha);
                if v > best.0 {
                    best = (v, m, l);
                }
            }
        }
        (mu, ls) = (best.1, best.2);
        span_mu /= 4.0;
        span_ls /= 4.0;
    }
    (mu, ls)
}

fn cfg(seed: u64) -> SacConfig {
    SacConfig { hidden: vec![64, 64], batch_size: 128, seed, ..SacConfig::default() }
}

/// Largest `|Q − r|` over both critics after 5000 critic updates on one
/// transition with `γ = 0`.
pub fn critic_convergence_error() -> f64 {
    let c = SacConfig { gamma: 0.0, ..cfg(1) };
    let mut agent = SacAgent::new(4, &c).unwrap();
    let t = Transition { s: vec![0.3, -1.2, 0.8, 0.1], a: [0.2, -0.5, 0.9], r: 1.7, s2: vec![1.0, 1.0, -1.0, 0.5], done: false };
    let batch = Batch::from_transitions([&t]).unwrap();
    for _ in 0..5000 {
        agent.update_critics(&batch).unwrap();
    }
    let x = Array2::from_shape_vec((1, 7), [t.s.clone(), t.a.to_vec()].concat()).unwrap();
    let q1 = agent.q1.forward(x.view()).unwrap()[[0, 0]];
    let q2 = agent.q2.forward(x.view()).unwrap()[[0, 0]];
    (q1 - t.r).abs().max((q2 - t.r).abs())
}

/// Learned versus optimal deterministic action (`tanh μ`) per dimension for
/// a policy trained against the exact critic `−Σ(a − c)²` at fixed `α`.
pub fn bandit_policy_gap(alpha: f64, centers: [f64; 3], steps: usize) -> Vec<(f64, f64)> {
    let c = SacConfig { lr_pi: 1e-3, ..cfg(7) };
    let mut agent = SacAgent::new(2, &c).unwrap();
    agent.log_alpha = alpha.ln();
    let states = Array2::from_elem((c.batch_size, 2), 1.0);
    for _ in 0..steps {
        agent
            .policy_step_with(&states, |a| {
                let q = Array1::from_shape_fn(a.nrows(), |i| -(0..3).map(|d| (a[[i, d]] - centers[d]).powi(2)).sum::<f64>());
                let dq = Array2::from_shape_fn(a.dim(), |(i, d)| -2.0 * (a[[i, d]] - centers[d]));
                Ok((q, dq))
            })
            .unwrap();
    }
    let head = agent.policy.forward_vec(&[1.0, 1.0]).unwrap();
    (0..3).map(|d| (head[d].tanh(), bandit_optimum(centers[d], alpha).0.tanh())).collect()
}

/// Full SAC (critics, policy, temperature) on a one-step symmetric bandit
/// `r = −|a|²`; by symmetry the optimal mean action is zero for every `α`.
pub fn symmetric_bandit_mean(updates: usize) -> [f64; 3] {
    let c = SacConfig { lr_pi: 1e-3, lr_q: 1e-3, ..cfg(3) };
    let mut agent = SacAgent::new(2, &c).unwrap();
    let s = vec![1.0, 1.0];
    let mut pool = Vec::new();
    for _ in 0..updates {
        let (a, _) = agent.sample_action(&s, false).unwrap();
        let r = -a.iter().map(|x| x * x).sum::<f64>();
        pool.push(Transition { s: s.clone(), a, r, s2: s.clone(), done: true });
        if pool.len() > 4096 {
            pool.remove(0);
        }
        let start = pool.len().saturating_sub(c.batch_size);
        let batch = Batch::from_transitions(pool[start..].iter()).unwrap();
        agent.update(&batch).unwrap();
    }
    let head = agent.policy.forward_vec(&s).unwrap();
    std::array::from_fn(|d| head[d].tanh())
}

/// Monte-Carlo `−E[log π]` against the quadrature entropy; returns
/// `(estimate, reference, standard error)`.
pub fn entropy_check(samples: usize) -> (f64, f64, f64) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mu = [0.4, -1.1, 0.0];
    let log_std = [-0.3, 0.2, -1.5];
    let mut head = Array2::zeros((samples, 6));
    for i in 0..samples {
        for d in 0..3 {
            head[[i, d]] = mu[d];
            head[[i, 3 + d]] = log_std[d];
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let noise = Array2::from_shape_simple_fn((samples, 3), || StandardNormal.sample(&mut rng));
    let smp = squash_sample(&head, noise);
    let neg: Vec<f64> = smp.log_probs.iter().map(|l| -l).collect();
    let mean = neg.iter().sum::<f64>() / samples as f64;
    let var = neg.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
    (mean, squashed_entropy(&mu, &log_std), (var / samples as f64).sqrt())
}
