//! Trains a MINE statistic network on correlated Gaussians and compares the
//! Donsker-Varadhan bound with the closed-form mutual information.

use disbench::dependence::{Batch2D, MineNet};
use disbench::trainer::{fit_estimator, EstimatorSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn pairs(n: usize, rho: f64, rng: &mut ChaCha8Rng) -> (Batch2D, Batch2D) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let x: f64 = StandardNormal.sample(rng);
        let e: f64 = StandardNormal.sample(rng);
        a.push(x);
        b.push(rho * x + (1.0 - rho * rho).sqrt() * e);
    }
    (Batch2D::from_rows(n, 1, a).unwrap(), Batch2D::from_rows(n, 1, b).unwrap())
}

fn main() -> disbench::Result<()> {
    let rho: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = MineNet::new(1, 1, 64, &mut rng);
    let eval = pairs(8192, rho, &mut rng);
    let schedule = EstimatorSchedule {
        lr: 2e-3,
        log_every: 200,
        ..Default::default()
    };
    let log = fit_estimator(&mut net, &mut |n, r| pairs(n, rho, r), (&eval.0, &eval.1), &schedule, &mut rng)?;
    println!("true MI: {:.4}", -0.5 * (1.0 - rho * rho).ln());
    for l in log {
        println!("step {:>5}  bound {:.4}", l.step, l.bound);
    }
    Ok(())
}
