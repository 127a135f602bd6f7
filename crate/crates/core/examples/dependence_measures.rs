//! Distance correlation and multi-kernel MMD between two latent batches as
//! one is bent into a function of the other. dcor tracks the dependence;
//! MMD compares the two marginal distributions, so it need not be monotone.

use disbench::dependence::{dcor, mmd, Batch2D, KernelSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn sample(n: usize, coupling: f64, rng: &mut ChaCha8Rng) -> (Batch2D, Batch2D) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for _ in 0..n * 2 {
        let x: f64 = StandardNormal.sample(rng);
        let e: f64 = StandardNormal.sample(rng);
        a.push(x);
        // nonlinear coupling: invisible to Pearson correlation, not to dcor
        b.push(coupling * x * x + (1.0 - coupling) * e);
    }
    (Batch2D::from_rows(n, 2, a).unwrap(), Batch2D::from_rows(n, 2, b).unwrap())
}

fn main() -> disbench::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let kernel = KernelSpec::default();
    println!("coupling    dcor     mmd");
    for c in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (z1, z2) = sample(256, c, &mut rng);
        println!("{c:>8.2}  {:>6.3}  {:>6.3}", dcor(&z1, &z2)?, mmd(&z1, &z2, &kernel)?);
    }
    Ok(())
}
