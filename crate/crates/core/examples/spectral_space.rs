//! Sine basis, weighted inner products and the heat and wave semigroups.
//!
//! ```text
//! cargo run --release --example spectral_space
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spde_picard::models::dirichlet_eigenvalues;
use spde_picard::semigroup::Semigroup;
use spde_picard::state_space::{Basis, SpectralVector, WeightedInnerProduct};

fn main() -> spde_picard::Result<()> {
    let modes = 8;
    let basis = Basis::sine(modes)?;
    println!("basis: {} modes, labels {:?}", basis.dim(), &basis.labels()[..3]);

    let metric = WeightedInnerProduct::unit(modes);
    let x = SpectralVector::from_vec((1..=modes).map(|k| 1.0 / k as f64).collect());
    println!("|x|^2 = {:.6}", metric.norm_sq(x.as_slice()));

    // Heat: every mode decays like e^{-k²π²t}.
    let heat = Semigroup::dirichlet_heat(modes)?;
    for t in [0.0, 0.01, 0.1] {
        let y = heat.act(t, &x)?;
        println!("heat  t = {t:<5} |S_t x|^2 = {:.6e}", metric.norm_sq(y.as_slice()));
    }

    // Wave in energy norm: unitary, so the norm is conserved.
    let lambda = dirichlet_eigenvalues(modes);
    let wave = Semigroup::block_wave(lambda.clone())?;
    let weights: Vec<f64> = lambda.iter().copied().chain(std::iter::repeat_n(1.0, modes)).collect();
    let energy = WeightedInnerProduct::new(weights)?;
    let mut u = vec![0.0; 2 * modes];
    u[..modes].copy_from_slice(x.as_slice());
    let u = SpectralVector::from_vec(u);
    for t in [0.0, 0.3, 1.7] {
        let y = wave.act(t, &u)?;
        println!("wave  t = {t:<5} energy = {:.12e}", energy.norm_sq(y.as_slice()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let report = wave.check_contraction(&energy, 1000, 1.0, &mut rng)?;
    println!(
        "wave contraction check: max |S_t x|/|x| = {:.12}, violation = {}",
        report.max_ratio, report.violation
    );
    Ok(())
}
