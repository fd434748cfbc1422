//! Sampled checks of the structural constants declared by each shipped
//! model, and a known-bad drift that the semimonotonicity check rejects.
//!
//! ```text
//! cargo run --release --example hypothesis_checks
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spde_picard::coefficients::{check_semimonotone, nemitsky, CheckOptions, Reaction};
use spde_picard::models::{build_default, ExampleId};
use spde_picard::state_space::WeightedInnerProduct;

fn main() -> spde_picard::Result<()> {
    for id in ExampleId::ALL {
        let model = build_default(id, None)?;
        let r = model.check_hypotheses(2000, 1)?;
        let c = model.coefficients();
        println!(
            "{:<18} M = {:<6} C = {:<8.4} D = {:<8.4}  observed M {:.3e}, C {:.3e}, D {:.3e}  pass = {}",
            id.as_str(),
            c.monotonicity(),
            c.lipschitz(),
            c.growth(),
            r.semimonotone.max_ratio,
            r.lipschitz_growth.lipschitz,
            r.lipschitz_growth.growth,
            r.pass()
        );
    }

    let modes = 8;
    let metric = WeightedInnerProduct::unit(modes);
    let opts = CheckOptions { samples: 10_000, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let good = nemitsky(Reaction::NegCubeRoot, modes, 32)?;
    let r = check_semimonotone(&good, &metric, &opts, &mut rng)?;
    println!("-cbrt(u): max ratio {:.4e}, pass = {}", r.max_ratio, r.pass);
    let mut bad = nemitsky(Reaction::Cubic { coefficient: 1.0 }, modes, 32)?;
    bad.monotonicity = 0.0;
    let r = check_semimonotone(&bad, &metric, &opts, &mut rng)?;
    println!("u^3 declared M = 0: max ratio {:.4e}, pass = {}", r.max_ratio, r.pass);
    Ok(())
}
