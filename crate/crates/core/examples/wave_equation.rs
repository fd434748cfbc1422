//! Damped stochastic wave equation `u_tt = Δu − ∛(u_t) + u_t dL`: energy
//! along sample paths without noise (pure damping) and with Lévy forcing.
//!
//! ```text
//! cargo run --release --example wave_equation
//! ```

use spde_picard::models::{build_hyperbolic, HyperbolicConfig};
use spde_picard::noise::{LevyPathSpec, StreamSeeder};
use spde_picard::solver::direct_solve;
use spde_picard::stats::Estimate;

fn main() -> spde_picard::Result<()> {
    let quiet = HyperbolicConfig { levy: LevyPathSpec::zero(), ..Default::default() };
    for (name, cfg) in [("no noise", quiet), ("levy forcing", HyperbolicConfig::default())] {
        let model = build_hyperbolic(&cfg)?;
        let grid = model.grid(1e-3)?;
        let seeder = StreamSeeder::new(9);
        let metric = model.metric();
        let mut e0 = Vec::new();
        let mut et = Vec::new();
        for p in 0..200 {
            let x = direct_solve(&model, &seeder, p, &grid)?.path;
            e0.push(metric.norm_sq(x.value(0)));
            et.push(metric.norm_sq(x.terminal()));
        }
        let (a, b) = (Estimate::from_samples(&e0), Estimate::from_samples(&et));
        println!("{name:<13} energy at 0: {:.6e}   at T: {:.6e} +- {:.1e}", a.mean, b.mean, b.std_error);
    }
    Ok(())
}
