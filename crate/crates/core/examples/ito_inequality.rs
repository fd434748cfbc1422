//! The pathwise Itô-type inequality for the stochastic convolution,
//! evaluated along explicit solutions of the damped wave equation at `Δt`
//! and `Δt/2` on shared noise.
//!
//! ```text
//! cargo run --release --example ito_inequality
//! ```

use spde_picard::convolution::{ito_slack_along, ito_tolerance};
use spde_picard::models::{build_hyperbolic, HyperbolicConfig};
use spde_picard::noise::StreamSeeder;
use spde_picard::solver::direct_path;

fn main() -> spde_picard::Result<()> {
    let model = build_hyperbolic(&HyperbolicConfig::default())?;
    let coarse = model.grid(1e-3)?;
    let fine = coarse.refined(2);
    let seeder = StreamSeeder::new(11);
    let c = model.ito_constant();
    let paths = 200;
    let (mut vc, mut vf) = (0, 0);
    let mut worst = f64::INFINITY;
    for p in 0..paths {
        let x0 = model.sample_initial(&seeder, p);
        let noise = model.sample_noise(&fine, &seeder, p)?;
        let a = direct_path(&model, &x0, &coarse, &noise.coarsen(2, &coarse)?)?;
        let b = direct_path(&model, &x0, &fine, &noise)?;
        let ra = ito_slack_along(&a.path, model.alpha(), &a.increments, model.metric(), ito_tolerance(c, coarse.dt()))?;
        let rb = ito_slack_along(&b.path, model.alpha(), &b.increments, model.metric(), ito_tolerance(c, fine.dt()))?;
        vc += usize::from(ra.violation);
        vf += usize::from(rb.violation);
        worst = worst.min(ra.min_slack);
    }
    println!("c = {c:.4e}, tolerance at dt = {:.4e}", ito_tolerance(c, coarse.dt()));
    println!("most negative slack at dt: {worst:.4e}");
    println!("violations: {vc}/{paths} at dt, {vf}/{paths} at dt/2");
    Ok(())
}
