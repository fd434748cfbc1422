//! Strong error of the explicit scheme for `dX = aX dt + σX dW + ∫ξX dÑ`
//! against its stochastic exponential on shared noise.
//!
//! ```text
//! cargo run --release --example closed_form_benchmark
//! ```

use spde_picard::models::{build_linear_scalar, doleans_dade, LinearScalarConfig};
use spde_picard::noise::{StreamSeeder, TimeGrid};
use spde_picard::solver::direct_path;
use spde_picard::stats::linear_fit;

fn main() -> spde_picard::Result<()> {
    let cfg = LinearScalarConfig::default();
    let model = build_linear_scalar(&cfg)?;
    let seeder = StreamSeeder::new(5);
    let (coarsest, finest) = (6u32, 12u32);
    let finest_grid = TimeGrid::new(cfg.horizon, 1 << finest)?;
    let paths = 500;
    let mut sq = vec![0.0; (finest - coarsest + 1) as usize];
    for p in 0..paths {
        let noise = model.sample_noise(&finest_grid, &seeder, p)?;
        let x0 = model.sample_initial(&seeder, p);
        let exact = doleans_dade(
            cfg.x0,
            cfg.a,
            cfg.sigma,
            &cfg.marks,
            cfg.horizon,
            noise.wiener.terminal()[0],
            noise.jumps.events().iter().map(|e| e.mark),
        );
        for (i, k) in (coarsest..=finest).enumerate() {
            let grid = TimeGrid::new(cfg.horizon, 1 << k)?;
            let coarse = noise.coarsen(1 << (finest - k), &grid)?;
            let x = direct_path(&model, &x0, &grid, &coarse)?.path;
            sq[i] += (x.terminal()[0] - exact).powi(2) / paths as f64;
        }
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, k) in (coarsest..=finest).enumerate() {
        let dt = 0.5f64.powi(k as i32);
        println!("dt = 2^-{k:<2}  rms error {:.4e}", sq[i].sqrt());
        xs.push(dt.ln());
        ys.push(sq[i].sqrt().ln());
    }
    let (order, _) = linear_fit(&xs, &ys);
    println!("fitted strong order {order:.3}");
    Ok(())
}
