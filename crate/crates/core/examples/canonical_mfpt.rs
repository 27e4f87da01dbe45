use std::time::Instant;

use boxwalk::mfpt::mean_time_to_goal;
use boxwalk::model::{EnclosureGeometry, MovementParams};
use boxwalk::sim::{simulate_mfpt, SimConfig};

fn main() {
    let params = MovementParams::new(0.5, 0.0, 1.0, 1.0).unwrap();
    let geom = EnclosureGeometry::new(100.0, 10.0, 0.0, 0.0).unwrap();
    let cfg = SimConfig::new(0.05, 10_000, 7);
    let start = Instant::now();
    let r = simulate_mfpt(&params, &geom, &cfg).unwrap().mfpt.unwrap();
    let w = mean_time_to_goal(&params, &geom, 0.0).unwrap();
    let z = (r.mean - w) / r.std_error;
    println!("analytic {w:.4}  simulated {:.4} +- {:.4}  (z = {z:.2})  median {:.3}", r.mean, r.std_error, r.median);
    println!("elapsed {:.1} s", start.elapsed().as_secs_f64());
}
