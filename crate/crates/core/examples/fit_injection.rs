//! Rebuild `assets/injection_default.csv` from the default storm: the radar
//! intensity seen at every wiper-on report, binned per wiper level.
//!
//! cargo run -p rainfuse-core --example fit_injection > crates/core/assets/injection_default.csv

use rainfuse_core::storm::{fit_injection, StormScenario};

const EDGES: [f64; 9] = [0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

fn main() {
    let scn = StormScenario::bundled_default();
    let dist = fit_injection(&scn, 0.1, &EDGES).expect("fit");
    println!("# radar intensity at wiper-on reports, default storm (seed {})", scn.seed);
    print!("{}", dist.to_text());
}
