//! Compare the approximate subgraph search with exhaustive search on small
//! random instances.

use graphalign::eval::{run_oracle_check, OracleCheckConfig};
use graphalign::mass::MassConfig;

pub fn run_example(instances: usize) -> f64 {
    let cfg = OracleCheckConfig {
        instances,
        ..Default::default()
    };
    let r = run_oracle_check(&cfg, &MassConfig::default()).unwrap();
    println!(
        "{} instances: exact {:.3}, within one node {:.3}",
        r.instances, r.exact_rate, r.within_one_rate
    );
    r.exact_rate
}

#[allow(dead_code)]
fn main() {
    run_example(200);
}
