//! Fixtures shared by the criterion benches.

use binnn_core::{random_instance, GeneratorConfig, Graph, Instance};

pub const SEED: u64 = 7;

/// Seeded reference instance on `n` agents with a random connected graph.
pub fn fixture(n: usize) -> (Instance, Graph) {
    let inst = random_instance(&GeneratorConfig::scaled(n), SEED).expect("valid generator config");
    (inst, Graph::random_connected(n, 0.2, SEED))
}
