//! Fixtures and brute-force oracles shared by integration and acceptance
//! tests. Oracles are written from the definitions and deliberately share
//! no code with the library paths they check.
#![allow(dead_code)]

pub mod fixtures;
pub mod oracle;

use rand::Rng;

pub fn random_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}
