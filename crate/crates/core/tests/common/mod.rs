#![allow(dead_code)]

use parabolic_l1::cli::RunConfig;
use parabolic_l1::{Problem, SliceLayout, SpaceTimeField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builds a problem from a TOML snippet layered over the defaults.
pub fn problem_from(toml: &str) -> Problem {
    RunConfig::from_toml(toml)
        .and_then(|c| c.build_problem())
        .map(|(p, _)| p)
        .unwrap_or_else(|e| panic!("bad test config: {e}\n{toml}"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_control(problem: &Problem, amplitude: f64, rng: &mut impl Rng) -> SpaceTimeField {
    let spec = problem.spec();
    let mut u = SpaceTimeField::zeros(spec.grid, spec.tgrid, SliceLayout::Intervals);
    for x in u.values_mut() {
        *x = rng.random_range(-amplitude..amplitude);
    }
    u
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
