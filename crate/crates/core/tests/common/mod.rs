//! Seeded generators of valid metric/twist/function triples shared by the
//! integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twistflow::geometry::{scalar_curvature, MetricProfile, TwistProfile};
use twistflow::numerics::{Field, Grid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

/// `ε sech²x (1 + b tanh x sech x)`, of mass `2ε`.
pub fn random_twist(g: Grid, rng: &mut impl Rng) -> (f64, TwistProfile) {
    let eps = if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.05..0.4) };
    let b = rng.gen_range(-0.5..0.5);
    let t = TwistProfile::new(Field::from_fn(g, |x| eps * sech2(x) * (1.0 + b * x.tanh() / x.cosh()))).unwrap();
    (eps, t)
}

/// A sum of two Gaussian bumps, used as a Kähler potential.
pub fn random_potential(g: Grid, rng: &mut impl Rng, scale: f64) -> Field {
    let bumps: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| (rng.gen_range(-scale..scale), rng.gen_range(-1.5..1.5), rng.gen_range(0.7..1.5)))
        .collect();
    Field::from_fn(g, move |x| bumps.iter().map(|(a, c, w)| a * (-(x - c) * (x - c) / (w * w)).exp()).sum())
}

/// Bound on `|R|` for random metrics. Bumps reaching into the polar tails,
/// where `h` is tiny, can make necks with `|R|` in the tens of thousands
/// that the standard grid does not resolve.
pub const MAX_CURVATURE: f64 = 100.0;

/// A metric in the class of the twist, `(1 - ε) sech² + ½ φ''`, with
/// `|R| ≤ MAX_CURVATURE`.
pub fn random_metric(g: Grid, eps: f64, rng: &mut impl Rng) -> MetricProfile {
    let round = MetricProfile::scaled_fubini_study(g, 1.0 - eps);
    loop {
        let phi = random_potential(g, rng, 0.08);
        if let Ok(m) = round.with_potential(&phi) {
            if scalar_curvature(&m).sup_abs() <= MAX_CURVATURE {
                return m;
            }
        }
    }
}

pub fn random_function(g: Grid, rng: &mut impl Rng) -> Field {
    let (a, b, c, w) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0));
    Field::from_fn(g, move |x| a * x.tanh() + b * (-(x - c) * (x - c) / (w * w)).exp())
}

pub fn random_case(g: Grid, rng: &mut impl Rng) -> (MetricProfile, TwistProfile, Field) {
    let (eps, t) = random_twist(g, rng);
    let m = random_metric(g, eps, rng);
    let f = random_function(g, rng);
    (m, t, f)
}

/// `(1 - ε) sech² + ½ (A e^{-x²})''` with the matching `ε sech²` twist.
pub fn perturbed(g: Grid, eps: f64, amplitude: f64) -> (MetricProfile, TwistProfile) {
    let t = TwistProfile::sech2(g, eps).unwrap();
    let m = MetricProfile::scaled_fubini_study(g, 1.0 - eps)
        .with_potential(&Field::from_fn(g, |x| amplitude * (-x * x).exp()))
        .unwrap();
    (m, t)
}

/// Observed orders `log2(e_k / e_{k+1})` of a halving sequence.
pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|p| (p[0] / p[1]).log2()).collect()
}
