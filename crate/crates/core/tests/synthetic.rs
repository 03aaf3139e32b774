mod common;

use common::*;
use jointsmooth::synthetic::{airplane_fixed_point, simulate_to_steady_state, Integrator};
use rand::Rng;

#[test]
fn steady_state_matches_closed_form() {
    let mut r = rng(2024);
    let cfg = Integrator::default();
    for _ in 0..100 {
        let p = [
            r.gen_range(-1.0..=1.0),
            r.gen_range(-1.0..=1.0),
            r.gen_range(-1.0..=1.0),
        ];
        let x = simulate_to_steady_state(p, &cfg).unwrap();
        let want = airplane_fixed_point(p);
        for j in 0..2 {
            assert!((x[j] - want[j]).abs() < 1e-4, "p = {p:?}: {x:?} vs {want:?}");
        }
    }
}

#[test]
fn only_effective_parameter_matters() {
    let mut r = rng(7);
    let cfg = Integrator::default();
    for _ in 0..20 {
        let (p1, p2, p3): (f64, f64, f64) = (
            r.gen_range(-0.5..=0.5),
            r.gen_range(-0.5..=0.5),
            r.gen_range(-1.0..=1.0),
        );
        let p2b: f64 = r.gen_range(-0.5..=0.5);
        let p1b = p1 + p2.powi(3) - p2b.powi(3);
        let a = simulate_to_steady_state([p1, p2, p3], &cfg).unwrap();
        let b = simulate_to_steady_state([p1b, p2b, p3], &cfg).unwrap();
        for j in 0..2 {
            assert!((a[j] - b[j]).abs() < 1e-6, "{a:?} vs {b:?}");
        }
    }
}
