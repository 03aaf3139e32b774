//! Seeded generators: the spiral/torus common-variable toy, its three-view and
//! periodic variants, and the airplane steady-state system.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Planar ribbon whose radius is driven by `z` and whose angle is driven by `eps`.
pub fn spiral(z: f64, eps: f64) -> [f64; 2] {
    let r = 1.5 * eps + z / 3.0 + 2.0 / 3.0;
    let a = 4.0 * PI * eps;
    [r * a.cos(), r * a.sin()]
}

/// Torus with the small angle set by `z` and the large angle by `eta`.
pub fn torus(z: f64, eta: f64) -> [f64; 3] {
    let r = 1.0 + (2.0 * PI * z).cos() / 3.0;
    let a = 2.0 * PI * eta;
    [r * a.cos(), r * a.sin(), (2.0 * PI * z).sin() / 3.0]
}

/// Unit circle parametrised by `t` in `[0, 1]`.
pub fn circle(t: f64) -> [f64; 2] {
    let a = 2.0 * PI * t;
    [a.cos(), a.sin()]
}

/// Uniform `(z, ε, η)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSample {
    pub z: Vec<f64>,
    pub eps: Vec<f64>,
    pub eta: Vec<f64>,
    pub seed: u64,
}

impl TripletSample {
    /// Draws `n` triplets; per sample the order is `z`, `ε`, `η`.
    pub fn draw(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = Vec::with_capacity(n);
        let mut eps = Vec::with_capacity(n);
        let mut eta = Vec::with_capacity(n);
        for _ in 0..n {
            z.push(rng.gen::<f64>());
            eps.push(rng.gen::<f64>());
            eta.push(rng.gen::<f64>());
        }
        Self { z, eps, eta, seed }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Views generated from a shared latent variable plus its ground truth.
#[derive(Debug, Clone)]
pub struct MultiViewSample {
    pub views: Vec<Dataset>,
    /// The common variable; for evaluation only.
    pub truth: Vec<f64>,
}

impl MultiViewSample {
    /// Splits off the last `tail` rows of every view and of the ground truth.
    pub fn split_tail(&self, tail: usize) -> Result<(Self, Self)> {
        let mut head_views = Vec::new();
        let mut tail_views = Vec::new();
        for v in &self.views {
            let (h, t) = v.split_tail(tail)?;
            head_views.push(h);
            tail_views.push(t);
        }
        let cut = self.truth.len() - tail;
        Ok((
            Self {
                views: head_views,
                truth: self.truth[..cut].to_vec(),
            },
            Self {
                views: tail_views,
                truth: self.truth[cut..].to_vec(),
            },
        ))
    }
}

fn rows_to_dataset<const P: usize>(rows: &[[f64; P]], view: &str) -> Result<Dataset> {
    let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Dataset::new(values, rows.len(), P, view)
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::arg(format!("need at least 2 samples, got {n}")));
    }
    Ok(())
}

/// Spiral view `x_i = spiral(z_i, ε_i)` and torus view `y_i = torus(z_i, η_i)`.
pub fn generate_toy(n: usize, seed: u64) -> Result<MultiViewSample> {
    check_n(n)?;
    let t = TripletSample::draw(n, seed);
    let x: Vec<[f64; 2]> = (0..n).map(|i| spiral(t.z[i], t.eps[i])).collect();
    let y: Vec<[f64; 3]> = (0..n).map(|i| torus(t.z[i], t.eta[i])).collect();
    Ok(MultiViewSample {
        views: vec![rows_to_dataset(&x, "spiral")?, rows_to_dataset(&y, "torus")?],
        truth: t.z,
    })
}

/// The toy plus a third view `(cos 2πz, sin 2πz)`.
pub fn generate_toy_three_view(n: usize, seed: u64) -> Result<MultiViewSample> {
    let mut s = generate_toy(n, seed)?;
    let c: Vec<[f64; 2]> = s.truth.iter().map(|&z| circle(z)).collect();
    s.views.push(rows_to_dataset(&c, "circle")?);
    Ok(s)
}

/// Two views sharing the periodic common variable `θ = 2πz`: an annulus
/// point at angle `θ` whose radius `1 + ε/2` is a nuisance, and the torus whose
/// small angle is `θ`. Ground truth is `z`.
pub fn generate_periodic_toy(n: usize, seed: u64) -> Result<MultiViewSample> {
    check_n(n)?;
    let t = TripletSample::draw(n, seed);
    let x: Vec<[f64; 2]> = (0..n)
        .map(|i| circle(t.z[i]).map(|c| (1.0 + 0.5 * t.eps[i]) * c))
        .collect();
    let y: Vec<[f64; 3]> = (0..n).map(|i| torus(t.z[i], t.eta[i])).collect();
    Ok(MultiViewSample {
        views: vec![rows_to_dataset(&x, "annulus")?, rows_to_dataset(&y, "torus")?],
        truth: t.z,
    })
}

/// The nonlinear change of coordinates `s(x) = (x1 + (x1² + x2)², x1² + x2)`.
pub fn airplane_s(x: [f64; 2]) -> [f64; 2] {
    let y2 = x[0] * x[0] + x[1];
    [x[0] + y2 * y2, y2]
}

/// Inverse of [`airplane_s`]: `x1 = y1 − y2²`, `x2 = y2 − x1²`.
pub fn airplane_s_inv(y: [f64; 2]) -> [f64; 2] {
    let x1 = y[0] - y[1] * y[1];
    [x1, y[1] - x1 * x1]
}

/// Jacobian of [`airplane_s_inv`] evaluated at `y`.
pub fn airplane_jacobian(y: [f64; 2]) -> [[f64; 2]; 2] {
    let (y1, y2) = (y[0], y[1]);
    [
        [1.0, -2.0 * y2],
        [-2.0 * y1 + 2.0 * y2 * y2, 1.0 + 4.0 * y1 * y2 - 4.0 * y2.powi(3)],
    ]
}

/// Damped linear field around `(p1 + p2³, p3)` in the transformed coordinates.
pub fn airplane_g(y: [f64; 2], p: [f64; 3]) -> [f64; 2] {
    let a = y[0] - (p[0] + p[1].powi(3));
    let b = y[1] - p[2];
    [-2.0 * a + b, -a - b]
}

/// `h_p(x) = J(s(x)) g_p(s(x))`.
pub fn airplane_rhs(x: [f64; 2], p: [f64; 3]) -> [f64; 2] {
    let y = airplane_s(x);
    let j = airplane_jacobian(y);
    let g = airplane_g(y, p);
    [j[0][0] * g[0] + j[0][1] * g[1], j[1][0] * g[0] + j[1][1] * g[1]]
}

/// The steady state in closed form, `s⁻¹(p1 + p2³, p3)`.
pub fn airplane_fixed_point(p: [f64; 3]) -> [f64; 2] {
    airplane_s_inv([p[0] + p[1].powi(3), p[2]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub x0: [f64; 2],
    pub dt: f64,
    pub t_max: f64,
    pub tol: f64,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            x0: [0.0, 0.0],
            dt: 0.01,
            t_max: 200.0,
            tol: 1e-8,
        }
    }
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Integrates with fixed-step RK4 until `|rhs| < tol`.
pub fn simulate_to_steady_state(p: [f64; 3], cfg: &Integrator) -> Result<[f64; 2]> {
    if !(cfg.tol > 0.0 && cfg.dt > 0.0 && cfg.t_max > 0.0) {
        return Err(Error::arg("tol, dt and t_max must be positive"));
    }
    let f = |x: [f64; 2]| airplane_rhs(x, p);
    let step = |x: [f64; 2], k: [f64; 2], h: f64| [x[0] + h * k[0], x[1] + h * k[1]];
    let h = cfg.dt;
    let mut x = cfg.x0;
    let mut t = 0.0;
    loop {
        let r = f(x);
        let rn = norm2(r);
        if rn < cfg.tol {
            return Ok(x);
        }
        if t >= cfg.t_max || !rn.is_finite() {
            return Err(Error::SteadyStateNotReached {
                t_max: cfg.t_max,
                state: x,
                rhs_norm: rn,
            });
        }
        let k1 = r;
        let k2 = f(step(x, k1, h / 2.0));
        let k3 = f(step(x, k2, h / 2.0));
        let k4 = f(step(x, k3, h));
        x = [
            x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        t += h;
    }
}

/// Uniform parameter triples on `[-1, 1]³`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSample {
    pub p: Vec<[f64; 3]>,
    pub seed: u64,
}

impl ParamSample {
    pub fn draw(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = (0..n)
            .map(|_| {
                [
                    rng.gen_range(-1.0..=1.0),
                    rng.gen_range(-1.0..=1.0),
                    rng.gen_range(-1.0..=1.0),
                ]
            })
            .collect();
        Self { p, seed }
    }
}

/// Airplane views: `(p1, p2)` and the integrated steady state. Ground truth
/// is the effective parameter `p1 + p2³`.
pub fn generate_airplane(n: usize, seed: u64, cfg: &Integrator) -> Result<MultiViewSample> {
    check_n(n)?;
    let params = ParamSample::draw(n, seed);
    let states = params
        .p
        .par_iter()
        .map(|&p| simulate_to_steady_state(p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let pv: Vec<[f64; 2]> = params.p.iter().map(|p| [p[0], p[1]]).collect();
    Ok(MultiViewSample {
        views: vec![
            rows_to_dataset(&pv, "parameters")?,
            rows_to_dataset(&states, "steady-state")?,
        ],
        truth: params.p.iter().map(|p| p[0] + p[1].powi(3)).collect(),
    })
}
