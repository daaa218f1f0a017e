//! Shared independent oracles for the integration tests: Richardson-
//! extrapolated finite differences, random field generators, and the
//! brute-force Stokes graph inner product built directly from the grid
//! operators.

#![allow(dead_code)]

use crvpinn::grid::{grad_backward, grad_forward, inner_h, GridFunction, GridSpec};
use crvpinn::nn::{self, MlpConfig};
use crvpinn::problems::ProblemSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

/// Richardson-extrapolated central first derivative along `axis` (0 or 1).
pub fn fd_first(f: &impl Fn(f64, f64) -> f64, x: f64, y: f64, axis: usize) -> f64 {
    let d1 = |h: f64| -> f64 {
        if axis == 0 {
            (f(x + h, y) - f(x - h, y)) / (2.0 * h)
        } else {
            (f(x, y + h) - f(x, y - h)) / (2.0 * h)
        }
    };
    (4.0 * d1(FD_STEP / 2.0) - d1(FD_STEP)) / 3.0
}

/// Richardson-extrapolated central second derivative along `axis`.
pub fn fd_second(f: &impl Fn(f64, f64) -> f64, x: f64, y: f64, axis: usize) -> f64 {
    let d2 = |h: f64| -> f64 {
        if axis == 0 {
            (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h)
        } else {
            (f(x, y + h) - 2.0 * f(x, y) + f(x, y - h)) / (h * h)
        }
    };
    (4.0 * d2(FD_STEP / 2.0) - d2(FD_STEP)) / 3.0
}

pub fn fd_laplacian(f: &impl Fn(f64, f64) -> f64, x: f64, y: f64) -> f64 {
    fd_second(f, x, y, 0) + fd_second(f, x, y, 1)
}

/// Random interior points keeping the finite-difference stencil inside the
/// domain.
pub fn random_interior_points(count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = 4.0 * FD_STEP;
    (0..count)
        .map(|_| {
            (
                rng.gen_range(margin..1.0 - margin),
                rng.gen_range(margin..1.0 - margin),
            )
        })
        .collect()
}

/// Uniform random values on the interior points, zero boundary.
pub fn random_interior_function(spec: GridSpec, rng: &mut ChaCha8Rng) -> GridFunction {
    let mut u = GridFunction::zeros(spec);
    for (i, j) in spec.interior_points() {
        u.set(i, j, rng.gen_range(-1.0..1.0));
    }
    u
}

/// Candidate solution fields produced by a randomly initialized network with
/// the problem's boundary treatment applied; these are the smooth fields a
/// training run moves through.
pub fn candidate_fields(pspec: &ProblemSpec, seed: u64) -> Vec<GridFunction> {
    let spec = pspec.grid();
    let config = MlpConfig::new(pspec.problem().num_fields(), 2, 16, seed);
    let params = nn::init_params(config);
    let points: Vec<(f64, f64)> = spec
        .points()
        .map(|(i, j)| (spec.coord(i), spec.coord(j)))
        .collect();
    let raw: Vec<GridFunction> = nn::forward(&params, &points)
        .into_iter()
        .map(|vals| GridFunction::from_values(spec, vals).unwrap())
        .collect();
    nn::apply_boundary(&raw, pspec.boundary_treatment())
}

fn axpy(a: &GridFunction, b: &GridFunction, sa: f64, sb: f64) -> GridFunction {
    let mut out = a.clone();
    for (o, (x, y)) in out
        .values_mut()
        .iter_mut()
        .zip(a.values().iter().zip(b.values()))
    {
        *o = sa * x + sb * y;
    }
    out
}

/// Brute-force Stokes graph inner product of two field sets in canonical
/// order, computed directly from the grid operators. The momentum-slot term
/// is sampled at the interior points it pairs against.
pub fn stokes_graph_product(u: &[GridFunction], v: &[GridFunction]) -> f64 {
    let comp = |f: &[GridFunction]| {
        let (gw1x, _) = grad_forward(&f[0]);
        let (_, gw2y) = grad_forward(&f[1]);
        let (gz1x, _) = grad_forward(&f[2]);
        let (_, gz2y) = grad_forward(&f[3]);
        let (gpx, gpy) = grad_forward(&f[6]);
        let mask = |g: &GridFunction| {
            let spec = g.spec();
            let mut out = GridFunction::zeros(spec);
            for (i, j) in spec.interior_points() {
                out.set(i, j, g.get(i, j));
            }
            out
        };
        let c1 = mask(&axpy(&axpy(&gw1x, &gw2y, 1.0, 1.0), &gpx, 1.0, -1.0));
        let c2 = mask(&axpy(&axpy(&gz1x, &gz2y, 1.0, 1.0), &gpy, 1.0, -1.0));
        let (gu1x, gu1y) = grad_backward(&f[4]);
        let (gu2x, gu2y) = grad_backward(&f[5]);
        let div = axpy(&gu1x, &gu2y, 1.0, 1.0);
        let t11 = axpy(&f[0], &gu1x, 1.0, 1.0);
        let t12 = axpy(&f[1], &gu1y, 1.0, 1.0);
        let t21 = axpy(&f[2], &gu2x, 1.0, 1.0);
        let t22 = axpy(&f[3], &gu2y, 1.0, 1.0);
        (c1, c2, div, t11, t12, t21, t22)
    };
    let a = comp(u);
    let b = comp(v);
    let mut acc = 0.0;
    acc += inner_h(&a.0, &b.0).unwrap() + inner_h(&a.1, &b.1).unwrap();
    acc += inner_h(&a.2, &b.2).unwrap();
    acc += inner_h(&a.3, &b.3).unwrap()
        + inner_h(&a.4, &b.4).unwrap()
        + inner_h(&a.5, &b.5).unwrap()
        + inner_h(&a.6, &b.6).unwrap();
    for k in 0..7 {
        acc += inner_h(&u[k], &v[k]).unwrap();
    }
    acc
}
