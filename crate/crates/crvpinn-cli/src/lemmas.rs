//! Randomized lemma checks behind the `lemmas` subcommand: discrete
//! integration by parts, the discrete product rule, and the norm
//! equivalence with its stated constants.

use crvpinn::grid::{
    grad_backward, grad_forward, inner_grad_h, inner_h, norm_h, GridFunction, GridSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOLERANCE: f64 = 1e-12;

pub struct LemmaReport {
    pub name: &'static str,
    pub n: usize,
    pub max_defect: f64,
    pub pass: bool,
    pub witness_seed: Option<u64>,
}

fn random_interior(spec: GridSpec, rng: &mut ChaCha8Rng) -> GridFunction {
    let mut u = GridFunction::zeros(spec);
    for (i, j) in spec.interior_points() {
        u.set(i, j, rng.gen_range(-1.0..1.0));
    }
    u
}

/// Defect of the integration-by-parts identity on one pair, relative to the
/// Cauchy-Schwarz scale of the two inner products; the injected bug flips
/// the backward-difference sign.
fn integration_by_parts_defect(u: &GridFunction, v: &GridFunction, inject_bug: bool) -> f64 {
    let (ux, uy) = grad_forward(u);
    let (vx, vy) = grad_backward(v);
    let sign = if inject_bug { -1.0 } else { 1.0 };
    let ax = inner_h(&ux, v).unwrap();
    let bx = inner_h(u, &vx).unwrap();
    let ay = inner_h(&uy, v).unwrap();
    let by = inner_h(u, &vy).unwrap();
    let sx = (norm_h(&ux) * norm_h(v)).max(1e-30);
    let sy = (norm_h(&uy) * norm_h(v)).max(1e-30);
    ((ax + sign * bx).abs() / sx).max((ay + sign * by).abs() / sy)
}

fn product_rule_defect(u: &GridFunction, v: &GridFunction) -> f64 {
    let spec = u.spec();
    let n = spec.n();
    let mut uv = u.clone();
    for (w, x) in uv.values_mut().iter_mut().zip(v.values()) {
        *w *= x;
    }
    let (puv_x, puv_y) = grad_forward(&uv);
    let (ux, uy) = grad_forward(u);
    let (vx, vy) = grad_forward(v);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let rx = puv_x.get(i, j) - (u.get(i + 1, j) * vx.get(i, j) + ux.get(i, j) * v.get(i, j));
            let ry = puv_y.get(i, j) - (u.get(i, j + 1) * vy.get(i, j) + uy.get(i, j) * v.get(i, j));
            let scale = puv_x.get(i, j).abs().max(puv_y.get(i, j).abs()).max(1.0);
            worst = worst.max(rx.abs().max(ry.abs()) / scale);
        }
    }
    worst
}

/// How far the pair of norm-equivalence inequalities is from holding;
/// nonpositive means both hold.
fn norm_equivalence_defect(u: &GridFunction) -> f64 {
    let h = u.spec().h();
    let c = h / (2.0 * 2.0_f64.sqrt());
    let grad_norm = inner_grad_h(u, u).unwrap().sqrt();
    let plain = norm_h(u);
    if plain == 0.0 {
        return 0.0;
    }
    let lower = c * grad_norm / plain - 1.0;
    let upper = plain / (2.0 * grad_norm) - 1.0;
    lower.max(upper).max(0.0)
}

pub fn run_checks(ns: &[usize], trials: usize, seed: u64, inject_bug: bool) -> Vec<LemmaReport> {
    let mut reports = Vec::new();
    for &n in ns {
        let spec = GridSpec::new(n);
        let mut check = |name: &'static str, f: &dyn Fn(&mut ChaCha8Rng) -> f64| {
            let mut max_defect = 0.0f64;
            let mut witness_seed = None;
            for trial in 0..trials {
                let trial_seed = seed.wrapping_add(trial as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
                let defect = f(&mut rng);
                if defect > max_defect {
                    max_defect = defect;
                }
                if defect > TOLERANCE && witness_seed.is_none() {
                    witness_seed = Some(trial_seed);
                }
            }
            reports.push(LemmaReport {
                name,
                n,
                max_defect,
                pass: witness_seed.is_none(),
                witness_seed,
            });
        };
        check("integration-by-parts", &|rng| {
            let u = random_interior(spec, rng);
            let v = random_interior(spec, rng);
            integration_by_parts_defect(&u, &v, inject_bug)
        });
        check("product-rule", &|rng| {
            let u = random_interior(spec, rng);
            let v = random_interior(spec, rng);
            product_rule_defect(&u, &v)
        });
        check("norm-equivalence", &|rng| {
            let u = random_interior(spec, rng);
            norm_equivalence_defect(&u)
        });
    }
    reports
}
