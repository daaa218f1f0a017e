//! Inf-sup verification: kernel structure, Rayleigh consistency, the
//! continuity constant, and regression against the eigenvalues recorded on
//! the first run.

mod common;

use crvpinn::gram::{gram_stokes, stokes_operator_matrix, StokesDofLayout, STOKES_FIELDS};
use crvpinn::grid::GridSpec;
use crvpinn::infsup::infsup_constant;
use crvpinn::sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// second-smallest generalized eigenvalues recorded on the first run
const GOLDEN_LAMBDA1: [(usize, f64); 2] = [(4, 1.766522383818599e-2), (8, 1.628058047190611e-2)];

#[test]
fn report_invariants_and_golden_values_at_small_sizes() {
    for (n, golden) in GOLDEN_LAMBDA1 {
        let rep = infsup_constant(n).unwrap();
        assert!(rep.lambda0 <= 1e-10, "N={n}: lambda0 = {:.3e}", rep.lambda0);
        assert!(rep.lambda0 <= rep.lambda1);
        assert!(
            rep.kernel_pressure_deviation <= 1e-8,
            "N={n}: kernel pressure deviation {:.3e}",
            rep.kernel_pressure_deviation
        );
        assert!(
            rep.kernel_sigma_u_max <= 1e-8,
            "N={n}: kernel sigma/u magnitude {:.3e}",
            rep.kernel_sigma_u_max
        );
        assert!(
            rep.rayleigh_consistency <= 1e-10,
            "N={n}: Rayleigh consistency {:.3e}",
            rep.rayleigh_consistency
        );
        assert!(
            rep.r_min_eigenvalue >= -1e-10,
            "N={n}: R min eigenvalue {:.3e}",
            rep.r_min_eigenvalue
        );
        assert!(rep.alpha >= 0.125, "N={n}: alpha = {}", rep.alpha);
        let rel = ((rep.lambda1 - golden) / golden).abs();
        assert!(rel <= 1e-6, "N={n}: lambda1 drifted by {rel:.3e}");
    }
}

#[test]
fn alpha_plateaus_across_grid_sizes() {
    let a4 = infsup_constant(4).unwrap().alpha;
    let a8 = infsup_constant(8).unwrap().alpha;
    let drift = (a4 - a8).abs() / a4;
    assert!(drift <= 0.10, "alpha moved by {:.1}%", drift * 100.0);
    assert!(a8 <= a4 * 1.01, "alpha should not grow under refinement");
}

#[test]
fn continuity_holds_with_unit_constant() {
    // <Au, v>_h <= ||u||_U ||v||_V for random pairs: mu = 1
    let spec = GridSpec::new(6);
    let layout = StokesDofLayout::extended(spec);
    let b = stokes_operator_matrix(spec, &layout).unwrap();
    let g = gram_stokes(spec, &layout).unwrap();
    let h2 = spec.h() * spec.h();
    let m = CsrMatrix::scaled_identity(layout.total(), h2);
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..100 {
        let u: Vec<f64> = (0..layout.total())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let v: Vec<f64> = (0..layout.total())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let bu = b.mul_vec(&u).unwrap();
        let pairing: f64 = v.iter().zip(&bu).map(|(a, c)| a * c).sum();
        let mu_vec = m.mul_vec(&u).unwrap();
        let u_norm: f64 = u
            .iter()
            .zip(&mu_vec)
            .map(|(a, c)| a * c)
            .sum::<f64>()
            .sqrt();
        let gv = g.matrix().mul_vec(&v).unwrap();
        let v_norm: f64 = v.iter().zip(&gv).map(|(a, c)| a * c).sum::<f64>().sqrt();
        assert!(
            pairing.abs() <= u_norm * v_norm * (1.0 + 1e-12),
            "pairing {pairing} vs {u_norm} * {v_norm}"
        );
    }
}

#[test]
fn kernel_vector_is_supported_on_the_pressure_block() {
    let n = 6;
    let spec = GridSpec::new(n);
    let layout = StokesDofLayout::extended(spec);
    let b = stokes_operator_matrix(spec, &layout).unwrap();
    // the constant pressure over the dofs spans the kernel
    let mut x = vec![0.0; layout.total()];
    for k in layout.offset(crvpinn::gram::StokesField::P)..layout.total() {
        x[k] = 1.0;
    }
    let bx = b.mul_vec(&x).unwrap();
    assert!(bx.iter().all(|v| v.abs() < 1e-13));
    // and no other single-field constant is in the kernel
    for field in &STOKES_FIELDS[..6] {
        let mut y = vec![0.0; layout.total()];
        let off = layout.offset(*field);
        for k in 0..layout.dof_set(*field).len() {
            y[off + k] = 1.0;
        }
        let by = b.mul_vec(&y).unwrap();
        let norm: f64 = by.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 1e-6, "{field:?} constant unexpectedly near the kernel");
    }
}
