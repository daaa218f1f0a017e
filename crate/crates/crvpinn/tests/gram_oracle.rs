//! Gram matrices checked against brute-force inner products computed with
//! the grid operators, plus the structural identities tying the Stokes Gram
//! to the first-order operator matrix.

mod common;

use crvpinn::gram::{
    gram_laplace, gram_stokes, gram_variable_diffusion, stokes_operator_matrix, StokesDofLayout,
    STOKES_FIELDS,
};
use crvpinn::grid::{inner_grad_forward_raw, GridFunction, GridSpec};
use crvpinn::sparse::CsrMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn quadratic_form_equals_grid_norms_for_scalar_grams() {
    let spec = GridSpec::new(8);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let laplace = gram_laplace(spec).unwrap();
    let eps = GridFunction::from_fn(spec, |_, x2| 2.0 * (x2 + 1.0));
    let vardiff = gram_variable_diffusion(spec, &eps).unwrap();
    let dofs = crvpinn::grid::DofSet::interior(spec);
    let h2 = spec.h() * spec.h();
    for _ in 0..20 {
        let u = common::random_interior_function(spec, &mut rng);
        let x = dofs.gather(&u);
        // unweighted convention: the quadratic form is the gradient product
        // divided by the quadrature weight
        let gx = laplace.matrix().mul_vec(&x).unwrap();
        let quad: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        let brute = inner_grad_forward_raw(&u, &u) / h2;
        assert!((quad - brute).abs() <= 1e-12 * brute.abs().max(1.0));

        // variable diffusion: eps-weighted flux energy
        let gx = vardiff.matrix().mul_vec(&x).unwrap();
        let quad: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        let mut energy = 0.0;
        for i in 0..spec.n() {
            for j in 0..=spec.n() {
                let d = u.get(i + 1, j) - u.get(i, j);
                energy += eps.get(i, j) * d * d / h2;
            }
        }
        for i in 0..=spec.n() {
            for j in 0..spec.n() {
                let d = u.get(i, j + 1) - u.get(i, j);
                energy += eps.get(i, j) * d * d / h2;
            }
        }
        assert!(
            (quad - energy).abs() <= 1e-12 * energy.abs().max(1.0),
            "vardiff energy mismatch: {quad} vs {energy}"
        );
    }
}

#[test]
fn stokes_gram_matches_brute_force_graph_product() {
    let spec = GridSpec::new(4);
    let layout = StokesDofLayout::extended(spec);
    let g = gram_stokes(spec, &layout).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut random_fields = || -> (Vec<f64>, Vec<GridFunction>) {
        let mut coeffs = Vec::new();
        let mut fields = Vec::new();
        for f in STOKES_FIELDS {
            let dofs = layout.dof_set(f);
            let x: Vec<f64> = (0..dofs.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            fields.push(dofs.scatter(&x).unwrap());
            coeffs.extend(x);
        }
        (coeffs, fields)
    };
    for _ in 0..12 {
        let (xu, fu) = random_fields();
        let (xv, fv) = random_fields();
        let gu = g.matrix().mul_vec(&xu).unwrap();
        let quad: f64 = xv.iter().zip(&gu).map(|(a, b)| a * b).sum();
        let brute = common::stokes_graph_product(&fu, &fv);
        assert!(
            (quad - brute).abs() <= 1e-12 * brute.abs().max(1.0),
            "graph product mismatch: {quad} vs {brute}"
        );
    }
}

#[test]
fn stokes_gram_is_spd_at_small_size() {
    let spec = GridSpec::new(6);
    let layout = StokesDofLayout::extended(spec);
    let g = gram_stokes(spec, &layout).unwrap();
    assert_eq!(g.matrix().max_asymmetry(), 0.0);
    let dense = g.matrix().to_dense();
    let eig = dense.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min > 0.0, "smallest eigenvalue {min}");
}

#[test]
fn stokes_gram_is_operator_product_plus_masses() {
    let spec = GridSpec::new(5);
    let layout = StokesDofLayout::extended(spec);
    let g = gram_stokes(spec, &layout).unwrap().matrix().to_dense();
    let b = stokes_operator_matrix(spec, &layout).unwrap();
    let h2 = spec.h() * spec.h();
    let m = CsrMatrix::scaled_identity(layout.total(), h2);
    let mf = m.factorize().unwrap();
    let dim = layout.total();
    let mut x = DMatrix::zeros(dim, dim);
    let mut col = vec![0.0; dim];
    for i in 0..dim {
        for v in col.iter_mut() {
            *v = 0.0;
        }
        for (j, val) in b.row(i) {
            col[j] = val;
        }
        mf.solve_in_place(&mut col);
        for (r, &v) in col.iter().enumerate() {
            x[(r, i)] = v;
        }
    }
    let r = b.to_dense() * x;
    let expected = r + DMatrix::identity(dim, dim) * h2;
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            worst = worst.max((g[(i, j)] - expected[(i, j)]).abs());
        }
    }
    assert!(worst <= 1e-12, "G vs B M^-1 B^T + h^2 I: {worst:.3e}");
}

#[test]
fn operator_matrix_agrees_with_the_residual_stencils() {
    // the operator matrix is the residual operator restricted to the
    // constrained trial dofs, scaled by the quadrature weight
    let spec = GridSpec::new(6);
    let layout = StokesDofLayout::extended(spec);
    let b = stokes_operator_matrix(spec, &layout).unwrap();
    let pspec = crvpinn::problems::ProblemSpec::new(crvpinn::problems::Problem::Stokes, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..6 {
        let mut coeffs = Vec::new();
        let mut fields = Vec::new();
        for f in STOKES_FIELDS {
            let dofs = layout.dof_set(f);
            let x: Vec<f64> = (0..dofs.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            fields.push(dofs.scatter(&x).unwrap());
            coeffs.extend(x);
        }
        let bx = b.mul_vec(&coeffs).unwrap();
        let res = pspec.assemble_residual(&fields).unwrap();
        let h2 = spec.h() * spec.h();
        // remove the forcing offset to compare the linear parts
        for (k, (bv, (rv, c))) in bx
            .iter()
            .zip(res.iter().zip(pspec.residual_offset()))
            .enumerate()
        {
            let linear = rv - c;
            assert!(
                (bv - h2 * linear).abs() <= 1e-12,
                "row {k}: {bv} vs {}",
                h2 * linear
            );
        }
    }
}

#[test]
fn laplace_gram_entries_from_delta_pairs_at_n5() {
    let spec = GridSpec::new(5);
    let g = gram_laplace(spec).unwrap();
    let dofs = crvpinn::grid::DofSet::interior(spec);
    let h2 = spec.h() * spec.h();
    for (a, &(ia, ja)) in dofs.indices().iter().enumerate() {
        let da = GridFunction::delta(spec, ia, ja);
        for (b, &(ib, jb)) in dofs.indices().iter().enumerate() {
            let db = GridFunction::delta(spec, ib, jb);
            let brute = inner_grad_forward_raw(&da, &db) / h2;
            assert!((g.matrix().get(a, b) - brute).abs() <= 1e-11);
        }
    }
}
