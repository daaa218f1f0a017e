//! The six benchmark problems: analytic exact solutions, forcing terms,
//! residual assemblers over the discrete operators, Gram selection, boundary
//! treatment, and robustness constants.
//!
//! Residuals are linear in the field values, so each problem carries its
//! residual operator as an explicit sparse matrix `D` over the full-grid
//! value vector plus a constant offset: `res = D·values + c`, in pointwise
//! (unweighted) scaling. The same matrix chains loss cotangents back to the
//! grid through [`ProblemSpec::residual_transpose_mul`].
//!
//! Forcing terms for the variable-diffusion, jump and Stokes problems are
//! derived from the exact solutions by hand-coded analytic derivatives; the
//! tests cross-check every (exact, forcing) pair against a central-difference
//! oracle.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{
    gram_laplace, gram_stokes, gram_variable_diffusion, GramMatrix, StokesDofLayout, StokesField,
};
use crate::grid::{DofSet, GridFunction, GridSpec};
use crate::nn::{BoundaryTreatment, LiftKind};
use crate::sparse::CsrMatrix;

/// Benchmark problem identifiers; the names are the CLI contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Problem {
    #[serde(rename = "laplace-sinsin")]
    LaplaceSinSin,
    #[serde(rename = "laplace-expsin")]
    LaplaceExpSin,
    #[serde(rename = "advection-diffusion")]
    AdvectionDiffusion,
    #[serde(rename = "poisson-vardiff")]
    PoissonVarDiff,
    #[serde(rename = "poisson-jump")]
    PoissonJump,
    #[serde(rename = "stokes")]
    Stokes,
}

impl Problem {
    pub const ALL: [Problem; 6] = [
        Problem::LaplaceSinSin,
        Problem::LaplaceExpSin,
        Problem::AdvectionDiffusion,
        Problem::PoissonVarDiff,
        Problem::PoissonJump,
        Problem::Stokes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Problem::LaplaceSinSin => "laplace-sinsin",
            Problem::LaplaceExpSin => "laplace-expsin",
            Problem::AdvectionDiffusion => "advection-diffusion",
            Problem::PoissonVarDiff => "poisson-vardiff",
            Problem::PoissonJump => "poisson-jump",
            Problem::Stokes => "stokes",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Problem::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                let valid = Problem::ALL
                    .iter()
                    .map(|p| p.name())
                    .collect::<Vec<_>>()
                    .join(", ");
                Error::UnknownProblem(name.to_string(), valid)
            })
    }

    /// Scalar problems train one field; Stokes trains seven.
    pub fn num_fields(self) -> usize {
        match self {
            Problem::Stokes => 7,
            _ => 1,
        }
    }

    /// Analytic exact solution, one value per field in canonical order.
    pub fn exact_solution(self, x1: f64, x2: f64) -> Vec<f64> {
        match self {
            Problem::LaplaceSinSin => vec![(2.0 * PI * x1).sin() * (2.0 * PI * x2).sin()],
            Problem::LaplaceExpSin => {
                vec![-((PI * (x1 - 2.0 * x2)).exp()) * (2.0 * PI * x1).sin() * (PI * x2).sin()]
            }
            Problem::AdvectionDiffusion => {
                let (r1, r2) = eriksson_johnson_rates(ADVECTION_EPS);
                let denom = (-r1).exp() - (-r2).exp();
                vec![((r1 * (x1 - 1.0)).exp() - (r2 * (x1 - 1.0)).exp()) / denom * (PI * x2).sin()]
            }
            Problem::PoissonVarDiff => vec![(2.0 * PI * x1).sin() * (PI * x2).sin()],
            Problem::PoissonJump => {
                vec![jump_profile(x2) * (PI * x1).sin() * (PI * x2).sin()]
            }
            Problem::Stokes => {
                let u1 = stokes_phi(x1) * stokes_psi_d(x2);
                let u2 = -stokes_phi_d(x1) * stokes_psi(x2);
                let w1 = stokes_phi_d(x1) * stokes_psi_d(x2);
                let w2 = stokes_phi(x1) * stokes_psi_dd(x2);
                let z1 = -stokes_phi_dd(x1) * stokes_psi(x2);
                let z2 = -stokes_phi_d(x1) * stokes_psi_d(x2);
                let p = stokes_pressure(x1, x2);
                vec![w1, w2, z1, z2, u1, u2, p]
            }
        }
    }

    /// Analytic forcing; one value for scalar problems, the two momentum
    /// components for Stokes.
    pub fn forcing(self, x1: f64, x2: f64) -> Vec<f64> {
        match self {
            Problem::LaplaceSinSin => {
                vec![8.0 * PI * PI * (2.0 * PI * x1).sin() * (2.0 * PI * x2).sin()]
            }
            Problem::LaplaceExpSin => {
                let e = (PI * (x1 - 2.0 * x2)).exp();
                let s2x = (2.0 * PI * x1).sin();
                let c2x = (2.0 * PI * x1).cos();
                let sy = (PI * x2).sin();
                let cy = (PI * x2).cos();
                vec![
                    PI * PI * e * sy * (4.0 * c2x - 3.0 * s2x)
                        - PI * PI * e * s2x * (4.0 * cy - 3.0 * sy),
                ]
            }
            Problem::AdvectionDiffusion => vec![0.0],
            Problem::PoissonVarDiff => {
                // f = div(eps grad u) = eps*Lap(u) + eps'*du/dx2 for eps(x2)
                let s2x = (2.0 * PI * x1).sin();
                let sy = (PI * x2).sin();
                let cy = (PI * x2).cos();
                let eps = vardiff_eps(x2);
                vec![eps * (-5.0 * PI * PI) * s2x * sy + 2.0 * PI * s2x * cy]
            }
            Problem::PoissonJump => {
                // f = -Lap(u) for u = T(x2) sin(pi x1) sin(pi x2)
                let sx = (PI * x1).sin();
                let sy = (PI * x2).sin();
                let cy = (PI * x2).cos();
                let z = 100.0 * (x2 - 0.5);
                let t = 0.45 * z.tanh() + 0.55;
                let sech2 = 1.0 / (z.cosh() * z.cosh());
                let t1 = 45.0 * sech2;
                let t2 = -9000.0 * sech2 * z.tanh();
                vec![sx * (2.0 * PI * PI * t * sy - t2 * sy - 2.0 * t1 * PI * cy)]
            }
            Problem::Stokes => {
                let lap_u1 = stokes_phi_dd(x1) * stokes_psi_d(x2) + stokes_phi(x1) * stokes_psi_ddd(x2);
                let lap_u2 =
                    -(stokes_phi_ddd(x1) * stokes_psi(x2) + stokes_phi_d(x1) * stokes_psi_dd(x2));
                let (px, py) = stokes_pressure_grad(x1, x2);
                vec![-lap_u1 + px, -lap_u2 + py]
            }
        }
    }

    /// Boundedness and coercivity/inf-sup constants `(mu, alpha)` used for
    /// the error-bound reporting.
    pub fn robustness_constants(self) -> (f64, f64) {
        match self {
            Problem::AdvectionDiffusion => (2.0 * 2.0 * 1.0 + ADVECTION_EPS, ADVECTION_EPS),
            Problem::Stokes => (1.0, 0.125),
            _ => (1.0, 1.0),
        }
    }
}

pub const ADVECTION_EPS: f64 = 0.1;
pub const ADVECTION_BETA: (f64, f64) = (1.0, 0.0);

/// Characteristic rates of the boundary-layer solution.
pub fn eriksson_johnson_rates(eps: f64) -> (f64, f64) {
    let d = (1.0 + 4.0 * eps * eps * PI * PI).sqrt();
    ((1.0 + d) / (2.0 * eps), (1.0 - d) / (2.0 * eps))
}

fn jump_profile(x2: f64) -> f64 {
    0.45 * (100.0 * (x2 - 0.5)).tanh() + 0.55
}

pub fn vardiff_eps(x2: f64) -> f64 {
    2.0 * (x2 + 1.0)
}

// Stream-function factors of the Stokes benchmark: phi(x) = e^x (x-1)² x²,
// psi(y) = (y² - y)², so (u1, u2) = (phi psi', -phi' psi) is divergence-free
// and vanishes on the whole boundary.
fn stokes_phi(x: f64) -> f64 {
    x.exp() * (x * x * x * x - 2.0 * x * x * x + x * x)
}

fn stokes_phi_d(x: f64) -> f64 {
    x.exp() * (x * x * x * x + 2.0 * x * x * x - 5.0 * x * x + 2.0 * x)
}

fn stokes_phi_dd(x: f64) -> f64 {
    x.exp() * (x * x * x * x + 6.0 * x * x * x + x * x - 8.0 * x + 2.0)
}

fn stokes_phi_ddd(x: f64) -> f64 {
    x.exp() * (x * x * x * x + 10.0 * x * x * x + 19.0 * x * x - 6.0 * x - 6.0)
}

fn stokes_psi(y: f64) -> f64 {
    let q = y * y - y;
    q * q
}

fn stokes_psi_d(y: f64) -> f64 {
    2.0 * (y * y - y) * (2.0 * y - 1.0)
}

fn stokes_psi_dd(y: f64) -> f64 {
    12.0 * y * y - 12.0 * y + 2.0
}

fn stokes_psi_ddd(y: f64) -> f64 {
    24.0 * y - 12.0
}

fn stokes_pressure(x: f64, y: f64) -> f64 {
    let q = y * y - y;
    let a = 456.0 - 456.0 * x + 228.0 * x * x - 72.0 * x * x * x + 12.0 * x * x * x * x;
    let b = x * x * x * x + 2.0 * x * x * x - 5.0 * x * x + 2.0 * x;
    -424.0 + 156.0 * E + q * (-456.0 + x.exp() * (a + q * b))
}

fn stokes_pressure_grad(x: f64, y: f64) -> (f64, f64) {
    let q = y * y - y;
    let a = 456.0 - 456.0 * x + 228.0 * x * x - 72.0 * x * x * x + 12.0 * x * x * x * x;
    let a_d = -456.0 + 456.0 * x - 216.0 * x * x + 48.0 * x * x * x;
    let b = x * x * x * x + 2.0 * x * x * x - 5.0 * x * x + 2.0 * x;
    let b_d = 4.0 * x * x * x + 6.0 * x * x - 10.0 * x + 2.0;
    let px = q * x.exp() * ((a + a_d) + q * (b + b_d));
    let py = (2.0 * y - 1.0) * (-456.0 + x.exp() * (a + 2.0 * q * b));
    (px, py)
}

/// Named grid functions of the first-order Stokes unknowns in canonical
/// order.
#[derive(Debug, Clone)]
pub struct StokesFields {
    pub w1: GridFunction,
    pub w2: GridFunction,
    pub z1: GridFunction,
    pub z2: GridFunction,
    pub u1: GridFunction,
    pub u2: GridFunction,
    pub p: GridFunction,
}

impl StokesFields {
    pub fn from_vec(mut fields: Vec<GridFunction>) -> Result<Self> {
        if fields.len() != 7 {
            return Err(Error::DimensionMismatch {
                expected: 7,
                got: fields.len(),
            });
        }
        let p = fields.pop().expect("7 fields");
        let u2 = fields.pop().expect("7 fields");
        let u1 = fields.pop().expect("7 fields");
        let z2 = fields.pop().expect("7 fields");
        let z1 = fields.pop().expect("7 fields");
        let w2 = fields.pop().expect("7 fields");
        let w1 = fields.pop().expect("7 fields");
        Ok(Self {
            w1,
            w2,
            z1,
            z2,
            u1,
            u2,
            p,
        })
    }

    pub fn into_vec(self) -> Vec<GridFunction> {
        vec![
            self.w1, self.w2, self.z1, self.z2, self.u1, self.u2, self.p,
        ]
    }

    /// Exact solution fields sampled on the grid.
    pub fn sample_exact(spec: GridSpec) -> Self {
        let field = |k: usize| {
            GridFunction::from_fn(spec, |x1, x2| Problem::Stokes.exact_solution(x1, x2)[k])
        };
        Self {
            w1: field(0),
            w2: field(1),
            z1: field(2),
            z2: field(3),
            u1: field(4),
            u2: field(5),
            p: field(6),
        }
    }
}

/// One benchmark problem bound to a grid: boundary treatment, residual
/// operator, dof layout and constants. The Gram matrix is built separately
/// through [`ProblemSpec::build_gram`] because it carries a factorization.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    problem: Problem,
    spec: GridSpec,
    treatment: BoundaryTreatment,
    residual_matrix: CsrMatrix,
    residual_offset: Vec<f64>,
    interior: DofSet,
    stokes_layout: Option<StokesDofLayout>,
}

impl ProblemSpec {
    pub fn new(problem: Problem, n: usize) -> Result<Self> {
        let spec = GridSpec::new(n);
        let interior = DofSet::interior(spec);
        let treatment = match problem {
            Problem::AdvectionDiffusion => BoundaryTreatment::dirichlet(
                spec,
                |x1, x2| if x1 == 0.0 { (PI * x2).sin() } else { 0.0 },
                LiftKind::EdgeBlend,
            ),
            Problem::Stokes => BoundaryTreatment::stokes(spec, |_, _| 0.0, |_, _| 0.0, LiftKind::EdgeBlend),
            _ => BoundaryTreatment::zero_dirichlet(spec, 1),
        };
        let stokes_layout = match problem {
            Problem::Stokes => Some(StokesDofLayout::extended(spec)),
            _ => None,
        };
        let (residual_matrix, residual_offset) = match problem {
            Problem::Stokes => {
                build_stokes_residual(spec, stokes_layout.as_ref().expect("layout built"))?
            }
            _ => build_scalar_residual(problem, spec, &interior)?,
        };
        Ok(Self {
            problem,
            spec,
            treatment,
            residual_matrix,
            residual_offset,
            interior,
            stokes_layout,
        })
    }

    #[inline]
    pub fn problem(&self) -> Problem {
        self.problem
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.spec
    }

    #[inline]
    pub fn boundary_treatment(&self) -> &BoundaryTreatment {
        &self.treatment
    }

    /// Interior dof set (the residual dofs of the scalar problems).
    #[inline]
    pub fn interior_dofs(&self) -> &DofSet {
        &self.interior
    }

    pub fn stokes_layout(&self) -> Option<&StokesDofLayout> {
        self.stokes_layout.as_ref()
    }

    /// Residual operator `res = D·values + c` (pointwise scaling).
    pub fn residual_matrix(&self) -> &CsrMatrix {
        &self.residual_matrix
    }

    pub fn residual_offset(&self) -> &[f64] {
        &self.residual_offset
    }

    /// Number of residual rows.
    pub fn residual_dim(&self) -> usize {
        self.residual_matrix.nrows()
    }

    /// The problem's Gram matrix, factorized.
    pub fn build_gram(&self) -> Result<GramMatrix> {
        match self.problem {
            Problem::PoissonVarDiff => {
                let eps = GridFunction::from_fn(self.spec, |_, x2| vardiff_eps(x2));
                gram_variable_diffusion(self.spec, &eps)
            }
            Problem::Stokes => gram_stokes(
                self.spec,
                self.stokes_layout.as_ref().expect("stokes layout"),
            ),
            _ => gram_laplace(self.spec),
        }
    }

    /// Pointwise strong residual at each dof, computed with the discrete
    /// operators. Fields must already include the boundary treatment.
    pub fn assemble_residual(&self, fields: &[GridFunction]) -> Result<Vec<f64>> {
        if fields.len() != self.problem.num_fields() {
            return Err(Error::DimensionMismatch {
                expected: self.problem.num_fields(),
                got: fields.len(),
            });
        }
        let n_pts = self.spec.num_points();
        let mut values = Vec::with_capacity(fields.len() * n_pts);
        for f in fields {
            if f.spec() != self.spec {
                return Err(Error::SpecMismatch(f.spec().n(), self.spec.n()));
            }
            values.extend_from_slice(f.values());
        }
        let mut res = self.residual_matrix.mul_vec(&values)?;
        for (r, c) in res.iter_mut().zip(&self.residual_offset) {
            *r += c;
        }
        Ok(res)
    }

    /// Chain a residual cotangent back to per-field grid values:
    /// `Dᵀ·w`, split per field.
    pub fn residual_transpose_mul(&self, w: &[f64]) -> Result<Vec<Vec<f64>>> {
        let full = self.residual_matrix.mul_transpose_vec(w)?;
        let n_pts = self.spec.num_points();
        Ok(full.chunks(n_pts).map(|c| c.to_vec()).collect())
    }

    /// Exact solution sampled on the grid, per field.
    pub fn sample_exact(&self) -> Vec<GridFunction> {
        (0..self.problem.num_fields())
            .map(|k| {
                GridFunction::from_fn(self.spec, |x1, x2| {
                    self.problem.exact_solution(x1, x2)[k]
                })
            })
            .collect()
    }

    /// Convection and diffusion coefficients where applicable.
    pub fn convection(&self) -> Option<(f64, f64)> {
        matches!(self.problem, Problem::AdvectionDiffusion).then_some(ADVECTION_BETA)
    }

    pub fn diffusion(&self) -> Option<f64> {
        matches!(self.problem, Problem::AdvectionDiffusion).then_some(ADVECTION_EPS)
    }

    /// Error between two field sets in the norm tied to the problem's
    /// robustness statement: the Gram energy norm for scalar problems, the
    /// weighted block trial norm (with mean-corrected pressure) for Stokes.
    pub fn error_norm(
        &self,
        gram: &GramMatrix,
        fields: &[GridFunction],
        reference: &[GridFunction],
    ) -> Result<f64> {
        if fields.len() != reference.len() || fields.len() != self.problem.num_fields() {
            return Err(Error::DimensionMismatch {
                expected: self.problem.num_fields(),
                got: fields.len(),
            });
        }
        match self.problem {
            Problem::Stokes => {
                let layout = self.stokes_layout.as_ref().expect("stokes layout");
                let h = self.spec.h();
                let mut acc = 0.0;
                for (k, field) in crate::gram::STOKES_FIELDS.iter().enumerate() {
                    let dofs = layout.dof_set(*field);
                    let mut diff: Vec<f64> = dofs
                        .indices()
                        .iter()
                        .map(|&(i, j)| fields[k].get(i, j) - reference[k].get(i, j))
                        .collect();
                    if *field == StokesField::P {
                        let mean = diff.iter().sum::<f64>() / diff.len() as f64;
                        for d in &mut diff {
                            *d -= mean;
                        }
                    }
                    acc += diff.iter().map(|d| d * d).sum::<f64>();
                }
                Ok((h * h * acc).sqrt())
            }
            _ => {
                let diff: Vec<f64> = self
                    .interior
                    .indices()
                    .iter()
                    .map(|&(i, j)| fields[0].get(i, j) - reference[0].get(i, j))
                    .collect();
                gram.energy_norm(&diff)
            }
        }
    }
}

fn build_scalar_residual(
    problem: Problem,
    spec: GridSpec,
    interior: &DofSet,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let n_pts = spec.num_points();
    let h = spec.h();
    let h2inv = 1.0 / (h * h);
    let hinv = 1.0 / h;
    // sampled the same way as in the Gram assembly so the interior blocks of
    // the residual operator and the Gram agree entry by entry
    let eps_fn = GridFunction::from_fn(spec, |_, x2| vardiff_eps(x2));
    let mut triplets = Vec::with_capacity(5 * interior.len());
    let mut offset = vec![0.0; interior.len()];
    for (a, &(i, j)) in interior.indices().iter().enumerate() {
        let x1 = spec.coord(i);
        let x2 = spec.coord(j);
        match problem {
            Problem::LaplaceSinSin | Problem::LaplaceExpSin | Problem::PoissonJump => {
                // res = Lap_h(u) + f
                triplets.push((a, spec.idx(i, j), -4.0 * h2inv));
                triplets.push((a, spec.idx(i + 1, j), h2inv));
                triplets.push((a, spec.idx(i - 1, j), h2inv));
                triplets.push((a, spec.idx(i, j + 1), h2inv));
                triplets.push((a, spec.idx(i, j - 1), h2inv));
                offset[a] = problem.forcing(x1, x2)[0];
            }
            Problem::PoissonVarDiff => {
                // res = div_h(eps grad_h u) - f, fluxes carrying the west and
                // south eps values so the operator matches the Gram stencil
                let e_c = eps_fn.get(i, j);
                let e_w = eps_fn.get(i - 1, j);
                let e_s = eps_fn.get(i, j - 1);
                triplets.push((a, spec.idx(i, j), -(2.0 * e_c + e_w + e_s) * h2inv));
                triplets.push((a, spec.idx(i - 1, j), e_w * h2inv));
                triplets.push((a, spec.idx(i + 1, j), e_c * h2inv));
                triplets.push((a, spec.idx(i, j + 1), e_c * h2inv));
                triplets.push((a, spec.idx(i, j - 1), e_s * h2inv));
                offset[a] = -problem.forcing(x1, x2)[0];
            }
            Problem::AdvectionDiffusion => {
                // res = beta·grad_h+(u) - eps Lap_h(u)
                let (bx, by) = ADVECTION_BETA;
                let eps = ADVECTION_EPS;
                triplets.push((
                    a,
                    spec.idx(i, j),
                    -bx * hinv - by * hinv + 4.0 * eps * h2inv,
                ));
                triplets.push((a, spec.idx(i + 1, j), bx * hinv - eps * h2inv));
                triplets.push((a, spec.idx(i, j + 1), by * hinv - eps * h2inv));
                triplets.push((a, spec.idx(i - 1, j), -eps * h2inv));
                triplets.push((a, spec.idx(i, j - 1), -eps * h2inv));
            }
            Problem::Stokes => unreachable!("scalar path"),
        }
    }
    let matrix = CsrMatrix::from_triplets(interior.len(), n_pts, &triplets)?;
    Ok((matrix, offset))
}

/// The Stokes residual in the block order of the layout, pointwise scaling:
/// `(σ - ∇₋u)` on the σ sets, `(-∇₊·σ + ∇₊p - f)` at interior points,
/// `(∇₋·u)` at pressure points. Columns run over the seven full grids.
fn build_stokes_residual(
    spec: GridSpec,
    layout: &StokesDofLayout,
) -> Result<(CsrMatrix, Vec<f64>)> {
    use StokesField::*;
    let n_pts = spec.num_points();
    let hinv = 1.0 / spec.h();
    let total = layout.total();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut offset = vec![0.0; total];

    let col = |field: StokesField, i: usize, j: usize| field.index() * n_pts + spec.idx(i, j);

    // sigma rows: sigma - backward difference of the velocity
    for (sig, vel, x_deriv) in [(W1, U1, true), (W2, U1, false), (Z1, U2, true), (Z2, U2, false)] {
        let base = layout.offset(sig);
        for (r, &(i, j)) in layout.dof_set(sig).indices().iter().enumerate() {
            let row = base + r;
            triplets.push((row, col(sig, i, j), 1.0));
            if x_deriv {
                triplets.push((row, col(vel, i, j), -hinv));
                triplets.push((row, col(vel, i - 1, j), hinv));
            } else {
                triplets.push((row, col(vel, i, j), -hinv));
                triplets.push((row, col(vel, i, j - 1), hinv));
            }
        }
    }

    // momentum rows at interior points
    for (k, (vtest, s1, s2, pressure_x)) in
        [(U1, W1, W2, true), (U2, Z1, Z2, false)].into_iter().enumerate()
    {
        let base = layout.offset(vtest);
        for (r, &(i, j)) in layout.dof_set(vtest).indices().iter().enumerate() {
            let row = base + r;
            triplets.push((row, col(s1, i + 1, j), -hinv));
            triplets.push((row, col(s1, i, j), hinv));
            triplets.push((row, col(s2, i, j + 1), -hinv));
            triplets.push((row, col(s2, i, j), hinv));
            if pressure_x {
                triplets.push((row, col(P, i + 1, j), hinv));
                triplets.push((row, col(P, i, j), -hinv));
            } else {
                triplets.push((row, col(P, i, j + 1), hinv));
                triplets.push((row, col(P, i, j), -hinv));
            }
            let f = Problem::Stokes.forcing(spec.coord(i), spec.coord(j));
            offset[row] = -f[k];
        }
    }

    // divergence rows at pressure points
    let base = layout.offset(P);
    for (r, &(i, j)) in layout.dof_set(P).indices().iter().enumerate() {
        let row = base + r;
        triplets.push((row, col(U1, i, j), hinv));
        triplets.push((row, col(U1, i - 1, j), -hinv));
        triplets.push((row, col(U2, i, j), hinv));
        triplets.push((row, col(U2, i, j - 1), -hinv));
    }

    let matrix = CsrMatrix::from_triplets(total, 7 * n_pts, &triplets)?;
    Ok((matrix, offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{grad_backward, laplacian_h};

    #[test]
    fn names_round_trip_and_unknown_is_listed() {
        for p in Problem::ALL {
            assert_eq!(Problem::from_name(p.name()).unwrap(), p);
        }
        match Problem::from_name("bogus") {
            Err(Error::UnknownProblem(name, valid)) => {
                assert_eq!(name, "bogus");
                assert!(valid.contains("laplace-sinsin"));
                assert!(valid.contains("stokes"));
            }
            other => panic!("expected unknown-problem error, got {other:?}"),
        }
    }

    #[test]
    fn sin_sin_peak_value() {
        let u = Problem::LaplaceSinSin.exact_solution(0.25, 0.25);
        assert!((u[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sin_sin_forcing_at_peak() {
        let f = Problem::LaplaceSinSin.forcing(0.25, 0.25);
        assert!((f[0] - 8.0 * PI * PI).abs() < 1e-12);
        assert!((f[0] - 78.95683520871486).abs() < 1e-10);
    }

    #[test]
    fn boundary_layer_solution_edges_and_rates() {
        let p = Problem::AdvectionDiffusion;
        for x2 in [0.1, 0.5, 0.9] {
            assert!(p.exact_solution(1.0, x2)[0].abs() < 1e-14);
            let left = p.exact_solution(0.0, x2)[0];
            assert!((left - (PI * x2).sin()).abs() < 1e-13);
        }
        let (r1, r2) = eriksson_johnson_rates(ADVECTION_EPS);
        assert!((r1 - 10.905053).abs() < 1e-5);
        assert!((r2 + 0.905053).abs() < 1e-5);
    }

    #[test]
    fn robustness_constants_per_problem() {
        assert_eq!(Problem::LaplaceSinSin.robustness_constants(), (1.0, 1.0));
        assert_eq!(
            Problem::AdvectionDiffusion.robustness_constants(),
            (4.1, 0.1)
        );
        assert_eq!(Problem::Stokes.robustness_constants(), (1.0, 0.125));
    }

    #[test]
    fn serde_names_match_cli_names() {
        for p in Problem::ALL {
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.name()));
        }
    }

    #[test]
    fn zero_fields_leave_the_forcing_as_residual() {
        let pspec = ProblemSpec::new(Problem::LaplaceSinSin, 6).unwrap();
        let zero = GridFunction::zeros(pspec.grid());
        let res = pspec.assemble_residual(&[zero]).unwrap();
        for (a, &(i, j)) in pspec.interior_dofs().indices().iter().enumerate() {
            let f = Problem::LaplaceSinSin.forcing(pspec.grid().coord(i), pspec.grid().coord(j));
            assert!((res[a] - f[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_residual_matches_discrete_operators() {
        let pspec = ProblemSpec::new(Problem::AdvectionDiffusion, 8).unwrap();
        let spec = pspec.grid();
        let u = GridFunction::from_fn(spec, |x, y| (1.3 * x).sin() * (0.7 + y).cos());
        let res = pspec.assemble_residual(&[u.clone()]).unwrap();
        let lap = laplacian_h(&u);
        let h = spec.h();
        for (a, &(i, j)) in pspec.interior_dofs().indices().iter().enumerate() {
            let conv = (u.get(i + 1, j) - u.get(i, j)) / h;
            let expected = conv - ADVECTION_EPS * lap.get(i, j);
            assert!((res[a] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_rejects_wrong_field_count_or_grid() {
        let pspec = ProblemSpec::new(Problem::LaplaceSinSin, 4).unwrap();
        let wrong_grid = GridFunction::zeros(GridSpec::new(5));
        assert!(pspec.assemble_residual(&[wrong_grid]).is_err());
        let ok = GridFunction::zeros(pspec.grid());
        assert!(pspec
            .assemble_residual(&[ok.clone(), ok])
            .is_err());
    }

    #[test]
    fn stokes_residual_vanishes_on_discrete_gradient_construction() {
        // sigma defined as the backward discrete gradient of the sampled
        // exact velocity forces the first four blocks to vanish identically
        let pspec = ProblemSpec::new(Problem::Stokes, 6).unwrap();
        let spec = pspec.grid();
        let exact = StokesFields::sample_exact(spec);
        let (w1, w2) = grad_backward(&exact.u1);
        let (z1, z2) = grad_backward(&exact.u2);
        let fields = vec![
            w1,
            w2,
            z1,
            z2,
            exact.u1.clone(),
            exact.u2.clone(),
            exact.p.clone(),
        ];
        let res = pspec.assemble_residual(&fields).unwrap();
        let layout = pspec.stokes_layout().unwrap();
        let sigma_rows = layout.offset(StokesField::U1);
        for (k, r) in res[..sigma_rows].iter().enumerate() {
            assert!(r.abs() < 1e-12, "sigma row {k}: {r}");
        }
        // divergence block equals the sampled discrete divergence
        let div_rows = layout.offset(StokesField::P);
        let (du1, _) = grad_backward(&exact.u1);
        let (_, dv2) = grad_backward(&exact.u2);
        for (r, &(i, j)) in layout
            .dof_set(StokesField::P)
            .indices()
            .iter()
            .enumerate()
        {
            let expected = du1.get(i, j) + dv2.get(i, j);
            assert!((res[div_rows + r] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn stokes_exact_fields_are_named_consistently() {
        let spec = GridSpec::new(5);
        let fields = StokesFields::sample_exact(spec);
        let round = StokesFields::from_vec(fields.clone().into_vec()).unwrap();
        assert_eq!(round.p, fields.p);
        assert_eq!(round.u1, fields.u1);
        // velocity vanishes on the whole boundary (homogeneous data)
        assert!(fields.u1.is_interior());
        assert!(fields.u2.is_interior());
    }
}
