//! Gram matrices of the discrete inner products for each problem family:
//! the constant-coefficient gradient Gram, its variable-diffusion variant,
//! and the block Gram of the Stokes graph norm.
//!
//! Two scaling conventions are in use and the tag travels with the matrix:
//!
//! - `Unweighted`: entries follow the `h⁻²·{4, -1}` stencil, i.e. the
//!   gradient inner product without the `h²` quadrature weight. The matching
//!   residual vector is the plain pointwise strong residual.
//! - `Weighted`: entries carry the `h²` weight of the discrete inner product
//!   `(·,·)_h`. The matching residual vector is `h²` times the pointwise
//!   residual (see [`GramMatrix::residual_scale`]).
//!
//! Either way `xᵀ G x` is the squared energy norm of the grid function with
//! coefficients `x`, which is what the robustness identities rely on.

use crate::error::{Error, Result};
use crate::grid::{DofSet, GridFunction, GridSpec};
use crate::sparse::{CsrMatrix, Factorization};

/// Inner-product scaling recorded on an assembled Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// Plain point sums; matches pointwise strong residuals.
    Unweighted,
    /// Carries the `h²` quadrature weight of `(·,·)_h`.
    Weighted,
}

/// SPD Gram matrix over a [`DofSet`] ordering, factorized once on
/// construction.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    matrix: CsrMatrix,
    factorization: Factorization,
    convention: Convention,
    spec: GridSpec,
}

impl GramMatrix {
    /// Wrap an assembled matrix and factorize it. A factorization failure
    /// reports the offending pivot, which doubles as an assembly check.
    pub fn new(matrix: CsrMatrix, convention: Convention, spec: GridSpec) -> Result<Self> {
        let factorization = matrix.factorize()?;
        Ok(Self {
            matrix,
            factorization,
            convention,
            spec,
        })
    }

    #[inline]
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    #[inline]
    pub fn factorization(&self) -> &Factorization {
        &self.factorization
    }

    #[inline]
    pub fn convention(&self) -> Convention {
        self.convention
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Factor converting a pointwise strong residual into the residual
    /// vector matching this matrix's convention: `1` unweighted, `h²`
    /// weighted.
    pub fn residual_scale(&self) -> f64 {
        match self.convention {
            Convention::Unweighted => 1.0,
            Convention::Weighted => self.spec.h() * self.spec.h(),
        }
    }

    /// Energy norm `sqrt(xᵀ G x)` of a dof vector.
    pub fn energy_norm(&self, x: &[f64]) -> Result<f64> {
        let gx = self.matrix.mul_vec(x)?;
        let q: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        Ok(q.max(0.0).sqrt())
    }
}

/// Gram of the gradient inner product on interior points: the `(N-1)²`
/// matrix with `4h⁻²` on the diagonal and `-h⁻²` for the four axis neighbors
/// (unweighted convention).
pub fn gram_laplace(spec: GridSpec) -> Result<GramMatrix> {
    let dofs = DofSet::interior(spec);
    let n = spec.n();
    let h = spec.h();
    let h2inv = 1.0 / (h * h);
    let mut triplets = Vec::with_capacity(5 * dofs.len());
    for (a, &(i, j)) in dofs.indices().iter().enumerate() {
        triplets.push((a, a, 4.0 * h2inv));
        for (ii, jj) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
            if ii > 0 && jj > 0 && ii < n && jj < n {
                let b = dofs.position(ii, jj).expect("interior neighbor");
                triplets.push((a, b, -h2inv));
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(dofs.len(), dofs.len(), &triplets)?;
    GramMatrix::new(matrix, Convention::Unweighted, spec)
}

/// Variable-diffusion Gram on interior points. Per interior row `(i, j)` the
/// stencil is
///
/// ```text
/// h⁻² · { 2ε_{i,j}+ε_{i-1,j}+ε_{i,j-1}  center
///         -ε_{i-1,j}   west      -ε_{i,j}     east
///         -ε_{i,j}     north     -ε_{i,j-1}   south }
/// ```
///
/// scaled so that `ε ≡ 1` reproduces [`gram_laplace`] exactly, entry by
/// entry. Symmetry is structural: the east coefficient of `(i, j)` and the
/// west coefficient of `(i+1, j)` are both `ε_{i,j}`.
pub fn gram_variable_diffusion(spec: GridSpec, eps: &GridFunction) -> Result<GramMatrix> {
    if eps.spec() != spec {
        return Err(Error::SpecMismatch(eps.spec().n(), spec.n()));
    }
    for (i, j) in spec.points() {
        let v = eps.get(i, j);
        if !(v > 0.0) {
            return Err(Error::NonPositiveDiffusion { i, j, value: v });
        }
    }
    let dofs = DofSet::interior(spec);
    let n = spec.n();
    let h = spec.h();
    let h2inv = 1.0 / (h * h);
    let mut triplets = Vec::with_capacity(5 * dofs.len());
    for (a, &(i, j)) in dofs.indices().iter().enumerate() {
        let e_c = eps.get(i, j);
        let e_w = eps.get(i - 1, j);
        let e_s = eps.get(i, j - 1);
        triplets.push((a, a, (2.0 * e_c + e_w + e_s) * h2inv));
        for ((ii, jj), coeff) in [
            ((i - 1, j), e_w),
            ((i + 1, j), e_c),
            ((i, j + 1), e_c),
            ((i, j - 1), e_s),
        ] {
            if ii > 0 && jj > 0 && ii < n && jj < n {
                let b = dofs.position(ii, jj).expect("interior neighbor");
                triplets.push((a, b, -coeff * h2inv));
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(dofs.len(), dofs.len(), &triplets)?;
    GramMatrix::new(matrix, Convention::Unweighted, spec)
}

/// The fundamental bilinear forms on pairs of scalar grid functions; the
/// building blocks of the Stokes Gram. The first derivative slot applies to
/// the trial function (matrix columns), the second to the test function
/// (matrix rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// `(f, g)_h`
    Mass,
    /// `(∇₊f, ∇₊g)_h`
    StiffnessForward,
    /// `(∇₋f, ∇₋g)_h`
    StiffnessBackward,
    /// `(∇x₊f, ∇x₊g)_h`
    StiffnessXForward,
    /// `(∇y₊f, ∇y₊g)_h`
    StiffnessYForward,
    /// `(∇x₋f, ∇x₋g)_h`
    StiffnessXBackward,
    /// `(∇y₋f, ∇y₋g)_h`
    StiffnessYBackward,
    /// `(∇x₊f, ∇y₊g)_h`
    MixedForward,
    /// `(∇x₋f, ∇y₋g)_h`
    MixedBackward,
    /// `(∇x₊f, g)_h`
    AdvectionXForward,
    /// `(∇y₊f, g)_h`
    AdvectionYForward,
    /// `(∇x₋f, g)_h`
    AdvectionXBackward,
    /// `(∇y₋f, g)_h`
    AdvectionYBackward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Deriv {
    Id,
    XForward,
    YForward,
    XBackward,
    YBackward,
}

/// Nonzero entries of a derivative applied to the delta at `(i, j)`,
/// restricted to the validity window of that derivative.
fn derivative_stencil(
    spec: GridSpec,
    kind: Deriv,
    i: usize,
    j: usize,
    out: &mut Vec<((usize, usize), f64)>,
) {
    let n = spec.n();
    let hinv = 1.0 / spec.h();
    out.clear();
    match kind {
        Deriv::Id => out.push(((i, j), 1.0)),
        // (∇x₊ δ_{i,j}) = +1/h at (i-1, j), -1/h at (i, j); forward entries
        // live on the window i, j <= N-1
        Deriv::XForward => {
            if i >= 1 && j <= n - 1 {
                out.push(((i - 1, j), hinv));
            }
            if i <= n - 1 && j <= n - 1 {
                out.push(((i, j), -hinv));
            }
        }
        Deriv::YForward => {
            if j >= 1 && i <= n - 1 {
                out.push(((i, j - 1), hinv));
            }
            if j <= n - 1 && i <= n - 1 {
                out.push(((i, j), -hinv));
            }
        }
        // (∇x₋ δ_{i,j}) = +1/h at (i, j), -1/h at (i+1, j); backward entries
        // live on the window i, j >= 1
        Deriv::XBackward => {
            if i >= 1 && j >= 1 {
                out.push(((i, j), hinv));
            }
            if i + 1 <= n && j >= 1 {
                out.push(((i + 1, j), -hinv));
            }
        }
        Deriv::YBackward => {
            if i >= 1 && j >= 1 {
                out.push(((i, j), hinv));
            }
            if j + 1 <= n && i >= 1 {
                out.push(((i, j + 1), -hinv));
            }
        }
    }
}

fn form_terms(kind: FormKind) -> &'static [(Deriv, Deriv)] {
    use Deriv::*;
    match kind {
        FormKind::Mass => &[(Id, Id)],
        FormKind::StiffnessForward => &[(XForward, XForward), (YForward, YForward)],
        FormKind::StiffnessBackward => &[(XBackward, XBackward), (YBackward, YBackward)],
        FormKind::StiffnessXForward => &[(XForward, XForward)],
        FormKind::StiffnessYForward => &[(YForward, YForward)],
        FormKind::StiffnessXBackward => &[(XBackward, XBackward)],
        FormKind::StiffnessYBackward => &[(YBackward, YBackward)],
        FormKind::MixedForward => &[(XForward, YForward)],
        FormKind::MixedBackward => &[(XBackward, YBackward)],
        FormKind::AdvectionXForward => &[(XForward, Id)],
        FormKind::AdvectionYForward => &[(YForward, Id)],
        FormKind::AdvectionXBackward => &[(XBackward, Id)],
        FormKind::AdvectionYBackward => &[(YBackward, Id)],
    }
}

/// Matrix of a fundamental form with trial deltas on `cols` and test deltas
/// on `rows`: `M[a, b] = form(δ_b, δ_a)`, weighted convention. The point sum
/// runs over the derivative validity windows.
pub fn fundamental_block(
    spec: GridSpec,
    kind: FormKind,
    rows: &DofSet,
    cols: &DofSet,
) -> Result<CsrMatrix> {
    fundamental_block_sampled(spec, kind, rows, cols, None)
}

/// Like [`fundamental_block`] but with the point sum restricted to
/// `sample_set` when given. The Stokes graph Gram uses this: each derivative
/// term of the graph norm is summed over the dof set it is paired against,
/// so that the Gram equals `B M⁻¹ Bᵀ` plus the block masses exactly.
pub fn fundamental_block_sampled(
    spec: GridSpec,
    kind: FormKind,
    rows: &DofSet,
    cols: &DofSet,
    sample_set: Option<&DofSet>,
) -> Result<CsrMatrix> {
    let h2 = spec.h() * spec.h();
    let n = spec.n();
    let mut triplets = Vec::new();
    let mut trial = Vec::new();
    let mut test = Vec::new();
    for (b, &(ci, cj)) in cols.indices().iter().enumerate() {
        for (d_trial, d_test) in form_terms(kind) {
            derivative_stencil(spec, *d_trial, ci, cj, &mut trial);
            if trial.is_empty() {
                continue;
            }
            // overlapping test stencils come from points within distance 2
            let lo_i = ci.saturating_sub(2);
            let hi_i = (ci + 2).min(n);
            let lo_j = cj.saturating_sub(2);
            let hi_j = (cj + 2).min(n);
            for ri in lo_i..=hi_i {
                for rj in lo_j..=hi_j {
                    let Some(a) = rows.position(ri, rj) else {
                        continue;
                    };
                    derivative_stencil(spec, *d_test, ri, rj, &mut test);
                    let mut acc = 0.0;
                    for &(tp, tv) in &trial {
                        for &(sp, sv) in &test {
                            if tp == sp
                                && sample_set.map_or(true, |s| s.contains(tp.0, tp.1))
                            {
                                acc += tv * sv;
                            }
                        }
                    }
                    if acc != 0.0 {
                        triplets.push((a, b, h2 * acc));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(rows.len(), cols.len(), &triplets)
}

/// All fundamental blocks on a single dof set (square, weighted convention).
#[derive(Debug, Clone)]
pub struct FundamentalBlocks {
    pub mass: CsrMatrix,
    pub stiffness_forward: CsrMatrix,
    pub stiffness_backward: CsrMatrix,
    pub stiffness_x_forward: CsrMatrix,
    pub stiffness_y_forward: CsrMatrix,
    pub stiffness_x_backward: CsrMatrix,
    pub stiffness_y_backward: CsrMatrix,
    pub mixed_forward: CsrMatrix,
    pub mixed_backward: CsrMatrix,
    pub advection_x_forward: CsrMatrix,
    pub advection_y_forward: CsrMatrix,
    pub advection_x_backward: CsrMatrix,
    pub advection_y_backward: CsrMatrix,
}

pub fn fundamental_blocks(spec: GridSpec, dofs: &DofSet) -> Result<FundamentalBlocks> {
    let b = |kind| fundamental_block(spec, kind, dofs, dofs);
    Ok(FundamentalBlocks {
        mass: b(FormKind::Mass)?,
        stiffness_forward: b(FormKind::StiffnessForward)?,
        stiffness_backward: b(FormKind::StiffnessBackward)?,
        stiffness_x_forward: b(FormKind::StiffnessXForward)?,
        stiffness_y_forward: b(FormKind::StiffnessYForward)?,
        stiffness_x_backward: b(FormKind::StiffnessXBackward)?,
        stiffness_y_backward: b(FormKind::StiffnessYBackward)?,
        mixed_forward: b(FormKind::MixedForward)?,
        mixed_backward: b(FormKind::MixedBackward)?,
        advection_x_forward: b(FormKind::AdvectionXForward)?,
        advection_y_forward: b(FormKind::AdvectionYForward)?,
        advection_x_backward: b(FormKind::AdvectionXBackward)?,
        advection_y_backward: b(FormKind::AdvectionYBackward)?,
    })
}

/// One scalar field of the first-order Stokes system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StokesField {
    /// `σ11 = ∂u1/∂x1`
    W1,
    /// `σ12 = ∂u1/∂x2`
    W2,
    /// `σ21 = ∂u2/∂x1`
    Z1,
    /// `σ22 = ∂u2/∂x2`
    Z2,
    U1,
    U2,
    P,
}

/// Canonical field order used everywhere in the crate: gradient components,
/// velocities, pressure.
pub const STOKES_FIELDS: [StokesField; 7] = [
    StokesField::W1,
    StokesField::W2,
    StokesField::Z1,
    StokesField::Z2,
    StokesField::U1,
    StokesField::U2,
    StokesField::P,
];

impl StokesField {
    pub fn index(self) -> usize {
        match self {
            StokesField::W1 => 0,
            StokesField::W2 => 1,
            StokesField::Z1 => 2,
            StokesField::Z2 => 3,
            StokesField::U1 => 4,
            StokesField::U2 => 5,
            StokesField::P => 6,
        }
    }
}

/// Dof sets and global offsets for the block Stokes system.
///
/// Constraints: gradient components vanish on the edge where their defining
/// backward difference is unavailable (`σ·1` on the left edge, `σ·2` on the
/// bottom edge), velocities vanish on the whole boundary, and the pressure
/// vanishes on `Γ_p` = left edge ∪ bottom edge ∪ `{(1, 1)}`.
/// `zero_mean_pressure` records whether the layout stands for the
/// mean-constrained pressure space; the constraint is analytical and never
/// removes a dof, so both layouts carry the same sets.
#[derive(Debug, Clone)]
pub struct StokesDofLayout {
    spec: GridSpec,
    dofs: Vec<DofSet>,
    offsets: [usize; 8],
    pub zero_mean_pressure: bool,
}

impl StokesDofLayout {
    /// Layout on the extended pressure space (no zero-mean constraint).
    pub fn extended(spec: GridSpec) -> Self {
        Self::build(spec, false)
    }

    /// Same dof sets, tagged as representing the zero-mean pressure space.
    pub fn mean_constrained(spec: GridSpec) -> Self {
        Self::build(spec, true)
    }

    fn build(spec: GridSpec, zero_mean_pressure: bool) -> Self {
        let n = spec.n();
        let sigma_x = DofSet::from_predicate(spec, |i, _| i >= 1);
        let sigma_y = DofSet::from_predicate(spec, |_, j| j >= 1);
        let velocity = DofSet::interior(spec);
        let pressure =
            DofSet::from_predicate(spec, |i, j| i >= 1 && j >= 1 && !(i == n && j == n));
        let dofs = vec![
            sigma_x.clone(),
            sigma_y.clone(),
            sigma_x,
            sigma_y,
            velocity.clone(),
            velocity,
            pressure,
        ];
        let mut offsets = [0usize; 8];
        for (k, d) in dofs.iter().enumerate() {
            offsets[k + 1] = offsets[k] + d.len();
        }
        Self {
            spec,
            dofs,
            offsets,
            zero_mean_pressure,
        }
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn dof_set(&self, field: StokesField) -> &DofSet {
        &self.dofs[field.index()]
    }

    pub fn offset(&self, field: StokesField) -> usize {
        self.offsets[field.index()]
    }

    /// Total number of dofs across all seven fields.
    pub fn total(&self) -> usize {
        self.offsets[7]
    }

    /// Slice of a global block vector belonging to `field`.
    pub fn block<'a>(&self, x: &'a [f64], field: StokesField) -> &'a [f64] {
        let k = field.index();
        &x[self.offsets[k]..self.offsets[k + 1]]
    }
}

/// Block Gram of the Stokes graph inner product on the layout's dof sets
/// (weighted convention). With `K`, `S`, `A`, `M` the fundamental forms on
/// the respective dof-set pairs:
///
/// ```text
/// G_σ  = [[Kx₊, S₊ᵀ, 0, 0], [S₊, Ky₊, 0, 0],
///         [0, 0, Kx₊, S₊ᵀ], [0, 0, S₊, Ky₊]] + 2·diag(M)
/// G_u  = [[2Kx₋+Ky₋, S₋ᵀ], [S₋, Kx₋+2Ky₋]] + diag(M)
/// G_p  = K₊ + M
/// G_σu = [[Ax₋, 0], [Ay₋, 0], [0, Ax₋], [0, Ay₋]]
/// G_σp = -[Kx₊; S₊; S₊ᵀ; Ky₊]
/// ```
///
/// Each derivative term is summed over the points of the dof set it pairs
/// against (the forward terms over the interior velocity dofs), which makes
/// the Gram equal `B M⁻¹ Bᵀ + h²·I` for the operator matrix `B` and keeps
/// the graph norm aligned with what the trial space can control; the
/// inf-sup constant then stays bounded away from zero under refinement.
pub fn gram_stokes(spec: GridSpec, layout: &StokesDofLayout) -> Result<GramMatrix> {
    use StokesField::*;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();

    fn add(
        triplets: &mut Vec<(usize, usize, f64)>,
        layout: &StokesDofLayout,
        block: &CsrMatrix,
        row_field: StokesField,
        col_field: StokesField,
        scale: f64,
        transpose: bool,
    ) {
        let ro = layout.offset(row_field);
        let co = layout.offset(col_field);
        for (i, j, v) in block.triplets() {
            if transpose {
                triplets.push((ro + j, co + i, scale * v));
            } else {
                triplets.push((ro + i, co + j, scale * v));
            }
        }
    }

    let block = |kind, rows: StokesField, cols: StokesField| {
        fundamental_block(spec, kind, layout.dof_set(rows), layout.dof_set(cols))
    };
    // forward-difference terms all come from the momentum-slot of the graph
    // norm, which only ever pairs against the interior velocity dofs; the
    // backward terms are insensitive to the choice because the velocities
    // vanish on the boundary
    let interior = layout.dof_set(U1);
    let fwd = |kind, rows: StokesField, cols: StokesField| {
        fundamental_block_sampled(
            spec,
            kind,
            layout.dof_set(rows),
            layout.dof_set(cols),
            Some(interior),
        )
    };

    // G_sigma: divergence terms plus 2M on the diagonal
    for (cx, cy) in [(W1, W2), (Z1, Z2)] {
        let kx = fwd(FormKind::StiffnessXForward, cx, cx)?;
        let ky = fwd(FormKind::StiffnessYForward, cy, cy)?;
        // s[a ∈ cy, b ∈ cx] = (∇x₊δ_b, ∇y₊δ_a)_h
        let s = fwd(FormKind::MixedForward, cy, cx)?;
        add(&mut triplets, layout, &kx, cx, cx, 1.0, false);
        add(&mut triplets, layout, &ky, cy, cy, 1.0, false);
        add(&mut triplets, layout, &s, cy, cx, 1.0, false);
        add(&mut triplets, layout, &s, cx, cy, 1.0, true);
    }
    for field in [W1, W2, Z1, Z2] {
        let m = block(FormKind::Mass, field, field)?;
        add(&mut triplets, layout, &m, field, field, 2.0, false);
    }

    // G_u
    let kx_u = block(FormKind::StiffnessXBackward, U1, U1)?;
    let ky_u = block(FormKind::StiffnessYBackward, U1, U1)?;
    let m_u = block(FormKind::Mass, U1, U1)?;
    let s_u = block(FormKind::MixedBackward, U1, U1)?;
    add(&mut triplets, layout, &kx_u, U1, U1, 2.0, false);
    add(&mut triplets, layout, &kx_u, U2, U2, 1.0, false);
    add(&mut triplets, layout, &ky_u, U1, U1, 1.0, false);
    add(&mut triplets, layout, &ky_u, U2, U2, 2.0, false);
    add(&mut triplets, layout, &m_u, U1, U1, 1.0, false);
    add(&mut triplets, layout, &m_u, U2, U2, 1.0, false);
    add(&mut triplets, layout, &s_u, U2, U1, 1.0, false);
    add(&mut triplets, layout, &s_u, U1, U2, 1.0, true);

    // G_p = K₊ + M
    let k_p = fwd(FormKind::StiffnessForward, P, P)?;
    let m_p = block(FormKind::Mass, P, P)?;
    add(&mut triplets, layout, &k_p, P, P, 1.0, false);
    add(&mut triplets, layout, &m_p, P, P, 1.0, false);

    // G_σu: entry (σ-row a, u-col b) = (∇·₋ δ_b, δ_a)_h, mirrored below
    for (sig, vel, kind) in [
        (W1, U1, FormKind::AdvectionXBackward),
        (W2, U1, FormKind::AdvectionYBackward),
        (Z1, U2, FormKind::AdvectionXBackward),
        (Z2, U2, FormKind::AdvectionYBackward),
    ] {
        let a = block(kind, sig, vel)?;
        add(&mut triplets, layout, &a, sig, vel, 1.0, false);
        add(&mut triplets, layout, &a, vel, sig, 1.0, true);
    }

    // G_σp: trial pressure differentiated against the σ divergence tests
    let kx_w1p = fwd(FormKind::StiffnessXForward, W1, P)?;
    let s_w2p = fwd(FormKind::MixedForward, W2, P)?;
    // (σ21, p) needs trial y-difference against test x-difference, which is
    // the mixed form with the roles swapped
    let st_z1p = fwd(FormKind::MixedForward, P, Z1)?;
    let ky_z2p = fwd(FormKind::StiffnessYForward, Z2, P)?;
    add(&mut triplets, layout, &kx_w1p, W1, P, -1.0, false);
    add(&mut triplets, layout, &kx_w1p, P, W1, -1.0, true);
    add(&mut triplets, layout, &s_w2p, W2, P, -1.0, false);
    add(&mut triplets, layout, &s_w2p, P, W2, -1.0, true);
    add(&mut triplets, layout, &st_z1p, Z1, P, -1.0, true);
    add(&mut triplets, layout, &st_z1p, P, Z1, -1.0, false);
    add(&mut triplets, layout, &ky_z2p, Z2, P, -1.0, false);
    add(&mut triplets, layout, &ky_z2p, P, Z2, -1.0, true);

    let total = layout.total();
    let matrix = CsrMatrix::from_triplets(total, total, &triplets)?;
    GramMatrix::new(matrix, Convention::Weighted, spec)
}

/// Matrix `B` of the extended first-order Stokes operator tested against the
/// delta bases (weighted pairing). Row blocks follow the test fields in the
/// layout's canonical order:
/// `(σ - ∇₋u | τ)` on the σ sets, `(-∇₊·σ + ∇₊p | v)` at interior points,
/// `(∇₋·u | q)` at pressure points.
pub fn stokes_operator_matrix(spec: GridSpec, layout: &StokesDofLayout) -> Result<CsrMatrix> {
    use StokesField::*;
    let h = spec.h();
    let h2 = h * h;
    let hinv = 1.0 / h;
    let total = layout.total();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();

    let entry = |row_field: StokesField,
                     row_pt: (usize, usize),
                     col_field: StokesField,
                     col_pt: (usize, usize),
                     value: f64,
                     triplets: &mut Vec<(usize, usize, f64)>| {
        let row = layout
            .dof_set(row_field)
            .position(row_pt.0, row_pt.1)
            .expect("row dof");
        // a column outside the constrained set multiplies a zero value
        if let Some(col) = layout.dof_set(col_field).position(col_pt.0, col_pt.1) {
            triplets.push((
                layout.offset(row_field) + row,
                layout.offset(col_field) + col,
                h2 * value,
            ));
        }
    };

    // σ-test rows: σ - ∇₋u, the backward difference defined on each σ set
    for (sig, vel, x_deriv) in [(W1, U1, true), (W2, U1, false), (Z1, U2, true), (Z2, U2, false)] {
        for &(i, j) in layout.dof_set(sig).indices() {
            entry(sig, (i, j), sig, (i, j), 1.0, &mut triplets);
            if x_deriv {
                entry(sig, (i, j), vel, (i, j), -hinv, &mut triplets);
                entry(sig, (i, j), vel, (i - 1, j), hinv, &mut triplets);
            } else {
                entry(sig, (i, j), vel, (i, j), -hinv, &mut triplets);
                entry(sig, (i, j), vel, (i, j - 1), hinv, &mut triplets);
            }
        }
    }

    // momentum rows at interior points: -∇₊·σ + ∇₊p
    for (vtest, s1, s2, pressure_x) in [(U1, W1, W2, true), (U2, Z1, Z2, false)] {
        for &(i, j) in layout.dof_set(vtest).indices() {
            entry(vtest, (i, j), s1, (i + 1, j), -hinv, &mut triplets);
            entry(vtest, (i, j), s1, (i, j), hinv, &mut triplets);
            entry(vtest, (i, j), s2, (i, j + 1), -hinv, &mut triplets);
            entry(vtest, (i, j), s2, (i, j), hinv, &mut triplets);
            if pressure_x {
                entry(vtest, (i, j), P, (i + 1, j), hinv, &mut triplets);
                entry(vtest, (i, j), P, (i, j), -hinv, &mut triplets);
            } else {
                entry(vtest, (i, j), P, (i, j + 1), hinv, &mut triplets);
                entry(vtest, (i, j), P, (i, j), -hinv, &mut triplets);
            }
        }
    }

    // divergence rows at pressure points: ∇₋·u
    for &(i, j) in layout.dof_set(P).indices() {
        entry(P, (i, j), U1, (i, j), hinv, &mut triplets);
        entry(P, (i, j), U1, (i - 1, j), -hinv, &mut triplets);
        entry(P, (i, j), U2, (i, j), hinv, &mut triplets);
        entry(P, (i, j), U2, (i, j - 1), -hinv, &mut triplets);
    }

    CsrMatrix::from_triplets(total, total, &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{grad_backward, grad_forward, inner_grad_forward_raw, inner_h};

    #[test]
    fn laplace_gram_stencil_values() {
        let g = gram_laplace(GridSpec::new(4)).unwrap();
        let m = g.matrix();
        assert_eq!(m.nrows(), 9);
        for a in 0..9 {
            assert_eq!(m.get(a, a), 64.0);
        }
        assert_eq!(m.get(0, 1), -16.0);
        assert_eq!(m.get(0, 3), -16.0);
        assert_eq!(m.get(0, 4), 0.0);
        assert_eq!(g.convention(), Convention::Unweighted);
    }

    #[test]
    fn laplace_gram_single_interior_point() {
        let g = gram_laplace(GridSpec::new(2)).unwrap();
        assert_eq!(g.dim(), 1);
        assert_eq!(g.matrix().get(0, 0), 16.0);
    }

    #[test]
    fn laplace_gram_matches_gradient_inner_products() {
        let spec = GridSpec::new(5);
        let g = gram_laplace(spec).unwrap();
        let dofs = DofSet::interior(spec);
        let h2 = spec.h() * spec.h();
        for (a, &(ia, ja)) in dofs.indices().iter().enumerate() {
            let da = GridFunction::delta(spec, ia, ja);
            for (b, &(ib, jb)) in dofs.indices().iter().enumerate() {
                let db = GridFunction::delta(spec, ib, jb);
                let brute = inner_grad_forward_raw(&da, &db) / h2;
                assert!(
                    (g.matrix().get(a, b) - brute).abs() < 1e-10,
                    "entry ({a}, {b})"
                );
            }
        }
    }

    #[test]
    fn variable_diffusion_reduces_to_laplace() {
        let spec = GridSpec::new(5);
        let eps = GridFunction::from_fn(spec, |_, _| 1.0);
        let a = gram_variable_diffusion(spec, &eps).unwrap();
        let b = gram_laplace(spec).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn variable_diffusion_diagonal_entry() {
        let spec = GridSpec::new(4);
        let eps = GridFunction::from_fn(spec, |_, x2| 2.0 * (x2 + 1.0));
        let g = gram_variable_diffusion(spec, &eps).unwrap();
        let h2inv = 16.0;
        let expected = (2.0 * eps.get(1, 1) + eps.get(0, 1) + eps.get(1, 0)) * h2inv;
        assert_eq!(g.matrix().get(0, 0), expected);
        assert_eq!(g.matrix().max_asymmetry(), 0.0);
    }

    #[test]
    fn variable_diffusion_rejects_nonpositive_eps() {
        let spec = GridSpec::new(3);
        let eps = GridFunction::from_fn(spec, |x1, _| x1 - 0.5);
        assert!(matches!(
            gram_variable_diffusion(spec, &eps),
            Err(Error::NonPositiveDiffusion { .. })
        ));
    }

    #[test]
    fn mass_block_on_single_interior_point() {
        let spec = GridSpec::new(2);
        let dofs = DofSet::interior(spec);
        let m = fundamental_block(spec, FormKind::Mass, &dofs, &dofs).unwrap();
        assert_eq!(m.nrows(), 1);
        assert_eq!(m.get(0, 0), 0.25);
    }

    #[test]
    fn axis_stiffness_blocks_sum_to_full_stiffness() {
        let spec = GridSpec::new(4);
        let dofs = DofSet::interior(spec);
        let blocks = fundamental_blocks(spec, &dofs).unwrap();
        for a in 0..dofs.len() {
            for b in 0..dofs.len() {
                let sum =
                    blocks.stiffness_x_forward.get(a, b) + blocks.stiffness_y_forward.get(a, b);
                assert_eq!(sum, blocks.stiffness_forward.get(a, b));
            }
        }
    }

    #[test]
    fn advection_block_matches_brute_force() {
        let spec = GridSpec::new(4);
        let dofs = DofSet::interior(spec);
        let ax = fundamental_block(spec, FormKind::AdvectionXBackward, &dofs, &dofs).unwrap();
        for (a, &(ia, ja)) in dofs.indices().iter().enumerate() {
            let da = GridFunction::delta(spec, ia, ja);
            for (b, &(ib, jb)) in dofs.indices().iter().enumerate() {
                let db = GridFunction::delta(spec, ib, jb);
                let (gx, _) = grad_backward(&db);
                let brute = inner_h(&gx, &da).unwrap();
                assert!((ax.get(a, b) - brute).abs() < 1e-14, "entry ({a}, {b})");
            }
        }
    }

    #[test]
    fn mixed_block_matches_brute_force() {
        let spec = GridSpec::new(4);
        let rows = DofSet::from_predicate(spec, |_, j| j >= 1);
        let cols = DofSet::from_predicate(spec, |i, _| i >= 1);
        let s = fundamental_block(spec, FormKind::MixedForward, &rows, &cols).unwrap();
        for (a, &(ia, ja)) in rows.indices().iter().enumerate() {
            let da = GridFunction::delta(spec, ia, ja);
            let (_, day) = grad_forward(&da);
            for (b, &(ib, jb)) in cols.indices().iter().enumerate() {
                let db = GridFunction::delta(spec, ib, jb);
                let (dbx, _) = grad_forward(&db);
                let brute = inner_h(&dbx, &day).unwrap();
                assert!((s.get(a, b) - brute).abs() < 1e-14, "entry ({a}, {b})");
            }
        }
    }

    #[test]
    fn stokes_layout_dimensions_and_gamma_p() {
        let spec = GridSpec::new(4);
        let layout = StokesDofLayout::extended(spec);
        assert_eq!(layout.dof_set(StokesField::W1).len(), 20);
        assert_eq!(layout.dof_set(StokesField::W2).len(), 20);
        assert_eq!(layout.dof_set(StokesField::U1).len(), 9);
        // (N+1)^2 minus left edge, bottom edge and the far corner
        assert_eq!(layout.dof_set(StokesField::P).len(), 15);
        assert!(!layout.dof_set(StokesField::P).contains(0, 2));
        assert!(!layout.dof_set(StokesField::P).contains(2, 0));
        assert!(!layout.dof_set(StokesField::P).contains(4, 4));
        assert!(layout.dof_set(StokesField::P).contains(4, 3));
        assert_eq!(layout.total(), 4 * 20 + 2 * 9 + 15);
        assert!(!layout.zero_mean_pressure);
        assert!(StokesDofLayout::mean_constrained(spec).zero_mean_pressure);
    }

    #[test]
    fn stokes_gram_is_symmetric_and_factorizes() {
        let spec = GridSpec::new(6);
        let layout = StokesDofLayout::extended(spec);
        let g = gram_stokes(spec, &layout).unwrap();
        assert_eq!(g.matrix().max_asymmetry(), 0.0);
        assert_eq!(g.convention(), Convention::Weighted);
        // factorization succeeding is the SPD check at assembly time
        assert_eq!(g.dim(), layout.total());
    }

    #[test]
    fn stokes_operator_kernel_is_constant_pressure() {
        let spec = GridSpec::new(5);
        let layout = StokesDofLayout::extended(spec);
        let b = stokes_operator_matrix(spec, &layout).unwrap();
        let mut x = vec![0.0; layout.total()];
        for k in layout.offset(StokesField::P)..layout.total() {
            x[k] = 3.7;
        }
        let bx = b.mul_vec(&x).unwrap();
        let worst = bx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-12, "kernel residual {worst}");
    }
}
