//! Discrete function spaces on the uniform collocation grid of the unit
//! square and the forward/backward finite-difference operators.
//!
//! The grid has `(N+1)²` points `(i·h, j·h)` with `h = 1/N`. Grid functions
//! are stored row-major with `i` outer and `j` inner, so `u[i*(N+1)+j] =
//! u(i·h, j·h)`; this ordering is fixed and shared by Gram assembly, residual
//! assembly and solves.
//!
//! Gradient arrays carry a validity convention: forward differences are valid
//! on `0 <= i, j <= N-1`, backward differences on `1 <= i, j <= N`; entries
//! outside the window are stored as zero and skipped by the gradient inner
//! products. For interior functions the forward and backward forms of the
//! gradient inner product agree exactly.

use crate::error::{Error, Result};

/// Uniform collocation grid: `N` subdivisions per axis, spacing `h = 1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    /// New grid with `n >= 2` subdivisions per axis.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "grid needs at least 2 subdivisions per axis");
        Self { n }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing `h = 1/N`.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Points per axis, `N + 1`.
    #[inline]
    pub fn points_per_axis(&self) -> usize {
        self.n + 1
    }

    /// Total number of collocation points, `(N + 1)²`.
    #[inline]
    pub fn num_points(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    /// Coordinate of index `i` along one axis. Computed as `i/N` so that the
    /// endpoints are exactly 0 and 1 for every `N`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// Flat index of grid point `(i, j)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.n && j <= self.n);
        i * (self.n + 1) + j
    }

    /// Inverse of [`GridSpec::idx`].
    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx / (self.n + 1), idx % (self.n + 1))
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    /// Iterator over all `(i, j)` pairs in the fixed lexicographic order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..=n).flat_map(move |i| (0..=n).map(move |j| (i, j)))
    }

    /// Iterator over interior `(i, j)` pairs, `0 < i, j < N`.
    pub fn interior_points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (1..n).flat_map(move |i| (1..n).map(move |j| (i, j)))
    }
}

/// Real values on all `(N+1)²` collocation points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.num_points()],
        }
    }

    /// Wrap an existing value vector; its length must be `(N+1)²`.
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.num_points() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_points(),
                got: values.len(),
            });
        }
        Ok(Self { spec, values })
    }

    /// Sample `f(x1, x2)` at every grid point.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.num_points());
        for (i, j) in spec.points() {
            values.push(f(spec.coord(i), spec.coord(j)));
        }
        Self { spec, values }
    }

    /// Kronecker delta at grid point `(i, j)`.
    pub fn delta(spec: GridSpec, i: usize, j: usize) -> Self {
        let mut u = Self::zeros(spec);
        u.set(i, j, 1.0);
        u
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.spec.idx(i, j);
        self.values[idx] = v;
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// True if the function belongs to the homogeneous space: exactly zero at
    /// every boundary point.
    pub fn is_interior(&self) -> bool {
        self.first_nonzero_boundary().is_none()
    }

    fn first_nonzero_boundary(&self) -> Option<(usize, usize)> {
        let n = self.spec.n();
        for i in 0..=n {
            for &j in &[0, n] {
                if self.get(i, j) != 0.0 {
                    return Some((i, j));
                }
            }
        }
        for j in 0..=n {
            for &i in &[0, n] {
                if self.get(i, j) != 0.0 {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Error unless the function has exact zeros on the whole boundary.
    pub fn require_interior(&self) -> Result<()> {
        match self.first_nonzero_boundary() {
            None => Ok(()),
            Some((i, j)) => Err(Error::NotInterior(i, j)),
        }
    }
}

fn check_same_spec(u: &GridFunction, v: &GridFunction) -> Result<()> {
    if u.spec() != v.spec() {
        return Err(Error::SpecMismatch(u.spec().n(), v.spec().n()));
    }
    Ok(())
}

/// Compensated (Kahan) accumulator; the inner products promise near-exact
/// identities between forward and backward forms, which plain left-to-right
/// summation does not deliver.
#[derive(Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum
    }
}

/// Discrete inner product `(u, v)_h = h² Σ_p u(p) v(p)` over all grid points.
pub fn inner_h(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    check_same_spec(u, v)?;
    let h2 = u.spec().h() * u.spec().h();
    let mut acc = Compensated::default();
    for (a, b) in u.values().iter().zip(v.values()) {
        acc.add(a * b);
    }
    Ok(h2 * acc.value())
}

/// `‖u‖_h = sqrt((u, u)_h)`.
pub fn norm_h(u: &GridFunction) -> f64 {
    inner_h(u, u).expect("same spec").max(0.0).sqrt()
}

/// Forward differences `((u_{i+1,j} - u_{i,j})/h, (u_{i,j+1} - u_{i,j})/h)`.
///
/// Entries outside the validity window `i, j <= N-1` are zero.
pub fn grad_forward(u: &GridFunction) -> (GridFunction, GridFunction) {
    let spec = u.spec();
    let (n, h) = (spec.n(), spec.h());
    let mut gx = GridFunction::zeros(spec);
    let mut gy = GridFunction::zeros(spec);
    for i in 0..n {
        for j in 0..n {
            gx.set(i, j, (u.get(i + 1, j) - u.get(i, j)) / h);
            gy.set(i, j, (u.get(i, j + 1) - u.get(i, j)) / h);
        }
    }
    (gx, gy)
}

/// Backward differences `((u_{i,j} - u_{i-1,j})/h, (u_{i,j} - u_{i,j-1})/h)`.
///
/// Entries outside the validity window `i, j >= 1` are zero.
pub fn grad_backward(u: &GridFunction) -> (GridFunction, GridFunction) {
    let spec = u.spec();
    let (n, h) = (spec.n(), spec.h());
    let mut gx = GridFunction::zeros(spec);
    let mut gy = GridFunction::zeros(spec);
    for i in 1..=n {
        for j in 1..=n {
            gx.set(i, j, (u.get(i, j) - u.get(i - 1, j)) / h);
            gy.set(i, j, (u.get(i, j) - u.get(i, j - 1)) / h);
        }
    }
    (gx, gy)
}

/// Gradient inner product
/// `(u, v)_{∇,h} = (∇x₊u, ∇x₊v)_h + (∇y₊u, ∇y₊v)_h` for interior functions.
///
/// Only forward-valid entries are summed; for members of the homogeneous
/// space this equals the backward-difference form exactly.
pub fn inner_grad_h(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    check_same_spec(u, v)?;
    u.require_interior()?;
    v.require_interior()?;
    Ok(inner_grad_forward_raw(u, v))
}

/// Forward-window gradient inner product without the interior check.
///
/// Used by assembly routines where the operands are delta functions that may
/// sit on the boundary (constrained Stokes spaces).
pub fn inner_grad_forward_raw(u: &GridFunction, v: &GridFunction) -> f64 {
    let n = u.spec().n();
    let mut acc = Compensated::default();
    for i in 0..n {
        for j in 0..n {
            let ux = u.get(i + 1, j) - u.get(i, j);
            let vx = v.get(i + 1, j) - v.get(i, j);
            let uy = u.get(i, j + 1) - u.get(i, j);
            let vy = v.get(i, j + 1) - v.get(i, j);
            acc.add(ux * vx + uy * vy);
        }
    }
    // h² Σ (du/h)(dv/h): the quadrature weight cancels the difference scaling
    acc.value()
}

/// `‖u‖_{∇,h} = sqrt((u, u)_{∇,h})`.
pub fn norm_grad_h(u: &GridFunction) -> Result<f64> {
    Ok(inner_grad_h(u, u)?.max(0.0).sqrt())
}

/// Backward-difference variant of the gradient inner product.
pub fn inner_grad_backward(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    check_same_spec(u, v)?;
    u.require_interior()?;
    v.require_interior()?;
    let n = u.spec().n();
    let mut acc = Compensated::default();
    for i in 1..=n {
        for j in 1..=n {
            let ux = u.get(i, j) - u.get(i - 1, j);
            let vx = v.get(i, j) - v.get(i - 1, j);
            let uy = u.get(i, j) - u.get(i, j - 1);
            let vy = v.get(i, j) - v.get(i, j - 1);
            acc.add(ux * vx + uy * vy);
        }
    }
    Ok(acc.value())
}

/// Five-point discrete Laplacian at interior points; boundary entries zero.
///
/// Satisfies `Δ_h = ∇₋·∇₊ = ∇₊·∇₋` at interior points.
pub fn laplacian_h(u: &GridFunction) -> GridFunction {
    let spec = u.spec();
    let (n, h) = (spec.n(), spec.h());
    let h2inv = 1.0 / (h * h);
    let mut out = GridFunction::zeros(spec);
    for i in 1..n {
        for j in 1..n {
            let v = (u.get(i + 1, j) - 2.0 * u.get(i, j) + u.get(i - 1, j)
                + u.get(i, j + 1)
                - 2.0 * u.get(i, j)
                + u.get(i, j - 1))
                * h2inv;
            out.set(i, j, v);
        }
    }
    out
}

/// Translation `(τ_x u)_{i,j} = u_{i+1,j}` (zero at `i = N`).
///
/// Requires an interior function; the shift drops a zero column, so the
/// `‖·‖_h` norm is preserved.
pub fn translate_x(u: &GridFunction) -> Result<GridFunction> {
    u.require_interior()?;
    let spec = u.spec();
    let n = spec.n();
    let mut out = GridFunction::zeros(spec);
    for i in 0..n {
        for j in 0..=n {
            out.set(i, j, u.get(i + 1, j));
        }
    }
    Ok(out)
}

/// Ordered list of `(i, j)` grid indices forming the degrees of freedom of a
/// constrained subspace. The ordering is lexicographic by `(i, j)` and is
/// identical across Gram assembly, residual assembly and solves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofSet {
    spec: GridSpec,
    indices: Vec<(usize, usize)>,
    /// flat grid index -> dof position, usize::MAX where absent
    lookup: Vec<usize>,
}

impl DofSet {
    /// Build from a membership predicate, visiting points in lexicographic
    /// order.
    pub fn from_predicate(spec: GridSpec, keep: impl Fn(usize, usize) -> bool) -> Self {
        let mut indices = Vec::new();
        let mut lookup = vec![usize::MAX; spec.num_points()];
        for (i, j) in spec.points() {
            if keep(i, j) {
                lookup[spec.idx(i, j)] = indices.len();
                indices.push((i, j));
            }
        }
        Self {
            spec,
            indices,
            lookup,
        }
    }

    /// Interior points `0 < i, j < N`: the degrees of freedom of the
    /// homogeneous space.
    pub fn interior(spec: GridSpec) -> Self {
        Self::from_predicate(spec, |i, j| !spec.is_boundary(i, j))
    }

    /// Every grid point.
    pub fn all(spec: GridSpec) -> Self {
        Self::from_predicate(spec, |_, _| true)
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    #[inline]
    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    #[inline]
    pub fn point(&self, dof: usize) -> (usize, usize) {
        self.indices[dof]
    }

    /// Dof position of grid point `(i, j)`, if it is a member.
    #[inline]
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let p = self.lookup[self.spec.idx(i, j)];
        (p != usize::MAX).then_some(p)
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.lookup[self.spec.idx(i, j)] != usize::MAX
    }

    /// Gather grid-function values at the dof points.
    pub fn gather(&self, u: &GridFunction) -> Vec<f64> {
        self.indices.iter().map(|&(i, j)| u.get(i, j)).collect()
    }

    /// Scatter a dof vector back onto the grid (other points zero).
    pub fn scatter(&self, x: &[f64]) -> Result<GridFunction> {
        if x.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: x.len(),
            });
        }
        let mut u = GridFunction::zeros(self.spec);
        for (v, &(i, j)) in x.iter().zip(&self.indices) {
            u.set(i, j, *v);
        }
        Ok(u)
    }
}
