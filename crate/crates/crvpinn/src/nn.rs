//! Small tanh multilayer perceptron with deterministic initialization,
//! batched evaluation at collocation points, reverse-mode parameter
//! gradients, and strong Dirichlet enforcement through cutoff/lift grid
//! functions.
//!
//! The network supplies point values only; all spatial derivatives are taken
//! by the discrete operators, which keeps the training loss inside the
//! setting where the robustness identities are exact.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};

/// Architecture and seed of the network. `hidden_layers` counts the tanh
/// layers; `hidden_layers = 0` degenerates to a single affine map, which is
/// occasionally useful in tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub seed: u64,
}

impl MlpConfig {
    /// Standard configuration: two inputs, tanh hidden layers.
    pub fn new(output_dim: usize, hidden_layers: usize, width: usize, seed: u64) -> Self {
        assert!(output_dim >= 1 && width >= 1);
        Self {
            input_dim: 2,
            output_dim,
            hidden_layers,
            width,
            seed,
        }
    }

    /// `(fan_in, fan_out)` of each affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        if self.hidden_layers == 0 {
            return vec![(self.input_dim, self.output_dim)];
        }
        let mut shapes = vec![(self.input_dim, self.width)];
        for _ in 1..self.hidden_layers {
            shapes.push((self.width, self.width));
        }
        shapes.push((self.width, self.output_dim));
        shapes
    }

    /// Total parameter count, `Σ (fan_in + 1)·fan_out`.
    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(fi, fo)| (fi + 1) * fo)
            .sum()
    }
}

/// Flat parameter vector with an index map to per-layer weight matrices
/// (row-major, `fan_out x fan_in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    config: MlpConfig,
    flat: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(config: MlpConfig) -> Self {
        Self {
            flat: vec![0.0; config.param_count()],
            config,
        }
    }

    pub fn from_flat(config: MlpConfig, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != config.param_count() {
            return Err(Error::DimensionMismatch {
                expected: config.param_count(),
                got: flat.len(),
            });
        }
        Ok(Self { config, flat })
    }

    #[inline]
    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    #[inline]
    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    #[inline]
    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    /// Offset of layer `l`'s weight block in the flat vector.
    pub fn weight_offset(&self, layer: usize) -> usize {
        let shapes = self.config.layer_shapes();
        shapes[..layer].iter().map(|&(fi, fo)| (fi + 1) * fo).sum()
    }

    /// Offset of layer `l`'s bias block in the flat vector.
    pub fn bias_offset(&self, layer: usize) -> usize {
        let shapes = self.config.layer_shapes();
        let (fi, fo) = shapes[layer];
        self.weight_offset(layer) + fi * fo
    }

    /// Weight matrix of layer `l` as `fan_out x fan_in`.
    pub fn weight_matrix(&self, layer: usize) -> DMatrix<f64> {
        let (fi, fo) = self.config.layer_shapes()[layer];
        let off = self.weight_offset(layer);
        DMatrix::from_row_slice(fo, fi, &self.flat[off..off + fi * fo])
    }

    /// Bias of layer `l`.
    pub fn bias(&self, layer: usize) -> Vec<f64> {
        let (_, fo) = self.config.layer_shapes()[layer];
        let off = self.bias_offset(layer);
        self.flat[off..off + fo].to_vec()
    }
}

/// Glorot-uniform weights in `±sqrt(6/(fan_in + fan_out))`, zero biases,
/// fully determined by the config seed.
pub fn init_params(config: MlpConfig) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut flat = Vec::with_capacity(config.param_count());
    for (fi, fo) in config.layer_shapes() {
        let bound = (6.0 / (fi + fo) as f64).sqrt();
        for _ in 0..fi * fo {
            flat.push(rng.gen_range(-bound..=bound));
        }
        flat.extend(std::iter::repeat(0.0).take(fo));
    }
    MlpParams { config, flat }
}

/// Cached activations of a batched forward pass (`a_0` holds the inputs,
/// the last entry the linear outputs; one column per point).
#[derive(Debug, Clone)]
pub struct MlpEvaluation {
    activations: Vec<DMatrix<f64>>,
}

impl MlpEvaluation {
    /// Output matrix, `output_dim x num_points`.
    pub fn outputs(&self) -> &DMatrix<f64> {
        self.activations.last().expect("at least one layer")
    }

    /// Output values per field, each of length `num_points`.
    pub fn output_rows(&self) -> Vec<Vec<f64>> {
        let out = self.outputs();
        (0..out.nrows())
            .map(|r| out.row(r).iter().copied().collect())
            .collect()
    }
}

/// Batched forward pass caching every activation for a later backward pass.
pub fn evaluate(params: &MlpParams, points: &[(f64, f64)]) -> MlpEvaluation {
    let cfg = params.config();
    assert_eq!(cfg.input_dim, 2, "points are 2D");
    let p = points.len();
    let mut x = DMatrix::zeros(2, p);
    for (c, &(x1, x2)) in points.iter().enumerate() {
        x[(0, c)] = x1;
        x[(1, c)] = x2;
    }
    let shapes = cfg.layer_shapes();
    let mut activations = Vec::with_capacity(shapes.len() + 1);
    activations.push(x);
    for (l, &(_, fo)) in shapes.iter().enumerate() {
        let w = params.weight_matrix(l);
        let b = params.bias(l);
        let mut z = &w * activations.last().expect("previous activation");
        for c in 0..p {
            for r in 0..fo {
                z[(r, c)] += b[r];
            }
        }
        if l + 1 < shapes.len() {
            z.apply(|v| *v = v.tanh());
        }
        activations.push(z);
    }
    MlpEvaluation { activations }
}

/// Network values at `points`, one vector per output field.
pub fn forward(params: &MlpParams, points: &[(f64, f64)]) -> Vec<Vec<f64>> {
    evaluate(params, points).output_rows()
}

/// Gradient of `Σ_points Σ_fields cotangent·output` with respect to the flat
/// parameter vector, reusing a cached forward pass.
pub fn backward_from(
    params: &MlpParams,
    eval: &MlpEvaluation,
    cotangent: &DMatrix<f64>,
) -> Vec<f64> {
    let cfg = params.config();
    let shapes = cfg.layer_shapes();
    assert_eq!(cotangent.nrows(), cfg.output_dim);
    assert_eq!(cotangent.ncols(), eval.activations[0].ncols());

    let mut grad = vec![0.0; cfg.param_count()];
    let mut delta = cotangent.clone();
    for l in (0..shapes.len()).rev() {
        let a_prev = &eval.activations[l];
        let dw = &delta * a_prev.transpose();
        let woff = params.weight_offset(l);
        let (fi, fo) = shapes[l];
        for r in 0..fo {
            for c in 0..fi {
                grad[woff + r * fi + c] = dw[(r, c)];
            }
        }
        let boff = params.bias_offset(l);
        for r in 0..fo {
            grad[boff + r] = delta.row(r).sum();
        }
        if l > 0 {
            let w = params.weight_matrix(l);
            let mut next = w.transpose() * &delta;
            // a_prev = tanh(z_prev): chain through 1 - tanh²
            for c in 0..next.ncols() {
                for r in 0..next.nrows() {
                    let a = a_prev[(r, c)];
                    next[(r, c)] *= 1.0 - a * a;
                }
            }
            delta = next;
        }
    }
    grad
}

/// Parameter gradient from scratch: forward pass plus reverse sweep.
pub fn backward(
    params: &MlpParams,
    points: &[(f64, f64)],
    cotangent: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let cfg = params.config();
    if cotangent.len() != cfg.output_dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.output_dim,
            got: cotangent.len(),
        });
    }
    for row in cotangent {
        if row.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: row.len(),
            });
        }
    }
    let eval = evaluate(params, points);
    let mut c = DMatrix::zeros(cfg.output_dim, points.len());
    for (r, row) in cotangent.iter().enumerate() {
        for (col, &v) in row.iter().enumerate() {
            c[(r, col)] = v;
        }
    }
    Ok(backward_from(params, &eval, &c))
}

/// How inhomogeneous Dirichlet data is turned into a lift function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiftKind {
    /// Transfinite edge blend with bilinear corner correction; reproduces
    /// `(1-x1)·g(0,x2)` when only the left edge carries data.
    EdgeBlend,
    /// The strongest of the four edge ramps times the data on that edge.
    MaxOfFour,
}

/// Per-field cutoff (zero on the constrained boundary part, positive inside)
/// and lift (matches the Dirichlet data on the boundary).
#[derive(Debug, Clone)]
pub struct BoundaryTreatment {
    cutoffs: Vec<GridFunction>,
    lifts: Vec<GridFunction>,
}

/// Interior bump `16·x1(1-x1)·x2(1-x2)`, normalized to 1 at the center.
pub fn interior_bump(x1: f64, x2: f64) -> f64 {
    16.0 * x1 * (1.0 - x1) * x2 * (1.0 - x2)
}

impl BoundaryTreatment {
    /// Homogeneous Dirichlet data on every field: bump cutoff, zero lift.
    pub fn zero_dirichlet(spec: GridSpec, fields: usize) -> Self {
        let cutoff = GridFunction::from_fn(spec, interior_bump);
        let lift = GridFunction::zeros(spec);
        Self {
            cutoffs: vec![cutoff; fields],
            lifts: vec![lift; fields],
        }
    }

    /// Scalar field with Dirichlet data `g` on the whole boundary.
    pub fn dirichlet(spec: GridSpec, g: impl Fn(f64, f64) -> f64, kind: LiftKind) -> Self {
        let cutoff = GridFunction::from_fn(spec, interior_bump);
        let lift = GridFunction::from_fn(spec, |x1, x2| lift_value(&g, x1, x2, kind));
        Self {
            cutoffs: vec![cutoff],
            lifts: vec![lift],
        }
    }

    /// Seven Stokes fields in canonical order. The gradient components keep
    /// a cutoff vanishing only on their constrained edge, the velocities use
    /// the interior bump with lifts built from `(g1, g2)`, and the pressure
    /// cutoff vanishes exactly on its pinned set (left edge, bottom edge and
    /// the top-right corner).
    pub fn stokes(
        spec: GridSpec,
        g1: impl Fn(f64, f64) -> f64,
        g2: impl Fn(f64, f64) -> f64,
        kind: LiftKind,
    ) -> Self {
        let left = GridFunction::from_fn(spec, |x1, _| x1);
        let bottom = GridFunction::from_fn(spec, |_, x2| x2);
        let bump = GridFunction::from_fn(spec, interior_bump);
        let pressure = GridFunction::from_fn(spec, |x1, x2| x1 * x2 * (1.0 - x1 * x2));
        let zero = GridFunction::zeros(spec);
        let lift1 = GridFunction::from_fn(spec, |x1, x2| lift_value(&g1, x1, x2, kind));
        let lift2 = GridFunction::from_fn(spec, |x1, x2| lift_value(&g2, x1, x2, kind));
        Self {
            cutoffs: vec![
                left.clone(),
                bottom.clone(),
                left,
                bottom,
                bump.clone(),
                bump,
                pressure,
            ],
            lifts: vec![
                zero.clone(),
                zero.clone(),
                zero.clone(),
                zero.clone(),
                lift1,
                lift2,
                zero,
            ],
        }
    }

    #[inline]
    pub fn num_fields(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoff(&self, field: usize) -> &GridFunction {
        &self.cutoffs[field]
    }

    pub fn lift(&self, field: usize) -> &GridFunction {
        &self.lifts[field]
    }
}

fn lift_value(g: &impl Fn(f64, f64) -> f64, x1: f64, x2: f64, kind: LiftKind) -> f64 {
    match kind {
        LiftKind::EdgeBlend => {
            (1.0 - x1) * g(0.0, x2) + x1 * g(1.0, x2) + (1.0 - x2) * g(x1, 0.0)
                + x2 * g(x1, 1.0)
                - ((1.0 - x1) * (1.0 - x2) * g(0.0, 0.0)
                    + (1.0 - x1) * x2 * g(0.0, 1.0)
                    + x1 * (1.0 - x2) * g(1.0, 0.0)
                    + x1 * x2 * g(1.0, 1.0))
        }
        LiftKind::MaxOfFour => {
            let ramps = [
                (1.0 - x1, g(0.0, x2)),
                (x1, g(1.0, x2)),
                (1.0 - x2, g(x1, 0.0)),
                (x2, g(x1, 1.0)),
            ];
            let (w, gv) = ramps
                .iter()
                .copied()
                .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite ramp"))
                .expect("four ramps");
            w * gv
        }
    }
}

/// `u = raw·cutoff + lift` per field; boundary values then equal the
/// Dirichlet data exactly because every cutoff is exactly zero there.
pub fn apply_boundary(raw: &[GridFunction], treatment: &BoundaryTreatment) -> Vec<GridFunction> {
    assert_eq!(raw.len(), treatment.num_fields());
    raw.iter()
        .enumerate()
        .map(|(f, r)| {
            let cutoff = treatment.cutoff(f);
            let lift = treatment.lift(f);
            let mut out = r.clone();
            for (idx, v) in out.values_mut().iter_mut().enumerate() {
                *v = *v * cutoff.values()[idx] + lift.values()[idx];
            }
            out
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    schema_version: u32,
    config: MlpConfig,
    iteration: u64,
    param_count: usize,
}

/// Write a parameter checkpoint: one JSON header line followed by the flat
/// parameters as little-endian 64-bit values.
pub fn save_checkpoint(path: &Path, params: &MlpParams, iteration: u64) -> Result<()> {
    let header = CheckpointHeader {
        schema_version: 1,
        config: *params.config(),
        iteration,
        param_count: params.flat().len(),
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut file, &header)?;
    file.write_all(b"\n")?;
    for v in params.flat() {
        file.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a checkpoint back; returns the parameters and the stored iteration.
pub fn load_checkpoint(path: &Path) -> Result<(MlpParams, u64)> {
    let bytes = std::fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::InvalidCheckpoint("missing header line".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;
    let body = &bytes[newline + 1..];
    if body.len() != header.param_count * 8 {
        return Err(Error::InvalidCheckpoint(format!(
            "expected {} parameter bytes, found {}",
            header.param_count * 8,
            body.len()
        )));
    }
    let mut flat = Vec::with_capacity(header.param_count);
    for chunk in body.chunks_exact(8) {
        flat.push(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
    }
    let params = MlpParams::from_flat(header.config, flat)?;
    Ok((params, header.iteration))
}
