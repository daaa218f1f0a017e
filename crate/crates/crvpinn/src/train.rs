//! Full-batch Adam training loop tying the network, residual assembly,
//! robust loss and direct-solve oracles together, plus the run artifacts
//! (records CSV, manifest) and the loss-overhead micro-benchmark.
//!
//! One `train` call factorizes the Gram exactly once, before the first
//! iteration; per-thread factorization counters are snapshotted so tests can
//! assert that no factorization happens inside the iteration loop.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{GramMatrix, StokesField};
use crate::grid::GridFunction;
use crate::loss::{error_bounds, loss_gradient_cotangent, pinn_loss, robust_loss};
use crate::nn::{self, MlpConfig, MlpParams};
use crate::problems::{Problem, ProblemSpec};
use crate::sparse::{factorization_count, CsrMatrix};

/// Which loss drives the parameter updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Crvpinn,
    Pinn,
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "crvpinn" => Ok(LossKind::Crvpinn),
            "pinn" => Ok(LossKind::Pinn),
            other => Err(format!("unknown loss kind '{other}' (crvpinn, pinn)")),
        }
    }
}

/// Everything a training run needs; serialized into the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub problem: Problem,
    pub n: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub loss_kind: LossKind,
    /// Record every k-th iteration (the final iteration is always recorded).
    pub record_stride: usize,
    pub out_dir: Option<String>,
}

impl TrainConfig {
    pub fn new(problem: Problem, n: usize, iterations: usize) -> Self {
        Self {
            problem,
            n,
            hidden_layers: 2,
            width: 50,
            learning_rate: 1e-3,
            iterations,
            seed: 0,
            loss_kind: LossKind::Crvpinn,
            record_stride: 1,
            out_dir: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.iterations,
            });
        }
        assert!(self.learning_rate > 0.0, "learning rate must be positive");
        assert!(self.record_stride >= 1, "record stride must be >= 1");
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment vectors and step counter of the Adam optimizer.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], gradient: &[f64], lr: f64) {
    assert_eq!(params.len(), state.m.len());
    assert_eq!(gradient.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = gradient[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Per-iteration log row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub iteration: usize,
    pub loss: f64,
    pub sqrt_loss: f64,
    pub err_discrete: f64,
    pub err_analytic: f64,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub elapsed_ms: f64,
}

/// Records plus the final state and the factorization budget accounting.
#[derive(Debug)]
pub struct TrainOutcome {
    pub records: Vec<TrainingRecord>,
    pub params: MlpParams,
    /// Factorizations during setup (Gram build plus oracle solves).
    pub factorizations_setup: u64,
    /// Factorizations inside the iteration loop; must be zero.
    pub factorizations_in_loop: u64,
}

struct StepResult {
    loss: f64,
    fields: Vec<GridFunction>,
    gradient: Vec<f64>,
}

fn training_step(
    pspec: &ProblemSpec,
    gram: &GramMatrix,
    points: &[(f64, f64)],
    params: &MlpParams,
    kind: LossKind,
) -> Result<StepResult> {
    let spec = pspec.grid();
    let eval = nn::evaluate(params, points);
    let raw: Vec<GridFunction> = eval
        .output_rows()
        .into_iter()
        .map(|vals| GridFunction::from_values(spec, vals))
        .collect::<Result<_>>()?;
    let fields = nn::apply_boundary(&raw, pspec.boundary_treatment());
    let res_point = pspec.assemble_residual(&fields)?;

    let (loss, res_cotangent) = match kind {
        LossKind::Crvpinn => {
            let scale = gram.residual_scale();
            let res: Vec<f64> = res_point.iter().map(|v| v * scale).collect();
            let evaluation = robust_loss(&res, gram)?;
            let cot: Vec<f64> = loss_gradient_cotangent(&evaluation)
                .into_iter()
                .map(|v| v * scale)
                .collect();
            (evaluation.loss, cot)
        }
        LossKind::Pinn => {
            let loss = pinn_loss(&res_point);
            let inv_n = 1.0 / res_point.len() as f64;
            let cot: Vec<f64> = res_point.iter().map(|r| 2.0 * r * inv_n).collect();
            (loss, cot)
        }
    };

    // chain: residual stencils, then the cutoff factors, then the network
    let grid_cot = pspec.residual_transpose_mul(&res_cotangent)?;
    let n_fields = grid_cot.len();
    let n_pts = spec.num_points();
    let mut cotangent = DMatrix::zeros(n_fields, n_pts);
    for (f, row) in grid_cot.iter().enumerate() {
        let cutoff = pspec.boundary_treatment().cutoff(f).values();
        for (p, v) in row.iter().enumerate() {
            cotangent[(f, p)] = v * cutoff[p];
        }
    }
    let gradient = nn::backward_from(params, &eval, &cotangent);
    Ok(StepResult {
        loss,
        fields,
        gradient,
    })
}

/// Full training pipeline. Per iteration: forward at the grid points, apply
/// the boundary treatment, assemble the residual, evaluate the loss, chain
/// the cotangent back through the stencils and the network, and take one
/// Adam step. The Gram is factorized exactly once, before iteration 1.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let count_start = factorization_count();

    let pspec = ProblemSpec::new(config.problem, config.n)?;
    let spec = pspec.grid();
    let gram = pspec.build_gram()?;
    let u_star = direct_solve_with(&pspec, &gram)?;
    let exact = pspec.sample_exact();
    let (mu, alpha) = config.problem.robustness_constants();

    let mlp_config = MlpConfig::new(
        config.problem.num_fields(),
        config.hidden_layers,
        config.width,
        config.seed,
    );
    let mut params = nn::init_params(mlp_config);
    let mut adam = AdamState::new(params.flat().len());
    let points: Vec<(f64, f64)> = spec
        .points()
        .map(|(i, j)| (spec.coord(i), spec.coord(j)))
        .collect();

    let count_setup = factorization_count();
    let mut records = Vec::new();
    let start = Instant::now();
    for iteration in 1..=config.iterations {
        let step = training_step(&pspec, &gram, &points, &params, config.loss_kind)?;
        if !step.loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        if iteration % config.record_stride == 0 || iteration == config.iterations {
            let err_discrete = pspec.error_norm(&gram, &step.fields, &u_star)?;
            let err_analytic = pspec.error_norm(&gram, &step.fields, &exact)?;
            let (lower_bound, upper_bound) = match config.loss_kind {
                LossKind::Crvpinn => {
                    let (lo, hi) = error_bounds(step.loss, mu, alpha)?;
                    (Some(lo), Some(hi))
                }
                LossKind::Pinn => (None, None),
            };
            records.push(TrainingRecord {
                iteration,
                loss: step.loss,
                sqrt_loss: step.loss.max(0.0).sqrt(),
                err_discrete,
                err_analytic,
                lower_bound,
                upper_bound,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        adam_step(&mut adam, params.flat_mut(), &step.gradient, config.learning_rate);
    }
    let count_end = factorization_count();

    Ok(TrainOutcome {
        records,
        params,
        factorizations_setup: count_setup - count_start,
        factorizations_in_loop: count_end - count_setup,
    })
}

/// Exact solution of the discrete system, used as the oracle behind the
/// robustness identities. Builds its own Gram; inside `train` the variant
/// below reuses the training Gram.
pub fn direct_solve(problem: Problem, n: usize) -> Result<Vec<GridFunction>> {
    let pspec = ProblemSpec::new(problem, n)?;
    let gram = pspec.build_gram()?;
    direct_solve_with(&pspec, &gram)
}

/// Direct solve reusing an already factorized Gram where the system matrix
/// is the (negated) Gram itself; the advection and Stokes systems are
/// nonsymmetric and go through a normal-equation solve with iterative
/// refinement.
pub fn direct_solve_with(pspec: &ProblemSpec, gram: &GramMatrix) -> Result<Vec<GridFunction>> {
    let spec = pspec.grid();
    match pspec.problem() {
        Problem::LaplaceSinSin
        | Problem::LaplaceExpSin
        | Problem::PoissonJump
        | Problem::PoissonVarDiff => {
            // residual restricted to interior columns is exactly -G, so the
            // discrete solution solves G u0 = D·lift + c
            let lift = pspec.boundary_treatment().lift(0);
            let d_lift = pspec.residual_matrix().mul_vec(lift.values())?;
            let rhs: Vec<f64> = d_lift
                .iter()
                .zip(pspec.residual_offset())
                .map(|(a, c)| a + c)
                .collect();
            let u0 = gram.factorization().solve(&rhs)?;
            let mut u = pspec.interior_dofs().scatter(&u0)?;
            for (v, l) in u.values_mut().iter_mut().zip(lift.values()) {
                *v += l;
            }
            Ok(vec![u])
        }
        Problem::AdvectionDiffusion => {
            let lift = pspec.boundary_treatment().lift(0);
            let d = pspec.residual_matrix();
            let d_lift = d.mul_vec(lift.values())?;
            let rhs: Vec<f64> = d_lift
                .iter()
                .zip(pspec.residual_offset())
                .map(|(a, c)| -(a + c))
                .collect();
            let interior = pspec.interior_dofs();
            let system = restrict_columns(d, interior.len(), |col| {
                let (i, j) = spec.ij(col);
                interior.position(i, j)
            })?;
            let u0 = least_squares_solve(&system, &rhs)?;
            let mut u = interior.scatter(&u0)?;
            for (v, l) in u.values_mut().iter_mut().zip(lift.values()) {
                *v += l;
            }
            Ok(vec![u])
        }
        Problem::Stokes => {
            let layout = pspec.stokes_layout().expect("stokes layout");
            let n_pts = spec.num_points();
            let d = pspec.residual_matrix();
            // the extended operator has a one-dimensional constant-pressure
            // kernel, so one pressure dof is pinned to make the least-squares
            // system definite; reported pressure errors are gauge-corrected
            let pinned_global = layout.offset(StokesField::P);
            let total = layout.total();
            let system = restrict_columns(d, total - 1, |col| {
                let field = crate::gram::STOKES_FIELDS[col / n_pts];
                let (i, j) = spec.ij(col % n_pts);
                let pos = layout.dof_set(field).position(i, j)?;
                let global = layout.offset(field) + pos;
                match global.cmp(&pinned_global) {
                    std::cmp::Ordering::Less => Some(global),
                    std::cmp::Ordering::Equal => None,
                    std::cmp::Ordering::Greater => Some(global - 1),
                }
            })?;
            let rhs: Vec<f64> = pspec.residual_offset().iter().map(|c| -c).collect();
            let reduced = least_squares_solve(&system, &rhs)?;
            let mut x = Vec::with_capacity(total);
            x.extend_from_slice(&reduced[..pinned_global]);
            x.push(0.0);
            x.extend_from_slice(&reduced[pinned_global..]);
            let fields = crate::gram::STOKES_FIELDS
                .iter()
                .map(|&f| layout.dof_set(f).scatter(layout.block(&x, f)))
                .collect::<Result<Vec<_>>>()?;
            Ok(fields)
        }
    }
}

fn restrict_columns(
    d: &CsrMatrix,
    new_cols: usize,
    map: impl Fn(usize) -> Option<usize>,
) -> Result<CsrMatrix> {
    let mut triplets = Vec::with_capacity(d.nnz());
    for (i, j, v) in d.triplets() {
        if let Some(jj) = map(j) {
            triplets.push((i, jj, v));
        }
    }
    CsrMatrix::from_triplets(d.nrows(), new_cols, &triplets)
}

/// Solve a (possibly nonsymmetric) consistent system in the least-squares
/// sense: normal equations through the symmetric factorization, then a few
/// refinement sweeps against the original system. Fails if the relative
/// residual stays above 1e-10.
fn least_squares_solve(s: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let st = s.transpose();
    let normal = st.matmul(s)?;
    let fact = normal.factorize()?;
    let mut x = fact.solve(&st.mul_vec(rhs)?)?;
    for _ in 0..3 {
        let sx = s.mul_vec(&x)?;
        let r: Vec<f64> = rhs.iter().zip(&sx).map(|(b, a)| b - a).collect();
        let dx = fact.solve(&st.mul_vec(&r)?)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    let sx = s.mul_vec(&x)?;
    let rnorm = sx
        .iter()
        .zip(rhs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let rel = rnorm / bnorm;
    if rel > 1e-10 {
        return Err(Error::SolveAccuracy(rel));
    }
    Ok(x)
}

/// Write records in the fixed CSV schema with 17-significant-digit values.
pub fn write_records_csv<W: Write>(records: &[TrainingRecord], mut out: W) -> Result<()> {
    writeln!(
        out,
        "iter,loss,sqrt_loss,err_discrete,err_analytic,lower_bound,upper_bound,elapsed_ms"
    )?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for r in records {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
            r.iteration,
            r.loss,
            r.sqrt_loss,
            r.err_discrete,
            r.err_analytic,
            opt(r.lower_bound),
            opt(r.upper_bound),
            r.elapsed_ms
        )?;
    }
    Ok(())
}

pub fn write_records_csv_file(records: &[TrainingRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_records_csv(records, std::io::BufWriter::new(file))
}

/// Versioned run manifest, written before training starts.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub library_version: String,
    pub seed: u64,
    pub config: TrainConfig,
}

impl RunManifest {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            schema_version: 1,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
        }
    }
}

pub fn write_manifest(config: &TrainConfig, path: &Path) -> Result<()> {
    let manifest = RunManifest::new(config);
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)?;
    Ok(())
}

/// Mean per-iteration times of the two loss kinds on identical pipelines.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub problem: Problem,
    pub n: usize,
    pub iterations: usize,
    pub factorize_ms: f64,
    pub crvpinn_ms_per_iter: f64,
    pub pinn_ms_per_iter: f64,
}

impl BenchReport {
    /// Robust-loss overhead over the baseline.
    pub fn ratio(&self) -> f64 {
        self.crvpinn_ms_per_iter / self.pinn_ms_per_iter
    }
}

/// Time the per-iteration cost of the robust loss against the baseline loss
/// after the one-time factorization.
pub fn bench_loss_overhead(
    problem: Problem,
    n: usize,
    hidden_layers: usize,
    width: usize,
    iterations: usize,
    seed: u64,
) -> Result<BenchReport> {
    let pspec = ProblemSpec::new(problem, n)?;
    let spec = pspec.grid();
    let t0 = Instant::now();
    let gram = pspec.build_gram()?;
    let factorize_ms = t0.elapsed().as_secs_f64() * 1e3;
    let mlp_config = MlpConfig::new(problem.num_fields(), hidden_layers, width, seed);
    let points: Vec<(f64, f64)> = spec
        .points()
        .map(|(i, j)| (spec.coord(i), spec.coord(j)))
        .collect();

    let time_kind = |kind: LossKind| -> Result<f64> {
        let mut params = nn::init_params(mlp_config);
        let mut adam = AdamState::new(params.flat().len());
        // warm up caches before timing
        for _ in 0..2.min(iterations) {
            let step = training_step(&pspec, &gram, &points, &params, kind)?;
            adam_step(&mut adam, params.flat_mut(), &step.gradient, 1e-3);
        }
        let mut params = nn::init_params(mlp_config);
        let mut adam = AdamState::new(params.flat().len());
        let t0 = Instant::now();
        for _ in 0..iterations {
            let step = training_step(&pspec, &gram, &points, &params, kind)?;
            adam_step(&mut adam, params.flat_mut(), &step.gradient, 1e-3);
        }
        Ok(t0.elapsed().as_secs_f64() * 1e3 / iterations as f64)
    };

    let pinn_ms_per_iter = time_kind(LossKind::Pinn)?;
    let crvpinn_ms_per_iter = time_kind(LossKind::Crvpinn)?;
    Ok(BenchReport {
        problem,
        n,
        iterations,
        factorize_ms,
        crvpinn_ms_per_iter,
        pinn_ms_per_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut state = AdamState::new(3);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        adam_step(&mut state, &mut params, &[0.0, 0.0, 0.0], 1e-3);
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn unit_gradient_moves_by_about_the_learning_rate() {
        let mut state = AdamState::new(4);
        let mut params = vec![0.0; 4];
        adam_step(&mut state, &mut params, &[1.0; 4], 1e-3);
        for p in params {
            // bias-corrected m = v = 1, so the step is lr/(1 + eps)
            assert!((p + 1e-3 / (1.0 + ADAM_EPS)).abs() < 1e-18);
        }
    }

    #[test]
    fn adam_trajectories_are_bitwise_deterministic() {
        let run = || {
            let mut state = AdamState::new(2);
            let mut params = vec![0.3, -0.7];
            for k in 0..50 {
                let g = [params[0] * 2.0 + k as f64 * 0.01, params[1].sin()];
                adam_step(&mut state, &mut params, &g, 3e-3);
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_kind_parses() {
        assert_eq!("crvpinn".parse::<LossKind>().unwrap(), LossKind::Crvpinn);
        assert_eq!("pinn".parse::<LossKind>().unwrap(), LossKind::Pinn);
        assert!("mse".parse::<LossKind>().is_err());
    }

    #[test]
    fn csv_layout_is_stable() {
        let records = vec![
            TrainingRecord {
                iteration: 1,
                loss: 0.5,
                sqrt_loss: 0.5f64.sqrt(),
                err_discrete: 0.25,
                err_analytic: 0.3,
                lower_bound: Some(0.1),
                upper_bound: Some(1.0),
                elapsed_ms: 12.5,
            },
            TrainingRecord {
                iteration: 2,
                loss: 0.25,
                sqrt_loss: 0.5,
                err_discrete: 0.2,
                err_analytic: 0.28,
                lower_bound: None,
                upper_bound: None,
                elapsed_ms: 25.0,
            },
        ];
        let mut buf = Vec::new();
        write_records_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,loss,sqrt_loss,err_discrete,err_analytic,lower_bound,upper_bound,elapsed_ms"
        );
        let row1 = lines.next().unwrap();
        assert!(row1.starts_with("1,5.0000000000000000e-1,"));
        let row2 = lines.next().unwrap();
        assert!(row2.contains(",,,"), "empty bound cells: {row2}");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn manifest_is_versioned_json() {
        let config = TrainConfig::new(Problem::LaplaceSinSin, 8, 3);
        let manifest = RunManifest::new(&config);
        let json = serde_json::to_string(&manifest).unwrap();
        assert!(json.contains("\"schema_version\":1"));
        assert!(json.contains("\"laplace-sinsin\""));
        assert!(json.contains("\"loss_kind\":\"crvpinn\""));
        let back: RunManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.config.n, 8);
    }
}
