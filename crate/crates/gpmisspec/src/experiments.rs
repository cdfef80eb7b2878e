//! Empirical verification: Gaussian-path Monte-Carlo oracle for the expected
//! scale estimate, growth-rate sweeps over the design size with log-log
//! slope fits, and decay checks for the sup conditional variance.
//!
//! Everything here is deterministic given its configuration: randomness is
//! counter-based (see [`crate::rng`]) and reductions run in fixed order, so
//! whole-sweep outputs are bit-identical across runs and thread counts.

use rayon::prelude::*;

use crate::design::{fill_distance, separation_radius, Design};
use crate::error::{Error, Result};
use crate::gp::ConditionedModel;
use crate::gram::{assemble_gram, cholesky, quadratic_form, JitterPolicy};
use crate::kernels::{Kernel, MaternParams};
use crate::mle::{expected_mle, MisspecScenario};
use crate::rng;

/// Design family used by sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignKind {
    Grid,
    Halton,
}

impl DesignKind {
    /// Builds the family member with `n` points in dimension `d`. Grid
    /// families require `n = m^d` for an integer number of points per axis.
    pub fn build(&self, dim: usize, n: usize) -> Result<Design> {
        match self {
            DesignKind::Halton => Design::halton(dim, n),
            DesignKind::Grid => {
                let m = (n as f64).powf(1.0 / dim as f64).round() as usize;
                if m.pow(dim as u32) != n {
                    return Err(Error::InvalidConfig(format!(
                        "grid design needs n = m^d; n = {n} is not a perfect {dim}-th power"
                    )));
                }
                Design::grid(dim, m)
            }
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DesignKind::Grid => "grid",
            DesignKind::Halton => "halton",
        }
    }
}

/// Configuration of a rate sweep.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub scenario: MisspecScenario,
    pub design_kind: DesignKind,
    /// Strictly increasing, at least 3 entries.
    pub sizes: Vec<usize>,
    /// Pass/fail tolerance on the fitted slope.
    pub slope_tolerance: f64,
    /// Candidate-grid resolution for fill-distance reporting in d >= 2.
    pub geometry_resolution: usize,
    pub seed: u64,
    /// Monte-Carlo replicates per size; `None` disables sampling.
    pub replicates: Option<usize>,
    pub policy: JitterPolicy,
}

impl SweepConfig {
    pub fn new(scenario: MisspecScenario, design_kind: DesignKind, sizes: Vec<usize>) -> Self {
        SweepConfig {
            scenario,
            design_kind,
            sizes,
            slope_tolerance: 0.3,
            geometry_resolution: 65,
            seed: 0,
            replicates: None,
            policy: JitterPolicy::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        validate_sizes(&self.sizes)?;
        if let Some(r) = self.replicates {
            if r < 2 {
                return Err(Error::InvalidConfig(format!(
                    "Monte-Carlo needs at least 2 replicates, got {r}"
                )));
            }
        }
        Ok(())
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "size list needs at least 3 entries, got {}",
            sizes.len()
        )));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "size list must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Ordinary least squares of `ln value` on `ln n`.
#[derive(Clone, Copy, Debug)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits `ln(values) = intercept + slope ln(sizes)`. All values must be
/// strictly positive and at least three points are required.
pub fn fit_loglog(sizes: &[usize], values: &[f64]) -> Result<LogLogFit> {
    if sizes.len() != values.len() {
        return Err(Error::SizeMismatch(format!(
            "{} sizes against {} values",
            sizes.len(),
            values.len()
        )));
    }
    if sizes.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "log-log fit needs at least 3 points, got {}",
            sizes.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!(
            "log-log fit requires positive values, got {v}"
        )));
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&v| v.ln()).collect();
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let fitted = intercept + slope * x;
            (y - fitted) * (y - fitted)
        })
        .sum();
    let r_squared = if syy <= 1e-28 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Draws `replicates` sample paths of the kernel's Gaussian process at the
/// design points: row r is `L z_r`, where `L` is the Cholesky factor of the
/// Gram matrix and `z_r` are standard normals keyed by
/// `(seed, replicate, coordinate)`. Bit-reproducible for identical inputs.
pub fn sample_paths(
    kernel: &Kernel,
    design: &Design,
    replicates: usize,
    seed: u64,
    policy: &JitterPolicy,
) -> Result<Vec<Vec<f64>>> {
    if replicates == 0 {
        return Err(Error::InvalidConfig("sampling needs at least 1 replicate".into()));
    }
    let n = design.len();
    let factor = cholesky(&assemble_gram(kernel, design)?, policy)?;
    // dense lower triangle in f64; sampling accuracy does not profit from
    // extended precision
    let mut lower = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            lower[i * n + j] = factor.lower(i, j);
        }
    }
    Ok((0..replicates)
        .into_par_iter()
        .map(|r| {
            let z: Vec<f64> = (0..n)
                .map(|i| rng::standard_normal(seed, r as u64, i as u64))
                .collect();
            (0..n)
                .map(|i| {
                    lower[i * n..i * n + i + 1]
                        .iter()
                        .zip(&z)
                        .map(|(l, zi)| l * zi)
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// Monte-Carlo estimate of the expected scale MLE.
#[derive(Clone, Copy, Debug)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Jitter applied when factoring the data-generating Gram for sampling.
    pub jitter_true: f64,
}

/// Samples paths under the scenario's data-generating kernel and averages
/// the scale MLE computed under the model kernel; the analytic trace value
/// must land within a few standard errors of this.
pub fn mc_expected_mle(
    scenario: &MisspecScenario,
    design: &Design,
    replicates: usize,
    seed: u64,
    policy: &JitterPolicy,
) -> Result<McEstimate> {
    if replicates < 2 {
        return Err(Error::InvalidConfig(format!(
            "Monte-Carlo needs at least 2 replicates, got {replicates}"
        )));
    }
    let n = design.len() as f64;
    let k_factor = cholesky(&assemble_gram(&scenario.true_kernel(), design)?, policy)?;
    let jitter_true = k_factor.jitter_applied();
    let paths = {
        // reuse the factor we already have rather than refactoring
        let size = design.len();
        let mut lower = vec![0.0f64; size * size];
        for i in 0..size {
            for j in 0..=i {
                lower[i * size + j] = k_factor.lower(i, j);
            }
        }
        (0..replicates)
            .into_par_iter()
            .map(|r| {
                let z: Vec<f64> = (0..size)
                    .map(|i| rng::standard_normal(seed, r as u64, i as u64))
                    .collect();
                (0..size)
                    .map(|i| {
                        lower[i * size..i * size + i + 1]
                            .iter()
                            .zip(&z)
                            .map(|(l, zi)| l * zi)
                            .sum::<f64>()
                    })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    };
    let r_factor = cholesky(&assemble_gram(&scenario.model_kernel(), design)?, policy)?;
    let estimates: Vec<f64> = paths
        .par_iter()
        .map(|path| quadratic_form(path, &r_factor).map(|q| q / n))
        .collect::<Result<Vec<f64>>>()?;
    let mean = estimates.iter().sum::<f64>() / replicates as f64;
    let var = estimates
        .iter()
        .map(|e| (e - mean) * (e - mean))
        .sum::<f64>()
        / (replicates - 1) as f64;
    Ok(McEstimate {
        mean,
        stderr: (var / replicates as f64).sqrt(),
        jitter_true,
    })
}

/// One sweep size with its value and disclosure columns.
#[derive(Clone, Debug)]
pub struct SizeRow {
    pub n: usize,
    pub expected_mle: f64,
    pub mc_mean: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub jitter_true: Option<f64>,
    pub jitter_model: f64,
    pub fill_distance: f64,
    pub separation_radius: f64,
    pub extended_precision: bool,
}

/// Result of a rate sweep: fit of `ln E[σ̂²_N]` against `ln N` compared to
/// the theoretical exponent `2(ν−ν₀)/d`.
#[derive(Clone, Debug)]
pub struct RateFitReport {
    pub true_kernel: MaternParams,
    pub model_kernel: MaternParams,
    pub dim: usize,
    pub design_kind: DesignKind,
    pub rows: Vec<SizeRow>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `None` in the undersmoothing regime, where no growth rate is known.
    pub theoretical_slope: Option<f64>,
    pub slope_tolerance: f64,
    pub pass: bool,
    /// Slope over the last three sizes, a pre-asymptotic curvature
    /// diagnostic.
    pub tail_slope: f64,
    /// Set when some size failed to factorize and the report is partial.
    pub incomplete: bool,
    /// Present when no theoretical rate exists for the scenario.
    pub banner: Option<String>,
}

impl RateFitReport {
    pub fn sizes(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.n).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.expected_mle).collect()
    }
}

/// Runs the expected estimate over the configured sizes and fits the
/// growth slope. A factorization failure at some size yields a partial
/// report flagged `incomplete` rather than an error.
pub fn rate_sweep(cfg: &SweepConfig) -> Result<RateFitReport> {
    cfg.validate()?;
    let dim = cfg.scenario.dim();
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    let mut incomplete = false;
    for &n in &cfg.sizes {
        let design = cfg.design_kind.build(dim, n)?;
        let expected = match expected_mle(&cfg.scenario, &design, &cfg.policy) {
            Ok(e) => e,
            Err(Error::NotPositiveDefinite { .. }) | Err(Error::DegenerateExtension { .. }) => {
                incomplete = true;
                break;
            }
            Err(other) => return Err(other),
        };
        let (fill, _) = fill_distance(&design, cfg.geometry_resolution)?;
        let separation = separation_radius(&design)?;
        let (mc_mean, mc_stderr, jitter_true) = match cfg.replicates {
            Some(reps) => {
                let mc = mc_expected_mle(&cfg.scenario, &design, reps, cfg.seed, &cfg.policy)?;
                (Some(mc.mean), Some(mc.stderr), Some(mc.jitter_true))
            }
            None => (None, None, None),
        };
        rows.push(SizeRow {
            n,
            expected_mle: expected.value,
            mc_mean,
            mc_stderr,
            jitter_true,
            jitter_model: expected.jitter,
            fill_distance: fill,
            separation_radius: separation,
            extended_precision: expected.extended_precision,
        });
    }
    if rows.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "only {} sizes completed; cannot fit a slope",
            rows.len()
        )));
    }
    let sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let values: Vec<f64> = rows.iter().map(|r| r.expected_mle).collect();
    let fit = fit_loglog(&sizes, &values)?;
    let tail_fit = fit_loglog(&sizes[sizes.len() - 3..], &values[values.len() - 3..])?;
    let (theoretical_slope, banner) = if cfg.scenario.oversmoothed() {
        (Some(cfg.scenario.rate_exponent()), None)
    } else {
        (
            None,
            Some("no theoretical rate available: model undersmooths the truth".to_string()),
        )
    };
    let pass = !incomplete
        && fit.r_squared >= 0.98
        && theoretical_slope
            .map(|t| (fit.slope - t).abs() <= cfg.slope_tolerance)
            .unwrap_or(false);
    Ok(RateFitReport {
        true_kernel: *cfg.scenario.true_params(),
        model_kernel: *cfg.scenario.model_params(),
        dim,
        design_kind: cfg.design_kind,
        rows,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        theoretical_slope,
        slope_tolerance: cfg.slope_tolerance,
        pass,
        tail_slope: tail_fit.slope,
        incomplete,
        banner,
    })
}

/// Decay report for the sup conditional variance over a test grid.
#[derive(Clone, Debug)]
pub struct VarianceDecayReport {
    pub model_kernel: MaternParams,
    pub dim: usize,
    pub design_kind: DesignKind,
    pub sizes: Vec<usize>,
    pub sup_variances: Vec<f64>,
    pub jitters: Vec<f64>,
    pub slope: f64,
    pub r_squared: f64,
    /// `−2ν/d`.
    pub theoretical_slope: f64,
    pub slope_tolerance: f64,
    pub pass: bool,
    /// Number of test-grid points the sup was taken over.
    pub test_grid_points: usize,
}

/// Sup over a regular test grid of the model's conditional variance, per
/// size, with its decay slope compared against `−2ν/d`.
pub fn variance_decay_sweep(
    model: &MaternParams,
    dim: usize,
    design_kind: DesignKind,
    sizes: &[usize],
    test_grid_points: usize,
    slope_tolerance: f64,
    policy: &JitterPolicy,
) -> Result<VarianceDecayReport> {
    validate_sizes(sizes)?;
    if test_grid_points < 2 {
        return Err(Error::InvalidConfig(
            "test grid needs at least 2 points".into(),
        ));
    }
    let kernel = Kernel::matern(*model, dim)?;
    let grid = test_grid(dim, test_grid_points);
    let mut sups = Vec::with_capacity(sizes.len());
    let mut jitters = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let design = design_kind.build(dim, n)?;
        let conditioned = ConditionedModel::new(kernel.clone(), design, policy)?;
        let sup = grid
            .par_chunks(dim)
            .map(|x| conditioned.conditional_variance(x))
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
        sups.push(sup);
        jitters.push(conditioned.jitter_applied());
    }
    let fit = fit_loglog(sizes, &sups)?;
    let theoretical_slope = -2.0 * model.nu / dim as f64;
    Ok(VarianceDecayReport {
        model_kernel: *model,
        dim,
        design_kind,
        sizes: sizes.to_vec(),
        sup_variances: sups,
        jitters,
        slope: fit.slope,
        r_squared: fit.r_squared,
        theoretical_slope,
        slope_tolerance,
        pass: (fit.slope - theoretical_slope).abs() <= slope_tolerance,
        test_grid_points: grid.len() / dim,
    })
}

/// Regular tensor test grid with approximately `total` points, endpoints
/// included (flat, point-major).
fn test_grid(dim: usize, total: usize) -> Vec<f64> {
    let per_axis = (total as f64).powf(1.0 / dim as f64).round().max(2.0) as usize;
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| i as f64 / (per_axis - 1) as f64)
        .collect();
    let mut coords = Vec::with_capacity(per_axis.pow(dim as u32) * dim);
    let mut index = vec![0usize; dim];
    loop {
        for &i in &index {
            coords.push(axis[i]);
        }
        let mut k = dim;
        loop {
            if k == 0 {
                return coords;
            }
            k -= 1;
            index[k] += 1;
            if index[k] < per_axis {
                break;
            }
            index[k] = 0;
        }
    }
}
