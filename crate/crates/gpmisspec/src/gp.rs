//! Conditional moments of a (possibly misspecified) Gaussian model, the
//! kernel interpolation operator, and cross-kernel worst-case errors.
//!
//! For a model kernel `R` conditioned on values at design points,
//!   mean(x)     = r_N(x)ᵀ R_N⁻¹ f_N
//!   variance(x) = R(x,x) − r_N(x)ᵀ R_N⁻¹ r_N(x),
//! and the variance equals the squared worst-case interpolation error over
//! the unit ball of the kernel's native space. The generalization to two
//! kernels (error in the `K₁`-ball of the `K₂`-interpolant),
//!   K₁(x,x) − 2 k₁ᵀ K₂⁻¹ k₂ + k₂ᵀ K₂⁻¹ K₁ K₂⁻¹ k₂,
//! is the building block of the trace decomposition in [`crate::mle`].

use rayon::prelude::*;

use crate::dd::Real;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::gram::{
    assemble_gram, backward_solve_full, cholesky, forward_solve, CholeskyFactor, JitterPolicy,
};
use crate::kernels::Kernel;

/// Raw variances may round off slightly negative; anything beyond this
/// relative tolerance signals a broken factorization and errors instead of
/// being clamped.
pub const NEGATIVE_VARIANCE_TOLERANCE: f64 = 1e-8;

/// A model kernel factorized on a design, optionally with observed data.
pub struct ConditionedModel {
    kernel: Kernel,
    design: Design,
    factor: Option<CholeskyFactor>, // None for the empty design
    data: Option<Vec<f64>>,
    representer_weights: Option<Vec<f64>>, // R_N⁻¹ f_N
    jitter: f64,
}

impl ConditionedModel {
    /// Conditions the model kernel on a design without data; only variances
    /// are available.
    pub fn new(kernel: Kernel, design: Design, policy: &JitterPolicy) -> Result<Self> {
        if !design.is_empty() && design.dim() != kernel.dim() {
            return Err(Error::DimensionMismatch(format!(
                "kernel dimension {} vs design dimension {}",
                kernel.dim(),
                design.dim()
            )));
        }
        let factor = if design.is_empty() {
            None
        } else {
            Some(cholesky(&assemble_gram(&kernel, &design)?, policy)?)
        };
        let jitter = factor.as_ref().map_or(0.0, |f| f.jitter_applied());
        Ok(ConditionedModel {
            kernel,
            design,
            factor,
            data: None,
            representer_weights: None,
            jitter,
        })
    }

    /// Conditions on a design with observed values.
    pub fn with_data(
        kernel: Kernel,
        design: Design,
        data: Vec<f64>,
        policy: &JitterPolicy,
    ) -> Result<Self> {
        if data.len() != design.len() {
            return Err(Error::SizeMismatch(format!(
                "{} data values for {} design points",
                data.len(),
                design.len()
            )));
        }
        let mut model = ConditionedModel::new(kernel, design, policy)?;
        model.representer_weights = match &model.factor {
            Some(f) => Some(f.solve(&data)?),
            None => None,
        };
        model.data = Some(data);
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.design.len()
    }

    pub fn is_empty(&self) -> bool {
        self.design.is_empty()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn jitter_applied(&self) -> f64 {
        self.jitter
    }

    fn kernel_vector(&self, x: &[f64]) -> Vec<f64> {
        self.design
            .points()
            .map(|p| self.kernel.eval_unchecked(p, x))
            .collect()
    }

    /// Conditional mean and variance at a query point. The mean requires a
    /// data vector; the variance never does.
    pub fn conditional_moments(&self, x: &[f64]) -> Result<(f64, f64)> {
        let mean = self.mean_at(x)?;
        let variance = self.conditional_variance(x)?;
        Ok((mean, variance))
    }

    fn mean_at(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.kernel.dim() {
            return Err(Error::DimensionMismatch(format!(
                "query of dimension {} for kernel of dimension {}",
                x.len(),
                self.kernel.dim()
            )));
        }
        if self.is_empty() {
            // empty conditioning: the prior mean
            return if self.data.is_some() || self.design.is_empty() {
                Ok(0.0)
            } else {
                unreachable!()
            };
        }
        let weights = self
            .representer_weights
            .as_ref()
            .ok_or_else(|| Error::MissingData("conditional mean requires a data vector".into()))?;
        Ok(self
            .kernel_vector(x)
            .iter()
            .zip(weights)
            .map(|(k, w)| k * w)
            .sum())
    }

    /// Conditional variance `R(x,x) − r_N(x)ᵀ R_N⁻¹ r_N(x)`, evaluated in
    /// the factor's precision and clamped at zero against round-off.
    pub fn conditional_variance(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.kernel.dim() {
            return Err(Error::DimensionMismatch(format!(
                "query of dimension {} for kernel of dimension {}",
                x.len(),
                self.kernel.dim()
            )));
        }
        let diag = self.kernel.eval_unchecked(x, x);
        let factor = match &self.factor {
            None => return Ok(diag),
            Some(f) => f,
        };
        let r_vec = self.kernel_vector(x);
        let n = factor.n();
        let raw = factor.visit(
            |l| residual_norm_sq(l, n, diag, &r_vec),
            |l| residual_norm_sq(l, n, diag, &r_vec),
        );
        clamp_variance(raw, diag, "conditional variance")
    }

    /// Evaluates the kernel interpolant (the conditional mean) at each query.
    pub fn interpolate(&self, queries: &[Vec<f64>]) -> Result<Vec<f64>> {
        if self.data.is_none() && !self.is_empty() {
            return Err(Error::MissingData("interpolation requires a data vector".into()));
        }
        queries
            .par_iter()
            .map(|x| {
                if self.is_empty() {
                    Ok(0.0)
                } else {
                    self.mean_at(x)
                }
            })
            .collect()
    }
}

/// `diag − ‖L⁻¹ v‖²` computed without leaving the factor's precision.
fn residual_norm_sq<R: Real>(l: &[R], n: usize, diag: f64, v: &[f64]) -> f64 {
    let w = forward_solve(l, n, v, R::from_f64);
    let norm_sq = w.iter().fold(R::ZERO, |acc, &x| acc + x * x);
    (R::from_f64(diag) - norm_sq).to_f64()
}

fn clamp_variance(raw: f64, diag: f64, context: &str) -> Result<f64> {
    if raw >= 0.0 {
        Ok(raw)
    } else if raw >= -NEGATIVE_VARIANCE_TOLERANCE * diag.abs() {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance {
            value: raw,
            context: context.into(),
        })
    }
}

/// Squared worst-case error at `x` of interpolation with kernel `k2` over
/// the unit ball of `k1`:
/// `K₁(x,x) − 2 k₁ᵀ K₂⁻¹ k₂ + k₂ᵀ K₂⁻¹ K₁ K₂⁻¹ k₂`.
///
/// With `k1 = k2` this reduces to the conditional variance. The design may
/// be empty, in which case the value is `K₁(x,x)`.
pub fn cross_wce_sq(
    k1: &Kernel,
    k2: &Kernel,
    design: &Design,
    x: &[f64],
    policy: &JitterPolicy,
) -> Result<f64> {
    if k1.dim() != k2.dim() || x.len() != k1.dim() {
        return Err(Error::DimensionMismatch(format!(
            "kernel dims {} and {}, query dim {}",
            k1.dim(),
            k2.dim(),
            x.len()
        )));
    }
    let diag1 = k1.eval_unchecked(x, x);
    if design.is_empty() {
        return Ok(diag1);
    }
    let g2 = assemble_gram(k2, design)?;
    let factor = cholesky(&g2, policy)?;
    let g1 = assemble_gram(k1, design)?;
    let k1_vec: Vec<f64> = design.points().map(|p| k1.eval_unchecked(p, x)).collect();
    let k2_vec: Vec<f64> = design.points().map(|p| k2.eval_unchecked(p, x)).collect();
    let n = design.len();
    let raw = factor.visit(
        |l| cross_wce_core(l, n, diag1, &g1, &k1_vec, &k2_vec),
        |l| cross_wce_core(l, n, diag1, &g1, &k1_vec, &k2_vec),
    );
    clamp_variance(raw, diag1, "cross-kernel worst-case error")
}

/// The three-term bilinear expression, evaluated in precision `R` with the
/// `K₁` pieces promoted from f64.
fn cross_wce_core<R: Real>(
    l: &[R],
    n: usize,
    diag1: f64,
    g1: &crate::gram::GramMatrix,
    k1_vec: &[f64],
    k2_vec: &[f64],
) -> f64 {
    // u = K₂⁻¹ k₂ via two triangular solves
    let w = forward_solve(l, n, k2_vec, R::from_f64);
    let u = backward_solve_full(l, n, &w);
    let mut cross = R::ZERO; // uᵀ k₁
    for i in 0..n {
        cross = cross + u[i] * R::from_f64(k1_vec[i]);
    }
    let mut quad = R::ZERO; // uᵀ K₁ u
    for i in 0..n {
        let row = g1.row(i);
        let mut acc = R::ZERO;
        for j in 0..n {
            acc = acc + R::from_f64(row[j]) * u[j];
        }
        quad = quad + u[i] * acc;
    }
    (R::from_f64(diag1) - cross - cross + quad).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Provenance;
    use crate::kernels::MaternParams;
    use crate::rng;

    fn matern(nu: f64, theta: f64, sigma: f64, dim: usize) -> Kernel {
        Kernel::matern(MaternParams::new(nu, theta, sigma).unwrap(), dim).unwrap()
    }

    fn policy() -> JitterPolicy {
        JitterPolicy::default()
    }

    #[test]
    fn empty_conditioning_returns_prior() {
        let k = matern(0.5, 1.0, 1.0, 1);
        let m = ConditionedModel::with_data(k.clone(), Design::empty(1), vec![], &policy()).unwrap();
        let (mean, var) = m.conditional_moments(&[0.3]).unwrap();
        assert_eq!(mean, 0.0);
        assert!((var - 1.2533141373155003).abs() < 1e-14);
        assert_eq!(m.interpolate(&[vec![0.1], vec![0.9]]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn one_point_closed_form() {
        // design {0}, data {1}, query 1: mean e^{-1}, variance
        // sqrt(pi/2)(1 - e^{-2})
        let k = matern(0.5, 1.0, 1.0, 1);
        let design = Design::new(1, vec![0.0], Provenance::User).unwrap();
        let m = ConditionedModel::with_data(k, design, vec![1.0], &policy()).unwrap();
        let (mean, var) = m.conditional_moments(&[1.0]).unwrap();
        assert!((mean - 0.36787944117144233).abs() < 1e-14, "mean = {mean}");
        assert!((var - 1.0836965135574561).abs() < 1e-13, "var = {var}");
    }

    #[test]
    fn interpolation_reproduces_data_at_design_points() {
        let k = matern(1.5, 1.0, 1.0, 1);
        let design = Design::halton(1, 20).unwrap();
        let data: Vec<f64> = design.points().map(|p| (3.0 * p[0]).sin()).collect();
        let m = ConditionedModel::with_data(k, design.clone(), data.clone(), &policy()).unwrap();
        for (i, p) in design.points().enumerate() {
            let (mean, var) = m.conditional_moments(p).unwrap();
            assert!((mean - data[i]).abs() <= 1e-8, "point {i}");
            assert!(var.abs() <= 1e-8);
        }
    }

    #[test]
    fn interpolation_exact_on_representer_span() {
        // f = sum c_i R(., x_i) is reproduced exactly everywhere
        let k = matern(1.5, 1.0, 1.0, 1);
        let design = Design::halton(1, 12).unwrap();
        let centers = design.clone();
        let coeffs: Vec<f64> = (0..12).map(|i| ((i as f64) * 0.7).sin()).collect();
        let f = |x: &[f64]| -> f64 {
            centers
                .points()
                .zip(&coeffs)
                .map(|(c, w)| w * k.eval_unchecked(c, x))
                .sum()
        };
        let data: Vec<f64> = design.points().map(f).collect();
        let m = ConditionedModel::with_data(k.clone(), design, data, &policy()).unwrap();
        for i in 0..30 {
            let x = [i as f64 / 29.0];
            let got = m.interpolate(&[x.to_vec()]).unwrap()[0];
            let want = f(&x);
            assert!(
                (got - want).abs() <= 1e-8 * want.abs().max(1.0),
                "x = {:?}: {got} vs {want}",
                x
            );
        }
    }

    #[test]
    fn mean_requires_data_but_variance_does_not() {
        let k = matern(0.5, 1.0, 1.0, 1);
        let design = Design::halton(1, 5).unwrap();
        let m = ConditionedModel::new(k, design, &policy()).unwrap();
        assert!(m.conditional_variance(&[0.3]).is_ok());
        match m.conditional_moments(&[0.3]) {
            Err(Error::MissingData(_)) => {}
            other => panic!("expected MissingData, got {other:?}"),
        }
    }

    #[test]
    fn variance_is_data_independent() {
        let k = matern(1.5, 2.0, 0.8, 1);
        let design = Design::halton(1, 15).unwrap();
        let bare = ConditionedModel::new(k.clone(), design.clone(), &policy()).unwrap();
        let data: Vec<f64> = (0..15).map(|i| (i as f64).cos()).collect();
        let with = ConditionedModel::with_data(k, design, data, &policy()).unwrap();
        for i in 0..20 {
            let x = [i as f64 / 19.0];
            assert_eq!(
                bare.conditional_variance(&x).unwrap(),
                with.conditional_variance(&x).unwrap()
            );
        }
    }

    #[test]
    fn cross_wce_with_equal_kernels_is_conditional_variance() {
        let k = matern(1.5, 1.0, 1.0, 1);
        let design = Design::halton(1, 18).unwrap();
        let m = ConditionedModel::new(k.clone(), design.clone(), &policy()).unwrap();
        for i in 0..50 {
            let x = [rng::uniform(99, 0, i)];
            let var = m.conditional_variance(&x).unwrap();
            let wce = cross_wce_sq(&k, &k, &design, &x, &policy()).unwrap();
            let scale = k.eval_unchecked(&x, &x);
            assert!(
                (var - wce).abs() <= 1e-10 * scale,
                "x = {:?}: {var:e} vs {wce:e}",
                x
            );
        }
    }

    #[test]
    fn cross_wce_empty_design() {
        let k1 = matern(0.5, 1.0, 2.0, 1);
        let k2 = matern(1.5, 1.0, 1.0, 1);
        let v = cross_wce_sq(&k1, &k2, &Design::empty(1), &[0.4], &policy()).unwrap();
        assert!((v - k1.eval(&[0.4], &[0.4]).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn cross_wce_scales_linearly_in_first_kernel() {
        let base = matern(0.5, 1.0, 1.0, 1);
        let scaled = matern(0.5, 1.0, 2.0, 1); // σ² = 4
        let k2 = matern(1.5, 1.0, 1.0, 1);
        let design = Design::halton(1, 10).unwrap();
        for i in 0..10 {
            let x = [rng::uniform(7, 1, i)];
            let a = cross_wce_sq(&base, &k2, &design, &x, &policy()).unwrap();
            let b = cross_wce_sq(&scaled, &k2, &design, &x, &policy()).unwrap();
            assert!((b - 4.0 * a).abs() <= 1e-10 * b.abs());
        }
    }

    #[test]
    fn cross_wce_nonincreasing_along_sequence() {
        // adding points can only reduce the worst-case error of the
        // matching-kernel case; allow a factor-2 band for the cross case
        let k1 = matern(0.5, 1.0, 1.0, 1);
        let k2 = matern(1.5, 1.0, 1.0, 1);
        let full = Design::halton(1, 40).unwrap();
        let x = [0.63];
        let mut prev = f64::INFINITY;
        for n in [5, 10, 20, 40] {
            let v = cross_wce_sq(&k1, &k2, &full.prefix(n), &x, &policy()).unwrap();
            assert!(v <= 2.0 * prev, "n = {n}: {v} vs prev {prev}");
            prev = v;
        }
    }

    #[test]
    fn minimum_norm_property_under_augmented_interpolants() {
        // ‖I f‖²_R = f_NᵀR_N⁻¹f_N is minimal among interpolants of the data,
        // including ones built on extra centers.
        let k = matern(1.5, 1.0, 1.0, 1);
        let design = Design::halton(1, 8).unwrap();
        let data: Vec<f64> = design.points().map(|p| (2.0 * p[0]).cos()).collect();
        let g = assemble_gram(&k, &design).unwrap();
        let f = cholesky(&g, &policy()).unwrap();
        let base_norm_sq = crate::gram::quadratic_form(&data, &f).unwrap();

        for trial in 0..20u64 {
            // augment with 4 random extra centers and arbitrary values there
            let mut coords: Vec<f64> = design.points().map(|p| p[0]).collect();
            let mut values = data.clone();
            for j in 0..4 {
                coords.push(rng::uniform(1234, trial, j));
                values.push(2.0 * rng::uniform(4321, trial, j) - 1.0);
            }
            let aug = match Design::new(1, coords, Provenance::User) {
                Ok(d) => d,
                Err(_) => continue, // coincidence with a design point
            };
            let g_aug = assemble_gram(&k, &aug).unwrap();
            let f_aug = cholesky(&g_aug, &policy()).unwrap();
            // interpolant through the augmented values: norm² = valuesᵀ G⁻¹ values
            let aug_norm_sq = crate::gram::quadratic_form(&values, &f_aug).unwrap();
            assert!(
                aug_norm_sq >= base_norm_sq - 1e-8,
                "trial {trial}: {aug_norm_sq} < {base_norm_sq}"
            );
        }
    }

    #[test]
    fn variances_nonnegative_before_clamp_tolerance() {
        let k = matern(2.5, 1.0, 1.0, 1);
        let design = Design::grid(1, 64).unwrap();
        let m = ConditionedModel::new(k, design, &policy()).unwrap();
        for i in 0..200 {
            let x = [i as f64 / 199.0];
            let v = m.conditional_variance(&x).unwrap();
            assert!(v >= 0.0);
        }
    }
}
