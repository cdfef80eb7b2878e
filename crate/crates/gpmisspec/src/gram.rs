//! Dense symmetric linear algebra on kernel Gram matrices: assembly,
//! Cholesky factorization with an escalating and fully disclosed jitter
//! policy, triangular solves, quadratic forms, the trace `tr(K_N R_N⁻¹)`
//! and incremental factor extension for sequential decompositions.
//!
//! Factors exist in two precisions. The plain `f64` path is the default;
//! the double-double path takes over (under `Precision::Auto`) when the
//! smallest pivots of a matrix sink toward the `f64` round-off floor, which
//! Matérn Grams of smooth orders do well inside desk scale. Jitter is a
//! last resort, never a silent one: the applied value is recorded on the
//! factor and surfaced in every report.

use rayon::prelude::*;

use crate::dd::{Dd, Real};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::SIZE_CAP;

/// Symmetric kernel matrix with provenance.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    n: usize,
    data: Vec<f64>, // row-major, exactly symmetric by mirroring
    kernel: Kernel,
    design: Design,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn kernel_tag(&self) -> String {
        self.kernel.tag()
    }

    pub fn design_fingerprint(&self) -> u64 {
        self.design.fingerprint()
    }

    pub fn mean_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.entry(i, i)).sum::<f64>() / self.n as f64
    }

    pub(crate) fn assemble_extended(&self) -> Vec<Dd> {
        let n = self.n;
        let mut data = vec![Dd::ZERO; n * n];
        let rows: Vec<Vec<Dd>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..=i)
                    .map(|j| self.kernel.eval_dd(self.design.point(i), self.design.point(j)))
                    .collect()
            })
            .collect();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        data
    }
}

/// Builds the Gram matrix `(K(x_i, x_j))_{i,j}`; the lower triangle is
/// computed and mirrored so symmetry holds exactly.
pub fn assemble_gram(kernel: &Kernel, design: &Design) -> Result<GramMatrix> {
    if design.is_empty() {
        return Err(Error::InvalidDesign("gram matrix of an empty design".into()));
    }
    if design.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch(format!(
            "kernel dimension {} vs design dimension {}",
            kernel.dim(),
            design.dim()
        )));
    }
    let n = design.len();
    if n > SIZE_CAP {
        return Err(Error::SizeCap { n, cap: SIZE_CAP });
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..=i)
                .map(|j| kernel.eval_unchecked(design.point(i), design.point(j)))
                .collect()
        })
        .collect();
    let mut data = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteKernel { i, j });
            }
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Ok(GramMatrix {
        n,
        data,
        kernel: kernel.clone(),
        design: design.clone(),
    })
}

/// Arithmetic used for a factorization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    /// Plain f64.
    Double,
    /// Double-double (roughly 32 significant digits).
    Extended,
    /// f64 first; escalate to double-double when the smallest pivot is
    /// within [`PIVOT_TRUST_GUARD`] of the round-off floor.
    Auto,
}

/// Relative diagonal jitter ladder and the precision selection rule.
#[derive(Clone, Debug)]
pub struct JitterPolicy {
    /// Multipliers of the mean diagonal tried in order until the
    /// factorization succeeds.
    pub scales: Vec<f64>,
    pub precision: Precision,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        // {0, 1e-12, 1e-11, ..., 1e-6} · mean(diag)
        let mut scales = vec![0.0];
        for k in 0..7 {
            scales.push(1e-12 * 10f64.powi(k));
        }
        JitterPolicy {
            scales,
            precision: Precision::Auto,
        }
    }
}

impl JitterPolicy {
    pub fn with_precision(precision: Precision) -> Self {
        JitterPolicy {
            precision,
            ..Default::default()
        }
    }
}

/// A computed pivot is trusted when its square exceeds
/// `PIVOT_TRUST_GUARD · n · ε · mean(diag)`; below that the conditional
/// variances it encodes are dominated by f64 round-off and the
/// factorization is redone in extended precision.
pub const PIVOT_TRUST_GUARD: f64 = 1e8;

#[derive(Debug)]
enum FactorStorage {
    Double(Vec<f64>),
    Extended(Vec<Dd>),
}

/// Lower-triangular Cholesky factor in packed row storage, together with
/// the diagonal jitter that was applied before factorization.
#[derive(Debug)]
pub struct CholeskyFactor {
    n: usize,
    storage: FactorStorage,
    jitter: f64,
}

#[inline]
pub(crate) fn packed(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl CholeskyFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Absolute jitter added to every diagonal entry.
    pub fn jitter_applied(&self) -> f64 {
        self.jitter
    }

    pub fn is_extended(&self) -> bool {
        matches!(self.storage, FactorStorage::Extended(_))
    }

    /// Entry `L[i][j]` (zero above the diagonal).
    pub fn lower(&self, i: usize, j: usize) -> f64 {
        if j > i {
            return 0.0;
        }
        match &self.storage {
            FactorStorage::Double(l) => l[packed(i, j)],
            FactorStorage::Extended(l) => l[packed(i, j)].to_f64(),
        }
    }

    /// Solves `(L Lᵀ) z = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::SizeMismatch(format!(
                "rhs of length {} for factor of size {}",
                b.len(),
                self.n
            )));
        }
        Ok(match &self.storage {
            FactorStorage::Double(l) => {
                let w = forward_solve(l, self.n, b, |x| x);
                backward_solve_full(l, self.n, &w)
                    .into_iter()
                    .map(|x| x.to_f64())
                    .collect()
            }
            FactorStorage::Extended(l) => {
                let w = forward_solve(l, self.n, b, Dd::from_f64);
                backward_solve_full(l, self.n, &w)
                    .into_iter()
                    .map(|x| x.to_f64())
                    .collect()
            }
        })
    }

    /// Dispatches a precision-generic computation over the factor storage.
    pub(crate) fn visit<T>(
        &self,
        double: impl FnOnce(&[f64]) -> T,
        extended: impl FnOnce(&[Dd]) -> T,
    ) -> T {
        match &self.storage {
            FactorStorage::Double(l) => double(l),
            FactorStorage::Extended(l) => extended(l),
        }
    }

    /// Frobenius distance between `L Lᵀ` and `G + jitter·I`, relative to
    /// `‖G‖_F`; the reconstruction quality of the factorization.
    pub fn reconstruction_error(&self, g: &GramMatrix) -> f64 {
        let n = self.n;
        let mut err_sq = 0.0;
        let mut norm_sq = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut rebuilt = 0.0;
                for k in 0..=i.min(j) {
                    rebuilt += self.lower(i, k) * self.lower(j, k);
                }
                let target = g.entry(i, j) + if i == j { self.jitter } else { 0.0 };
                err_sq += (rebuilt - target) * (rebuilt - target);
                norm_sq += g.entry(i, j) * g.entry(i, j);
            }
        }
        (err_sq / norm_sq).sqrt()
    }
}

pub(crate) fn forward_solve<R: Real>(
    l: &[R],
    n: usize,
    b: &[f64],
    lift: impl Fn(f64) -> R,
) -> Vec<R> {
    let lifted: Vec<R> = b.iter().map(|&x| lift(x)).collect();
    forward_solve_native(l, n, &lifted)
}

pub(crate) fn forward_solve_native<R: Real>(l: &[R], n: usize, b: &[R]) -> Vec<R> {
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = b[i];
        let row = &l[packed(i, 0)..packed(i, i)];
        for (k, &lik) in row.iter().enumerate() {
            acc = acc - lik * w[k];
        }
        w.push(acc / l[packed(i, i)]);
    }
    w
}

pub(crate) fn backward_solve_full<R: Real>(l: &[R], n: usize, y: &[R]) -> Vec<R> {
    let mut z = vec![R::ZERO; n];
    for j in (0..n).rev() {
        let mut acc = y[j];
        for k in (j + 1)..n {
            acc = acc - l[packed(k, j)] * z[k];
        }
        z[j] = acc / l[packed(j, j)];
    }
    z
}

/// Backward solve computed only down to index `stop`, returning `z[stop]`.
fn backward_solve_entry<R: Real>(l: &[R], n: usize, y: &[R], stop: usize) -> R {
    let mut z = vec![R::ZERO; n - stop];
    for j in (stop..n).rev() {
        let mut acc = y[j];
        for k in (j + 1)..n {
            acc = acc - l[packed(k, j)] * z[k - stop];
        }
        z[j - stop] = acc / l[packed(j, j)];
    }
    z[0]
}

/// Packed Cholesky of `a + jitter·I`; `a` is row-major full storage.
/// Returns the failing pivot index on breakdown.
fn cholesky_packed<R: Real>(a: &[R], n: usize, jitter: R) -> std::result::Result<Vec<R>, usize> {
    let mut l: Vec<R> = vec![R::ZERO; n * (n + 1) / 2];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[i * n + j];
            if i == j {
                acc = acc + jitter;
            }
            // acc -= sum_k L[i][k] L[j][k]
            let (ri, rj) = (packed(i, 0), packed(j, 0));
            for k in 0..j {
                acc = acc - l[ri + k] * l[rj + k];
            }
            if i == j {
                if !(acc > R::ZERO) || !acc.to_f64().is_finite() {
                    return Err(i);
                }
                l[packed(i, i)] = acc.sqrt();
            } else {
                l[packed(i, j)] = acc / l[packed(j, j)];
            }
        }
    }
    Ok(l)
}

fn min_pivot_sq<R: Real>(l: &[R], n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let p = l[packed(i, i)].to_f64();
            p * p
        })
        .fold(f64::INFINITY, f64::min)
}

/// Factorizes `g + jitter·I`, escalating the jitter through the policy's
/// ladder until the factorization succeeds. Under `Precision::Auto` the
/// arithmetic is escalated to double-double before any jitter is applied.
pub fn cholesky(g: &GramMatrix, policy: &JitterPolicy) -> Result<CholeskyFactor> {
    let n = g.n();
    let mean_diag = g.mean_diagonal();
    let noise_floor = PIVOT_TRUST_GUARD * n as f64 * f64::EPSILON * mean_diag;

    let try_double = |scales: &[f64]| -> std::result::Result<(Vec<f64>, f64), usize> {
        let mut last_pivot = 0;
        for &scale in scales {
            let jitter = scale * mean_diag;
            match cholesky_packed(&g.data, n, jitter) {
                Ok(l) => return Ok((l, jitter)),
                Err(pivot) => last_pivot = pivot,
            }
        }
        Err(last_pivot)
    };
    let try_extended = |scales: &[f64]| -> std::result::Result<(Vec<Dd>, f64), usize> {
        let a = g.assemble_extended();
        let mut last_pivot = 0;
        for &scale in scales {
            let jitter = scale * mean_diag;
            match cholesky_packed(&a, n, Dd::from_f64(jitter)) {
                Ok(l) => return Ok((l, jitter)),
                Err(pivot) => last_pivot = pivot,
            }
        }
        Err(last_pivot)
    };

    let max_jitter = policy.scales.iter().cloned().fold(0.0, f64::max) * mean_diag;
    match policy.precision {
        Precision::Double => match try_double(&policy.scales) {
            Ok((l, jitter)) => Ok(CholeskyFactor {
                n,
                storage: FactorStorage::Double(l),
                jitter,
            }),
            Err(pivot) => Err(Error::NotPositiveDefinite {
                n,
                pivot,
                jitter: max_jitter,
            }),
        },
        Precision::Extended => match try_extended(&policy.scales) {
            Ok((l, jitter)) => Ok(CholeskyFactor {
                n,
                storage: FactorStorage::Extended(l),
                jitter,
            }),
            Err(pivot) => Err(Error::NotPositiveDefinite {
                n,
                pivot,
                jitter: max_jitter,
            }),
        },
        Precision::Auto => {
            if let Ok(l) = cholesky_packed(&g.data, n, 0.0) {
                if min_pivot_sq(&l, n) >= noise_floor {
                    return Ok(CholeskyFactor {
                        n,
                        storage: FactorStorage::Double(l),
                        jitter: 0.0,
                    });
                }
            }
            match try_extended(&policy.scales) {
                Ok((l, jitter)) => Ok(CholeskyFactor {
                    n,
                    storage: FactorStorage::Extended(l),
                    jitter,
                }),
                Err(pivot) => Err(Error::NotPositiveDefinite {
                    n,
                    pivot,
                    jitter: max_jitter,
                }),
            }
        }
    }
}

/// `tr(K_N R_N⁻¹)` as `Σ_i eᵢᵀ R⁻¹ K eᵢ`: per column a forward solve and a
/// partial backward solve against the factor of `R`.
///
/// When the factor is extended, `K` is re-rendered in double-double as well
/// so that the two matrices live in the same precision; otherwise the entry
/// rounding of `K` re-introduces exactly the noise the extended factor
/// removed.
pub fn trace_product(k: &GramMatrix, r_factor: &CholeskyFactor) -> Result<f64> {
    let n = r_factor.n();
    if k.n() != n {
        return Err(Error::SizeMismatch(format!(
            "gram of size {} against factor of size {n}",
            k.n()
        )));
    }
    let diag: Vec<f64> = match &r_factor.storage {
        FactorStorage::Double(l) => (0..n)
            .into_par_iter()
            .map(|i| {
                let y = forward_solve_native(l, n, k.row(i));
                backward_solve_entry(l, n, &y, i)
            })
            .collect(),
        FactorStorage::Extended(l) => {
            let k_dd = k.assemble_extended();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let y = forward_solve_native(l, n, &k_dd[i * n..(i + 1) * n]);
                    backward_solve_entry(l, n, &y, i).to_f64()
                })
                .collect()
        }
    };
    // fixed-order reduction for run-to-run determinism
    Ok(diag.iter().sum())
}

/// `vᵀ R⁻¹ v = ‖L⁻¹ v‖²`, non-negative by construction.
pub fn quadratic_form(v: &[f64], r_factor: &CholeskyFactor) -> Result<f64> {
    let n = r_factor.n();
    if v.len() != n {
        return Err(Error::SizeMismatch(format!(
            "vector of length {} against factor of size {n}",
            v.len()
        )));
    }
    fn norm_sq<R: Real>(l: &[R], n: usize, v: &[f64]) -> f64 {
        let w = forward_solve(l, n, v, R::from_f64);
        w.iter().fold(R::ZERO, |acc, &x| acc + x * x).to_f64()
    }
    Ok(match &r_factor.storage {
        FactorStorage::Double(l) => norm_sq(l, n, v),
        FactorStorage::Extended(l) => norm_sq(l, n, v),
    })
}

/// Extends a factor of an `n×n` matrix to the `(n+1)×(n+1)` bordered matrix
/// with cross column `new_cross` and diagonal `new_diag`. The factor's
/// jitter is applied to the new diagonal entry for consistency. Errors when
/// the Schur complement `new_diag − ‖L⁻¹ c‖²` is not strictly positive.
pub fn extend_factor(
    f: &CholeskyFactor,
    new_cross: &[f64],
    new_diag: f64,
) -> Result<CholeskyFactor> {
    let n = f.n();
    if new_cross.len() != n {
        return Err(Error::SizeMismatch(format!(
            "cross vector of length {} for factor of size {n}",
            new_cross.len()
        )));
    }
    match &f.storage {
        FactorStorage::Double(l) => {
            let mut l = l.clone();
            extend_packed(
                &mut l,
                n,
                &new_cross.iter().map(|&x| x).collect::<Vec<f64>>(),
                new_diag + f.jitter,
            )?;
            Ok(CholeskyFactor {
                n: n + 1,
                storage: FactorStorage::Double(l),
                jitter: f.jitter,
            })
        }
        FactorStorage::Extended(l) => {
            let mut l = l.clone();
            let cross: Vec<Dd> = new_cross.iter().map(|&x| Dd::from_f64(x)).collect();
            extend_packed(&mut l, n, &cross, Dd::from_f64(new_diag + f.jitter))?;
            Ok(CholeskyFactor {
                n: n + 1,
                storage: FactorStorage::Extended(l),
                jitter: f.jitter,
            })
        }
    }
}

/// In-place extension of a packed factor; returns the Schur complement
/// (the new conditional variance).
pub(crate) fn extend_packed<R: Real>(
    l: &mut Vec<R>,
    n: usize,
    new_cross: &[R],
    new_diag: R,
) -> Result<R> {
    // new row w solves L w = c; new pivot is sqrt(d - ‖w‖²)
    let mut w: Vec<R> = Vec::with_capacity(n + 1);
    let mut w_norm_sq = R::ZERO;
    for i in 0..n {
        let mut acc = new_cross[i];
        let row = &l[packed(i, 0)..packed(i, i)];
        for (k, &lik) in row.iter().enumerate() {
            acc = acc - lik * w[k];
        }
        let wi = acc / l[packed(i, i)];
        w_norm_sq = w_norm_sq + wi * wi;
        w.push(wi);
    }
    let schur = new_diag - w_norm_sq;
    if !(schur > R::ZERO) || !schur.to_f64().is_finite() {
        return Err(Error::DegenerateExtension { step: n + 1 });
    }
    l.extend_from_slice(&w);
    l.push(schur.sqrt());
    Ok(schur)
}

/// Writes the matrix as plain text, one row per line, 17 significant
/// digits, space separated.
pub fn dump_gram(g: &GramMatrix, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = String::new();
    for i in 0..g.n() {
        let row: Vec<String> = g.row(i).iter().map(|&v| crate::fmt_g17(v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
