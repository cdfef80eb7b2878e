//! Observation designs: ordered point sets in `[0,1]^d` and their geometry
//! (fill distance, separation radius, quasi-uniformity).
//!
//! Ordering matters: the sequential trace decomposition is order-dependent
//! term by term, so generators fix a deterministic ordering. Midpoint grids
//! in d = 1 are emitted in bit-reversal (van der Corput) order so that every
//! prefix is itself roughly space-filling; in d >= 2 they are row-major.
//! Halton sequences are naturally ordered with space-filling prefixes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::SIZE_CAP;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Grid,
    Halton,
    JitteredGrid,
    User,
}

/// An ordered set of distinct points in `[0,1]^d`.
#[derive(Clone, Debug)]
pub struct Design {
    dim: usize,
    coords: Vec<f64>, // flat, point-major
    provenance: Provenance,
}

impl Design {
    /// Builds a design from flat point-major coordinates, validating the
    /// domain and pairwise distinctness.
    pub fn new(dim: usize, coords: Vec<f64>, provenance: Provenance) -> Result<Design> {
        if dim == 0 {
            return Err(Error::InvalidDesign("dimension must be >= 1".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidDesign(format!(
                "{} coordinates do not fill points of dimension {dim}",
                coords.len()
            )));
        }
        let n = coords.len() / dim;
        if n > SIZE_CAP {
            return Err(Error::SizeCap { n, cap: SIZE_CAP });
        }
        for (i, c) in coords.iter().enumerate() {
            if !c.is_finite() || !(0.0..=1.0).contains(c) {
                return Err(Error::InvalidDesign(format!(
                    "coordinate {c} of point {} outside [0,1]",
                    i / dim
                )));
            }
        }
        let design = Design {
            dim,
            coords,
            provenance,
        };
        for i in 0..n {
            for j in 0..i {
                if design.point(i) == design.point(j) {
                    return Err(Error::InvalidDesign(format!(
                        "points {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(design)
    }

    /// The empty design (used for unconditioned worst-case errors).
    pub fn empty(dim: usize) -> Design {
        Design {
            dim: dim.max(1),
            coords: Vec::new(),
            provenance: Provenance::User,
        }
    }

    /// Midpoint grid `{(2i-1)/(2m)}^d` with `m` points per axis.
    pub fn grid(dim: usize, m: usize) -> Result<Design> {
        if dim == 0 || m == 0 {
            return Err(Error::InvalidDesign("grid requires d >= 1 and m >= 1".into()));
        }
        let n = m
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::InvalidDesign(format!("m^d overflows: m = {m}, d = {dim}")))?;
        if n > SIZE_CAP {
            return Err(Error::SizeCap { n, cap: SIZE_CAP });
        }
        let axis: Vec<f64> = (1..=m).map(|i| (2 * i - 1) as f64 / (2 * m) as f64).collect();
        let mut coords = Vec::with_capacity(n * dim);
        if dim == 1 {
            for &i in van_der_corput_order(m).iter() {
                coords.push(axis[i]);
            }
        } else {
            // row-major: last axis fastest
            let mut index = vec![0usize; dim];
            loop {
                for &i in index.iter() {
                    coords.push(axis[i]);
                }
                let mut k = dim;
                loop {
                    if k == 0 {
                        return Design::new(dim, coords, Provenance::Grid);
                    }
                    k -= 1;
                    index[k] += 1;
                    if index[k] < m {
                        break;
                    }
                    index[k] = 0;
                }
            }
        }
        Design::new(dim, coords, Provenance::Grid)
    }

    /// First `n` Halton points with prime bases 2, 3, 5, ..., index starting
    /// at 1. Supports d <= 6.
    pub fn halton(dim: usize, n: usize) -> Result<Design> {
        const BASES: [u64; 6] = [2, 3, 5, 7, 11, 13];
        if dim == 0 || dim > BASES.len() {
            return Err(Error::UnsupportedDimension {
                dim,
                reason: format!("halton supports 1 <= d <= {}", BASES.len()),
            });
        }
        if n == 0 {
            return Err(Error::InvalidDesign("halton requires n >= 1".into()));
        }
        let mut coords = Vec::with_capacity(n * dim);
        for index in 1..=n as u64 {
            for &base in &BASES[..dim] {
                coords.push(radical_inverse(base, index));
            }
        }
        Design::new(dim, coords, Provenance::Halton)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    /// The first `n` points as a design of their own.
    pub fn prefix(&self, n: usize) -> Design {
        Design {
            dim: self.dim,
            coords: self.coords[..n * self.dim].to_vec(),
            provenance: self.provenance,
        }
    }

    /// True if `self` is a prefix of `other` (identical leading points).
    pub fn is_prefix_of(&self, other: &Design) -> bool {
        self.dim == other.dim
            && self.coords.len() <= other.coords.len()
            && self.coords == other.coords[..self.coords.len()]
    }

    /// Stable content fingerprint used for provenance tags.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for c in &self.coords {
            for b in c.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h ^ (self.dim as u64)
    }

    /// Writes the plain-text point file: header `# d=<int> n=<int>` then one
    /// point per line, coordinates space-separated.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("# d={} n={}\n", self.dim, self.len()));
        for p in self.points() {
            let fields: Vec<String> = p.iter().map(|c| format!("{c}")).collect();
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        let mut file = fs::File::create(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(out.as_bytes()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads a point file written by [`Design::write_to`].
    pub fn read_from(path: &Path) -> Result<Design> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("{}: empty point file", path.display())))?;
        let (dim, n) = parse_header(header)
            .ok_or_else(|| Error::Parse(format!("{}: bad header {header:?}", path.display())))?;
        let mut coords = Vec::with_capacity(dim * n);
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dim {
                return Err(Error::Parse(format!(
                    "{}:{}: expected {dim} coordinates, found {}",
                    path.display(),
                    lineno + 2,
                    fields.len()
                )));
            }
            for f in fields {
                coords.push(f.parse::<f64>().map_err(|_| {
                    Error::Parse(format!(
                        "{}:{}: bad coordinate {f:?}",
                        path.display(),
                        lineno + 2
                    ))
                })?);
            }
        }
        if coords.len() != dim * n {
            return Err(Error::Parse(format!(
                "{}: header says n={n} but found {} points",
                path.display(),
                coords.len() / dim
            )));
        }
        Design::new(dim, coords, Provenance::User)
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix('#')?.trim();
    let mut dim = None;
    let mut n = None;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("d=") {
            dim = v.parse().ok();
        } else if let Some(v) = field.strip_prefix("n=") {
            n = v.parse().ok();
        }
    }
    Some((dim?, n?))
}

/// Radical inverse of `index` in the given base.
fn radical_inverse(base: u64, mut index: u64) -> f64 {
    let mut value = 0.0;
    let mut denom = 1.0;
    while index > 0 {
        denom *= base as f64;
        value += (index % base) as f64 / denom;
        index /= base;
    }
    value
}

/// Permutation of `0..m` ordered by ascending base-2 radical inverse; for
/// powers of two this is exactly the bit-reversal permutation.
fn van_der_corput_order(m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        radical_inverse(2, a as u64)
            .partial_cmp(&radical_inverse(2, b as u64))
            .unwrap()
    });
    order
}

/// Geometry of a design: fill distance `h = sup_x min_i ‖x − x_i‖`,
/// separation radius `q = min_{i≠j} ‖x_i − x_j‖ / 2` and their ratio.
#[derive(Clone, Copy, Debug)]
pub struct GeometryReport {
    pub fill_distance: f64,
    pub separation_radius: f64,
    pub ratio: f64,
    /// Spacing of the candidate grid used for the sup search; 0 when the
    /// value is exact (d = 1).
    pub sup_search_spacing: f64,
}

/// Fill distance. Exact in d = 1 (sorted gaps and endpoints); in d >= 2 a
/// lower bound from a regular candidate grid with `resolution` points per
/// axis (corners included), reported together with the grid spacing.
pub fn fill_distance(design: &Design, resolution: usize) -> Result<(f64, f64)> {
    if design.is_empty() {
        return Err(Error::InvalidDesign("fill distance of an empty design".into()));
    }
    if design.dim() == 1 {
        let mut xs: Vec<f64> = design.points().map(|p| p[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut h = xs[0].max(1.0 - xs[xs.len() - 1]);
        for w in xs.windows(2) {
            h = h.max((w[1] - w[0]) / 2.0);
        }
        return Ok((h, 0.0));
    }
    if resolution < 2 {
        return Err(Error::InvalidConfig(format!(
            "sup-search resolution must be >= 2 in d >= 2, got {resolution}"
        )));
    }
    let dim = design.dim();
    let axis: Vec<f64> = (0..resolution)
        .map(|i| i as f64 / (resolution - 1) as f64)
        .collect();
    let mut index = vec![0usize; dim];
    let mut candidate = vec![0.0f64; dim];
    let mut best = 0.0f64;
    loop {
        for (c, &i) in candidate.iter_mut().zip(index.iter()) {
            *c = axis[i];
        }
        let nearest = design
            .points()
            .map(|p| dist_sq(p, &candidate))
            .fold(f64::INFINITY, f64::min);
        best = best.max(nearest);
        let mut k = dim;
        loop {
            if k == 0 {
                let spacing = 1.0 / (resolution - 1) as f64;
                return Ok((best.sqrt(), spacing));
            }
            k -= 1;
            index[k] += 1;
            if index[k] < resolution {
                break;
            }
            index[k] = 0;
        }
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Half the minimum pairwise distance: `q = min_{i≠j} ‖x_i − x_j‖ / 2`.
pub fn separation_radius(design: &Design) -> Result<f64> {
    let n = design.len();
    if n < 2 {
        return Err(Error::InvalidDesign(
            "separation radius requires at least two points".into(),
        ));
    }
    let mut min_sq = f64::INFINITY;
    for i in 0..n {
        for j in 0..i {
            min_sq = min_sq.min(dist_sq(design.point(i), design.point(j)));
        }
    }
    Ok(min_sq.sqrt() / 2.0)
}

/// Fill distance, separation radius and their ratio in one report.
pub fn geometry_report(design: &Design, resolution: usize) -> Result<GeometryReport> {
    let (fill, spacing) = fill_distance(design, resolution)?;
    let separation = separation_radius(design)?;
    Ok(GeometryReport {
        fill_distance: fill,
        separation_radius: separation,
        ratio: fill / separation,
        sup_search_spacing: spacing,
    })
}

/// One row per design: `h_N · N^{1/d}` should stay bounded for a
/// quasi-uniform family.
#[derive(Clone, Debug)]
pub struct QuasiUniformityReport {
    pub rows: Vec<QuasiUniformityRow>,
    pub bound: f64,
    pub quasi_uniform: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct QuasiUniformityRow {
    pub n: usize,
    pub fill_distance: f64,
    pub normalized: f64, // h_N · N^{1/d}
}

/// Flags a family quasi-uniform when max/min of `h_N · N^{1/d}` over the
/// tested sizes stays below `bound` (default 4).
pub fn quasi_uniformity_check(
    designs: &[Design],
    resolution: usize,
    bound: f64,
) -> Result<QuasiUniformityReport> {
    if designs.len() < 3 {
        return Err(Error::InvalidConfig(
            "quasi-uniformity check needs at least 3 sizes".into(),
        ));
    }
    let dim = designs[0].dim();
    if designs.iter().any(|d| d.dim() != dim) {
        return Err(Error::DimensionMismatch(
            "designs of mixed dimension in quasi-uniformity check".into(),
        ));
    }
    let mut rows = Vec::with_capacity(designs.len());
    for d in designs {
        let (fill, _) = fill_distance(d, resolution)?;
        rows.push(QuasiUniformityRow {
            n: d.len(),
            fill_distance: fill,
            normalized: fill * (d.len() as f64).powf(1.0 / dim as f64),
        });
    }
    let max = rows.iter().map(|r| r.normalized).fold(f64::MIN, f64::max);
    let min = rows.iter().map(|r| r.normalized).fold(f64::MAX, f64::min);
    Ok(QuasiUniformityReport {
        rows,
        bound,
        quasi_uniform: max / min <= bound,
    })
}
