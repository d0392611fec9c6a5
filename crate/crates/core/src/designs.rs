//! Design point sets: uniform grids, Halton sequences, Clenshaw–Curtis and
//! nested uniform sets, Smolyak sparse grids, and geometry diagnostics.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Candidate-grid resolution per axis for the fill distance in 2 and 3 dimensions.
const FILL_AXIS_POINTS: usize = 1 << 7;
/// Number of Halton candidates for the fill distance in 4 or more dimensions.
const FILL_HALTON_POINTS: usize = 1 << 14;
/// Local refinement points per axis around the coarse maximiser.
const FILL_REFINE_POINTS: usize = 33;

/// Axis-aligned box `prod_j [lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return domain("box bounds must be nonempty and of equal length");
        }
        for (a, b) in self.lower.iter().zip(&self.upper) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return domain(format!("invalid box interval [{a}, {b}]"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (a, b))| *a <= *x && *x <= *b)
    }

    /// Maps a point of `[0,1]^d` affinely into the box.
    pub fn from_unit(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (a, b))| affine(*a, *b, *t))
            .collect()
    }
}

/// `a + t (b - a)`, exact at both ends.
#[inline]
fn affine(a: f64, b: f64, t: f64) -> f64 {
    if t == 1.0 {
        b
    } else {
        a + t * (b - a)
    }
}

/// An ordered set of distinct points inside a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSet {
    dim: usize,
    coords: Vec<f64>,
    domain: BoxDomain,
}

impl DesignSet {
    /// Builds a design, checking containment and pairwise distinctness.
    pub fn from_points(domain: BoxDomain, points: Vec<Vec<f64>>) -> Result<Self> {
        domain.validate()?;
        let dim = domain.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if !p.iter().all(|x| x.is_finite()) {
                return self::domain("design point has non-finite coordinates");
            }
            if !domain.contains(p) {
                return self::domain(format!("design point {p:?} lies outside the domain"));
            }
            coords.extend_from_slice(p);
        }
        let d = Self {
            dim,
            coords,
            domain,
        };
        d.check_distinct()?;
        Ok(d)
    }

    /// Builds a design from flat coordinates without the distinctness check.
    fn from_flat_unchecked(domain: BoxDomain, coords: Vec<f64>) -> Self {
        Self {
            dim: domain.dim(),
            coords,
            domain,
        }
    }

    fn check_distinct(&self) -> Result<()> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&i, &j| lex_cmp(self.point(i), self.point(j)));
        for w in idx.windows(2) {
            if self.point(w[0]) == self.point(w[1]) {
                return domain(format!(
                    "design points {} and {} coincide",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                ));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    /// A new design with `u` appended.
    pub fn with_point(&self, u: &[f64]) -> Result<Self> {
        let mut pts = self.to_vecs();
        pts.push(u.to_vec());
        Self::from_points(self.domain.clone(), pts)
    }

    /// Writes the points as CSV with header `u1,...,ud`, shortest round-trip
    /// decimal representation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|j| format!("u{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in self.points() {
            let row: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Tensor grid `{a_j + (i/n)(b_j - a_j) : i = 1..n}` per axis, last axis fastest.
pub fn uniform_grid(domain: &BoxDomain, n_per_dim: usize) -> Result<DesignSet> {
    domain.validate()?;
    if n_per_dim == 0 {
        return self::domain("uniform grid needs at least one point per axis");
    }
    let axis: Vec<f64> = (1..=n_per_dim)
        .map(|i| i as f64 / n_per_dim as f64)
        .collect();
    Ok(tensor(domain, &axis))
}

/// Tensor midpoint grid `{a_j + ((i + 1/2)/n)(b_j - a_j) : i = 0..n-1}`.
pub fn midpoint_grid(domain: &BoxDomain, n_per_dim: usize) -> Result<DesignSet> {
    domain.validate()?;
    if n_per_dim == 0 {
        return self::domain("midpoint grid needs at least one point per axis");
    }
    let axis: Vec<f64> = (0..n_per_dim)
        .map(|i| (i as f64 + 0.5) / n_per_dim as f64)
        .collect();
    Ok(tensor(domain, &axis))
}

/// Tensor product of a unit-interval axis, mapped into the box.
fn tensor(domain: &BoxDomain, axis: &[f64]) -> DesignSet {
    let d = domain.dim();
    let n = axis.len();
    let total = n.pow(d as u32);
    let mut coords = Vec::with_capacity(total * d);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        for (j, &i) in idx.iter().enumerate() {
            coords.push(affine(domain.lower[j], domain.upper[j], axis[i]));
        }
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
        }
    }
    DesignSet::from_flat_unchecked(domain.clone(), coords)
}

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u32) -> f64 {
    let b = b as u64;
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// First `n` Halton points (bases = first `d` primes, index from 1).
pub fn halton(domain: &BoxDomain, n: usize) -> Result<DesignSet> {
    domain.validate()?;
    let d = domain.dim();
    if d > PRIMES.len() {
        return Err(Error::Unsupported(format!(
            "Halton sequence supports at most {} dimensions, got {d}",
            PRIMES.len()
        )));
    }
    if n == 0 {
        return self::domain("Halton design needs at least one point");
    }
    let mut coords = Vec::with_capacity(n * d);
    for i in 1..=n as u64 {
        for ((lo, hi), &b) in domain.lower.iter().zip(&domain.upper).zip(&PRIMES[..d]) {
            coords.push(affine(*lo, *hi, radical_inverse(i, b)));
        }
    }
    Ok(DesignSet::from_flat_unchecked(domain.clone(), coords))
}

/// Clenshaw–Curtis points of level `i` on `[-1, 1]`, in increasing order.
pub fn clenshaw_curtis(level: u32) -> Result<Vec<f64>> {
    if level == 0 {
        return domain("Clenshaw-Curtis level starts at 1");
    }
    if level > 30 {
        return Err(Error::Unsupported("Clenshaw-Curtis level above 30".into()));
    }
    Ok(nested_level_indices(level, level)
        .into_iter()
        .map(|k| OneDimFamily::ClenshawCurtis.coordinate(k, fine_intervals(level)))
        .collect())
}

/// Nested one-dimensional point families for sparse grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneDimFamily {
    ClenshawCurtis,
    NestedUniform,
}

impl OneDimFamily {
    /// Coordinate in `[-1, 1]` of index `k` on a grid with `m` intervals.
    fn coordinate(self, k: u64, m: u64) -> f64 {
        match self {
            // -cos(pi k / m), written as a sine so that 0 and +-1 are exact.
            OneDimFamily::ClenshawCurtis => {
                (PI * (2.0 * k as f64 - m as f64) / (2.0 * m as f64)).sin()
            }
            OneDimFamily::NestedUniform => -1.0 + 2.0 * k as f64 / m as f64,
        }
    }

    /// Fill-distance exponent `r_h` and mesh-ratio exponent `r_rho` of the
    /// family (h ~ N^-r_h, rho ~ N^r_rho in one dimension).
    pub fn rate_exponents(self) -> (f64, f64) {
        match self {
            OneDimFamily::ClenshawCurtis => (1.0, 1.0),
            OneDimFamily::NestedUniform => (1.0, 0.0),
        }
    }
}

/// Number of intervals of the finest index grid supporting level `max_level`.
fn fine_intervals(max_level: u32) -> u64 {
    1u64 << (max_level.max(2) - 1)
}

/// Indices (on the grid with `fine_intervals(max_level)` intervals) of the
/// nested 1D set of level `level <= max_level`.
fn nested_level_indices(level: u32, max_level: u32) -> Vec<u64> {
    let m = fine_intervals(max_level);
    if level == 1 {
        return vec![m / 2];
    }
    let step = m >> (level - 1);
    (0..=(1u64 << (level - 1))).map(|j| j * step).collect()
}

/// Sparse-grid specification: total level `q >= dim` and the 1D family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseGridSpec {
    pub level: u32,
    pub dim: usize,
    pub one_dim_family: OneDimFamily,
}

impl SparseGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return domain("sparse grid dimension must be at least 1");
        }
        if (self.level as usize) < self.dim {
            return domain(format!(
                "sparse grid level {} is below the dimension {}",
                self.level, self.dim
            ));
        }
        if self.level as usize - self.dim + 1 > 30 {
            return Err(Error::Unsupported("sparse grid level too large".into()));
        }
        Ok(())
    }

    fn max_1d_level(&self) -> u32 {
        self.level - self.dim as u32 + 1
    }
}

/// All compositions of `total` into `parts` positive integers.
pub(crate) fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(rem: u32, parts: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            cur.push(rem);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 1..=rem.saturating_sub(parts as u32 - 1) {
            cur.push(first);
            rec(rem - first, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 && total as usize >= parts {
        rec(total, parts, &mut Vec::new(), &mut out);
    }
    out
}

/// Smolyak sparse grid `union_{|i| = q} X^(i_1) x ... x X^(i_d)`, mapped into
/// the domain. Duplicates are removed on integer indices, and the result is in
/// lexicographic index order.
pub fn smolyak_grid(spec: &SparseGridSpec, domain: &BoxDomain) -> Result<DesignSet> {
    spec.validate()?;
    domain.validate()?;
    if domain.dim() != spec.dim {
        return self::domain("sparse grid dimension does not match the domain");
    }
    let l = spec.max_1d_level();
    let m = fine_intervals(l);
    let mut set: BTreeSet<Vec<u64>> = BTreeSet::new();
    for multi in compositions(spec.level, spec.dim) {
        let axes: Vec<Vec<u64>> = multi.iter().map(|&i| nested_level_indices(i, l)).collect();
        let mut idx = vec![0usize; spec.dim];
        'outer: loop {
            set.insert(idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect());
            for j in (0..spec.dim).rev() {
                idx[j] += 1;
                if idx[j] < axes[j].len() {
                    continue 'outer;
                }
                idx[j] = 0;
            }
            break;
        }
    }
    let mut coords = Vec::with_capacity(set.len() * spec.dim);
    for key in &set {
        for (j, &k) in key.iter().enumerate() {
            let t = 0.5 * (spec.one_dim_family.coordinate(k, m) + 1.0);
            coords.push(affine(domain.lower[j], domain.upper[j], t));
        }
    }
    Ok(DesignSet::from_flat_unchecked(domain.clone(), coords))
}

/// Fill distance, separation radius and mesh ratio of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryDiagnostics {
    pub fill_distance: f64,
    pub separation_radius: f64,
    pub mesh_ratio: f64,
    /// Spacing of the candidate set used for the fill distance (0 when exact).
    pub fill_resolution: f64,
}

/// Computes `h`, `q = min_{i != j} |u_i - u_j| / 2` and `rho = h / q`.
pub fn geometry(design: &DesignSet) -> Result<GeometryDiagnostics> {
    if design.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: design.len(),
        });
    }
    let (h, res) = fill_distance(design)?;
    let q = separation_radius(design);
    Ok(GeometryDiagnostics {
        fill_distance: h,
        separation_radius: q,
        mesh_ratio: h / q,
        fill_resolution: res,
    })
}

/// Fill distance `sup_{u in U} min_n |u - u_n|` and the candidate resolution.
///
/// Exact in one dimension. In two and three dimensions the supremum is taken
/// over a `(2^7 + 1)`-per-axis tensor grid including the boundary, refined
/// once on a local grid around the coarse maximiser; beyond three dimensions
/// the coarse candidates are `2^14` Halton points.
pub fn fill_distance(design: &DesignSet) -> Result<(f64, f64)> {
    if design.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let dom = design.domain();
    if design.dim() == 1 {
        let mut xs: Vec<f64> = design.points().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        let mut h = (xs[0] - dom.lower[0]).max(dom.upper[0] - xs[xs.len() - 1]);
        for w in xs.windows(2) {
            h = h.max(0.5 * (w[1] - w[0]));
        }
        return Ok((h, 0.0));
    }
    let d = design.dim();
    let candidates = if d <= 3 {
        let axis: Vec<f64> = (0..=FILL_AXIS_POINTS)
            .map(|i| i as f64 / FILL_AXIS_POINTS as f64)
            .collect();
        tensor(dom, &axis)
    } else {
        halton(dom, FILL_HALTON_POINTS)?
    };
    let (arg, h0) = (0..candidates.len())
        .into_par_iter()
        .map(|i| (i, nearest_distance(design, candidates.point(i))))
        .reduce(|| (usize::MAX, -1.0), max_by_value);
    let cell: Vec<f64> = if d <= 3 {
        dom.lower
            .iter()
            .zip(&dom.upper)
            .map(|(a, b)| (b - a) / FILL_AXIS_POINTS as f64)
            .collect()
    } else {
        let side = (dom.volume() / FILL_HALTON_POINTS as f64).powf(1.0 / d as f64);
        vec![side; d]
    };
    let center = candidates.point(arg).to_vec();
    let local: Vec<f64> = (0..FILL_REFINE_POINTS)
        .map(|i| i as f64 / (FILL_REFINE_POINTS - 1) as f64)
        .collect();
    let local_box = BoxDomain {
        lower: (0..d)
            .map(|j| (center[j] - cell[j]).max(dom.lower[j]))
            .collect(),
        upper: (0..d)
            .map(|j| (center[j] + cell[j]).min(dom.upper[j]))
            .collect(),
    };
    let h = if d <= 3 {
        let refine = tensor(&local_box, &local);
        (0..refine.len())
            .into_par_iter()
            .map(|i| nearest_distance(design, refine.point(i)))
            .reduce(|| h0, f64::max)
    } else {
        h0
    };
    let resolution = cell.iter().map(|c| c * c).sum::<f64>().sqrt()
        / if d <= 3 {
            (FILL_REFINE_POINTS - 1) as f64 / 2.0
        } else {
            1.0
        };
    Ok((h, resolution))
}

fn max_by_value(a: (usize, f64), b: (usize, f64)) -> (usize, f64) {
    // Ties resolved towards the lower index for determinism.
    match a.1.total_cmp(&b.1) {
        Ordering::Greater => a,
        Ordering::Less => b,
        Ordering::Equal => {
            if a.0 <= b.0 {
                a
            } else {
                b
            }
        }
    }
}

fn nearest_distance(design: &DesignSet, u: &[f64]) -> f64 {
    design
        .points()
        .map(|p| p.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Half the smallest pairwise distance. Infinite for fewer than two points.
pub fn separation_radius(design: &DesignSet) -> f64 {
    let n = design.len();
    if n < 2 {
        return f64::INFINITY;
    }
    if design.dim() == 1 {
        let mut xs: Vec<f64> = design.points().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        return 0.5
            * xs.windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
    }
    let min_sq = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let u = design.point(i);
            (i + 1..n)
                .map(|j| {
                    design
                        .point(j)
                        .iter()
                        .zip(u)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    0.5 * min_sq.sqrt()
}
