//! Integer-matrix toral automorphisms on T^2 and T^3.
//!
//! Eigen-data is computed in closed form for 2x2 matrices and with a
//! bracketed real root finder on the characteristic cubic for 3x3 matrices.
//! Points on the torus are stored as raw lifted reals and only wrapped into
//! `[0,1)` by explicit canonicalization.

use std::fmt;

use crate::error::{Error, Result};

/// Fixed-size storage for vectors in dimension 2 or 3; unused slots are zero.
pub type Vec3 = [f64; 3];

/// Eigenvalue moduli within this distance of 1 are treated as neutral.
pub const HYPERBOLICITY_TOL: f64 = 1e-8;

/// Largest accepted residual `|M v - eigenvalue v|` for a computed eigenvector.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

/// Reduces `x` to its representative in `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Base point on the discrete torus `(2^-52 Z / Z)^d`, on which integer
/// matrices act exactly and whose coordinates are exact doubles.
pub type FixedPoint = [u64; 3];

const FIXED_BITS: u32 = 52;
const FIXED_MASK: u64 = (1 << FIXED_BITS) - 1;
const FIXED_SCALE: f64 = (1u64 << FIXED_BITS) as f64;

/// Nearest fixed-point representative of a real vector.
pub fn to_fixed(v: &Vec3) -> FixedPoint {
    v.map(|x| ((wrap_unit(x) * FIXED_SCALE).round() as u64) & FIXED_MASK)
}

/// Real coordinates in `[0, 1)` of a fixed-point base point.
#[inline]
pub fn from_fixed(v: &FixedPoint) -> Vec3 {
    v.map(|u| u as f64 / FIXED_SCALE)
}

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &Vec3, y: &Vec3) -> Vec3 {
    [alpha * x[0] + y[0], alpha * x[1] + y[1], alpha * x[2] + y[2]]
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Square integer matrix of dimension 2 or 3.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntegerMatrix {
    dim: usize,
    entries: [[i64; 3]; 3],
}

impl IntegerMatrix {
    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let dim = rows.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::domain(format!(
                "matrix dimension {dim} not supported (expected 2 or 3)"
            )));
        }
        let mut entries = [[0i64; 3]; 3];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::domain(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            entries[i][..dim].copy_from_slice(row);
        }
        Ok(IntegerMatrix { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        assert!((2..=3).contains(&dim), "dimension must be 2 or 3");
        let mut entries = [[0i64; 3]; 3];
        for (i, row) in entries.iter_mut().enumerate().take(dim) {
            row[i] = 1;
        }
        IntegerMatrix { dim, entries }
    }

    /// Parses rows of comma-separated integers; rows are separated by `;` or newlines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, chunk) in text
            .split([';', '\n'])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .enumerate()
        {
            let row = chunk
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<i64>()
                        .map_err(|e| Error::parse(n + 1, format!("bad integer {t:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> i64 {
        self.entries[i][j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        (0..self.dim)
            .map(|i| self.entries[i][..self.dim].to_vec())
            .collect()
    }

    pub fn trace(&self) -> i64 {
        (0..self.dim).map(|i| self.entries[i][i]).sum()
    }

    pub fn det(&self) -> i64 {
        let e = &self.entries;
        match self.dim {
            2 => e[0][0] * e[1][1] - e[0][1] * e[1][0],
            _ => {
                e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
                    - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
                    + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0])
            }
        }
    }

    pub fn is_unimodular(&self) -> bool {
        self.det().abs() == 1
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.dim)
    }

    pub fn mul(&self, other: &IntegerMatrix) -> Result<IntegerMatrix> {
        if self.dim != other.dim {
            return Err(Error::domain(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        let d = self.dim;
        let mut entries = [[0i64; 3]; 3];
        for (i, row) in entries.iter_mut().enumerate().take(d) {
            for (j, cell) in row.iter_mut().enumerate().take(d) {
                *cell = (0..d).map(|k| self.entries[i][k] * other.entries[k][j]).sum();
            }
        }
        Ok(IntegerMatrix { dim: d, entries })
    }

    /// Entrywise difference `self - other`.
    pub fn sub(&self, other: &IntegerMatrix) -> Result<IntegerMatrix> {
        if self.dim != other.dim {
            return Err(Error::domain("dimension mismatch"));
        }
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.entries[i][j] -= other.entries[i][j];
            }
        }
        Ok(out)
    }

    /// Integer inverse of a unimodular matrix (adjugate times determinant).
    pub fn inverse(&self) -> Result<IntegerMatrix> {
        let det = self.det();
        if det.abs() != 1 {
            return Err(Error::domain(format!(
                "matrix is not unimodular (det = {det})"
            )));
        }
        let e = &self.entries;
        let mut inv = [[0i64; 3]; 3];
        match self.dim {
            2 => {
                inv[0][0] = e[1][1];
                inv[0][1] = -e[0][1];
                inv[1][0] = -e[1][0];
                inv[1][1] = e[0][0];
            }
            _ => {
                for (i, row) in inv.iter_mut().enumerate() {
                    for (j, cell) in row.iter_mut().enumerate() {
                        // cofactor C_ji gives the adjugate entry (i, j)
                        let r: Vec<usize> = (0..3).filter(|&k| k != j).collect();
                        let c: Vec<usize> = (0..3).filter(|&k| k != i).collect();
                        let minor = e[r[0]][c[0]] * e[r[1]][c[1]] - e[r[0]][c[1]] * e[r[1]][c[0]];
                        let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                        *cell = sign * minor;
                    }
                }
            }
        }
        for row in inv.iter_mut() {
            for cell in row.iter_mut() {
                *cell *= det;
            }
        }
        Ok(IntegerMatrix {
            dim: self.dim,
            entries: inv,
        })
    }

    #[inline]
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        let e = &self.entries;
        let mut out = [0.0; 3];
        for (i, slot) in out.iter_mut().enumerate().take(self.dim) {
            *slot = (0..self.dim).map(|j| e[i][j] as f64 * v[j]).sum();
        }
        out
    }

    /// Exact action on the discrete torus.
    #[inline]
    pub fn apply_fixed(&self, v: &FixedPoint) -> FixedPoint {
        let e = &self.entries;
        let mut out = [0u64; 3];
        for (i, slot) in out.iter_mut().enumerate().take(self.dim) {
            let mut acc = 0u64;
            for j in 0..self.dim {
                acc = acc.wrapping_add((e[i][j] as u64).wrapping_mul(v[j]));
            }
            *slot = acc & FIXED_MASK;
        }
        out
    }

    /// Transpose applied to an integer vector.
    pub fn apply_transpose(&self, k: &[i64]) -> Vec<i64> {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self.entries[i][j] * k[i]).sum())
            .collect()
    }

    /// Coefficients `[c0, c1, c2]` of the monic characteristic polynomial
    /// `x^d + c0 x^(d-1) + ...`.
    fn char_poly(&self) -> Vec<f64> {
        let e = &self.entries;
        match self.dim {
            2 => vec![-(self.trace() as f64), self.det() as f64],
            _ => {
                let minors = e[0][0] * e[1][1] - e[0][1] * e[1][0]
                    + e[0][0] * e[2][2]
                    - e[0][2] * e[2][0]
                    + e[1][1] * e[2][2]
                    - e[1][2] * e[2][1];
                vec![-(self.trace() as f64), minors as f64, -(self.det() as f64)]
            }
        }
    }
}

impl fmt::Debug for IntegerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntegerMatrix({self})")
    }
}

impl fmt::Display for IntegerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .rows()
            .iter()
            .map(|r| r.iter().map(i64::to_string).collect::<Vec<_>>().join(","))
            .collect();
        write!(f, "{}", rows.join(";"))
    }
}

/// One point of the spectrum of an integer matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Eigenvalue {
    Real(f64),
    ComplexPair { modulus: f64 },
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        match *self {
            Eigenvalue::Real(x) => x.abs(),
            Eigenvalue::ComplexPair { modulus } => modulus,
        }
    }
}

fn polish_root(coeffs: &[f64], mut x: f64) -> f64 {
    for _ in 0..8 {
        let (p, dp) = eval_poly(coeffs, x);
        if dp == 0.0 {
            break;
        }
        let step = p / dp;
        x -= step;
        if step.abs() <= 1e-16 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Value and derivative of the monic polynomial with the given lower coefficients.
fn eval_poly(coeffs: &[f64], x: f64) -> (f64, f64) {
    let mut p = 1.0;
    let mut dp = 0.0;
    for &c in coeffs {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

fn bisect_root(coeffs: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let mut plo = eval_poly(coeffs, lo).0;
    if plo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let pm = eval_poly(coeffs, mid).0;
        if pm == 0.0 {
            return mid;
        }
        if (pm < 0.0) == (plo < 0.0) {
            lo = mid;
            plo = pm;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    polish_root(coeffs, 0.5 * (lo + hi))
}

/// Spectrum of a 2x2 or 3x3 integer matrix, sorted by decreasing modulus.
pub fn spectrum(m: &IntegerMatrix) -> Vec<Eigenvalue> {
    let coeffs = m.char_poly();
    let mut out = Vec::with_capacity(3);
    if m.dim == 2 {
        let (b, c) = (coeffs[0], coeffs[1]);
        let disc = b * b - 4.0 * c;
        if disc < 0.0 {
            out.push(Eigenvalue::ComplexPair {
                modulus: c.abs().sqrt(),
            });
        } else {
            let s = disc.sqrt();
            // stable quadratic formula
            let q = -0.5 * (b + b.signum() * s);
            let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q, c / q) };
            out.push(Eigenvalue::Real(polish_root(&coeffs, r1)));
            out.push(Eigenvalue::Real(polish_root(&coeffs, r2)));
        }
    } else {
        let (a, b, c) = (coeffs[0], coeffs[1], coeffs[2]);
        let bound = 1.0 + a.abs().max(b.abs()).max(c.abs());
        let disc = 4.0 * a * a - 12.0 * b;
        let mut breaks = vec![-bound];
        if disc > 0.0 {
            let s = disc.sqrt();
            breaks.push((-2.0 * a - s) / 6.0);
            breaks.push((-2.0 * a + s) / 6.0);
        }
        breaks.push(bound);
        let mut roots = Vec::new();
        for w in breaks.windows(2) {
            let (pl, _) = eval_poly(&coeffs, w[0]);
            let (ph, _) = eval_poly(&coeffs, w[1]);
            if pl == 0.0 || ph == 0.0 || (pl < 0.0) != (ph < 0.0) {
                roots.push(bisect_root(&coeffs, w[0], w[1]));
            }
        }
        roots.dedup_by(|x, y| (*x - *y).abs() < 1e-12 && roots_are_same_simple(&coeffs, *x));
        if roots.len() >= 3 {
            roots.truncate(3);
            out.extend(roots.into_iter().map(Eigenvalue::Real));
        } else {
            let r = roots[0];
            out.push(Eigenvalue::Real(r));
            let modulus = if r == 0.0 { 0.0 } else { (-c / r).abs().sqrt() };
            out.push(Eigenvalue::ComplexPair { modulus });
        }
    }
    out.sort_by(|x, y| y.modulus().total_cmp(&x.modulus()));
    out
}

fn roots_are_same_simple(coeffs: &[f64], x: f64) -> bool {
    // a simple root has non-vanishing derivative; duplicates from adjacent
    // brackets sharing an endpoint are merged only in that case
    eval_poly(coeffs, x).1.abs() > 1e-9
}

/// True iff every eigenvalue modulus differs from 1 by more than [`HYPERBOLICITY_TOL`].
pub fn check_hyperbolic(m: &IntegerMatrix) -> Result<bool> {
    if !m.is_unimodular() {
        return Err(Error::domain(format!(
            "matrix {m} is not unimodular (det = {})",
            m.det()
        )));
    }
    Ok(spectrum(m)
        .iter()
        .all(|ev| (ev.modulus() - 1.0).abs() > HYPERBOLICITY_TOL))
}

/// Exact integer commutation test.
pub fn check_commuting(a: &IntegerMatrix, b: &IntegerMatrix) -> Result<bool> {
    if a.dim != b.dim {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            a.dim, b.dim
        )));
    }
    Ok(a.mul(b)? == b.mul(a)?)
}

/// Real eigen-direction of a toral automorphism.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenDirection {
    /// Unit eigenvector.
    pub vector: Vec3,
    /// Signed eigenvalue; the rate along the direction is its modulus.
    pub eigenvalue: f64,
}

impl EigenDirection {
    pub fn rate(&self) -> f64 {
        self.eigenvalue.abs()
    }
}

/// Hyperbolic toral automorphism together with its invariant splitting.
#[derive(Clone, Debug, PartialEq)]
pub struct ToralAutomorphism {
    matrix: IntegerMatrix,
    inverse: IntegerMatrix,
    unstable: Vec<EigenDirection>,
    stable: Vec<EigenDirection>,
}

fn eigenvector(m: &IntegerMatrix, lambda: f64) -> Result<Vec3> {
    let d = m.dim;
    let mut rows = [[0.0f64; 3]; 3];
    for (i, row) in rows.iter_mut().enumerate().take(d) {
        for (j, cell) in row.iter_mut().enumerate().take(d) {
            *cell = m.entries[i][j] as f64 - if i == j { lambda } else { 0.0 };
        }
    }
    let candidates: Vec<Vec3> = if d == 2 {
        vec![[-rows[0][1], rows[0][0], 0.0], [-rows[1][1], rows[1][0], 0.0]]
    } else {
        vec![
            cross(&rows[0], &rows[1]),
            cross(&rows[0], &rows[2]),
            cross(&rows[1], &rows[2]),
        ]
    };
    let best = candidates
        .into_iter()
        .max_by(|a, b| norm(a).total_cmp(&norm(b)))
        .expect("non-empty candidate list");
    let n = norm(&best);
    if n < 1e-9 {
        return Err(Error::Unsupported(format!(
            "eigenvalue {lambda} of {m} has a degenerate eigenspace"
        )));
    }
    let mut v = [best[0] / n, best[1] / n, best[2] / n];
    // deterministic orientation: largest component positive
    let lead = (0..d)
        .max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs()))
        .unwrap_or(0);
    if v[lead] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
    Ok(v)
}

/// Computes the invariant splitting `E^u + E^s` of a hyperbolic integer matrix.
pub fn compute_splitting(m: &IntegerMatrix) -> Result<ToralAutomorphism> {
    if !check_hyperbolic(m)? {
        return Err(Error::domain(format!("matrix {m} is not hyperbolic")));
    }
    let mut unstable = Vec::new();
    let mut stable = Vec::new();
    for ev in spectrum(m) {
        let lambda = match ev {
            Eigenvalue::Real(x) => x,
            Eigenvalue::ComplexPair { .. } => {
                return Err(Error::Unsupported(format!(
                    "matrix {m} has complex eigenvalues; only real splittings are supported"
                )))
            }
        };
        let vector = eigenvector(m, lambda)?;
        let image = m.apply(&vector);
        let residual = norm(&axpy(-lambda, &vector, &image));
        if residual >= EIGEN_RESIDUAL_TOL {
            return Err(Error::Convergence(format!(
                "eigenvector residual {residual:e} for eigenvalue {lambda}"
            )));
        }
        let dir = EigenDirection {
            vector,
            eigenvalue: lambda,
        };
        if lambda.abs() > 1.0 {
            unstable.push(dir);
        } else {
            stable.push(dir);
        }
    }
    Ok(ToralAutomorphism {
        matrix: *m,
        inverse: m.inverse()?,
        unstable,
        stable,
    })
}

impl ToralAutomorphism {
    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        compute_splitting(&IntegerMatrix::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    pub fn matrix(&self) -> &IntegerMatrix {
        &self.matrix
    }

    pub fn inverse(&self) -> &IntegerMatrix {
        &self.inverse
    }

    pub fn unstable(&self) -> &[EigenDirection] {
        &self.unstable
    }

    pub fn stable(&self) -> &[EigenDirection] {
        &self.stable
    }

    pub fn unstable_basis(&self) -> Vec<Vec3> {
        self.unstable.iter().map(|d| d.vector).collect()
    }

    pub fn stable_basis(&self) -> Vec<Vec3> {
        self.stable.iter().map(|d| d.vector).collect()
    }

    pub fn unstable_rates(&self) -> Vec<f64> {
        self.unstable.iter().map(EigenDirection::rate).collect()
    }

    pub fn stable_rates(&self) -> Vec<f64> {
        self.stable.iter().map(EigenDirection::rate).collect()
    }

    /// All eigen-directions, unstable first.
    pub fn directions(&self) -> impl Iterator<Item = &EigenDirection> {
        self.unstable.iter().chain(self.stable.iter())
    }

    /// Coordinates of `v` in the eigenbasis, ordered as [`Self::directions`].
    pub fn eigen_coordinates(&self, v: &Vec3) -> Vec<f64> {
        let basis: Vec<Vec3> = self.directions().map(|d| d.vector).collect();
        solve_columns(&basis, v, self.dim())
    }

    /// Image of a lifted point, wrapped into the unit cube.
    #[inline]
    pub fn step_wrapped(&self, v: &Vec3) -> Vec3 {
        let mut out = self.matrix.apply(v);
        for x in out.iter_mut().take(self.dim()) {
            *x = wrap_unit(*x);
        }
        out
    }

    #[inline]
    pub fn step_back_wrapped(&self, v: &Vec3) -> Vec3 {
        let mut out = self.inverse.apply(v);
        for x in out.iter_mut().take(self.dim()) {
            *x = wrap_unit(*x);
        }
        out
    }
}

/// Solves `sum_j c_j columns[j] = rhs` by Cramer's rule.
pub(crate) fn solve_columns(columns: &[Vec3], rhs: &Vec3, dim: usize) -> Vec<f64> {
    let det_of = |cols: &[Vec3]| -> f64 {
        if dim == 2 {
            cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1]
        } else {
            dot(&cols[0], &cross(&cols[1], &cols[2]))
        }
    };
    let base = det_of(columns);
    (0..dim)
        .map(|j| {
            let mut cols = columns.to_vec();
            cols[j] = *rhs;
            det_of(&cols) / base
        })
        .collect()
}

/// Point of `T^d`, stored as lifted coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusPoint {
    pub coords: Vec3,
    pub dim: usize,
}

impl TorusPoint {
    pub fn new(coords: &[f64]) -> Self {
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        TorusPoint {
            coords: c,
            dim: coords.len(),
        }
    }

    pub fn canonical(&self) -> Self {
        let mut out = *self;
        for x in out.coords.iter_mut().take(self.dim) {
            *x = wrap_unit(*x);
        }
        out
    }
}

/// Point of the mapping torus `T^d x R / (v, t) ~ (Bv, t - 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MappingTorusPoint {
    pub base: TorusPoint,
    pub height: f64,
}

impl MappingTorusPoint {
    /// Representative with height in `[0,1)`, applying the gluing as often as needed.
    pub fn canonical(&self, gluing: &IntegerMatrix, gluing_inverse: &IntegerMatrix) -> Self {
        let shift = self.height.floor();
        let mut height = self.height - shift;
        if height >= 1.0 {
            height = 0.0;
        }
        let mut v = self.base.canonical().coords;
        let (m, times) = if shift >= 0.0 {
            (gluing, shift as i64)
        } else {
            (gluing_inverse, (-shift) as i64)
        };
        for _ in 0..times {
            v = m.apply(&v);
            for x in v.iter_mut().take(self.base.dim) {
                *x = wrap_unit(*x);
            }
        }
        MappingTorusPoint {
            base: TorusPoint {
                coords: v,
                dim: self.base.dim,
            },
            height,
        }
    }
}
