//! Discrete elliptic operators `div(sigma grad .)` on first-order triangular
//! elements, lumped mass operators, and a projected conjugate-gradient solver
//! for pure-Neumann problems.

use thiserror::Error;

use crate::mesh::{BoundaryTag, Region, TriMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("conductivity for {region:?} must be finite and non-negative, got {value}")]
    InvalidConductivity { region: Region, value: f64 },
    #[error("field has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("field is non-zero at vertex {vertex}, outside the operator support")]
    SupportMismatch { vertex: usize },
    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

/// Region-wise scalar conductivities (nondimensional).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductivityMap {
    pub sigma_i: f64,
    pub sigma_e: f64,
    pub sigma_t: f64,
}

impl Default for ConductivityMap {
    fn default() -> Self {
        ConductivityMap {
            sigma_i: 1.0,
            sigma_e: 2.0,
            sigma_t: 5.0,
        }
    }
}

impl ConductivityMap {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma_i >= 0.0 && self.sigma_i.is_finite()) {
            return Err(format!("sigma_i must be >= 0, got {}", self.sigma_i));
        }
        if !(self.sigma_e > 0.0 && self.sigma_e.is_finite()) {
            return Err(format!("sigma_e must be > 0, got {}", self.sigma_e));
        }
        if !(self.sigma_t > 0.0 && self.sigma_t.is_finite()) {
            return Err(format!("sigma_t must be > 0, got {}", self.sigma_t));
        }
        Ok(())
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries. Duplicates are accumulated in the order they
    /// appear in `triplets`.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    pub fn scaled(&self, factor: f64) -> CsrMatrix {
        CsrMatrix {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Symmetric stiffness matrix of `-div(sigma grad .)` with per-region sigma.
#[derive(Debug, Clone)]
pub struct StiffnessOperator {
    matrix: CsrMatrix,
    support: Vec<bool>,
}

impl StiffnessOperator {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Vertices touched by at least one contributing triangle.
    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }
}

/// Local stiffness of one linear triangle with unit conductivity.
fn local_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area2 = crate::mesh::doubled_signed_area(p[0], p[1], p[2]);
    // gradient of barycentric coordinate k is (b_k, c_k) / area2
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let scale = 1.0 / (2.0 * area2);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for e in a..3 {
            let v = (b[a] * b[e] + c[a] * c[e]) * scale;
            k[a][e] = v;
            k[e][a] = v;
        }
    }
    k
}

/// Assembles the stiffness operator. Regions absent from `sigma_per_region`
/// contribute nothing.
pub fn assemble_stiffness(
    mesh: &TriMesh,
    sigma_per_region: &[(Region, f64)],
) -> Result<StiffnessOperator, OperatorError> {
    for &(region, value) in sigma_per_region {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(OperatorError::InvalidConductivity { region, value });
        }
    }
    let sigma_of = |region: Region| {
        sigma_per_region
            .iter()
            .rev()
            .find(|(r, _)| *r == region)
            .map(|&(_, s)| s)
    };
    let n = mesh.num_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.triangles().len());
    let mut support = vec![false; n];
    for tri in mesh.triangles() {
        let Some(sigma) = sigma_of(tri.region) else {
            continue;
        };
        let idx = tri.vertices;
        let p = idx.map(|i| mesh.vertices()[i]);
        let k = local_stiffness(p);
        for a in 0..3 {
            support[idx[a]] = true;
            for e in 0..3 {
                triplets.push((idx[a], idx[e], sigma * k[a][e]));
            }
        }
    }
    Ok(StiffnessOperator {
        matrix: CsrMatrix::from_triplets(n, triplets),
        support,
    })
}

/// Sum of two stiffness operators on the same mesh.
pub fn add_stiffness(a: &StiffnessOperator, b: &StiffnessOperator) -> StiffnessOperator {
    let n = a.dim();
    let mut triplets = Vec::with_capacity(a.matrix.nnz() + b.matrix.nnz());
    for op in [a, b] {
        for i in 0..n {
            triplets.extend(op.matrix.row(i).map(|(j, v)| (i, j, v)));
        }
    }
    StiffnessOperator {
        matrix: CsrMatrix::from_triplets(n, triplets),
        support: a
            .support
            .iter()
            .zip(&b.support)
            .map(|(x, y)| *x || *y)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassSupport {
    Region(Region),
    All,
    Boundary(BoundaryTag),
}

/// Lumped (diagonal) mass matrix restricted to a region or boundary.
#[derive(Debug, Clone)]
pub struct MassOperator {
    diag: Vec<f64>,
    support: Vec<bool>,
    kind: MassSupport,
}

impl MassOperator {
    pub fn new(mesh: &TriMesh, kind: MassSupport) -> Self {
        let n = mesh.num_vertices();
        let mut diag = vec![0.0; n];
        let mut support = vec![false; n];
        match kind {
            MassSupport::Boundary(tag) => {
                for e in mesh.boundary_edges().iter().filter(|e| e.tag == tag) {
                    let [a, b] = e.vertices;
                    let half = 0.5 * crate::mesh::distance(mesh.vertices()[a], mesh.vertices()[b]);
                    for i in [a, b] {
                        diag[i] += half;
                        support[i] = true;
                    }
                }
            }
            MassSupport::Region(_) | MassSupport::All => {
                for (t, tri) in mesh.triangles().iter().enumerate() {
                    if let MassSupport::Region(r) = kind {
                        if tri.region != r {
                            continue;
                        }
                    }
                    let third = mesh.triangle_area(t) / 3.0;
                    for &i in &tri.vertices {
                        diag[i] += third;
                        support[i] = true;
                    }
                }
            }
        }
        MassOperator {
            diag,
            support,
            kind,
        }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn kind(&self) -> MassSupport {
        self.kind
    }

    /// Measure of the support (`1^T M 1`).
    pub fn measure(&self) -> f64 {
        self.diag.iter().sum()
    }

    /// `M x` (zero outside the support).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(x).map(|(m, v)| m * v).collect()
    }

    /// Mass-weighted mean over the support.
    pub fn mean(&self, x: &[f64]) -> f64 {
        self.diag.iter().zip(x).map(|(m, v)| m * v).sum::<f64>() / self.measure()
    }

    fn check(&self, x: &[f64]) -> Result<(), OperatorError> {
        if x.len() != self.diag.len() {
            return Err(OperatorError::LengthMismatch {
                expected: self.diag.len(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `sqrt(x^T M x)`
    pub fn l2_norm(&self, x: &[f64]) -> Result<f64, OperatorError> {
        self.check(x)?;
        Ok(self
            .diag
            .iter()
            .zip(x)
            .map(|(m, v)| m * v * v)
            .sum::<f64>()
            .sqrt())
    }

    /// `sum_i M_ii |x_i|`
    pub fn l1_norm(&self, x: &[f64]) -> Result<f64, OperatorError> {
        self.check(x)?;
        Ok(self.diag.iter().zip(x).map(|(m, v)| m * v.abs()).sum())
    }

    /// Time-integrated L1 norm: `sum_n dt * ||x^n||_1`.
    pub fn space_time_l1<'a>(
        &self,
        fields: impl IntoIterator<Item = &'a [f64]>,
        dt: f64,
    ) -> Result<f64, OperatorError> {
        let mut total = 0.0;
        for f in fields {
            total += dt * self.l1_norm(f)?;
        }
        Ok(total)
    }
}

/// Linear operator interface used by the conjugate-gradient solver.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        CsrMatrix::diagonal(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `||b - A x|| <= tol ||b||`.
    pub tol: f64,
    /// Iteration cap as a multiple of the system size.
    pub max_iter_factor: usize,
    pub enforce_compat: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iter_factor: 50,
            enforce_compat: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the Euclidean component along the indicator of `mask`.
fn project_out_constant(x: &mut [f64], mask: &[bool], count: usize) {
    if count == 0 {
        return;
    }
    let mean = x
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v)
        .sum::<f64>()
        / count as f64;
    for (v, &m) in x.iter_mut().zip(mask) {
        if m {
            *v -= mean;
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// semidefinite operator whose null space is spanned by the indicator of
/// `null_mask` (pass `None` for a definite operator). The residual is
/// re-projected onto the range every iteration.
pub fn pcg(
    op: &impl LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    null_mask: Option<&[bool]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats), OperatorError> {
    let n = op.dim();
    if b.len() != n {
        return Err(OperatorError::LengthMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let null_count = null_mask.map_or(0, |m| m.iter().filter(|&&v| v).count());
    let scale = dot(b, b).sqrt();
    if scale == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    // work on b / |b| so that very small or very large data cannot under- or
    // overflow the inner products
    let b: Vec<f64> = b.iter().map(|v| v / scale).collect();
    let b = b.as_slice();
    let b_norm = 1.0;
    let mut x: Vec<f64> = x0.map_or_else(|| vec![0.0; n], |x0| x0.iter().map(|v| v / scale).collect());
    let inv_diag: Vec<f64> = op
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    op.apply_into(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if let Some(mask) = null_mask {
        project_out_constant(&mut r, mask, null_count);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = dot(&r, &r).sqrt() / b_norm;

    while residual > tol {
        if iterations >= max_iter {
            return Err(OperatorError::NotConverged {
                iterations,
                residual,
            });
        }
        op.apply_into(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if let Some(mask) = null_mask {
            project_out_constant(&mut r, mask, null_count);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        residual = dot(&r, &r).sqrt() / b_norm;
    }

    // an incompatible right-hand side shows up here: the iteration only sees
    // its projection onto the range
    op.apply_into(&x, &mut q);
    let true_r: Vec<f64> = b.iter().zip(&q).map(|(bi, qi)| bi - qi).collect();
    let true_res = dot(&true_r, &true_r).sqrt() / b_norm;
    if true_res > 10.0 * tol.max(f64::EPSILON) {
        return Err(OperatorError::NotConverged {
            iterations,
            residual: true_res,
        });
    }
    x.iter_mut().for_each(|v| *v *= scale);
    Ok((
        x,
        SolveStats {
            iterations,
            residual: true_res,
        },
    ))
}

/// Subtracts the mass-weighted mean so that `1^T M x = 0`.
pub fn gauge_zero_mean(mass: &MassOperator, x: &mut [f64]) {
    let mean = mass.mean(x);
    for (v, &s) in x.iter_mut().zip(mass.support()) {
        if s {
            *v -= mean;
        }
    }
}

/// Solves `K u = rhs` for a stiffness operator with constant null space on its
/// support, returning the zero-mean (with respect to `mass`) solution.
///
/// With `enforce_compat`, a constant density is first removed from `rhs`
/// (`rhs -= (1^T rhs / 1^T M 1) M 1`) so that `1^T rhs = 0`.
pub fn solve_neumann(
    k: &StiffnessOperator,
    mass: &MassOperator,
    rhs: &[f64],
    opts: &SolverOptions,
    x0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveStats), OperatorError> {
    let n = k.dim();
    if rhs.len() != n {
        return Err(OperatorError::LengthMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    if let Some(vertex) = (0..n).find(|&i| !k.support[i] && rhs[i] != 0.0) {
        return Err(OperatorError::SupportMismatch { vertex });
    }
    let mut b = rhs.to_vec();
    if opts.enforce_compat {
        let total: f64 = b.iter().sum();
        let c = total / mass.measure();
        for (bi, m) in b.iter_mut().zip(mass.diag()) {
            *bi -= c * m;
        }
    }
    let restricted = Restricted {
        matrix: &k.matrix,
        support: &k.support,
    };
    let max_iter = opts.max_iter_factor * n.max(1);
    let (mut u, stats) = pcg(&restricted, &b, x0, Some(&k.support), opts.tol, max_iter)?;
    gauge_zero_mean(mass, &mut u);
    Ok((u, stats))
}

/// Operator acting as identity on vertices outside the support, so that rows
/// with no contributing triangle do not make the system singular there.
struct Restricted<'a> {
    matrix: &'a CsrMatrix,
    support: &'a [bool],
}

impl LinearOperator for Restricted<'_> {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.mul_vec_into(x, y);
        for i in 0..y.len() {
            if !self.support[i] {
                y[i] = x[i];
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.matrix.diagonal();
        for (di, &s) in d.iter_mut().zip(self.support) {
            if !s {
                *di = 1.0;
            }
        }
        d
    }
}
