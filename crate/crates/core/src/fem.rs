//! Uniform P1 finite elements on the unit square.
//!
//! The truth space is spanned by the hat functions of the interior nodes of a
//! Friedrichs–Keller triangulation; homogeneous Dirichlet values are implied on
//! the boundary. Everything downstream (Riesz lifts, snapshots, POD modes,
//! estimators) is a coefficient vector over these interior DOFs.

use crate::error::{Error, Result};

/// A point in the unit square.
pub type Point = [f64; 2];

const BOUNDARY: usize = usize::MAX;

/// Compressed-row symmetric sparsity pattern with per-element slot lookup.
#[derive(Debug, Clone)]
struct Pattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// For each element, the CSR slot of local entry (a, b) at `3 * a + b`,
    /// or `BOUNDARY` when either node is on the boundary.
    elem_slots: Vec<[usize; 9]>,
}

/// Uniform Friedrichs–Keller triangulation of `[0, 1]^2`.
#[derive(Debug, Clone)]
pub struct TriMesh {
    n: usize,
    h: f64,
    nodes: Vec<Point>,
    elements: Vec<[usize; 3]>,
    interior_index: Vec<usize>,
    dof_nodes: Vec<usize>,
    pattern: Pattern,
}

impl TriMesh {
    /// Builds the mesh with `n` subdivisions per side.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "mesh needs at least 2 subdivisions per side, got {n}"
            )));
        }
        let h = 1.0 / n as f64;
        let np = n + 1;
        let mut nodes = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                nodes.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let p00 = i + j * np;
                let p10 = p00 + 1;
                let p01 = p00 + np;
                let p11 = p01 + 1;
                elements.push([p00, p10, p11]);
                elements.push([p00, p11, p01]);
            }
        }
        let mut interior_index = vec![BOUNDARY; np * np];
        let mut dof_nodes = Vec::with_capacity((n - 1) * (n - 1));
        for j in 1..n {
            for i in 1..n {
                let node = i + j * np;
                interior_index[node] = dof_nodes.len();
                dof_nodes.push(node);
            }
        }
        let pattern = build_pattern(&elements, &interior_index, dof_nodes.len());
        Ok(Self {
            n,
            h,
            nodes,
            elements,
            interior_index,
            dof_nodes,
            pattern,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    /// Number of interior degrees of freedom, `(n - 1)^2`.
    pub fn num_dofs(&self) -> usize {
        self.dof_nodes.len()
    }

    /// Interior DOF index of a node, `None` on the boundary.
    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        match self.interior_index[node] {
            BOUNDARY => None,
            d => Some(d),
        }
    }

    /// Node carrying the given interior DOF.
    pub fn node_of_dof(&self, dof: usize) -> usize {
        self.dof_nodes[dof]
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.interior_index[node] == BOUNDARY
    }

    pub fn barycenter(&self, element: usize) -> Point {
        let [a, b, c] = self.elements[element];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    /// Signed area of an element (positive for counter-clockwise ordering).
    pub fn signed_area(&self, element: usize) -> f64 {
        let [a, b, c] = self.elements[element];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// P1 evaluation weights at `x`: `u(x) = sum w_d u_d` over interior DOFs.
    ///
    /// Points outside the closed square are rejected.
    pub fn eval_weights(&self, x: Point) -> Result<Vec<(usize, f64)>> {
        if !(0.0..=1.0).contains(&x[0]) || !(0.0..=1.0).contains(&x[1]) {
            return Err(Error::InvalidArgument(format!(
                "point ({}, {}) lies outside the unit square",
                x[0], x[1]
            )));
        }
        let n = self.n;
        let np = n + 1;
        let sx = x[0] * n as f64;
        let sy = x[1] * n as f64;
        let ci = (sx.floor() as usize).min(n - 1);
        let cj = (sy.floor() as usize).min(n - 1);
        let xi = sx - ci as f64;
        let eta = sy - cj as f64;
        let p00 = ci + cj * np;
        let p10 = p00 + 1;
        let p01 = p00 + np;
        let p11 = p01 + 1;
        let local = if xi >= eta {
            // lower triangle (p00, p10, p11)
            [(p00, 1.0 - xi), (p10, xi - eta), (p11, eta)]
        } else {
            // upper triangle (p00, p11, p01)
            [(p00, 1.0 - eta), (p11, xi), (p01, eta - xi)]
        };
        Ok(local
            .iter()
            .filter_map(|&(node, w)| self.dof_of_node(node).map(|d| (d, w)))
            .filter(|&(_, w)| w != 0.0)
            .collect())
    }

    /// Evaluates the P1 interpolant of `u` at `x`.
    pub fn evaluate(&self, u: &FeFunction, x: Point) -> Result<f64> {
        self.check(u)?;
        Ok(self
            .eval_weights(x)?
            .iter()
            .map(|&(d, w)| w * u.coeffs[d])
            .sum())
    }

    /// Nodal interpolant of `f` on the interior nodes.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> FeFunction {
        FeFunction::new(self.dof_nodes.iter().map(|&nd| f(self.nodes[nd])).collect())
    }

    /// Load vector of `f = 1`: `b_i = int lambda_i`.
    pub fn unit_load(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.num_dofs()];
        for (e, tri) in self.elements.iter().enumerate() {
            let third = self.signed_area(e) / 3.0;
            for &node in tri {
                if let Some(d) = self.dof_of_node(node) {
                    b[d] += third;
                }
            }
        }
        b
    }

    pub(crate) fn check(&self, u: &FeFunction) -> Result<()> {
        if u.len() != self.num_dofs() {
            return Err(Error::InvalidArgument(format!(
                "function has {} coefficients, mesh has {} interior DOFs",
                u.len(),
                self.num_dofs()
            )));
        }
        Ok(())
    }
}

fn build_pattern(elements: &[[usize; 3]], interior_index: &[usize], ndof: usize) -> Pattern {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); ndof];
    for tri in elements {
        for &a in tri {
            let ra = interior_index[a];
            if ra == BOUNDARY {
                continue;
            }
            for &b in tri {
                let cb = interior_index[b];
                if cb != BOUNDARY {
                    rows[ra].push(cb);
                }
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(ndof + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for row in rows.iter_mut() {
        row.sort_unstable();
        row.dedup();
        col_idx.extend_from_slice(row);
        row_ptr.push(col_idx.len());
    }
    let slot = |r: usize, c: usize| -> usize {
        let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
        row_ptr[r] + cols.binary_search(&c).expect("pattern covers element couplings")
    };
    let elem_slots = elements
        .iter()
        .map(|tri| {
            let mut s = [BOUNDARY; 9];
            for a in 0..3 {
                for b in 0..3 {
                    let (r, c) = (interior_index[tri[a]], interior_index[tri[b]]);
                    if r != BOUNDARY && c != BOUNDARY {
                        s[3 * a + b] = slot(r, c);
                    }
                }
            }
            s
        })
        .collect();
    Pattern {
        row_ptr,
        col_idx,
        elem_slots,
    }
}

/// Coefficient vector of a P1 function over the interior DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            coeffs: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &FeFunction) {
        axpy(alpha, &other.coeffs, &mut self.coeffs);
    }

    pub fn scaled(&self, alpha: f64) -> FeFunction {
        FeFunction::new(self.coeffs.iter().map(|v| alpha * v).collect())
    }
}

/// Symmetric sparse matrix in compressed-row storage (both triangles stored).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds a matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(k) => self.values[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.get(r, r)).collect()
    }

    /// `y = A x`
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.mul_into(x, &mut y);
        y
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (r, xr) in x.iter().enumerate() {
            let mut row = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * y[self.col_idx[k]];
            }
            acc += xr * row;
        }
        acc
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let max = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        if max > 0.0 {
            worst / max
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }
}

fn element_stiffness(mesh: &TriMesh, e: usize) -> [f64; 9] {
    let tri = mesh.elements[e];
    let p: Vec<Point> = tri.iter().map(|&i| mesh.nodes[i]).collect();
    let area = mesh.signed_area(e);
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        b[i] = p[j][1] - p[k][1];
        c[i] = p[k][0] - p[j][0];
    }
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
        }
    }
    out
}

fn element_mass(mesh: &TriMesh, e: usize) -> [f64; 9] {
    let a = mesh.signed_area(e) / 12.0;
    let mut out = [a; 9];
    out[0] = 2.0 * a;
    out[4] = 2.0 * a;
    out[8] = 2.0 * a;
    out
}

fn assemble_interior(mesh: &TriMesh, local: impl Fn(usize) -> [f64; 9]) -> SparseSymMatrix {
    let pat = &mesh.pattern;
    let mut values = vec![0.0; pat.col_idx.len()];
    for (e, slots) in pat.elem_slots.iter().enumerate() {
        let k = local(e);
        for (s, v) in slots.iter().zip(k.iter()) {
            if *s != BOUNDARY {
                values[*s] += v;
            }
        }
    }
    SparseSymMatrix {
        dim: mesh.num_dofs(),
        row_ptr: pat.row_ptr.clone(),
        col_idx: pat.col_idx.clone(),
        values,
    }
}

/// Stiffness matrix `A_ij = sum_T a_T int_T grad(lambda_i) . grad(lambda_j)` for
/// a piecewise-constant coefficient given per element.
pub fn assemble_stiffness(mesh: &TriMesh, a_elem: &[f64]) -> Result<SparseSymMatrix> {
    if a_elem.len() != mesh.elements.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} element coefficients, got {}",
            mesh.elements.len(),
            a_elem.len()
        )));
    }
    if let Some((element, &value)) = a_elem
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(Error::DegenerateCoefficient { element, value });
    }
    Ok(assemble_interior(mesh, |e| {
        let mut k = element_stiffness(mesh, e);
        k.iter_mut().for_each(|v| *v *= a_elem[e]);
        k
    }))
}

/// Stiffness matrix of the Laplacian (`a = 1`), the H1-seminorm Gram matrix.
pub fn assemble_laplace(mesh: &TriMesh) -> SparseSymMatrix {
    assemble_interior(mesh, |e| element_stiffness(mesh, e))
}

/// Consistent P1 mass matrix over interior DOFs.
pub fn assemble_mass(mesh: &TriMesh) -> SparseSymMatrix {
    assemble_interior(mesh, |e| element_mass(mesh, e))
}

/// Consistent P1 mass matrix over all nodes, boundary included.
pub fn assemble_mass_full(mesh: &TriMesh) -> SparseSymMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.elements.len());
    for (e, tri) in mesh.elements.iter().enumerate() {
        let m = element_mass(mesh, e);
        for a in 0..3 {
            for b in 0..3 {
                triplets.push((tri[a], tri[b], m[3 * a + b]));
            }
        }
    }
    SparseSymMatrix::from_triplets(mesh.nodes.len(), triplets)
}

/// Options for the conjugate-gradient solver.
#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Relative residual target `||A u - f|| / ||f||`.
    pub tol: f64,
    /// Iteration cap; `None` means `10 * dim`.
    pub max_iter: Option<usize>,
    /// Diagonal (Jacobi) preconditioning.
    pub jacobi: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            jacobi: true,
        }
    }
}

/// Solves `A u = f` for SPD `A` by conjugate gradients with default options.
pub fn solve_dirichlet(a: &SparseSymMatrix, f: &[f64], tol: f64) -> Result<FeFunction> {
    solve_cg(
        a,
        f,
        &CgOptions {
            tol,
            ..CgOptions::default()
        },
    )
}

/// Conjugate gradients. The returned solution satisfies the relative residual
/// bound on the true residual `f - A u`, not only on the recurrence.
pub fn solve_cg(a: &SparseSymMatrix, f: &[f64], opts: &CgOptions) -> Result<FeFunction> {
    let n = a.dim();
    if f.len() != n {
        return Err(Error::InvalidArgument(format!(
            "load vector has length {}, matrix dimension is {n}",
            f.len()
        )));
    }
    let fnorm = norm2(f);
    let mut x = vec![0.0; n];
    if fnorm == 0.0 {
        return Ok(FeFunction::new(x));
    }
    let inv_diag: Vec<f64> = if opts.jacobi {
        a.diagonal().iter().map(|d| 1.0 / d).collect()
    } else {
        vec![1.0; n]
    };
    let cap = opts.max_iter.unwrap_or(10 * n);
    let target = opts.tol * fnorm;
    let mut r = f.to_vec();
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    loop {
        // (re)start from the true residual
        a.mul_into(&x, &mut ap);
        for i in 0..n {
            r[i] = f[i] - ap[i];
        }
        let mut rnorm = norm2(&r);
        if rnorm <= target {
            return Ok(FeFunction::new(x));
        }
        if iterations >= cap {
            return Err(Error::SolverFailure {
                iterations,
                residual: rnorm / fnorm,
            });
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < cap {
            iterations += 1;
            a.mul_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(Error::SolverFailure {
                    iterations,
                    residual: rnorm / fnorm,
                });
            }
            let alpha = rz / pap;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            rnorm = norm2(&r);
            if rnorm <= 0.5 * target {
                break;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Inner product defining the model space `U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum InnerProductMode {
    /// `int grad u . grad v`, the H1_0 seminorm.
    #[serde(rename = "H1")]
    H1Seminorm,
    /// `int u v`
    #[serde(rename = "L2")]
    L2,
}

impl InnerProductMode {
    pub fn tag(self) -> u32 {
        match self {
            InnerProductMode::H1Seminorm => 1,
            InnerProductMode::L2 => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            1 => Some(InnerProductMode::H1Seminorm),
            2 => Some(InnerProductMode::L2),
            _ => None,
        }
    }
}

impl std::fmt::Display for InnerProductMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InnerProductMode::H1Seminorm => write!(f, "H1"),
            InnerProductMode::L2 => write!(f, "L2"),
        }
    }
}

/// The truth space: a mesh together with its H1-seminorm and L2 Gram matrices.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: TriMesh,
    laplace: SparseSymMatrix,
    mass: SparseSymMatrix,
}

impl FeSpace {
    pub fn new(mesh: TriMesh) -> Self {
        let laplace = assemble_laplace(&mesh);
        let mass = assemble_mass(&mesh);
        Self {
            mesh,
            laplace,
            mass,
        }
    }

    pub fn with_subdivisions(n: usize) -> Result<Self> {
        Ok(Self::new(TriMesh::new(n)?))
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_dofs()
    }

    /// Gram matrix of the given inner product.
    pub fn gram(&self, mode: InnerProductMode) -> &SparseSymMatrix {
        match mode {
            InnerProductMode::H1Seminorm => &self.laplace,
            InnerProductMode::L2 => &self.mass,
        }
    }

    pub fn inner(&self, u: &[f64], v: &[f64], mode: InnerProductMode) -> f64 {
        self.gram(mode).bilinear(u, v)
    }

    pub fn norm(&self, u: &[f64], mode: InnerProductMode) -> f64 {
        self.inner(u, u, mode).max(0.0).sqrt()
    }

    /// `G u` for the Gram matrix of `mode`; dotting with it gives inner products.
    pub fn apply_gram(&self, u: &[f64], mode: InnerProductMode) -> Vec<f64> {
        self.gram(mode).mul(u)
    }
}

/// `(u, v)_U` with mesh-compatibility checks.
pub fn inner_product(
    space: &FeSpace,
    u: &FeFunction,
    v: &FeFunction,
    mode: InnerProductMode,
) -> Result<f64> {
    space.mesh.check(u)?;
    space.mesh.check(v)?;
    Ok(space.inner(&u.coeffs, &v.coeffs, mode))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four independent partial sums so the loop vectorizes
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
