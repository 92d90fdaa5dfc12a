//! Sparse matrices, preconditioned CG, a skyline Cholesky solver and the
//! unfitted multigrid V-cycle.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::LinalgError;
use crate::mesh::{RefinementMap, VertexParent};

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(LinalgError::Dimension(format!(
                    "entry ({i}, {j}) outside a {nrows} x {ncols} matrix"
                )));
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            row.sort_unstable_by_key(|e| e.0);
            for &(j, v) in &row {
                if indices.len() > indptr[i] && *indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.spmv(x, &mut y);
        y
    }

    /// `y = A^T x`.
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            triplets.extend(cols.iter().zip(vals).map(|(&j, &v)| (j, i, v)));
        }
        Self::from_triplets(self.ncols, self.nrows, &triplets).expect("transpose indices are in range")
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.ncols != other.nrows {
            return Err(LinalgError::Dimension(format!(
                "cannot multiply {} x {} by {} x {}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut acc = vec![0.0; other.ncols];
        let mut marked = vec![usize::MAX; other.ncols];
        let mut pattern = Vec::new();
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.nrows {
            pattern.clear();
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (bc, bv) = other.row(k);
                for (&j, &b) in bc.iter().zip(bv) {
                    if marked[j] != i {
                        marked[j] = i;
                        acc[j] = 0.0;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                indices.push(j);
                values.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// MatrixMarket coordinate format, 1-based indices.
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::with_capacity(32 * self.nnz() + 64);
        out.push_str("%%MatrixMarket matrix coordinate real general\n");
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz()).unwrap();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v).unwrap();
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Approximate inverse `z = P^{-1} r` of a symmetric positive definite matrix.
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);

    fn name(&self) -> &'static str;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }

    fn name(&self) -> &'static str {
        "none"
    }
}

#[derive(Clone, Debug)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let inv_diag = a
            .diagonal()
            .iter()
            .enumerate()
            .map(|(row, &d)| {
                // |d| keeps the preconditioner positive definite for indefinite A
                if d != 0.0 && d.is_finite() {
                    Ok(1.0 / d.abs())
                } else {
                    Err(LinalgError::ZeroDiagonal { row })
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { inv_diag })
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
    }

    fn name(&self) -> &'static str {
        "jacobi"
    }
}

/// Symmetric Gauss-Seidel: one forward and one backward sweep from zero.
#[derive(Clone, Debug)]
pub struct SymmetricGaussSeidel {
    a: CsrMatrix,
    diag: Vec<f64>,
}

impl SymmetricGaussSeidel {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let diag = a.diagonal();
        if let Some(row) = diag.iter().position(|&d| d <= 0.0) {
            return Err(LinalgError::ZeroDiagonal { row });
        }
        Ok(Self { a: a.clone(), diag })
    }
}

impl Preconditioner for SymmetricGaussSeidel {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        let all: Vec<usize> = (0..r.len()).collect();
        gs_sweep(&self.a, &self.diag, r, z, all.iter().copied());
        gs_sweep(&self.a, &self.diag, r, z, all.iter().rev().copied());
    }

    fn name(&self) -> &'static str {
        "sgs"
    }
}

fn gs_sweep(a: &CsrMatrix, diag: &[f64], b: &[f64], x: &mut [f64], order: impl Iterator<Item = usize>) {
    for i in order {
        let (cols, vals) = a.row(i);
        let mut s = b[i];
        for (&j, &v) in cols.iter().zip(vals) {
            if j != i {
                s -= v * x[j];
            }
        }
        x[i] = s / diag[i];
    }
}

/// One Gauss-Seidel pass over all dofs followed by a pass over `cut_dofs`
/// (`forward`), or the mirrored pair in reverse order.
pub fn interface_corrected_gs(a: &CsrMatrix, b: &[f64], x: &mut [f64], cut_dofs: &[usize], forward: bool) {
    let diag = a.diagonal();
    corrected_gs(a, &diag, b, x, cut_dofs, forward);
}

fn corrected_gs(a: &CsrMatrix, diag: &[f64], b: &[f64], x: &mut [f64], cut_dofs: &[usize], forward: bool) {
    let n = b.len();
    if forward {
        gs_sweep(a, diag, b, x, 0..n);
        gs_sweep(a, diag, b, x, cut_dofs.iter().copied());
    } else {
        gs_sweep(a, diag, b, x, cut_dofs.iter().rev().copied());
        gs_sweep(a, diag, b, x, (0..n).rev());
    }
}

/// Envelope (skyline) Cholesky factorization `P A P^T = L L^T` under a
/// reverse Cuthill-McKee permutation `P`.
#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First stored column of each row of `L`.
    first: Vec<usize>,
    /// Start of each row in `values`; row `i` holds columns `first[i]..=i`.
    start: Vec<usize>,
    values: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinalgError::Dimension(format!("{} x {} is not square", n, a.ncols())));
        }
        let perm = rcm_ordering(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut triplets = Vec::with_capacity(a.nnz());
        for i in 0..n {
            let (cols, vals) = a.row(i);
            triplets.extend(cols.iter().zip(vals).map(|(&j, &v)| (inv[i], inv[j], v)));
        }
        let a = &CsrMatrix::from_triplets(n, n, &triplets)?;
        let first: Vec<usize> = (0..n).map(|i| a.row(i).0.first().map_or(i, |&j| j.min(i))).collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + i - first[i] + 1);
        }
        let mut values = vec![0.0; start[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    values[start[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            for j in first[i]..=i {
                let lo = first[i].max(first[j]);
                let mut s = values[start[i] + j - first[i]];
                let ri = start[i] - first[i];
                let rj = start[j] - first[j];
                for k in lo..j {
                    s -= values[ri + k] * values[rj + k];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(LinalgError::NotPositiveDefinite { row: i, pivot: s });
                    }
                    values[ri + i] = s.sqrt();
                } else {
                    values[ri + j] = s / values[rj + j];
                }
            }
        }
        Ok(Self {
            n,
            perm,
            first,
            start,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve_into(&self, b: &[f64], out: &mut [f64]) {
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..self.n {
            let ri = self.start[i] - self.first[i];
            let mut s = x[i];
            for k in self.first[i]..i {
                s -= self.values[ri + k] * x[k];
            }
            x[i] = s / self.values[ri + i];
        }
        for i in (0..self.n).rev() {
            let ri = self.start[i] - self.first[i];
            x[i] /= self.values[ri + i];
            let xi = x[i];
            for k in self.first[i]..i {
                x[k] -= self.values[ri + k] * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric pattern of `a`;
/// returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    let mut neighbors = Vec::new();
    for &root in &by_degree {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        let mut head = order.len();
        order.push(root);
        while head < order.len() {
            let v = order[head];
            head += 1;
            neighbors.clear();
            neighbors.extend(a.row(v).0.iter().copied().filter(|&w| !visited[w]));
            neighbors.sort_by_key(|&w| (degree[w], w));
            for &w in &neighbors {
                visited[w] = true;
                order.push(w);
            }
        }
    }
    order.reverse();
    order
}

/// Exact inverse through a Cholesky factorization.
impl Preconditioner for SkylineCholesky {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.solve_into(r, z);
    }

    fn name(&self) -> &'static str {
        "exact"
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `||b - A x|| / ||b||`.
    pub residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for SPD `a`, stopping once the
/// relative residual drops below `tol`.
pub fn cg_solve(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    precond: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport, LinalgError> {
    let n = b.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(LinalgError::Dimension(format!(
            "matrix is {} x {}, right-hand side has {n} entries",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(SolveReport {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let mut r = a.mul_vec(&x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut residual = norm(&r) / bnorm;
    let mut iterations = 0;
    while residual > tol && iterations < max_iter {
        a.spmv(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        iterations += 1;
        residual = norm(&r) / bnorm;
        if !residual.is_finite() {
            return Err(LinalgError::NotANumber {
                context: "conjugate gradients",
                iteration: iterations,
            });
        }
        if residual <= tol {
            break;
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    // report the true residual, not the recursively updated one
    let mut ax = a.mul_vec(&x);
    ax.iter_mut().zip(b).for_each(|(v, bi)| *v = bi - *v);
    let residual = norm(&ax) / bnorm;
    Ok(SolveReport {
        x,
        iterations,
        residual,
        converged: residual <= tol * 1.5,
    })
}

/// Prolongation from a coarse P1 space into a fine one across one red
/// refinement. Rows are fine dofs, columns coarse dofs. Fails unless every
/// parent vertex of every fine dof is a coarse dof.
pub fn prolongation(
    map: &RefinementMap,
    fine_vertex_of_dof: &[usize],
    coarse_dof_of_vertex: &[Option<usize>],
    num_coarse_dofs: usize,
) -> Result<CsrMatrix, LinalgError> {
    let mut triplets = Vec::with_capacity(2 * fine_vertex_of_dof.len());
    for (fine_dof, &v) in fine_vertex_of_dof.iter().enumerate() {
        let lookup = |parent: usize| {
            coarse_dof_of_vertex
                .get(parent)
                .copied()
                .flatten()
                .ok_or(LinalgError::NotNested {
                    fine_dof,
                    vertex: v,
                    parent,
                })
        };
        match map.vertices[v] {
            VertexParent::Vertex(c) => triplets.push((fine_dof, lookup(c)?, 1.0)),
            VertexParent::Midpoint(a, b) => {
                triplets.push((fine_dof, lookup(a)?, 0.5));
                triplets.push((fine_dof, lookup(b)?, 0.5));
            }
        }
    }
    CsrMatrix::from_triplets(fine_vertex_of_dof.len(), num_coarse_dofs, &triplets)
}

/// Galerkin coarse operator `R^T K R`.
pub fn galerkin_coarse(k: &CsrMatrix, r: &CsrMatrix) -> Result<CsrMatrix, LinalgError> {
    r.transpose().matmul(&k.matmul(r)?)
}

/// One level of a multigrid hierarchy, coarsest first.
#[derive(Clone, Debug)]
pub struct MultigridLevel {
    pub matrix: CsrMatrix,
    /// Dofs receiving the extra interface smoothing pass.
    pub cut_dofs: Vec<usize>,
    /// Prolongation from the previous (coarser) level; `None` on level 0.
    pub prolongation: Option<CsrMatrix>,
}

/// Symmetric V-cycle with interface-corrected Gauss-Seidel smoothing and an
/// exact coarsest-level solve.
#[derive(Clone, Debug)]
pub struct Multigrid {
    levels: Vec<MultigridLevel>,
    diagonals: Vec<Vec<f64>>,
    restrictions: Vec<Option<CsrMatrix>>,
    coarse: SkylineCholesky,
    smoothing_steps: usize,
}

impl Multigrid {
    /// `levels` run from coarsest to finest. Coarse matrices may be given
    /// directly or built with [`Multigrid::galerkin`].
    pub fn new(levels: Vec<MultigridLevel>, smoothing_steps: usize) -> Result<Self, LinalgError> {
        if levels.len() < 2 {
            return Err(LinalgError::TooFewLevels(levels.len()));
        }
        for pair in levels.windows(2) {
            let p = pair[1].prolongation.as_ref().ok_or_else(|| {
                LinalgError::Dimension("missing prolongation between levels".into())
            })?;
            if p.nrows() != pair[1].matrix.nrows() || p.ncols() != pair[0].matrix.nrows() {
                return Err(LinalgError::Dimension(format!(
                    "prolongation is {} x {}, levels have {} and {} dofs",
                    p.nrows(),
                    p.ncols(),
                    pair[1].matrix.nrows(),
                    pair[0].matrix.nrows()
                )));
            }
        }
        let coarse = SkylineCholesky::factor(&levels[0].matrix)?;
        let mut diagonals = Vec::with_capacity(levels.len());
        for level in &levels {
            let d = level.matrix.diagonal();
            if let Some(row) = d.iter().position(|&v| v <= 0.0) {
                return Err(LinalgError::ZeroDiagonal { row });
            }
            diagonals.push(d);
        }
        let restrictions = levels
            .iter()
            .map(|l| l.prolongation.as_ref().map(CsrMatrix::transpose))
            .collect();
        Ok(Self {
            levels,
            diagonals,
            restrictions,
            coarse,
            smoothing_steps,
        })
    }

    /// Builds every coarse matrix as `R^T K R` from the finest matrix.
    /// `prolongations[l]` maps level `l` to level `l + 1`; `cut_dofs` and
    /// the result run coarsest first.
    pub fn galerkin(
        fine: CsrMatrix,
        prolongations: Vec<CsrMatrix>,
        cut_dofs: Vec<Vec<usize>>,
        smoothing_steps: usize,
    ) -> Result<Self, LinalgError> {
        let num = prolongations.len() + 1;
        if cut_dofs.len() != num {
            return Err(LinalgError::Dimension(format!(
                "{} cut-dof lists for {num} levels",
                cut_dofs.len()
            )));
        }
        let mut matrices = vec![fine];
        for p in prolongations.iter().rev() {
            let coarse = galerkin_coarse(matrices.last().unwrap(), p)?;
            matrices.push(coarse);
        }
        matrices.reverse();
        let mut prolong: Vec<Option<CsrMatrix>> = vec![None];
        prolong.extend(prolongations.into_iter().map(Some));
        let levels = matrices
            .into_iter()
            .zip(cut_dofs)
            .zip(prolong)
            .map(|((matrix, cut_dofs), prolongation)| MultigridLevel {
                matrix,
                cut_dofs,
                prolongation,
            })
            .collect();
        Self::new(levels, smoothing_steps)
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &MultigridLevel {
        &self.levels[l]
    }

    fn vcycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        if l == 0 {
            self.coarse.solve_into(b, x);
            return;
        }
        let level = &self.levels[l];
        let (a, d) = (&level.matrix, &self.diagonals[l]);
        for _ in 0..self.smoothing_steps {
            corrected_gs(a, d, b, x, &level.cut_dofs, true);
        }
        let mut r = a.mul_vec(x);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let rc = self.restrictions[l].as_ref().unwrap().mul_vec(&r);
        let mut ec = vec![0.0; rc.len()];
        self.vcycle(l - 1, &rc, &mut ec);
        let e = level.prolongation.as_ref().unwrap().mul_vec(&ec);
        axpy(1.0, &e, x);
        for _ in 0..self.smoothing_steps {
            corrected_gs(a, d, b, x, &level.cut_dofs, false);
        }
    }
}

impl Preconditioner for Multigrid {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        self.vcycle(self.levels.len() - 1, r, z);
    }

    fn name(&self) -> &'static str {
        "multigrid"
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ConditionEstimate {
    /// Smallest Ritz value of `P^{-1} A`; negative for indefinite `A`.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `max |lambda| / min |lambda|`.
    pub kappa: f64,
    /// `false` when a negative eigenvalue was found; `kappa` then comes
    /// from Lanczos on the squared operator.
    pub definite: bool,
    /// Lanczos steps taken, summed over restarts and passes.
    pub steps: usize,
    /// The estimate changed by less than 0.1% over the last 20 steps.
    pub stagnated: bool,
    /// Restarts after a Lanczos breakdown.
    pub restarts: usize,
}

const STAGNATION_WINDOW: usize = 20;
const STAGNATION_TOL: f64 = 1e-3;
const MAX_RESTARTS: usize = 3;

/// Estimates the extreme eigenvalues of `P^{-1} A` with preconditioned
/// Lanczos (no reorthogonalization) started from a seeded random vector.
/// Only applications of `P^{-1}` are needed; `P` must be symmetric positive
/// definite, `A` only symmetric.
pub fn estimate_condition(
    a: &CsrMatrix,
    precond: &dyn Preconditioner,
    max_steps: usize,
    seed: u64,
) -> Result<ConditionEstimate, LinalgError> {
    let apply = |x: &[f64], y: &mut [f64]| a.spmv(x, y);
    let first = restarted_lanczos(a.nrows(), &apply, precond, max_steps, seed)?;
    if first.lambda_min > 0.0 {
        return Ok(ConditionEstimate {
            lambda_min: first.lambda_min,
            lambda_max: first.lambda_max,
            kappa: first.lambda_max / first.lambda_min,
            definite: true,
            steps: first.steps,
            stagnated: first.stagnated,
            restarts: first.restarts,
        });
    }
    // A P^{-1} A is positive semidefinite and (P^{-1} A)^2 has the squared
    // eigenvalues, so the extremes give max and min |lambda|
    let n = a.nrows();
    let squared = |x: &[f64], y: &mut [f64]| {
        let mut t = vec![0.0; n];
        let mut u = vec![0.0; n];
        a.spmv(x, &mut t);
        precond.apply(&t, &mut u);
        a.spmv(&u, y);
    };
    let second = restarted_lanczos(n, &squared, precond, max_steps, seed)?;
    if !(second.lambda_min > 0.0) {
        return Err(LinalgError::NotPositiveDefinite {
            row: 0,
            pivot: second.lambda_min,
        });
    }
    Ok(ConditionEstimate {
        lambda_min: first.lambda_min,
        lambda_max: first.lambda_max,
        kappa: (second.lambda_max / second.lambda_min).sqrt(),
        definite: false,
        steps: first.steps + second.steps,
        stagnated: second.stagnated,
        restarts: first.restarts + second.restarts,
    })
}

struct RestartedRun {
    lambda_min: f64,
    lambda_max: f64,
    steps: usize,
    stagnated: bool,
    restarts: usize,
}

fn restarted_lanczos(
    n: usize,
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: &dyn Preconditioner,
    max_steps: usize,
    seed: u64,
) -> Result<RestartedRun, LinalgError> {
    let mut out = RestartedRun {
        lambda_min: f64::INFINITY,
        lambda_max: f64::NEG_INFINITY,
        steps: 0,
        stagnated: false,
        restarts: 0,
    };
    for attempt in 0..=MAX_RESTARTS {
        let run = lanczos(n, apply, precond, max_steps.saturating_sub(out.steps).max(1), seed + attempt as u64)?;
        out.steps += run.steps;
        out.lambda_min = out.lambda_min.min(run.lambda_min);
        out.lambda_max = out.lambda_max.max(run.lambda_max);
        out.stagnated = run.stagnated;
        if !run.breakdown || out.steps >= max_steps {
            break;
        }
        out.restarts += 1;
    }
    Ok(out)
}

struct LanczosRun {
    lambda_min: f64,
    lambda_max: f64,
    steps: usize,
    stagnated: bool,
    breakdown: bool,
}

fn lanczos(
    n: usize,
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: &dyn Preconditioner,
    max_steps: usize,
    seed: u64,
) -> Result<LanczosRun, LinalgError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut beta = dot(&r, &z).sqrt();
    if !beta.is_finite() || beta == 0.0 {
        return Err(LinalgError::NotANumber {
            context: "Lanczos start",
            iteration: 0,
        });
    }
    let mut v_prev = vec![0.0; n];
    let mut v: Vec<f64> = r.iter().map(|x| x / beta).collect();
    let mut w: Vec<f64> = z.iter().map(|x| x / beta).collect();
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut q = vec![0.0; n];
    let mut breakdown = false;
    let mut stagnated = false;
    let scale = dot(&v, &w).abs().max(1e-300);
    for step in 0..max_steps {
        apply(&w, &mut q);
        let alpha = dot(&w, &q);
        if !alpha.is_finite() {
            return Err(LinalgError::NotANumber {
                context: "Lanczos",
                iteration: step,
            });
        }
        alphas.push(alpha);
        let beta_prev = beta;
        for i in 0..n {
            r[i] = q[i] - alpha * v[i] - if step > 0 { beta_prev * v_prev[i] } else { 0.0 };
        }
        precond.apply(&r, &mut z);
        let bsq = dot(&r, &z);
        let done = step + 1 == max_steps;
        if !(bsq > 1e-26 * scale * alpha.abs().max(1.0)) {
            breakdown = !done && bsq.is_finite();
            break;
        }
        beta = bsq.sqrt();
        if (step + 1) % 5 == 0 || done {
            let (lo, hi) = tridiagonal_extremes(&alphas, &betas);
            history.push(hi / lo);
            let window = STAGNATION_WINDOW / 5;
            if history.len() > window {
                let old = history[history.len() - 1 - window];
                let new = *history.last().unwrap();
                if ((new - old) / new).abs() < STAGNATION_TOL {
                    stagnated = true;
                    break;
                }
            }
        }
        if done {
            break;
        }
        betas.push(beta);
        std::mem::swap(&mut v_prev, &mut v);
        for i in 0..n {
            v[i] = r[i] / beta;
            w[i] = z[i] / beta;
        }
    }
    betas.truncate(alphas.len().saturating_sub(1));
    let (lambda_min, lambda_max) = tridiagonal_extremes(&alphas, &betas);
    Ok(LanczosRun {
        lambda_min,
        lambda_max,
        steps: alphas.len(),
        stagnated,
        breakdown,
    })
}

/// Smallest and largest eigenvalue of the symmetric tridiagonal matrix with
/// diagonal `alpha` and off-diagonal `beta`, by Sturm-sequence bisection.
pub fn tridiagonal_extremes(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let m = alpha.len();
    assert!(m > 0 && beta.len() + 1 >= m);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..m {
        let left = if i > 0 { beta[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < m { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - left - right);
        hi = hi.max(alpha[i] + left + right);
    }
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..m {
            let b2 = if i > 0 { beta[i - 1] * beta[i - 1] } else { 0.0 };
            d = alpha[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let bisect = |k: usize| -> f64 {
        // k-th smallest eigenvalue (0-based)
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if count_below(mid) > k {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };
    (bisect(0), bisect(m - 1))
}
