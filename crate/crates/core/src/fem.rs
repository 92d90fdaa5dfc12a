//! P1 finite element space on the active mesh and assembly of the Nitsche
//! stiffness matrix with ghost penalty, mass matrix, load and target vectors.

use std::collections::BTreeSet;

use crate::error::GeometryError;
use crate::geometry::{interface_quadrature, volume_quadrature, CutTopology, ElementClass};
use crate::linalg::CsrMatrix;
use crate::mesh::{BackgroundMesh, Point, RefinementMap};

pub type ScalarFn<'a> = &'a (dyn Fn(Point) -> f64 + Sync);
pub type VectorFn<'a> = &'a (dyn Fn(Point) -> Point + Sync);

/// Penalty parameters of the discrete bilinear form.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PenaltyParams {
    /// Nitsche penalty on the Dirichlet boundary.
    pub gamma_d: f64,
    /// Normal-derivative stabilization on the Neumann boundary.
    pub gamma_n: f64,
    /// Ghost penalty on facets of cut elements.
    pub gamma_1: f64,
    /// Polynomial degree integrated exactly by volume and interface rules.
    pub quadrature_order: usize,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self {
            gamma_d: 10.0,
            gamma_n: 0.0,
            gamma_1: 0.1,
            quadrature_order: 4,
        }
    }
}

/// Continuous piecewise linear functions on a set of active elements, one
/// dof per vertex of an active element, numbered in vertex order.
#[derive(Clone, Debug)]
pub struct P1Space {
    dof_of_vertex: Vec<Option<usize>>,
    vertex_of_dof: Vec<usize>,
    active_elements: Vec<usize>,
    cut_elements: Vec<usize>,
    h: f64,
}

impl P1Space {
    pub fn new(mesh: &BackgroundMesh, topo: &CutTopology) -> Self {
        Self::from_elements(mesh, topo.active_elements(), topo.cut_elements())
    }

    /// Space on an explicit list of active elements; `cut` marks the
    /// elements whose dofs get the interface smoothing pass.
    pub fn from_elements(mesh: &BackgroundMesh, active: &[usize], cut: &[usize]) -> Self {
        let mut used = vec![false; mesh.num_vertices()];
        for &e in active {
            for &v in &mesh.triangles()[e] {
                used[v] = true;
            }
        }
        let mut dof_of_vertex = vec![None; mesh.num_vertices()];
        let mut vertex_of_dof = Vec::new();
        for (v, &u) in used.iter().enumerate() {
            if u {
                dof_of_vertex[v] = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        let mut active_elements = active.to_vec();
        active_elements.sort_unstable();
        active_elements.dedup();
        let mut cut_elements = cut.to_vec();
        cut_elements.sort_unstable();
        cut_elements.dedup();
        Self {
            dof_of_vertex,
            vertex_of_dof,
            active_elements,
            cut_elements,
            h: mesh.h_max(),
        }
    }

    /// Space on the coarse mesh of a refinement step whose active and cut
    /// elements are the parents of this space's active and cut elements.
    /// The resulting pair is always nested.
    pub fn induced_coarse(&self, coarse: &BackgroundMesh, map: &RefinementMap) -> Self {
        let parents = |els: &[usize]| -> Vec<usize> {
            els.iter()
                .map(|&e| map.elements[e])
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        };
        Self::from_elements(coarse, &parents(&self.active_elements), &parents(&self.cut_elements))
    }

    pub fn num_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.dof_of_vertex[vertex]
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.vertex_of_dof[dof]
    }

    pub fn dof_of_vertex(&self) -> &[Option<usize>] {
        &self.dof_of_vertex
    }

    pub fn vertex_of_dof(&self) -> &[usize] {
        &self.vertex_of_dof
    }

    pub fn active_elements(&self) -> &[usize] {
        &self.active_elements
    }

    pub fn cut_elements(&self) -> &[usize] {
        &self.cut_elements
    }

    /// Global mesh size used in the penalty terms.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Dofs of `e`; panics if `e` is not active.
    pub fn element_dofs(&self, mesh: &BackgroundMesh, e: usize) -> [usize; 3] {
        mesh.triangles()[e].map(|v| self.dof_of_vertex[v].expect("element is not active"))
    }

    /// Dofs belonging to cut elements, ascending.
    pub fn cut_dofs(&self, mesh: &BackgroundMesh) -> Vec<usize> {
        self.cut_elements
            .iter()
            .flat_map(|&e| self.element_dofs(mesh, e))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, mesh: &BackgroundMesh, f: ScalarFn) -> Vec<f64> {
        self.vertex_of_dof.iter().map(|&v| f(mesh.vertices()[v])).collect()
    }

    /// Value of the finite element function `coeffs` at `p` in element `e`.
    pub fn evaluate(&self, mesh: &BackgroundMesh, coeffs: &[f64], e: usize, p: Point) -> f64 {
        let dofs = self.element_dofs(mesh, e);
        let lam = barycentric(&mesh.triangle_points(e), p);
        (0..3).map(|k| lam[k] * coeffs[dofs[k]]).sum()
    }
}

/// Gradients of the three barycentric coordinates of a triangle.
pub fn basis_gradients(tri: &[Point; 3]) -> [Point; 3] {
    let [a, b, c] = *tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ]
}

pub fn barycentric(tri: &[Point; 3], p: Point) -> [f64; 3] {
    let g = basis_gradients(tri);
    let l1 = g[1][0] * (p[0] - tri[0][0]) + g[1][1] * (p[1] - tri[0][1]);
    let l2 = g[2][0] * (p[0] - tri[0][0]) + g[2][1] * (p[1] - tri[0][1]);
    [1.0 - l1 - l2, l1, l2]
}

fn dot2(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Discrete bilinear form: volume stiffness on `D_h`, symmetric Nitsche
/// terms on the Dirichlet interface, normal-derivative stabilization on the
/// Neumann interface and ghost penalty on facets of cut elements.
pub fn assemble_stiffness(
    mesh: &BackgroundMesh,
    topo: &CutTopology,
    space: &P1Space,
    params: &PenaltyParams,
) -> Result<CsrMatrix, GeometryError> {
    let h = space.h();
    let mut t = Vec::with_capacity(9 * space.active_elements().len());
    for &e in topo.active_elements() {
        let dofs = space.element_dofs(mesh, e);
        let tri = mesh.triangle_points(e);
        let g = basis_gradients(&tri);
        let area = topo.interior_area(mesh, e);
        for i in 0..3 {
            for j in 0..3 {
                t.push((dofs[i], dofs[j], area * dot2(g[i], g[j])));
            }
        }
        if topo.element_class(e) != ElementClass::Cut {
            continue;
        }
        let cell = topo.cut_cell(e).expect("cut element has a cut cell");
        let n = cell.decomposition.normal;
        let dn = g.map(|gi| dot2(n, gi));
        let neumann = topo.neumann_segments().binary_search(&e).is_ok();
        for (p, w, _) in interface_quadrature(topo, e, params.quadrature_order)? {
            if neumann {
                for i in 0..3 {
                    for j in 0..3 {
                        t.push((dofs[i], dofs[j], w * params.gamma_n * h * dn[i] * dn[j]));
                    }
                }
            } else {
                let lam = barycentric(&tri, p);
                for i in 0..3 {
                    for j in 0..3 {
                        let v = -dn[j] * lam[i] - dn[i] * lam[j] + params.gamma_d / h * lam[i] * lam[j];
                        t.push((dofs[i], dofs[j], w * v));
                    }
                }
            }
        }
    }
    for &f in topo.ghost_facets() {
        let (dofs, jumps) = facet_normal_jumps(mesh, space, f);
        let scale = params.gamma_1 * h * mesh.facet_length(f);
        for i in 0..dofs.len() {
            for j in 0..dofs.len() {
                t.push((dofs[i], dofs[j], scale * jumps[i] * jumps[j]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(space.num_dofs(), space.num_dofs(), &t).expect("dofs are in range"))
}

/// Dofs of the two elements adjacent to interior facet `f` and the jumps
/// `n . (grad psi|_left - grad psi|_right)` of their basis functions.
pub fn facet_normal_jumps(mesh: &BackgroundMesh, space: &P1Space, f: usize) -> (Vec<usize>, Vec<f64>) {
    let facet = mesh.facets()[f];
    let right = facet.right.expect("ghost facets are interior");
    let n = mesh.facet_normal(f);
    let mut dofs: Vec<usize> = Vec::with_capacity(4);
    let mut jumps: Vec<f64> = Vec::with_capacity(4);
    for (e, sign) in [(facet.left, 1.0), (right, -1.0)] {
        let g = basis_gradients(&mesh.triangle_points(e));
        for (k, d) in space.element_dofs(mesh, e).into_iter().enumerate() {
            let v = sign * dot2(n, g[k]);
            match dofs.iter().position(|&x| x == d) {
                Some(i) => jumps[i] += v,
                None => {
                    dofs.push(d);
                    jumps.push(v);
                }
            }
        }
    }
    (dofs, jumps)
}

/// `L2(D_h)` mass matrix.
pub fn assemble_mass(
    mesh: &BackgroundMesh,
    topo: &CutTopology,
    space: &P1Space,
    params: &PenaltyParams,
) -> Result<CsrMatrix, GeometryError> {
    let mut t = Vec::with_capacity(9 * space.active_elements().len());
    for &e in topo.active_elements() {
        let dofs = space.element_dofs(mesh, e);
        let tri = mesh.triangle_points(e);
        if topo.element_class(e) == ElementClass::Inside {
            let a = mesh.area(e) / 12.0;
            for i in 0..3 {
                for j in 0..3 {
                    t.push((dofs[i], dofs[j], if i == j { 2.0 * a } else { a }));
                }
            }
            continue;
        }
        for (p, w) in volume_quadrature(mesh, topo, e, params.quadrature_order.max(2))? {
            let lam = barycentric(&tri, p);
            for i in 0..3 {
                for j in 0..3 {
                    t.push((dofs[i], dofs[j], w * lam[i] * lam[j]));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(space.num_dofs(), space.num_dofs(), &t).expect("dofs are in range"))
}

/// `(f, psi_i) + <g_D, gamma_D / h psi_i - n . grad psi_i>_{Gamma_D}
/// + <g_N, psi_i + gamma_N h n . grad psi_i>_{Gamma_N}`.
pub fn assemble_load(
    mesh: &BackgroundMesh,
    topo: &CutTopology,
    space: &P1Space,
    params: &PenaltyParams,
    f: ScalarFn,
    g_d: ScalarFn,
    g_n: ScalarFn,
) -> Result<Vec<f64>, GeometryError> {
    let h = space.h();
    let mut d = project(mesh, topo, space, params, f)?;
    for &e in topo.cut_elements() {
        let dofs = space.element_dofs(mesh, e);
        let tri = mesh.triangle_points(e);
        let g = basis_gradients(&tri);
        let neumann = topo.neumann_segments().binary_search(&e).is_ok();
        for (p, w, n) in interface_quadrature(topo, e, params.quadrature_order)? {
            let lam = barycentric(&tri, p);
            for k in 0..3 {
                let dn = dot2(n, g[k]);
                d[dofs[k]] += if neumann {
                    w * g_n(p) * (lam[k] + params.gamma_n * h * dn)
                } else {
                    w * g_d(p) * (params.gamma_d / h * lam[k] - dn)
                };
            }
        }
    }
    Ok(d)
}

/// `-(y_d, psi_i)`.
pub fn assemble_target(
    mesh: &BackgroundMesh,
    topo: &CutTopology,
    space: &P1Space,
    params: &PenaltyParams,
    y_d: ScalarFn,
) -> Result<Vec<f64>, GeometryError> {
    let mut b = project(mesh, topo, space, params, y_d)?;
    b.iter_mut().for_each(|v| *v = -*v);
    Ok(b)
}

/// `(f, psi_i)` over `D_h`.
pub fn project(
    mesh: &BackgroundMesh,
    topo: &CutTopology,
    space: &P1Space,
    params: &PenaltyParams,
    f: ScalarFn,
) -> Result<Vec<f64>, GeometryError> {
    let mut out = vec![0.0; space.num_dofs()];
    for &e in topo.active_elements() {
        let dofs = space.element_dofs(mesh, e);
        let tri = mesh.triangle_points(e);
        for (p, w) in volume_quadrature(mesh, topo, e, params.quadrature_order)? {
            let lam = barycentric(&tri, p);
            let fp = f(p);
            for k in 0..3 {
                out[dofs[k]] += w * fp * lam[k];
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct ErrorNorms {
    pub l2: f64,
    /// Full `H1(D_h)` norm.
    pub h1: f64,
    /// Energy norm with the boundary terms of the bilinear form.
    pub star: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L2,
    H1,
    Star,
}

impl ErrorNorms {
    pub fn get(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L2 => self.l2,
            Norm::H1 => self.h1,
            Norm::Star => self.star,
        }
    }
}

/// Errors between the finite element function `coeffs` and the exact
/// solution with value `u` and gradient `grad_u`, measured on `D_h`.
pub fn measure_error(
    mesh: &BackgroundMesh,
    topo: &CutTopology,
    space: &P1Space,
    params: &PenaltyParams,
    coeffs: &[f64],
    u: ScalarFn,
    grad_u: VectorFn,
) -> Result<ErrorNorms, GeometryError> {
    let order = params.quadrature_order.max(6);
    let h = space.h();
    let (mut l2, mut semi, mut boundary) = (0.0, 0.0, 0.0);
    for &e in topo.active_elements() {
        let dofs = space.element_dofs(mesh, e);
        let tri = mesh.triangle_points(e);
        let g = basis_gradients(&tri);
        let grad_h = [
            (0..3).map(|k| coeffs[dofs[k]] * g[k][0]).sum::<f64>(),
            (0..3).map(|k| coeffs[dofs[k]] * g[k][1]).sum::<f64>(),
        ];
        let value = |p: Point| {
            let lam = barycentric(&tri, p);
            (0..3).map(|k| lam[k] * coeffs[dofs[k]]).sum::<f64>()
        };
        for (p, w) in volume_quadrature(mesh, topo, e, order)? {
            let ev = u(p) - value(p);
            let gu = grad_u(p);
            let eg = [gu[0] - grad_h[0], gu[1] - grad_h[1]];
            l2 += w * ev * ev;
            semi += w * dot2(eg, eg);
        }
        if topo.element_class(e) != ElementClass::Cut {
            continue;
        }
        let neumann = topo.neumann_segments().binary_search(&e).is_ok();
        for (p, w, n) in interface_quadrature(topo, e, order)? {
            if neumann {
                let gu = grad_u(p);
                let dn = dot2(n, [gu[0] - grad_h[0], gu[1] - grad_h[1]]);
                boundary += w * h * dn * dn;
            } else {
                let ev = u(p) - value(p);
                boundary += w * params.gamma_d / h * ev * ev;
            }
        }
    }
    Ok(ErrorNorms {
        l2: l2.sqrt(),
        h1: (l2 + semi).sqrt(),
        star: (semi + boundary).sqrt(),
    })
}

/// Everything the control layer needs for one mesh level.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub space: P1Space,
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub load: Vec<f64>,
    pub target: Vec<f64>,
}

/// Data entering the right-hand sides.
pub struct SourceTerms<'a> {
    pub f: ScalarFn<'a>,
    pub g_d: ScalarFn<'a>,
    pub g_n: ScalarFn<'a>,
    pub y_d: ScalarFn<'a>,
}

pub fn assemble_system(
    mesh: &BackgroundMesh,
    topo: &CutTopology,
    params: &PenaltyParams,
    sources: &SourceTerms,
) -> Result<AssembledSystem, GeometryError> {
    let space = P1Space::new(mesh, topo);
    let stiffness = assemble_stiffness(mesh, topo, &space, params)?;
    let mass = assemble_mass(mesh, topo, &space, params)?;
    let load = assemble_load(mesh, topo, &space, params, sources.f, sources.g_d, sources.g_n)?;
    let target = assemble_target(mesh, topo, &space, params, sources.y_d)?;
    Ok(AssembledSystem {
        space,
        stiffness,
        mass,
        load,
        target,
    })
}
