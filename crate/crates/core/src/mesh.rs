//! Structured triangulations of a rectangular hold-all box and their nested
//! red refinements.
//!
//! Meshes are immutable once built. Triangles are stored counterclockwise and
//! every edge is stored once as a [`Facet`] whose `left` element has the lower
//! index of the two incident triangles.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::MeshError;

/// A point (or vector) in the plane.
pub type Point = [f64; 2];

/// Axis-aligned rectangle `[min[0], max[0]] x [min[1], max[1]]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn new(min: Point, max: Point) -> Result<Self, MeshError> {
        let ok = min.iter().chain(max.iter()).all(|v| v.is_finite())
            && max[0] > min[0]
            && max[1] > min[1];
        if !ok {
            return Err(MeshError::DegenerateBox { min, max });
        }
        Ok(Self { min, max })
    }

    /// The square `[-half, half]^2`.
    pub fn centered_square(half: f64) -> Result<Self, MeshError> {
        Self::new([-half, -half], [half, half])
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Point) -> bool {
        let tol = 1e-12 * self.diameter();
        p[0] >= self.min[0] - tol
            && p[0] <= self.max[0] + tol
            && p[1] >= self.min[1] - tol
            && p[1] <= self.max[1] + tol
    }
}

/// An edge of the triangulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Facet {
    /// Endpoints, lower vertex index first.
    pub vertices: [usize; 2],
    /// Incident triangle with the lower index.
    pub left: usize,
    /// The other incident triangle, `None` on the box boundary.
    pub right: Option<usize>,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

/// Where a vertex of a refined mesh comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexParent {
    /// Same position as this vertex of the coarse mesh.
    Vertex(usize),
    /// Midpoint of the coarse edge between these two vertices.
    Midpoint(usize, usize),
}

/// Output of one red refinement step.
#[derive(Clone, Debug)]
pub struct RefinementMap {
    /// One entry per fine vertex.
    pub vertices: Vec<VertexParent>,
    /// Coarse triangle containing each fine triangle.
    pub elements: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct BackgroundMesh {
    bbox: BoundingBox,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    facets: Vec<Facet>,
    /// `element_facets[e][k]` is the facet opposite local vertex `k`.
    element_facets: Vec<[usize; 3]>,
    level: usize,
}

impl BackgroundMesh {
    /// Builds a mesh from raw connectivity. Triangles with clockwise
    /// orientation are flipped; degenerate triangles and non-conforming
    /// connectivity are rejected.
    pub fn from_parts(
        bbox: BoundingBox,
        vertices: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        level: usize,
    ) -> Result<Self, MeshError> {
        for (i, v) in vertices.iter().enumerate() {
            if !bbox.contains(*v) {
                return Err(MeshError::VertexOutsideBox { vertex: i });
            }
        }
        for (e, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(MeshError::InvalidConnectivity(format!(
                    "triangle {e} references a missing vertex"
                )));
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a.abs() <= f64::EPSILON * bbox.width() * bbox.height() {
                return Err(MeshError::InvalidConnectivity(format!(
                    "triangle {e} has zero area"
                )));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }
        let (facets, element_facets) = build_facets(&triangles)?;
        Ok(Self {
            bbox,
            vertices,
            triangles,
            facets,
            element_facets,
            level,
        })
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Facets of element `e`, the k-th one opposite local vertex k.
    pub fn element_facets(&self, e: usize) -> [usize; 3] {
        self.element_facets[e]
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, e: usize) -> [Point; 3] {
        let t = self.triangles[e];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn area(&self, e: usize) -> f64 {
        let [a, b, c] = self.triangle_points(e);
        signed_area(a, b, c)
    }

    pub fn diameter(&self, e: usize) -> f64 {
        let [a, b, c] = self.triangle_points(e);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Global mesh size: the largest element diameter.
    pub fn h_max(&self) -> f64 {
        (0..self.num_triangles())
            .map(|e| self.diameter(e))
            .fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        (0..self.num_triangles())
            .map(|e| self.diameter(e))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let [a, b] = self.facets[f].vertices;
        dist(self.vertices[a], self.vertices[b])
    }

    /// Unit normal of facet `f`, pointing out of its lower-indexed element
    /// (`left`) and, for interior facets, into `right`.
    pub fn facet_normal(&self, f: usize) -> Point {
        let facet = &self.facets[f];
        let [a, b] = facet.vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = dist(pa, pb);
        let t = [(pb[0] - pa[0]) / len, (pb[1] - pa[1]) / len];
        let mut n = [t[1], -t[0]];
        // orient away from the vertex of `left` that is not on the facet
        let tri = self.triangles[facet.left];
        let opposite = tri.iter().copied().find(|&v| v != a && v != b).unwrap();
        let po = self.vertices[opposite];
        if n[0] * (po[0] - pa[0]) + n[1] * (po[1] - pa[1]) > 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    /// Plain-text dump: a `vertices` block then a `triangles` block, one
    /// entity per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "vertices {}", self.vertices.len()).unwrap();
        for v in &self.vertices {
            writeln!(out, "{:.17e} {:.17e}", v[0], v[1]).unwrap();
        }
        writeln!(out, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        out
    }
}

/// Structured mesh with `n` subdivisions per axis, each cell split along
/// its lower-left to upper-right diagonal.
pub fn build_structured_mesh(bbox: BoundingBox, n: usize) -> Result<BackgroundMesh, MeshError> {
    build_structured_mesh_xy(bbox, n, n)
}

pub fn build_structured_mesh_xy(
    bbox: BoundingBox,
    nx: usize,
    ny: usize,
) -> Result<BackgroundMesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::ZeroSubdivisions);
    }
    let bbox = BoundingBox::new(bbox.min, bbox.max)?;
    let dx = bbox.width() / nx as f64;
    let dy = bbox.height() / ny as f64;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // pin the last row/column to the box edge exactly
            let x = if i == nx { bbox.max[0] } else { bbox.min[0] + i as f64 * dx };
            let y = if j == ny { bbox.max[1] } else { bbox.min[1] + j as f64 * dy };
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    BackgroundMesh::from_parts(bbox, vertices, triangles, 0)
}

/// One step of red refinement: every triangle is split into four similar
/// children by connecting its edge midpoints.
///
/// Coarse vertices keep their indices; midpoint vertices are appended in
/// facet order. Child `4e + k` of coarse triangle `e` is the corner child at
/// local vertex `k` for `k < 3` and the middle child for `k = 3`.
pub fn refine_uniform(mesh: &BackgroundMesh) -> Result<(BackgroundMesh, RefinementMap), MeshError> {
    let nv = mesh.num_vertices();
    let mut vertices = mesh.vertices.clone();
    let mut parents: Vec<VertexParent> = (0..nv).map(VertexParent::Vertex).collect();
    vertices.reserve(mesh.facets.len());
    for f in &mesh.facets {
        let [a, b] = f.vertices;
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        parents.push(VertexParent::Midpoint(a, b));
    }
    let mut triangles = Vec::with_capacity(4 * mesh.num_triangles());
    let mut element_parent = Vec::with_capacity(4 * mesh.num_triangles());
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let ef = mesh.element_facets[e];
        // midpoint opposite local vertex k
        let m = [nv + ef[0], nv + ef[1], nv + ef[2]];
        let [a, b, c] = *tri;
        // m[2] is on edge ab, m[0] on bc, m[1] on ca
        triangles.push([a, m[2], m[1]]);
        triangles.push([m[2], b, m[0]]);
        triangles.push([m[1], m[0], c]);
        triangles.push([m[2], m[0], m[1]]);
        element_parent.extend_from_slice(&[e; 4]);
    }
    let fine = BackgroundMesh::from_parts(mesh.bbox, vertices, triangles, mesh.level + 1)?;
    Ok((
        fine,
        RefinementMap {
            vertices: parents,
            elements: element_parent,
        },
    ))
}

/// Nested sequence of meshes, coarse to fine.
#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    meshes: Vec<BackgroundMesh>,
    /// `maps[l - 1]` relates `meshes[l]` to `meshes[l - 1]`.
    maps: Vec<RefinementMap>,
}

impl MeshHierarchy {
    /// `base` followed by `refinements` red-refined meshes.
    pub fn new(base: BackgroundMesh, refinements: usize) -> Result<Self, MeshError> {
        let mut meshes = vec![base];
        let mut maps = Vec::with_capacity(refinements);
        for _ in 0..refinements {
            let (fine, map) = refine_uniform(meshes.last().unwrap())?;
            meshes.push(fine);
            maps.push(map);
        }
        Ok(Self { meshes, maps })
    }

    pub fn num_levels(&self) -> usize {
        self.meshes.len()
    }

    pub fn mesh(&self, level: usize) -> &BackgroundMesh {
        &self.meshes[level]
    }

    pub fn meshes(&self) -> &[BackgroundMesh] {
        &self.meshes
    }

    pub fn finest(&self) -> &BackgroundMesh {
        self.meshes.last().unwrap()
    }

    /// Map from `meshes[level]` to `meshes[level - 1]`; `level >= 1`.
    pub fn refinement_map(&self, level: usize) -> &RefinementMap {
        &self.maps[level - 1]
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

type FacetTables = (Vec<Facet>, Vec<[usize; 3]>);

fn build_facets(triangles: &[[usize; 3]]) -> Result<FacetTables, MeshError> {
    let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len() / 2 + 4);
    let mut facets: Vec<Facet> = Vec::with_capacity(3 * triangles.len() / 2 + 4);
    let mut element_facets = vec![[usize::MAX; 3]; triangles.len()];
    for (e, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let key = (a.min(b), a.max(b));
            let f = match index.get(&key) {
                Some(&f) => {
                    let facet = &mut facets[f];
                    if facet.right.is_some() {
                        return Err(MeshError::InvalidConnectivity(format!(
                            "edge {key:?} shared by more than two triangles"
                        )));
                    }
                    facet.right = Some(e);
                    f
                }
                None => {
                    facets.push(Facet {
                        vertices: [key.0, key.1],
                        left: e,
                        right: None,
                    });
                    index.insert(key, facets.len() - 1);
                    facets.len() - 1
                }
            };
            element_facets[e][k] = f;
        }
    }
    Ok((facets, element_facets))
}
