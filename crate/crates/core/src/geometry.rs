//! Level-set geometries on a background mesh.
//!
//! The physical domain is `{phi < 0}`. Only vertex values of `phi` are used
//! for the discrete geometry: the interface is the zero set of the piecewise
//! linear interpolant `phi_h`, so every cut element carries exactly one
//! straight interface segment.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::GeometryError;
use crate::mesh::{dist, signed_area, BackgroundMesh, Point};
use crate::quadrature::{GaussLegendre, TriangleRule};

/// Default polynomial degree for volume and interface quadrature.
pub const DEFAULT_QUADRATURE_ORDER: usize = 4;

pub type RegionPredicate = Arc<dyn Fn(Point) -> bool + Send + Sync>;

/// Parameterized level-set function, negative inside the domain.
#[derive(Clone)]
pub enum LevelSet {
    /// `|x - center|^2 - radius^2`.
    Circle { center: Point, radius: f64 },
    /// Exhaust-gasket shape with parameters `(omega_1, omega_2)`.
    Gasket { omega: [f64; 2] },
    /// `normal . x + offset`.
    Affine { normal: Point, offset: f64 },
    Custom(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Circle { center, radius } => f
                .debug_struct("Circle")
                .field("center", center)
                .field("radius", radius)
                .finish(),
            Self::Gasket { omega } => f.debug_struct("Gasket").field("omega", omega).finish(),
            Self::Affine { normal, offset } => f
                .debug_struct("Affine")
                .field("normal", normal)
                .field("offset", offset)
                .finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl LevelSet {
    pub fn unit_circle() -> Self {
        Self::Circle {
            center: [0.0, 0.0],
            radius: 1.0,
        }
    }

    pub fn gasket(omega_1: f64, omega_2: f64) -> Self {
        Self::Gasket {
            omega: [omega_1, omega_2],
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        let [x, y] = p;
        match self {
            Self::Circle { center, radius } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                dx * dx + dy * dy - radius * radius
            }
            Self::Gasket { omega } => {
                let ring = x * x + y * y - 1.0;
                let hole_right = (x - 1.5) * (x - 1.5) + y * y - 0.02;
                let hole_left = (x + 1.5) * (x + 1.5) + y * y - 0.02;
                // cos(arctan(5y/x)) written without the quotient
                let r = (x * x + 25.0 * y * y).sqrt();
                let cos_atan = if r > 0.0 { x.abs() / r } else { 0.0 };
                let lens = (4.0 / 9.0) * x * x + 0.0625 * y * y - 1.0 / omega[0] - omega[1] * cos_atan;
                ring * hole_right * hole_left * lens
            }
            Self::Affine { normal, offset } => normal[0] * x + normal[1] * y + offset,
            Self::Custom(f) => f(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum ElementClass {
    Inside,
    Outside,
    Cut,
}

impl ElementClass {
    pub fn name(self) -> &'static str {
        match self {
            Self::Inside => "INSIDE",
            Self::Outside => "OUTSIDE",
            Self::Cut => "CUT",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

/// Geometry of `K ∩ {phi_h < 0}` for one cut element.
#[derive(Clone, Debug, PartialEq)]
pub struct CutDecomposition {
    /// Positively oriented triangles covering the interior part (1 or 2).
    pub interior: Vec<[Point; 3]>,
    /// Interface segment endpoints.
    pub segment: [Point; 2],
    /// Unit normal `grad phi_h / |grad phi_h|`, pointing out of the domain.
    pub normal: Point,
}

#[derive(Clone, Debug)]
pub struct CutCell {
    pub decomposition: CutDecomposition,
    /// Facets of the element carrying the two segment endpoints.
    pub segment_facets: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Clone)]
pub struct ClassifyOptions {
    /// Interior samples of the exact level set per edge used to detect
    /// edges crossed more than once; 0 disables the check.
    pub crossing_samples: usize,
    /// Fail on multiply crossed edges instead of recording them.
    pub strict: bool,
    /// Segments whose midpoint satisfies the predicate are Neumann.
    pub neumann_region: Option<RegionPredicate>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            crossing_samples: 3,
            strict: false,
            neumann_region: None,
        }
    }
}

impl fmt::Debug for ClassifyOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClassifyOptions")
            .field("crossing_samples", &self.crossing_samples)
            .field("strict", &self.strict)
            .field("neumann_region", &self.neumann_region.is_some())
            .finish()
    }
}

impl ClassifyOptions {
    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct CutTopology {
    element_class: Vec<ElementClass>,
    active_elements: Vec<usize>,
    cut_cells: HashMap<usize, CutCell>,
    cut_elements: Vec<usize>,
    ghost_facets: Vec<usize>,
    dirichlet_segments: Vec<usize>,
    neumann_segments: Vec<usize>,
    vertex_values: Vec<f64>,
    unsupported_cut_elements: Vec<usize>,
    multiply_crossed_facets: Vec<usize>,
}

/// Tags every element of `mesh` against `{ls < 0}` with default options.
pub fn classify_elements(mesh: &BackgroundMesh, ls: &LevelSet) -> Result<CutTopology, GeometryError> {
    classify_elements_with(mesh, ls, &ClassifyOptions::default())
}

pub fn classify_elements_with(
    mesh: &BackgroundMesh,
    ls: &LevelSet,
    options: &ClassifyOptions,
) -> Result<CutTopology, GeometryError> {
    let snap = 1e-12 * mesh.bbox().diameter();
    let mut vertex_values = Vec::with_capacity(mesh.num_vertices());
    for (i, &p) in mesh.vertices().iter().enumerate() {
        let v = ls.eval(p);
        if !v.is_finite() {
            return Err(GeometryError::NonFiniteLevelSet { vertex: i, point: p });
        }
        vertex_values.push(if v.abs() < snap { -snap } else { v });
    }

    let multiply_crossed_facets = if options.crossing_samples > 0 {
        multiply_crossed_facets(mesh, ls, &vertex_values, options.crossing_samples, snap)
    } else {
        Vec::new()
    };
    if let Some(&f) = multiply_crossed_facets.first() {
        if options.strict {
            return Err(GeometryError::MultipleCrossings {
                element: mesh.facets()[f].left,
                facet: f,
            });
        }
        log::warn!(
            "{} edges are crossed more than once by the interface; the discrete geometry misses these excursions",
            multiply_crossed_facets.len()
        );
    }

    let mut element_class = Vec::with_capacity(mesh.num_triangles());
    let mut cut_cells = HashMap::new();
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let vals = [vertex_values[tri[0]], vertex_values[tri[1]], vertex_values[tri[2]]];
        let negatives = vals.iter().filter(|v| **v < 0.0).count();
        let class = match negatives {
            3 => ElementClass::Inside,
            0 => ElementClass::Outside,
            _ => ElementClass::Cut,
        };
        if class == ElementClass::Cut {
            let decomposition = cut_element_decomposition(&mesh.triangle_points(e), vals)?;
            let ef = mesh.element_facets(e);
            let neg = vals.map(|v| v < 0.0);
            let lone = (0..3).find(|&k| neg[k] != neg[(k + 1) % 3] && neg[k] != neg[(k + 2) % 3]).unwrap();
            // segment[0] lies on the edge lone..lone+1, which is opposite lone+2
            let segment_facets = [ef[(lone + 2) % 3], ef[(lone + 1) % 3]];
            let [a, b] = decomposition.segment;
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let tag = match &options.neumann_region {
                Some(pred) if pred(mid) => BoundaryTag::Neumann,
                _ => BoundaryTag::Dirichlet,
            };
            cut_cells.insert(
                e,
                CutCell {
                    decomposition,
                    segment_facets,
                    tag,
                },
            );
        }
        element_class.push(class);
    }

    let active_elements: Vec<usize> = (0..element_class.len())
        .filter(|&e| element_class[e] != ElementClass::Outside)
        .collect();
    if active_elements.is_empty() {
        return Err(GeometryError::EmptyDomain);
    }
    let mut cut_elements: Vec<usize> = cut_cells.keys().copied().collect();
    cut_elements.sort_unstable();

    let ghost_facets = mesh
        .facets()
        .iter()
        .enumerate()
        .filter_map(|(f, facet)| {
            let right = facet.right?;
            let (cl, cr) = (element_class[facet.left], element_class[right]);
            let both_active = cl != ElementClass::Outside && cr != ElementClass::Outside;
            let any_cut = cl == ElementClass::Cut || cr == ElementClass::Cut;
            (both_active && any_cut).then_some(f)
        })
        .collect();

    let (mut dirichlet_segments, mut neumann_segments) = (Vec::new(), Vec::new());
    for &e in &cut_elements {
        match cut_cells[&e].tag {
            BoundaryTag::Dirichlet => dirichlet_segments.push(e),
            BoundaryTag::Neumann => neumann_segments.push(e),
        }
    }

    let unsupported_cut_elements = unsupported_cut_elements(mesh, &element_class, &cut_elements);
    if !unsupported_cut_elements.is_empty() {
        log::warn!(
            "{} cut elements have no uncut active element sharing a vertex",
            unsupported_cut_elements.len()
        );
    }

    Ok(CutTopology {
        element_class,
        active_elements,
        cut_cells,
        cut_elements,
        ghost_facets,
        dirichlet_segments,
        neumann_segments,
        vertex_values,
        unsupported_cut_elements,
        multiply_crossed_facets,
    })
}

impl CutTopology {
    pub fn element_class(&self, e: usize) -> ElementClass {
        self.element_class[e]
    }

    pub fn classes(&self) -> &[ElementClass] {
        &self.element_class
    }

    pub fn is_active(&self, e: usize) -> bool {
        self.element_class[e] != ElementClass::Outside
    }

    /// Elements intersecting the discrete domain, ascending.
    pub fn active_elements(&self) -> &[usize] {
        &self.active_elements
    }

    /// Cut elements, ascending.
    pub fn cut_elements(&self) -> &[usize] {
        &self.cut_elements
    }

    pub fn cut_cell(&self, e: usize) -> Option<&CutCell> {
        self.cut_cells.get(&e)
    }

    /// Interior facets with both neighbors active and at least one cut.
    pub fn ghost_facets(&self) -> &[usize] {
        &self.ghost_facets
    }

    /// Cut elements whose interface segment carries a Dirichlet condition.
    pub fn dirichlet_segments(&self) -> &[usize] {
        &self.dirichlet_segments
    }

    pub fn neumann_segments(&self) -> &[usize] {
        &self.neumann_segments
    }

    /// Level-set values at mesh vertices after the zero snap.
    pub fn vertex_values(&self) -> &[f64] {
        &self.vertex_values
    }

    /// Cut elements without an uncut active element sharing a vertex.
    pub fn unsupported_cut_elements(&self) -> &[usize] {
        &self.unsupported_cut_elements
    }

    /// Edges where sampling the exact level set found more than one sign
    /// change.
    pub fn multiply_crossed_facets(&self) -> &[usize] {
        &self.multiply_crossed_facets
    }

    /// Area of `{phi_h < 0}` inside element `e`.
    pub fn interior_area(&self, mesh: &BackgroundMesh, e: usize) -> f64 {
        match self.element_class[e] {
            ElementClass::Inside => mesh.area(e),
            ElementClass::Outside => 0.0,
            ElementClass::Cut => self.cut_cells[&e]
                .decomposition
                .interior
                .iter()
                .map(|t| signed_area(t[0], t[1], t[2]))
                .sum(),
        }
    }

    /// Area of the discrete domain `{phi_h < 0}`.
    pub fn domain_area(&self, mesh: &BackgroundMesh) -> f64 {
        self.active_elements.iter().map(|&e| self.interior_area(mesh, e)).sum()
    }

    /// Length of the discrete interface.
    pub fn interface_length(&self) -> f64 {
        self.cut_elements
            .iter()
            .map(|e| {
                let [a, b] = self.cut_cells[e].decomposition.segment;
                dist(a, b)
            })
            .sum()
    }

    /// Plain-text dump: one `element class` line per element, then one
    /// line per interface polyline (`x0 y0 x1 y1 ...`).
    pub fn to_text(&self, mesh: &BackgroundMesh) -> String {
        let mut out = String::new();
        writeln!(out, "classes {}", self.element_class.len()).unwrap();
        for (e, c) in self.element_class.iter().enumerate() {
            writeln!(out, "{e} {}", c.name()).unwrap();
        }
        let lines = self.interface_polylines(mesh);
        writeln!(out, "polylines {}", lines.len()).unwrap();
        for line in &lines {
            let coords: Vec<String> = line
                .points
                .iter()
                .map(|p| format!("{:.17e} {:.17e}", p[0], p[1]))
                .collect();
            writeln!(out, "{} {}", if line.closed { "closed" } else { "open" }, coords.join(" "))
                .unwrap();
        }
        out
    }

    /// Chains interface segments into polylines through shared edge
    /// crossings. Closed curves repeat their first point at the end.
    pub fn interface_polylines(&self, mesh: &BackgroundMesh) -> Vec<Polyline> {
        // crossing facet -> cut elements using it
        let mut by_facet: HashMap<usize, Vec<usize>> = HashMap::new();
        for &e in &self.cut_elements {
            for f in self.cut_cells[&e].segment_facets {
                by_facet.entry(f).or_default().push(e);
            }
        }
        let point_on = |e: usize, f: usize| -> Point {
            let cell = &self.cut_cells[&e];
            let k = if cell.segment_facets[0] == f { 0 } else { 1 };
            cell.decomposition.segment[k]
        };
        let other_facet = |e: usize, f: usize| -> usize {
            let sf = self.cut_cells[&e].segment_facets;
            if sf[0] == f {
                sf[1]
            } else {
                sf[0]
            }
        };
        let next_element = |e: usize, f: usize| -> Option<usize> {
            by_facet[&f].iter().copied().find(|&o| o != e)
        };
        let mut visited = vec![false; mesh.num_triangles()];
        let mut lines = Vec::new();
        for &start in &self.cut_elements {
            if visited[start] {
                continue;
            }
            // walk backwards to an open end if there is one
            let mut e = start;
            let mut f = self.cut_cells[&start].segment_facets[0];
            loop {
                match next_element(e, f) {
                    Some(prev) if prev != start => {
                        f = other_facet(prev, f);
                        e = prev;
                    }
                    _ => break,
                }
            }
            let (first_e, first_f) = (e, f);
            let mut points = vec![point_on(e, f)];
            let mut closed = false;
            loop {
                visited[e] = true;
                let out = other_facet(e, f);
                points.push(point_on(e, out));
                match next_element(e, out) {
                    Some(n) if n == first_e && out == first_f => {
                        closed = true;
                        break;
                    }
                    Some(n) if !visited[n] => {
                        e = n;
                        f = out;
                    }
                    _ => break,
                }
            }
            lines.push(Polyline { points, closed });
        }
        lines
    }
}

#[derive(Clone, Debug)]
pub struct Polyline {
    pub points: Vec<Point>,
    pub closed: bool,
}

/// Splits triangle `tri` with vertex values `vals` (mixed signs) along the
/// zero set of their linear interpolant.
pub fn cut_element_decomposition(
    tri: &[Point; 3],
    vals: [f64; 3],
) -> Result<CutDecomposition, GeometryError> {
    let neg = vals.map(|v| v < 0.0);
    let negatives = neg.iter().filter(|&&n| n).count();
    if negatives == 0 || negatives == 3 || vals.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NotCut(vals));
    }
    // the vertex whose sign differs from the other two
    let lone = (0..3).find(|&k| neg[k] != neg[(k + 1) % 3] && neg[k] != neg[(k + 2) % 3]).unwrap();
    let (b, c) = ((lone + 1) % 3, (lone + 2) % 3);
    let pb = edge_crossing(tri[lone], vals[lone], tri[b], vals[b]);
    let pc = edge_crossing(tri[lone], vals[lone], tri[c], vals[c]);

    let interior = if neg[lone] {
        vec![oriented([tri[lone], pb, pc])]
    } else {
        vec![oriented([pb, tri[b], tri[c]]), oriented([pb, tri[c], pc])]
    };

    let grad = linear_gradient(tri, vals);
    let norm = grad[0].hypot(grad[1]);
    Ok(CutDecomposition {
        interior,
        segment: [pb, pc],
        normal: [grad[0] / norm, grad[1] / norm],
    })
}

/// Quadrature points and weights for `∫_{K ∩ D_h}` on active element `e`.
pub fn volume_quadrature(
    mesh: &BackgroundMesh,
    topo: &CutTopology,
    e: usize,
    order: usize,
) -> Result<Vec<(Point, f64)>, GeometryError> {
    let rule = TriangleRule::with_degree(order);
    match topo.element_class(e) {
        ElementClass::Inside => Ok(rule.map(&mesh.triangle_points(e)).collect()),
        ElementClass::Cut => Ok(topo.cut_cells[&e]
            .decomposition
            .interior
            .iter()
            .flat_map(|t| rule.map(t).collect::<Vec<_>>())
            .collect()),
        ElementClass::Outside => Err(GeometryError::WrongClass {
            element: e,
            class: "OUTSIDE",
            expected: "active",
        }),
    }
}

/// Quadrature points, weights and outward normals on the interface segment
/// of cut element `e`.
pub fn interface_quadrature(
    topo: &CutTopology,
    e: usize,
    order: usize,
) -> Result<Vec<(Point, f64, Point)>, GeometryError> {
    let cell = topo.cut_cell(e).ok_or(GeometryError::WrongClass {
        element: e,
        class: topo.element_class(e).name(),
        expected: "CUT",
    })?;
    let [a, b] = cell.decomposition.segment;
    let n = cell.decomposition.normal;
    Ok(GaussLegendre::with_degree(order)
        .map_segment(a, b)
        .map(|(p, w)| (p, w, n))
        .collect())
}

/// Gradient of the linear function with values `vals` at the vertices.
pub fn linear_gradient(tri: &[Point; 3], vals: [f64; 3]) -> Point {
    let [a, b, c] = *tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let (d1, d2) = (vals[1] - vals[0], vals[2] - vals[0]);
    [
        (d1 * (c[1] - a[1]) - d2 * (b[1] - a[1])) / det,
        (d2 * (b[0] - a[0]) - d1 * (c[0] - a[0])) / det,
    ]
}

/// Zero of the linear interpolant on the edge `pa -> pb`. Evaluated in a
/// fixed vertex order so neighbors sharing the edge get identical points.
fn edge_crossing(pa: Point, va: f64, pb: Point, vb: f64) -> Point {
    let (pa, va, pb, vb) = if (pa[0], pa[1]) <= (pb[0], pb[1]) {
        (pa, va, pb, vb)
    } else {
        (pb, vb, pa, va)
    };
    let t = va / (va - vb);
    [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
}

fn oriented(t: [Point; 3]) -> [Point; 3] {
    if signed_area(t[0], t[1], t[2]) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

fn multiply_crossed_facets(
    mesh: &BackgroundMesh,
    ls: &LevelSet,
    vertex_values: &[f64],
    samples: usize,
    snap: f64,
) -> Vec<usize> {
    let mut found = Vec::new();
    for (f, facet) in mesh.facets().iter().enumerate() {
        let [a, b] = facet.vertices;
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let mut prev = vertex_values[a] < 0.0;
        let mut changes = 0;
        for k in 1..=samples + 1 {
            let inside = if k == samples + 1 {
                vertex_values[b] < 0.0
            } else {
                let t = k as f64 / (samples + 1) as f64;
                ls.eval([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]) < snap
            };
            if inside != prev {
                changes += 1;
            }
            prev = inside;
        }
        if changes > 1 {
            found.push(f);
        }
    }
    found
}

fn unsupported_cut_elements(
    mesh: &BackgroundMesh,
    classes: &[ElementClass],
    cut_elements: &[usize],
) -> Vec<usize> {
    let mut inside_at_vertex = vec![false; mesh.num_vertices()];
    for (e, tri) in mesh.triangles().iter().enumerate() {
        if classes[e] == ElementClass::Inside {
            for &v in tri {
                inside_at_vertex[v] = true;
            }
        }
    }
    cut_elements
        .iter()
        .copied()
        .filter(|&e| !mesh.triangles()[e].iter().any(|&v| inside_at_vertex[v]))
        .collect()
}
