//! Reference quadrature rules: symmetric rules on triangles (Dunavant
//! points) and Gauss-Legendre rules on intervals.

use crate::mesh::{signed_area, Point};

/// Quadrature rule on a triangle in barycentric coordinates; weights sum to 1.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TriangleRule {
    /// Smallest tabulated symmetric rule exact for polynomials of total
    /// degree `degree`. Degrees above 8 fall back to a collapsed Gauss
    /// product rule.
    pub fn with_degree(degree: usize) -> Self {
        match degree {
            0 | 1 => Self::from_orbits(1, &[Orbit::Center(1.0)]),
            2 => Self::from_orbits(2, &[Orbit::Edge(1.0 / 6.0, 1.0 / 3.0)]),
            3 | 4 => Self::from_orbits(
                4,
                &[
                    Orbit::Edge(0.445_948_490_915_965, 0.223_381_589_678_011),
                    Orbit::Edge(0.091_576_213_509_771, 0.109_951_743_655_322),
                ],
            ),
            5 => Self::from_orbits(
                5,
                &[
                    Orbit::Center(0.225),
                    Orbit::Edge(0.470_142_064_105_115, 0.132_394_152_788_506),
                    Orbit::Edge(0.101_286_507_323_456, 0.125_939_180_544_827),
                ],
            ),
            6 => Self::from_orbits(
                6,
                &[
                    Orbit::Edge(0.249_286_745_170_910, 0.116_786_275_726_379),
                    Orbit::Edge(0.063_089_014_491_502, 0.050_844_906_370_207),
                    Orbit::General(
                        0.053_145_049_844_817,
                        0.310_352_451_033_784,
                        0.082_851_075_618_374,
                    ),
                ],
            ),
            7 | 8 => Self::from_orbits(
                8,
                &[
                    Orbit::Center(0.144_315_607_677_787),
                    Orbit::Edge(0.459_292_588_292_723, 0.095_091_634_267_285),
                    Orbit::Edge(0.170_569_307_751_760, 0.103_217_370_534_718),
                    Orbit::Edge(0.050_547_228_317_031, 0.032_458_497_623_198),
                    Orbit::General(
                        0.008_394_777_409_958,
                        0.263_112_829_634_638,
                        0.027_230_314_174_435,
                    ),
                ],
            ),
            _ => Self::collapsed_gauss(degree),
        }
    }

    fn from_orbits(degree: usize, orbits: &[Orbit]) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for orbit in orbits {
            match *orbit {
                Orbit::Center(w) => {
                    points.push([1.0 / 3.0; 3]);
                    weights.push(w);
                }
                Orbit::Edge(a, w) => {
                    let b = 1.0 - 2.0 * a;
                    for p in [[a, a, b], [a, b, a], [b, a, a]] {
                        points.push(p);
                        weights.push(w);
                    }
                }
                Orbit::General(a, b, w) => {
                    let c = 1.0 - a - b;
                    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                        points.push(p);
                        weights.push(w);
                    }
                }
            }
        }
        // tabulated weights carry 15 digits; renormalize so measures are exact
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self {
            points,
            weights,
            degree,
        }
    }

    /// Duffy-collapsed tensor Gauss rule, exact for total degree `degree`.
    pub fn collapsed_gauss(degree: usize) -> Self {
        let n = degree / 2 + 2;
        let g = GaussLegendre::new(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&s, &ws) in g.nodes.iter().zip(&g.weights) {
            for (&t, &wt) in g.nodes.iter().zip(&g.weights) {
                // map [0,1]^2 -> triangle: x = s, y = t (1 - s)
                let (s, t) = (0.5 * (s + 1.0), 0.5 * (t + 1.0));
                let x = s;
                let y = t * (1.0 - s);
                points.push([1.0 - x - y, x, y]);
                // jacobian (1 - s) and the 1/4 from the interval maps;
                // reference area is 1/2, normalize to weights summing to 1
                weights.push(2.0 * 0.25 * ws * wt * (1.0 - s));
            }
        }
        Self {
            points,
            weights,
            degree,
        }
    }

    /// Physical points and weights on the triangle `tri`; weights sum to
    /// its (unsigned) area.
    pub fn map(&self, tri: &[Point; 3]) -> impl Iterator<Item = (Point, f64)> + '_ {
        let area = signed_area(tri[0], tri[1], tri[2]).abs();
        let tri = *tri;
        self.points.iter().zip(&self.weights).map(move |(l, &w)| {
            let x = l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0];
            let y = l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1];
            ([x, y], w * area)
        })
    }
}

enum Orbit {
    Center(f64),
    /// (a, a, 1 - 2a) and permutations.
    Edge(f64, f64),
    /// (a, b, 1 - a - b) and permutations.
    General(f64, f64, f64),
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Smallest rule exact for polynomials of degree `degree`.
    pub fn with_degree(degree: usize) -> Self {
        Self::new(degree / 2 + 1)
    }

    /// Points and weights on the segment `a -> b`; weights sum to its length.
    pub fn map_segment(&self, a: Point, b: Point) -> impl Iterator<Item = (Point, f64)> + '_ {
        let half = 0.5 * (b[0] - a[0]).hypot(b[1] - a[1]);
        self.nodes.iter().zip(&self.weights).map(move |(&s, &w)| {
            let t = 0.5 * (s + 1.0);
            ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], w * half)
        })
    }
}

/// Legendre polynomial P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
