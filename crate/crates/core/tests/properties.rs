use cutfem_core::fem::{assemble_mass, assemble_stiffness, P1Space, PenaltyParams};
use cutfem_core::geometry::{classify_elements, cut_element_decomposition, ElementClass};
use cutfem_core::mesh::{build_structured_mesh_xy, refine_uniform, signed_area, BoundingBox, Point};
use cutfem_core::LevelSet;
use proptest::prelude::*;

fn tri_area(t: &[Point; 3]) -> f64 {
    signed_area(t[0], t[1], t[2])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn red_refinement_preserves_area_and_halves_h(nx in 1usize..7, ny in 1usize..7, w in 0.5f64..4.0) {
        let bbox = BoundingBox::new([-w, -1.0], [w, 1.5]).unwrap();
        let coarse = build_structured_mesh_xy(bbox, nx, ny).unwrap();
        let (fine, map) = refine_uniform(&coarse).unwrap();
        prop_assert_eq!(fine.num_triangles(), 4 * coarse.num_triangles());
        let area = |m: &cutfem_core::BackgroundMesh| (0..m.num_triangles()).map(|e| m.area(e)).sum::<f64>();
        prop_assert!((area(&fine) - area(&coarse)).abs() < 1e-12 * area(&coarse));
        prop_assert!((fine.h_max() - 0.5 * coarse.h_max()).abs() < 1e-12);
        let oriented = (0..fine.num_triangles()).all(|e| tri_area(&fine.triangle_points(e)) > 0.0);
        prop_assert!(oriented);
        prop_assert_eq!(map.vertices.len(), fine.num_vertices());
        // same as the structured mesh with twice the subdivisions
        let direct = build_structured_mesh_xy(bbox, 2 * nx, 2 * ny).unwrap();
        prop_assert_eq!(direct.num_vertices(), fine.num_vertices());
        prop_assert!((direct.h_max() - fine.h_max()).abs() < 1e-12);
    }

    #[test]
    fn cut_decomposition_splits_the_triangle(
        a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0,
        px in 0.1f64..2.0, py in 0.1f64..2.0,
    ) {
        let vals = [a, b, c];
        let neg = vals.iter().filter(|v| **v < 0.0).count();
        prop_assume!(neg == 1 || neg == 2);
        prop_assume!(vals.iter().all(|v| v.abs() > 1e-6));
        let tri = [[0.0, 0.0], [px, 0.0], [0.3, py]];
        let d = cut_element_decomposition(&tri, vals).unwrap();
        let inside: f64 = d.interior.iter().map(tri_area).sum();
        prop_assert!(inside > 0.0 && inside < tri_area(&tri));
        // phi_h vanishes at the segment endpoints
        let grad_phi = |p: Point| {
            let bary = cutfem_core::fem::barycentric(&tri, p);
            bary[0] * a + bary[1] * b + bary[2] * c
        };
        for p in d.segment {
            prop_assert!(grad_phi(p).abs() < 1e-12);
        }
        prop_assert!((d.normal[0].hypot(d.normal[1]) - 1.0).abs() < 1e-12);
        // the interior part is where phi_h is negative
        for t in &d.interior {
            let centroid = [(t[0][0] + t[1][0] + t[2][0]) / 3.0, (t[0][1] + t[1][1] + t[2][1]) / 3.0];
            prop_assert!(grad_phi(centroid) < 0.0);
        }
    }

    #[test]
    fn circle_classification_and_operators(
        cx in -0.3f64..0.3, cy in -0.3f64..0.3, r in 0.6f64..1.1, n in 10usize..18,
    ) {
        let bbox = BoundingBox::new([-1.5, -1.5], [1.5, 1.5]).unwrap();
        let mesh = build_structured_mesh_xy(bbox, n, n).unwrap();
        let ls = LevelSet::Circle { center: [cx, cy], radius: r };
        let topo = classify_elements(&mesh, &ls).unwrap();
        let h = mesh.h_max();
        prop_assert!((topo.domain_area(&mesh) - std::f64::consts::PI * r * r).abs() < 2.0 * h * h);
        prop_assert!((topo.interface_length() - 2.0 * std::f64::consts::PI * r).abs() < 2.0 * h * h);
        prop_assert!(topo.interface_polylines(&mesh).iter().all(|p| p.closed));
        for e in 0..mesh.num_triangles() {
            let class = topo.element_class(e);
            prop_assert_eq!(topo.is_active(e), class != ElementClass::Outside);
        }
        let space = P1Space::new(&mesh, &topo);
        let params = PenaltyParams::default();
        let k = assemble_stiffness(&mesh, &topo, &space, &params).unwrap();
        let m = assemble_mass(&mesh, &topo, &space, &params).unwrap();
        prop_assert!(k.asymmetry() < 1e-12);
        prop_assert!(m.asymmetry() < 1e-14);
        // 1^T M 1 is the measure of the discrete domain
        let ones = vec![1.0; space.num_dofs()];
        let total: f64 = m.mul_vec(&ones).iter().sum();
        prop_assert!((total - topo.domain_area(&mesh)).abs() < 1e-12 * total);
        // constants have zero energy apart from the boundary penalty
        let kc: f64 = k.mul_vec(&ones).iter().sum();
        let penalty = params.gamma_d / space.h() * topo.interface_length();
        prop_assert!((kc - penalty).abs() < 1e-9 * penalty);
    }
}
