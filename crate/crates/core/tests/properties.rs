use biotplate::cell::{solve_pressure_corrector, PressureCellOperator};
use biotplate::fem::{assemble_elastic_stiffness, CsrMatrix};
use biotplate::geometry::{build_cell_mesh, build_micro_mesh, cell_grid, periodic_pairs, CellGeometry, CellMesh, MicroMesh, Rect};
use biotplate::material::{BiotParams, HookeTensor, Polynomial};
use biotplate::twoscale::{gradient_identity_error, micro_l2_sq, unfold};
use proptest::prelude::*;
use std::sync::OnceLock;

fn meshes(eps: f64) -> &'static (MicroMesh, CellMesh) {
    static QUARTER: OnceLock<(MicroMesh, CellMesh)> = OnceLock::new();
    static HALF: OnceLock<(MicroMesh, CellMesh)> = OnceLock::new();
    let slot = if eps == 0.25 { &QUARTER } else { &HALF };
    slot.get_or_init(|| {
        let g = CellGeometry::default();
        (build_micro_mesh(&g, eps, &Rect::unit(), 4).unwrap(), build_cell_mesh(&g, 4).unwrap())
    })
}

fn pressure_operator() -> &'static PressureCellOperator {
    static OP: OnceLock<PressureCellOperator> = OnceLock::new();
    OP.get_or_init(|| {
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        PressureCellOperator::new(&mesh, &HookeTensor::default(), &BiotParams::default()).unwrap()
    })
}

fn asymmetry_rel(a: &CsrMatrix) -> f64 {
    a.asymmetry() / a.max_abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn unfolding_is_an_isometry_and_commutes_with_gradients(
        seed in proptest::collection::vec(-1.0f64..1.0, 64),
        quarter in any::<bool>(),
        exponent in 0u8..2,
    ) {
        let eps = if quarter { 0.25 } else { 0.5 };
        let (micro, cell) = meshes(eps);
        let n = 3 * micro.grid.num_nodes();
        // cheap deterministic expansion of the sampled values to a full field
        let psi: Vec<f64> = (0..n).map(|i| seed[i % 64] * (1.0 + (i / 64) as f64).sin()).collect();
        let s = exponent as f64;
        let u = unfold(&psi, 3, micro, cell, s).unwrap();
        prop_assert!(gradient_identity_error(&psi, &u, micro, &cell.grid).unwrap() <= 1e-12);
        let lhs = u.l2_sq(&cell.grid);
        let rhs = eps.powf(-2.0 * s) / eps * micro_l2_sq(&psi, 3, micro);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }

    #[test]
    fn stiffness_is_symmetric_and_annihilates_rigid_motions(
        fiber in (0.5f64..20.0, 0.0f64..0.45),
        gel in (0.1f64..5.0, 0.0f64..0.45),
        shift in proptest::array::uniform3(-1.0f64..1.0),
        spin in proptest::array::uniform3(-1.0f64..1.0),
    ) {
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        let tensor = HookeTensor::isotropic(fiber, gel).unwrap();
        let k = assemble_elastic_stiffness(&mesh, &tensor).unwrap();
        prop_assert!(asymmetry_rel(&k) <= 1e-14);
        let rigid: Vec<f64> = (0..mesh.grid.num_nodes())
            .flat_map(|a| {
                let x = mesh.grid.node_coord(a);
                let w = spin;
                [
                    shift[0] + w[1] * x[2] - w[2] * x[1],
                    shift[1] + w[2] * x[0] - w[0] * x[2],
                    shift[2] + w[0] * x[1] - w[1] * x[0],
                ]
            })
            .collect();
        let r = k.mul_vec(&rigid);
        let scale = k.max_abs() * rigid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(r.iter().all(|v| v.abs() <= 1e-12 * scale));
    }

    #[test]
    fn pressure_corrector_is_linear(
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        p_seed in proptest::collection::vec(-1.0f64..1.0, 8),
        q_seed in proptest::collection::vec(-1.0f64..1.0, 8),
    ) {
        let op = pressure_operator();
        let ng = op.num_gel_dofs();
        let p: Vec<f64> = (0..ng).map(|i| p_seed[i % 8] + 0.01 * i as f64).collect();
        let q: Vec<f64> = (0..ng).map(|i| q_seed[(i * 3) % 8]).collect();
        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect();
        let up = solve_pressure_corrector(op, &p).unwrap();
        let uq = solve_pressure_corrector(op, &q).unwrap();
        let um = solve_pressure_corrector(op, &mix).unwrap();
        let scale = up.iter().chain(&uq).fold(1e-300f64, |m, v| m.max(v.abs())) * (a.abs() + b.abs()).max(1.0);
        for i in 0..um.len() {
            prop_assert!((um[i] - a * up[i] - b * uq[i]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn periodic_pairing_covers_the_far_faces_by_unit_shifts(n in 1usize..7) {
        let grid = cell_grid(n);
        let pairs = periodic_pairs(&grid);
        let mut master = vec![None; grid.num_nodes()];
        for &(slave, m) in &pairs {
            prop_assert!(master[slave].is_none(), "node {} paired twice", slave);
            master[slave] = Some(m);
            let (xs, xm) = (grid.node_coord(slave), grid.node_coord(m));
            let d = [xs[0] - xm[0], xs[1] - xm[1], xs[2] - xm[2]];
            let unit_shift = (d[0] - 1.0).abs() < 1e-12 && d[1].abs() < 1e-12 || d[0].abs() < 1e-12 && (d[1] - 1.0).abs() < 1e-12;
            prop_assert!(unit_shift && d[2].abs() < 1e-12);
        }
        for node in 0..grid.num_nodes() {
            let [i, j, _] = grid.node_ijk(node);
            prop_assert_eq!(master[node].is_some(), i == n || j == n);
            // chains end on the reference faces within two hops
            let mut root = node;
            for _ in 0..2 {
                if let Some(m) = master[root] {
                    root = m;
                }
            }
            let [ri, rj, _] = grid.node_ijk(root);
            prop_assert!(ri < n && rj < n);
        }
    }

    #[test]
    fn polynomial_text_round_trips(
        terms in proptest::collection::vec((-5.0f64..5.0, 0u32..4, 0u32..4, 0u32..3), 1..5),
        x in -1.0f64..1.0, y in -1.0f64..1.0, t in 0.0f64..2.0,
    ) {
        let text: Vec<String> = terms.iter().map(|(c, a, b, d)| format!("{c}:{a}:{b}:{d}")).collect();
        let poly: Polynomial = text.join(",").parse().unwrap();
        let again: Polynomial = poly.to_string().parse().unwrap();
        prop_assert_eq!(&poly, &again);
        let direct: f64 = terms.iter().map(|(c, a, b, d)| c * x.powi(*a as i32) * y.powi(*b as i32) * t.powi(*d as i32)).sum();
        prop_assert!((poly.eval(x, y, t) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }
}
