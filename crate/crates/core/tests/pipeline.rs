use biotplate::cell::CellData;
use biotplate::geometry::{build_cell_mesh, build_plate_mesh, CellGeometry, Rect};
use biotplate::io::{write_vtk_plate, VtkField};
use biotplate::material::{BiotParams, HookeTensor, LoadSpec};
use biotplate::twoscale::{assemble_macro, run_macro, PLATE_DOFS};

#[test]
fn transverse_load_gives_mirror_symmetric_sagging_plate() {
    let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
    let biot = BiotParams::default();
    let cell = CellData::new(&mesh, &HookeTensor::default(), &biot, 1e-12).unwrap();
    let m = 8;
    let plate = build_plate_mesh(&Rect::unit(), m).unwrap();
    let sys = assemble_macro(&cell.tensor, &cell.op, &cell.moments, &plate, &biot).unwrap();
    let states = run_macro(&sys, 1.0, 4, &LoadSpec::constant([0.0, 0.0, 1.0], 0.0)).unwrap();
    let w = &states.last().unwrap().w;
    let deflection = |i: usize, j: usize| w[PLATE_DOFS * (i + (m + 1) * j) + 2];
    let peak = deflection(m / 2, m / 2);
    assert!(peak > 0.0);
    for j in 0..=m {
        for i in 0..=m {
            let v = deflection(i, j);
            assert!(v <= peak * (1.0 + 1e-12));
            for mirror in [deflection(m - i, j), deflection(i, m - j), deflection(j, i)] {
                assert!((v - mirror).abs() <= 1e-9 * peak, "({i},{j})");
            }
        }
    }

    let mut buf = Vec::new();
    let w3: Vec<f64> = (0..plate.num_nodes()).map(|a| w[PLATE_DOFS * a + 2]).collect();
    write_vtk_plate(&mut buf, "sag", &plate, &[VtkField { name: "W3", components: 1, values: &w3 }]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 10 + plate.num_nodes());
}

#[test]
fn stiffer_fibers_reduce_the_deflection() {
    let geom = CellGeometry::default();
    let mesh = build_cell_mesh(&geom, 4).unwrap();
    let biot = BiotParams::default();
    let plate = build_plate_mesh(&Rect::unit(), 4).unwrap();
    let peak = |fiber_e: f64| {
        let tensor = HookeTensor::isotropic((fiber_e, 0.3), (1.0, 0.35)).unwrap();
        let cell = CellData::new(&mesh, &tensor, &biot, 1e-12).unwrap();
        let sys = assemble_macro(&cell.tensor, &cell.op, &cell.moments, &plate, &biot).unwrap();
        let states = run_macro(&sys, 1.0, 2, &LoadSpec::constant([0.0, 0.0, 1.0], 0.0)).unwrap();
        biotplate::verify::max_deflection(states.last().unwrap(), &sys)
    };
    let (soft, stiff) = (peak(5.0), peak(20.0));
    assert!(stiff < soft, "{stiff} vs {soft}");
}
