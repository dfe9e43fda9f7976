use proptest::prelude::*;

use ecg_forward::activation::ActivationMap;
use ecg_forward::bidomain::HeartTorsoOperators;
use ecg_forward::formulations::{f1_rhs, FormulationSolver, RhsInputs, RhsRecipe};
use ecg_forward::fronts::{build_vtilde, build_vtilde_rate, FrontShape};
use ecg_forward::ionic::MsParams;
use ecg_forward::mesh::{generate_disk_in_disk, TriMesh};
use ecg_forward::operators::{ConductivityMap, SolverOptions};

fn mesh() -> TriMesh {
    generate_disk_in_disk(18.0, 36.0, 6, 32).unwrap()
}

/// Planar front crossing the heart from left to right at unit speed.
fn planar_psi(mesh: &TriMesh) -> ActivationMap {
    let n = mesh.num_vertices();
    let psi = (0..n)
        .map(|i| mesh.is_heart_vertex(i).then(|| 20.0 + mesh.vertices()[i][0]))
        .collect();
    let evaluated = (0..n).map(|i| mesh.is_heart_vertex(i)).collect();
    ActivationMap::from_parts(psi, evaluated, 0.5)
}

fn solver(mesh: &TriMesh) -> FormulationSolver {
    let ops = HeartTorsoOperators::new(mesh, &ConductivityMap::default()).unwrap();
    FormulationSolver::new(ops, mesh.heart_mask().to_vec(), SolverOptions { tol: 1e-13, ..SolverOptions::default() })
}

#[test]
fn sbdf2_derivative_approaches_the_analytic_one() {
    let mesh = mesh();
    let psi = planar_psi(&mesh);
    let shape = FrontShape::heaviside(2.5).unwrap();
    let heart = mesh.heart_mask().to_vec();
    let ionic = MsParams::default();
    let analytic: RhsRecipe = "analytic+f_ms_reduced".parse().unwrap();
    let sbdf2: RhsRecipe = "sbdf2+f_ms_reduced".parse().unwrap();
    let t = 21.0;
    let gap = |dt: f64| {
        let v = |s: f64| build_vtilde(&shape, &psi, s);
        let (v0, v1, v2) = (v(t), v(t - dt), v(t - 2.0 * dt));
        let rate = build_vtilde_rate(&shape, &psi, t);
        let mut inp = RhsInputs::new(dt, &heart, &ionic, &v0);
        inp.v_prev = Some(&v1);
        inp.v_prev2 = Some(&v2);
        inp.analytic_rate = Some(&rate);
        let a = f1_rhs(analytic, &inp).unwrap();
        let b = f1_rhs(sbdf2, &inp).unwrap();
        a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };
    let (g1, g2, g3) = (gap(0.2), gap(0.1), gap(0.05));
    assert!(g1 / g2 >= 1.8 && g2 / g3 >= 1.8, "gaps {g1:e} {g2:e} {g3:e}");
}

#[test]
fn balance_formulation_only_sees_the_front_region() {
    // away from the front the heaviside field is locally constant, so the
    // potential is generated by the band where 0 < v < 1
    let mesh = mesh();
    let s = solver(&mesh);
    let psi = planar_psi(&mesh);
    let shape = FrontShape::heaviside(1.0).unwrap();
    let before = s.solve_f2(&build_vtilde(&shape, &psi, -10.0)).unwrap();
    let after = s.solve_f2(&build_vtilde(&shape, &psi, 100.0)).unwrap();
    let during = s.solve_f2(&build_vtilde(&shape, &psi, 20.0)).unwrap();
    let max = |u: &[f64]| u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert_eq!(max(&before.u), 0.0);
    assert!(max(&after.u) < 1e-12);
    assert!(max(&during.u) > 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn both_solvers_superpose(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
        let mesh = mesh();
        let s = solver(&mesh);
        let n = mesh.num_vertices();
        let field = |k: u64| -> Vec<f64> {
            (0..n)
                .map(|i| if mesh.is_heart_vertex(i) { (((i as u64 + 1) * (k + 17) * 2654435761) % 1000) as f64 / 1000.0 } else { 0.0 })
                .collect()
        };
        let (x, y) = (field(seed), field(seed + 1));
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let scale = |u: &[f64]| u.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let (ux, uy, uxy) = (s.solve_f2(&x).unwrap().u, s.solve_f2(&y).unwrap().u, s.solve_f2(&xy).unwrap().u);
        let tol = 1e-9 * (scale(&ux) * a.abs() + scale(&uy) * b.abs()).max(1e-300);
        for i in 0..n {
            prop_assert!((uxy[i] - (a * ux[i] + b * uy[i])).abs() <= tol);
        }

        let rec = RhsRecipe::RECORDED;
        let (wx, wy, wxy) = (
            s.solve_f1(&x, Some(rec)).unwrap().u,
            s.solve_f1(&y, Some(rec)).unwrap().u,
            s.solve_f1(&xy, Some(rec)).unwrap().u,
        );
        let tol = 1e-9 * (scale(&wx) * a.abs() + scale(&wy) * b.abs()).max(1e-300);
        for i in 0..n {
            prop_assert!((wxy[i] - (a * wx[i] + b * wy[i])).abs() <= tol);
        }
    }
}
