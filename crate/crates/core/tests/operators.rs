use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ecg_forward::mesh::{generate_disk_in_disk, Region, TriMesh};
use ecg_forward::operators::{
    assemble_stiffness, gauge_zero_mean, solve_neumann, MassOperator, MassSupport, SolverOptions,
    StiffnessOperator,
};

fn small_mesh() -> TriMesh {
    generate_disk_in_disk(1.0, 2.0, 3, 12).unwrap()
}

fn two_region(mesh: &TriMesh) -> StiffnessOperator {
    assemble_stiffness(mesh, &[(Region::Heart, 3.0), (Region::Torso, 5.0)]).unwrap()
}

fn dense(k: &StiffnessOperator) -> DMatrix<f64> {
    let rows = k.matrix().to_dense();
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

#[test]
fn spectrum_has_a_single_zero_mode() {
    let mesh = small_mesh();
    let k = dense(&two_region(&mesh));
    let eig = k.symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    assert!(values[0].abs() < 1e-12 * lmax, "smallest {}", values[0]);
    assert!(values[1] > 1e-6 * lmax, "second smallest {}", values[1]);
    // the null vector is the constant
    let i0 = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap()
        .0;
    let v = eig.eigenvectors.column(i0);
    let spread = v.max() - v.min();
    assert!(spread < 1e-10, "null vector spread {spread}");
}

#[test]
fn heart_only_operator_vanishes_on_the_torso() {
    let mesh = small_mesh();
    let k = assemble_stiffness(&mesh, &[(Region::Heart, 1.0)]).unwrap();
    let d = dense(&k);
    for i in (0..mesh.num_vertices()).filter(|&i| !mesh.is_heart_vertex(i)) {
        assert!(d.row(i).iter().all(|&x| x == 0.0));
    }
    // positive semi-definite with one zero mode per connected heart block
    let eig = d.symmetric_eigen();
    assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12));
}

#[test]
fn neumann_solve_matches_dense_pseudo_inverse() {
    let mesh = small_mesh();
    let k = two_region(&mesh);
    let mass = MassOperator::new(&mesh, MassSupport::All);
    let n = mesh.num_vertices();
    let raw: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    let (mut x, _) = solve_neumann(&k, &mass, &raw, &SolverOptions::default(), None).unwrap();
    gauge_zero_mean(&mass, &mut x);

    // oracle: make the right-hand side orthogonal to the constants by
    // subtracting a multiple of the lumped mass, then pseudo-inverse, then
    // the same mass-weighted gauge
    let m = mass.diag();
    let c = raw.iter().sum::<f64>() / m.iter().sum::<f64>();
    let b = DVector::from_iterator(n, raw.iter().zip(m).map(|(v, w)| v - c * w));
    let pinv = dense(&k).pseudo_inverse(1e-10).unwrap();
    let mut y: Vec<f64> = (pinv * b).iter().copied().collect();
    gauge_zero_mean(&mass, &mut y);

    let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let err = x.iter().zip(&y).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    assert!(err < 1e-9 * scale, "err {err} scale {scale}");
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    let error = |rings: usize, sectors: usize| {
        let mesh = generate_disk_in_disk(0.5, 1.0, rings, sectors).unwrap();
        let k = assemble_stiffness(&mesh, &[(Region::Heart, 1.0), (Region::Torso, 1.0)]).unwrap();
        let m = MassOperator::new(&mesh, MassSupport::All);
        let r2 = |p: &[f64; 2]| p[0] * p[0] + p[1] * p[1];
        let f: Vec<f64> = mesh.vertices().iter().map(|p| 8.0 - 16.0 * r2(p)).collect();
        let (mut u, _) = solve_neumann(&k, &m, &m.apply(&f), &SolverOptions::default(), None).unwrap();
        let mut exact: Vec<f64> = mesh.vertices().iter().map(|p| (1.0 - r2(p)).powi(2)).collect();
        gauge_zero_mean(&m, &mut u);
        gauge_zero_mean(&m, &mut exact);
        let d: Vec<f64> = u.iter().zip(&exact).map(|(a, b)| a - b).collect();
        m.l2_norm(&d).unwrap()
    };
    let ratio = error(8, 32) / error(16, 64);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn lumped_masses_add_up_to_measures() {
    let mesh = generate_disk_in_disk(1.0, 2.0, 6, 24).unwrap();
    let heart = MassOperator::new(&mesh, MassSupport::Region(Region::Heart)).measure();
    let torso = MassOperator::new(&mesh, MassSupport::Region(Region::Torso)).measure();
    let all = MassOperator::new(&mesh, MassSupport::All).measure();
    assert!((heart - mesh.region_area(Region::Heart)).abs() < 1e-12);
    assert!((torso - mesh.region_area(Region::Torso)).abs() < 1e-12);
    assert!((heart + torso - all).abs() < 1e-12);
    // inscribed 24-gon of radius 2
    let perimeter = 24.0 * 2.0 * 2.0 * (std::f64::consts::PI / 24.0).sin();
    let boundary = MassOperator::new(&mesh, MassSupport::Boundary(ecg_forward::mesh::BoundaryTag::TorsoOuter)).measure();
    assert!((boundary - perimeter).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_nonnegative_and_shift_invariant(
        values in prop::collection::vec(-10.0f64..10.0, 256),
        shift in -100.0f64..100.0,
        sigma_h in 0.1f64..10.0,
        sigma_t in 0.1f64..10.0,
    ) {
        let mesh = generate_disk_in_disk(1.0, 2.0, 2, 12).unwrap();
        let values = &values[..mesh.num_vertices()];
        let k = assemble_stiffness(&mesh, &[(Region::Heart, sigma_h), (Region::Torso, sigma_t)]).unwrap();
        let kx = k.apply(values);
        let energy: f64 = values.iter().zip(&kx).map(|(a, b)| a * b).sum();
        let scale = k.matrix().max_abs() * values.iter().map(|v| v * v).sum::<f64>();
        prop_assert!(energy >= -1e-12 * scale);
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let ks = k.apply(&shifted);
        for (a, b) in kx.iter().zip(&ks) {
            prop_assert!((a - b).abs() <= 1e-11 * (1.0 + shift.abs()) * k.matrix().max_abs());
        }
    }
}
