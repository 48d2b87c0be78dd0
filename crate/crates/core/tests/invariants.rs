//! Property tests of the algebraic structure: skew symmetry of the
//! trilinear form, energy neutrality of the convection tensor, modal
//! round trips, solenoidality and snapshot fidelity.

use std::sync::{Arc, OnceLock};

use nsrepro_core::galerkin::{assemble_tensors, Tensors};
use nsrepro_core::lift::{build_lift, BoundaryData, LiftData};
use nsrepro_core::ops::{divergence, inner_l2, trilinear};
use nsrepro_core::reproductive::{l2_distance, v_distance};
use nsrepro_core::snapshot::{read_snapshot, write_velocity, Snapshot};
use nsrepro_core::stokes::{compute_eigenbasis, EigenOptions, StokesBasis};
use nsrepro_core::{Grid, VectorField};
use proptest::prelude::*;

const N: usize = 28;
const M: usize = 12;

struct Setup {
    basis: StokesBasis,
    lift: LiftData,
    tensors: Tensors,
}

fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let grid = Grid::square(N).unwrap();
        let basis = compute_eigenbasis(&grid, M, &EigenOptions::default()).unwrap();
        let lift = build_lift(&BoundaryData::bottom_bump(1.0), 0.3, &grid).unwrap();
        let tensors = assemble_tensors(&basis, &lift, 1.0).unwrap();
        Setup {
            basis,
            lift,
            tensors,
        }
    })
}

fn grid() -> &'static Arc<Grid> {
    setup().basis.grid()
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, M)
}

fn raw_field() -> impl Strategy<Value = VectorField> {
    let g = grid();
    (
        prop::collection::vec(-1.0..1.0f64, g.u_len()),
        prop::collection::vec(-1.0..1.0f64, g.v_len()),
    )
        .prop_map(|(u, v)| VectorField::from_components(grid(), u, v).unwrap())
}

fn norm(f: &VectorField) -> f64 {
    inner_l2(f, f).unwrap().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trilinear_form_is_skew_in_last_two_arguments(u in raw_field(), v in raw_field(), w in raw_field()) {
        let scale = norm(&u) * norm(&v) * norm(&w) / grid().h();
        let a = trilinear(&u, &v, &w).unwrap();
        let b = trilinear(&u, &w, &v).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * scale.max(1.0), "{a} + {b}");
        prop_assert!(trilinear(&u, &v, &v).unwrap().abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn convection_is_energy_neutral(c in coeffs()) {
        let s = &setup().tensors;
        let b = s.convection(&c);
        let dot: f64 = b.iter().zip(&c).map(|(x, y)| x * y).sum();
        let scale: f64 = b.iter().map(|x| x.abs()).sum::<f64>() * c.iter().map(|x| x.abs()).fold(0.0, f64::max);
        prop_assert!(dot.abs() <= 1e-12 * scale.max(1.0), "{dot}");
    }

    #[test]
    fn tensor_entries_match_the_field_form(i in 0..M, l in 0..M, j in 0..M) {
        let s = setup();
        let direct = trilinear(s.basis.mode(i), s.basis.mode(l), s.basis.mode(j)).unwrap();
        prop_assert!((s.tensors.b(i, l, j) - direct).abs() <= 1e-10);
        prop_assert!((s.tensors.b(i, l, j) + s.tensors.b(i, j, l)).abs() <= 1e-12);
    }

    #[test]
    fn synthesis_round_trips_and_is_solenoidal(c in coeffs()) {
        let b = &setup().basis;
        let f = b.synthesize(&c);
        let back = b.coefficients(&f).unwrap();
        prop_assert!(l2_distance(&c, &back) <= 1e-11);
        prop_assert!(divergence(&f).max_abs() <= 1e-11);
        prop_assert!(f.max_normal_trace() <= 1e-14);
        // Parseval in the orthonormal basis
        prop_assert!((norm(&f).powi(2) - c.iter().map(|x| x * x).sum::<f64>()).abs() <= 1e-11);
    }

    #[test]
    fn modal_distances_are_metrics(a in coeffs(), b in coeffs(), c in coeffs()) {
        let lam = setup().basis.eigenvalues();
        prop_assert!((v_distance(&a, &b, lam) - v_distance(&b, &a, lam)).abs() <= 1e-14);
        prop_assert!(v_distance(&a, &c, lam) <= v_distance(&a, &b, lam) + v_distance(&b, &c, lam) + 1e-12);
        // Poincaré: λ1 |x|² ≤ ‖x‖²
        prop_assert!(lam[0].sqrt() * l2_distance(&a, &b) <= v_distance(&a, &b, lam) + 1e-12);
    }

    #[test]
    fn velocity_snapshots_round_trip_bit_exactly(f in raw_field(), t in -10.0..10.0f64) {
        let mut buf = Vec::new();
        write_velocity(&mut buf, &f, t).unwrap();
        match read_snapshot(buf.as_slice()).unwrap() {
            Snapshot::Velocity { t: t2, field } => {
                prop_assert_eq!(t2.to_bits(), t.to_bits());
                prop_assert_eq!(field.u(), f.u());
                prop_assert_eq!(field.v(), f.v());
            }
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }

    #[test]
    fn lifts_are_divergence_free(amplitude in -3.0..3.0f64, epsilon in 0.05..0.5f64) {
        let lift = build_lift(&BoundaryData::counter_walls(amplitude), epsilon, grid()).unwrap();
        let g = lift.g_eps();
        prop_assert!(divergence(g).max_abs() <= 1e-13 * g.max_abs().max(1.0));
    }
}

#[test]
fn basis_is_orthonormal_with_small_residuals() {
    let s = setup();
    assert!(s.basis.orthonormality_error() <= 1e-10);
    assert!(s.basis.h1_orthogonality_error() <= 1e-8);
    for r in s.basis.eigen_residuals().unwrap() {
        assert!(r <= 1e-8, "{r}");
    }
    assert!(!s.lift.is_zero());
}
