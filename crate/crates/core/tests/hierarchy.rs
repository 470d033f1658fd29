use hierspin::hierarchy::{
    self, build_coupling, build_laplacian, projector, Blocking, HierOperator, LatticeShape, OperatorKind,
    ReflectionPlane,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shape(l: usize, d: usize, k: usize) -> LatticeShape {
    LatticeShape::new(l, d, k).unwrap()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn fluctuation_projectors_are_orthogonal_and_complete() {
    for sh in [shape(2, 1, 3), shape(2, 2, 2), shape(3, 1, 2)] {
        let k = sh.levels();
        let q: Vec<DMatrix<f64>> = (0..=k).map(|j| projector(&sh, j, true).unwrap().dense().unwrap()).collect();
        let n = sh.sites();
        for i in 0..=k {
            for j in 0..=k {
                let prod = &q[i] * &q[j];
                let expect = if i == j { q[i].clone() } else { DMatrix::zeros(n, n) };
                assert!(max_abs(&(prod - expect)) < 1e-12, "Q{i} Q{j}");
            }
        }
        let sum = q.iter().fold(DMatrix::zeros(n, n), |a, m| a + m);
        assert!(max_abs(&(sum - DMatrix::identity(n, n))) < 1e-12);
    }
}

#[test]
fn projector_traces_count_blocks() {
    let sh = shape(2, 2, 3);
    for k in 0..=sh.levels() {
        let p = projector(&sh, k, false).unwrap().dense().unwrap();
        let expected = (4usize.pow((3 - k) as u32)) as f64;
        assert!((p.trace() - expected).abs() < 1e-10);
    }
}

#[test]
fn zero_is_a_simple_eigenvalue() {
    let sh = shape(2, 1, 3);
    let lap = build_laplacian(&sh).dense().unwrap();
    let mut ev: Vec<f64> = lap.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    assert!(ev[0].abs() < 1e-12);
    assert!(ev[1] > 1e-3);
}

#[test]
fn laplacian_annihilates_constants_in_three_dimensions() {
    let sh = shape(2, 3, 2);
    let out = build_laplacian(&sh).apply(&vec![1.0; sh.sites()]).unwrap();
    assert!(out.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn block_adjoint_identity_random_pairs() {
    let sh = shape(3, 1, 3);
    let b = sh.blocking();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let u = random_vec(&mut rng, sh.sites());
        let v = random_vec(&mut rng, sh.sites() / 3);
        let bu = b.apply_block(&u).unwrap();
        let bsv = b.apply_block_adjoint(&v).unwrap();
        let lhs: f64 = bsv.iter().zip(&u).map(|(a, c)| a * c).sum();
        let rhs: f64 = v.iter().zip(&bu).map(|(a, c)| a * c).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

#[test]
fn block_of_adjoint_is_identity_at_every_scale() {
    let sh = shape(2, 1, 3);
    let b = sh.blocking();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut len = sh.sites() / 2;
    let mut blocking = b;
    while blocking.levels > 0 {
        let v = random_vec(&mut rng, len);
        let back = blocking.apply_block(&blocking.apply_block_adjoint(&v).unwrap()).unwrap();
        assert!(v.iter().zip(&back).all(|(a, c)| (a - c).abs() < 1e-14));
        blocking = Blocking { levels: blocking.levels - 1, ..blocking };
        len /= 2;
    }
}

#[test]
fn dyson_energy_hand_value() {
    for alpha in [1.2, 1.5, 2.0] {
        let h = hierarchy::dyson_energy(&[1.0; 4], alpha, 2).unwrap();
        let expected = 2f64.powf(-alpha) * 8.0 + 2f64.powf(-2.0 * alpha) * 16.0;
        assert!((h - expected).abs() < 1e-14);
        assert_eq!(hierarchy::dyson_energy(&[0.0; 4], alpha, 2).unwrap(), 0.0);
    }
}

#[test]
fn dyson_energy_is_coupling_form() {
    let levels = 6;
    let alpha = 1.5;
    let op = HierOperator { blocking: Blocking::dyson(levels, alpha).unwrap(), kind: OperatorKind::Coupling };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let sigma: Vec<f64> = (0..1 << levels).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let js = op.apply(&sigma).unwrap();
        let form: f64 = sigma.iter().zip(&js).map(|(a, b)| a * b).sum();
        let h = hierarchy::dyson_energy(&sigma, alpha, levels).unwrap();
        assert!((h - form).abs() < 1e-10, "{h} vs {form}");
    }
}

#[test]
fn reflection_is_an_involution_on_every_level() {
    let sh = shape(2, 1, 3);
    let plane = ReflectionPlane { axis: 0 };
    for level in 1..=3 {
        let mut plus = 0;
        for pos in 0..sh.sites() {
            let t = sh.digits_at(pos).unwrap();
            let r = sh.reflection_map(&t, level, plane).unwrap();
            assert_eq!(sh.reflection_map(&r, level, plane).unwrap(), t);
            assert_ne!(r, t);
            assert_ne!(sh.in_plus_half(&t, level, plane).unwrap(), sh.in_plus_half(&r, level, plane).unwrap());
            plus += sh.in_plus_half(&t, level, plane).unwrap() as usize;
        }
        assert_eq!(plus, sh.sites() / 2);
    }
}

#[test]
fn reflection_positivity_small_lattice() {
    let sh = shape(2, 1, 2);
    let plane = ReflectionPlane { axis: 0 };
    let observables: [fn(&[f64]) -> f64; 3] = [|x| x[0], |x| x[0] * x[1], |x| x[0] + 2.0 * x[1]];
    for beta in [0.1, 1.0] {
        for level in 1..=2 {
            for f in observables {
                let v = hierarchy::reflection_expectation(&sh, beta, level, plane, f).unwrap();
                assert!(v >= 0.0, "beta {beta}, level {level}: {v}");
            }
        }
    }
}

#[test]
fn apply_cost_is_linear_in_sites_times_levels() {
    for (l, d) in [(2usize, 1usize), (3, 1), (2, 2)] {
        let mut ratios = Vec::new();
        for k in 2..=8 {
            let Ok(sh) = LatticeShape::new(l, d, k) else { continue };
            if sh.sites() > 1 << 18 {
                break;
            }
            let v = vec![1.0; sh.sites()];
            for op in [build_coupling(&sh), build_laplacian(&sh)] {
                let (_, ops) = op.apply_counted(&v).unwrap();
                ratios.push(ops as f64 / (sh.sites() * k) as f64);
            }
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(max < 8.0, "L = {l}, d = {d}: ops/(nK) up to {max}");
    }
}

#[test]
fn matrix_csv_round_trips() {
    let sh = shape(2, 1, 2);
    let m = build_laplacian(&sh).dense().unwrap();
    let mut buf = Vec::new();
    hierarchy::write_matrix_csv(&m, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().map(|r| r.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 4);
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v, m[(i, j)]);
        }
    }
}

proptest! {
    #[test]
    fn fast_apply_matches_dense(seed in any::<u64>(), which in 0usize..4) {
        let sh = [shape(2, 1, 4), shape(3, 1, 2), shape(2, 2, 2), shape(2, 3, 1)][which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(&mut rng, sh.sites());
        for op in [build_coupling(&sh), build_laplacian(&sh), projector(&sh, 1, true).unwrap()] {
            let fast = op.apply(&x).unwrap();
            let dense = op.dense().unwrap() * nalgebra::DVector::from_column_slice(&x);
            for (a, b) in fast.iter().zip(dense.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_form_is_nonnegative(seed in any::<u64>()) {
        let sh = shape(2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(&mut rng, sh.sites());
        let lap = build_laplacian(&sh).dense().unwrap();
        prop_assert!(hierarchy::quadratic_form(&lap, &x) >= -1e-12);
    }
}
