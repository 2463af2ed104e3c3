//! Property tests for the tensor and kernel layers.

use nalgebra::DMatrix;
use proptest::prelude::*;

use lrtc_core::kernels::{shrink2d, svt, thin_svd};
use lrtc_core::tensor::{DenseTensor, ObservationMask};

fn small_shape() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=6, 3..=4)
}

fn tensor_with_data(dims: Vec<usize>) -> impl Strategy<Value = DenseTensor> {
    let total: usize = dims.iter().product();
    prop::collection::vec(-100.0f64..100.0, total)
        .prop_map(move |data| DenseTensor::new(dims.clone(), data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn fold_unfold_roundtrip_is_bit_exact(t in small_shape().prop_flat_map(tensor_with_data)) {
        for mode in 0..t.dims().len() {
            let m = t.unfold(mode).unwrap();
            let back = DenseTensor::fold(&m, mode, t.dims()).unwrap();
            prop_assert_eq!(&back, &t);
        }
    }

    #[test]
    fn projection_identities(
        t in small_shape().prop_flat_map(tensor_with_data),
        sr in 0.05f64..1.0,
        seed in any::<u64>(),
    ) {
        let mask = ObservationMask::random(t.dims().to_vec(), sr, seed).unwrap();
        let kept = t.project(&mask).unwrap();
        // idempotence
        prop_assert_eq!(&kept.project(&mask).unwrap(), &kept);
        // project + complement = identity
        let mut sum = kept.clone();
        sum.add_scaled(&t.project_complement(&mask).unwrap(), 1.0).unwrap();
        prop_assert_eq!(&sum, &t);
    }

    #[test]
    fn projection_is_linear(
        dims in small_shape(),
        seed in any::<u64>(),
        c in -3.0f64..3.0,
    ) {
        let total: usize = dims.iter().product();
        let a = DenseTensor::new(dims.clone(), (0..total).map(|i| (i as f64).sin()).collect()).unwrap();
        let b = DenseTensor::new(dims.clone(), (0..total).map(|i| (i as f64).cos()).collect()).unwrap();
        let mask = ObservationMask::random(dims.clone(), 0.5, seed).unwrap();
        // P(a + c·b) == P(a) + c·P(b)
        let mut combo = a.clone();
        combo.add_scaled(&b, c).unwrap();
        let lhs = combo.project(&mask).unwrap();
        let mut rhs = a.project(&mask).unwrap();
        rhs.add_scaled(&b.project(&mask).unwrap(), c).unwrap();
        let mut diff = lhs.clone();
        diff.add_scaled(&rhs, -1.0).unwrap();
        prop_assert!(diff.frobenius_norm() <= 1e-12 * (1.0 + lhs.frobenius_norm()));
    }

    #[test]
    fn frobenius_matches_inner_product(t in small_shape().prop_flat_map(tensor_with_data)) {
        let ip = t.inner_product(&t).unwrap();
        let norm2 = t.frobenius_norm().powi(2);
        prop_assert!((norm2 - ip).abs() <= 1e-14 * (1.0 + ip.abs()));
    }

    #[test]
    fn random_mask_counts_and_uniqueness(
        dims in prop::collection::vec(1usize..=8, 3..=4),
        sr in 0.01f64..=1.0,
        seed in any::<u64>(),
    ) {
        let total: usize = dims.iter().product();
        let mask = ObservationMask::random(dims, sr, seed).unwrap();
        prop_assert_eq!(mask.len() as u64, (sr * total as f64 + 1e-9 * (sr * total as f64).max(1.0)).floor() as u64);
        prop_assert!(mask.indices().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(mask.indices().iter().all(|&i| (i as usize) < total));
    }

    #[test]
    fn svt_shrinks_spectrum_and_rank(
        rows in 2usize..6,
        cols in 2usize..6,
        delta in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let m = seeded_matrix(rows, cols, seed);
        let out = svt(&m, delta).unwrap();
        let sv_in = thin_svd(&m).unwrap().sigma;
        let sv_out = thin_svd(&out).unwrap().sigma;
        let bound = (sv_in[0] - delta).max(0.0);
        prop_assert!(sv_out.iter().all(|&s| s <= bound + 1e-10));
        let rank = |sv: &nalgebra::DVector<f64>| sv.iter().filter(|&&s| s > 1e-10 * sv[0].max(1e-300)).count();
        prop_assert!(rank(&sv_out) <= rank(&sv_in));
    }

    #[test]
    fn svt_is_nonexpansive(
        rows in 2usize..6,
        cols in 2usize..6,
        delta in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let w1 = seeded_matrix(rows, cols, seed);
        let w2 = seeded_matrix(rows, cols, seed.wrapping_add(1));
        let d_out = (svt(&w1, delta).unwrap() - svt(&w2, delta).unwrap()).norm();
        let d_in = (&w1 - &w2).norm();
        prop_assert!(d_out <= d_in + 1e-10);
    }

    #[test]
    fn shrink2d_never_expands(
        rows in 1usize..5,
        cols in 1usize..5,
        threshold in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let t1 = seeded_matrix(rows, cols, seed);
        let t2 = seeded_matrix(rows, cols, seed.wrapping_add(7));
        let (u1, u2) = shrink2d(&t1, &t2, threshold).unwrap();
        for j in 0..cols {
            for i in 0..rows {
                let t_norm = (t1[(i, j)].powi(2) + t2[(i, j)].powi(2)).sqrt();
                let u_norm = (u1[(i, j)].powi(2) + u2[(i, j)].powi(2)).sqrt();
                prop_assert!(u_norm <= (t_norm - threshold).max(0.0) + 1e-12);
            }
        }
    }
}

fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-5.0..5.0))
}
