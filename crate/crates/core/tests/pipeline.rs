use lesionscope::fusion::{
    fit_projection_weights, mean_ensemble, merge_projections, score_fusion, unanimous_vote, FusionConfig,
    ProjectionWeights,
};
use lesionscope::preprocess::{
    compute_zscore_stats, extract_projection, normalize_lung_window, normalize_zscore, resize_with_coords,
    to_hounsfield, Axis, LUNG_WINDOW_CLAMP,
};
use lesionscope::{BinaryMask, CtVolume, Dims, Error, ProbabilityVolume, Spacing, UnitState};
use proptest::prelude::*;

fn raw(dims: Dims, voxels: Vec<f64>) -> CtVolume {
    CtVolume::new(dims, Spacing::default(), voxels, UnitState::RawStored)
        .unwrap()
        .with_rescale(1.0, -1024.0)
}

fn pv(values: &[f32]) -> ProbabilityVolume {
    ProbabilityVolume::new(Dims::new(values.len(), 1, 1), values.to_vec()).unwrap()
}

#[test]
fn lung_window_example() {
    let v = raw(Dims::new(4, 1, 1), vec![24.0, 524.0, 1024.0, 3024.0]);
    let hu = to_hounsfield(&v).unwrap();
    assert_eq!(hu.voxels(), &[-1000.0, -500.0, 0.0, 2000.0]);
    let n = normalize_lung_window(&hu).unwrap();
    assert_eq!(n.voxels(), &[-0.505, -0.5, 0.0, 0.505]);
    assert!(matches!(normalize_lung_window(&v), Err(Error::WrongUnitState { .. })));
    assert!(matches!(to_hounsfield(&hu), Err(Error::WrongUnitState { .. })));
}

#[test]
fn zero_minimum_is_degenerate() {
    let v = raw(Dims::new(2, 1, 1), vec![1024.0, 1100.0]);
    let hu = to_hounsfield(&v).unwrap();
    assert!(matches!(normalize_lung_window(&hu), Err(Error::DegenerateMinimum)));
}

#[test]
fn zscore_example() {
    let a = raw(Dims::new(2, 1, 1), vec![0.0, 2.0]);
    let b = raw(Dims::new(2, 1, 1), vec![4.0, 6.0]);
    let s = compute_zscore_stats(&[&a, &b]).unwrap();
    assert_eq!(s.mu, 3.0);
    assert_eq!(s.sigma, 5f64.sqrt());
    let z = normalize_zscore(&a, s).unwrap();
    assert_eq!(z.voxels(), &[-3.0 / 5f64.sqrt(), -1.0 / 5f64.sqrt()]);
    let flat = raw(Dims::new(3, 1, 1), vec![7.0; 3]);
    assert!(matches!(compute_zscore_stats(&[&flat]), Err(Error::ZeroVariance)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lung_window_stays_in_clamp(v in prop::collection::vec(-3000i32..4000, 2..60)) {
        let mut v: Vec<f64> = v.into_iter().map(f64::from).collect();
        v[0] = 0.0; // guarantees a negative HU minimum
        let hu = to_hounsfield(&raw(Dims::new(v.len(), 1, 1), v)).unwrap();
        let n = normalize_lung_window(&hu).unwrap();
        prop_assert!(n.voxels().iter().all(|p| p.abs() <= LUNG_WINDOW_CLAMP));
        let min = n.voxels().iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(min, -LUNG_WINDOW_CLAMP);
    }

    #[test]
    fn zscore_stats_ignore_volume_order(a in prop::collection::vec(-2000i32..2000, 1..40),
                                        b in prop::collection::vec(-2000i32..2000, 1..40)) {
        let va = raw(Dims::new(a.len(), 1, 1), a.iter().map(|v| *v as f64).collect());
        let vb = raw(Dims::new(b.len(), 1, 1), b.iter().map(|v| *v as f64).collect());
        let ab = compute_zscore_stats(&[&va, &vb]);
        let ba = compute_zscore_stats(&[&vb, &va]);
        match (ab, ba) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "order changed the outcome"),
        }
    }

    #[test]
    fn projections_invert(nx in 1usize..6, ny in 1usize..6, nz in 1usize..6) {
        let dims = Dims::new(nx, ny, nz);
        let v = raw(dims, (0..dims.len()).map(|i| i as f64).collect());
        for axis in Axis::ALL {
            let stack = extract_projection(&v, axis);
            prop_assert_eq!(stack.to_volume_data(dims).unwrap(), v.voxels().to_vec());
        }
    }

    #[test]
    fn mean_lies_between_members(a in prop::collection::vec(0.0f32..=1.0, 1..30), seed in any::<u32>()) {
        let b: Vec<f32> = a.iter().enumerate().map(|(i, x)| ((x * 7.0 + i as f32 + seed as f32 * 1e-3) % 1.0).abs()).collect();
        let (pa, pb) = (pv(&a), pv(&b));
        let m = mean_ensemble(&[&pa, &pb]).unwrap();
        for i in 0..a.len() {
            let (lo, hi) = (a[i].min(b[i]), a[i].max(b[i]));
            prop_assert!(m.probs()[i] >= lo && m.probs()[i] <= hi);
        }
    }

    #[test]
    fn score_fusion_is_monotone(base in prop::collection::vec(0.0f32..=1.0, 8), bump in 0.0f32..0.5) {
        let up: Vec<f32> = base.iter().map(|v| (v + bump).min(1.0)).collect();
        let cfg = FusionConfig::default();
        let lo_models: Vec<ProbabilityVolume> = (0..3).map(|_| pv(&base)).collect();
        let hi_models: Vec<ProbabilityVolume> = (0..3).map(|_| pv(&up)).collect();
        let lo = score_fusion(&lo_models.iter().collect::<Vec<_>>(), &pv(&base), &pv(&base), &cfg).unwrap();
        let hi = score_fusion(&hi_models.iter().collect::<Vec<_>>(), &pv(&up), &pv(&up), &cfg).unwrap();
        for i in 0..8 {
            prop_assert!(!lo.bits()[i] || hi.bits()[i]);
        }
    }
}

#[test]
fn resize_adds_coordinate_ramps() {
    let v = raw(Dims::new(2, 2, 3), (0..12).map(f64::from).collect());
    let stack = extract_projection(&v, Axis::Axial);
    let r = resize_with_coords(&stack, (3, 3)).unwrap();
    assert_eq!(r.planes[0], vec![0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0]);
    let c = &r.coords.as_ref().unwrap()[2];
    assert_eq!(c.x[..3], [0.0, 0.5, 1.0]);
    assert_eq!(c.y[3..6], [0.5, 0.5, 0.5]);
    assert!(c.depth.iter().all(|d| *d == 1.0));
}

#[test]
fn vote_requires_every_member_strictly_above() {
    let a = pv(&[0.6, 0.5, 0.9]);
    let b = pv(&[0.7, 0.9, 0.4]);
    assert_eq!(unanimous_vote(&[&a, &b], 0.5).unwrap().bits(), &[true, false, false]);
    assert!(matches!(unanimous_vote(&[], 0.5), Err(Error::EmptyEnsemble)));
    let c = ProbabilityVolume::new(Dims::new(1, 3, 1), vec![0.6; 3]).unwrap();
    assert!(matches!(unanimous_vote(&[&a, &c], 0.5), Err(Error::DimsMismatch(..))));
}

#[test]
fn projection_grid_search() {
    let truth = BinaryMask::new(Dims::new(4, 1, 1), vec![true, true, false, false]).unwrap();
    let axial = pv(&[0.9, 0.9, 0.1, 0.1]);
    let coronal = pv(&[0.2, 0.2, 0.8, 0.8]);
    let sagittal = pv(&[0.4, 0.4, 0.4, 0.4]);
    let fit = fit_projection_weights(&axial, &coronal, &sagittal, &truth, 0.5, 0.5).unwrap();
    assert_eq!(fit.evaluated, 6);
    assert_eq!(fit.weights, ProjectionWeights::new(0.5, 0.0, 0.5).unwrap());
    assert_eq!(fit.dice, 1.0);

    let eq = merge_projections(&axial, &coronal, &sagittal, &ProjectionWeights::equal()).unwrap();
    assert!((eq.probs()[0] - 0.5).abs() < 1e-6);
    assert!(ProjectionWeights::new(0.5, 0.6, -0.1).is_err());
    assert!(fit_projection_weights(&axial, &coronal, &sagittal, &truth, 0.5, 0.3).is_err());
}
