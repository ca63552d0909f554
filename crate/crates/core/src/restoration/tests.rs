use super::*;
use crate::dictionaries::{AtomSource, Dictionary};
use crate::ensemble::Coder;
use crate::operator::{BlurDownsample, DegradationOperator};
use crate::rng;
use rand::Rng;

fn random_image(seed: u64, w: usize, h: usize) -> ImagePlane {
    let mut r = rng::seeded(seed);
    ImagePlane::from_fn(w, h, |_, _| r.random_range(0.0..1.0)).unwrap()
}

fn smooth_image(w: usize, h: usize, phase: f64) -> ImagePlane {
    ImagePlane::from_fn(w, h, |r, c| {
        let (x, y) = (c as f64 / w as f64, r as f64 / h as f64);
        0.5 + 0.3 * (6.0 * x + phase).sin() * (4.0 * y).cos() + if x + 0.3 * y > 0.6 { 0.15 } else { -0.1 }
    })
    .unwrap()
    .clamped()
}

#[test]
fn single_patch_covers_the_image() {
    let img = random_image(1, 8, 8);
    let g = extract_patches(&img, 8, 8, false, None).unwrap();
    assert_eq!(g.len(), 1);
    assert_eq!(g.patches().column(0).as_slice(), img.pixels());
    let m = extract_patches(&img, 8, 8, true, None).unwrap();
    let mean = img.pixels().iter().sum::<f64>() / 64.0;
    assert!((m.means().unwrap()[0] - mean).abs() < 1e-15);
    assert!(m.patches().column(0).sum().abs() < 1e-12);
}

#[test]
fn flat_patches_are_dropped_only_in_training_mode() {
    let img = ImagePlane::filled(16, 16, 0.4).unwrap();
    assert!(extract_patches(&img, 8, 8, true, Some(TRAINING_VARIANCE_FLOOR)).unwrap().is_empty());
    let test = extract_patches(&img, 8, 8, true, None).unwrap();
    assert_eq!(test.len(), 4);
    assert!(test.patches().iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn patch_count_and_order() {
    let img = random_image(2, 16, 16);
    let g = extract_patches(&img, 8, 4, false, None).unwrap();
    assert_eq!(g.len(), ((16 - 8) / 4 + 1) * ((16 - 8) / 4 + 1));
    assert_eq!(&g.positions()[..4], &[(0, 0), (0, 4), (0, 8), (4, 0)]);
    let odd = extract_patches(&random_image(3, 11, 9), 4, 4, false, None).unwrap();
    assert_eq!(window_starts(11, 4, 4), vec![0, 4, 7]);
    assert_eq!(odd.len(), 3 * 3);
}

#[test]
fn assembly_round_trips() {
    let img = random_image(4, 24, 16);
    let g = extract_patches(&img, 8, 8, false, None).unwrap();
    assert_eq!(assemble_patches(&g, g.patches()).unwrap(), img);
    let g = extract_patches(&img, 8, 4, true, None).unwrap();
    let back = assemble_patches(&g, g.patches()).unwrap();
    let err = img.pixels().iter().zip(back.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-12);
}

#[test]
fn overlaps_are_averaged() {
    let img = ImagePlane::filled(3, 2, 0.5).unwrap();
    let g = extract_patches(&img, 2, 1, false, None).unwrap();
    assert_eq!(g.len(), 2);
    let mut est = g.patches().clone();
    est.column_mut(0).add_scalar_mut(0.1);
    est.column_mut(1).add_scalar_mut(-0.1);
    let out = assemble_patches(&g, &est).unwrap();
    assert!((out.get(0, 1) - 0.5).abs() < 1e-15);
    assert!((out.get(0, 0) - 0.6).abs() < 1e-15);
}

#[test]
fn psnr_values() {
    let a = random_image(5, 10, 10);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    let flat = ImagePlane::filled(4, 4, 0.5).unwrap();
    let off = ImagePlane::filled(4, 4, 0.6).unwrap();
    assert!((psnr(&flat, &off).unwrap() - 20.0).abs() < 1e-9);
    let b = random_image(6, 10, 10);
    let mse: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 100.0;
    assert!((psnr(&a, &b).unwrap() + 10.0 * mse.log10()).abs() < 1e-12);
    assert!(psnr(&a, &ImagePlane::filled(5, 20, 0.0).unwrap()).is_err());
}

#[test]
fn lossless_measurement_ceiling() {
    let img = smooth_image(16, 16, 0.2);
    let g = extract_patches(&img, 8, 8, true, None).unwrap();
    let d = Dictionary::new(g.patches().clone(), AtomSource::ExampleSubset).unwrap();
    let rec = compressive_recover(&img, Recoverer::Dictionary(&d), 64, 1e-9, 1).unwrap();
    assert!(rec.psnr_db > 100.0, "{}", rec.psnr_db);
}

#[test]
fn compressive_recovery_is_seeded() {
    let img = smooth_image(16, 16, 0.7);
    let g = extract_patches(&img, 8, 4, true, None).unwrap();
    let d = Dictionary::new(g.patches().clone(), AtomSource::ExampleSubset).unwrap();
    let a = compressive_recover(&img, Recoverer::Dictionary(&d), 16, 0.01, 3).unwrap();
    let b = compressive_recover(&img, Recoverer::Dictionary(&d), 16, 0.01, 3).unwrap();
    assert_eq!(a, b);
    assert!(compressive_recover(&img, Recoverer::Dictionary(&d), 65, 0.01, 3).is_err());
}

#[test]
fn bicubic_interpolates_samples() {
    let low = random_image(7, 6, 5);
    let up = bicubic_upscale(&low, 2).unwrap();
    assert_eq!((up.width(), up.height()), (12, 10));
    for r in 0..5 {
        for c in 0..6 {
            assert!((up.get(2 * r, 2 * c) - low.get(r, c)).abs() < 1e-12);
        }
    }
    let flat = bicubic_upscale(&ImagePlane::filled(4, 4, 0.3).unwrap(), 2).unwrap();
    assert!(flat.pixels().iter().all(|p| (p - 0.3).abs() < 1e-12));
}

#[test]
fn features_vanish_on_flat_images() {
    let maps = gradient_features(&ImagePlane::filled(6, 6, 0.7).unwrap()).unwrap();
    assert!(maps.iter().all(|m| m.pixels().iter().all(|v| v.abs() < 1e-15)));
    let ramp = ImagePlane::from_fn(6, 6, |_, c| c as f64 * 0.1).unwrap();
    let [gx, gy, _] = gradient_features(&ramp).unwrap();
    assert!((gx.get(2, 2) - 0.2).abs() < 1e-12);
    assert_eq!(gy.get(2, 2), 0.0);
}

fn blur(w: usize, h: usize) -> DegradationOperator {
    DegradationOperator::BlurDownsample(BlurDownsample::binomial(w, h, 2).unwrap())
}

#[test]
fn consistent_start_is_a_fixed_point() {
    let y0 = random_image(8, 12, 12).to_vector();
    let op = blur(12, 12);
    let z = op.apply(&y0).unwrap();
    let (y, trace) = back_project(&y0, &z, &op, BackProjection::default()).unwrap();
    assert!((y - &y0).amax() < 1e-15);
    assert!(trace.objective.iter().all(|f| *f < 1e-28));
}

#[test]
fn back_projection_descends_and_converges() {
    let truth = smooth_image(16, 16, 0.1).to_vector();
    let op = blur(16, 16);
    let z = op.apply(&truth).unwrap();
    let y0 = random_image(9, 16, 16).to_vector();
    let (_, trace) = back_project(&y0, &z, &op, BackProjection::default()).unwrap();
    assert!(trace.objective.len() <= 21);
    for w in trace.objective.windows(2) {
        assert!(w[1] <= w[0], "{:?}", trace.objective);
    }
    let g = &trace.gradient_norm;
    assert!(g.last().unwrap() / g[0] <= 1e-5, "{g:?}");
}

#[test]
fn paired_training_and_superresolution() {
    let train: Vec<ImagePlane> = (0..2).map(|i| smooth_image(24, 24, i as f64)).collect();
    let cfg = SisrConfig::default();
    let set = PairedTrainingSet::from_images(&train, &cfg, 2, 1e-8, 500, 1).unwrap();
    assert_eq!(set.features.nrows(), FEATURE_MAPS * 25);
    assert_eq!(set.targets.nrows(), 25);
    for trainer in [PairedTrainer::RandExAv, PairedTrainer::BoostEx] {
        let model = train_paired(&set, 16, 3, trainer, Coder::OneSparse, 2).unwrap();
        assert!((model.betas().sum() - 1.0).abs() < 1e-9);
        let high = smooth_image(16, 16, 0.5);
        let low = blur_decimate(&high, 2).unwrap();
        let (out, trace) = superresolve(&low, &model, &cfg).unwrap();
        assert_eq!((out.width(), out.height()), (16, 16));
        let t = trace.unwrap();
        for w in t.objective.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let wrong = SisrConfig { scale: 3, ..cfg };
        assert!(superresolve(&low, &model, &wrong).is_err());
    }
}

#[test]
fn example_pairs_share_the_feature_scale() {
    let train = vec![smooth_image(20, 20, 0.3)];
    let set = PairedTrainingSet::from_images(&train, &SisrConfig::default(), 1, 1e-8, 10_000, 0).unwrap();
    let pd = PairedDictionary::from_examples(&set, &[0, 5]).unwrap();
    for (j, &i) in [0usize, 5].iter().enumerate() {
        let n = set.features.column(i).norm();
        assert!((pd.high.column(j) * n - set.targets.column(i)).amax() < 1e-12);
    }
    let pred = pd.predict(&set.features.columns(5, 1).into_owned(), Coder::OneSparse).unwrap();
    assert!((pred.column(0) - set.targets.column(5)).amax() < 1e-12);
}
