use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use sair::fba::{fba_fuse, fba_weights, fft3, ifft3, EnsembleConfig, Spectrum};
use sair::{Error, Volume};

fn random_volume(dims: [usize; 3], seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Volume::from_fn(dims, [1.0; 3], |_, _, _| rng.gen_range(-1.0..1.0)).unwrap()
}

fn max_abs_diff(a: &Volume, b: &Volume) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn constant_volume_has_only_a_dc_term() {
    let v = Volume::filled([4, 6, 5], [1.0; 3], 2.5).unwrap();
    let s = fft3(&v);
    assert!((s.data[0] - Complex64::new(2.5 * 120.0, 0.0)).norm() < 1e-10);
    assert!(s.data[1..].iter().all(|c| c.norm() < 1e-10));
}

#[test]
fn inverse_transform_round_trips() {
    let v = random_volume([8, 8, 8], 1);
    let back = ifft3(&fft3(&v), v.spacing()).unwrap();
    assert!(max_abs_diff(&v, &back) < 1e-10);
    let v = random_volume([5, 7, 3], 2);
    assert!(max_abs_diff(&v, &ifft3(&fft3(&v), [1.0; 3]).unwrap()) < 1e-10);
}

#[test]
fn parseval_holds_for_the_unnormalized_transform() {
    let v = random_volume([6, 8, 10], 3);
    let energy: f64 = v.data().iter().map(|x| x * x).sum();
    let spectral: f64 = fft3(&v).data.iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len() as f64;
    assert!((energy - spectral).abs() <= 1e-8 * energy);
}

#[test]
fn transform_matches_a_direct_dft() {
    let v = random_volume([3, 4, 5], 4);
    let s = fft3(&v);
    let [nx, ny, nz] = v.dims();
    for (kx, ky, kz) in [(0, 0, 0), (1, 2, 3), (2, 3, 4), (0, 1, 0)] {
        let mut acc = Complex64::new(0.0, 0.0);
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let phase = -2.0
                        * PI
                        * ((kx * x) as f64 / nx as f64 + (ky * y) as f64 / ny as f64 + (kz * z) as f64 / nz as f64);
                    acc += v.get(x, y, z) * Complex64::from_polar(1.0, phase);
                }
            }
        }
        let got = s.data[(kx * ny + ky) * nz + kz];
        assert!((got - acc).norm() < 1e-10, "{got} vs {acc}");
    }
}

fn spectrum(values: Vec<Complex64>) -> Spectrum {
    Spectrum {
        dims: [1, 1, values.len()],
        data: values,
    }
}

#[test]
fn weights_follow_relative_power() {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let a = spectrum(vec![c(3.0, 4.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 1.0)]);
    let b = spectrum(vec![c(0.0, 0.0), c(0.0, 2.0), c(0.0, 0.0), c(1.0, -1.0)]);
    let w = fba_weights(&[a, b]).unwrap();
    // (a, 0) at the first frequency gives (1, 0)
    assert_eq!((w[0][0], w[1][0]), (1.0, 0.0));
    assert_eq!((w[0][1], w[1][1]), (0.5, 0.5));
    // no energy anywhere: uniform fallback
    assert_eq!((w[0][2], w[1][2]), (0.5, 0.5));
    assert!((w[0][3] - 0.5).abs() < 1e-15);
}

#[test]
fn identical_members_get_uniform_weights() {
    let s = fft3(&random_volume([4, 4, 4], 5));
    let w = fba_weights(&vec![s; 5]).unwrap();
    assert!(w.iter().flatten().all(|&x| (x - 0.2).abs() < 1e-15));
}

#[test]
fn weights_sum_to_one_on_random_stacks() {
    let stack: Vec<Spectrum> = (0..7).map(|m| fft3(&random_volume([6, 5, 4], 10 + m))).collect();
    let w = fba_weights(&stack).unwrap();
    for f in 0..w[0].len() {
        let sum: f64 = w.iter().map(|wm| wm[f]).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|wm| (0.0..=1.0).contains(&wm[f])));
    }
}

#[test]
fn fusing_copies_or_a_single_member_is_the_identity() {
    let v = random_volume([6, 6, 6], 6);
    let fused = fba_fuse(&vec![v.clone(); 4], &EnsembleConfig::with_members(4)).unwrap();
    assert!(max_abs_diff(&fused, &v) < 1e-9);
    assert_eq!(fused.spacing(), v.spacing());
    assert_eq!(fba_fuse(&[v.clone()], &EnsembleConfig::with_members(1)).unwrap(), v);
}

#[test]
fn disjoint_sinusoids_are_both_kept_at_full_amplitude() {
    let n = 16;
    let a = Volume::from_fn([n, n, n], [1.0; 3], |_, _, z| (2.0 * PI * 3.0 * z as f64 / n as f64).cos()).unwrap();
    let b = Volume::from_fn([n, n, n], [1.0; 3], |x, _, _| 0.5 * (2.0 * PI * 5.0 * x as f64 / n as f64).sin())
        .unwrap();
    let fused = fba_fuse(&[a.clone(), b.clone()], &EnsembleConfig::with_members(2)).unwrap();
    let both = a.zip_map(&b, |p, q| p + q).unwrap();
    assert!(max_abs_diff(&fused, &both) < 1e-8);
}

#[test]
fn fusion_rejects_bad_inputs() {
    let a = random_volume([4, 4, 4], 7);
    let b = random_volume([4, 4, 5], 8);
    assert!(matches!(
        fba_fuse(&[a.clone(), b], &EnsembleConfig::with_members(2)),
        Err(Error::DimMismatch(_))
    ));
    assert!(fba_fuse(&[], &EnsembleConfig::default()).is_err());
    let cfg = EnsembleConfig {
        p_exponent: 3,
        ..EnsembleConfig::default()
    };
    assert!(fba_fuse(&[a.clone(), a], &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fusion_is_jointly_scale_equivariant(seed in any::<u64>(), alpha in 0.01f64..50.0) {
        let members: Vec<Volume> = (0..3).map(|m| random_volume([5, 4, 6], seed.wrapping_add(m))).collect();
        let scaled: Vec<Volume> = members.iter().map(|v| v.map(|x| alpha * x).unwrap()).collect();
        let cfg = EnsembleConfig::with_members(3);
        let lhs = fba_fuse(&scaled, &cfg).unwrap();
        let rhs = fba_fuse(&members, &cfg).unwrap().map(|x| alpha * x).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-9 * alpha.max(1.0));
    }

    /// A per-frequency convex combination never exceeds the largest member
    /// magnitude. It can fall below the smallest one when phases disagree,
    /// so the lower bound is checked on members sharing their phases.
    #[test]
    fn fused_magnitudes_stay_within_member_bounds(seed in any::<u64>(), scales in prop::collection::vec(0.1f64..3.0, 2..5)) {
        let members: Vec<Volume> = (0..scales.len() as u64).map(|m| random_volume([4, 5, 6], seed.wrapping_add(m))).collect();
        let cfg = EnsembleConfig::with_members(members.len());
        let spectra: Vec<Spectrum> = members.iter().map(fft3).collect();
        let fused = fft3(&fba_fuse(&members, &cfg).unwrap());
        for f in 0..fused.data.len() {
            let max = spectra.iter().map(|s| s.data[f].norm()).fold(0.0, f64::max);
            prop_assert!(fused.data[f].norm() <= max + 1e-9);
        }

        let base = random_volume([4, 5, 6], seed ^ 0xABCD);
        let aligned: Vec<Volume> = scales.iter().map(|&a| base.map(|x| a * x).unwrap()).collect();
        let spectra: Vec<Spectrum> = aligned.iter().map(fft3).collect();
        let fused = fft3(&fba_fuse(&aligned, &cfg).unwrap());
        for f in 0..fused.data.len() {
            let mags: Vec<f64> = spectra.iter().map(|s| s.data[f].norm()).collect();
            let lo = mags.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = mags.iter().copied().fold(0.0, f64::max);
            let m = fused.data[f].norm();
            prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9, "{m} outside [{lo}, {hi}]");
        }
    }
}
