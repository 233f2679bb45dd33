use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sair::operators::{
    add_gaussian_noise, apply_forward_model, blur_axis, downsample_axis, gaussian_profile, rotate_z,
    upsample_axis_bicubic, ForwardModelConfig, SliceProfile,
};
use sair::{Axis, Error, Volume};

fn random_volume(dims: [usize; 3], seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.iter().product::<usize>()).map(|_| rng.gen::<f64>()).collect();
    Volume::new(dims, [1.0; 3], data).unwrap()
}

fn max_abs_diff(a: &Volume, b: &Volume) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Mirror index written out case by case: `-1 -> 1`, `n -> n - 2`.
fn mirror(i: isize, n: isize) -> usize {
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}

#[test]
fn gaussian_profile_sums_to_one_and_is_symmetric() {
    for r in 1..=8 {
        let p = gaussian_profile(r as f64);
        let taps = p.taps();
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..taps.len() {
            assert_eq!(taps[k], taps[taps.len() - 1 - k]);
        }
    }
}

#[test]
fn gaussian_profile_r1_centre_tap() {
    // FWHM of one sample puts the neighbours at 2^-4 of the peak and the
    // next ones at 2^-16, so the centre carries 1 / (1 + 2/16 + 2/65536)
    let p = gaussian_profile(1.0);
    assert_eq!(p.taps().len(), 5);
    let c = p.taps()[2];
    assert!((c - 1.0 / (1.0 + 2.0 / 16.0 + 2.0 / 65536.0)).abs() < 1e-12);
}

#[test]
fn gaussian_profile_r4_half_maximum_width() {
    let p = gaussian_profile(4.0);
    let taps = p.taps();
    let c = p.half_width();
    let peak = taps[c];
    // linear interpolation of the half-maximum crossing on the right flank
    let mut width = None;
    for k in c..taps.len() - 1 {
        let (a, b) = (taps[k], taps[k + 1]);
        if a >= peak / 2.0 && b < peak / 2.0 {
            let t = (a - peak / 2.0) / (a - b);
            width = Some(2.0 * ((k - c) as f64 + t));
        }
    }
    let width = width.expect("crossing");
    assert!((width - 4.0).abs() / 4.0 < 0.02, "{width}");
}

#[test]
fn blur_matches_brute_force_convolution() {
    let v = random_volume([8, 8, 8], 11);
    let p = gaussian_profile(3.0);
    let taps = p.taps();
    let h = p.half_width() as isize;
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        let out = blur_axis(&v, &p, axis).unwrap();
        let ai = axis.index();
        let mut max = 0.0f64;
        for x in 0..8 {
            for y in 0..8 {
                for z in 0..8 {
                    let mut acc = 0.0;
                    for (j, w) in taps.iter().enumerate() {
                        let mut c = [x, y, z];
                        c[ai] = mirror(c[ai] as isize + j as isize - h, 8);
                        acc += w * v.get(c[0], c[1], c[2]);
                    }
                    max = max.max((acc - out.get(x, y, z)).abs());
                }
            }
        }
        assert!(max < 1e-10, "{axis:?}: {max}");
    }
}

#[test]
fn blur_preserves_constants_and_reproduces_impulses() {
    let c = Volume::filled([6, 7, 9], [1.0; 3], 0.37).unwrap();
    let p = gaussian_profile(4.0);
    let out = blur_axis(&c, &p, Axis::Z).unwrap();
    assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-12));

    let v = Volume::from_fn([3, 3, 21], [1.0; 3], |x, y, z| {
        if (x, y, z) == (1, 1, 10) {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    let out = blur_axis(&v, &p, Axis::Z).unwrap();
    let h = p.half_width();
    for (k, w) in p.taps().iter().enumerate() {
        assert!((out.get(1, 1, 10 - h + k) - w).abs() < 1e-15);
    }
}

#[test]
fn blur_rejects_kernels_longer_than_twice_the_axis() {
    let v = random_volume([4, 4, 3], 1);
    let p = SliceProfile::boxcar(7).unwrap();
    assert!(matches!(
        blur_axis(&v, &p, Axis::Z),
        Err(Error::KernelTooLong { len: 7, dim: 3 })
    ));
}

#[test]
fn downsample_keeps_every_rth_sample() {
    let v = Volume::from_fn([1, 1, 12], [1.0, 1.0, 1.5], |_, _, z| z as f64).unwrap();
    let d = downsample_axis(&v, 3, Axis::Z).unwrap();
    assert_eq!(d.data(), &[0.0, 3.0, 6.0, 9.0]);
    assert_eq!(d.spacing(), [1.0, 1.0, 4.5]);
    assert_eq!(downsample_axis(&v, 1, Axis::Z).unwrap(), v);
    assert!(matches!(
        downsample_axis(&v, 13, Axis::Z),
        Err(Error::FactorTooLarge { .. })
    ));
}

#[test]
fn coarse_nyquist_sinusoid_is_scaled_by_the_kernel_response() {
    for r in 2..=6usize {
        let p = gaussian_profile(r as f64);
        let f = 1.0 / (2.0 * r as f64);
        // (n - 1) a multiple of r keeps the cosine symmetric about both ends
        let n = 12 * r + 1;
        let v = Volume::from_fn([2, 2, n], [1.0; 3], |_, _, z| {
            (2.0 * std::f64::consts::PI * f * z as f64).cos()
        })
        .unwrap();
        let cfg = ForwardModelConfig {
            r,
            profile: p.clone(),
            sigma: 0.0,
            seed: 0,
        };
        let lr = apply_forward_model(&v, &cfg, Axis::Z).unwrap();
        // independent DTFT: sum_k w_k cos(2 pi f k) over centred offsets
        let h = p.half_width() as f64;
        let gain: f64 = p
            .taps()
            .iter()
            .enumerate()
            .map(|(k, w)| w * (2.0 * std::f64::consts::PI * f * (k as f64 - h)).cos())
            .sum();
        for i in 0..lr.dims()[2] {
            let expect = if i % 2 == 0 { gain } else { -gain };
            assert!((lr.get(1, 0, i) - expect).abs() < 1e-6, "r={r} i={i}");
        }
    }
}

#[test]
fn upsample_is_interpolating_and_reproduces_ramps() {
    let v = random_volume([3, 2, 9], 5);
    for r in 2..=5 {
        let u = upsample_axis_bicubic(&v, r, Axis::Z).unwrap();
        assert_eq!(u.dims(), [3, 2, 9 * r]);
        for x in 0..3 {
            for y in 0..2 {
                for z in 0..9 {
                    assert_eq!(u.get(x, y, r * z), v.get(x, y, z));
                }
            }
        }
    }
    let ramp = Volume::from_fn([2, 2, 10], [1.0, 1.0, 4.0], |_, _, z| 0.3 + 1.7 * z as f64).unwrap();
    let u = upsample_axis_bicubic(&ramp, 4, Axis::Z).unwrap();
    assert_eq!(u.spacing(), [1.0, 1.0, 1.0]);
    // away from the clamped ends: fine index j sits at coarse position j / 4
    for j in 4..4 * 8 {
        let expect = 0.3 + 1.7 * j as f64 / 4.0;
        assert!((u.get(0, 1, j) - expect).abs() < 1e-10);
    }
    let c = Volume::filled([2, 2, 5], [1.0; 3], -2.5).unwrap();
    let u = upsample_axis_bicubic(&c, 3, Axis::Z).unwrap();
    assert!(u.data().iter().all(|v| (v + 2.5).abs() < 1e-12));
    assert!(matches!(
        upsample_axis_bicubic(&random_volume([2, 2, 3], 0), 2, Axis::Z),
        Err(Error::AxisTooShort { dim: 3 })
    ));
}

#[test]
fn rotation_by_zero_and_ninety_degrees() {
    let v = random_volume([9, 9, 3], 7);
    assert_eq!(rotate_z(&v, 0.0).unwrap(), v);
    let r = rotate_z(&v, 90.0).unwrap();
    // a quarter turn about the centre sends (x, y) to (n-1-y, x)
    let n = 9;
    let mut max = 0.0f64;
    for x in 1..n - 1 {
        for y in 1..n - 1 {
            for z in 0..3 {
                max = max.max((r.get(x, y, z) - v.get(y, n - 1 - x, z)).abs());
            }
        }
    }
    assert!(max < 1e-6, "{max}");
    assert!(matches!(
        rotate_z(&random_volume([4, 5, 2], 0), 10.0),
        Err(Error::NonSquare { nx: 4, ny: 5 })
    ));
}

#[test]
fn rotation_round_trip_on_smooth_data() {
    let n = 48;
    let c = (n as f64 - 1.0) / 2.0;
    let v = Volume::from_fn([n, n, 2], [1.0; 3], |x, y, z| {
        let (dx, dy) = ((x as f64 - c) / c, (y as f64 - c) / c);
        0.5 + 0.4 * (3.0 * dx + z as f64).sin() * (2.0 * dy).cos()
    })
    .unwrap();
    for theta in [17.0, 36.0, 45.0, 72.0, 150.0] {
        let back = rotate_z(&rotate_z(&v, theta).unwrap(), -theta).unwrap();
        let mut max = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                let rad = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
                if rad > c - 2.0 {
                    continue;
                }
                for z in 0..2 {
                    max = max.max((back.get(x, y, z) - v.get(x, y, z)).abs());
                }
            }
        }
        assert!(max < 1e-2, "theta {theta}: {max}");
    }
}

#[test]
fn noise_statistics_and_determinism() {
    let v = Volume::filled([96, 96, 96], [1.0; 3], 0.0).unwrap();
    let a = add_gaussian_noise(&v, 0.1, 42).unwrap();
    let n = a.len() as f64;
    let mean = a.data().iter().sum::<f64>() / n;
    let var = a.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    assert!((0.099..=0.101).contains(&std), "{std}");
    assert_eq!(add_gaussian_noise(&v, 0.1, 42).unwrap(), a);
    assert_ne!(add_gaussian_noise(&v, 0.1, 43).unwrap(), a);
    assert_eq!(add_gaussian_noise(&v, 0.0, 42).unwrap(), v);
}

#[test]
fn forward_model_is_the_chained_operators() {
    let v = random_volume([5, 6, 17], 3);
    let cfg = ForwardModelConfig::gaussian(3, 0.05, 9);
    let lr = apply_forward_model(&v, &cfg, Axis::Z).unwrap();
    let chained = add_gaussian_noise(
        &downsample_axis(&blur_axis(&v, &cfg.profile, Axis::Z).unwrap(), 3, Axis::Z).unwrap(),
        0.05,
        9,
    )
    .unwrap();
    assert_eq!(lr, chained);
    assert_eq!(lr.dims(), [5, 6, 5]);

    let c = Volume::filled([4, 4, 16], [1.0; 3], 0.6).unwrap();
    let lr = apply_forward_model(&c, &ForwardModelConfig::gaussian(4, 0.0, 0), Axis::Z).unwrap();
    assert_eq!(lr.dims(), [4, 4, 4]);
    assert!(lr.data().iter().all(|v| (v - 0.6).abs() < 1e-12));
}

#[test]
fn forward_model_rejects_bad_configs() {
    let v = random_volume([4, 4, 8], 0);
    let mut cfg = ForwardModelConfig::gaussian(2, -0.1, 0);
    assert!(apply_forward_model(&v, &cfg, Axis::Z).is_err());
    cfg.sigma = 0.0;
    cfg.r = 0;
    assert!(apply_forward_model(&v, &cfg, Axis::Z).is_err());
    cfg.r = 9;
    assert!(matches!(
        apply_forward_model(&v, &cfg, Axis::Z),
        Err(Error::FactorTooLarge { factor: 9, dim: 8 })
    ));
}

#[test]
fn forward_model_along_x_is_the_permuted_z_model() {
    let v = random_volume([8, 8, 8], 21);
    let cfg = ForwardModelConfig::gaussian(2, 0.0, 0);
    let along_x = apply_forward_model(&v, &cfg, Axis::X).unwrap();
    let permuted = apply_forward_model(&v.swap_axes(Axis::X, Axis::Z), &cfg, Axis::Z)
        .unwrap()
        .swap_axes(Axis::X, Axis::Z);
    assert!(max_abs_diff(&along_x, &permuted) < 1e-12);
}

fn small_dims() -> impl Strategy<Value = [usize; 3]> {
    (4usize..9, 4usize..9, 6usize..12).prop_map(|(a, b, c)| [a, b, c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn operators_are_linear(dims in small_dims(), seed in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0, r in 2usize..4) {
        let u = random_volume(dims, seed);
        let w = random_volume(dims, seed.wrapping_add(1));
        let combo = u.zip_map(&w, |a, b| alpha * a + beta * b).unwrap();
        let p = gaussian_profile(r as f64);
        let ops: Vec<Box<dyn Fn(&Volume) -> Volume>> = vec![
            Box::new(|v| blur_axis(v, &p, Axis::Z).unwrap()),
            Box::new(|v| downsample_axis(v, r, Axis::Y).unwrap()),
            Box::new(|v| upsample_axis_bicubic(v, r, Axis::X).unwrap()),
            Box::new(|v| apply_forward_model(v, &ForwardModelConfig::gaussian(r, 0.0, 0), Axis::Z).unwrap()),
        ];
        for op in &ops {
            let lhs = op(&combo);
            let rhs = op(&u).zip_map(&op(&w), |a, b| alpha * a + beta * b).unwrap();
            prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-10);
        }
        let n = dims[0].min(dims[1]);
        let sq = |v: &Volume| v.crop([n, n, dims[2]]).unwrap();
        let rot = |v: &Volume| rotate_z(&sq(v), 33.0).unwrap();
        let lhs = rot(&combo);
        let rhs = rot(&u).zip_map(&rot(&w), |a, b| alpha * a + beta * b).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn axis_operators_commute_with_permutation(dims in (4usize..9, 6usize..10, 6usize..12).prop_map(|(a, b, c)| [a, b, c]), seed in any::<u64>(), r in 2usize..4) {
        let v = random_volume(dims, seed);
        let p = gaussian_profile(r as f64);
        let t = |v: &Volume| v.swap_axes(Axis::Y, Axis::Z);
        let a = blur_axis(&v, &p, Axis::Y).unwrap();
        let b = t(&blur_axis(&t(&v), &p, Axis::Z).unwrap());
        prop_assert!(max_abs_diff(&a, &b) < 1e-12);
        let a = downsample_axis(&v, r, Axis::Y).unwrap();
        let b = t(&downsample_axis(&t(&v), r, Axis::Z).unwrap());
        prop_assert_eq!(a, b);
        let a = upsample_axis_bicubic(&v, r, Axis::Y).unwrap();
        let b = t(&upsample_axis_bicubic(&t(&v), r, Axis::Z).unwrap());
        prop_assert!(max_abs_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn operators_stay_finite(dims in small_dims(), seed in any::<u64>(), sigma in 0.0f64..0.3) {
        let v = random_volume(dims, seed);
        let lr = apply_forward_model(&v, &ForwardModelConfig::gaussian(2, sigma, seed), Axis::Z).unwrap();
        prop_assert!(lr.data().iter().all(|x| x.is_finite()));
    }
}
