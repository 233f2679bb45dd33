use std::collections::BTreeSet;

use sair::dataset::{build_training_set, rotated_coverage, training_angles, TrainConfig};
use sair::fba::fft3;
use sair::operators::{
    add_gaussian_noise, blur_axis, downsample_axis, rotate_z, upsample_axis_bicubic, SliceProfile,
};
use sair::{generate_phantom, upsample_lowres, Axis, Error, PhantomSpec, Volume};

fn spec(size: usize, seed: u64, texture: f64) -> PhantomSpec {
    PhantomSpec {
        size,
        seed,
        n_ellipsoids: 6,
        texture_amplitude: texture,
    }
}

#[test]
fn phantom_is_deterministic_bounded_and_masked() {
    let s = spec(64, 3, 0.05);
    let (a, ma) = generate_phantom(&s).unwrap();
    let (b, mb) = generate_phantom(&s).unwrap();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(ma.fraction() >= 0.2, "{}", ma.fraction());
    let (c, _) = generate_phantom(&spec(64, 4, 0.05)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn untextured_phantom_is_flat_away_from_boundaries() {
    let (v, _) = generate_phantom(&spec(48, 1, 0.0)).unwrap();
    let n = 48;
    let mut flat_values = BTreeSet::new();
    let mut flat = 0usize;
    let mut interior = 0usize;
    for x in 1..n - 1 {
        for y in 1..n - 1 {
            for z in 1..n - 1 {
                interior += 1;
                let g = [
                    v.get(x + 1, y, z) - v.get(x - 1, y, z),
                    v.get(x, y + 1, z) - v.get(x, y - 1, z),
                    v.get(x, y, z + 1) - v.get(x, y, z - 1),
                ];
                let mag = 0.5 * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                if mag < 1e-6 {
                    flat += 1;
                    flat_values.insert((v.get(x, y, z) * 1e9).round() as i64);
                }
            }
        }
    }
    // most of the grid is plateau, and plateaus take only a few levels
    assert!(flat as f64 > 0.6 * interior as f64, "{flat}/{interior}");
    assert!(flat_values.len() <= 12, "{flat_values:?}");
}

#[test]
fn phantom_has_detail_beyond_the_coarse_nyquist_on_every_axis() {
    for (n, seed) in [(64usize, 0u64), (64, 1), (64, 2), (96, 0)] {
        nyquist_band_check(n, seed);
    }
}

fn nyquist_band_check(n: usize, seed: u64) {
    let (v, _) = generate_phantom(&spec(n, seed, 0.05)).unwrap();
    let mean = v.data().iter().sum::<f64>() / v.len() as f64;
    let centred = v.map(|x| x - mean).unwrap();
    let s = fft3(&centred);
    let total: f64 = s.data.iter().map(|c| c.norm_sqr()).sum();
    for r in [2usize, 4] {
        for axis in 0..3 {
            let mut band = 0.0;
            for (idx, c) in s.data.iter().enumerate() {
                let k = [idx / (n * n), (idx / n) % n, idx % n][axis];
                let f = k.min(n - k) as f64 / n as f64;
                if f > 0.5 / r as f64 {
                    band += c.norm_sqr();
                }
            }
            eprintln!("n={n} seed {seed} r={r} axis {axis}: {:.4}", band / total);
            assert!(band / total > 0.01, "n={n} seed {seed} r={r} axis {axis}: {}", band / total);
        }
    }
}

#[test]
fn phantom_rejects_invalid_specs() {
    assert!(matches!(generate_phantom(&spec(8, 0, 0.0)), Err(Error::PhantomTooSmall(8))));
    let mut s = spec(32, 0, 0.0);
    s.n_ellipsoids = 2;
    assert!(generate_phantom(&s).is_err());
    assert!(generate_phantom(&spec(32, 0, 0.3)).is_err());
}

fn small_upsampled() -> Volume {
    let (gt, _) = generate_phantom(&spec(32, 5, 0.05)).unwrap();
    gt
}

#[test]
fn degenerate_degradation_gives_identity_pairs() {
    let x_up = small_upsampled();
    let cfg = TrainConfig {
        n_train: 1,
        r: 1,
        profile: SliceProfile::delta(),
        sigma: 0.0,
        seed: 0,
        min_coverage: 0.5,
    };
    let pairs = build_training_set(&x_up, &cfg).unwrap();
    assert_eq!(pairs.len(), 32);
    for p in &pairs {
        assert_eq!(p.input, p.target);
    }
}

#[test]
fn pair_count_shapes_and_provenance() {
    let x_up = small_upsampled();
    let cfg = TrainConfig::new(3, 0.02, 9);
    let pairs = build_training_set(&x_up, &cfg).unwrap();
    // a square rotated about its centre never loses half its area
    for theta in training_angles(10) {
        assert!(rotated_coverage(32, theta).unwrap() >= 0.5);
    }
    assert_eq!(pairs.len(), 10 * 32);
    let angles: BTreeSet<i64> = pairs.iter().map(|p| (p.angle * 1e6) as i64).collect();
    assert_eq!(angles.len(), 10);
    for p in &pairs {
        assert_eq!(p.input.shape(), p.target.shape());
        assert!(p.input.data().iter().chain(p.target.data()).all(|v| v.is_finite()));
    }
    assert_eq!(build_training_set(&x_up, &cfg).unwrap(), pairs);
}

#[test]
fn inputs_match_the_hand_composed_chain() {
    let x_up = small_upsampled();
    let mut cfg = TrainConfig::new(4, 0.05, 77);
    cfg.n_train = 5;
    let pairs = build_training_set(&x_up, &cfg).unwrap();
    let index = 3;
    let theta = training_angles(5)[index];
    let rotated = rotate_z(&x_up, theta).unwrap();
    let blurred = blur_axis(&rotated, &cfg.profile, Axis::X).unwrap();
    let coarse = downsample_axis(&blurred, 4, Axis::X).unwrap();
    let noisy = add_gaussian_noise(&coarse, 0.05, 77 ^ index as u64).unwrap();
    let input = upsample_axis_bicubic(&noisy, 4, Axis::X).unwrap();
    for z in [0usize, 13, 31] {
        let p = pairs
            .iter()
            .find(|p| p.angle == theta && p.slice == z)
            .expect("pair present");
        assert_eq!(p.input, input.axial_slice(z));
        assert_eq!(p.target, rotated.axial_slice(z));
    }
}

#[test]
fn training_set_requires_square_planes() {
    let v = Volume::filled([8, 9, 8], [1.0; 3], 0.5).unwrap();
    assert!(matches!(
        build_training_set(&v, &TrainConfig::new(2, 0.0, 0)),
        Err(Error::NonSquare { .. })
    ));
}

#[test]
fn upsample_lowres_reaches_the_isotropic_grid() {
    let v = Volume::filled([4, 4, 6], [1.1, 1.1, 4.4], 0.3).unwrap();
    let up = upsample_lowres(&v, 4).unwrap();
    assert_eq!(up.dims(), [4, 4, 24]);
    let sp = up.spacing();
    assert!((sp[2] - 1.1).abs() < 1e-12);
}
