//! Deterministic geometric phantoms used as high-resolution ground truth.
//!
//! A phantom is an outer ellipsoid ("head") holding nested, randomly posed
//! inner ellipsoids at distinct intensity plateaus, thin dark ellipsoidal
//! shells ("ridges") and an optional band-limited texture. Every transition
//! uses a compactly supported smoothstep, so the volume is exactly flat away
//! from boundaries when the texture is off.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask, Volume};

pub const MIN_PHANTOM_SIZE: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub size: usize,
    pub seed: u64,
    pub n_ellipsoids: usize,
    pub texture_amplitude: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 96,
            seed: 0,
            n_ellipsoids: 6,
            texture_amplitude: 0.05,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < MIN_PHANTOM_SIZE {
            return Err(Error::PhantomTooSmall(self.size));
        }
        if self.n_ellipsoids < 3 {
            return Err(Error::InvalidConfig(format!(
                "phantom needs at least 3 ellipsoids, got {}",
                self.n_ellipsoids
            )));
        }
        if !(0.0..=0.2).contains(&self.texture_amplitude) {
            return Err(Error::InvalidConfig(format!(
                "texture amplitude {} outside [0, 0.2]",
                self.texture_amplitude
            )));
        }
        Ok(())
    }
}

/// Oriented ellipsoid in normalized coordinates (`[-1, 1]^3` spans the grid).
#[derive(Clone, Debug)]
struct Ellipsoid {
    center: [f64; 3],
    semi_axes: [f64; 3],
    // rows are the body axes
    rotation: [[f64; 3]; 3],
}

impl Ellipsoid {
    /// Scaled radial coordinate: 1 on the surface.
    fn radius(&self, p: [f64; 3]) -> f64 {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let mut acc = 0.0;
        for (row, a) in self.rotation.iter().zip(&self.semi_axes) {
            let q = row[0] * d[0] + row[1] * d[1] + row[2] * d[2];
            acc += (q / a) * (q / a);
        }
        acc.sqrt()
    }
}

fn rotation_matrix(yaw: f64, pitch: f64, roll: f64) -> [[f64; 3]; 3] {
    let (sa, ca) = yaw.sin_cos();
    let (sb, cb) = pitch.sin_cos();
    let (sc, cc) = roll.sin_cos();
    [
        [ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
        [sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
        [-sb, cb * sc, cb * cc],
    ]
}

/// 1 inside, 0 outside, C¹ smoothstep across `|r - 1| < width`.
fn inside(r: f64, width: f64) -> f64 {
    let t = ((1.0 + width - r) / (2.0 * width)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Plateau levels handed out to inner ellipsoids, cycling when exhausted.
const PLATEAUS: [f64; 5] = [0.75, 0.55, 0.95, 0.2, 0.65];
const OUTER_LEVEL: f64 = 0.4;
const RIDGE_LEVEL: f64 = 0.08;

struct Layout {
    outer: Ellipsoid,
    inner: Vec<(Ellipsoid, f64)>,
    ridges: Vec<(Ellipsoid, f64)>,
    // (frequency vector in cycles/voxel, phase)
    waves: Vec<([f64; 3], f64)>,
}

fn layout(spec: &PhantomSpec) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let outer = Ellipsoid {
        center: [0.0; 3],
        semi_axes: [0.86, 0.76, 0.82],
        rotation: rotation_matrix(rng.gen_range(-0.2..0.2), 0.0, 0.0),
    };
    let random_ellipsoid = |rng: &mut ChaCha8Rng, scale: f64| Ellipsoid {
        center: [
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.25..0.25),
            rng.gen_range(-0.3..0.3),
        ],
        semi_axes: [
            scale * rng.gen_range(0.18..0.4),
            scale * rng.gen_range(0.12..0.35),
            scale * rng.gen_range(0.15..0.4),
        ],
        rotation: rotation_matrix(
            rng.gen_range(0.0..std::f64::consts::PI),
            rng.gen_range(-0.8..0.8),
            rng.gen_range(0.0..std::f64::consts::PI),
        ),
    };
    let inner = (0..spec.n_ellipsoids)
        .map(|i| (random_ellipsoid(&mut rng, 1.0), PLATEAUS[i % PLATEAUS.len()]))
        .collect();
    let n_ridges = 4 + spec.n_ellipsoids;
    let ridges = (0..n_ridges)
        .map(|_| {
            let e = random_ellipsoid(&mut rng, 1.6);
            (e, rng.gen_range(0.015..0.03))
        })
        .collect();
    let waves = (0..12)
        .map(|_| {
            // each component in 0.05..0.45 cycles/voxel with random sign, so
            // every axis carries texture on both sides of a coarse Nyquist
            let mut f = [0.0; 3];
            for c in f.iter_mut() {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                *c = sign * rng.gen_range(0.05..0.45);
            }
            (f, rng.gen_range(0.0..2.0 * std::f64::consts::PI))
        })
        .collect();
    Layout {
        outer,
        inner,
        ridges,
        waves,
    }
}

/// Generates a phantom volume in `[0, 1]` with unit spacing and its outer
/// ellipsoid mask.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume, Mask)> {
    spec.validate()?;
    let n = spec.size;
    let lay = layout(spec);
    let half = (n as f64 - 1.0) / 2.0;
    // transition half-width: about one voxel in normalized units
    let w = 1.0 / half;
    let norm = |i: usize| (i as f64 - half) / half;
    let amp = spec.texture_amplitude / (lay.waves.len() as f64).sqrt();

    let mut data = Vec::with_capacity(n * n * n);
    let mut mask = Vec::with_capacity(n * n * n);
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let p = [norm(x), norm(y), norm(z)];
                let r_outer = lay.outer.radius(p);
                let m_outer = inside(r_outer, w / lay.outer.semi_axes[0]);
                mask.push(r_outer <= 1.0);
                if m_outer == 0.0 {
                    data.push(0.0);
                    continue;
                }
                let mut v = OUTER_LEVEL;
                for (e, level) in &lay.inner {
                    let m = inside(e.radius(p), w / e.semi_axes[0]);
                    v += (level - v) * m;
                }
                for (e, thickness) in &lay.ridges {
                    let r = e.radius(p);
                    // shell of relative thickness `thickness`
                    let m = inside(((r - 1.0) / thickness).abs(), w / (e.semi_axes[0] * thickness));
                    v += (RIDGE_LEVEL - v) * m;
                }
                if amp > 0.0 {
                    let t: f64 = lay
                        .waves
                        .iter()
                        .map(|(f, ph)| {
                            let arg = f[0] * x as f64 + f[1] * y as f64 + f[2] * z as f64;
                            (2.0 * std::f64::consts::PI * arg + ph).cos()
                        })
                        .sum();
                    v += amp * t;
                }
                data.push((v * m_outer).clamp(0.0, 1.0));
            }
        }
    }
    let volume = Volume::new([n, n, n], [1.0; 3], data)?;
    let mask = Mask::new([n, n, n], mask)?;
    Ok((volume, mask))
}
