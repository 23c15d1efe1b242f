use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::{save_image, ImageSet};
use crate::error::{Error, Result};
use crate::tensor::{mix_seed, Rng, Tensor};

/// Fill pattern painted inside the silhouette.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TextureKind {
    Stripes,
    Dots,
    Checker,
    Noise,
}

/// Outline of the foreground object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Disc,
    Blob,
    Leaf,
}

macro_rules! named_enum {
    ($t:ty, $what:literal, $($v:ident => $s:literal),+) => {
        impl $t {
            pub fn name(self) -> &'static str {
                match self { $(Self::$v => $s),+ }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$v),)+
                    _ => Err(Error::Argument(format!(
                        concat!("unknown ", $what, " '{}', expected one of: {}"),
                        s,
                        [$($s),+].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(TextureKind, "texture kind", Stripes => "stripes", Dots => "dots", Checker => "checker", Noise => "noise");
named_enum!(ShapeKind, "shape kind", Disc => "disc", Blob => "blob", Leaf => "leaf");

/// Recipe for a deterministic set of synthetic images.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub texture: TextureKind,
    pub shape: ShapeKind,
    pub side: usize,
    pub count: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.side < 8 {
            return Err(Error::Argument(format!(
                "synthetic side must be at least 8, got {}",
                self.side
            )));
        }
        if self.count == 0 {
            return Err(Error::Argument("synthetic count must be positive".into()));
        }
        Ok(())
    }
}

type Rgb = [f64; 3];

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Uniform [0, 1) value tied to an integer lattice point.
fn lattice01(seed: u64, i: i64, j: i64) -> f64 {
    let h = mix_seed(mix_seed(seed, i as u64), j as u64);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

struct Silhouette {
    kind: ShapeKind,
    cx: f64,
    cy: f64,
    r: f64,
    angle: f64,
    harmonics: [(f64, f64); 3],
}

impl Silhouette {
    fn sample(kind: ShapeKind, side: f64, rng: &mut Rng) -> Self {
        let cx = side * (0.5 + rng.uniform(-0.1, 0.1));
        let cy = side * (0.5 + rng.uniform(-0.1, 0.1));
        let r = side * rng.uniform(0.32, 0.40);
        let angle = rng.uniform(0.0, std::f64::consts::PI);
        let mut harmonics = [(0.0, 0.0); 3];
        for h in &mut harmonics {
            *h = (rng.uniform(0.0, 0.1), rng.uniform(0.0, std::f64::consts::TAU));
        }
        Silhouette {
            kind,
            cx,
            cy,
            r,
            angle,
            harmonics,
        }
    }

    /// Approximate signed distance in pixels, positive inside.
    fn inside(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        match self.kind {
            ShapeKind::Disc => self.r - dx.hypot(dy),
            ShapeKind::Blob => {
                let th = dy.atan2(dx);
                let wobble: f64 = self
                    .harmonics
                    .iter()
                    .enumerate()
                    .map(|(k, (a, ph))| a * ((k as f64 + 2.0) * th + ph).cos())
                    .sum();
                self.r * (1.0 + wobble) - dx.hypot(dy)
            }
            ShapeKind::Leaf => {
                let (s, c) = self.angle.sin_cos();
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                let len = self.r * 1.2;
                if u.abs() >= len {
                    return -(u.abs() - len);
                }
                let q = u / len;
                0.7 * self.r * (1.0 - q * q) - v.abs()
            }
        }
    }
}

struct Fill {
    kind: TextureKind,
    c0: Rgb,
    c1: Rgb,
    angle: f64,
    scale: f64,
    phase: f64,
    radius: f64,
    seed: u64,
}

impl Fill {
    fn sample(kind: TextureKind, side: f64, rng: &mut Rng) -> Self {
        let (c0, c1) = match kind {
            TextureKind::Stripes => ([0.16, 0.50, 0.18], [0.60, 0.78, 0.25]),
            TextureKind::Dots => ([0.22, 0.52, 0.20], [0.50, 0.30, 0.12]),
            TextureKind::Checker => ([0.20, 0.48, 0.22], [0.70, 0.72, 0.30]),
            TextureKind::Noise => ([0.18, 0.46, 0.20], [0.58, 0.42, 0.16]),
        };
        let shift = [
            rng.uniform(-0.04, 0.04),
            rng.uniform(-0.04, 0.04),
            rng.uniform(-0.04, 0.04),
        ];
        let add = |c: Rgb| [c[0] + shift[0], c[1] + shift[1], c[2] + shift[2]];
        let scale = side
            * match kind {
                TextureKind::Stripes => rng.uniform(0.09, 0.14),
                TextureKind::Dots => rng.uniform(0.11, 0.14),
                TextureKind::Checker => rng.uniform(0.10, 0.14),
                TextureKind::Noise => rng.uniform(0.10, 0.16),
            };
        Fill {
            kind,
            c0: add(c0),
            c1: add(c1),
            angle: rng.uniform(0.0, std::f64::consts::PI),
            scale,
            phase: rng.uniform(0.0, std::f64::consts::TAU),
            radius: scale * rng.uniform(0.30, 0.38),
            seed: rng.next_u64(),
        }
    }

    fn value_noise(&self, x: f64, y: f64, cell: f64, salt: u64) -> f64 {
        let (gx, gy) = (x / cell, y / cell);
        let (ix, iy) = (gx.floor(), gy.floor());
        let (fx, fy) = (smoothstep(0.0, 1.0, gx - ix), smoothstep(0.0, 1.0, gy - iy));
        let (i, j) = (ix as i64, iy as i64);
        let s = mix_seed(self.seed, salt);
        let v00 = lattice01(s, i, j);
        let v10 = lattice01(s, i + 1, j);
        let v01 = lattice01(s, i, j + 1);
        let v11 = lattice01(s, i + 1, j + 1);
        let top = v00 + (v10 - v00) * fx;
        let bot = v01 + (v11 - v01) * fx;
        top + (bot - top) * fy
    }

    fn color(&self, x: f64, y: f64) -> Rgb {
        let (s, c) = self.angle.sin_cos();
        let u = x * c + y * s;
        let v = -x * s + y * c;
        let t = match self.kind {
            TextureKind::Stripes => {
                let w = (std::f64::consts::TAU * u / self.scale + self.phase).sin();
                smoothstep(-0.3, 0.3, w)
            }
            TextureKind::Checker => {
                let parity = ((u / self.scale).floor() + (v / self.scale).floor()) as i64;
                (parity.rem_euclid(2)) as f64
            }
            TextureKind::Noise => {
                let n = 0.65 * self.value_noise(x, y, self.scale, 1)
                    + 0.35 * self.value_noise(x, y, self.scale * 0.5, 2);
                smoothstep(0.35, 0.65, n)
            }
            TextureKind::Dots => {
                let g = self.scale;
                let (ci, cj) = ((x / g).floor() as i64, (y / g).floor() as i64);
                let mut m: f64 = 0.0;
                for di in -1..=1 {
                    for dj in -1..=1 {
                        let (i, j) = (ci + di, cj + dj);
                        let jx = lattice01(self.seed, i, 2 * j) - 0.5;
                        let jy = lattice01(self.seed, i, 2 * j + 1) - 0.5;
                        let px = (i as f64 + 0.5 + 0.4 * jx) * g;
                        let py = (j as f64 + 0.5 + 0.4 * jy) * g;
                        let d = (x - px).hypot(y - py);
                        m = m.max((self.radius - d + 0.5).clamp(0.0, 1.0));
                    }
                }
                m
            }
        };
        lerp(self.c0, self.c1, t)
    }
}

/// Renders one (1, 3, side, side) image in [-1, 1].
pub fn render_image(texture: TextureKind, shape: ShapeKind, side: usize, seed: u64) -> Tensor {
    let root = Rng::new(seed);
    let sf = side as f64;
    let sil = Silhouette::sample(shape, sf, &mut root.fork(0));
    let mut trng = root.fork(1);
    let fill = Fill::sample(texture, sf, &mut trng);
    let mut brng = root.fork(2);
    let bg0 = [
        0.55 + brng.uniform(-0.03, 0.03),
        0.58 + brng.uniform(-0.03, 0.03),
        0.64 + brng.uniform(-0.03, 0.03),
    ];
    let grad_angle = brng.uniform(0.0, std::f64::consts::TAU);
    let (gs, gc) = grad_angle.sin_cos();
    let mut noise = root.fork(3);

    let plane = side * side;
    let mut data = vec![0.0f32; 3 * plane];
    for y in 0..side {
        for x in 0..side {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let g = 0.06 * ((px / sf - 0.5) * gc + (py / sf - 0.5) * gs);
            let bg = [bg0[0] + g, bg0[1] + g, bg0[2] + g];
            let alpha = (sil.inside(px, py) + 0.5).clamp(0.0, 1.0);
            let col = if alpha > 0.0 {
                lerp(bg, fill.color(px, py), alpha)
            } else {
                bg
            };
            for (c, v) in col.iter().enumerate() {
                let v = (v + 0.015 * noise.normal()).clamp(0.0, 1.0);
                data[c * plane + y * side + x] = (2.0 * v - 1.0) as f32;
            }
        }
    }
    Tensor::from_vec([1, 3, side, side], data).expect("shape matches buffer")
}

/// Renders every image of `spec` in memory.
pub fn render_set(spec: &SyntheticSpec) -> Result<Vec<Tensor>> {
    spec.validate()?;
    Ok((0..spec.count)
        .map(|i| render_image(spec.texture, spec.shape, spec.side, mix_seed(spec.seed, i as u64)))
        .collect())
}

/// Renders `spec` and writes it as PNG files `dir/<tag>/<tag>_NNN.png`, all labelled `tag`.
pub fn write_synthetic_set(spec: &SyntheticSpec, tag: &str, dir: &Path) -> Result<ImageSet> {
    let sub = dir.join(tag);
    std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    let mut set = ImageSet::new(tag);
    for (i, img) in render_set(spec)?.iter().enumerate() {
        let p = sub.join(format!("{tag}_{i:03}.png"));
        save_image(img, &p)?;
        set.push(p, tag);
    }
    Ok(set)
}

/// Renders two domains that share silhouettes but differ in fill and writes
/// them as PNG under `dir/<tag>/`. Tags are the texture names, suffixed with
/// `_a`/`_b` when both specs use the same texture.
pub fn make_synthetic_domain_pair(
    spec_a: &SyntheticSpec,
    spec_b: &SyntheticSpec,
    dir: &Path,
) -> Result<(ImageSet, ImageSet)> {
    if spec_a.shape != spec_b.shape {
        return Err(Error::Argument(format!(
            "domain specs must share a shape kind, got {} and {}",
            spec_a.shape, spec_b.shape
        )));
    }
    if spec_a.side != spec_b.side {
        return Err(Error::Argument(format!(
            "domain specs must share a side, got {} and {}",
            spec_a.side, spec_b.side
        )));
    }
    let (ta, tb) = if spec_a.texture == spec_b.texture {
        (
            format!("{}_a", spec_a.texture),
            format!("{}_b", spec_b.texture),
        )
    } else {
        (spec_a.texture.to_string(), spec_b.texture.to_string())
    };
    Ok((
        write_synthetic_set(spec_a, &ta, dir)?,
        write_synthetic_set(spec_b, &tb, dir)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::channel_histogram_distance;

    fn spec(texture: TextureKind, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            texture,
            shape: ShapeKind::Leaf,
            side: 32,
            count: 8,
            seed,
        }
    }

    #[test]
    fn pair_has_expected_counts_labels_and_is_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let (a, b) = make_synthetic_domain_pair(
            &spec(TextureKind::Stripes, 1),
            &spec(TextureKind::Dots, 2),
            d1.path(),
        )
        .unwrap();
        assert_eq!((a.len(), b.len()), (8, 8));
        assert_eq!(a.labels(), ["stripes"]);
        assert_eq!(b.labels(), ["dots"]);
        let (a2, _) = make_synthetic_domain_pair(
            &spec(TextureKind::Stripes, 1),
            &spec(TextureKind::Dots, 2),
            d2.path(),
        )
        .unwrap();
        for ((p1, _), (p2, _)) in a.items.iter().zip(&a2.items) {
            assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
        }
    }

    #[test]
    fn same_spec_twice_gives_identical_tensors() {
        let s = spec(TextureKind::Noise, 9);
        assert_eq!(render_set(&s).unwrap(), render_set(&s).unwrap());
        let other = render_set(&SyntheticSpec { seed: 10, ..s }).unwrap();
        assert_ne!(render_set(&s).unwrap(), other);
    }

    #[test]
    fn mismatched_shapes_or_sides_are_rejected() {
        let d = tempfile::tempdir().unwrap();
        let a = spec(TextureKind::Stripes, 1);
        let b = SyntheticSpec {
            shape: ShapeKind::Disc,
            ..spec(TextureKind::Dots, 2)
        };
        assert!(matches!(
            make_synthetic_domain_pair(&a, &b, d.path()),
            Err(Error::Argument(_))
        ));
        let c = SyntheticSpec {
            side: 40,
            ..spec(TextureKind::Dots, 2)
        };
        assert!(make_synthetic_domain_pair(&a, &c, d.path()).is_err());
    }

    #[test]
    fn same_texture_gets_distinct_tags() {
        let d = tempfile::tempdir().unwrap();
        let s = SyntheticSpec {
            count: 1,
            ..spec(TextureKind::Checker, 1)
        };
        let (a, b) = make_synthetic_domain_pair(&s, &SyntheticSpec { seed: 2, ..s }, d.path()).unwrap();
        assert_ne!(a.domain_tag, b.domain_tag);
    }

    #[test]
    fn images_lie_in_range() {
        for t in [TextureKind::Stripes, TextureKind::Dots, TextureKind::Checker, TextureKind::Noise] {
            for s in [ShapeKind::Disc, ShapeKind::Blob, ShapeKind::Leaf] {
                let img = render_image(t, s, 24, 5);
                assert!(img.data().iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }

    fn mean_hist(xs: &[Tensor], ys: &[Tensor], same: bool) -> f64 {
        let mut acc = 0.0;
        let mut n = 0;
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                if same && i >= j {
                    continue;
                }
                acc += channel_histogram_distance(x, y, 16).unwrap();
                n += 1;
            }
        }
        acc / n as f64
    }

    #[test]
    fn cross_domain_histograms_differ_more_than_within_domain() {
        for (ta, tb) in [
            (TextureKind::Stripes, TextureKind::Dots),
            (TextureKind::Checker, TextureKind::Noise),
        ] {
            let a = render_set(&spec(ta, 3)).unwrap();
            let b = render_set(&spec(tb, 4)).unwrap();
            let within = 0.5 * (mean_hist(&a, &a, true) + mean_hist(&b, &b, true));
            let cross = mean_hist(&a, &b, false);
            assert!(cross > within, "{ta}/{tb}: cross {cross} within {within}");
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for t in [TextureKind::Stripes, TextureKind::Dots, TextureKind::Checker, TextureKind::Noise] {
            assert_eq!(t.name().parse::<TextureKind>().unwrap(), t);
        }
        assert_eq!("leaf".parse::<ShapeKind>().unwrap(), ShapeKind::Leaf);
        assert!("zigzag".parse::<TextureKind>().is_err());
    }
}
