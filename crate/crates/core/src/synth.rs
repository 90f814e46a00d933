//! Procedural road scenes from two visually distinct "worlds".
//!
//! A scene is a 60x160 grayscale frame with a road whose two lane edges bend
//! quadratically with distance from the bottom row. The steering label is
//! linear in the road parameters:
//! `angle = K_STEER * curvature + K_OFFSET * offset`.
//! The worlds differ in ground texture, road surface and edge intensity.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;

use crate::dataset::{DatasetManifest, ManifestRecord};
use crate::error::{Error, Result};
use crate::image::{clamp_unit, ImageBuf};
use crate::{pnm, rng};

pub const SCENE_HEIGHT: usize = 60;
pub const SCENE_WIDTH: usize = 160;

/// Radians per unit curvature (1/px).
pub const K_STEER: f64 = 50.0;
/// Radians per unit lateral offset (fraction of half-width).
pub const K_OFFSET: f64 = 0.5;

pub const MAX_CURVATURE: f64 = 0.01;
pub const MAX_OFFSET: f64 = 0.4;
/// Ranges sampled by [`gen_scenes`]; kept inside the accepted limits so the
/// road stays mostly in frame.
pub const SAMPLE_CURVATURE: f64 = 0.008;
pub const SAMPLE_OFFSET: f64 = 0.3;

pub const MAX_TEXTURE_NOISE: f64 = 0.05;
/// Half-width in pixels of a drawn lane edge.
pub const EDGE_HALF_WIDTH: f64 = 1.0;
/// Pixels within this horizontal distance of an edge count as edge band.
pub const EDGE_BAND: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WorldId {
    A,
    B,
}

impl std::fmt::Display for WorldId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WorldId::A => "A",
            WorldId::B => "B",
        })
    }
}

impl std::str::FromStr for WorldId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(WorldId::A),
            "B" | "b" => Ok(WorldId::B),
            other => Err(Error::Config(format!("unknown world `{other}` (expected A or B)"))),
        }
    }
}

/// Ground texture drawn per scene from the layout stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    /// Square blocks of side `texture_period`, each uniform in the band.
    Blocks,
    /// Sinusoidal stripes varying along `angle` (radians from the x axis)
    /// with a random phase.
    Stripes { angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldSpec {
    pub world: WorldId,
    /// Ground intensity band `(low, high)`.
    pub background: (f64, f64),
    pub texture: Texture,
    /// Block side or stripe period, pixels.
    pub texture_period: f64,
    /// Solid road surface; `None` leaves the ground texture between the edges.
    pub road_intensity: Option<f64>,
    pub edge_intensity: f64,
    /// Lane width at the bottom row as a fraction of frame width.
    pub lane_width: f64,
    /// Amplitude of the uniform per-pixel texture noise.
    pub texture_noise: f64,
    pub seed: u64,
}

impl WorldSpec {
    /// Bright lane lines over coarse random blocks; the road surface is
    /// textured like the ground, so only the lines carry the label.
    pub fn world_a(seed: u64) -> Self {
        Self {
            world: WorldId::A,
            background: (0.0, 0.7),
            texture: Texture::Blocks,
            texture_period: 6.0,
            road_intensity: None,
            edge_intensity: 0.95,
            lane_width: 0.6,
            texture_noise: MAX_TEXTURE_NOISE,
            seed,
        }
    }

    /// Bright diagonal stripes, solid dark road, dark edges.
    pub fn world_b(seed: u64) -> Self {
        Self {
            world: WorldId::B,
            background: (0.55, 0.85),
            texture: Texture::Stripes { angle: PI / 4.0 },
            texture_period: 6.0,
            road_intensity: Some(0.3),
            edge_intensity: 0.05,
            lane_width: 0.45,
            texture_noise: MAX_TEXTURE_NOISE,
            seed,
        }
    }

    pub fn for_world(world: WorldId, seed: u64) -> Self {
        match world {
            WorldId::A => Self::world_a(seed),
            WorldId::B => Self::world_b(seed),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.background.0) && unit(self.background.1) && self.background.0 <= self.background.1)
            || !self.road_intensity.is_none_or(unit)
            || !unit(self.edge_intensity)
        {
            return Err(Error::InvalidArgument("world intensities must lie in [0, 1]".into()));
        }
        if !(self.lane_width > 0.1 && self.lane_width < 0.9) {
            return Err(Error::InvalidArgument(format!(
                "lane width fraction must lie in (0.1, 0.9), got {}",
                self.lane_width
            )));
        }
        if !(self.texture_period >= 1.0) || !(0.0..=MAX_TEXTURE_NOISE).contains(&self.texture_noise) {
            return Err(Error::InvalidArgument("invalid texture period or texture noise".into()));
        }
        Ok(())
    }
}

/// Per-scene ground texture.
enum Ground {
    Blocks { side: usize, cols: usize, values: Vec<f64> },
    Stripes { lo: f64, hi: f64, angle: f64, period: f64, shift: f64 },
}

impl Ground {
    fn draw(spec: &WorldSpec, rng: &mut impl Rng) -> Self {
        let (lo, hi) = spec.background;
        match spec.texture {
            Texture::Blocks => {
                let side = spec.texture_period as usize;
                let cols = SCENE_WIDTH.div_ceil(side);
                let n = SCENE_HEIGHT.div_ceil(side) * cols;
                let values = (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
                Ground::Blocks { side, cols, values }
            }
            Texture::Stripes { angle } => Ground::Stripes {
                lo,
                hi,
                angle,
                period: spec.texture_period,
                shift: rng.random_range(0.0..spec.texture_period),
            },
        }
    }

    fn at(&self, row: usize, col: usize) -> f64 {
        match *self {
            Ground::Blocks { side, cols, ref values } => values[(row / side) * cols + col / side],
            Ground::Stripes { lo, hi, angle, period, shift } => {
                let phase = (col as f64 * angle.cos() + row as f64 * angle.sin() + shift) / period;
                lo + (hi - lo) * (0.5 + 0.5 * (2.0 * PI * phase).sin())
            }
        }
    }
}

pub fn steering_label(curvature: f64, offset: f64) -> f64 {
    K_STEER * curvature + K_OFFSET * offset
}

/// Horizontal positions `(left, right)` of the lane edges on `row`.
pub fn lane_edges(spec: &WorldSpec, curvature: f64, offset: f64, row: usize) -> (f64, f64) {
    let w = SCENE_WIDTH as f64;
    let depth = (SCENE_HEIGHT - 1 - row) as f64;
    let center = (w - 1.0) / 2.0 + offset * w / 2.0 + curvature * depth * depth;
    let half = spec.lane_width * w / 2.0 * (1.0 - 0.6 * depth / (SCENE_HEIGHT - 1) as f64);
    (center - half, center + half)
}

/// A rendered scene plus its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: ImageBuf,
    pub angle: f64,
    pub curvature: f64,
    pub offset: f64,
    /// Row-major flags for pixels near a lane edge.
    pub edge_band: Vec<bool>,
}

pub fn render_scene(spec: &WorldSpec, curvature: f64, offset: f64) -> Result<Scene> {
    spec.validate()?;
    if !(curvature.abs() <= MAX_CURVATURE) || !(offset.abs() <= MAX_OFFSET) {
        return Err(Error::InvalidArgument(format!(
            "scene parameters out of range: |curvature| <= {MAX_CURVATURE}, |offset| <= {MAX_OFFSET} \
             (got {curvature}, {offset})"
        )));
    }
    let mut noise = rng::stream(spec.seed, 0x5CE);
    let ground = Ground::draw(spec, &mut rng::stream(spec.seed, 0x1A7));
    let mut edge_band = Vec::with_capacity(SCENE_HEIGHT * SCENE_WIDTH);
    let mut data = Vec::with_capacity(SCENE_HEIGHT * SCENE_WIDTH);
    for row in 0..SCENE_HEIGHT {
        let (left, right) = lane_edges(spec, curvature, offset, row);
        for col in 0..SCENE_WIDTH {
            let x = col as f64;
            let base = match spec.road_intensity {
                Some(road) if x > left && x < right => road,
                _ => ground.at(row, col),
            };
            let dist = (x - left).abs().min((x - right).abs());
            let coverage = (EDGE_HALF_WIDTH + 0.5 - dist).clamp(0.0, 1.0);
            let v = base + coverage * (spec.edge_intensity - base);
            let jitter = if spec.texture_noise > 0.0 {
                noise.random_range(-spec.texture_noise..=spec.texture_noise)
            } else {
                0.0
            };
            data.push(clamp_unit(v + jitter));
            edge_band.push(dist <= EDGE_BAND);
        }
    }
    Ok(Scene {
        image: ImageBuf::new(SCENE_HEIGHT, SCENE_WIDTH, data)?,
        angle: steering_label(curvature, offset),
        curvature,
        offset,
        edge_band,
    })
}

pub fn gen_scene(spec: &WorldSpec, curvature: f64, offset: f64) -> Result<(ImageBuf, f64)> {
    let s = render_scene(spec, curvature, offset)?;
    Ok((s.image, s.angle))
}

/// `n` scenes with road parameters and texture noise drawn per index from the
/// spec's seed.
pub fn gen_scenes(spec: &WorldSpec, n: usize) -> Result<Vec<Scene>> {
    (0..n as u64)
        .map(|i| {
            let mut r = rng::stream(spec.seed, 0x10_0000 + i);
            let curvature = r.random_range(-SAMPLE_CURVATURE..=SAMPLE_CURVATURE);
            let offset = r.random_range(-SAMPLE_OFFSET..=SAMPLE_OFFSET);
            render_scene(&spec.with_seed(rng::mix(spec.seed, i)), curvature, offset)
        })
        .collect()
}

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const META_NAME: &str = "world.txt";

/// Writes `n` scenes as PGMs plus `manifest.csv` and a `world.txt` sidecar
/// describing the world and the label constants.
pub fn gen_dataset(spec: &WorldSpec, n: usize, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be >= 1".into()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let scenes = gen_scenes(spec, n)?;
    let mut records = Vec::with_capacity(n);
    for (i, scene) in scenes.iter().enumerate() {
        let name = format!("world{}_{i:05}.pgm", spec.world);
        pnm::write_pgm(out_dir.join(&name), &scene.image)?;
        records.push(ManifestRecord {
            path: name,
            angle_rad: scene.angle,
        });
    }
    let manifest = DatasetManifest::new(records, out_dir)?;
    manifest.write(out_dir.join(MANIFEST_NAME))?;
    let meta = out_dir.join(META_NAME);
    std::fs::write(&meta, describe(spec, n)).map_err(|e| Error::io(&meta, e))?;
    Ok(manifest)
}

fn describe(spec: &WorldSpec, n: usize) -> String {
    format!(
        "world = {}\nseed = {}\nscenes = {n}\nk_steer = {K_STEER}\nk_offset = {K_OFFSET}\n\
         label = k_steer * curvature + k_offset * offset\n\
         background = {} {}\ntexture = {:?}\ntexture_period = {}\nroad_intensity = {}\n\
         edge_intensity = {}\nlane_width = {}\ntexture_noise = {}\n",
        spec.world,
        spec.seed,
        spec.background.0,
        spec.background.1,
        spec.texture,
        spec.texture_period,
        spec.road_intensity.map_or("ground".to_string(), |r| r.to_string()),
        spec.edge_intensity,
        spec.lane_width,
        spec.texture_noise,
    )
}

/// Mean mask value on the edge band divided by the mean elsewhere.
pub fn edge_concentration(mask: &ImageBuf, edge_band: &[bool]) -> f64 {
    let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &band) in mask.data().iter().zip(edge_band) {
        if band {
            on += v;
            n_on += 1;
        } else {
            off += v;
            n_off += 1;
        }
    }
    let on = on / n_on.max(1) as f64;
    let off = off / n_off.max(1) as f64;
    if off == 0.0 {
        if on > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    } else {
        on / off
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_centered_road_is_symmetric() {
        let spec = WorldSpec {
            texture_noise: 0.0,
            background: (0.3, 0.3),
            ..WorldSpec::world_a(1)
        };
        let (img, angle) = gen_scene(&spec, 0.0, 0.0).unwrap();
        assert_eq!(angle, 0.0);
        for row in 0..SCENE_HEIGHT {
            let (l, r) = lane_edges(&spec, 0.0, 0.0, row);
            assert!((l + r - (SCENE_WIDTH - 1) as f64).abs() < 1e-9);
        }
        // flat ground, so the whole frame mirrors
        for row in 0..SCENE_HEIGHT {
            for col in 0..SCENE_WIDTH / 2 {
                let a = img.get(row, col);
                let b = img.get(row, SCENE_WIDTH - 1 - col);
                assert!((a - b).abs() < 1e-12, "row {row} col {col}");
            }
        }
    }

    #[test]
    fn scenes_are_deterministic() {
        let spec = WorldSpec::world_b(7);
        assert_eq!(render_scene(&spec, 0.004, -0.1).unwrap(), render_scene(&spec, 0.004, -0.1).unwrap());
        assert_ne!(
            render_scene(&spec, 0.004, -0.1).unwrap().image,
            render_scene(&spec.with_seed(8), 0.004, -0.1).unwrap().image
        );
    }

    #[test]
    fn label_is_linear_in_curvature() {
        let spec = WorldSpec::world_a(0);
        let (_, a1) = gen_scene(&spec, 0.003, 0.0).unwrap();
        let (_, a2) = gen_scene(&spec, 0.006, 0.0).unwrap();
        assert_eq!(a2 / a1, 2.0);
    }

    #[test]
    fn rejects_out_of_range() {
        let spec = WorldSpec::world_a(0);
        assert!(gen_scene(&spec, 0.011, 0.0).is_err());
        assert!(gen_scene(&spec, 0.0, -0.41).is_err());
        let bad = WorldSpec { lane_width: 0.95, ..spec };
        assert!(gen_scene(&bad, 0.0, 0.0).is_err());
    }

    #[test]
    fn edge_band_covers_drawn_edges() {
        let spec = WorldSpec { texture_noise: 0.0, ..WorldSpec::world_a(0) };
        let s = render_scene(&spec, 0.005, 0.1).unwrap();
        for (i, &v) in s.image.data().iter().enumerate() {
            if (v - spec.edge_intensity).abs() < 1e-12 {
                assert!(s.edge_band[i]);
            }
        }
        let frac = s.edge_band.iter().filter(|&&b| b).count() as f64 / s.edge_band.len() as f64;
        assert!(frac > 0.02 && frac < 0.1, "edge band fraction {frac}");
    }

    #[test]
    fn worlds_have_distinct_histograms() {
        let a = gen_scenes(&WorldSpec::world_a(1), 10).unwrap();
        let b = gen_scenes(&WorldSpec::world_b(1), 10).unwrap();
        let hist = |scenes: &[Scene]| {
            let mut h = [0.0f64; 16];
            let mut n = 0.0;
            for s in scenes {
                for &v in s.image.data() {
                    h[((v * 16.0) as usize).min(15)] += 1.0;
                    n += 1.0;
                }
            }
            h.map(|c| c / n)
        };
        let (ha, hb) = (hist(&a), hist(&b));
        let dist: f64 = ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>() / 16.0;
        assert!(dist > 0.0);
        assert!(dist > 0.05, "histogram distance {dist}");
    }

    #[test]
    fn concentration_ratio() {
        let mask = ImageBuf::new(1, 4, vec![1.0, 1.0, 0.5, 0.5]).unwrap();
        assert_eq!(edge_concentration(&mask, &[true, true, false, false]), 2.0);
        let zero = ImageBuf::zeros(1, 2);
        assert_eq!(edge_concentration(&zero, &[true, false]), 1.0);
    }
}
