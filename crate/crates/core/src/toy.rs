//! Procedural toy faces with known identity, pose, attribute and lighting.
//!
//! Each identity is a smooth texture (skin ellipse, hair cap, colour blobs
//! and a stripe pattern) with dark features at the canonical landmarks.
//! Poses are affine warps: yaw shears horizontally and shifts sideways,
//! pitch does the same vertically. Frontal images are unwarped.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::taxonomy::{is_taxonomy_pose, protocol_poses};
use crate::dataset::{template, write_manifest, Attribute, Illumination, ImageRecord, Landmarks};
use crate::image::Image;
use crate::networks::ConvExtractor;
use crate::{Error, Result};

const SHEAR: f64 = 0.25;
const SHIFT: f64 = 0.08;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySpec {
    pub n_identities: u32,
    /// `(yaw, pitch)` pairs from the pose taxonomy.
    pub poses: Vec<(f64, f64)>,
    pub attributes: Vec<Attribute>,
    pub illuminations: Vec<Illumination>,
    pub size: usize,
    pub seed: u64,
}

impl ToySpec {
    /// Corpus used by the smoke-training run: 64 identities at 32×32, nine
    /// poses, two lighting conditions.
    pub fn smoke() -> Self {
        Self {
            n_identities: 64,
            poses: vec![
                (0.0, 0.0),
                (-30.0, 0.0),
                (30.0, 0.0),
                (-60.0, 0.0),
                (60.0, 0.0),
                (-90.0, 0.0),
                (90.0, 0.0),
                (0.0, 15.0),
                (0.0, -15.0),
            ],
            attributes: vec![Attribute::Neutral],
            illuminations: vec![Illumination::Above, Illumination::Front],
            size: 32,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_identities < 2 {
            return Err(Error::Config("toy spec needs at least 2 identities".into()));
        }
        if ![32, 64, 128].contains(&self.size) {
            return Err(Error::Config(format!(
                "toy size must be 32, 64 or 128, got {}",
                self.size
            )));
        }
        if self.poses.is_empty() || self.attributes.is_empty() || self.illuminations.is_empty() {
            return Err(Error::Config(
                "toy spec needs poses, attributes and illuminations".into(),
            ));
        }
        if let Some(&(y, p)) = self.poses.iter().find(|&&(y, p)| !is_taxonomy_pose(y, p)) {
            return Err(Error::Config(format!(
                "toy pose (yaw {y}, pitch {p}) is not in the taxonomy"
            )));
        }
        Ok(())
    }

    pub fn record_count(&self) -> usize {
        self.n_identities as usize
            * self.poses.len()
            * self.attributes.len()
            * self.illuminations.len()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// The pose warp about the image centre, in pixel coordinates.
#[derive(Clone, Copy, Debug)]
pub struct ToyWarp {
    m: [[f64; 2]; 2],
    shift: [f64; 2],
    centre: f64,
}

impl ToyWarp {
    pub fn new(yaw_deg: f64, pitch_deg: f64, size: usize) -> Self {
        let (sy, sp) = (yaw_deg.to_radians().sin(), pitch_deg.to_radians().sin());
        Self {
            m: [[1.0, SHEAR * sy], [SHEAR * sp, 1.0]],
            shift: [SHIFT * size as f64 * sy, SHIFT * size as f64 * sp],
            centre: (size as f64 - 1.0) / 2.0,
        }
    }

    /// Frontal point → posed point.
    pub fn forward(&self, [x, y]: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (x - self.centre, y - self.centre);
        [
            self.m[0][0] * dx + self.m[0][1] * dy + self.centre + self.shift[0],
            self.m[1][0] * dx + self.m[1][1] * dy + self.centre + self.shift[1],
        ]
    }

    /// Posed point → frontal point.
    pub fn inverse(&self, [x, y]: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (
            x - self.centre - self.shift[0],
            y - self.centre - self.shift[1],
        );
        let [[a, b], [c, d]] = self.m;
        let det = a * d - b * c;
        [
            (d * dx - b * dy) / det + self.centre,
            (-c * dx + a * dy) / det + self.centre,
        ]
    }
}

struct Blob {
    centre: [f64; 2],
    sigma: f64,
    colour: [f64; 3],
}

/// Identity-specific texture parameters, in coordinates normalized by the size.
struct Identity {
    background: [f64; 3],
    skin: [f64; 3],
    hair: [f64; 3],
    radii: [f64; 2],
    blobs: Vec<Blob>,
    stripe_freq: f64,
    stripe_angle: f64,
    stripe_phase: f64,
    stripe_colour: [f64; 3],
}

fn colour(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [
        rng.gen_range(lo..hi),
        rng.gen_range(lo..hi),
        rng.gen_range(lo..hi),
    ]
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gauss(p: [f64; 2], c: [f64; 2], sigma: f64) -> f64 {
    let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
    (-d2 / (2.0 * sigma * sigma)).exp()
}

const FACE_CENTRE: [f64; 2] = [0.5, 0.56];
const EDGE: f64 = 0.06;

impl Identity {
    fn new(seed: u64, id: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64 + 1);
        let background = colour(&mut rng, -0.8, -0.3);
        let skin = colour(&mut rng, -0.2, 0.7);
        let hair = colour(&mut rng, -0.9, 0.2);
        let radii = [rng.gen_range(0.30..0.37), rng.gen_range(0.38..0.44)];
        let blobs = (0..3)
            .map(|_| Blob {
                centre: [rng.gen_range(0.3..0.7), rng.gen_range(0.35..0.8)],
                sigma: rng.gen_range(0.06..0.12),
                colour: colour(&mut rng, -0.5, 0.5),
            })
            .collect();
        Self {
            background,
            skin,
            hair,
            radii,
            blobs,
            stripe_freq: rng.gen_range(1.5..3.5),
            stripe_angle: rng.gen_range(0.0..std::f64::consts::PI),
            stripe_phase: rng.gen_range(0.0..std::f64::consts::TAU),
            stripe_colour: colour(&mut rng, -0.2, 0.2),
        }
    }

    fn face_weight(&self, p: [f64; 2]) -> f64 {
        let d = (((p[0] - FACE_CENTRE[0]) / self.radii[0]).powi(2)
            + ((p[1] - FACE_CENTRE[1]) / self.radii[1]).powi(2))
        .sqrt();
        logistic((1.0 - d) / EDGE)
    }

    fn hair_weight(&self, p: [f64; 2]) -> f64 {
        let c = [0.5, FACE_CENTRE[1] - 0.22];
        let d = (((p[0] - c[0]) / (self.radii[0] + 0.06)).powi(2) + ((p[1] - c[1]) / 0.3).powi(2))
            .sqrt();
        logistic((1.0 - d) / EDGE)
    }

    /// Unlit frontal value at normalized point `p`.
    fn value(&self, p: [f64; 2], features: &[[f64; 2]; 5], c: usize) -> f64 {
        let face = self.face_weight(p);
        let hair = self.hair_weight(p) * (1.0 - face);
        let mut v =
            self.background[c] * (1.0 - face - hair) + self.skin[c] * face + self.hair[c] * hair;
        let mut detail = 0.0;
        for b in &self.blobs {
            detail += b.colour[c] * gauss(p, b.centre, b.sigma);
        }
        let (s, co) = self.stripe_angle.sin_cos();
        let t = p[0] * co + p[1] * s;
        detail += self.stripe_colour[c]
            * (std::f64::consts::TAU * self.stripe_freq * t + self.stripe_phase).sin();
        for (i, f) in features.iter().enumerate() {
            let sigma = if i < 2 { 0.04 } else { 0.035 };
            detail -= 0.6 * gauss(p, *f, sigma);
        }
        v += face * detail;
        v
    }
}

fn illumination_offset(illum: Illumination, p: [f64; 2]) -> f64 {
    let (u, v) = (p[0] - 0.5, p[1] - 0.5);
    match illum {
        Illumination::Above => -0.25 * v,
        Illumination::Front => 0.1,
        Illumination::FrontAbove => 0.1 - 0.15 * v,
        Illumination::FrontBelow => 0.1 + 0.15 * v,
        Illumination::Behind => -0.25,
        Illumination::Left => -0.25 * u,
        Illumination::Right => 0.25 * u,
    }
}

/// Blends an attribute glyph over `value`.
fn attribute_glyph(attr: Attribute, p: [f64; 2], features: &[[f64; 2]; 5], value: f64) -> f64 {
    let mouth = [
        (features[3][0] + features[4][0]) / 2.0,
        (features[3][1] + features[4][1]) / 2.0,
    ];
    let (weight, ink) = match attr {
        Attribute::Neutral => return value,
        Attribute::Glasses => {
            let ring = |e: [f64; 2]| {
                let r = ((p[0] - e[0]).powi(2) + (p[1] - e[1]).powi(2)).sqrt();
                (-((r - 0.08) / 0.015).powi(2)).exp()
            };
            (ring(features[0]).max(ring(features[1])), -0.9)
        }
        Attribute::Smile => (gauss(p, [mouth[0], mouth[1] + 0.03], 0.04), 0.8),
        Attribute::Surprise => (gauss(p, mouth, 0.05), -0.95),
    };
    value * (1.0 - weight) + ink * weight
}

/// Renders one toy image and its landmarks.
pub fn render(
    spec: &ToySpec,
    subject: u32,
    (yaw, pitch): (f64, f64),
    attribute: Attribute,
    illumination: Illumination,
) -> Result<(Image, Landmarks)> {
    let identity = Identity::new(spec.seed, subject);
    let size = spec.size;
    let s = size as f64;
    let frontal_lm = template(size);
    let features = frontal_lm.map(|[x, y]| [x / s, y / s]).0;
    let warp = ToyWarp::new(yaw, pitch, size);
    let image = Image::from_fn(size, size, 3, |x, y, c| {
        let [fx, fy] = warp.inverse([x as f64, y as f64]);
        let p = [fx / s, fy / s];
        let v = identity.value(p, &features, c) + illumination_offset(illumination, p);
        attribute_glyph(attribute, p, &features, v).clamp(-1.0, 1.0)
    })?;
    Ok((image, frontal_lm.map(|q| warp.forward(q))))
}

fn angle_tag(v: f64) -> String {
    format!("{v:+}").replace('.', "_")
}

/// A generated corpus: the manifest location plus its records.
pub struct ToyCorpus {
    pub manifest: PathBuf,
    pub records: Vec<ImageRecord>,
}

/// Writes every image under `out/images/` and a strict-mode manifest at
/// `out/manifest.jsonl`. Image references are relative to `out`.
pub fn generate_toy_dataset(spec: &ToySpec, out: &Path) -> Result<ToyCorpus> {
    spec.validate()?;
    let mut records = Vec::with_capacity(spec.record_count());
    for subject in 0..spec.n_identities {
        for &pose in &spec.poses {
            for &attribute in &spec.attributes {
                for &illumination in &spec.illuminations {
                    let (image, landmarks) = render(spec, subject, pose, attribute, illumination)?;
                    let image_ref = format!(
                        "images/s{subject:04}/y{}_p{}_{}_{}.png",
                        angle_tag(pose.0),
                        angle_tag(pose.1),
                        attribute,
                        illumination
                    );
                    image.save(&out.join(&image_ref))?;
                    records.push(ImageRecord {
                        image_ref,
                        subject_id: subject,
                        yaw_deg: pose.0,
                        pitch_deg: pose.1,
                        attribute,
                        illumination,
                        landmarks,
                        mask_ref: None,
                    });
                }
            }
        }
    }
    let manifest = out.join("manifest.jsonl");
    write_manifest(&manifest, &records)?;
    Ok(ToyCorpus { manifest, records })
}

/// Manifest rows for `n_subjects` subjects (ids `1..=n_subjects`) over the
/// 57 protocol poses and every attribute and illumination. Images are not
/// rendered; every row carries the 128×128 template landmarks.
pub fn protocol_manifest_records(n_subjects: u32) -> Vec<ImageRecord> {
    let poses = protocol_poses();
    let landmarks = template(128);
    let mut out = Vec::with_capacity(n_subjects as usize * poses.len() * 28);
    for subject in 1..=n_subjects {
        for &(yaw, pitch) in &poses {
            for attribute in Attribute::ALL {
                for illumination in Illumination::ALL {
                    out.push(ImageRecord {
                        image_ref: format!(
                            "s{subject:03}/y{}_p{}_{attribute}_{illumination}.png",
                            angle_tag(yaw),
                            angle_tag(pitch)
                        ),
                        subject_id: subject,
                        yaw_deg: yaw,
                        pitch_deg: pitch,
                        attribute,
                        illumination,
                        landmarks,
                        mask_ref: None,
                    });
                }
            }
        }
    }
    out
}

/// Frozen random encoder used as the identity feature extractor at toy scale.
pub fn toy_identity_extractor(seed: u64) -> ConvExtractor {
    ConvExtractor::new(seed, 3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warp_round_trips() {
        let w = ToyWarp::new(-67.5, 30.0, 64);
        let p = [12.25, 40.5];
        let q = w.inverse(w.forward(p));
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
        let id = ToyWarp::new(0.0, 0.0, 32);
        assert_eq!(id.forward(p), p);
    }

    #[test]
    fn validation() {
        let mut spec = ToySpec::smoke();
        assert!(spec.validate().is_ok());
        spec.poses.push((10.0, 0.0));
        assert!(spec.validate().is_err());
        let spec = ToySpec {
            size: 48,
            ..ToySpec::smoke()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn attributes_and_lighting_change_pixels() {
        let spec = ToySpec::smoke();
        let (base, _) = render(
            &spec,
            1,
            (0.0, 0.0),
            Attribute::Neutral,
            Illumination::Above,
        )
        .unwrap();
        for attr in [Attribute::Glasses, Attribute::Smile, Attribute::Surprise] {
            let (im, _) = render(&spec, 1, (0.0, 0.0), attr, Illumination::Above).unwrap();
            assert!(im.max_abs_diff(&base) > 0.1, "{attr}");
        }
        let (lit, _) =
            render(&spec, 1, (0.0, 0.0), Attribute::Neutral, Illumination::Left).unwrap();
        assert!(lit.mean_abs_diff(&base) > 0.02);
    }
}
