//! Hair / skin / facial-feature soft masks and their use as hadamard attention.

use std::path::Path;

use crate::dataset::{check_non_degenerate, Landmarks};
use crate::image::{Image, Plane};
use crate::{Error, Result};

/// Soft masks `M_h`, `M_s`, `M_f`, each `H×W` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskTriple {
    pub hair: Plane,
    pub skin: Plane,
    pub face: Plane,
}

impl MaskTriple {
    /// `(width, height)`, checked to agree across the three planes.
    pub fn dims(&self) -> Result<(usize, usize)> {
        let d = (self.hair.width, self.hair.height);
        for p in [&self.skin, &self.face] {
            if (p.width, p.height) != d {
                return Err(Error::Parsing(format!(
                    "mask planes disagree: {:?} vs {:?}",
                    d,
                    (p.width, p.height)
                )));
            }
        }
        Ok(d)
    }

    pub fn planes(&self) -> [&Plane; 3] {
        [&self.hair, &self.skin, &self.face]
    }

    pub fn clipped(mut self) -> Self {
        for p in [&mut self.hair, &mut self.skin, &mut self.face] {
            for v in &mut p.data {
                *v = v.clamp(0.0, 1.0);
            }
        }
        self
    }

    /// Reads masks stored as a 3-channel raster (hair, skin, face in R, G, B).
    pub fn load(path: &Path) -> Result<Self> {
        let im = Image::load(path)?;
        if im.channels() != 3 {
            return Err(Error::Parsing(format!(
                "{}: mask files need 3 planes",
                path.display()
            )));
        }
        let (w, h, _) = im.dims();
        let plane = |c| Plane::from_fn(w, h, |x, y| (im.get(x, y, c) + 1.0) / 2.0);
        Ok(Self {
            hair: plane(0),
            skin: plane(1),
            face: plane(2),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (w, h) = self.dims()?;
        let planes = self.planes();
        let im = Image::from_fn(w, h, 3, |x, y, c| 2.0 * planes[c].get(x, y) - 1.0)?;
        im.save(path)
    }
}

/// Produces the three region masks for a frontal image.
pub trait FacialParser {
    fn parse(&self, frontal: &Image, landmarks: Option<&Landmarks>) -> Result<MaskTriple>;
}

/// Runs `parser` on the ground-truth frontal view and clips its output to `[0, 1]`.
pub fn parse_masks(
    frontal: &Image,
    parser: &dyn FacialParser,
    landmarks: Option<&Landmarks>,
) -> Result<MaskTriple> {
    let masks = parser.parse(frontal, landmarks)?;
    let dims = masks.dims()?;
    if dims != (frontal.width(), frontal.height()) {
        return Err(Error::Parsing(format!(
            "parser returned {}x{} masks for a {}x{} image",
            dims.0,
            dims.1,
            frontal.width(),
            frontal.height()
        )));
    }
    Ok(masks.clipped())
}

/// Geometric stand-in for a learned face parser, driven by the five landmarks.
#[derive(Clone, Copy, Debug, Default)]
pub struct LandmarkParser;

impl FacialParser for LandmarkParser {
    fn parse(&self, frontal: &Image, landmarks: Option<&Landmarks>) -> Result<MaskTriple> {
        let lm = landmarks
            .ok_or_else(|| Error::Parsing("the landmark parser needs landmarks".into()))?;
        landmark_stand_in_parser(lm, frontal.width(), frontal.height())
    }
}

const HULL_DILATION: f64 = 1.25;
const BLOB_SIGMA_FRACTION: f64 = 0.06;
const HAIR_BAND_TOP: f64 = 1.5;
const HAIR_BAND_BOTTOM: f64 = 0.25;

/// * skin: filled ellipse (covariance-shaped) enclosing the landmarks dilated
///   by 25% about their centroid;
/// * face: isotropic Gaussian blobs at each landmark, σ = 6% of the width,
///   summed and clipped to 1;
/// * hair: full-width band above the eye line, minus the skin mask.
pub fn landmark_stand_in_parser(
    landmarks: &Landmarks,
    width: usize,
    height: usize,
) -> Result<MaskTriple> {
    check_non_degenerate(landmarks).map_err(|e| Error::Parsing(e.to_string()))?;
    let pts = landmarks.points();
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let dilated: Vec<[f64; 2]> = pts
        .iter()
        .map(|p| [HULL_DILATION * (p[0] - cx), HULL_DILATION * (p[1] - cy)])
        .collect();
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for d in &dilated {
        sxx += d[0] * d[0];
        syy += d[1] * d[1];
        sxy += d[0] * d[1];
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let det = sxx * syy - sxy * sxy;
    let (ixx, iyy, ixy) = (syy / det, sxx / det, -sxy / det);
    let mahalanobis = |dx: f64, dy: f64| dx * dx * ixx + 2.0 * dx * dy * ixy + dy * dy * iyy;
    let radius2 = dilated
        .iter()
        .map(|d| mahalanobis(d[0], d[1]))
        .fold(0.0, f64::max);

    let skin = Plane::from_fn(width, height, |x, y| {
        if mahalanobis(x as f64 - cx, y as f64 - cy) <= radius2 {
            1.0
        } else {
            0.0
        }
    });

    let sigma = BLOB_SIGMA_FRACTION * width as f64;
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let face = Plane::from_fn(width, height, |x, y| {
        pts.iter()
            .map(|p| {
                let (dx, dy) = (x as f64 - p[0], y as f64 - p[1]);
                (-(dx * dx + dy * dy) * inv2s2).exp()
            })
            .sum::<f64>()
            .min(1.0)
    });

    let eye_y = 0.5 * (pts[0][1] + pts[1][1]);
    let iod = (pts[1][0] - pts[0][0]).hypot(pts[1][1] - pts[0][1]);
    let (top, bottom) = (eye_y - HAIR_BAND_TOP * iod, eye_y - HAIR_BAND_BOTTOM * iod);
    let hair = Plane::from_fn(width, height, |x, y| {
        let band = if (top..=bottom).contains(&(y as f64)) {
            1.0
        } else {
            0.0
        };
        (band - skin.get(x, y)).clamp(0.0, 1.0)
    });

    Ok(MaskTriple { hair, skin, face })
}

/// The masked views `Y ⊙ M_h`, `Y ⊙ M_s`, `Y ⊙ M_f`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalViews {
    pub hair: Image,
    pub skin: Image,
    pub face: Image,
}

fn hadamard(image: &Image, mask: &Plane) -> Result<Image> {
    let (w, h, c) = image.dims();
    let data = (0..c)
        .flat_map(|ch| (0..h * w).map(move |p| (ch, p)))
        .map(|(ch, p)| image.data()[ch * w * h + p] * mask.data[p])
        .collect();
    Image::new(w, h, c, data)
}

pub fn apply_attention(image: &Image, masks: &MaskTriple) -> Result<LocalViews> {
    let dims = masks.dims()?;
    if dims != (image.width(), image.height()) {
        return Err(Error::Parsing(format!(
            "{}x{} masks cannot attend a {}x{} image",
            dims.0,
            dims.1,
            image.width(),
            image.height()
        )));
    }
    Ok(LocalViews {
        hair: hadamard(image, &masks.hair)?,
        skin: hadamard(image, &masks.skin)?,
        face: hadamard(image, &masks.face)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::template;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct ConstParser(f64);

    impl FacialParser for ConstParser {
        fn parse(&self, frontal: &Image, _: Option<&Landmarks>) -> Result<MaskTriple> {
            let p = Plane::from_fn(frontal.width(), frontal.height(), |x, y| {
                self.0 + 1.2 * (x + y) as f64 / (frontal.width() + frontal.height()) as f64
            });
            Ok(MaskTriple {
                hair: p.clone(),
                skin: p.clone(),
                face: p,
            })
        }
    }

    struct ZeroParser;

    impl FacialParser for ZeroParser {
        fn parse(&self, frontal: &Image, _: Option<&Landmarks>) -> Result<MaskTriple> {
            let p = Plane::zeros(frontal.width(), frontal.height());
            Ok(MaskTriple {
                hair: p.clone(),
                skin: p.clone(),
                face: p,
            })
        }
    }

    struct WrongSize;

    impl FacialParser for WrongSize {
        fn parse(&self, _: &Image, _: Option<&Landmarks>) -> Result<MaskTriple> {
            ZeroParser.parse(&Image::filled(3, 3, 1, 0.0)?, None)
        }
    }

    fn frontal(size: usize) -> Image {
        Image::filled(size, size, 3, 0.2).unwrap()
    }

    #[test]
    fn zero_parser_passes_through() {
        let m = parse_masks(&frontal(16), &ZeroParser, None).unwrap();
        assert!(m.planes().iter().all(|p| p.sum() == 0.0));
    }

    #[test]
    fn out_of_range_parser_output_is_clipped() {
        let m = parse_masks(&frontal(16), &ConstParser(-0.1), None).unwrap();
        for p in m.planes() {
            assert!(p.data.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(p.get(0, 0), 0.0);
            assert_eq!(p.get(15, 15), 1.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(parse_masks(&frontal(16), &WrongSize, None).is_err());
    }

    #[test]
    fn skin_outweighs_features_on_template_fixture() {
        let lm = template(128);
        let m = parse_masks(&frontal(128), &LandmarkParser, Some(&lm)).unwrap();
        assert!(
            m.skin.sum() > m.face.sum(),
            "{} vs {}",
            m.skin.sum(),
            m.face.sum()
        );
        // the skin ellipse contains every landmark
        for p in lm.points() {
            assert_eq!(
                m.skin.get(p[0].round() as usize, p[1].round() as usize),
                1.0
            );
        }
        assert!(m.hair.sum() > 0.0);
    }

    #[test]
    fn feature_mask_peaks_at_landmark_pixels() {
        let lm = template(128);
        let m = landmark_stand_in_parser(&lm, 128, 128).unwrap();
        for p in lm.points() {
            let (px, py) = (p[0].round() as usize, p[1].round() as usize);
            let peak = m.face.get(px, py);
            for dy in -2i64..=2 {
                for dx in -2i64..=2 {
                    let (x, y) = ((px as i64 + dx) as usize, (py as i64 + dy) as usize);
                    assert!(m.face.get(x, y) <= peak);
                }
            }
        }
    }

    #[test]
    fn masks_stay_in_unit_range_for_random_landmarks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let mut lm = template(64);
            for p in lm.0.iter_mut() {
                p[0] += rng.gen_range(-4.0..4.0);
                p[1] += rng.gen_range(-4.0..4.0);
            }
            let m = landmark_stand_in_parser(&lm, 64, 64).unwrap();
            for p in m.planes() {
                assert!(p.data.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn translating_landmarks_translates_masks() {
        let lm = template(128).translated(-6.0, 0.0);
        let a = landmark_stand_in_parser(&lm, 128, 128).unwrap();
        let b = landmark_stand_in_parser(&lm.translated(10.0, 0.0), 128, 128).unwrap();
        let mut worst: f64 = 0.0;
        for (pa, pb) in a.planes().iter().zip(b.planes()) {
            for y in 0..128 {
                for x in 0..118 {
                    worst = worst.max((pa.get(x, y) - pb.get(x + 10, y)).abs());
                }
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn degenerate_landmarks_rejected() {
        let lm = Landmarks([[5.0, 5.0]; 5]);
        assert!(landmark_stand_in_parser(&lm, 32, 32).is_err());
    }

    #[test]
    fn attention_identity_annihilation_and_scaling() {
        let im = Image::filled(4, 4, 3, 0.5).unwrap();
        let full = |v| MaskTriple {
            hair: Plane::from_fn(4, 4, |_, _| v),
            skin: Plane::from_fn(4, 4, |_, _| v),
            face: Plane::from_fn(4, 4, |_, _| v),
        };
        let ones = apply_attention(&im, &full(1.0)).unwrap();
        assert_eq!(ones.hair, im);
        let zeros = apply_attention(&im, &full(0.0)).unwrap();
        assert!(zeros.skin.data().iter().all(|&v| v == 0.0));
        let q = apply_attention(&im, &full(0.25)).unwrap();
        assert!(q.face.data().iter().all(|&v| v == 0.125));
        let small = MaskTriple {
            hair: Plane::zeros(2, 2),
            skin: Plane::zeros(2, 2),
            face: Plane::zeros(2, 2),
        };
        assert!(apply_attention(&im, &small).is_err());
    }

    #[test]
    fn mask_file_round_trip_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let m = landmark_stand_in_parser(&template(32), 32, 32).unwrap();
        let path = dir.path().join("m.png");
        m.save(&path).unwrap();
        let back = MaskTriple::load(&path).unwrap();
        for (a, b) in m.planes().iter().zip(back.planes()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}
