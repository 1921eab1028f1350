//! Five-point similarity alignment onto a canonical face template.

use super::record::Landmarks;
use crate::image::Image;
use crate::{Error, Result};

/// Canonical landmark positions for a 128×128 crop; other sizes scale linearly.
pub const TEMPLATE_128: [[f64; 2]; 5] = [
    [38.3, 51.7],
    [89.7, 51.5],
    [64.0, 71.7],
    [46.6, 92.4],
    [81.4, 92.2],
];

/// Output sizes accepted by [`align_face`].
pub const ALIGN_SIZES: [usize; 2] = [128, 256];

const COLLINEAR_TOL: f64 = 1e-6;

/// The template scaled to a `size × size` crop.
pub fn template(size: usize) -> Landmarks {
    Landmarks(TEMPLATE_128).scaled(size as f64 / 128.0)
}

/// `p ↦ s·R(θ)·p + t`, stored as `a = s cos θ`, `b = s sin θ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        a: 1.0,
        b: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn apply(&self, [x, y]: [f64; 2]) -> [f64; 2] {
        [
            self.a * x - self.b * y + self.tx,
            self.b * x + self.a * y + self.ty,
        ]
    }

    pub fn inverse(&self) -> Similarity {
        let d = self.a * self.a + self.b * self.b;
        let (a, b) = (self.a / d, -self.b / d);
        Similarity {
            a,
            b,
            tx: -(a * self.tx - b * self.ty),
            ty: -(b * self.tx + a * self.ty),
        }
    }

    pub fn scale(&self) -> f64 {
        self.a.hypot(self.b)
    }
}

/// Rejects point sets whose RMS distance from their best-fit line is within
/// tolerance of zero (collinear or coincident).
pub fn check_non_degenerate(points: &Landmarks) -> Result<()> {
    let p = points.points();
    let n = p.len() as f64;
    let mx = p.iter().map(|q| q[0]).sum::<f64>() / n;
    let my = p.iter().map(|q| q[1]).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for q in p {
        let (dx, dy) = (q[0] - mx, q[1] - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let half_trace = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    let min_eig = (half_trace - disc).max(0.0);
    if min_eig.sqrt() <= COLLINEAR_TOL {
        return Err(Error::Alignment(format!(
            "landmarks are collinear (RMS off-line distance {:.3e})",
            min_eig.sqrt()
        )));
    }
    Ok(())
}

/// Least-squares similarity taking `src` onto `dst`.
pub fn estimate_similarity(src: &Landmarks, dst: &Landmarks) -> Result<Similarity> {
    check_non_degenerate(src)?;
    let (s, d) = (src.points(), dst.points());
    let n = s.len() as f64;
    let mean = |pts: &[[f64; 2]; 5]| {
        let (x, y) = pts
            .iter()
            .fold((0.0, 0.0), |(ax, ay), q| (ax + q[0], ay + q[1]));
        [x / n, y / n]
    };
    let (ms, md) = (mean(s), mean(d));
    let (mut num_a, mut num_b, mut den) = (0.0, 0.0, 0.0);
    for (p, q) in s.iter().zip(d) {
        let (sx, sy) = (p[0] - ms[0], p[1] - ms[1]);
        let (dx, dy) = (q[0] - md[0], q[1] - md[1]);
        num_a += sx * dx + sy * dy;
        num_b += sx * dy - sy * dx;
        den += sx * sx + sy * sy;
    }
    let (a, b) = (num_a / den, num_b / den);
    Ok(Similarity {
        a,
        b,
        tx: md[0] - (a * ms[0] - b * ms[1]),
        ty: md[1] - (b * ms[0] + a * ms[1]),
    })
}

/// Bilinear sample at `(x, y)` with edge replication.
pub fn sample_bilinear(image: &Image, x: f64, y: f64, c: usize) -> f64 {
    let (w, h) = (image.width(), image.height());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = image.get(x0, y0, c) * (1.0 - fx) + image.get(x1, y0, c) * fx;
    let bottom = image.get(x0, y1, c) * (1.0 - fx) + image.get(x1, y1, c) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Resamples `image` so that output pixel `p` reads input point `inverse(p)`.
pub fn warp(
    image: &Image,
    out_w: usize,
    out_h: usize,
    inverse: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<Image> {
    let channels = image.channels();
    let mut data = vec![0.0; out_w * out_h * channels];
    for y in 0..out_h {
        for x in 0..out_w {
            let [sx, sy] = inverse([x as f64, y as f64]);
            for c in 0..channels {
                data[(c * out_h + y) * out_w + x] =
                    sample_bilinear(image, sx, sy, c).clamp(-1.0, 1.0);
            }
        }
    }
    Image::new(out_w, out_h, channels, data)
}

/// Aligns a face to the canonical template and crops it to `out_size²`.
/// Returns the crop together with the transform from raw to crop coordinates.
pub fn align_face_with_transform(
    raw: &Image,
    landmarks: &Landmarks,
    out_size: usize,
) -> Result<(Image, Similarity)> {
    if !ALIGN_SIZES.contains(&out_size) {
        return Err(Error::Alignment(format!(
            "output size must be 128 or 256, got {out_size}"
        )));
    }
    if !landmarks.inside(raw.width(), raw.height()) {
        return Err(Error::Alignment(format!(
            "landmarks fall outside the {}x{} image",
            raw.width(),
            raw.height()
        )));
    }
    let forward = estimate_similarity(landmarks, &template(out_size))?;
    let inverse = forward.inverse();
    let crop = warp(raw, out_size, out_size, |p| inverse.apply(p))?;
    Ok((crop, forward))
}

pub fn align_face(raw: &Image, landmarks: &Landmarks, out_size: usize) -> Result<Image> {
    align_face_with_transform(raw, landmarks, out_size).map(|(im, _)| im)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_fixture(size: usize) -> Image {
        Image::from_fn(size, size, 3, |x, y, c| {
            let (fx, fy) = (x as f64 / size as f64, y as f64 / size as f64);
            0.6 * (6.0 * fx + c as f64).sin() * (4.0 * fy).cos() + 0.2 * (fx - fy)
        })
        .unwrap()
    }

    #[test]
    fn identity_when_landmarks_match_template() {
        let raw = smooth_fixture(128);
        let out = align_face(&raw, &template(128), 128).unwrap();
        assert!(out.max_abs_diff(&raw) < 1e-6);
    }

    #[test]
    fn output_size_256() {
        let raw = smooth_fixture(200);
        let lm = template(128).translated(30.0, 20.0);
        let out = align_face(&raw, &lm, 256).unwrap();
        assert_eq!(out.dims(), (256, 256, 3));
        assert!(align_face(&raw, &lm, 100).is_err());
    }

    #[test]
    fn rotated_input_aligns_like_the_original() {
        let n = 160;
        let raw = smooth_fixture(n);
        // rotate 90° clockwise: new(x, y) = old(y, n-1-x)
        let rotated = Image::from_fn(n, n, 3, |x, y, c| raw.get(y, n - 1 - x, c)).unwrap();
        let lm = template(128).scaled(1.1).translated(5.0, 3.0);
        // old point (u, v) lands at (n-1-v, u)
        let lm_rot = lm.map(|[u, v]| [(n - 1) as f64 - v, u]);
        let a = align_face(&raw, &lm, 128).unwrap();
        let b = align_face(&rotated, &lm_rot, 128).unwrap();
        assert!(a.mean_abs_diff(&b) < 0.02, "{}", a.mean_abs_diff(&b));
    }

    #[test]
    fn collinear_landmarks_are_rejected() {
        let raw = smooth_fixture(64);
        let lm = Landmarks([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0], [5.0, 5.0]]);
        assert!(matches!(
            align_face(&raw, &lm, 128),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn landmarks_outside_image_are_rejected() {
        let raw = smooth_fixture(64);
        assert!(align_face(&raw, &template(128), 128).is_err());
    }

    #[test]
    fn estimated_transform_reproduces_template() {
        let t = Similarity {
            a: 0.8 * 0.3f64.cos(),
            b: 0.8 * 0.3f64.sin(),
            tx: 12.0,
            ty: -4.0,
        };
        let src = template(128).map(|p| t.apply(p));
        let est = estimate_similarity(&src, &template(128)).unwrap();
        for (p, q) in src.points().iter().zip(template(128).points()) {
            let r = est.apply(*p);
            assert!((r[0] - q[0]).abs() < 0.5 && (r[1] - q[1]).abs() < 0.5);
        }
        let round = est.inverse().apply(est.apply([3.0, 7.0]));
        assert!((round[0] - 3.0).abs() < 1e-9 && (round[1] - 7.0).abs() < 1e-9);
    }
}
