use std::collections::HashMap;
use std::path::{Path, PathBuf};

use frontalize_tensor::Tensor;

use crate::dataset::{
    align_face_with_transform, resolve_ref, seeded_shuffle, ImageRecord, Landmarks, ProtocolDir,
};
use crate::image::Image;
use crate::parsing::{parse_masks, LandmarkParser, MaskTriple};
use crate::{Error, Result};

/// Loads the image of `record`, either aligned onto the template or checked to
/// already be `size × size`. Returns the image and its landmarks in image
/// coordinates.
pub fn load_face(
    root: &Path,
    record: &ImageRecord,
    size: usize,
    align: bool,
) -> Result<(Image, Landmarks)> {
    let path = resolve_ref(root, &record.image_ref);
    let raw = Image::load(&path)?;
    if align {
        let (im, t) = align_face_with_transform(&raw, &record.landmarks, size)?;
        return Ok((im, record.landmarks.map(|p| t.apply(p))));
    }
    if raw.width() != size || raw.height() != size {
        return Err(Error::Image {
            path,
            message: format!(
                "expected {size}x{size}, got {}x{}",
                raw.width(),
                raw.height()
            ),
        });
    }
    if !record.landmarks.inside(size, size) {
        return Err(Error::Image {
            path,
            message: "landmarks fall outside the image".into(),
        });
    }
    Ok((raw, record.landmarks))
}

/// A profile image with its frontal target.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPair {
    pub profile: ImageRecord,
    pub frontal: ImageRecord,
}

type PairKey = (u32, crate::dataset::Attribute, crate::dataset::Illumination);

/// Pairs every non-frontal record with the frontal record of the same
/// subject, attribute and illumination. Returns the pairs and the number of
/// profiles left without a frontal partner.
pub fn build_pairs(records: &[ImageRecord]) -> (Vec<TrainPair>, usize) {
    let mut frontal: HashMap<PairKey, &ImageRecord> = HashMap::new();
    for r in records.iter().filter(|r| r.is_frontal()) {
        frontal
            .entry((r.subject_id, r.attribute, r.illumination))
            .or_insert(r);
    }
    let mut unpaired = 0;
    let mut pairs = Vec::new();
    for r in records.iter().filter(|r| !r.is_frontal()) {
        match frontal.get(&(r.subject_id, r.attribute, r.illumination)) {
            Some(y) => pairs.push(TrainPair {
                profile: r.clone(),
                frontal: (*y).clone(),
            }),
            None => unpaired += 1,
        }
    }
    (pairs, unpaired)
}

/// Network-ready tensors for one batch. Masks are `[B, 1, S, S]` and always
/// come from the frontal targets.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x: Tensor,
    pub y: Tensor,
    pub masks: [Tensor; 3],
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_parts(items: &[(Image, Image, MaskTriple)]) -> Result<Self> {
        let xs: Vec<&Image> = items.iter().map(|(x, _, _)| x).collect();
        let ys: Vec<&Image> = items.iter().map(|(_, y, _)| y).collect();
        let (w, h, _) = items
            .first()
            .ok_or_else(|| Error::Trainer("empty batch".into()))?
            .1
            .dims();
        let mask = |pick: fn(&MaskTriple) -> &crate::Plane| -> Result<Tensor> {
            let data = items
                .iter()
                .flat_map(|(_, _, m)| pick(m).data.iter().copied())
                .collect();
            Ok(Tensor::new(&[items.len(), 1, h, w], data)?)
        };
        Ok(Self {
            x: Image::batch(&xs)?,
            y: Image::batch(&ys)?,
            masks: [mask(|m| &m.hair)?, mask(|m| &m.skin)?, mask(|m| &m.face)?],
        })
    }
}

/// Training pairs of a protocol, loaded from disk one batch at a time.
pub struct TrainData {
    root: PathBuf,
    pairs: Vec<TrainPair>,
    size: usize,
    align: bool,
    pub unpaired: usize,
}

impl TrainData {
    pub fn new(root: PathBuf, records: &[ImageRecord], size: usize, align: bool) -> Result<Self> {
        let (pairs, unpaired) = build_pairs(records);
        if pairs.is_empty() {
            return Err(Error::Trainer("no profile/frontal training pairs".into()));
        }
        Ok(Self {
            root,
            pairs,
            size,
            align,
            unpaired,
        })
    }

    pub fn from_protocol(protocol: &ProtocolDir, size: usize, align: bool) -> Result<Self> {
        Self::new(
            protocol.meta.image_root.clone(),
            &protocol.split.train,
            size,
            align,
        )
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[TrainPair] {
        &self.pairs
    }

    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.pairs.len().div_ceil(batch_size)
    }

    /// Pair indices of every batch in `epoch`, shuffled by `(seed, epoch)`;
    /// the last batch may be short.
    pub fn epoch_order(&self, seed: u64, epoch: u64, batch_size: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        seeded_shuffle(&mut order, seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.chunks(batch_size).map(<[usize]>::to_vec).collect()
    }

    fn masks_for(&self, pair: &TrainPair, y: &Image, landmarks: &Landmarks) -> Result<MaskTriple> {
        match &pair.frontal.mask_ref {
            Some(r) => {
                let m = MaskTriple::load(&resolve_ref(&self.root, r))?;
                parse_masks(y, &Precomputed(m), None)
            }
            None => parse_masks(y, &LandmarkParser, Some(landmarks)),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let items = indices
            .iter()
            .map(|&i| {
                let pair = &self.pairs[i];
                let (x, _) = load_face(&self.root, &pair.profile, self.size, self.align)?;
                let (y, lm) = load_face(&self.root, &pair.frontal, self.size, self.align)?;
                let masks = self.masks_for(pair, &y, &lm)?;
                Ok((x, y, masks))
            })
            .collect::<Result<Vec<_>>>()?;
        Batch::from_parts(&items)
    }
}

/// Parser that returns masks read from disk.
struct Precomputed(MaskTriple);

impl crate::parsing::FacialParser for Precomputed {
    fn parse(&self, _: &Image, _: Option<&Landmarks>) -> Result<MaskTriple> {
        Ok(self.0.clone())
    }
}
