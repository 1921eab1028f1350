use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::PoseBin;
use crate::{Error, Result};

/// Where a set of embeddings came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Original,
    Frontalized,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Original => "original",
            Source::Frontalized => "frontalized",
        }
    }
}

/// `N × D` feature rows, one subject id per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<u32>,
    dim: usize,
    data: Vec<f64>,
    pub source: Source,
}

impl EmbeddingSet {
    /// Rejects non-finite entries and zero rows, which have no direction.
    pub fn new(ids: Vec<u32>, dim: usize, data: Vec<f64>, source: Source) -> Result<Self> {
        if dim == 0 || data.len() != ids.len() * dim {
            return Err(Error::Eval(format!(
                "{} ids with dimension {dim} need {} values, got {}",
                ids.len(),
                ids.len() * dim,
                data.len()
            )));
        }
        for (i, row) in data.chunks_exact(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Eval(format!("embedding row {i} is not finite")));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::Eval(format!("embedding row {i} has zero norm")));
            }
        }
        Ok(Self {
            ids,
            dim,
            data,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// `1 − cos(a, b)`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Eval(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::Eval("cosine distance of a zero-norm vector".into()));
    }
    Ok(1.0 - ab / (aa.sqrt() * bb.sqrt()))
}

/// Mean of the original-probe and generated-probe distances to `gallery`.
pub fn fused_distance(probe_orig: &[f64], probe_gen: &[f64], gallery: &[f64]) -> Result<f64> {
    Ok(0.5 * (cosine_distance(probe_orig, gallery)? + cosine_distance(probe_gen, gallery)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub subject: u32,
    pub predicted: u32,
    pub distance: f64,
    pub correct: bool,
    pub bin: PoseBin,
}

/// Correct and total probe counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
    }

    /// `100 · correct / total`, or `None` for an empty tally.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedResult {
    /// One entry per probe whose subject is enrolled, in probe order.
    pub outcomes: Vec<ProbeOutcome>,
    /// Probe indices whose subject has no gallery row; never scored.
    pub unmatched: Vec<usize>,
    /// Subjects behind `unmatched`, ascending.
    pub missing_subjects: Vec<u32>,
}

impl RankedResult {
    pub fn overall(&self) -> Tally {
        let mut t = Tally::default();
        for o in &self.outcomes {
            t.add(o.correct);
        }
        t
    }

    pub fn by_bin(&self) -> BTreeMap<PoseBin, Tally> {
        let mut m: BTreeMap<PoseBin, Tally> = BTreeMap::new();
        for o in &self.outcomes {
            m.entry(o.bin).or_default().add(o.correct);
        }
        m
    }

    /// Fails with the missing subjects if any probe went unscored.
    pub fn require_complete(&self) -> Result<()> {
        if self.missing_subjects.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingGallery(self.missing_subjects.clone()))
        }
    }
}

/// Assigns every probe to the gallery subject with the smallest fused
/// distance; equal distances go to the lowest subject id. Passing the same
/// set as `probe_orig` and `probe_gen` gives plain cosine-distance rank-1.
pub fn rank1(
    probe_orig: &EmbeddingSet,
    probe_gen: &EmbeddingSet,
    gallery: &EmbeddingSet,
    bins: &[PoseBin],
) -> Result<RankedResult> {
    if probe_orig.ids != probe_gen.ids {
        return Err(Error::Eval(
            "original and generated probes disagree on subjects".into(),
        ));
    }
    if bins.len() != probe_orig.len() {
        return Err(Error::Eval(format!(
            "{} probes but {} pose bins",
            probe_orig.len(),
            bins.len()
        )));
    }
    if gallery.is_empty() {
        return Err(Error::Eval("empty gallery".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = gallery.ids.iter().find(|id| !seen.insert(**id)) {
        return Err(Error::Eval(format!(
            "gallery has more than one row for subject {dup}"
        )));
    }
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by_key(|&i| gallery.ids[i]);

    let mut outcomes = Vec::with_capacity(probe_orig.len());
    let mut unmatched = Vec::new();
    let mut missing = BTreeSet::new();
    for (p, &subject) in probe_orig.ids.iter().enumerate() {
        if !seen.contains(&subject) {
            unmatched.push(p);
            missing.insert(subject);
            continue;
        }
        let mut best: Option<(f64, u32)> = None;
        for &gi in &order {
            let d = fused_distance(probe_orig.row(p), probe_gen.row(p), gallery.row(gi))?;
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, gallery.ids[gi]));
            }
        }
        let (distance, predicted) = best.expect("gallery is nonempty");
        outcomes.push(ProbeOutcome {
            subject,
            predicted,
            distance,
            correct: predicted == subject,
            bin: bins[p],
        });
    }
    Ok(RankedResult {
        outcomes,
        unmatched,
        missing_subjects: missing.into_iter().collect(),
    })
}
