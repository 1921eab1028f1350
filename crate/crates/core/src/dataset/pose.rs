use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ImageRecord;

/// Reporting bin: yaw magnitude (±θ merged) and signed pitch.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PoseBin {
    pub abs_yaw_deg: f64,
    pub pitch_deg: f64,
}

impl PoseBin {
    pub fn new(yaw_deg: f64, pitch_deg: f64) -> Self {
        Self {
            abs_yaw_deg: yaw_deg.abs(),
            pitch_deg,
        }
    }

    /// Hundredths of a degree, used for equality and ordering.
    pub fn key(&self) -> (i64, i64) {
        (
            (self.pitch_deg * 100.0).round() as i64,
            (self.abs_yaw_deg * 100.0).round() as i64,
        )
    }
}

pub fn pose_bin(record: &ImageRecord) -> PoseBin {
    PoseBin::new(record.yaw_deg, record.pitch_deg)
}

impl PartialEq for PoseBin {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for PoseBin {}

impl PartialOrd for PoseBin {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PoseBin {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl std::hash::Hash for PoseBin {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_yaw_sign_and_keeps_pitch_sign() {
        let a = PoseBin::new(-75.0, 15.0);
        let b = PoseBin::new(75.0, 15.0);
        assert_eq!(a, b);
        assert_eq!((a.abs_yaw_deg, a.pitch_deg), (75.0, 15.0));
        let c = PoseBin::new(-22.5, -30.0);
        assert_eq!((c.abs_yaw_deg, c.pitch_deg), (22.5, -30.0));
        assert_ne!(PoseBin::new(30.0, 15.0), PoseBin::new(30.0, -15.0));
    }
}
