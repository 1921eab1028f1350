use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Five facial landmarks in pixel coordinates: left eye, right eye, nose tip,
/// left mouth corner, right mouth corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmarks(pub [[f64; 2]; 5]);

impl Landmarks {
    pub fn points(&self) -> &[[f64; 2]; 5] {
        &self.0
    }

    pub fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Landmarks {
        Landmarks(self.0.map(f))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Landmarks {
        self.map(|[x, y]| [x + dx, y + dy])
    }

    pub fn scaled(&self, s: f64) -> Landmarks {
        self.map(|[x, y]| [x * s, y * s])
    }

    /// True when every point lies in `[0, width) × [0, height)`.
    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.0
            .iter()
            .all(|&[x, y]| x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Neutral,
    Glasses,
    Smile,
    Surprise,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Neutral,
        Attribute::Glasses,
        Attribute::Smile,
        Attribute::Surprise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Neutral => "neutral",
            Attribute::Glasses => "glasses",
            Attribute::Smile => "smile",
            Attribute::Surprise => "surprise",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Illumination {
    Above,
    Front,
    FrontAbove,
    FrontBelow,
    Behind,
    Left,
    Right,
}

impl Illumination {
    pub const ALL: [Illumination; 7] = [
        Illumination::Above,
        Illumination::Front,
        Illumination::FrontAbove,
        Illumination::FrontBelow,
        Illumination::Behind,
        Illumination::Left,
        Illumination::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Illumination::Above => "above",
            Illumination::Front => "front",
            Illumination::FrontAbove => "front_above",
            Illumination::FrontBelow => "front_below",
            Illumination::Behind => "behind",
            Illumination::Left => "left",
            Illumination::Right => "right",
        }
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown attribute `{s}`"))
    }
}

impl FromStr for Illumination {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Illumination::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown illumination `{s}`"))
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Illumination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One manifest row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_ref: String,
    pub subject_id: u32,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub attribute: Attribute,
    pub illumination: Illumination,
    pub landmarks: Landmarks,
    /// Optional precomputed hair/skin/feature masks, stored as a 3-plane image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
}

const ANGLE_EPS: f64 = 1e-9;

impl ImageRecord {
    /// Yaw 0 and pitch 0.
    pub fn is_frontal(&self) -> bool {
        self.yaw_deg.abs() < ANGLE_EPS && self.pitch_deg.abs() < ANGLE_EPS
    }

    /// Frontal, neutral, lit from above: the gallery condition.
    pub fn is_gallery_condition(&self) -> bool {
        self.is_frontal()
            && self.attribute == Attribute::Neutral
            && self.illumination == Illumination::Above
    }
}
