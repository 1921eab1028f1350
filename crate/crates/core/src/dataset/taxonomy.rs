//! The 62 yaw/pitch combinations captured by the M2FPA rig.

const YAW_15: [f64; 13] = [
    -90.0, -75.0, -60.0, -45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0,
];
const YAW_22_5: [f64; 9] = [-90.0, -67.5, -45.0, -22.5, 0.0, 22.5, 45.0, 67.5, 90.0];
const YAW_45: [f64; 5] = [-90.0, -45.0, 0.0, 45.0, 90.0];

/// Pitch values, from the highest camera layer down.
pub const PITCHES: [f64; 6] = [45.0, 30.0, 15.0, 0.0, -15.0, -30.0];

/// Signed yaw angles captured at `pitch`, or an empty slice for an unknown pitch.
pub fn yaws_at_pitch(pitch: f64) -> &'static [f64] {
    match pitch_key(pitch) {
        450 => &YAW_45,
        300 | -300 => &YAW_22_5,
        150 | 0 | -150 => &YAW_15,
        _ => &[],
    }
}

fn pitch_key(pitch: f64) -> i64 {
    if (pitch * 10.0 - (pitch * 10.0).round()).abs() > 1e-6 {
        return i64::MIN;
    }
    (pitch * 10.0).round() as i64
}

fn same_angle(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-6
}

pub fn is_taxonomy_pose(yaw: f64, pitch: f64) -> bool {
    PITCHES.iter().any(|&p| same_angle(p, pitch))
        && yaws_at_pitch(pitch).iter().any(|&y| same_angle(y, yaw))
}

/// All 62 poses as `(yaw, pitch)`.
pub fn all_poses() -> Vec<(f64, f64)> {
    PITCHES
        .iter()
        .flat_map(|&p| yaws_at_pitch(p).iter().map(move |&y| (y, p)))
        .collect()
}

/// The 57 poses used for training and testing (everything but pitch +45°).
pub fn protocol_poses() -> Vec<(f64, f64)> {
    all_poses()
        .into_iter()
        .filter(|&(_, p)| !same_angle(p, 45.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_counts() {
        assert_eq!(all_poses().len(), 62);
        assert_eq!(protocol_poses().len(), 57);
        // 13 yaw-only poses at pitch 0, the rest mix yaw and pitch
        assert_eq!(all_poses().iter().filter(|p| p.1 == 0.0).count(), 13);
    }

    #[test]
    fn membership() {
        assert!(is_taxonomy_pose(-67.5, 30.0));
        assert!(is_taxonomy_pose(-67.5, -30.0));
        assert!(!is_taxonomy_pose(-67.5, 15.0));
        assert!(!is_taxonomy_pose(0.0, 7.0));
        assert!(!is_taxonomy_pose(-45.0, -45.0));
        assert!(is_taxonomy_pose(45.0, 45.0));
    }
}
