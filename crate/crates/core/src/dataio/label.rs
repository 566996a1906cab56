use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Driver maneuver classes, in the canonical index order used by every
/// probability vector and confusion matrix in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverLabel {
    GoStraight,
    LeftLaneChange,
    LeftTurn,
    RightLaneChange,
    RightTurn,
}

pub const NUM_CLASSES: usize = 5;

impl ManeuverLabel {
    pub const ALL: [ManeuverLabel; NUM_CLASSES] = [
        ManeuverLabel::GoStraight,
        ManeuverLabel::LeftLaneChange,
        ManeuverLabel::LeftTurn,
        ManeuverLabel::RightLaneChange,
        ManeuverLabel::RightTurn,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ManeuverLabel::GoStraight => "go_straight",
            ManeuverLabel::LeftLaneChange => "left_lane_change",
            ManeuverLabel::LeftTurn => "left_turn",
            ManeuverLabel::RightLaneChange => "right_lane_change",
            ManeuverLabel::RightTurn => "right_turn",
        }
    }

    /// Label seen after mirroring the scene left-to-right.
    pub fn mirror(self) -> Self {
        match self {
            ManeuverLabel::GoStraight => ManeuverLabel::GoStraight,
            ManeuverLabel::LeftLaneChange => ManeuverLabel::RightLaneChange,
            ManeuverLabel::LeftTurn => ManeuverLabel::RightTurn,
            ManeuverLabel::RightLaneChange => ManeuverLabel::LeftLaneChange,
            ManeuverLabel::RightTurn => ManeuverLabel::LeftTurn,
        }
    }

    /// -1 for leftward maneuvers, +1 for rightward, 0 for straight.
    pub fn direction(self) -> i32 {
        match self {
            ManeuverLabel::GoStraight => 0,
            ManeuverLabel::LeftLaneChange | ManeuverLabel::LeftTurn => -1,
            ManeuverLabel::RightLaneChange | ManeuverLabel::RightTurn => 1,
        }
    }

    pub fn is_turn(self) -> bool {
        matches!(self, ManeuverLabel::LeftTurn | ManeuverLabel::RightTurn)
    }
}

impl fmt::Display for ManeuverLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ManeuverLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown label {s:?}")))
    }
}
