use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::label::ManeuverLabel;
use crate::error::{Error, Result};

/// Frames per clip after sampling: 5 seconds at 3 frames per second.
pub const CLIP_FRAMES: usize = 15;
pub const FRAMES_PER_SECOND: usize = 3;

/// An RGB image stored row-major as `height × width × 3` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty frame {height}x{width}")));
        }
        if data.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "frame {height}x{width}x3 needs {} bytes, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        assert!(height > 0 && width > 0, "frame dims must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width * 3],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }
}

/// The four input streams of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    InsideAppearance,
    OutsideAppearance,
    InsideFlow,
    OutsideFlow,
}

impl BranchKind {
    pub const ALL: [BranchKind; 4] = [
        BranchKind::InsideAppearance,
        BranchKind::OutsideAppearance,
        BranchKind::InsideFlow,
        BranchKind::OutsideFlow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BranchKind::InsideAppearance => "inside_appearance",
            BranchKind::OutsideAppearance => "outside_appearance",
            BranchKind::InsideFlow => "inside_flow",
            BranchKind::OutsideFlow => "outside_flow",
        }
    }

    pub fn is_flow(self) -> bool {
        matches!(self, BranchKind::InsideFlow | BranchKind::OutsideFlow)
    }

    /// Subdirectory name used by the on-disk dataset layout.
    pub fn dir_name(self) -> &'static str {
        match self {
            BranchKind::InsideAppearance => "inside",
            BranchKind::OutsideAppearance => "outside",
            BranchKind::InsideFlow => "inside_flow",
            BranchKind::OutsideFlow => "outside_flow",
        }
    }
}

impl fmt::Display for BranchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BranchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown branch {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub label: ManeuverLabel,
    pub driver_id: String,
    pub branches: BTreeMap<BranchKind, Vec<Frame>>,
}

impl Clip {
    pub fn branch(&self, kind: BranchKind) -> Option<&[Frame]> {
        self.branches.get(&kind).map(Vec::as_slice)
    }

    /// Number of frames per branch (0 for a clip with no branches).
    pub fn len(&self) -> usize {
        self.branches.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks that all branches hold the same number of frames and that
    /// frames inside a branch share their dimensions.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for (kind, frames) in &self.branches {
            if frames.len() != n {
                return Err(Error::Shape(format!(
                    "clip {}: branch {kind} has {} frames, expected {n}",
                    self.id,
                    frames.len()
                )));
            }
            if let Some(first) = frames.first() {
                if frames.iter().any(|f| f.dims() != first.dims()) {
                    return Err(Error::Shape(format!(
                        "clip {}: branch {kind} mixes frame sizes",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}
