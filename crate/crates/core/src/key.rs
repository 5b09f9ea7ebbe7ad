use serde::{Deserialize, Serialize};
use std::fmt;

/// Identifies one keyframe: owning robot and its contiguous index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Key {
    pub robot: String,
    pub index: usize,
}

impl Key {
    pub fn new(robot: impl Into<String>, index: usize) -> Self {
        Self {
            robot: robot.into(),
            index,
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.robot, self.index)
    }
}
