use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

macro_rules! label_enum {
    ($name:ident, $field:literal, [$($variant:ident => $text:literal),+ $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const COUNT: usize = Self::ALL.len();

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Result<Self> {
                Self::ALL
                    .get(i)
                    .copied()
                    .ok_or_else(|| CoreError::Invalid(format!("{} class index {i} out of range", $field)))
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn parse(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(CoreError::Invalid(format!("unknown {} label {other:?}", $field))),
                }
            }
        }
    };
}

label_enum!(Gait, "gait", [Walking => "walking", Standing => "standing"]);
label_enum!(Attention, "attention", [Looking => "looking", NotLooking => "not_looking"]);
label_enum!(Orientation, "orientation", [Left => "left", Right => "right", Front => "front", Back => "back"]);
label_enum!(Distraction, "distraction", [Phoning => "phoning", NotPhoning => "not_phoning"]);
label_enum!(Crossing, "crossing", [Crossing => "crossing", NotCrossing => "not_crossing"]);

impl Orientation {
    pub fn mirrored(self) -> Self {
        match self {
            Orientation::Left => Orientation::Right,
            Orientation::Right => Orientation::Left,
            o => o,
        }
    }
}

/// Class index 0 is the positive class of every binary task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionLabels {
    pub gait: Gait,
    pub attention: Attention,
    pub orientation: Orientation,
    pub distraction: Distraction,
    pub crossing: Crossing,
}

impl ActionLabels {
    pub fn indices(&self) -> [usize; 5] {
        [
            self.gait.index(),
            self.attention.index(),
            self.orientation.index(),
            self.distraction.index(),
            self.crossing.index(),
        ]
    }

    pub fn from_indices(ix: [usize; 5]) -> Result<Self> {
        Ok(ActionLabels {
            gait: Gait::from_index(ix[0])?,
            attention: Attention::from_index(ix[1])?,
            orientation: Orientation::from_index(ix[2])?,
            distraction: Distraction::from_index(ix[3])?,
            crossing: Crossing::from_index(ix[4])?,
        })
    }
}

/// The five prediction tasks, in head order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Gait,
    Attention,
    Orientation,
    Distraction,
    Crossing,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Gait, Task::Attention, Task::Orientation, Task::Distraction, Task::Crossing];

    pub fn classes(self) -> usize {
        match self {
            Task::Orientation => 4,
            _ => 2,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Task::Gait => "GAIT",
            Task::Attention => "ATTN",
            Task::Orientation => "ORNT",
            Task::Distraction => "DIST",
            Task::Crossing => "XNG",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneWidth {
    Narrow,
    Wide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SceneContext {
    pub traffic_light: bool,
    pub traffic_sign: bool,
    pub crosswalk: bool,
    pub lane: LaneWidth,
}

impl Default for SceneContext {
    fn default() -> Self {
        SceneContext {
            traffic_light: false,
            traffic_sign: false,
            crosswalk: false,
            lane: LaneWidth::Narrow,
        }
    }
}

impl SceneContext {
    /// (traffic_light, traffic_sign, crosswalk, lane_narrow, lane_wide)
    pub fn bits(&self) -> [f64; 5] {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        [
            b(self.traffic_light),
            b(self.traffic_sign),
            b(self.crosswalk),
            b(self.lane == LaneWidth::Narrow),
            b(self.lane == LaneWidth::Wide),
        ]
    }

    pub fn from_bits(bits: &[f64]) -> Result<Self> {
        if bits.len() != 5 {
            return Err(CoreError::Invalid(format!("scene context needs 5 bits, got {}", bits.len())));
        }
        let lane = match (bits[3] > 0.5, bits[4] > 0.5) {
            (true, false) => LaneWidth::Narrow,
            (false, true) => LaneWidth::Wide,
            _ => return Err(CoreError::Invalid("exactly one lane bit must be set".into())),
        };
        Ok(SceneContext {
            traffic_light: bits[0] > 0.5,
            traffic_sign: bits[1] > 0.5,
            crosswalk: bits[2] > 0.5,
            lane,
        })
    }
}
