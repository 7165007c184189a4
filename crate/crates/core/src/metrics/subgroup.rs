use serde::{Deserialize, Serialize};

use crate::data::{Metadata, Side};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subgroup {
    PitchSideRight,
    PitchSideLeft,
    RightFooted,
    LeftFooted,
}

impl Subgroup {
    pub const ALL: [Subgroup; 4] =
        [Subgroup::PitchSideRight, Subgroup::PitchSideLeft, Subgroup::RightFooted, Subgroup::LeftFooted];

    pub fn contains(self, m: &Metadata) -> bool {
        match self {
            Subgroup::PitchSideRight => m.pitch_side == Side::Right,
            Subgroup::PitchSideLeft => m.pitch_side == Side::Left,
            Subgroup::RightFooted => m.foot == Side::Right,
            Subgroup::LeftFooted => m.foot == Side::Left,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Subgroup::PitchSideRight => "pitch side right",
            Subgroup::PitchSideLeft => "pitch side left",
            Subgroup::RightFooted => "right-footed",
            Subgroup::LeftFooted => "left-footed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub group: Subgroup,
    pub samples: usize,
    pub correct: usize,
}

impl SubgroupRow {
    /// `None` for an empty group.
    pub fn accuracy(&self) -> Option<f64> {
        (self.samples > 0).then(|| self.correct as f64 / self.samples as f64)
    }

    pub fn error_rate(&self) -> Option<f64> {
        self.accuracy().map(|a| 1.0 - a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub rows: Vec<SubgroupRow>,
}

impl SubgroupReport {
    pub fn get(&self, g: Subgroup) -> &SubgroupRow {
        self.rows.iter().find(|r| r.group == g).expect("every subgroup has a row")
    }

    pub fn merge(&mut self, other: &SubgroupReport) {
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            a.samples += b.samples;
            a.correct += b.correct;
        }
    }
}

/// Accuracy within each pitch-side and kicker-foot group.
pub fn subgroup_report(meta: &[Metadata], truth: &[usize], preds: &[usize]) -> Result<SubgroupReport> {
    if meta.len() != truth.len() || truth.len() != preds.len() {
        return Err(Error::Shape("metadata, labels and predictions differ in length".into()));
    }
    let rows = Subgroup::ALL
        .iter()
        .map(|&group| {
            let mut row = SubgroupRow { group, samples: 0, correct: 0 };
            for i in (0..meta.len()).filter(|&i| group.contains(&meta[i])) {
                row.samples += 1;
                row.correct += (truth[i] == preds[i]) as usize;
            }
            row
        })
        .collect();
    Ok(SubgroupReport { rows })
}
