use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mat;

/// Shot (or goalkeeper dive) direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left = 0,
    Center = 1,
    Right = 2,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Left, Direction::Center, Direction::Right];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Direction> {
        Direction::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Center => "center",
            Direction::Right => "right",
        }
    }
}

/// Which directions are classes: all three, or left/right only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace {
    ThreeClass,
    TwoClass,
}

impl LabelSpace {
    pub fn from_classes(n: usize) -> Result<Self> {
        match n {
            3 => Ok(LabelSpace::ThreeClass),
            2 => Ok(LabelSpace::TwoClass),
            _ => Err(Error::Config(format!("class count must be 2 or 3, got {n}"))),
        }
    }

    pub fn classes(self) -> usize {
        match self {
            LabelSpace::ThreeClass => 3,
            LabelSpace::TwoClass => 2,
        }
    }

    /// Class index of a direction, `None` when the direction is not a class.
    pub fn class_of(self, d: Direction) -> Option<usize> {
        match (self, d) {
            (LabelSpace::ThreeClass, d) => Some(d as usize),
            (LabelSpace::TwoClass, Direction::Left) => Some(0),
            (LabelSpace::TwoClass, Direction::Right) => Some(1),
            (LabelSpace::TwoClass, Direction::Center) => None,
        }
    }

    pub fn direction_of(self, class: usize) -> Direction {
        match (self, class) {
            (LabelSpace::ThreeClass, c) => Direction::ALL[c],
            (LabelSpace::TwoClass, 0) => Direction::Left,
            (LabelSpace::TwoClass, _) => Direction::Right,
        }
    }

    pub fn class_names(self) -> Vec<&'static str> {
        (0..self.classes()).map(|c| self.direction_of(c).name()).collect()
    }
}

/// Penalty phase an embedding sequence belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Run,
    Kick,
}

/// Binary side attribute: pitch side of the kick, or the kicker's strong foot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Right = 0,
    Left = 1,
}

impl Side {
    pub fn from_bit(b: u8) -> Option<Side> {
        match b {
            0 => Some(Side::Right),
            1 => Some(Side::Left),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }
}

/// The two binary descriptors known before the kick.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Metadata {
    pub pitch_side: Side,
    pub foot: Side,
}

impl Metadata {
    /// Real-valued relaxation fed to the metadata branch.
    pub fn as_floats(&self) -> [f64; 2] {
        [self.pitch_side.bit() as f64, self.foot.bit() as f64]
    }
}

/// Clip embeddings of one phase, row-major `(time, feature)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSequence {
    pub phase: Phase,
    pub len: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl EmbeddingSequence {
    pub fn new(phase: Phase, len: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidInput(format!("{phase:?} sequence must hold at least one clip")));
        }
        if data.len() != len * dim {
            return Err(Error::Shape(format!(
                "{phase:?} sequence of {len} clips × {dim} features needs {} values, got {}",
                len * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain(format!("{phase:?} sequence holds non-finite values")));
        }
        Ok(EmbeddingSequence { phase, len, dim, data })
    }

    pub fn to_mat(&self) -> Mat {
        Mat { rows: self.len, cols: self.dim, data: self.data.iter().map(|&v| v as f64).collect() }
    }
}

/// One penalty kick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySample {
    pub id: String,
    pub run: EmbeddingSequence,
    pub kick: EmbeddingSequence,
    pub meta: Metadata,
    pub label: Direction,
    pub gk_direction: Option<Direction>,
}

/// Model-ready view of a sample: `f64` sequences and relaxed metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub run: Mat,
    pub kick: Mat,
    pub meta: [f64; 2],
    pub label: Direction,
    pub gk_direction: Option<Direction>,
}

impl From<&PenaltySample> for Features {
    fn from(s: &PenaltySample) -> Self {
        Features {
            run: s.run.to_mat(),
            kick: s.kick.to_mat(),
            meta: s.meta.as_floats(),
            label: s.label,
            gk_direction: s.gk_direction,
        }
    }
}

/// A set of samples sharing embedding dimension, phase lengths and label space.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub label_space: LabelSpace,
    pub dim: usize,
    pub run_len: usize,
    pub kick_len: usize,
    pub backbone: String,
    pub samples: Vec<PenaltySample>,
}

/// Summary written in the container header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub embedding_dim: usize,
    pub run_len: usize,
    pub kick_len: usize,
    pub backbone: String,
    pub label_space: LabelSpace,
    pub sample_count: usize,
    pub class_counts: Vec<usize>,
}

impl Dataset {
    pub fn new(label_space: LabelSpace, dim: usize, run_len: usize, kick_len: usize, backbone: &str) -> Self {
        Dataset { label_space, dim, run_len, kick_len, backbone: backbone.to_string(), samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Class index of a sample's label in this dataset's label space.
    pub fn class_of(&self, s: &PenaltySample) -> Result<usize> {
        self.label_space.class_of(s.label).ok_or_else(|| Error::SampleDimension {
            id: s.id.clone(),
            reason: format!("label {} is not a class in the two-class space", s.label.name()),
        })
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        self.samples.iter().map(|s| self.class_of(s)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_space.classes()];
        for s in &self.samples {
            if let Some(c) = self.label_space.class_of(s.label) {
                counts[c] += 1;
            }
        }
        counts
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            version: super::format::FORMAT_VERSION,
            embedding_dim: self.dim,
            run_len: self.run_len,
            kick_len: self.kick_len,
            backbone: self.backbone.clone(),
            label_space: self.label_space,
            sample_count: self.samples.len(),
            class_counts: self.class_counts(),
        }
    }

    /// Checks every sample against the dataset-level shape and label space.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate sample id `{}`", s.id)));
            }
            for (seq, want_len, phase) in [(&s.run, self.run_len, Phase::Run), (&s.kick, self.kick_len, Phase::Kick)] {
                if seq.phase != phase || seq.len != want_len || seq.dim != self.dim || seq.data.len() != want_len * self.dim {
                    return Err(Error::SampleDimension {
                        id: s.id.clone(),
                        reason: format!(
                            "{phase:?} sequence is {}×{} ({} values), dataset expects {want_len}×{}",
                            seq.len,
                            seq.dim,
                            seq.data.len(),
                            self.dim
                        ),
                    });
                }
            }
            self.class_of(s)?;
        }
        Ok(())
    }

    /// Samples in `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset { samples: indices.iter().map(|&i| self.samples[i].clone()).collect(), ..self.header_only() }
    }

    fn header_only(&self) -> Dataset {
        Dataset::new(self.label_space, self.dim, self.run_len, self.kick_len, &self.backbone)
    }
}

/// Drops center samples and switches to the left/right label space.
///
/// Already-binary datasets pass through unchanged.
pub fn binarize(ds: &Dataset) -> Dataset {
    let mut out = ds.header_only();
    out.label_space = LabelSpace::TwoClass;
    out.samples = ds.samples.iter().filter(|s| s.label != Direction::Center).cloned().collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(id: &str, label: Direction) -> PenaltySample {
        PenaltySample {
            id: id.into(),
            run: EmbeddingSequence::new(Phase::Run, 2, 2, vec![0.0; 4]).unwrap(),
            kick: EmbeddingSequence::new(Phase::Kick, 1, 2, vec![1.0; 2]).unwrap(),
            meta: Metadata { pitch_side: Side::Right, foot: Side::Left },
            label,
            gk_direction: None,
        }
    }

    fn with_counts(counts: [usize; 3]) -> Dataset {
        let mut ds = Dataset::new(LabelSpace::ThreeClass, 2, 2, 1, "test");
        for (d, &n) in Direction::ALL.iter().zip(&counts) {
            for i in 0..n {
                ds.samples.push(sample(&format!("{}-{i}", d.name()), *d));
            }
        }
        ds
    }

    #[test]
    fn binarize_published_counts() {
        let ds = with_counts([294, 103, 225]);
        let bin = binarize(&ds);
        assert_eq!(bin.len(), 519);
        assert_eq!(bin.class_counts(), vec![294, 225]);
        assert_eq!(bin.labels().unwrap().iter().filter(|&&c| c == 1).count(), 225);
    }

    #[test]
    fn binarize_edge_cases() {
        let no_center = with_counts([4, 0, 3]);
        assert_eq!(binarize(&no_center).len(), 7);
        let only_center = with_counts([0, 5, 0]);
        assert!(binarize(&only_center).is_empty());
        let once = binarize(&with_counts([3, 2, 1]));
        assert_eq!(binarize(&once), once);
    }

    #[test]
    fn two_class_mapping() {
        let s = LabelSpace::TwoClass;
        assert_eq!(s.class_of(Direction::Right), Some(1));
        assert_eq!(s.class_of(Direction::Center), None);
        assert_eq!(s.direction_of(1), Direction::Right);
        assert_eq!(s.class_names(), vec!["left", "right"]);
    }

    #[test]
    fn validate_flags_shape_and_duplicates() {
        let mut ds = with_counts([1, 1, 1]);
        ds.validate().unwrap();
        ds.samples[1].kick.dim = 3;
        assert!(matches!(ds.validate(), Err(Error::SampleDimension { .. })));
        let mut ds = with_counts([2, 0, 0]);
        ds.samples[1].id = ds.samples[0].id.clone();
        assert!(ds.validate().is_err());
    }
}
