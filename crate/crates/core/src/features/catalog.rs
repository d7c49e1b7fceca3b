//! The three published feature catalogs, in their documented order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    Mean,
    Min,
    Max,
    Sum,
    Sd,
}

impl Stat {
    fn suffix(self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Min => "min",
            Stat::Max => "max",
            Stat::Sum => "sum",
            Stat::Sd => "sd",
        }
    }
}

/// Object-of-interest families of the classroom scene, matched by label prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ooi {
    Peer,
    Teacher,
    Screen,
}

impl Ooi {
    pub const ALL: [Ooi; 3] = [Ooi::Peer, Ooi::Teacher, Ooi::Screen];

    pub fn prefix(self) -> &'static str {
        match self {
            Ooi::Peer => "peer",
            Ooi::Teacher => "teacher",
            Ooi::Screen => "screen",
        }
    }
}

/// What a descriptor measures inside one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Moving head segments starting in the window, per second.
    HmdMoveRate,
    /// Fixations per `per_s` seconds.
    FixationRate { per_s: f64 },
    FixationCount,
    FixationDuration(Stat),
    OoiFixationCount(Ooi),
    OoiFixationDuration(Ooi, Stat),
    Dwell(Ooi),
    FixatedPeerCount,
    /// Fixations carrying any AOI label.
    AoiFixationCount,
    AoiFixationDuration(Stat),
    SaccadeRate { per_s: f64 },
    SaccadeCount,
    SaccadeDuration(Stat),
    SaccadeAmplitude(Stat),
    SaccadePeakVelocity(Stat),
    /// Per-saccade mean velocity, or pooled sample velocities under the pooling option.
    SaccadeVelocity(Stat),
    SaccFixaRatio,
    BlinkCount,
    BlinkDuration(Stat),
    Pupil(Stat),
    PupilFixation(Stat),
    ClickCount,
    ClickedAoiFixationCount,
    ClickedAoiFixationDuration(Stat),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub id: String,
    pub unit: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub name: String,
    /// Detection preset the event streams must come from.
    pub preset: String,
    pub descriptors: Vec<Descriptor>,
}

struct Builder(Vec<Descriptor>);

impl Builder {
    fn one(&mut self, id: &str, unit: &str, source: Source) -> &mut Self {
        self.0.push(Descriptor { id: id.to_string(), unit: unit.to_string(), source });
        self
    }

    fn stats(&mut self, base: &str, unit: &str, stats: &[Stat], source: impl Fn(Stat) -> Source) -> &mut Self {
        for &s in stats {
            self.one(&format!("{base}_{}", s.suffix()), unit, source(s));
        }
        self
    }
}

use Stat::{Max, Mean, Min, Sd, Sum};

impl FeatureCatalog {
    pub const NAMES: [&'static str; 3] = ["classroom-gender-43", "teacher-expertise-36", "locomotion-ux-33"];

    pub fn by_name(name: &str) -> Result<FeatureCatalog> {
        match name {
            "classroom-gender-43" => Ok(Self::classroom_gender()),
            "teacher-expertise-36" => Ok(Self::teacher_expertise()),
            "locomotion-ux-33" => Ok(Self::locomotion_ux()),
            other => Err(Error::Unknown { kind: "feature catalog", name: other.to_string() }),
        }
    }

    pub fn classroom_gender() -> FeatureCatalog {
        let mut b = Builder(Vec::new());
        b.one("hmd_move_rate", "1/s", Source::HmdMoveRate)
            .one("fixation_rate", "1/s", Source::FixationRate { per_s: 1.0 })
            .stats("fixation_duration", "ms", &[Mean, Min, Max, Sum, Sd], Source::FixationDuration);
        for o in Ooi::ALL {
            b.one(&format!("{}_fixation_count", o.prefix()), "count", Source::OoiFixationCount(o));
        }
        for o in Ooi::ALL {
            b.stats(&format!("{}_fixation_duration", o.prefix()), "ms", &[Mean, Min, Max, Sd], |s| {
                Source::OoiFixationDuration(o, s)
            });
        }
        for o in Ooi::ALL {
            b.one(&format!("{}_dwell", o.prefix()), "ms", Source::Dwell(o));
        }
        b.one("saccade_rate", "1/s", Source::SaccadeRate { per_s: 1.0 })
            .stats("saccade_duration", "ms", &[Mean, Min, Max, Sum, Sd], Source::SaccadeDuration)
            .stats("saccade_amplitude", "deg", &[Mean, Min, Max, Sum, Sd], Source::SaccadeAmplitude)
            .stats("saccade_peak_velocity", "deg/s", &[Mean, Min, Max, Sd], Source::SaccadePeakVelocity)
            .stats("pupil", "normalized", &[Mean, Sd], Source::Pupil)
            .one("fixated_peer_count", "count", Source::FixatedPeerCount);
        FeatureCatalog { name: "classroom-gender-43".into(), preset: "classroom".into(), descriptors: b.0 }
    }

    pub fn teacher_expertise() -> FeatureCatalog {
        let mut b = Builder(Vec::new());
        b.one("fixation_count", "count", Source::FixationCount)
            .stats("fixation_duration", "ms", &[Mean, Min, Max, Sum], Source::FixationDuration)
            .one("aoi_fixation_count", "count", Source::AoiFixationCount)
            .stats("aoi_fixation_duration", "ms", &[Mean, Min, Max, Sum], Source::AoiFixationDuration)
            .one("saccade_count", "count", Source::SaccadeCount)
            .stats("saccade_duration", "ms", &[Mean, Min, Max, Sum], Source::SaccadeDuration)
            .stats("saccade_amplitude", "deg", &[Mean, Min, Max, Sum], Source::SaccadeAmplitude)
            .stats("saccade_peak_velocity", "deg/s", &[Mean, Min, Max], Source::SaccadePeakVelocity)
            .one("sacc_fixa_ratio", "ratio", Source::SaccFixaRatio)
            .one("blink_count", "count", Source::BlinkCount)
            .stats("blink_duration", "ms", &[Mean, Min, Max], Source::BlinkDuration)
            .stats("pupil", "normalized", &[Mean, Min, Max], Source::Pupil)
            .one("click_count", "count", Source::ClickCount)
            .one("caoi_fixation_count", "count", Source::ClickedAoiFixationCount)
            .stats("caoi_fixation_duration", "ms", &[Mean, Min, Max, Sum], Source::ClickedAoiFixationDuration);
        FeatureCatalog { name: "teacher-expertise-36".into(), preset: "teacher".into(), descriptors: b.0 }
    }

    pub fn locomotion_ux() -> FeatureCatalog {
        let mut b = Builder(Vec::new());
        b.stats("pupil", "normalized", &[Mean, Sd, Min, Max], Source::Pupil)
            .stats("pupil_fixation", "normalized", &[Mean, Sd, Min, Max], Source::PupilFixation)
            .one("fixation_rate", "1/min", Source::FixationRate { per_s: 60.0 })
            .stats("fixation_duration", "ms", &[Mean, Sd, Min, Max, Sum], Source::FixationDuration)
            .one("saccade_rate", "1/min", Source::SaccadeRate { per_s: 60.0 })
            .stats("saccade_duration", "ms", &[Mean, Sd, Min, Max, Sum], Source::SaccadeDuration)
            .stats("saccade_amplitude", "deg", &[Mean, Sd, Min, Max, Sum], Source::SaccadeAmplitude)
            .stats("saccade_velocity", "deg/s", &[Mean, Sd, Min, Max], Source::SaccadeVelocity)
            .stats("saccade_peak_velocity", "deg/s", &[Mean, Sd, Min, Max], Source::SaccadePeakVelocity);
        FeatureCatalog { name: "locomotion-ux-33".into(), preset: "locomotion".into(), descriptors: b.0 }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.descriptors.iter().map(|d| d.id.clone()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.id == id)
    }
}
