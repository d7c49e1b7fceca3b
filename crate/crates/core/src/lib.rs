//! Analysis pipeline for VR head-mounted-display eye-tracking logs.
//!
//! Raw frames are parsed and repaired ([`recording`]), pupil traces cleaned and
//! blinks found ([`pupil`]), fixations and saccades detected with a head gate
//! ([`events`]), attributed to areas of interest ([`aoi`]), summarized into
//! fixed-width feature vectors ([`features`]), classified and explained with
//! tree ensembles ([`model`]) and compared with nonparametric tests
//! ([`stats`]). [`synth`] produces recordings with known ground truth for
//! every stage.

pub mod error;
pub mod geometry;
pub mod recording;
pub mod pupil;
pub mod events;
pub mod rng;
pub mod summary;
pub mod aoi;
pub mod features;
pub mod model;
pub mod stats;
pub mod synth;
pub mod pipeline;

pub use error::{Error, Result};
pub use events::{DetectionConfig, EventStream, Fixation, HeadSegment, HeadState, Saccade};
pub use geometry::{Quat, Vec3};
pub use pupil::{Blink, BlinkConfig, PupilConfig, PupilSeries};
pub use recording::{ClickEvent, Recording, SensorFrame, TrackingQuality};
