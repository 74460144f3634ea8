pub mod annotations;
pub mod augment;
pub mod corpus;
pub mod labels;
pub mod masks;
pub mod split;
pub mod synth;
pub mod windows;

pub use annotations::{ingest_annotations, parse_annotations, AnnotationRecord, IngestStats, LabeledTrack, Scene, TrackFrame};
pub use augment::{augment, flip_sample, AugmentOps};
pub use corpus::{read_corpus, write_corpus};
pub use labels::{ActionLabels, Attention, Crossing, Distraction, Gait, LaneWidth, Orientation, SceneContext, Task};
pub use masks::{MaskGrid, MaskPack};
pub use split::{split, Split};
pub use synth::{synthesize_scenes, SynthScene, SynthSpec};
pub use windows::{build_samples, filter_tracks, make_windows, pad_track, SequenceSample, WindowConfig};
