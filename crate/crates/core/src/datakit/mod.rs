//! Anatomy and condition data types, the phantom generator and dataset I/O.

mod conditions;
mod dataset;
mod io;
mod phantom;
mod volume;

pub use conditions::{
    age_group, encode_conditions, ConditionProfile, ConditionVector, Gender, NormalizationBounds,
    CONDITION_DIM, N_AGE_GROUPS,
};
pub(crate) use dataset::hex;
pub use dataset::{
    make_dataset, subject_seed, ConditionSampler, Dataset, Split, SplitFractions, SubjectRecord,
};
pub use io::{
    frame_file_name, load_dataset, read_frame_file, read_meta, read_sequence_dir, save_dataset,
    write_sequence_dir, SequenceMeta, DATASET_FORMAT_VERSION, META_FILE,
};
pub use phantom::{
    make_phantom, ConditionSensitivity, JitterParams, PhantomGeometry, PhantomParams, RvParams,
};
pub use volume::{
    decode_labels, n_voxels, one_hot, AnatomySequence, Dims, Label, SegVolume, Spacing, N_CLASSES,
    STRUCTURES,
};
