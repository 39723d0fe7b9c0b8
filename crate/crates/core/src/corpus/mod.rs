//! Synthetic multi-speaker corpora and their on-disk format.

mod io;
mod sim;

pub use io::{load_corpus, read_archive_record, save_corpus, ARCHIVE_FILE, MANIFEST_FILE, META_FILE};
pub use sim::{
    generate_corpus, silence_pad, ClassModel, Corpus, CorpusMeta, CorpusSpec, SilenceModel, SpeakerProfile, Utterance,
};
