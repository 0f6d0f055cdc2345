//! Multiple-choice datasets: prompt rendering, synthetic tasks, file
//! ingestion and seeded splits.

mod banks;
mod ingest;
mod sample;
mod split;
mod synth;

pub use banks::{banks, Banks};
pub use ingest::{
    export_jsonl, ingest, ingest_str, to_generic, GenericRecord, IngestFormat, Ingested,
};
pub use sample::{
    build_sample, render_prompt, render_text, with_exemplars, Exemplar, McqSample, PromptView,
    RenderedPrompt,
};
pub use split::{split, SplitSpec, MIN_SPLIT_SAMPLES};
pub use synth::{
    synth_greater, synth_ioi, synth_original_greater, synth_original_ioi, synth_random,
    GreaterConfig, OriginalSample, OriginalTask, RandomKind, RANDOM_DEFAULT_COUNT,
};
