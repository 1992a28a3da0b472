//! Dataset persistence, train/val/test splitting and task-sample masking.

mod file;
mod split;
mod task;

pub use file::{
    checksum, decode_dataset, encode_dataset, read_dataset, write_atomic, write_dataset, DATASET_MAGIC,
    DATASET_VERSION, HEADER_LEN,
};
pub use split::{split_dataset, Split};
pub use task::{make_task_sample, stack_batch, Cell, TaskDomain, TaskSample, TaskSpec};
