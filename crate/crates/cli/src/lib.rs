pub mod batch;
pub mod pipeline;
pub mod report;
