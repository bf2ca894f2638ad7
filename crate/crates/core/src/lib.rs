pub mod dataio;
pub mod features;
pub mod metrics;
pub mod models;
pub mod muqtoken;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;
