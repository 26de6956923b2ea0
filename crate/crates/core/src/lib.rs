pub mod ensemble;
pub mod harness;
pub mod market_data;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod preprocess;
pub mod recurrent;
