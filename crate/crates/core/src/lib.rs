pub mod agent;
pub mod curiosity;
pub mod env;
pub mod metrics;
pub mod numerics;
