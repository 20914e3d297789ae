pub mod analysis;
pub mod corpus;
pub mod cp;
pub mod fixtures;
pub mod generate;
pub mod metrics;
pub mod neural;
pub mod registry;
pub mod remi;
pub mod sampling;
pub mod symbolic;
pub mod vocab;
