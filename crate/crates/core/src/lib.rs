pub mod anonymizer;
pub mod datasetgen;
pub mod deployer;
pub mod experiment;
pub mod extractor;
pub mod nile;
pub mod pipeline;
pub mod translator;
