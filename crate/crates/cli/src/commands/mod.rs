pub mod bench;
pub mod embed;
pub mod extend;
pub mod fit;
pub mod generate;
pub mod preprocess;
