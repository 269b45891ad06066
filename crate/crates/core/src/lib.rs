pub mod data;
pub mod decode;
pub mod doc;
pub mod error;
pub mod eval;
pub mod model;
pub mod numparse;
pub mod pretrain;
pub mod tokenizer;
