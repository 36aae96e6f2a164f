pub mod bench;
pub mod corpus;
pub mod ddg;
pub mod inference;
pub mod minilang;
pub mod model;
pub mod pipeline;
pub mod ranking;
pub mod reduction;
pub mod tracer;
