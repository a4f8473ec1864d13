pub mod corpus;
pub mod render;
pub mod result;
pub mod trace;
