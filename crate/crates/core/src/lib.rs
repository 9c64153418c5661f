pub mod annotations;
pub mod bundled;
pub mod data;
pub mod execution;
pub mod graph;
pub mod primitives;
pub mod search;
pub mod selection;
pub mod store;
pub mod tuning;
