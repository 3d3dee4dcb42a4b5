//! Device-free spatial-temporal alignment for collaborative perception.
//!
//! Two agents that see overlapping parts of a dynamic scene can recover their
//! relative pose and the age of a received message from the detections alone:
//! each agent's boxes form a fully connected graph whose edge features are
//! rigid-invariant, a multi-anchor subgraph search finds the common structure
//! between the collaborator's graph and a buffer of the ego's recent graphs,
//! and a robust rigid fit over the matched nodes yields the pose. The best
//! matching buffer slot gives the latency.

pub mod cli;
pub mod config;
pub mod embedding;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod mass;
pub mod pipeline;
pub mod sim;
