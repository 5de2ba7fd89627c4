//! Decomposition machinery for complex hypergraphs: the data model, the
//! structural operations (shrinking, condensing, splitting off), hypertree
//! packing, path-graphs with non-conflicting Eulerian tours, the staged
//! decomposition pipeline, and a brute-force oracle for cross-checking.

pub mod connectivity;
pub mod error;
pub mod format;
pub mod fractions;
pub mod graph;
pub mod lll;
pub mod ops;
pub mod oracle;
pub mod path;
pub mod pathgraph;
pub mod pipeline;
pub mod shrinking;

pub use error::{GraphError, StageError};
pub use graph::{ComplexHypergraph, Incidence, Index, ItemId, VertexId, WILDCARD};
pub use path::{ComplexPath, PathElem};
