//! Dense linear algebra and the small neural-network toolkit used by the agent.

pub mod adam;
pub mod checkpoint;
pub mod complex;
pub mod mlp;
pub mod real;

pub use adam::{optimizer_step, Adam};
pub use complex::{complex_matmul, ComplexMatrix};
pub use mlp::{mlp_backward, mlp_forward, Activation, Gradients, MlpParameters, Mode, Topology, Trace};
pub use real::RealMatrix;
