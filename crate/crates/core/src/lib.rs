//! Robust forward invariance for neural-network-controlled systems.
//!
//! A closed-loop system `ẋ = f(x, N(x), w)` is bounded on the faces of a box
//! by an interval inclusion function; when the bounds point inward on every
//! face, the box is invariant for every disturbance in `wbox`. The same test
//! in transformed coordinates `y = T x` certifies paralleletopes, and one
//! trajectory of the embedding system produces a nested family of them.
//!
//! ```
//! use std::sync::Arc;
//! use invariant_kit::{ClosedLoopInclusion, ClosedLoopSystem, EmbeddingSystem, FeedforwardNetwork, IntervalVector, Method, VectorField};
//!
//! let f = VectorField::parse(1, 0, 0, &["-x1"]).unwrap();
//! let sys = ClosedLoopSystem::new(f, FeedforwardNetwork::zero_output(1), IntervalVector::zeros(0)).unwrap();
//! let bx = IntervalVector::from_pairs(&[[-1.0, 1.0]]).unwrap();
//! let es = EmbeddingSystem::new(ClosedLoopInclusion::new(Arc::new(sys), Method::Jacobian, &bx).unwrap());
//! assert!(es.check_invariance(&bx).unwrap().is_invariant());
//! ```

pub mod embedding;
pub mod error;
pub mod expr;
pub mod inclusion;
pub mod interval;
pub mod nn;
pub mod oracle;
pub mod paralleletope;

pub use embedding::{
    BackwardOptions, EmbeddingSystem, FaceRhs, FamilyMember, ForwardOptions, InvarianceCertificate, NestedFamily,
    StopReason, TransformRecord, Verdict,
};
pub use error::{Error, Result};
pub use expr::{Expr, SystemFile, VectorField};
pub use inclusion::{ClosedLoopInclusion, ClosedLoopSystem, Construction, LocalizedInclusion, Method};
pub use interval::{set_rounding_mode, EmbeddingState, Interval, IntervalMatrix, IntervalVector, RoundingMode};
pub use nn::{build_linear_net, build_linear_relu_net, Activation, FeedforwardNetwork, Layer};
pub use oracle::{BoundaryReport, MonteCarloOptions, TrajectoryBundle, Witness};
pub use paralleletope::{
    check_paralleletope_invariance, choose_transform, find_equilibrium, transformed_embedding, Paralleletope,
    SpectrumReport, TransformChoice, TransformedInclusion, TransformedSystem,
};
