//! Fixtures shared by the benchmarks.

use std::path::PathBuf;
use std::sync::Arc;

use invariant_kit::*;
use nalgebra::dmatrix;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// The 2-D linear loop with a ReLU-pair network and its unit box.
pub fn linear_loop() -> (Arc<ClosedLoopSystem>, IntervalVector) {
    let f = VectorField::parse(2, 1, 1, &["-x1 + 0.5*x2 + w1", "0.2*x1 - x2 + u1"]).unwrap();
    let wbox = IntervalVector::from_pairs(&[[-0.02, 0.02]]).unwrap();
    let sys = ClosedLoopSystem::new(f, build_linear_relu_net(&dmatrix![-0.5, -1.0]), wbox).unwrap();
    (Arc::new(sys), IntervalVector::from_pairs(&[[-1.0, 1.0], [-1.0, 1.0]]).unwrap())
}

/// The 8-D leader-follower surrogate with its certified eigen paralleletope.
pub fn surrogate() -> (Arc<TransformedSystem>, Paralleletope) {
    let dir = configs().join("leader_follower");
    let f = VectorField::load(dir.join("system.json")).unwrap();
    let net = FeedforwardNetwork::load(dir.join("leader_net.json")).unwrap();
    let wbox = IntervalVector::from_bounds(&[-0.01; 4], &[0.01; 4]).unwrap();
    let sys = Arc::new(ClosedLoopSystem::new(f, net, wbox).unwrap());
    let x_star = vec![0.0; 8];
    let region = IntervalVector::from_bounds(&[-1.0; 8], &[1.0; 8]).unwrap();
    let choice = choose_transform(&sys, &x_star, &region).unwrap();
    let offsets = [0.015, 0.015, 0.011, 0.011, 0.02, 0.02, 0.016, 0.016];
    let ybox = IntervalVector::from_pairs(&offsets.map(|o| [-o, o])).unwrap();
    let ts = Arc::new(TransformedSystem::new(sys, &choice.t).unwrap());
    (ts, Paralleletope::new(choice.t, ybox).unwrap())
}
