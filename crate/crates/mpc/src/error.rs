use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("bad controller config: {0}")]
    BadConfig(String),

    #[error("reference horizon holds {found} points, the controller needs {need}")]
    ReferenceLength { need: usize, found: usize },

    #[error("controller horizon {controller} does not match predictor horizon {predictor}")]
    HorizonMismatch { controller: usize, predictor: usize },

    #[error("warm-start knot vector has {found} knots over horizon {found_horizon}, config wants {need} over {need_horizon}")]
    WarmStartShape {
        need: usize,
        need_horizon: usize,
        found: usize,
        found_horizon: usize,
    },

    #[error("collection stalled: {got} of {want} steps after {episodes} episode attempts")]
    Stalled {
        got: usize,
        want: usize,
        episodes: u64,
    },

    #[error(transparent)]
    Model(#[from] seqmodel::ModelError),

    #[error(transparent)]
    Sim(#[from] simcar::SimError),
}
