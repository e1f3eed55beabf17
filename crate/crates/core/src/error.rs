use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid surface parameters: {0}")]
    InvalidSurface(String),

    #[error("degenerate normal at ({0:.6e}, {1:.6e}, {2:.6e})")]
    DegenerateNormal(f64, f64, f64),

    #[error("no boundary intersection within |t| <= {bracket:.3e}")]
    NoBoundaryIntersection { bracket: f64 },

    #[error("closest-point projection did not converge after {0} iterations")]
    ProjectionNotConverged(usize),

    #[error("degenerate element {element}: signed volume {volume:.3e}")]
    DegenerateElement { element: usize, volume: f64 },

    #[error("boundary vertex {vertex} off surface: |F| = {value:.3e}")]
    BoundaryVertexOffSurface { vertex: usize, value: f64 },

    #[error("mesh assumption violated: element {element} has {faces} boundary faces and {edges} boundary edges")]
    MeshAssumption {
        element: usize,
        faces: usize,
        edges: usize,
    },

    #[error("degenerate skin direction on edge ({0}, {1})")]
    DegenerateSkin(usize, usize),

    #[error("unsupported polynomial degree {0}")]
    UnsupportedDegree(usize),

    #[error("no quadrature rule exact to degree {0}")]
    UnsupportedQuadrature(usize),

    #[error("mesh too coarse for shifted basis on element {element} (condition {condition:.3e})")]
    MeshTooCoarse { element: usize, condition: f64 },

    #[error("missing modified basis for element {0}")]
    MissingBasis(usize),

    #[error("solver failure: {reason} (relative residual {residual:.3e})")]
    SolverFailure { reason: String, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
