//! Entropy-regularised discrete optimal transport.
//!
//! Cost construction from embedding sets, a log-domain Sinkhorn solver,
//! an exact (LP) solver used as an oracle in the small-instance regime,
//! barycentric projection of transported features, and an envelope-theorem
//! gradient check of the entropic objective.

mod cost;
mod dump;
mod exact;
mod gradient;
mod projection;
mod sinkhorn;

pub use cost::{build_cost_matrix, CostMatrix, MAX_COST};
pub use dump::{parse_plan_dump, write_plan_dump, PLAN_DUMP_HEADER};
pub use exact::{exact_transport, rationalize, ExactSolution, MAX_DENOMINATOR, MAX_SUPPORT};
pub use gradient::{entropic_objective, ot_objective_gradient_check, FD_STEP};
pub use projection::{barycentric_project, Projection, ProjectionMode};
pub use sinkhorn::{sinkhorn, SinkhornConfig, TransportPlan};
