//! Task heads: observation models, initializers and exact proximal steps
//! for channel estimation (ce), antenna extrapolation (ae) and CSI
//! feedback (cf).

pub mod ae;
pub mod ce;
pub mod cf;
pub mod pattern;
pub mod spline;

pub use ae::{observe_antennas, pppae, prox_ae, spline_init, AeProx};
pub use ce::{ls_init, observe_pilots, pppce, prox_ce, CeProx, PilotObservation};
pub use cf::{
    compress, make_projection, measurement_count, pppcf, prox_cf, CfProx, FeedbackCode,
    Projection, SvdCache, UniformQuantizer,
};
pub use pattern::{AntennaSelection, PilotPattern};
pub use spline::NaturalSpline;
