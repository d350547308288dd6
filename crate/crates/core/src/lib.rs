//! Exact bi-objective solver for the electric autonomous dial-a-ride problem
//! (E-ADARP).
//!
//! Routes electric autonomous vehicles between paired pickup and drop-off
//! locations under time-window, seat-capacity, maximum-ride-time and battery
//! constraints, and computes the complete Pareto frontier between two
//! objectives: total travel time (`z1`) and total excess user ride time
//! (`z2`).
//!
//! The solver is built around *battery-restricted fragments*: maximal node
//! sequences between zero-load states of a vehicle. Every feasible route is a
//! concatenation of fragments, optional charging-station visits, and depot
//! arcs, which turns frontier search into a select-and-check loop:
//!
//! 1. [`fragments`] enumerates all feasible fragments with their travel time
//!    and minimum excess ride time,
//! 2. [`selection`] picks a fragment set covering all requests inside a
//!    service-quality range, minimising a travel-time lower bound,
//! 3. [`assembly`] checks whether the selected fragments admit a full
//!    feasible solution and returns the cheapest one,
//! 4. [`search`] drives the loop over objective-space rectangles (the
//!    select-and-optimize search) along with epsilon-constraint,
//!    balanced-box and dichotomic baselines,
//! 5. [`evaluation`] scores the resulting frontiers (hypervolume,
//!    multiplicative epsilon indicator) and builds benchmark reports.
//!
//! With the default `parallel` feature, fragment enumeration and benchmark
//! sweeps fan out over rayon; disabling the feature yields a fully
//! sequential build with identical results.

pub mod assembly;
pub mod evaluation;
pub mod fragments;
pub mod instance;
pub mod linprog;
pub mod scheduling;
pub mod search;
pub mod selection;
pub mod solution;
pub mod synth;

mod par;

/// Absolute tolerance for all time/energy comparisons.
pub const TOL: f64 = 1e-6;

/// Strictness gap realizing strict inequalities (`<`) on objective values.
pub const DELTA: f64 = 1e-6;

pub use instance::{Instance, Node, NodeKind};

