//! Solution representation and its JSON document form.
//!
//! A solution lists one route per vehicle. Every route carries the visited
//! nodes (internal ids of the canonical node ordering), service start times,
//! state of charge on arrival, and recharge durations at stations. The
//! objective pair is stored alongside: `travel_time` is the sum of arc
//! travel times over all routes, `excess_ride_time` the sum of excess user
//! ride times over all requests.

use serde::{Deserialize, Serialize};

use crate::instance::{Energy, NodeId, Time};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub vehicle: usize,
    /// Visited nodes from origin depot to destination depot.
    pub nodes: Vec<NodeId>,
    /// Service start per visited node (charge start at stations).
    pub start_times: Vec<Time>,
    /// State of charge on arrival per visited node.
    pub soc: Vec<Energy>,
    /// Recharge duration per visited node; zero except at stations.
    pub recharge: Vec<Time>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub routes: Vec<RoutePlan>,
    /// Total travel time (first objective).
    pub travel_time: f64,
    /// Total excess user ride time (second objective).
    pub excess_ride_time: f64,
}

impl Solution {
    pub fn objective(&self) -> (f64, f64) {
        (self.travel_time, self.excess_ride_time)
    }

    pub fn point(&self) -> Point {
        Point::new(self.travel_time, self.excess_ride_time)
    }
}

/// Objective-space point `(z1, z2) = (travel time, excess ride time)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub z1: f64,
    pub z2: f64,
}

impl Point {
    pub fn new(z1: f64, z2: f64) -> Self {
        Point { z1, z2 }
    }

    /// Weak dominance: no worse in both coordinates.
    pub fn dominates(&self, other: &Point, tol: f64) -> bool {
        self.z1 <= other.z1 + tol && self.z2 <= other.z2 + tol
    }

    /// Weakly dominating and strictly better somewhere.
    pub fn strictly_dominates(&self, other: &Point, tol: f64) -> bool {
        self.dominates(other, tol) && (self.z1 < other.z1 - tol || self.z2 < other.z2 - tol)
    }

    pub fn almost_eq(&self, other: &Point, tol: f64) -> bool {
        (self.z1 - other.z1).abs() <= tol && (self.z2 - other.z2).abs() <= tol
    }
}
