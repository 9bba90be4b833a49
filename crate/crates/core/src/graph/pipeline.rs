use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{build_graph, initial_values, optimize, FactorGraph, GraphConfig, GraphError, InitError, SolveStats, SolverConfig, Values};
use crate::dataset::{Dataset, Estimate, EstimatedLandmark};
use crate::scalar::Real;
use crate::semantics::CategoryTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SolveOptions {
    pub graph: GraphConfig,
    pub solver: SolverConfig,
}

/// Result of solving one dataset.
#[derive(Debug, Clone)]
pub struct Solution<T: Real> {
    pub graph: FactorGraph<T>,
    pub initial: Values<T>,
    /// Estimate using odometry and box factors only.
    pub standalone: Values<T>,
    pub standalone_stats: SolveStats,
    /// Final estimate. Equals `standalone` when orientation factors are off.
    pub values: Values<T>,
    pub stats: SolveStats,
    pub init_failures: BTreeMap<u64, InitError>,
}

/// Builds, initializes and optimizes the graph for `dataset`.
///
/// The graph without orientation factors is solved first; when orientation
/// factors are enabled, the full graph is then optimized starting from that
/// estimate.
pub fn solve_dataset<T: Real>(
    dataset: &Dataset,
    table: &CategoryTable,
    options: &SolveOptions,
) -> Result<Solution<T>, GraphError> {
    let mut solution = solve_standalone(dataset, table, options)?;
    if !solution.graph.orientations.is_empty() {
        let (values, stats) = optimize(&solution.graph, &solution.standalone, &options.solver)?;
        solution.values = values;
        solution.stats = stats;
    }
    Ok(solution)
}

/// Like [`solve_dataset`] but stops after the first stage; `values` then
/// equals `standalone` even if the graph has orientation factors.
pub fn solve_standalone<T: Real>(
    dataset: &Dataset,
    table: &CategoryTable,
    options: &SolveOptions,
) -> Result<Solution<T>, GraphError> {
    let graph = build_graph::<T>(dataset, table, &options.graph)?;
    let (graph, initial, init_failures) = initial_values(&graph, dataset);
    for (id, e) in &init_failures {
        log::warn!("landmark {id} dropped: {e}");
    }
    let (standalone, standalone_stats) = optimize(&graph.without_orientation_factors(), &initial, &options.solver)?;
    Ok(Solution {
        graph,
        initial,
        values: standalone.clone(),
        stats: standalone_stats.clone(),
        standalone,
        standalone_stats,
        init_failures,
    })
}

impl<T: Real> Solution<T> {
    /// Final poses and landmarks in the on-disk form, widened to `f64`.
    pub fn estimate(&self, config_hash: String) -> Estimate {
        let landmarks = self
            .graph
            .landmarks
            .iter()
            .filter_map(|info| {
                let q = self.values.quadric(info.id)?.cast::<f64>();
                Some(EstimatedLandmark {
                    id: info.id,
                    label: info.label.clone(),
                    target: info.target,
                    quadric: q.to_vector9(),
                })
            })
            .collect();
        Estimate {
            config_hash,
            poses: self.values.poses().iter().map(|p| p.cast()).collect(),
            landmarks,
            stats: Some(self.stats.clone()),
        }
    }
}
