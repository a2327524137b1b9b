//! Event interconnection graph and the graph-convolution classifier.
//!
//! An edge joins an earlier event to a later one when both concern the same company
//! or share an ICD-10 category and they are less than a year apart. Messages only
//! flow along edges, so a node's output never depends on later events.

mod gcn;

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Announcement;

pub use gcn::{
    gcn_probs, grad_check, grad_check_with_fault, train_gcn, GcnConfig, GcnModel, GradCheckReport,
    TrainingHistory,
};

pub const DEFAULT_MAX_GAP_DAYS: i64 = 365;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("training labels contain fewer than two classes")]
    DegenerateLabels,
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("expected {expected} {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeReason {
    Company,
    Nosology,
    CompanyAndNosology,
}

impl EdgeReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeReason::Company => "company",
            EdgeReason::Nosology => "nosology",
            EdgeReason::CompanyAndNosology => "company+nosology",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub reason: EdgeReason,
    pub gap_days: i64,
}

/// Directed event graph. Nodes are ordered by (date, id); self-loops are implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<Edge>,
    in_neighbors: Vec<Vec<usize>>,
}

fn edge_reason(a: &Announcement, b: &Announcement) -> Option<EdgeReason> {
    let company = a.ticker == b.ticker;
    let nosology = a.icd10.iter().any(|c| b.icd10.contains(c));
    match (company, nosology) {
        (true, true) => Some(EdgeReason::CompanyAndNosology),
        (true, false) => Some(EdgeReason::Company),
        (false, true) => Some(EdgeReason::Nosology),
        (false, false) => None,
    }
}

pub fn build_event_graph(events: &[Announcement], max_gap_days: i64) -> EventGraph {
    let mut sorted: Vec<&Announcement> = events.iter().collect();
    sorted.sort_by(|a, b| (a.date, &a.id).cmp(&(b.date, &b.id)));
    let in_edges: Vec<Vec<Edge>> = (0..sorted.len())
        .into_par_iter()
        .map(|dst| {
            let d = sorted[dst];
            let first = sorted.partition_point(|e| (d.date - e.date).num_days() >= max_gap_days);
            (first..dst)
                .filter_map(|src| {
                    let s = sorted[src];
                    let gap = (d.date - s.date).num_days();
                    if gap <= 0 {
                        return None;
                    }
                    edge_reason(s, d).map(|reason| Edge {
                        src,
                        dst,
                        reason,
                        gap_days: gap,
                    })
                })
                .collect()
        })
        .collect();
    let in_neighbors = in_edges
        .iter()
        .map(|es| es.iter().map(|e| e.src).collect())
        .collect();
    EventGraph {
        nodes: sorted
            .iter()
            .map(|a| GraphNode {
                id: a.id.clone(),
                date: a.date,
            })
            .collect(),
        edges: in_edges.into_iter().flatten().collect(),
        in_neighbors,
    }
}

impl EventGraph {
    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_neighbors[v]
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect()
    }

    /// `src,dst,reason,gap_days` with event ids as endpoints.
    pub fn write_edges_csv(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let mut w =
            csv::Writer::from_path(path.as_ref()).map_err(|e| GraphError::Format(e.to_string()))?;
        w.write_record(["src", "dst", "reason", "gap_days"])
            .map_err(|e| GraphError::Format(e.to_string()))?;
        for e in &self.edges {
            w.write_record([
                self.nodes[e.src].id.as_str(),
                self.nodes[e.dst].id.as_str(),
                e.reason.as_str(),
                &e.gap_days.to_string(),
            ])
            .map_err(|e| GraphError::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Row-normalized `D_in^-1 (A + I)` stored by row: each node averages itself and
/// its in-neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub(crate) rows: Vec<Vec<(usize, f64)>>,
}

impl Propagation {
    pub fn from_in_neighbors(in_neighbors: &[Vec<usize>]) -> Self {
        let rows = in_neighbors
            .iter()
            .enumerate()
            .map(|(v, ins)| {
                let w = 1.0 / (ins.len() + 1) as f64;
                let mut row: Vec<(usize, f64)> = ins.iter().map(|&u| (u, w)).collect();
                row.push((v, w));
                row.sort_by_key(|(u, _)| *u);
                row
            })
            .collect();
        Propagation { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len();
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; n];
                for &(u, w) in r {
                    d[u] += w;
                }
                d
            })
            .collect()
    }
}

pub fn normalize_adjacency(graph: &EventGraph) -> Propagation {
    Propagation::from_in_neighbors(&graph.in_neighbors)
}
