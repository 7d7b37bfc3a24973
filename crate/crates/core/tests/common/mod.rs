#![allow(dead_code)]

use ift_core::{NodeId, Report};

pub fn rep(seq: u64, ids: &[usize], p: f64) -> Report {
    Report::new(seq, ids.iter().copied().map(NodeId), p, 500).unwrap()
}

/// Noise-free report for `ids` under `g`.
pub fn exact(seq: u64, ids: &[usize], g: &[f64]) -> Report {
    rep(seq, ids, ids.iter().map(|&i| g[i]).product())
}

/// Per-node error written out directly from its definition: the largest
/// delivery-ratio residual over reports through the node, or the penalty
/// when at most three reports pass through it.
pub fn brute_errors(reports: &[&Report], d: &[f64], penalty: f64, floor: f64) -> Vec<f64> {
    (0..d.len())
        .map(|x| {
            let through: Vec<&&Report> = reports
                .iter()
                .filter(|r| r.transit.contains(&NodeId(x)))
                .collect();
            if through.len() <= 3 {
                return penalty;
            }
            through
                .iter()
                .map(|r| {
                    let predicted: f64 = r.transit.iter().map(|n| d[n.0]).product();
                    (r.pdr.max(floor) - predicted).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

pub fn brute_total(reports: &[&Report], d: &[f64], penalty: f64, floor: f64) -> f64 {
    brute_errors(reports, d, penalty, floor).iter().sum()
}
