//! Graph view of fitted parameters for external map plotting.

use serde::{Deserialize, Serialize};

use crate::ingest::SensorMeta;
use crate::model::ModelParams;
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    /// Total birthrate over abnormal states.
    pub birthrate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: String,
    pub to: String,
    pub lag: usize,
    pub weight: f64,
    pub sign: i8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from_state: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to_state: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub schema_version: u32,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl GraphExport {
    /// One edge per interaction coefficient (`d K^2` for the single-state
    /// model); `meta` supplies coordinates when known.
    pub fn from_params(params: &ModelParams, ids: &[String], meta: Option<&[SensorMeta]>) -> Self {
        let k = params.k();
        let find = |id: &str| meta.and_then(|ms| ms.iter().find(|m| m.id == id));
        let nodes = (0..k)
            .map(|i| {
                let m = find(&ids[i]);
                let birthrate = match params {
                    ModelParams::Single(p) => p.birthrate[i],
                    ModelParams::Multi(p) => p.birthrate[i * p.m..(i + 1) * p.m].iter().sum(),
                };
                GraphNode {
                    id: ids[i].clone(),
                    lat: m.map(|m| m.latitude),
                    lon: m.map(|m| m.longitude),
                    birthrate,
                }
            })
            .collect();
        let sign = |v: f64| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
        let mut edges = Vec::new();
        match params {
            ModelParams::Single(p) => {
                for s in 1..=p.d {
                    for to in 0..k {
                        for from in 0..k {
                            let v = p.get(s, to, from);
                            edges.push(GraphEdge {
                                from: ids[from].clone(),
                                to: ids[to].clone(),
                                lag: s,
                                weight: v.abs(),
                                sign: sign(v),
                                from_state: None,
                                to_state: None,
                            });
                        }
                    }
                }
            }
            ModelParams::Multi(p) => {
                for s in 1..=p.d {
                    for to in 0..k {
                        for from in 0..k {
                            for ps in 1..=p.m {
                                for q in 0..=p.m {
                                    let v = p.get(s, to, from, ps, q);
                                    edges.push(GraphEdge {
                                        from: ids[from].clone(),
                                        to: ids[to].clone(),
                                        lag: s,
                                        weight: v.abs(),
                                        sign: sign(v),
                                        from_state: Some(q),
                                        to_state: Some(ps),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        GraphExport {
            schema_version: SCHEMA_VERSION,
            nodes,
            edges,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SingleStateParams;

    #[test]
    fn dense_single_state_edge_count() {
        let p = ModelParams::Single(SingleStateParams::zeros(3, 2));
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let meta = [SensorMeta::new("b", 33.7, -84.4).unwrap()];
        let g = GraphExport::from_params(&p, &ids, Some(&meta));
        assert_eq!(g.edges.len(), 2 * 9);
        assert_eq!(g.nodes[1].lat, Some(33.7));
        assert_eq!(g.nodes[0].lat, None);
    }
}
