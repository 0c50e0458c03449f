//! Sufficient statistics for estimation.
//!
//! Every location sees the same regressor (the full `d x K` history), so a
//! sequence reduces to its distinct history patterns, how often each
//! occurred, and per location how often each outcome followed it.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::extract::EventSequence;
use crate::model::{HistoryBlock, LocalLayout};

#[derive(Debug, Clone)]
pub struct PatternData {
    pub layout: LocalLayout,
    pub k: usize,
    pub d: usize,
    /// Total (weighted) number of usable steps.
    pub n: f64,
    /// Vectorised histories in first-occurrence order.
    pub patterns: Vec<Vec<u8>>,
    /// Active parameter blocks of each pattern.
    pub offsets: Vec<Vec<usize>>,
    /// Weighted multiplicity of each pattern.
    pub weights: Vec<f64>,
    /// `counts[k][pattern * (M + 1) + y]`.
    pub counts: Vec<Vec<f64>>,
}

/// First and one-past-last day index that can be fitted with depth `d`.
pub fn usable_range(events: &EventSequence, d: usize) -> Result<(usize, usize)> {
    let first = events.valid_from() + d;
    if d == 0 {
        return Err(Error::invalid("memory depth d must be at least 1"));
    }
    if first >= events.days() {
        return Err(Error::InsufficientData(format!(
            "{} available days leave nothing to fit at depth {d}",
            events.days() - events.valid_from()
        )));
    }
    Ok((first, events.days()))
}

impl PatternData {
    pub fn new(events: &EventSequence, d: usize, single: bool) -> Result<Self> {
        PatternData::weighted(events, d, single, None)
    }

    /// `weights[i]` multiplies usable step `first + i`.
    pub fn weighted(
        events: &EventSequence,
        d: usize,
        single: bool,
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        let (first, end) = usable_range(events, d)?;
        let m = events.m();
        if single && m != 1 {
            return Err(Error::invalid("single-state model needs binary events"));
        }
        if let Some(w) = weights {
            if w.len() != end - first {
                return Err(Error::dim(format!(
                    "{} weights for {} usable steps",
                    w.len(),
                    end - first
                )));
            }
        }
        let k = events.locations();
        let j = d * k;
        let layout = if single {
            LocalLayout::single(j)
        } else {
            LocalLayout::multi(m, j)
        };
        let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let mut pw = Vec::new();
        let mut counts: Vec<Vec<f64>> = vec![Vec::new(); k];
        let mut n = 0.0;
        let mut h = vec![0u8; j];
        for t in first..end {
            let w = weights.map_or(1.0, |w| w[t - first]);
            if w == 0.0 {
                continue;
            }
            HistoryBlock::from_events(events, t, d)?.vec_into(&mut h);
            let next = patterns.len();
            let idx = *index.entry(h.clone()).or_insert(next);
            if idx == next {
                patterns.push(h.clone());
                pw.push(0.0);
                for c in counts.iter_mut() {
                    c.extend(std::iter::repeat_n(0.0, m + 1));
                }
            }
            pw[idx] += w;
            n += w;
            let row = events.row(t).expect("usable rows are available");
            for (loc, &y) in row.iter().enumerate() {
                counts[loc][idx * (m + 1) + y as usize] += w;
            }
        }
        let offsets = patterns
            .iter()
            .map(|h| {
                let mut o = Vec::new();
                layout.offsets_into(h, &mut o);
                o
            })
            .collect();
        Ok(PatternData {
            layout,
            k,
            d,
            n,
            patterns,
            offsets,
            weights: pw,
            counts,
        })
    }

    pub fn m(&self) -> usize {
        self.layout.m
    }
}
