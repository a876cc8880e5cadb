//! Subset-lattice attribution: excess-loss and TV-difference decompositions
//! over constraint-set transitions, path averages, Shapley values, and
//! fairness/utility ratios.
//!
//! The lattice has one node per subset of the m pathway effects and an edge
//! `S -> S + {i}` for every effect i outside S. All math here consumes
//! precomputed node-level (loss, TV) values, so the decomposition identities
//! are exact arithmetic, independent of training noise.

use serde::{Deserialize, Serialize};

use crate::effects::EffectSet;
use crate::error::{Error, Result};
use crate::learner::LossKind;

/// One transition `from -> to` adding effect `effect_pos`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeEdge {
    pub from: EffectSet,
    pub to: EffectSet,
    pub effect_pos: usize,
}

/// The complete subset lattice over `m` effects with its maximal chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PselLattice {
    pub m: usize,
    /// All subsets in mask order, `2^m` of them.
    pub nodes: Vec<EffectSet>,
    /// Edges ordered by (from mask, effect position), `m * 2^(m-1)` of them.
    pub edges: Vec<LatticeEdge>,
    /// Maximal chains as effect-position permutations, `m!` of them.
    pub paths: Vec<Vec<usize>>,
}

/// Point metrics for one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub psel: f64,
    pub tvd: f64,
}

/// Build the lattice for `1 <= m <= 6` effects.
pub fn build_lattice(m: usize) -> Result<PselLattice> {
    if m == 0 || m > EffectSet::MAX_EFFECTS {
        return Err(Error::EffectCountOutOfRange(m));
    }
    let n_nodes = 1usize << m;
    let nodes: Vec<EffectSet> = (0..n_nodes as u32).map(EffectSet::from_mask).collect();
    let mut edges = Vec::with_capacity(m * (1 << (m - 1)));
    for &node in &nodes {
        for pos in 0..m {
            if !node.contains(pos) {
                edges.push(LatticeEdge {
                    from: node,
                    to: node.with(pos),
                    effect_pos: pos,
                });
            }
        }
    }
    let mut paths = Vec::new();
    let mut current = Vec::with_capacity(m);
    let mut remaining: Vec<usize> = (0..m).collect();
    permute(&mut current, &mut remaining, &mut paths);
    Ok(PselLattice {
        m,
        nodes,
        edges,
        paths,
    })
}

fn permute(current: &mut Vec<usize>, remaining: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if remaining.is_empty() {
        out.push(current.clone());
        return;
    }
    for k in 0..remaining.len() {
        let pos = remaining.remove(k);
        current.push(pos);
        permute(current, remaining, out);
        current.pop();
        remaining.insert(k, pos);
    }
}

impl PselLattice {
    pub fn full_set(&self) -> EffectSet {
        EffectSet::from_mask((1u32 << self.m) - 1)
    }

    /// Index of the edge `from -> from + {pos}` in `edges`.
    pub fn edge_index(&self, from: EffectSet, pos: usize) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.from == from && e.effect_pos == pos)
    }

    /// Per-edge metrics from node-level losses and TVs (indexed by mask).
    pub fn edge_metrics_from_nodes(
        &self,
        node_losses: &[f64],
        node_tvs: &[f64],
    ) -> Result<Vec<EdgeMetrics>> {
        let expected = 1usize << self.m;
        if node_losses.len() != expected || node_tvs.len() != expected {
            return Err(Error::MissingEdgeMetric {
                expected,
                got: node_losses.len().min(node_tvs.len()),
            });
        }
        Ok(self
            .edges
            .iter()
            .map(|e| EdgeMetrics {
                psel: node_losses[e.to.mask() as usize] - node_losses[e.from.mask() as usize],
                tvd: node_tvs[e.to.mask() as usize] - node_tvs[e.from.mask() as usize],
            })
            .collect())
    }
}

/// Excess loss of one transition; both losses must share a kind and come
/// from identical evaluation rows.
pub fn edge_psel(loss_after: (LossKind, f64), loss_before: (LossKind, f64)) -> Result<f64> {
    if loss_after.0 != loss_before.0 {
        return Err(Error::MismatchedLossKind {
            left: loss_after.0.to_string(),
            right: loss_before.0.to_string(),
        });
    }
    Ok(loss_after.1 - loss_before.1)
}

/// Total excess loss: the transition from the empty set to the full set.
pub fn tel(node_losses: &[f64]) -> f64 {
    node_losses[node_losses.len() - 1] - node_losses[0]
}

/// Average path-specific excess loss and TV difference per effect: the mean
/// over all maximal chains of the metric on the edge where the effect is
/// added.
pub fn apsel_atvd(lattice: &PselLattice, metrics: &[EdgeMetrics]) -> Result<(Vec<f64>, Vec<f64>)> {
    if metrics.len() != lattice.edges.len() {
        return Err(Error::MissingEdgeMetric {
            expected: lattice.edges.len(),
            got: metrics.len(),
        });
    }
    // Map (from mask, pos) -> edge index once.
    let mut index = vec![usize::MAX; (1 << lattice.m) * lattice.m];
    for (k, e) in lattice.edges.iter().enumerate() {
        index[e.from.mask() as usize * lattice.m + e.effect_pos] = k;
    }
    let mut apsel = vec![0.0; lattice.m];
    let mut atvd = vec![0.0; lattice.m];
    for path in &lattice.paths {
        let mut prefix = EffectSet::empty();
        for &pos in path {
            let e = index[prefix.mask() as usize * lattice.m + pos];
            apsel[pos] += metrics[e].psel;
            atvd[pos] += metrics[e].tvd;
            prefix = prefix.with(pos);
        }
    }
    let n_paths = lattice.paths.len() as f64;
    for v in apsel.iter_mut().chain(atvd.iter_mut()) {
        *v /= n_paths;
    }
    Ok((apsel, atvd))
}

/// Shapley values of a set function given on every subset (indexed by mask):
/// `phi(i) = sum over S not containing i of (f(S+{i}) - f(S)) / (m * C(m-1, |S|))`.
pub fn shapley(values_by_mask: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 || m > EffectSet::MAX_EFFECTS {
        return Err(Error::EffectCountOutOfRange(m));
    }
    if values_by_mask.len() != 1 << m {
        return Err(Error::MissingEdgeMetric {
            expected: 1 << m,
            got: values_by_mask.len(),
        });
    }
    let mut phi = vec![0.0; m];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1u32 << i;
        for mask in 0..(1u32 << m) {
            if mask & bit != 0 {
                continue;
            }
            let size = mask.count_ones() as usize;
            let coeff = 1.0 / (m as f64 * binomial(m - 1, size));
            *phi_i +=
                coeff * (values_by_mask[(mask | bit) as usize] - values_by_mask[mask as usize]);
        }
    }
    Ok(phi)
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut out = 1.0;
    for j in 0..k {
        out *= (n - j) as f64 / (j + 1) as f64;
    }
    out
}

/// Fairness/utility ratio with the zero convention: 0 whenever the average
/// excess loss is exactly 0.
pub fn cfur(apsel: f64, atvd: f64) -> f64 {
    if apsel == 0.0 {
        0.0
    } else {
        atvd / apsel
    }
}

/// One local fairness/utility ratio row for a prefix of an effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcfurRow {
    pub prefix: EffectSet,
    pub psel: f64,
    pub tvd: f64,
    /// `None` when the local excess loss is too close to zero to divide.
    pub ratio: Option<f64>,
    /// Chain-multiplicity weight; weights sum to 1 when defined.
    pub weight: f64,
    pub flagged: bool,
}

/// Local ratios with their weights and weighted average for one effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcfurTable {
    pub effect_pos: usize,
    pub rows: Vec<LcfurRow>,
    pub weighted_average: f64,
    /// False when the total excess loss for the effect is zero and the
    /// average falls back to the zero convention.
    pub defined: bool,
}

const LCFUR_DENOM_EPS: f64 = 1e-9;

/// Local fairness/utility ratio table for one effect.
///
/// Each subset S of the other effects is a prefix of the effect along
/// `(|S|)! (m-|S|-1)!` maximal chains; the weights carry that multiplicity
/// so the weighted average equals the global ratio exactly.
pub fn lcfur(
    lattice: &PselLattice,
    metrics: &[EdgeMetrics],
    effect_pos: usize,
) -> Result<LcfurTable> {
    if metrics.len() != lattice.edges.len() {
        return Err(Error::MissingEdgeMetric {
            expected: lattice.edges.len(),
            got: metrics.len(),
        });
    }
    let m = lattice.m;
    let factorial = |k: usize| -> f64 { (1..=k).map(|v| v as f64).product::<f64>().max(1.0) };
    let mut rows = Vec::new();
    let mut total_weighted_psel = 0.0;
    let mut total_weighted_tvd = 0.0;
    for (k, e) in lattice.edges.iter().enumerate() {
        if e.effect_pos != effect_pos {
            continue;
        }
        let size = e.from.len();
        let multiplicity = factorial(size) * factorial(m - size - 1);
        let psel = metrics[k].psel;
        let tvd = metrics[k].tvd;
        total_weighted_psel += multiplicity * psel;
        total_weighted_tvd += multiplicity * tvd;
        let near_zero = psel.abs() < LCFUR_DENOM_EPS;
        rows.push((
            multiplicity,
            LcfurRow {
                prefix: e.from,
                psel,
                tvd,
                ratio: if near_zero { None } else { Some(tvd / psel) },
                weight: 0.0,
                flagged: near_zero,
            },
        ));
    }

    let defined = total_weighted_psel != 0.0;
    let weighted_average = if defined {
        total_weighted_tvd / total_weighted_psel
    } else {
        0.0
    };
    let rows = rows
        .into_iter()
        .map(|(mult, mut row)| {
            if defined {
                row.weight = mult * row.psel / total_weighted_psel;
            } else {
                row.flagged = true;
            }
            row
        })
        .collect();
    Ok(LcfurTable {
        effect_pos,
        rows,
        weighted_average,
        defined,
    })
}

/// One point of the fairness/utility Pareto plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub subset: EffectSet,
    pub excess_loss: f64,
    pub tv: f64,
    /// Set on the full subset when its TV is not within 2 standard errors
    /// of zero.
    pub flagged: bool,
}

/// Pareto points per subset: excess loss relative to the unconstrained node
/// against the TV measure.
pub fn pareto_points(
    node_losses: &[f64],
    node_tvs: &[f64],
    full_tv_se: Option<f64>,
) -> Vec<ParetoPoint> {
    let base = node_losses[0];
    let full = node_losses.len() - 1;
    (0..node_losses.len())
        .map(|mask| ParetoPoint {
            subset: EffectSet::from_mask(mask as u32),
            excess_loss: node_losses[mask] - base,
            tv: node_tvs[mask],
            flagged: mask == full
                && match full_tv_se {
                    Some(se) => node_tvs[mask].abs() > 2.0 * se,
                    None => false,
                },
        })
        .collect()
}
