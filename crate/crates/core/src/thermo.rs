//! Energy averages, finite-memory block entropies, the free-energy residual
//! `H_m + ū`, and the exact stationary law of memory-1 chains.

use std::collections::HashMap;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::graph;
use crate::rational::{self, Rational};
use crate::simulation::Trajectory;
use crate::subshift::SubshiftSystem;

/// Batches used for standard errors.
pub const BATCHES: usize = 20;

fn batch_se(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

fn batches<T>(items: &[T]) -> impl Iterator<Item = &[T]> {
    let size = (items.len() / BATCHES).max(1);
    items.chunks(size).filter(move |c| c.len() == size)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyAverage {
    /// Nats; never positive.
    pub value: f64,
    pub n: usize,
    pub se: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Birkhoff average of `log p_{e_k}(x_{k-1})` along the trajectory.
pub fn energy_average(trajectory: &Trajectory) -> Result<EnergyAverage> {
    energy_of(&trajectory.log_probs)
}

fn energy_of(log_probs: &[f64]) -> Result<EnergyAverage> {
    if log_probs.is_empty() {
        return Err(Error::NoSamples);
    }
    let per_batch: Vec<f64> = batches(log_probs).map(mean).collect();
    Ok(EnergyAverage {
        value: mean(log_probs),
        n: log_probs.len(),
        se: batch_se(&per_batch),
    })
}

/// `log g(context·e)` of another subshift along the trajectory's edge sequence,
/// for edges whose full context is available.
pub fn cross_log_probs(system: &SubshiftSystem, trajectory: &Trajectory) -> Result<Vec<f64>> {
    let l = system.memory;
    let edges = &trajectory.edges;
    if edges.len() < l {
        return Err(Error::NoSamples);
    }
    (l - 1..edges.len())
        .map(|k| {
            let word = &edges[k + 1 - l..=k];
            let g = system.g_of(word);
            if g.is_zero() {
                return Err(Error::NotApplicable(format!(
                    "word {:?} has zero probability under the other system",
                    system.edge_ids(word)
                )));
            }
            Ok(rational::to_f64(&g).ln())
        })
        .collect()
}

/// Energy of `trajectory` measured with `system`'s probabilities.
pub fn cross_energy_average(system: &SubshiftSystem, trajectory: &Trajectory) -> Result<EnergyAverage> {
    energy_of(&cross_log_probs(system, trajectory)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockEntropy {
    pub memory: usize,
    /// Nats.
    pub h: f64,
    pub bits: f64,
    pub se: f64,
    pub contexts: usize,
    /// Whether the length reached `100·|E|^{m+1}`.
    pub adequate: bool,
}

/// Conditional entropy of the next symbol given the previous `m`.
pub fn conditional_entropy(edges: &[usize], m: usize) -> f64 {
    if edges.len() <= m {
        return 0.0;
    }
    let mut table: HashMap<&[usize], HashMap<usize, u64>> = HashMap::new();
    for k in m..edges.len() {
        *table
            .entry(&edges[k - m..k])
            .or_default()
            .entry(edges[k])
            .or_insert(0) += 1;
    }
    let total = (edges.len() - m) as f64;
    let mut h = 0.0;
    for next in table.values() {
        let n_ctx: u64 = next.values().sum();
        let n_ctx = n_ctx as f64;
        for &c in next.values() {
            let p = c as f64 / n_ctx;
            h -= (n_ctx / total) * p * p.ln();
        }
    }
    h
}

pub fn block_entropy(trajectory: &Trajectory, m: usize) -> Result<BlockEntropy> {
    let edges = &trajectory.edges;
    if edges.len() <= m {
        return Err(Error::NoSamples);
    }
    let h = conditional_entropy(edges, m);
    let per_batch: Vec<f64> = batches(edges).map(|b| conditional_entropy(b, m)).collect();
    let contexts = {
        let mut seen: HashMap<&[usize], ()> = HashMap::new();
        for k in m..edges.len() {
            seen.insert(&edges[k - m..k], ());
        }
        seen.len()
    };
    let needed = 100.0 * (trajectory.alphabet.max(1) as f64).powi(m as i32 + 1);
    Ok(BlockEntropy {
        memory: m,
        h,
        bits: h / std::f64::consts::LN_2,
        se: batch_se(&per_batch),
        contexts,
        adequate: edges.len() as f64 >= needed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreeEnergyResidual {
    pub memory: usize,
    pub entropy: BlockEntropy,
    pub energy: EnergyAverage,
    /// `H_m + ū`.
    pub residual: f64,
    pub se: f64,
    pub entropy_possibly_infinite: bool,
    pub verdict: String,
}

/// Marginal entropy keeps growing with the sample: more than 64 symbols
/// seen and `H_0` still rising by over 0.02 nats from a quarter of the
/// trajectory to all of it.
fn entropy_keeps_growing(edges: &[usize]) -> bool {
    let distinct = {
        let mut v = edges.to_vec();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    let quarter = &edges[..edges.len() / 4];
    distinct > 64 && conditional_entropy(edges, 0) - conditional_entropy(quarter, 0) > 0.02
}

fn residual_from(
    edges: &[usize],
    log_probs: &[f64],
    alphabet: usize,
    m: usize,
) -> Result<FreeEnergyResidual> {
    let traj = Trajectory {
        edges: edges.to_vec(),
        log_probs: log_probs.to_vec(),
        alphabet,
        ..Trajectory::default()
    };
    let entropy = block_entropy(&traj, m)?;
    let energy = energy_of(log_probs)?;
    let residual = entropy.h + energy.value;
    let size = (edges.len() / BATCHES).max(1);
    let per_batch: Vec<f64> = edges
        .chunks(size)
        .zip(log_probs.chunks(size))
        .filter(|(e, _)| e.len() == size)
        .map(|(e, l)| conditional_entropy(e, m) + mean(l))
        .collect();
    let se = batch_se(&per_batch);
    let infinite = entropy_keeps_growing(edges);
    let verdict = if infinite {
        "entropy possibly infinite; residual test inapplicable".to_string()
    } else if residual.abs() <= 3.0 * se {
        "consistent with an equilibrium state (|ρ| ≤ 3 SE)".to_string()
    } else if residual < 0.0 {
        "below equilibrium (ρ < −3 SE)".to_string()
    } else {
        "above equilibrium (ρ > 3 SE); H_m only bounds the entropy rate from above, try a larger memory".to_string()
    };
    Ok(FreeEnergyResidual {
        memory: m,
        entropy,
        energy,
        residual,
        se,
        entropy_possibly_infinite: infinite,
        verdict,
    })
}

/// `ρ_m = H_m + ū` along the trajectory.
pub fn free_energy_residual(trajectory: &Trajectory, m: usize) -> Result<FreeEnergyResidual> {
    residual_from(&trajectory.edges, &trajectory.log_probs, trajectory.alphabet, m)
}

/// `ρ_m` with the energy measured under another system's probabilities.
pub fn cross_free_energy_residual(
    system: &SubshiftSystem,
    trajectory: &Trajectory,
    m: usize,
) -> Result<FreeEnergyResidual> {
    let logs = cross_log_probs(system, trajectory)?;
    let skip = trajectory.edges.len() - logs.len();
    residual_from(&trajectory.edges[skip..], &logs, trajectory.alphabet, m)
}

/// Exact stationary law `πP = π`, `Σπ = 1` of a memory-1 chain, by vertex id.
pub fn markov_stationary_oracle(system: &SubshiftSystem) -> Result<Vec<(u64, Rational)>> {
    let p = system.transition_matrix()?;
    let n = p.len();
    let arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !p[i][j].is_zero())
        .collect();
    if !graph::is_strongly_connected(n, &arcs) {
        let classes: Vec<String> = graph::closed_classes(n, &arcs)
            .iter()
            .map(|c| {
                let ids: Vec<String> = c.iter().map(|&i| system.vertices[i].to_string()).collect();
                format!("{{{}}}", ids.join(", "))
            })
            .collect();
        return Err(Error::Reducible(classes.join(", ")));
    }
    // Rows: (Pᵀ − I)π = 0 with the last replaced by Σπ = 1.
    let mut a: Vec<Vec<Rational>> = (0..n)
        .map(|i| {
            let mut row: Vec<Rational> = (0..n).map(|j| p[j][i].clone()).collect();
            row[i] -= Rational::one();
            row.push(Rational::zero());
            row
        })
        .collect();
    a[n - 1] = vec![Rational::one(); n + 1];
    let pi = solve(a).ok_or_else(|| Error::Reducible("singular stationary system".into()))?;
    Ok(system.vertices.iter().copied().zip(pi).collect())
}

/// Gauss–Jordan elimination on an augmented `n × (n+1)` matrix.
fn solve(mut a: Vec<Vec<Rational>>) -> Option<Vec<Rational>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        let inv = Rational::one() / &a[col][col];
        for v in a[col].iter_mut() {
            *v *= &inv;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in col..=n {
                    let delta = &factor * &a[col][c];
                    a[r][c] -= delta;
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[n].clone()).collect())
}

/// `−Σ_i π_i Σ_{e: i→·} g(e) ln g(e)` for a memory-1 chain, in nats.
pub fn entropy_rate_oracle(system: &SubshiftSystem) -> Result<f64> {
    let pi = markov_stationary_oracle(system)?;
    let mut h = 0.0;
    for (v, (_, weight)) in pi.iter().enumerate() {
        for &e in system.edges_from(v) {
            let g = rational::to_f64(&system.g_of(&[e]));
            if g > 0.0 {
                h -= rational::to_f64(weight) * g * g.ln();
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{self, System};
    use crate::rational::frac;

    #[test]
    fn chain_oracle() {
        let pi = markov_stationary_oracle(&fixtures::chain()).unwrap();
        assert_eq!(pi, vec![(1, frac(6, 13)), (2, frac(7, 13))]);
        let h = entropy_rate_oracle(&fixtures::chain()).unwrap();
        assert!((h - 0.6443).abs() < 1e-4, "{h}");
    }

    fn subshift(doc: &str) -> SubshiftSystem {
        match model::load(doc).unwrap() {
            System::Subshift(s) => s,
            _ => unreachable!(),
        }
    }

    #[test]
    fn doubly_stochastic_is_uniform() {
        let doc = fixtures::CHAIN
            .replace(r#""11": "3/10", "12": "7/10", "21": "3/5", "22": "2/5""#,
                     r#""11": "1/4", "12": "3/4", "21": "3/4", "22": "1/4""#);
        let pi = markov_stationary_oracle(&subshift(&doc)).unwrap();
        assert_eq!(pi, vec![(1, frac(1, 2)), (2, frac(1, 2))]);
    }

    #[test]
    fn identity_chain_is_reducible() {
        let doc = r#"{"backend":"subshift","graph":{"vertices":[1,2],"edges":[
            {"id":"11","from":1,"to":1},{"id":"22","from":2,"to":2}]},
            "g":{"memory":1,"table":{"11":"1","22":"1"}}}"#;
        let err = markov_stationary_oracle(&subshift(doc)).unwrap_err();
        assert!(err.to_string().contains("reducible"), "{err}");
        assert!(err.to_string().contains("{1}, {2}"), "{err}");
    }

    #[test]
    fn entropy_of_constant_and_alternating_words() {
        assert_eq!(conditional_entropy(&[0; 50], 0), 0.0);
        let alt: Vec<usize> = (0..1000).map(|k| k % 2).collect();
        assert!((conditional_entropy(&alt, 0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(conditional_entropy(&alt, 1).abs() < 1e-12);
    }
}
