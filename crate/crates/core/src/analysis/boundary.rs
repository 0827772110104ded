//! The boundary calculus: the finite set `B` of atom boundary points, the
//! operator `R f = Σ_e ∂p_e · f∘w̄_e`, the set `Ω = ∩_n {Rⁿ1 ≥ 1}`, and the
//! kernel comparison behind the consistency check.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::model::IntervalSystem;
use crate::rational::Rational;

/// A finitely supported non-negative function; absent points are 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoundaryFn {
    pub values: BTreeMap<Rational, Rational>,
}

impl BoundaryFn {
    pub fn zero() -> Self {
        BoundaryFn::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Rational, Rational)>) -> Self {
        let mut f = BoundaryFn::zero();
        for (x, v) in pairs {
            f.add(x, v);
        }
        f
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        self.values.get(x).cloned().unwrap_or_else(Rational::zero)
    }

    fn add(&mut self, x: Rational, v: Rational) {
        if v.is_zero() {
            return;
        }
        let slot = self.values.entry(x.clone()).or_insert_with(Rational::zero);
        *slot += v;
        if slot.is_zero() {
            self.values.remove(&x);
        }
    }

    pub fn support(&self) -> Vec<Rational> {
        self.values.keys().cloned().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> Rational {
        self.values.values().fold(Rational::zero(), |a, v| a + v)
    }
}

impl std::fmt::Display for BoundaryFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.values.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .values
            .iter()
            .map(|(x, v)| format!("{x} ↦ {v}"))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// A boundary point and the atoms (by id) whose closure adds it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryPoint {
    pub point: Rational,
    pub atoms: Vec<u64>,
}

pub fn boundary_set(system: &IntervalSystem) -> Vec<BoundaryPoint> {
    let mut by_point: BTreeMap<Rational, Vec<u64>> = BTreeMap::new();
    for atom in &system.atoms {
        for z in atom.set.boundary() {
            by_point.entry(z).or_default().push(atom.id);
        }
    }
    by_point
        .into_iter()
        .map(|(point, atoms)| BoundaryPoint { point, atoms })
        .collect()
}

/// `∂p_e(z)`: the probability formula at `z` if `z` lies on the boundary of
/// the edge's source atom, else 0.
pub fn boundary_prob(system: &IntervalSystem, e: usize, z: &Rational) -> Rational {
    let edge = &system.edges[e];
    let set = &system.atoms[edge.source].set;
    if set.closure_contains(z) && !set.contains(z) {
        edge.prob.eval(z)
    } else {
        Rational::zero()
    }
}

/// Edges `e` with `∂p_e(z) > 0`, paired with that mass.
fn boundary_edges(system: &IntervalSystem, z: &Rational) -> Vec<(usize, Rational)> {
    (0..system.edges.len())
        .filter_map(|e| {
            let p = boundary_prob(system, e, z);
            (!p.is_zero()).then_some((e, p))
        })
        .collect()
}

/// `R f`, with `None` standing for the constant function 1.
pub fn r_apply(system: &IntervalSystem, f: Option<&BoundaryFn>) -> BoundaryFn {
    let mut out = BoundaryFn::zero();
    for bp in boundary_set(system) {
        let z = bp.point;
        let mut acc = Rational::zero();
        for (e, p) in boundary_edges(system, &z) {
            let fy = match f {
                None => Rational::one(),
                Some(f) => f.eval(&system.edges[e].map.eval(&z)),
            };
            acc += p * fy;
        }
        out.add(z, acc);
    }
    out
}

/// The matrix of `R` restricted to `B`: `(R f)|_B = A · f|_B` for every `f`
/// supported in `B`. Rows and columns follow `points`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMatrix {
    pub points: Vec<Rational>,
    pub a: Vec<Vec<Rational>>,
    /// `R1` on `B`.
    pub r1: Vec<Rational>,
}

impl BoundaryMatrix {
    pub fn build(system: &IntervalSystem) -> Self {
        let points: Vec<Rational> = boundary_set(system).into_iter().map(|b| b.point).collect();
        let index: BTreeMap<&Rational, usize> = points.iter().enumerate().map(|(k, z)| (z, k)).collect();
        let n = points.len();
        let mut a = vec![vec![Rational::zero(); n]; n];
        let mut r1 = vec![Rational::zero(); n];
        for (row, z) in points.iter().enumerate() {
            for (e, p) in boundary_edges(system, z) {
                let y = system.edges[e].map.eval(z);
                if let Some(&col) = index.get(&y) {
                    a[row][col] += &p;
                }
                r1[row] += p;
            }
        }
        BoundaryMatrix { points, a, r1 }
    }

    pub fn apply(&self, v: &[Rational]) -> Vec<Rational> {
        self.a
            .iter()
            .map(|row| {
                row.iter()
                    .zip(v)
                    .filter(|(a, x)| !a.is_zero() && !x.is_zero())
                    .fold(Rational::zero(), |acc, (a, x)| acc + a * x)
            })
            .collect()
    }

    pub fn to_fn(&self, v: &[Rational]) -> BoundaryFn {
        BoundaryFn::from_pairs(self.points.iter().cloned().zip(v.iter().cloned()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Omega {
    Decided(Vec<Rational>),
    Undecided { after: usize },
}

impl Omega {
    pub fn is_empty(&self) -> bool {
        matches!(self, Omega::Decided(v) if v.is_empty())
    }

    pub fn points(&self) -> Option<&[Rational]> {
        match self {
            Omega::Decided(v) => Some(v),
            Omega::Undecided { .. } => None,
        }
    }
}

impl std::fmt::Display for Omega {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Omega::Decided(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{{{}}}", parts.join(", "))
            }
            Omega::Undecided { after } => write!(f, "undecided after {after} iterations"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmegaStop {
    /// The running intersection became empty.
    Empty,
    /// `Rᵏ1` repeated an earlier value, so no new constraints can appear.
    Cycle { start: usize, period: usize },
    Cap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmegaResult {
    pub omega: Omega,
    /// `R¹1, R²1, …` as computed.
    pub iterates: Vec<BoundaryFn>,
    pub stop: OmegaStop,
}

pub fn default_n_max(system: &IntervalSystem) -> usize {
    2 * boundary_set(system).len() + 8
}

/// Iterates `f_{k+1} = A f_k` from `f_1 = R1`, intersecting `{f_k ≥ 1}`.
pub fn omega_set(system: &IntervalSystem, n_max: usize) -> OmegaResult {
    let m = BoundaryMatrix::build(system);
    let one = Rational::one();
    let mut alive: Vec<bool> = vec![true; m.points.len()];
    let mut history: Vec<Vec<Rational>> = Vec::new();
    let mut iterates = Vec::new();
    let mut v = m.r1.clone();
    for k in 1..=n_max.max(1) {
        for (flag, x) in alive.iter_mut().zip(&v) {
            *flag &= *x >= one;
        }
        iterates.push(m.to_fn(&v));
        let omega: Vec<Rational> = m
            .points
            .iter()
            .zip(&alive)
            .filter(|(_, a)| **a)
            .map(|(z, _)| z.clone())
            .collect();
        if omega.is_empty() {
            return OmegaResult {
                omega: Omega::Decided(omega),
                iterates,
                stop: OmegaStop::Empty,
            };
        }
        if let Some(j) = history.iter().position(|h| *h == v) {
            return OmegaResult {
                omega: Omega::Decided(omega),
                iterates,
                stop: OmegaStop::Cycle {
                    start: j + 1,
                    period: k - (j + 1),
                },
            };
        }
        history.push(v.clone());
        v = m.apply(&v);
    }
    OmegaResult {
        omega: Omega::Undecided { after: n_max },
        iterates,
        stop: OmegaStop::Cap,
    }
}

/// Point masses of a sub-probability kernel at `base`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryKernel {
    pub base: Rational,
    pub masses: BoundaryFn,
}

/// Mass `∂p_e(z)` at `w̄_e(z)` for every edge.
pub fn r_kernel(system: &IntervalSystem, z: &Rational) -> BoundaryKernel {
    BoundaryKernel {
        base: z.clone(),
        masses: BoundaryFn::from_pairs(
            boundary_edges(system, z)
                .into_iter()
                .map(|(e, p)| (system.edges[e].map.eval(z), p)),
        ),
    }
}

/// Mass `p_e(z)` at `w_e(z)` for the edges out of the atom containing `z`.
pub fn u_kernel(system: &IntervalSystem, z: &Rational) -> BoundaryKernel {
    let masses = match system.atom_of(z) {
        None => BoundaryFn::zero(),
        Some(i) => BoundaryFn::from_pairs(system.edges_from(i).iter().map(|&e| {
            let edge = &system.edges[e];
            (edge.map.eval(z), edge.prob.eval(z))
        })),
    };
    BoundaryKernel {
        base: z.clone(),
        masses,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CscWitness {
    pub z: Rational,
    pub y: Rational,
    pub r_mass: Rational,
    pub u_mass: Rational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CscOutcome {
    pub pass: bool,
    pub kernels: Vec<(BoundaryKernel, BoundaryKernel)>,
    pub witness: Option<CscWitness>,
}

/// Pointwise domination of the R-kernel by the U-kernel at every point of Ω.
pub fn csc_check(system: &IntervalSystem, omega: &Omega) -> Result<CscOutcome> {
    let points = omega.points().ok_or(Error::OmegaUndecided)?;
    let mut kernels = Vec::new();
    let mut witness = None;
    for z in points {
        let r = r_kernel(system, z);
        let u = u_kernel(system, z);
        if witness.is_none() {
            for (y, r_mass) in &r.masses.values {
                let u_mass = u.masses.eval(y);
                if *r_mass > u_mass {
                    witness = Some(CscWitness {
                        z: z.clone(),
                        y: y.clone(),
                        r_mass: r_mass.clone(),
                        u_mass,
                    });
                    break;
                }
            }
        }
        kernels.push((r, u));
    }
    Ok(CscOutcome {
        pass: witness.is_none(),
        kernels,
        witness,
    })
}
