//! Finite-graph subshifts driven by a finite-memory g-function.
//!
//! A state is a left-infinite admissible edge sequence; because `g` only
//! looks at the last `ℓ` symbols (the new one included), the last `ℓ` edges
//! and the terminal vertex are a complete description of it.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};

use crate::coding::WordMetric;
use crate::error::{Error, Result};
use crate::model::spec::SubshiftSpec;
use crate::rational::{self, Rational};
use crate::simulation::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphEdge {
    pub id: String,
    /// Vertex indices into [`SubshiftSystem::vertices`].
    pub source: usize,
    pub target: usize,
}

/// The last `ℓ` edges (oldest first) and the vertex they end at.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ShiftState {
    pub context: Vec<usize>,
    pub vertex: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Transition {
    pub edge: usize,
    pub prob: f64,
    pub log_prob: f64,
    pub next: usize,
}

/// What `g` needs to see before choosing the next edge: the last `ℓ-1`
/// edges, plus the current vertex (which for `ℓ = 1` is all there is).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Context {
    edges: Vec<usize>,
    vertex: usize,
}

#[derive(Clone, Debug)]
pub struct SubshiftSystem {
    pub spec: SubshiftSpec,
    pub vertices: Vec<u64>,
    pub edges: Vec<GraphEdge>,
    pub memory: usize,
    /// `g` on admissible words of length `ℓ` (oldest first, last symbol new).
    pub g: HashMap<Vec<usize>, Rational>,
    out_edges: Vec<Vec<usize>>,
    contexts: Vec<Context>,
    context_ids: HashMap<Context, usize>,
    transitions: Vec<Vec<Transition>>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Subshift(msg.into())
}

pub fn validate_subshift(spec: &SubshiftSpec) -> Result<SubshiftSystem> {
    let vertices = spec.graph.vertices.clone();
    if vertices.is_empty() {
        return Err(bad("graph has no vertices"));
    }
    let vindex = |id: u64| {
        vertices
            .iter()
            .position(|&v| v == id)
            .ok_or(Error::UnknownAtom(id))
    };
    let edges: Vec<GraphEdge> = spec
        .graph
        .edges
        .iter()
        .map(|e| {
            Ok(GraphEdge {
                id: e.id.clone(),
                source: vindex(e.from)?,
                target: vindex(e.to)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut out_edges = vec![Vec::new(); vertices.len()];
    let mut has_in = vec![false; vertices.len()];
    for (k, e) in edges.iter().enumerate() {
        out_edges[e.source].push(k);
        has_in[e.target] = true;
    }
    for (v, id) in vertices.iter().enumerate() {
        if out_edges[v].is_empty() {
            return Err(bad(format!("vertex {id} has no outgoing edge")));
        }
        if !has_in[v] {
            return Err(bad(format!("vertex {id} has no incoming edge")));
        }
    }
    let memory = spec.g.memory;
    if memory == 0 {
        return Err(bad("memory must be at least 1"));
    }

    let eindex: HashMap<&str, usize> = edges
        .iter()
        .enumerate()
        .map(|(k, e)| (e.id.as_str(), k))
        .collect();
    let mut g = HashMap::new();
    for (key, value) in &spec.g.table {
        let word: Vec<usize> = key
            .split(',')
            .map(|s| {
                let s = s.trim();
                eindex
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::UnknownEdge(s.to_string()))
            })
            .collect::<Result<_>>()?;
        if word.len() != memory {
            return Err(bad(format!(
                "g-table word {key:?} has length {} but memory is {memory}",
                word.len()
            )));
        }
        if word.windows(2).any(|w| edges[w[0]].target != edges[w[1]].source) {
            return Err(bad(format!("g-table word {key:?} is not a path")));
        }
        if !(value > &Rational::zero() && value <= &Rational::one()) {
            return Err(bad(format!("g({key}) = {value} is not in (0, 1]")));
        }
        g.insert(word, value.clone());
    }

    let contexts = enumerate_contexts(&edges, vertices.len(), memory);
    let context_ids: HashMap<Context, usize> = contexts
        .iter()
        .enumerate()
        .map(|(k, c)| (c.clone(), k))
        .collect();
    let mut transitions = Vec::with_capacity(contexts.len());
    let mut positive = vec![false; edges.len()];
    for ctx in &contexts {
        let mut total = Rational::zero();
        let mut row = Vec::new();
        for &e in &out_edges[ctx.vertex] {
            let mut word = ctx.edges.clone();
            word.push(e);
            let Some(p) = g.get(&word) else { continue };
            total += p;
            positive[e] = true;
            let mut next_edges = word;
            if next_edges.len() > memory - 1 {
                next_edges.remove(0);
            }
            let next = Context {
                edges: next_edges,
                vertex: edges[e].target,
            };
            let pf = rational::to_f64(p);
            row.push(Transition {
                edge: e,
                prob: pf,
                log_prob: pf.ln(),
                next: context_ids[&next],
            });
        }
        if total != Rational::one() {
            let names: Vec<&str> = ctx.edges.iter().map(|&e| edges[e].id.as_str()).collect();
            return Err(bad(format!(
                "extensions of context [{}] at vertex {} sum to {total}, not 1",
                names.join(","),
                vertices[ctx.vertex]
            )));
        }
        transitions.push(row);
    }
    if let Some(e) = positive.iter().position(|p| !p) {
        return Err(Error::ZeroProbabilityEdge {
            edge: edges[e].id.clone(),
            atom: vertices[edges[e].source],
        });
    }
    Ok(SubshiftSystem {
        spec: spec.clone(),
        vertices,
        edges,
        memory,
        g,
        out_edges,
        contexts,
        context_ids,
        transitions,
    })
}

fn enumerate_contexts(edges: &[GraphEdge], n_vertices: usize, memory: usize) -> Vec<Context> {
    if memory == 1 {
        return (0..n_vertices)
            .map(|v| Context {
                edges: Vec::new(),
                vertex: v,
            })
            .collect();
    }
    let mut words: Vec<Vec<usize>> = (0..edges.len()).map(|e| vec![e]).collect();
    for _ in 1..memory - 1 {
        words = words
            .into_iter()
            .flat_map(|w| {
                let end = edges[*w.last().unwrap()].target;
                edges
                    .iter()
                    .enumerate()
                    .filter(move |(_, e)| e.source == end)
                    .map(move |(k, _)| {
                        let mut w = w.clone();
                        w.push(k);
                        w
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    words
        .into_iter()
        .map(|w| {
            let vertex = edges[*w.last().unwrap()].target;
            Context { edges: w, vertex }
        })
        .collect()
}

impl SubshiftSystem {
    pub fn vertex_index(&self, id: u64) -> Option<usize> {
        self.vertices.iter().position(|&v| v == id)
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    pub fn edges_from(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    /// `g(word)`, zero for words without an entry.
    pub fn g_of(&self, word: &[usize]) -> Rational {
        self.g.get(word).cloned().unwrap_or_else(Rational::zero)
    }

    /// `sup p_e = max g(ctx·e)` over contexts.
    pub fn sup_prob(&self, e: usize) -> Rational {
        self.g
            .iter()
            .filter(|(w, _)| *w.last().unwrap() == e)
            .map(|(_, p)| p.clone())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Some admissible state ending at vertex `v`, found by walking backwards
    /// along lowest-numbered incoming edges.
    pub fn initial_state(&self, v: usize) -> Result<ShiftState> {
        let mut context = Vec::with_capacity(self.memory);
        let mut at = v;
        for _ in 0..self.memory {
            let e = self
                .edges
                .iter()
                .position(|e| e.target == at)
                .ok_or_else(|| bad(format!("vertex {} has no past", self.vertices[at])))?;
            context.push(e);
            at = self.edges[e].source;
        }
        context.reverse();
        Ok(ShiftState { context, vertex: v })
    }

    pub(crate) fn context_id(&self, state: &ShiftState) -> Result<usize> {
        let keep = self.memory - 1;
        if state.context.len() < keep {
            return Err(bad("state context is shorter than the memory"));
        }
        let ctx = Context {
            edges: state.context[state.context.len() - keep..].to_vec(),
            vertex: state.vertex,
        };
        self.context_ids
            .get(&ctx)
            .copied()
            .ok_or_else(|| bad("state context is not admissible"))
    }

    pub(crate) fn context_vertex(&self, ctx: usize) -> usize {
        self.contexts[ctx].vertex
    }

    /// Inverse-CDF choice among the transitions of a context.
    pub(crate) fn pick(&self, ctx: usize, u: f64) -> &Transition {
        let row = &self.transitions[ctx];
        let mut acc = 0.0;
        for t in row {
            acc += t.prob;
            if u < acc {
                return t;
            }
        }
        row.last().expect("validated contexts have extensions")
    }

    /// One step: draw `e` with probability `g(context·e)` and append it.
    pub fn step(&self, state: &ShiftState, rng: &mut RngStream) -> Result<(usize, ShiftState)> {
        let ctx = self.context_id(state)?;
        let t = self.pick(ctx, rng.uniform());
        let mut context = state.context.clone();
        context.push(t.edge);
        context.remove(0);
        Ok((
            t.edge,
            ShiftState {
                context,
                vertex: self.edges[t.edge].target,
            },
        ))
    }

    /// Vertex-to-vertex transition matrix of a memory-1 system.
    pub fn transition_matrix(&self) -> Result<Vec<Vec<Rational>>> {
        if self.memory != 1 {
            return Err(Error::NotApplicable(format!(
                "transition matrix needs memory 1, system has memory {}",
                self.memory
            )));
        }
        let n = self.vertices.len();
        let mut p = vec![vec![Rational::zero(); n]; n];
        for (k, e) in self.edges.iter().enumerate() {
            p[e.source][e.target] += self.g_of(&[k]);
        }
        Ok(p)
    }

    pub fn vertex_arcs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.source, e.target)).collect()
    }

    pub fn edge_ids(&self, word: &[usize]) -> Vec<String> {
        word.iter().map(|&e| self.edges[e].id.clone()).collect()
    }
}

/// `d(σ, σ') = 2^{-k}` with `k` the number of most recent symbols on which
/// the words agree; both words end at time 0. When the shorter word
/// is exhausted without a disagreement the value is only an upper bound.
pub fn subshift_metric<T: PartialEq>(word1: &[T], word2: &[T]) -> WordMetric {
    let agree = word1
        .iter()
        .rev()
        .zip(word2.iter().rev())
        .take_while(|(a, b)| a == b)
        .count();
    WordMetric {
        exponent: agree as u32,
        upper_bound: agree == word1.len().min(word2.len()),
    }
}

/// Per-vertex counts in a map keyed by vertex id.
pub fn vertex_histogram(system: &SubshiftSystem, visits: &[usize]) -> BTreeMap<u64, u64> {
    let mut out: BTreeMap<u64, u64> = system.vertices.iter().map(|&v| (v, 0)).collect();
    for &v in visits {
        *out.get_mut(&system.vertices[v]).unwrap() += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::{parse_spec, SystemSpec};
    use crate::rational::frac;

    fn load(doc: &str) -> Result<SubshiftSystem> {
        match parse_spec(doc)? {
            SystemSpec::Subshift(s) => validate_subshift(&s),
            _ => panic!("subshift expected"),
        }
    }

    const CHAIN: &str = r#"{"backend":"subshift",
        "graph":{"vertices":[1,2],"edges":[
            {"id":"11","from":1,"to":1},{"id":"12","from":1,"to":2},
            {"id":"21","from":2,"to":1},{"id":"22","from":2,"to":2}]},
        "g":{"memory":1,"table":{"11":"3/10","12":"7/10","21":"3/5","22":"2/5"}}}"#;

    #[test]
    fn memory_one_chain() {
        let s = load(CHAIN).unwrap();
        let p = s.transition_matrix().unwrap();
        assert_eq!(p[0], vec![frac(3, 10), frac(7, 10)]);
        assert_eq!(p[1], vec![frac(3, 5), frac(2, 5)]);
        assert_eq!(s.sup_prob(1), frac(7, 10));
        let st = s.initial_state(0).unwrap();
        assert_eq!(st.vertex, 0);
        assert_eq!(s.edges[st.context[0]].target, 0);
    }

    #[test]
    fn normalization_is_exact() {
        let doc = CHAIN.replace(r#""22":"2/5""#, r#""22":"0.39""#);
        let err = load(&doc).unwrap_err();
        assert!(err.to_string().contains("sum to"), "{err}");
    }

    #[test]
    fn words_must_match_memory() {
        let doc = CHAIN.replace(r#""11":"3/10""#, r#""11,11":"3/10""#);
        assert!(load(&doc).is_err());
    }

    #[test]
    fn dead_ends_are_rejected() {
        let doc = r#"{"backend":"subshift","graph":{"vertices":[1,2],"edges":[{"id":"a","from":1,"to":2}]},
            "g":{"memory":1,"table":{"a":"1"}}}"#;
        assert!(load(doc).is_err());
    }

    #[test]
    fn deterministic_loop() {
        let doc = r#"{"backend":"subshift","graph":{"vertices":[7],"edges":[{"id":"l","from":7,"to":7}]},
            "g":{"memory":1,"table":{"l":"1"}}}"#;
        let s = load(doc).unwrap();
        let mut rng = RngStream::new(1, 0);
        let mut st = s.initial_state(0).unwrap();
        for _ in 0..10 {
            let (e, next) = s.step(&st, &mut rng).unwrap();
            assert_eq!(e, 0);
            st = next;
        }
    }

    #[test]
    fn metric_examples() {
        let a = ["x", "y", "z", "u", "v"];
        let m = subshift_metric(&a, &a);
        assert_eq!((m.exponent, m.upper_bound), (5, true));
        assert_eq!(m.value(), frac(1, 32));
        let m = subshift_metric(&["x", "y"], &["x", "z"]);
        assert_eq!(m.value(), frac(1, 1));
        let m = subshift_metric(&["x", "y"], &["z", "y"]);
        assert_eq!((m.value(), m.upper_bound), (frac(1, 2), false));
    }
}
