//! The raw, unvalidated system document.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Clone, Debug, PartialEq)]
pub enum SystemSpec {
    Interval(IntervalSpec),
    Subshift(SubshiftSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    #[serde(default)]
    pub space: SpaceSpec,
    pub atoms: Vec<AtomSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty", with = "anchor_map")]
    pub anchors: BTreeMap<u64, Rational>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_family: Option<FamilySpec>,
}

/// State space bounds; a missing or `null` end is infinite, finite ends are
/// closed unless stated otherwise.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    #[serde(default, with = "rational::as_opt_string")]
    pub lo: Option<Rational>,
    #[serde(default, with = "rational::as_opt_string")]
    pub hi: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_closed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi_closed: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub id: u64,
    pub kind: AtomKind,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "rational::as_opt_string"
    )]
    pub at: Option<Rational>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "rational::as_opt_string"
    )]
    pub lo: Option<Rational>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "rational::as_opt_string"
    )]
    pub hi: Option<Rational>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub lo_closed: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub hi_closed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomKind {
    Point,
    Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    #[serde(with = "rational::as_string")]
    pub slope: Rational,
    #[serde(with = "rational::as_string")]
    pub intercept: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: String,
    pub from: u64,
    /// Optional declared target; checked against the resolved one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<u64>,
    pub map: AffineSpec,
    pub prob: AffineSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// A countable edge family `n = n0, n0+1, …` out of one atom, with constant
/// probabilities, instantiated by truncation.
///
/// `map.slope`, `map.intercept` and `prob` are expressions in `n` and the
/// named `constants`; `tail_mass_bound` (and the optional
/// `tail_contraction_bound`) are expressions in the truncation index `M`
/// bounding `Σ_{n>M} p_n` (resp. `Σ_{n>M} p_n·|slope_n|`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(default = "default_family_prefix")]
    pub id_prefix: String,
    pub from: u64,
    pub to: u64,
    pub n0: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncate_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_tail: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, String>,
    pub map: FamilyMapSpec,
    pub prob: String,
    pub tail_mass_bound: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_contraction_bound: Option<String>,
}

fn default_family_prefix() -> String {
    "n".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyMapSpec {
    pub slope: String,
    pub intercept: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubshiftSpec {
    pub graph: GraphSpec,
    pub g: GTableSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: Vec<u64>,
    pub edges: Vec<GraphEdgeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEdgeSpec {
    pub id: String,
    pub from: u64,
    pub to: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GTableSpec {
    pub memory: usize,
    #[serde(with = "rational_map")]
    pub table: BTreeMap<String, Rational>,
}

mod anchor_map {
    use std::collections::BTreeMap;

    use serde::{de, Deserialize, Deserializer, Serializer};

    use crate::rational::{as_string::Literal, Rational};

    pub fn serialize<S: Serializer>(m: &BTreeMap<u64, Rational>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(m.iter().map(|(k, v)| (k.to_string(), v.to_string())))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u64, Rational>, D::Error> {
        let raw = BTreeMap::<String, Literal>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let id = k
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| de::Error::custom(format!("anchor key {k:?} is not an atom id")))?;
                Ok((id, v.into_rational().map_err(de::Error::custom)?))
            })
            .collect()
    }
}

mod rational_map {
    use std::collections::BTreeMap;

    use serde::{de, Deserialize, Deserializer, Serializer};

    use crate::rational::{as_string::Literal, Rational};

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, Rational>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(m.iter().map(|(k, v)| (k, v.to_string())))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, Rational>, D::Error> {
        let raw = BTreeMap::<String, Literal>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| Ok((k, v.into_rational().map_err(de::Error::custom)?)))
            .collect()
    }
}

/// Reads a system document. Rationals are parsed exactly; structural checks
/// that need no arithmetic (duplicate ids, empty edge set) happen here.
pub fn parse_spec(document: &str) -> Result<SystemSpec> {
    let mut value: serde_json::Value = serde_json::from_str(document)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Malformed("top level must be an object".into()))?;
    let backend = match obj.remove("backend") {
        None => "interval".to_string(),
        Some(serde_json::Value::String(s)) => s,
        Some(other) => return Err(Error::UnknownBackend(other.to_string())),
    };
    let spec = match backend.as_str() {
        "interval" => SystemSpec::Interval(rethrow(serde_json::from_value(value))?),
        "subshift" => SystemSpec::Subshift(rethrow(serde_json::from_value(value))?),
        _ => return Err(Error::UnknownBackend(backend)),
    };
    check_structure(&spec)?;
    Ok(spec)
}

// serde wraps our own errors (e.g. a zero denominator) in its message; pull
// the rational failures back out so callers can match on them.
fn rethrow<T>(r: std::result::Result<T, serde_json::Error>) -> Result<T> {
    r.map_err(|e| {
        let msg = e.to_string();
        if msg.starts_with("zero denominator") {
            Error::ZeroDenominator(msg)
        } else if msg.starts_with("malformed rational") {
            Error::MalformedRational(msg)
        } else {
            Error::Json(e)
        }
    })
}

fn check_structure(spec: &SystemSpec) -> Result<()> {
    match spec {
        SystemSpec::Interval(s) => {
            let mut seen = HashSet::new();
            for a in &s.atoms {
                if !seen.insert(a.id) {
                    return Err(Error::DuplicateAtom(a.id));
                }
            }
            let mut seen = HashSet::new();
            for e in &s.edges {
                if !seen.insert(e.id.as_str()) {
                    return Err(Error::DuplicateEdge(e.id.clone()));
                }
            }
            if s.edges.is_empty() && s.tail_family.is_none() {
                return Err(Error::NoEdges);
            }
        }
        SystemSpec::Subshift(s) => {
            let mut seen = HashSet::new();
            for v in &s.graph.vertices {
                if !seen.insert(*v) {
                    return Err(Error::DuplicateAtom(*v));
                }
            }
            let mut seen = HashSet::new();
            for e in &s.graph.edges {
                if !seen.insert(e.id.as_str()) {
                    return Err(Error::DuplicateEdge(e.id.clone()));
                }
            }
            if s.graph.edges.is_empty() {
                return Err(Error::NoEdges);
            }
        }
    }
    Ok(())
}

impl SystemSpec {
    pub fn to_json(&self) -> serde_json::Value {
        let (backend, body) = match self {
            SystemSpec::Interval(s) => ("interval", serde_json::to_value(s)),
            SystemSpec::Subshift(s) => ("subshift", serde_json::to_value(s)),
        };
        let mut out = serde_json::Map::new();
        out.insert("backend".into(), backend.into());
        if let serde_json::Value::Object(mut m) = body.expect("spec types serialize infallibly") {
            out.append(&mut m);
        }
        serde_json::Value::Object(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRDM_LIKE: &str = r#"{
        "backend": "interval",
        "space": {"lo": "0", "hi": "1"},
        "atoms": [
            {"id": 1, "kind": "point", "at": "0"},
            {"id": 2, "kind": "interval", "lo": "0", "hi": "1"},
            {"id": 3, "kind": "point", "at": 1}
        ],
        "anchors": {"2": "1/2"},
        "edges": [
            {"id": "a", "from": 1, "map": {"slope": "1/2", "intercept": "1/2"}, "prob": {"slope": 0, "intercept": 1}}
        ]
    }"#;

    #[test]
    fn parses_rationals_exactly() {
        let SystemSpec::Interval(s) = parse_spec(PRDM_LIKE).unwrap() else {
            panic!("wrong backend")
        };
        assert_eq!(s.atoms.len(), 3);
        assert_eq!(s.anchors[&2], rational::frac(1, 2));
        assert_eq!(s.edges[0].map.slope, rational::frac(1, 2));
        assert_eq!(s.atoms[2].at, Some(rational::int(1)));
    }

    #[test]
    fn rejects_zero_denominator() {
        let doc = PRDM_LIKE.replace("\"1/2\", \"intercept\": \"1/2\"", "\"1/0\", \"intercept\": \"1/2\"");
        let err = parse_spec(&doc).unwrap_err();
        assert!(matches!(err, Error::ZeroDenominator(_)), "{err}");
        assert!(err.to_string().contains("zero denominator"));
    }

    #[test]
    fn rejects_empty_edges_and_duplicates() {
        let doc = r#"{"backend":"interval","atoms":[{"id":1,"kind":"point","at":"0"}],"edges":[]}"#;
        assert_eq!(parse_spec(doc).unwrap_err().to_string(), "system has no edges");
        let doc = r#"{"atoms":[{"id":1,"kind":"point","at":"0"},{"id":1,"kind":"point","at":"1"}],
                      "edges":[{"id":"a","from":1,"map":{"slope":"0","intercept":"0"},"prob":{"slope":"0","intercept":"1"}}]}"#;
        assert!(matches!(parse_spec(doc), Err(Error::DuplicateAtom(1))));
    }

    #[test]
    fn rejects_unknown_backend() {
        let doc = r#"{"backend":"manifold","atoms":[]}"#;
        assert!(matches!(parse_spec(doc), Err(Error::UnknownBackend(b)) if b == "manifold"));
    }

    #[test]
    fn round_trips_through_json() {
        let spec = parse_spec(PRDM_LIKE).unwrap();
        let again = parse_spec(&spec.to_json().to_string()).unwrap();
        assert_eq!(spec, again);
    }
}
