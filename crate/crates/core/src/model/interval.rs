//! Exact intervals of the real line and affine maps acting on them.

use std::cmp::Ordering;
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::rational::{self, Rational};

/// `slope·x + intercept`, used both for edge maps and edge probabilities.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Affine {
    pub slope: Rational,
    pub intercept: Rational,
}

impl Affine {
    pub fn new(slope: Rational, intercept: Rational) -> Self {
        Affine { slope, intercept }
    }

    pub fn constant(c: Rational) -> Self {
        Affine::new(Rational::zero(), c)
    }

    pub fn identity() -> Self {
        Affine::new(Rational::one(), Rational::zero())
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        &self.slope * x + &self.intercept
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        rational::to_f64(&self.slope) * x + rational::to_f64(&self.intercept)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Affine) -> Affine {
        Affine::new(
            &self.slope * &inner.slope,
            &self.slope * &inner.intercept + &self.intercept,
        )
    }

    /// The unique fixed point, if the slope is not 1.
    pub fn fixed_point(&self) -> Option<Rational> {
        let denom = Rational::one() - &self.slope;
        (!denom.is_zero()).then(|| &self.intercept / denom)
    }

    pub fn lipschitz(&self) -> Rational {
        self.slope.abs()
    }

    pub fn is_zero(&self) -> bool {
        self.slope.is_zero() && self.intercept.is_zero()
    }

    pub fn add(&self, other: &Affine) -> Affine {
        Affine::new(&self.slope + &other.slope, &self.intercept + &other.intercept)
    }

    pub fn scale(&self, k: &Rational) -> Affine {
        Affine::new(&self.slope * k, &self.intercept * k)
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.slope.is_zero() {
            return write!(f, "{}", self.intercept);
        }
        if self.intercept.is_zero() {
            return write!(f, "{}·x", self.slope);
        }
        if self.intercept.is_negative() {
            write!(f, "{}·x - {}", self.slope, -&self.intercept)
        } else {
            write!(f, "{}·x + {}", self.slope, self.intercept)
        }
    }
}

/// A non-empty interval; `None` endpoints are infinite (and never closed).
/// A singleton is the closed interval `[p, p]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: Option<Rational>,
    pub hi: Option<Rational>,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

/// Position of a left endpoint, ordered along the line: `[v` sorts before `(v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct LeftEdge<'a>(pub Option<&'a Rational>, pub bool);

impl Ord for LeftEdge<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.0, other.0) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(a), Some(b)) => a.cmp(b).then_with(|| other.1.cmp(&self.1)),
        }
    }
}

impl PartialOrd for LeftEdge<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Interval {
    pub fn point(p: Rational) -> Self {
        Interval {
            lo: Some(p.clone()),
            hi: Some(p),
            lo_closed: true,
            hi_closed: true,
        }
    }

    /// Builds an interval, returning `None` if it would be empty.
    pub fn new(
        lo: Option<Rational>,
        hi: Option<Rational>,
        lo_closed: bool,
        hi_closed: bool,
    ) -> Option<Self> {
        let lo_closed = lo_closed && lo.is_some();
        let hi_closed = hi_closed && hi.is_some();
        if let (Some(a), Some(b)) = (&lo, &hi) {
            match a.cmp(b) {
                Ordering::Greater => return None,
                Ordering::Equal if !(lo_closed && hi_closed) => return None,
                _ => {}
            }
        }
        Some(Interval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        })
    }

    pub fn open(lo: Rational, hi: Rational) -> Self {
        Interval::new(Some(lo), Some(hi), false, false).expect("lo < hi")
    }

    pub fn closed(lo: Rational, hi: Rational) -> Self {
        Interval::new(Some(lo), Some(hi), true, true).expect("lo <= hi")
    }

    pub fn real_line() -> Self {
        Interval {
            lo: None,
            hi: None,
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn is_point(&self) -> bool {
        matches!((&self.lo, &self.hi), (Some(a), Some(b)) if a == b)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }

    pub(crate) fn left_edge(&self) -> LeftEdge<'_> {
        LeftEdge(self.lo.as_ref(), self.lo_closed)
    }

    pub fn contains(&self, x: &Rational) -> bool {
        let above = match &self.lo {
            None => true,
            Some(lo) => x > lo || (self.lo_closed && x == lo),
        };
        let below = match &self.hi {
            None => true,
            Some(hi) => x < hi || (self.hi_closed && x == hi),
        };
        above && below
    }

    pub fn closure_contains(&self, x: &Rational) -> bool {
        self.lo.as_ref().is_none_or(|lo| x >= lo) && self.hi.as_ref().is_none_or(|hi| x <= hi)
    }

    /// Finite endpoints of the closure (one entry for a point).
    pub fn closure_endpoints(&self) -> Vec<Rational> {
        let mut out: Vec<Rational> = self.lo.iter().chain(self.hi.iter()).cloned().collect();
        out.dedup();
        out
    }

    /// `closure \ self`: the finite endpoints the interval does not contain.
    pub fn boundary(&self) -> Vec<Rational> {
        let mut out = Vec::new();
        if let Some(lo) = &self.lo {
            if !self.lo_closed {
                out.push(lo.clone());
            }
        }
        if let Some(hi) = &self.hi {
            if !self.hi_closed {
                out.push(hi.clone());
            }
        }
        out
    }

    /// Whether the set is closed in the real line.
    pub fn is_closed(&self) -> bool {
        self.boundary().is_empty()
    }

    pub fn midpoint(&self) -> Option<Rational> {
        match (&self.lo, &self.hi) {
            (Some(a), Some(b)) => Some((a + b) / rational::int(2)),
            _ => None,
        }
    }

    /// A canonical interior-ish point: the point itself, the midpoint, or for
    /// half-lines the finite end (if closed) or one unit inside it.
    pub fn default_anchor(&self) -> Rational {
        if let Some(m) = self.midpoint() {
            return m;
        }
        match (&self.lo, &self.hi) {
            (Some(lo), None) => {
                if self.lo_closed {
                    lo.clone()
                } else {
                    lo + Rational::one()
                }
            }
            (None, Some(hi)) => {
                if self.hi_closed {
                    hi.clone()
                } else {
                    hi - Rational::one()
                }
            }
            _ => Rational::zero(),
        }
    }

    /// Exact image under an affine map.
    pub fn image(&self, map: &Affine) -> Interval {
        if map.slope.is_zero() {
            return Interval::point(map.intercept.clone());
        }
        let lo = self.lo.as_ref().map(|x| map.eval(x));
        let hi = self.hi.as_ref().map(|x| map.eval(x));
        if map.slope.is_positive() {
            Interval {
                lo,
                hi,
                lo_closed: self.lo_closed,
                hi_closed: self.hi_closed,
            }
        } else {
            Interval {
                lo: hi,
                hi: lo,
                lo_closed: self.hi_closed,
                hi_closed: self.lo_closed,
            }
        }
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        let lo_ok = match (&self.lo, &other.lo) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => a > b || (a == b && (other.lo_closed || !self.lo_closed)),
        };
        let hi_ok = match (&self.hi, &other.hi) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => a < b || (a == b && (other.hi_closed || !self.hi_closed)),
        };
        lo_ok && hi_ok
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let (lo, lo_closed) = match (&self.lo, &other.lo) {
            (None, _) => (other.lo.clone(), other.lo_closed),
            (_, None) => (self.lo.clone(), self.lo_closed),
            (Some(a), Some(b)) => match a.cmp(b) {
                Ordering::Greater => (Some(a.clone()), self.lo_closed),
                Ordering::Less => (Some(b.clone()), other.lo_closed),
                Ordering::Equal => (Some(a.clone()), self.lo_closed && other.lo_closed),
            },
        };
        let (hi, hi_closed) = match (&self.hi, &other.hi) {
            (None, _) => (other.hi.clone(), other.hi_closed),
            (_, None) => (self.hi.clone(), self.hi_closed),
            (Some(a), Some(b)) => match a.cmp(b) {
                Ordering::Less => (Some(a.clone()), self.hi_closed),
                Ordering::Greater => (Some(b.clone()), other.hi_closed),
                Ordering::Equal => (Some(a.clone()), self.hi_closed && other.hi_closed),
            },
        };
        Interval::new(lo, hi, lo_closed, hi_closed)
    }

    /// Sup and inf of an affine function over the closure, where finite.
    /// Returns `(inf, sup)`; `None` means unbounded in that direction.
    pub fn affine_range(&self, f: &Affine) -> (Option<Rational>, Option<Rational>) {
        if f.slope.is_zero() {
            return (Some(f.intercept.clone()), Some(f.intercept.clone()));
        }
        let at_lo = self.lo.as_ref().map(|x| f.eval(x));
        let at_hi = self.hi.as_ref().map(|x| f.eval(x));
        if f.slope.is_positive() {
            (at_lo, at_hi)
        } else {
            (at_hi, at_lo)
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            return write!(f, "{{{}}}", self.lo.as_ref().unwrap());
        }
        let open = if self.lo_closed { '[' } else { '(' };
        let close = if self.hi_closed { ']' } else { ')' };
        let lo = self
            .lo
            .as_ref()
            .map_or_else(|| "-inf".to_string(), |x| x.to_string());
        let hi = self
            .hi
            .as_ref()
            .map_or_else(|| "inf".to_string(), |x| x.to_string());
        write!(f, "{open}{lo}, {hi}{close}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, int};

    fn half_open(lo: Rational, hi: Rational) -> Interval {
        Interval::new(Some(lo), Some(hi), true, false).unwrap()
    }

    #[test]
    fn containment_respects_endpoint_conventions() {
        let i = half_open(int(0), frac(1, 2));
        assert!(i.contains(&int(0)));
        assert!(!i.contains(&frac(1, 2)));
        assert!(i.closure_contains(&frac(1, 2)));
        assert_eq!(i.boundary(), vec![frac(1, 2)]);
        assert!(Interval::point(int(1)).boundary().is_empty());
    }

    #[test]
    fn image_under_decreasing_map_swaps_flags() {
        let i = half_open(int(0), int(1));
        let img = i.image(&Affine::new(int(-1), int(1)));
        assert_eq!(img, Interval::new(Some(int(0)), Some(int(1)), false, true).unwrap());
        let halved = Interval::open(int(0), int(1)).image(&Affine::new(frac(1, 2), int(0)));
        assert_eq!(halved, Interval::open(int(0), frac(1, 2)));
    }

    #[test]
    fn subset_and_intersection() {
        let a = Interval::open(int(0), int(1));
        let b = half_open(int(0), frac(1, 2));
        assert!(!b.is_subset_of(&a));
        assert!(Interval::open(int(0), frac(1, 2)).is_subset_of(&a));
        assert!(a.is_subset_of(&Interval::real_line()));
        let meet = a.intersect(&b).unwrap();
        assert_eq!(meet, Interval::open(int(0), frac(1, 2)));
        assert!(Interval::point(int(1)).intersect(&a).is_none());
    }

    #[test]
    fn empty_intervals_are_rejected() {
        assert!(Interval::new(Some(int(1)), Some(int(1)), true, false).is_none());
        assert!(Interval::new(Some(int(2)), Some(int(1)), true, true).is_none());
    }

    #[test]
    fn affine_algebra() {
        let wb = Affine::new(frac(1, 2), int(0));
        let wc = Affine::new(frac(1, 2), frac(1, 2));
        let both = wc.compose(&wb);
        assert_eq!(both, Affine::new(frac(1, 4), frac(1, 2)));
        assert_eq!(both.fixed_point(), Some(frac(2, 3)));
        assert_eq!(Affine::identity().fixed_point(), None);
    }

    #[test]
    fn left_edges_order_closed_first() {
        let a = int(0);
        assert!(LeftEdge(Some(&a), true) < LeftEdge(Some(&a), false));
        assert!(LeftEdge(None, false) < LeftEdge(Some(&a), true));
    }
}
