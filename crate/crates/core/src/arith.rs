//! Exact scalar arithmetic and multi-index combinatorics.
//!
//! Scalars are sparse rational combinations of monomials in central
//! parameters drawn from a graded-commutative parameter ring: a parameter of
//! odd cohomological degree squares to zero and anticommutes with other odd
//! objects. Every other module builds on the two types here: [`MultiIndex`]
//! for exponent bookkeeping and [`Scalar`] for coefficients.

use num::{BigInt, BigRational, One, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

pub type Rational = BigRational;

/// Mod-2 parity of a graded object.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum Parity {
    #[default]
    Even,
    Odd,
}

impl Parity {
    pub fn of_int(d: i64) -> Parity {
        if d.rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn is_odd(self) -> bool {
        self == Parity::Odd
    }

    pub fn xor(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Sign-mutation sites for the robustness suite.
///
/// The verifier flips exactly one of these at a time and re-runs the identity
/// suites; every flip must be caught by at least one failing check.
pub mod mutate {
    use std::cell::Cell;

    #[derive(Clone, Copy, PartialEq, Eq, Debug)]
    pub enum SignSite {
        /// Sign produced when two odd objects transpose.
        KoszulOddOdd,
        /// The global sign of the regular half of the Delta distribution.
        DeltaPlus,
        /// The sign convention for omega forms in a negated variable.
        OmegaNegation,
        /// The central coefficient of the one-variable Witt extension.
        Cw1Central,
    }

    thread_local! {
        static ACTIVE: Cell<Option<SignSite>> = const { Cell::new(None) };
    }

    pub fn flipped(site: SignSite) -> bool {
        ACTIVE.with(|a| a.get() == Some(site))
    }

    /// Run `f` with a single sign site flipped on the current thread.
    pub fn with_flipped<T>(site: SignSite, f: impl FnOnce() -> T) -> T {
        ACTIVE.with(|a| a.set(Some(site)));
        let out = f();
        ACTIVE.with(|a| a.set(None));
        out
    }
}

/// The single Koszul-sign authority: the sign incurred when an object of
/// parity `p` moves past an object of parity `q`. Every sign in the crate is
/// produced here or by counting calls to this function.
pub fn koszul_sign(p: Parity, q: Parity) -> i8 {
    let minus = p.is_odd() && q.is_odd();
    let minus = if mutate::flipped(mutate::SignSite::KoszulOddOdd) {
        !minus
    } else {
        minus
    };
    if minus {
        -1
    } else {
        1
    }
}

/// Element of `N^n`: the exponent of a monomial `z^k` or an omega form.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(n: usize) -> MultiIndex {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> MultiIndex {
        let mut v = vec![0; n];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    /// `|k|`: the sum of the entries.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn leq(&self, other: &MultiIndex) -> Result<bool> {
        self.check_len(other)?;
        Ok(self.0.iter().zip(&other.0).all(|(a, b)| a <= b))
    }

    pub fn add(&self, other: &MultiIndex) -> Result<MultiIndex> {
        self.check_len(other)?;
        Ok(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    /// Componentwise difference, absent when any component would go negative.
    pub fn sub_checked(&self, other: &MultiIndex) -> Result<Option<MultiIndex>> {
        self.check_len(other)?;
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            if a < b {
                return Ok(None);
            }
            out.push(a - b);
        }
        Ok(Some(MultiIndex(out)))
    }

    fn check_len(&self, other: &MultiIndex) -> Result<()> {
        if self.0.len() != other.0.len() {
            return Err(Error::DimensionMismatch(self.0.len(), other.0.len()));
        }
        Ok(())
    }

    /// Order used for mode sorting: entries compared from the last component.
    pub fn rev_lex_cmp(&self, other: &MultiIndex) -> std::cmp::Ordering {
        self.0.iter().rev().cmp(other.0.iter().rev())
    }

    /// All multi-indices of length `n` with total degree exactly `d`.
    pub fn all_exact(n: usize, d: u32) -> Vec<MultiIndex> {
        fn rec(cur: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<MultiIndex>) {
            if pos + 1 == cur.len() {
                cur[pos] = left;
                out.push(MultiIndex(cur.clone()));
                cur[pos] = 0;
                return;
            }
            for v in 0..=left {
                cur[pos] = v;
                rec(cur, pos + 1, left - v, out);
            }
            cur[pos] = 0;
        }
        let mut out = Vec::new();
        if n == 0 {
            if d == 0 {
                out.push(MultiIndex(vec![]));
            }
            return out;
        }
        rec(&mut vec![0; n], 0, d, &mut out);
        out
    }

    /// All multi-indices of length `n` with total degree at most `bound`,
    /// in graded order.
    pub fn all_bounded(n: usize, bound: u32) -> Vec<MultiIndex> {
        (0..=bound).flat_map(|d| Self::all_exact(n, d)).collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "(")?;
            for (i, v) in self.0.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, ")")
        }
    }
}

/// Single binomial coefficient, exact.
pub fn binom_u32(n: u32, r: u32) -> BigInt {
    if r > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for i in 1..=r.min(n - r) {
        acc = acc * BigInt::from(n - r.min(n - r) + i) / BigInt::from(i);
    }
    acc
}

/// Componentwise product of binomial coefficients; zero when `j` is not
/// bounded by `k`.
pub fn mi_binom(k: &MultiIndex, j: &MultiIndex) -> Result<BigInt> {
    if k.len() != j.len() {
        return Err(Error::DimensionMismatch(k.len(), j.len()));
    }
    let mut acc = BigInt::one();
    for (a, b) in k.0.iter().zip(&j.0) {
        if b > a {
            return Ok(BigInt::zero());
        }
        acc *= binom_u32(*a, *b);
    }
    Ok(acc)
}

pub fn mi_binom_rat(k: &MultiIndex, j: &MultiIndex) -> Result<Rational> {
    Ok(Rational::from_integer(mi_binom(k, j)?))
}

/// Declaration of central parameters with cohomological degrees.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug, Default)]
pub struct ParamRing {
    params: Vec<(String, i64)>,
}

impl ParamRing {
    pub fn new(params: Vec<(String, i64)>) -> Result<ParamRing> {
        let mut seen = std::collections::BTreeSet::new();
        for (name, _) in &params {
            if !seen.insert(name.clone()) {
                return Err(Error::Invalid(format!("duplicate parameter `{name}`")));
            }
        }
        Ok(ParamRing { params })
    }

    pub fn trivial() -> Arc<ParamRing> {
        Arc::new(ParamRing { params: vec![] })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|(n, _)| n == name)
    }

    pub fn name(&self, i: usize) -> &str {
        &self.params[i].0
    }

    pub fn degree(&self, i: usize) -> i64 {
        self.params[i].1
    }

    pub fn params(&self) -> &[(String, i64)] {
        &self.params
    }
}

/// Exponent vector of a parameter monomial.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct ParamMono(pub Vec<u32>);

impl ParamMono {
    fn one(ring: &ParamRing) -> ParamMono {
        ParamMono(vec![0; ring.len()])
    }

    fn degree(&self, ring: &ParamRing) -> i64 {
        self.0
            .iter()
            .enumerate()
            .map(|(i, &e)| ring.degree(i) * e as i64)
            .sum()
    }

    fn parity(&self, ring: &ParamRing) -> Parity {
        Parity::of_int(self.degree(ring))
    }
}

/// Sparse element of the parameter ring: a rational combination of parameter
/// monomials. No zero coefficients are stored; an odd-degree parameter never
/// appears with exponent above one.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Scalar {
    ring: Arc<ParamRing>,
    terms: BTreeMap<ParamMono, Rational>,
}

impl Scalar {
    pub fn zero(ring: Arc<ParamRing>) -> Scalar {
        Scalar {
            ring,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(ring: Arc<ParamRing>) -> Scalar {
        Scalar::from_rational(ring, Rational::one())
    }

    pub fn from_rational(ring: Arc<ParamRing>, r: Rational) -> Scalar {
        let mut terms = BTreeMap::new();
        if !r.is_zero() {
            terms.insert(ParamMono::one(&ring), r);
        }
        Scalar { ring, terms }
    }

    pub fn from_int(ring: Arc<ParamRing>, v: i64) -> Scalar {
        Scalar::from_rational(ring, Rational::from_integer(BigInt::from(v)))
    }

    /// A single parameter monomial with the given coefficient.
    pub fn monomial(ring: Arc<ParamRing>, mono: ParamMono, c: Rational) -> Scalar {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(mono, c);
        }
        Scalar { ring, terms }
    }

    /// The parameter with the given index, as a scalar.
    pub fn param(ring: Arc<ParamRing>, idx: usize) -> Scalar {
        let mut exps = vec![0; ring.len()];
        exps[idx] = 1;
        let mut terms = BTreeMap::new();
        terms.insert(ParamMono(exps), Rational::one());
        Scalar { ring, terms }
    }

    pub fn ring(&self) -> &Arc<ParamRing> {
        &self.ring
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ParamMono, &Rational)> {
        self.terms.iter()
    }

    /// The rational coefficient of the empty parameter monomial.
    pub fn constant_part(&self) -> Rational {
        self.terms
            .get(&ParamMono::one(&self.ring))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn is_rational(&self) -> bool {
        self.terms.keys().all(|m| m.0.iter().all(|&e| e == 0))
    }

    fn assert_ring(&self, other: &Scalar) {
        assert!(
            Arc::ptr_eq(&self.ring, &other.ring) || self.ring == other.ring,
            "scalar arithmetic across distinct parameter rings"
        );
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        self.assert_ring(other);
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            let entry = terms.entry(m.clone()).or_insert_with(Rational::zero);
            *entry += c;
            if entry.is_zero() {
                terms.remove(m);
            }
        }
        Scalar {
            ring: self.ring.clone(),
            terms,
        }
    }

    pub fn neg(&self) -> Scalar {
        Scalar {
            ring: self.ring.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        self.add(&other.neg())
    }

    pub fn scale(&self, r: &Rational) -> Scalar {
        if r.is_zero() {
            return Scalar::zero(self.ring.clone());
        }
        Scalar {
            ring: self.ring.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * r)).collect(),
        }
    }

    /// Graded-commutative product. Odd-degree parameters square to zero; the
    /// Koszul sign comes from sorting the right factor's parameters past the
    /// left factor's.
    pub fn mul(&self, other: &Scalar) -> Scalar {
        self.assert_ring(other);
        let ring = &self.ring;
        let mut terms: BTreeMap<ParamMono, Rational> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                // odd square check and exponent merge
                let mut exps = Vec::with_capacity(ring.len());
                let mut dead = false;
                for i in 0..ring.len() {
                    let e = ma.0[i] + mb.0[i];
                    if Parity::of_int(ring.degree(i)).is_odd() && e > 1 {
                        dead = true;
                        break;
                    }
                    exps.push(e);
                }
                if dead {
                    continue;
                }
                // transposition count: each unit of mb at position i moves
                // past each odd unit of ma at position j > i
                let mut sign = 1i8;
                for i in 0..ring.len() {
                    if mb.0[i] == 0 || !Parity::of_int(ring.degree(i)).is_odd() {
                        continue;
                    }
                    for j in (i + 1)..ring.len() {
                        if ma.0[j] == 0 || !Parity::of_int(ring.degree(j)).is_odd() {
                            continue;
                        }
                        for _ in 0..(mb.0[i] * ma.0[j]) {
                            sign *= koszul_sign(Parity::Odd, Parity::Odd);
                        }
                    }
                }
                let c = ca * cb * Rational::from_integer(BigInt::from(sign));
                let key = ParamMono(exps);
                let entry = terms.entry(key.clone()).or_insert_with(Rational::zero);
                *entry += c;
                if entry.is_zero() {
                    terms.remove(&key);
                }
            }
        }
        Scalar {
            ring: self.ring.clone(),
            terms,
        }
    }

    /// Negate the components of odd parity. This is the Koszul sign picked up
    /// when the whole scalar crosses a single odd symbol.
    pub fn twist(&self) -> Scalar {
        Scalar {
            ring: self.ring.clone(),
            terms: self
                .terms
                .iter()
                .map(|(m, c)| {
                    let c = if m.parity(&self.ring).is_odd() { -c } else { c.clone() };
                    (m.clone(), c)
                })
                .collect(),
        }
    }

    /// Parity of a homogeneous scalar; `None` when components mix parities.
    pub fn parity(&self) -> Option<Parity> {
        let mut p = None;
        for m in self.terms.keys() {
            let q = m.parity(&self.ring);
            match p {
                None => p = Some(q),
                Some(r) if r == q => {}
                _ => return None,
            }
        }
        Some(p.unwrap_or(Parity::Even))
    }

    /// Cohomological degree of a homogeneous scalar.
    pub fn degree(&self) -> Option<i64> {
        let mut d = None;
        for m in self.terms.keys() {
            let q = m.degree(&self.ring);
            match d {
                None => d = Some(q),
                Some(r) if r == q => {}
                _ => return None,
            }
        }
        Some(d.unwrap_or(0))
    }
}

impl fmt::Display for Scalar {
    /// `3/2*c^2` style; sums joined with ` + `.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let mono: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| {
                    if e == 1 {
                        self.ring.name(i).to_string()
                    } else {
                        format!("{}^{}", self.ring.name(i), e)
                    }
                })
                .collect();
            if mono.is_empty() {
                write!(f, "{c}")?;
            } else if c.is_one() {
                write!(f, "{}", mono.join("*"))?;
            } else if (-c).is_one() {
                write!(f, "-{}", mono.join("*"))?;
            } else {
                write!(f, "{}*{}", c, mono.join("*"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn binomials() {
        assert_eq!(mi_binom(&mi(&[3, 1]), &mi(&[2, 1])).unwrap(), BigInt::from(3));
        assert_eq!(mi_binom(&mi(&[5, 5]), &mi(&[0, 0])).unwrap(), BigInt::from(1));
        assert_eq!(mi_binom(&mi(&[1, 0]), &mi(&[2, 0])).unwrap(), BigInt::from(0));
        assert!(mi_binom(&mi(&[1]), &mi(&[1, 0])).is_err());
    }

    #[test]
    fn totals_and_order() {
        assert_eq!(mi(&[0, 0, 0]).total(), 0);
        assert_eq!(mi(&[2, 3]).total(), 5);
        assert_eq!(mi(&[1, 1, 1]).total(), 3);
        assert!(mi(&[1, 2]).leq(&mi(&[2, 2])).unwrap());
        assert_eq!(mi(&[2, 1]).sub_checked(&mi(&[1, 2])).unwrap(), None);
        assert_eq!(mi(&[1, 0]).add(&mi(&[0, 3])).unwrap(), mi(&[1, 3]));
    }

    #[test]
    fn vandermonde_cross_check() {
        // binom(k,j) from the factorial route agrees componentwise
        for k in 0..7u32 {
            for j in 0..=k {
                let fact = |n: u32| (1..=n).map(BigInt::from).product::<BigInt>().max(BigInt::one());
                let expect = fact(k) / (fact(j) * fact(k - j));
                assert_eq!(binom_u32(k, j), expect, "C({k},{j})");
            }
        }
        // Vandermonde: sum_j C(m,j) C(n,k-j) = C(m+n,k)
        for m in 0..5u32 {
            for n in 0..5u32 {
                for k in 0..=(m + n) {
                    let lhs: BigInt = (0..=k).map(|j| binom_u32(m, j) * binom_u32(n, k - j)).sum();
                    assert_eq!(lhs, binom_u32(m + n, k));
                }
            }
        }
    }

    #[test]
    fn scalar_graded_commutativity() {
        let ring = Arc::new(
            ParamRing::new(vec![("c".into(), 1), ("q".into(), 1), ("t".into(), 2)]).unwrap(),
        );
        let c = Scalar::param(ring.clone(), 0);
        let q = Scalar::param(ring.clone(), 1);
        let t = Scalar::param(ring.clone(), 2);

        // odd square is zero
        assert!(c.mul(&c).is_zero());
        // even square is not
        assert!(!t.mul(&t).is_zero());
        // odd-odd anticommute, odd-even commute
        assert_eq!(c.mul(&q), q.mul(&c).neg());
        assert_eq!(c.mul(&t), t.mul(&c));
        // rationals
        let half = Scalar::from_rational(ring.clone(), Rational::new(BigInt::from(1), BigInt::from(2)));
        let two_thirds =
            Scalar::from_rational(ring.clone(), Rational::new(BigInt::from(2), BigInt::from(3)));
        let third = Scalar::from_rational(ring, Rational::new(BigInt::from(1), BigInt::from(3)));
        assert_eq!(half.mul(&two_thirds), third);
    }

    #[test]
    fn scalar_distributes_and_associates() {
        let ring = Arc::new(ParamRing::new(vec![("c".into(), 1), ("t".into(), 2)]).unwrap());
        let c = Scalar::param(ring.clone(), 0);
        let t = Scalar::param(ring.clone(), 1);
        let one = Scalar::one(ring.clone());
        let a = one.add(&c);
        let b = t.add(&c.scale(&Rational::from_integer(BigInt::from(3))));
        let d = t.mul(&t).add(&one);
        assert_eq!(a.mul(&b.add(&d)), a.mul(&b).add(&a.mul(&d)));
        assert_eq!(a.mul(&b).mul(&d), a.mul(&b.mul(&d)));
    }

    #[test]
    fn twist_negates_odd_components() {
        let ring = Arc::new(ParamRing::new(vec![("c".into(), 1)]).unwrap());
        let s = Scalar::one(ring.clone()).add(&Scalar::param(ring, 0));
        let t = s.twist();
        assert_eq!(t.constant_part(), Rational::one());
        assert_eq!(t.add(&s.neg()).constant_part(), Rational::zero());
        assert_eq!(s.parity(), None);
        assert_eq!(Scalar::param(t.ring().clone(), 0).parity(), Some(Parity::Odd));
    }
}
