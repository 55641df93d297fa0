//! Truncated omega-form series rings in one or more variable groups.
//!
//! A series in the variables `z = (z_1..z_n)` is a sparse sum of terms
//! `z^k * c` and `Om_z^k * c`, with coefficients written to the right of the
//! basis symbols. Products obey
//!
//! ```text
//! z^j * Om^k = Om^{k-j}   (j <= k, else 0)
//! Om^j * Om^k = 0
//! ```
//!
//! within one variable group, while omega forms of distinct groups commute up
//! to the Koszul sign `(-1)^N` and coefficients of degree `r` cross an omega
//! form at the cost of `(-1)^{rN}`. The regular (power) part of every series
//! is truncated by total degree; the singular (omega) part is never
//! truncated, so every identity involving only singular data is exact.

use num::{BigInt, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::arith::{koszul_sign, mi_binom, mutate, MultiIndex, ParamRing, Parity, Rational, Scalar};
use crate::{Error, Result};

/// The pair `(n, N)`: number of variables per group and the cohomological
/// degree carried by each omega form.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Ambient {
    pub vars: usize,
    pub omega_degree: i64,
}

impl Ambient {
    pub fn new(vars: usize, omega_degree: i64) -> Ambient {
        Ambient { vars, omega_degree }
    }

    pub fn omega_parity(&self) -> Parity {
        Parity::of_int(self.omega_degree)
    }

    fn check(&self, other: &Ambient) -> Result<()> {
        if self != other {
            return Err(Error::AmbientMismatch(
                self.vars,
                self.omega_degree,
                other.vars,
                other.omega_degree,
            ));
        }
        Ok(())
    }
}

/// Basis symbol of one variable group: a power `z^k` or an omega form `Om^k`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum BasisSym {
    Pow(MultiIndex),
    Om(MultiIndex),
}

impl BasisSym {
    pub fn parity(&self, ambient: &Ambient) -> Parity {
        match self {
            BasisSym::Pow(_) => Parity::Even,
            BasisSym::Om(_) => ambient.omega_parity(),
        }
    }

    pub fn is_om(&self) -> bool {
        matches!(self, BasisSym::Om(_))
    }

    pub fn index(&self) -> &MultiIndex {
        match self {
            BasisSym::Pow(k) | BasisSym::Om(k) => k,
        }
    }

    pub fn unit(n: usize) -> BasisSym {
        BasisSym::Pow(MultiIndex::zero(n))
    }

    /// In-group product. `None` means the product vanishes or exceeds the
    /// power truncation.
    fn mul(&self, other: &BasisSym, trunc: u32) -> Option<BasisSym> {
        match (self, other) {
            (BasisSym::Pow(j), BasisSym::Pow(k)) => {
                let sum = j.add(k).expect("ambient-checked");
                (sum.total() <= trunc).then_some(BasisSym::Pow(sum))
            }
            (BasisSym::Pow(j), BasisSym::Om(k)) | (BasisSym::Om(k), BasisSym::Pow(j)) => k
                .sub_checked(j)
                .expect("ambient-checked")
                .map(BasisSym::Om),
            (BasisSym::Om(_), BasisSym::Om(_)) => None,
        }
    }

    pub fn render(&self, var: &str) -> String {
        match self {
            BasisSym::Pow(k) if k.is_zero() => "1".to_string(),
            BasisSym::Pow(k) => format!("{var}^{k}"),
            BasisSym::Om(k) => format!("Om_{var}^{k}"),
        }
    }
}

/// Coefficient spaces for series: exact addition, rational scaling, and the
/// twist picked up when the whole coefficient crosses one odd symbol.
pub trait Coeff: Clone + PartialEq + Ord + fmt::Debug {
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn scale(&self, r: &Rational) -> Self;
    /// Negate the odd-parity homogeneous components.
    fn twist(&self) -> Self;
}

/// Left-multiplication of coefficients, e.g. `Scalar * State -> State`.
pub trait CoeffMul<R: Coeff>: Coeff {
    type Out: Coeff;
    fn cmul(&self, rhs: &R) -> Self::Out;
}

impl Coeff for Scalar {
    fn is_zero(&self) -> bool {
        Scalar::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        Scalar::add(self, other)
    }
    fn neg(&self) -> Self {
        Scalar::neg(self)
    }
    fn scale(&self, r: &Rational) -> Self {
        Scalar::scale(self, r)
    }
    fn twist(&self) -> Self {
        // routed through the Koszul authority so sign mutations reach it
        let mut out = Scalar::zero(self.ring().clone());
        for (m, c) in self.terms() {
            let mono = Scalar::monomial(self.ring().clone(), m.clone(), c.clone());
            let p = mono.parity().expect("single monomial is homogeneous");
            let sign = koszul_sign(p, Parity::Odd);
            out = out.add(&mono.scale(&Rational::from_integer(BigInt::from(sign))));
        }
        out
    }
}

impl CoeffMul<Scalar> for Scalar {
    type Out = Scalar;
    fn cmul(&self, rhs: &Scalar) -> Scalar {
        self.mul(rhs)
    }
}

/// Accumulate into a sparse map, dropping zero entries.
pub(crate) fn acc<K: Ord, C: Coeff>(map: &mut BTreeMap<K, C>, key: K, val: C) {
    if val.is_zero() {
        return;
    }
    match map.entry(key) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(val);
        }
        std::collections::btree_map::Entry::Occupied(mut e) => {
            let sum = e.get().add(&val);
            if sum.is_zero() {
                e.remove();
            } else {
                *e.get_mut() = sum;
            }
        }
    }
}

/// Series in one variable group.
///
/// Invariants: power keys have total degree at most `trunc`; omega keys are
/// finitely many and exact; no zero coefficients are stored.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct OmegaSeries<C: Coeff> {
    pub ambient: Ambient,
    pub var: String,
    pub trunc: u32,
    pub terms: BTreeMap<BasisSym, C>,
}

impl<C: Coeff> OmegaSeries<C> {
    pub fn zero(ambient: Ambient, var: &str, trunc: u32) -> OmegaSeries<C> {
        OmegaSeries {
            ambient,
            var: var.to_string(),
            trunc,
            terms: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, sym: BasisSym, c: C) {
        if let BasisSym::Pow(k) = &sym {
            if k.total() > self.trunc {
                return;
            }
        }
        acc(&mut self.terms, sym, c);
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, sym: &BasisSym) -> Option<&C> {
        self.terms.get(sym)
    }

    pub fn add(&self, other: &OmegaSeries<C>) -> OmegaSeries<C> {
        self.ambient.check(&other.ambient).expect("series ambient");
        let trunc = self.trunc.min(other.trunc);
        let mut out = OmegaSeries::zero(self.ambient, &self.var, trunc);
        for (s, c) in self.terms.iter().chain(other.terms.iter()) {
            out.insert(s.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> OmegaSeries<C> {
        self.map(|c| c.neg())
    }

    pub fn scale(&self, r: &Rational) -> OmegaSeries<C> {
        if r.is_zero() {
            return OmegaSeries::zero(self.ambient, &self.var, self.trunc);
        }
        self.map(|c| c.scale(r))
    }

    pub fn map<D: Coeff>(&self, f: impl Fn(&C) -> D) -> OmegaSeries<D> {
        let mut out = OmegaSeries::zero(self.ambient, &self.var, self.trunc);
        for (s, c) in &self.terms {
            out.insert(s.clone(), f(c));
        }
        out
    }

    /// Split into regular (power) and singular (omega) parts.
    pub fn split(&self) -> (OmegaSeries<C>, OmegaSeries<C>) {
        let mut plus = OmegaSeries::zero(self.ambient, &self.var, self.trunc);
        let mut minus = OmegaSeries::zero(self.ambient, &self.var, self.trunc);
        for (s, c) in &self.terms {
            match s {
                BasisSym::Pow(_) => plus.insert(s.clone(), c.clone()),
                BasisSym::Om(_) => minus.insert(s.clone(), c.clone()),
            }
        }
        (plus, minus)
    }

    /// Hasse derivative. The power truncation drops by `|j|`.
    pub fn hasse(&self, j: &MultiIndex) -> OmegaSeries<C> {
        let mut out = OmegaSeries::zero(
            self.ambient,
            &self.var,
            self.trunc.saturating_sub(j.total()),
        );
        for (s, c) in &self.terms {
            if let Some((sym, coeff)) = hasse_sym(s, j, c) {
                out.insert(sym, coeff);
            }
        }
        out
    }

    /// Substitute `z -> -z`.
    pub fn negate_var(&self) -> OmegaSeries<C> {
        let mut out = OmegaSeries::zero(self.ambient, &self.var, self.trunc);
        let nd = self.ambient.omega_degree;
        for (s, c) in &self.terms {
            let sign = match s {
                BasisSym::Pow(k) => pow_neg_sign(k),
                BasisSym::Om(k) => om_neg_sign(k, nd),
            };
            let c = if sign < 0 { c.neg() } else { c.clone() };
            out.insert(s.clone(), c);
        }
        out
    }

    /// Multiply by a scalar written on the left of the series, crossing the
    /// basis symbols.
    pub fn scale_left(&self, s: &Scalar) -> OmegaSeries<C>
    where
        Scalar: CoeffMul<C, Out = C>,
    {
        let odd_n = self.ambient.omega_parity().is_odd();
        let mut out = OmegaSeries::zero(self.ambient, &self.var, self.trunc);
        for (sym, c) in &self.terms {
            let s_eff = if odd_n && sym.is_om() { s.twist() } else { s.clone() };
            out.insert(sym.clone(), s_eff.cmul(c));
        }
        out
    }

    /// Lift into a multivariable frame, placing the symbols in `group`.
    pub fn lift(&self, frame: &Frame, group: usize) -> MultiVarSeries<C> {
        let groups: Vec<&str> = frame.groups.iter().map(|s| s.as_str()).collect();
        let mut out = MultiVarSeries::zero(frame.ambient, &groups, &frame.truncs);
        for (s, c) in &self.terms {
            let mut syms = frame.unit_syms();
            syms[group] = s.clone();
            out.insert(syms, c.clone());
        }
        out
    }
}

impl<C: Coeff> Coeff for OmegaSeries<C> {
    fn is_zero(&self) -> bool {
        OmegaSeries::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        OmegaSeries::add(self, other)
    }
    fn neg(&self) -> Self {
        OmegaSeries::neg(self)
    }
    fn scale(&self, r: &Rational) -> Self {
        OmegaSeries::scale(self, r)
    }
    fn twist(&self) -> Self {
        // a term's parity is symbol parity plus coefficient parity; negating
        // the odd components distributes accordingly
        let mut out = OmegaSeries::zero(self.ambient, &self.var, self.trunc);
        for (sym, c) in &self.terms {
            let c = if sym.parity(&self.ambient).is_odd() {
                c.twist().neg()
            } else {
                c.twist()
            };
            out.insert(sym.clone(), c);
        }
        out
    }
}

pub(crate) fn pow_neg_sign(k: &MultiIndex) -> i8 {
    if k.total() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Sign of `Om_{-z}^m` relative to `Om_z^m`: `(-1)^{|m| + N + 1}`.
pub(crate) fn om_neg_sign(m: &MultiIndex, omega_degree: i64) -> i8 {
    let mut flip = (m.total() as i64 + omega_degree + 1).rem_euclid(2) == 1;
    if mutate::flipped(mutate::SignSite::OmegaNegation) {
        flip = !flip;
    }
    if flip {
        -1
    } else {
        1
    }
}

/// `d^{(j)} z^k = binom(k,j) z^{k-j}`,
/// `d^{(j)} Om^k = (-1)^{|j|} binom(k+j,j) Om^{k+j}`.
fn hasse_sym<C: Coeff>(s: &BasisSym, j: &MultiIndex, c: &C) -> Option<(BasisSym, C)> {
    match s {
        BasisSym::Pow(k) => {
            let b = mi_binom(k, j).expect("length-checked");
            if b.is_zero() {
                return None;
            }
            let tgt = k.sub_checked(j).expect("length-checked")?;
            Some((BasisSym::Pow(tgt), c.scale(&Rational::from_integer(b))))
        }
        BasisSym::Om(k) => {
            let kj = k.add(j).expect("length-checked");
            let mut b = Rational::from_integer(mi_binom(&kj, j).expect("length-checked"));
            if j.total() % 2 == 1 {
                b = -b;
            }
            Some((BasisSym::Om(kj), c.scale(&b)))
        }
    }
}

/// Series in several variable groups, stored in one fixed group order.
///
/// A term is a tuple of basis symbols, one per group, multiplied left to
/// right with the coefficient written last. Omega forms of distinct groups
/// are normalized into the canonical group order at construction time, so
/// equality is a plain map comparison.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct MultiVarSeries<C: Coeff> {
    pub ambient: Ambient,
    pub groups: Vec<String>,
    pub truncs: Vec<u32>,
    pub terms: BTreeMap<Vec<BasisSym>, C>,
}

impl<C: Coeff> MultiVarSeries<C> {
    pub fn zero(ambient: Ambient, groups: &[&str], truncs: &[u32]) -> MultiVarSeries<C> {
        assert_eq!(groups.len(), truncs.len());
        MultiVarSeries {
            ambient,
            groups: groups.iter().map(|s| s.to_string()).collect(),
            truncs: truncs.to_vec(),
            terms: BTreeMap::new(),
        }
    }

    pub fn group_index(&self, name: &str) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g == name)
            .ok_or_else(|| Error::UnknownGroup(name.to_string()))
    }

    pub fn insert(&mut self, syms: Vec<BasisSym>, c: C) {
        debug_assert_eq!(syms.len(), self.groups.len());
        for (g, s) in syms.iter().enumerate() {
            if let BasisSym::Pow(k) = s {
                if k.total() > self.truncs[g] {
                    return;
                }
            }
        }
        acc(&mut self.terms, syms, c);
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &MultiVarSeries<C>) -> MultiVarSeries<C> {
        assert_eq!(self.groups, other.groups, "group mismatch");
        let truncs: Vec<u32> = self
            .truncs
            .iter()
            .zip(&other.truncs)
            .map(|(a, b)| *a.min(b))
            .collect();
        let groups: Vec<&str> = self.groups.iter().map(|s| s.as_str()).collect();
        let mut out = MultiVarSeries::zero(self.ambient, &groups, &truncs);
        for (s, c) in self.terms.iter().chain(other.terms.iter()) {
            out.insert(s.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> MultiVarSeries<C> {
        self.map(|c| c.neg())
    }

    pub fn sub(&self, other: &MultiVarSeries<C>) -> MultiVarSeries<C> {
        self.add(&other.neg())
    }

    pub fn scale(&self, r: &Rational) -> MultiVarSeries<C> {
        if r.is_zero() {
            let groups: Vec<&str> = self.groups.iter().map(|s| s.as_str()).collect();
            return MultiVarSeries::zero(self.ambient, &groups, &self.truncs);
        }
        self.map(|c| c.scale(r))
    }

    pub fn map<D: Coeff>(&self, f: impl Fn(&C) -> D) -> MultiVarSeries<D> {
        let groups: Vec<&str> = self.groups.iter().map(|s| s.as_str()).collect();
        let mut out = MultiVarSeries::zero(self.ambient, &groups, &self.truncs);
        for (s, c) in &self.terms {
            out.insert(s.clone(), f(c));
        }
        out
    }

    /// Hasse derivative in one group. That group's truncation drops.
    pub fn hasse(&self, group: usize, j: &MultiIndex) -> MultiVarSeries<C> {
        let groups: Vec<&str> = self.groups.iter().map(|s| s.as_str()).collect();
        let mut truncs = self.truncs.clone();
        truncs[group] = truncs[group].saturating_sub(j.total());
        let mut out = MultiVarSeries::zero(self.ambient, &groups, &truncs);
        for (syms, c) in &self.terms {
            if let Some((sym, coeff)) = hasse_sym(&syms[group], j, c) {
                let mut syms = syms.clone();
                syms[group] = sym;
                out.insert(syms, coeff);
            }
        }
        out
    }

    /// Substitute `x -> -x` in one group.
    pub fn negate_group(&self, group: usize) -> MultiVarSeries<C> {
        let groups: Vec<&str> = self.groups.iter().map(|s| s.as_str()).collect();
        let mut out = MultiVarSeries::zero(self.ambient, &groups, &self.truncs);
        let nd = self.ambient.omega_degree;
        for (syms, c) in &self.terms {
            let sign = match &syms[group] {
                BasisSym::Pow(k) => pow_neg_sign(k),
                BasisSym::Om(k) => om_neg_sign(k, nd),
            };
            let c = if sign < 0 { c.neg() } else { c.clone() };
            out.insert(syms.clone(), c);
        }
        out
    }

    /// Keep the coefficient of `Om^0` in `group`, dropping the group.
    pub fn residue(&self, group: usize) -> MultiVarSeries<C> {
        let groups: Vec<&str> = self
            .groups
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != group)
            .map(|(_, s)| s.as_str())
            .collect();
        let truncs: Vec<u32> = self
            .truncs
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != group)
            .map(|(_, t)| *t)
            .collect();
        let mut out = MultiVarSeries::zero(self.ambient, &groups, &truncs);
        let om_par = self.ambient.omega_parity();
        for (syms, c) in &self.terms {
            match &syms[group] {
                BasisSym::Om(k) if k.is_zero() => {}
                _ => continue,
            }
            // move the Om^0 to the front past earlier groups
            let mut sign = 1i8;
            for s in syms.iter().take(group) {
                sign *= koszul_sign(om_par, s.parity(&self.ambient));
            }
            let rest: Vec<BasisSym> = syms
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != group)
                .map(|(_, s)| s.clone())
                .collect();
            let c = if sign < 0 { c.neg() } else { c.clone() };
            out.insert(rest, c);
        }
        out
    }

    /// Multiply by a bare power monomial in one group (contracts against
    /// omega forms of that group).
    pub fn mul_pow(&self, group: usize, k: &MultiIndex) -> MultiVarSeries<C> {
        let groups: Vec<&str> = self.groups.iter().map(|s| s.as_str()).collect();
        let mut out = MultiVarSeries::zero(self.ambient, &groups, &self.truncs);
        for (syms, c) in &self.terms {
            if let Some(sym) = BasisSym::Pow(k.clone()).mul(&syms[group], self.truncs[group]) {
                let mut syms = syms.clone();
                syms[group] = sym;
                out.insert(syms, c.clone());
            }
        }
        out
    }

    /// Fold the last group into the coefficients, producing a series with one
    /// fewer group whose coefficients are one-variable series.
    pub fn fold_last(&self) -> MultiVarSeries<OmegaSeries<C>> {
        let g = self.groups.len() - 1;
        let groups: Vec<&str> = self.groups[..g].iter().map(|s| s.as_str()).collect();
        let mut out = MultiVarSeries::zero(self.ambient, &groups, &self.truncs[..g]);
        for (syms, c) in &self.terms {
            let outer: Vec<BasisSym> = syms[..g].to_vec();
            let mut inner = OmegaSeries::zero(self.ambient, &self.groups[g], self.truncs[g]);
            inner.insert(syms[g].clone(), c.clone());
            match out.terms.get_mut(&outer) {
                None => out.insert(outer, inner),
                Some(existing) => *existing = existing.add(&inner),
            }
        }
        out
    }

    pub fn render_with(&self, render_coeff: impl Fn(&C) -> String) -> String {
        render_terms(
            self.terms
                .iter()
                .map(|(syms, c)| (render_syms(syms, &self.groups), render_coeff(c))),
        )
    }
}

impl<C: Coeff + fmt::Display> fmt::Display for MultiVarSeries<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render_with(|c| format!("{c}")))
    }
}

impl<C: Coeff + fmt::Display> fmt::Display for OmegaSeries<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body = render_terms(
            self.terms
                .iter()
                .map(|(sym, c)| (sym.render(&self.var), format!("{c}"))),
        );
        write!(f, "{body}")
    }
}

fn render_syms(syms: &[BasisSym], groups: &[String]) -> String {
    let parts: Vec<String> = syms
        .iter()
        .zip(groups)
        .filter(|(s, _)| !matches!(s, BasisSym::Pow(k) if k.is_zero()))
        .map(|(s, g)| s.render(g))
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join(" ")
    }
}

fn render_terms(it: impl Iterator<Item = (String, String)>) -> String {
    let parts: Vec<String> = it.map(|(sym, c)| format!("{sym} * ({c})")).collect();
    if parts.is_empty() {
        "0".to_string()
    } else {
        parts.join(" + ")
    }
}

/// Product of multivariable series. The right term's symbols move left past
/// the left term's coefficient and later-group symbols, with Koszul signs per
/// omega-omega transposition and per coefficient crossing.
pub fn mv_mul<A, B>(a: &MultiVarSeries<A>, b: &MultiVarSeries<B>) -> MultiVarSeries<A::Out>
where
    A: CoeffMul<B>,
    B: Coeff,
{
    a.ambient.check(&b.ambient).expect("series ambient");
    assert_eq!(a.groups, b.groups, "group mismatch");
    let truncs: Vec<u32> = a
        .truncs
        .iter()
        .zip(&b.truncs)
        .map(|(x, y)| *x.min(y))
        .collect();
    let groups: Vec<&str> = a.groups.iter().map(|s| s.as_str()).collect();
    let mut out: MultiVarSeries<A::Out> = MultiVarSeries::zero(a.ambient, &groups, &truncs);
    let om_par = a.ambient.omega_parity();
    for (sa, ca) in &a.terms {
        for (sb, cb) in &b.terms {
            let mut syms = Vec::with_capacity(sa.len());
            let mut dead = false;
            for g in 0..sa.len() {
                match sa[g].mul(&sb[g], truncs[g]) {
                    Some(s) => syms.push(s),
                    None => {
                        dead = true;
                        break;
                    }
                }
            }
            if dead {
                continue;
            }
            // omega-omega transpositions: each Om in sb at group i crosses
            // every Om in sa at a later group j > i
            let mut sign = 1i8;
            for i in 0..sb.len() {
                if !sb[i].is_om() {
                    continue;
                }
                for j in (i + 1)..sa.len() {
                    if sa[j].is_om() {
                        sign *= koszul_sign(om_par, om_par);
                    }
                }
            }
            // the left coefficient crosses every omega form of the right term
            let b_om_count = sb.iter().filter(|s| s.is_om()).count();
            let ca_eff = if om_par.is_odd() && b_om_count % 2 == 1 {
                ca.twist()
            } else {
                ca.clone()
            };
            let mut c = ca_eff.cmul(cb);
            if sign < 0 {
                c = c.neg();
            }
            out.insert(syms, c);
        }
    }
    out
}

/// Product of one-variable series in the same variable group.
pub fn series_mul<A, B>(a: &OmegaSeries<A>, b: &OmegaSeries<B>) -> OmegaSeries<A::Out>
where
    A: CoeffMul<B>,
    B: Coeff,
{
    a.ambient.check(&b.ambient).expect("series ambient");
    let trunc = a.trunc.min(b.trunc);
    let mut out: OmegaSeries<A::Out> = OmegaSeries::zero(a.ambient, &a.var, trunc);
    let om_par = a.ambient.omega_parity();
    for (sa, ca) in &a.terms {
        for (sb, cb) in &b.terms {
            let Some(sym) = sa.mul(sb, trunc) else { continue };
            let ca_eff = if om_par.is_odd() && sb.is_om() {
                ca.twist()
            } else {
                ca.clone()
            };
            out.insert(sym, ca_eff.cmul(cb));
        }
    }
    out
}

/// Verification window: compare only terms whose per-group power exponents
/// and omega exponents stay inside the bounds.
#[derive(Clone, Copy, Debug)]
pub struct Window {
    pub pow: u32,
    pub om: u32,
}

impl Window {
    pub fn new(pow: u32, om: u32) -> Window {
        Window { pow, om }
    }

    pub fn admits(&self, syms: &[BasisSym]) -> bool {
        syms.iter().all(|s| match s {
            BasisSym::Pow(k) => k.total() <= self.pow,
            BasisSym::Om(k) => k.total() <= self.om,
        })
    }
}

/// First coefficient mismatch between two series inside a window, rendered
/// as `(key, left, right)`.
pub fn first_mismatch<C: Coeff>(
    a: &MultiVarSeries<C>,
    b: &MultiVarSeries<C>,
    w: Window,
) -> Option<(String, String, String)> {
    assert_eq!(a.groups, b.groups);
    let keys: std::collections::BTreeSet<&Vec<BasisSym>> =
        a.terms.keys().chain(b.terms.keys()).collect();
    for k in keys {
        if !w.admits(k) {
            continue;
        }
        let ca = a.terms.get(k);
        let cb = b.terms.get(k);
        if ca != cb {
            return Some((
                render_syms(k, &a.groups),
                ca.map(|c| format!("{c:?}")).unwrap_or_else(|| "0".into()),
                cb.map(|c| format!("{c:?}")).unwrap_or_else(|| "0".into()),
            ));
        }
    }
    None
}

/// Which half of the Delta distribution to build.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DeltaKind {
    Full,
    Minus,
    Plus,
}

/// One argument slot of a Delta distribution: a variable group, possibly
/// negated.
#[derive(Clone, Copy, Debug)]
pub struct DeltaArg {
    pub group: usize,
    pub negated: bool,
}

impl DeltaArg {
    pub fn plain(group: usize) -> DeltaArg {
        DeltaArg {
            group,
            negated: false,
        }
    }

    pub fn neg(group: usize) -> DeltaArg {
        DeltaArg {
            group,
            negated: true,
        }
    }
}

/// Construction frame for multivariable series: ambient plus named groups
/// with their truncation orders and the coefficient parameter ring.
#[derive(Clone, Debug)]
pub struct Frame {
    pub ambient: Ambient,
    pub groups: Vec<String>,
    pub truncs: Vec<u32>,
    pub ring: Arc<ParamRing>,
}

impl Frame {
    pub fn new(ambient: Ambient, groups: &[&str], trunc: u32, ring: Arc<ParamRing>) -> Frame {
        Frame {
            ambient,
            groups: groups.iter().map(|s| s.to_string()).collect(),
            truncs: vec![trunc; groups.len()],
            ring,
        }
    }

    pub fn zero<C: Coeff>(&self) -> MultiVarSeries<C> {
        let groups: Vec<&str> = self.groups.iter().map(|s| s.as_str()).collect();
        MultiVarSeries::zero(self.ambient, &groups, &self.truncs)
    }

    pub fn group(&self, name: &str) -> usize {
        self.groups
            .iter()
            .position(|g| g == name)
            .unwrap_or_else(|| panic!("unknown group {name}"))
    }

    pub fn unit_syms(&self) -> Vec<BasisSym> {
        self.groups
            .iter()
            .map(|_| BasisSym::unit(self.ambient.vars))
            .collect()
    }

    /// Constant series.
    pub fn constant(&self, s: Scalar) -> MultiVarSeries<Scalar> {
        let mut out = self.zero();
        out.insert(self.unit_syms(), s);
        out
    }

    /// The expanded polynomial `(x - y)^j` for groups `x`, `y`.
    pub fn pow_difference(&self, gx: usize, gy: usize, j: &MultiIndex) -> MultiVarSeries<Scalar> {
        let n = self.ambient.vars;
        let mut out = self.zero();
        for t in MultiIndex::all_bounded(n, j.total()) {
            let b = mi_binom(j, &t).expect("len");
            if b.is_zero() {
                continue;
            }
            let rest = j.sub_checked(&t).expect("len").expect("t <= j");
            let mut sign = Rational::from_integer(b);
            if rest.total() % 2 == 1 {
                sign = -sign;
            }
            let mut syms = self.unit_syms();
            syms[gx] = BasisSym::Pow(t);
            syms[gy] = BasisSym::Pow(rest);
            out.insert(syms, Scalar::from_rational(self.ring.clone(), sign));
        }
        out
    }

    /// The Delta distribution
    /// `Delta(u, v) = sum_j v^j Om_u^j + (-1)^N u^j Om_v^j`
    /// or one of its halves, with either argument optionally negated.
    pub fn delta(&self, kind: DeltaKind, u: DeltaArg, v: DeltaArg) -> MultiVarSeries<Scalar> {
        let n = self.ambient.vars;
        let nd = self.ambient.omega_degree;
        let mut out = self.zero();
        if kind != DeltaKind::Plus {
            // minus half: v^j Om_u^j
            for j in MultiIndex::all_bounded(n, self.truncs[v.group]) {
                let mut sign = 1i8;
                if v.negated {
                    sign *= pow_neg_sign(&j);
                }
                if u.negated {
                    sign *= om_neg_sign(&j, nd);
                }
                let mut syms = self.unit_syms();
                syms[v.group] = BasisSym::Pow(j.clone());
                syms[u.group] = BasisSym::Om(j.clone());
                out.insert(syms, Scalar::from_int(self.ring.clone(), sign as i64));
            }
        }
        if kind != DeltaKind::Minus {
            // plus half: (-1)^N u^j Om_v^j
            let mut base = if nd.rem_euclid(2) == 1 { -1i8 } else { 1 };
            if mutate::flipped(mutate::SignSite::DeltaPlus) {
                base = -base;
            }
            for j in MultiIndex::all_bounded(n, self.truncs[u.group]) {
                let mut sign = base;
                if u.negated {
                    sign *= pow_neg_sign(&j);
                }
                if v.negated {
                    sign *= om_neg_sign(&j, nd);
                }
                let mut syms = self.unit_syms();
                syms[u.group] = BasisSym::Pow(j.clone());
                syms[v.group] = BasisSym::Om(j.clone());
                out.insert(syms, Scalar::from_int(self.ring.clone(), sign as i64));
            }
        }
        out
    }

    /// Three-variable Delta distribution `Delta(u + sign*s, v)`, expanded as
    /// `sum_k (sign * s)^k d_u^{(k)} Delta(u, v)`.
    pub fn delta_shifted(
        &self,
        kind: DeltaKind,
        u: DeltaArg,
        shift_group: usize,
        shift_sign: i8,
        v: DeltaArg,
    ) -> MultiVarSeries<Scalar> {
        let n = self.ambient.vars;
        let base = self.delta(kind, u, v);
        let mut out = self.zero();
        for k in MultiIndex::all_bounded(n, self.truncs[shift_group]) {
            // shift sign per power, and d^{(k)} of a negated base variable
            // picks up another (-1)^{|k|}
            let mut sign = 1i8;
            if k.total() % 2 == 1 {
                if shift_sign < 0 {
                    sign = -sign;
                }
                if u.negated {
                    sign = -sign;
                }
            }
            let derived = base.hasse(u.group, &k).mul_pow(shift_group, &k);
            let derived = if sign < 0 { derived.neg() } else { derived };
            out = out.add(&derived);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    fn frame(n: usize, nd: i64, trunc: u32) -> Frame {
        Frame::new(Ambient::new(n, nd), &["z", "w"], trunc, ParamRing::trivial())
    }

    fn sc(f: &Frame, v: i64) -> Scalar {
        Scalar::from_int(f.ring.clone(), v)
    }

    #[test]
    fn one_var_products() {
        let amb = Ambient::new(1, 1);
        let ring = ParamRing::trivial();
        let mut a: OmegaSeries<Scalar> = OmegaSeries::zero(amb, "z", 6);
        a.insert(BasisSym::Pow(mi(&[3])), Scalar::one(ring.clone()));
        let mut b: OmegaSeries<Scalar> = OmegaSeries::zero(amb, "z", 6);
        b.insert(BasisSym::Om(mi(&[2])), Scalar::one(ring.clone()));
        // z^3 * Om^2 = 0
        assert!(series_mul(&a, &b).is_zero());
        // Om^j * Om^k = 0
        assert!(series_mul(&b, &b).is_zero());

        let amb2 = Ambient::new(2, 1);
        let mut c: OmegaSeries<Scalar> = OmegaSeries::zero(amb2, "z", 6);
        c.insert(BasisSym::Pow(mi(&[1, 0])), Scalar::one(ring.clone()));
        let mut d: OmegaSeries<Scalar> = OmegaSeries::zero(amb2, "z", 6);
        d.insert(BasisSym::Om(mi(&[2, 1])), Scalar::one(ring));
        let prod = series_mul(&c, &d);
        assert_eq!(prod.terms.len(), 1);
        assert!(prod.coeff(&BasisSym::Om(mi(&[1, 1]))).is_some());
    }

    #[test]
    fn hasse_examples() {
        let amb = Ambient::new(1, 1);
        let ring = ParamRing::trivial();
        let mut a: OmegaSeries<Scalar> = OmegaSeries::zero(amb, "z", 6);
        a.insert(BasisSym::Pow(mi(&[5])), Scalar::one(ring.clone()));
        let da = a.hasse(&mi(&[2]));
        assert_eq!(
            da.coeff(&BasisSym::Pow(mi(&[3]))),
            Some(&Scalar::from_int(ring.clone(), 10))
        );
        let mut om: OmegaSeries<Scalar> = OmegaSeries::zero(amb, "z", 6);
        om.insert(BasisSym::Om(mi(&[0])), Scalar::one(ring.clone()));
        let dom = om.hasse(&mi(&[1]));
        assert_eq!(
            dom.coeff(&BasisSym::Om(mi(&[1]))),
            Some(&Scalar::from_int(ring.clone(), -1))
        );
        // identity derivative
        assert_eq!(om.hasse(&mi(&[0])), om);
        // composition: d^{(j)} d^{(k)} = binom(j+k,j) d^{(j+k)}
        for (j, k) in [(1u32, 2u32), (0, 3), (2, 2)] {
            let lhs = a.hasse(&mi(&[k])).hasse(&mi(&[j]));
            let rhs = a
                .hasse(&mi(&[j + k]))
                .scale(&Rational::from_integer(crate::arith::binom_u32(j + k, j)));
            assert_eq!(lhs, rhs, "j={j} k={k}");
        }
    }

    #[test]
    fn delta_minus_low_order() {
        let f = frame(1, 1, 2);
        let d = f.delta(DeltaKind::Minus, DeltaArg::plain(0), DeltaArg::plain(1));
        // Om_z^0 + w Om_z^1 + w^2 Om_z^2
        assert_eq!(d.terms.len(), 3);
        for j in 0..=2u32 {
            let syms = vec![BasisSym::Om(mi(&[j])), BasisSym::Pow(mi(&[j]))];
            assert_eq!(d.terms.get(&syms), Some(&sc(&f, 1)));
        }
    }

    #[test]
    fn delta_flip_identity() {
        // Delta_pm(z,w) = (-1)^N Delta_mp(w,z)
        for nd in [0i64, 1, 2] {
            let f = Frame::new(Ambient::new(1, nd), &["z", "w"], 4, ParamRing::trivial());
            let lhs = f.delta(DeltaKind::Minus, DeltaArg::plain(0), DeltaArg::plain(1));
            let sign = if nd % 2 == 0 { 1 } else { -1 };
            let rhs = f
                .delta(DeltaKind::Plus, DeltaArg::plain(1), DeltaArg::plain(0))
                .scale(&Rational::from_integer(BigInt::from(sign)));
            assert_eq!(lhs, rhs, "N={nd}");
        }
    }

    #[test]
    fn delta_negated_arguments() {
        // Delta_-(-w,-z) = -Delta_+(z,w)
        for nd in [0i64, 1, 2] {
            let f = Frame::new(Ambient::new(2, nd), &["z", "w"], 3, ParamRing::trivial());
            let lhs = f.delta(DeltaKind::Minus, DeltaArg::neg(1), DeltaArg::neg(0));
            let rhs = f
                .delta(DeltaKind::Plus, DeltaArg::plain(0), DeltaArg::plain(1))
                .neg();
            assert_eq!(lhs, rhs, "N={nd}");
        }
    }

    #[test]
    fn residue_examples() {
        let f = frame(1, 1, 4);
        // Res_z(Om_z^0 w^2) = w^2
        let mut s: MultiVarSeries<Scalar> = f.zero();
        s.insert(vec![BasisSym::Om(mi(&[0])), BasisSym::Pow(mi(&[2]))], sc(&f, 1));
        let r = s.residue(0);
        assert_eq!(r.terms.len(), 1);
        assert!(r.terms.contains_key(&vec![BasisSym::Pow(mi(&[2]))]));
        // Res_z(z^3 Om_w^1) = 0 and Res_z(Om_z^2 f) = 0
        let mut t: MultiVarSeries<Scalar> = f.zero();
        t.insert(vec![BasisSym::Pow(mi(&[3])), BasisSym::Om(mi(&[1]))], sc(&f, 1));
        t.insert(vec![BasisSym::Om(mi(&[2])), BasisSym::Pow(mi(&[0]))], sc(&f, 1));
        assert!(t.residue(0).is_zero());
    }

    #[test]
    fn residue_of_delta_recovers_series() {
        // Res_z(Delta(z,w) f(z)) = f(w) for a generic f with both parts
        for nd in [0i64, 1, 2] {
            let f = Frame::new(Ambient::new(1, nd), &["z", "w"], 5, ParamRing::trivial());
            let delta = f.delta(DeltaKind::Full, DeltaArg::plain(0), DeltaArg::plain(1));
            let mut fz: MultiVarSeries<Scalar> = f.zero();
            let mut fw_expected: MultiVarSeries<Scalar> = {
                let groups = vec!["w"];
                MultiVarSeries::zero(f.ambient, &groups, &[5])
            };
            for (k, c) in [(0u32, 3i64), (2, -1), (4, 7)] {
                fz.insert(vec![BasisSym::Pow(mi(&[k])), BasisSym::unit(1)], sc(&f, c));
                fw_expected.insert(vec![BasisSym::Pow(mi(&[k]))], sc(&f, c));
            }
            for (k, c) in [(0u32, 2i64), (1, 5)] {
                fz.insert(vec![BasisSym::Om(mi(&[k])), BasisSym::unit(1)], sc(&f, c));
                fw_expected.insert(vec![BasisSym::Om(mi(&[k]))], sc(&f, c));
            }
            let res = mv_mul(&delta, &fz).residue(0);
            assert_eq!(res.terms, fw_expected.terms, "N={nd}");
        }
    }

    #[test]
    fn koszul_in_mv_products() {
        // reordering Om_w past Om_z costs (-1)^N
        let f = frame(1, 1, 2);
        let mut zform: MultiVarSeries<Scalar> = f.zero();
        zform.insert(vec![BasisSym::Om(mi(&[0])), BasisSym::unit(1)], sc(&f, 1));
        let mut wform: MultiVarSeries<Scalar> = f.zero();
        wform.insert(vec![BasisSym::unit(1), BasisSym::Om(mi(&[0]))], sc(&f, 1));
        let a = mv_mul(&zform, &wform);
        let b = mv_mul(&wform, &zform);
        assert_eq!(a, b.neg());
    }
}
