//! The free graded state space of a presented algebra.
//!
//! States are exact linear combinations of normal-ordered monomials in
//! negative modes `g_(-1-k)` applied to the vacuum. Normalization sorts the
//! modes into a fixed total order with Koszul signs, kills squares of odd
//! modes, and rewrites non-canonical modes through the presentation's linear
//! mode relations.

use num::{BigInt, One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::arith::{koszul_sign, mi_binom, MultiIndex, Parity, Rational, Scalar};
use crate::omega::{Coeff, CoeffMul};
use crate::presentation::Presentation;
use crate::{Error, Result};

/// The negative mode `g_(-1-k)` of a generator.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NegMode {
    pub gen: usize,
    pub k: MultiIndex,
}

impl NegMode {
    pub fn new(gen: usize, k: MultiIndex) -> NegMode {
        NegMode { gen, k }
    }

    /// Fixed total order: generator declaration index, then reversed-lex on
    /// the mode index.
    pub fn cmp_key(&self, other: &NegMode) -> Ordering {
        self.gen
            .cmp(&other.gen)
            .then_with(|| self.k.rev_lex_cmp(&other.k))
    }
}

/// A normal-ordered monomial of negative modes. Modes are sorted; the Koszul
/// sign of the sort was absorbed into the coefficient at normalization time.
#[derive(Clone, Debug)]
pub struct Monomial {
    modes: Vec<NegMode>,
    parity: Parity,
}

impl Monomial {
    pub fn vacuum() -> Monomial {
        Monomial {
            modes: vec![],
            parity: Parity::Even,
        }
    }

    pub fn modes(&self) -> &[NegMode] {
        &self.modes
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn is_vacuum(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Construct from modes already in canonical order (used by enumeration).
    pub fn from_sorted(modes: Vec<NegMode>, pres: &Presentation) -> Monomial {
        let parity = modes
            .iter()
            .fold(Parity::Even, |p, m| p.xor(pres.gen_parity(m.gen)));
        Monomial { modes, parity }
    }
}

impl PartialEq for Monomial {
    fn eq(&self, other: &Self) -> bool {
        self.modes == other.modes
    }
}
impl Eq for Monomial {}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        let mut it_a = self.modes.iter();
        let mut it_b = other.modes.iter();
        loop {
            match (it_a.next(), it_b.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some(a), Some(b)) => match a.cmp_key(b) {
                    Ordering::Equal => continue,
                    ord => return ord,
                },
            }
        }
    }
}

/// Exact linear combination of monomials with scalar coefficients (scalars
/// are written to the left of the monomial).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct State {
    pub terms: BTreeMap<Monomial, Scalar>,
}

impl State {
    pub fn zero() -> State {
        State {
            terms: BTreeMap::new(),
        }
    }

    pub fn vacuum(pres: &Presentation) -> State {
        State::of_monomial(Monomial::vacuum(), Scalar::one(pres.ring.clone()))
    }

    pub fn of_monomial(m: Monomial, c: Scalar) -> State {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        State { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &State) -> State {
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            crate::omega::acc(&mut terms, m.clone(), c.clone());
        }
        State { terms }
    }

    pub fn neg(&self) -> State {
        State {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c.neg()))
                .collect(),
        }
    }

    pub fn sub(&self, other: &State) -> State {
        self.add(&other.neg())
    }

    pub fn scale(&self, r: &Rational) -> State {
        if r.is_zero() {
            return State::zero();
        }
        State {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c.scale(r)))
                .collect(),
        }
    }

    /// Left multiplication by a central scalar.
    pub fn scale_scalar(&self, s: &Scalar) -> State {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            crate::omega::acc(&mut terms, m.clone(), s.mul(c));
        }
        State { terms }
    }

    /// Parity of a homogeneous state.
    pub fn parity(&self, pres: &Presentation) -> Option<Parity> {
        let mut p = None;
        for (m, c) in &self.terms {
            let q = m.parity().xor(c.parity()?);
            match p {
                None => p = Some(q),
                Some(r) if r == q => {}
                _ => return None,
            }
        }
        let _ = pres;
        Some(p.unwrap_or(Parity::Even))
    }

    /// Grammar-conformant text: one summand per (parameter monomial, mode
    /// monomial) pair, signs folded into the joiners.
    pub fn render(&self, pres: &Presentation) -> String {
        let mut out = String::new();
        for (m, c) in &self.terms {
            let mono = render_monomial(m, pres);
            for (pm, rat) in c.terms() {
                let mut factors: Vec<String> = Vec::new();
                let abs = rat.abs();
                let params: Vec<String> = pm
                    .0
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| {
                        if e == 1 {
                            pres.ring.name(i).to_string()
                        } else {
                            format!("{}^{}", pres.ring.name(i), e)
                        }
                    })
                    .collect();
                if !abs.is_one() {
                    factors.push(abs.to_string());
                }
                factors.extend(params);
                let mut body = factors.join(" * ");
                if body.is_empty() {
                    body = mono.clone();
                } else {
                    body = format!("{body} * {mono}");
                }
                if out.is_empty() {
                    if rat < &Rational::zero() {
                        out.push_str("- ");
                    }
                } else if rat < &Rational::zero() {
                    out.push_str(" - ");
                } else {
                    out.push_str(" + ");
                }
                out.push_str(&body);
            }
        }
        if out.is_empty() {
            "0".to_string()
        } else {
            out
        }
    }
}

pub fn render_monomial(m: &Monomial, pres: &Presentation) -> String {
    let mut parts: Vec<String> = m
        .modes
        .iter()
        .map(|nm| format!("{}[-1-{}]", pres.gens[nm.gen].name, nm.k))
        .collect();
    parts.push("vac".to_string());
    parts.join(" ")
}

impl Coeff for State {
    fn is_zero(&self) -> bool {
        State::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        State::add(self, other)
    }
    fn neg(&self) -> Self {
        State::neg(self)
    }
    fn scale(&self, r: &Rational) -> Self {
        State::scale(self, r)
    }
    fn twist(&self) -> Self {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let c = if m.parity().is_odd() {
                c.twist().neg()
            } else {
                c.twist()
            };
            terms.insert(m.clone(), c);
        }
        State { terms }
    }
}

impl CoeffMul<State> for Scalar {
    type Out = State;
    fn cmul(&self, rhs: &State) -> State {
        rhs.scale_scalar(self)
    }
}

/// Sort raw modes into canonical order with Koszul signs; squares of odd
/// modes vanish; non-canonical modes are rewritten through the mode
/// relations first.
pub fn normalize(raw: &[NegMode], coeff: &Scalar, pres: &Presentation) -> Result<State> {
    for m in raw {
        if m.gen >= pres.gens.len() {
            return Err(Error::UnknownGenerator(format!("#{}", m.gen)));
        }
    }
    // expand relation rewrites multilinearly; an empty substitution kills
    // the whole product
    let mut expansions: Vec<Vec<(NegMode, Rational)>> = Vec::with_capacity(raw.len());
    for m in raw {
        match pres.rewrite_mode(m) {
            Some(subs) if subs.is_empty() => return Ok(State::zero()),
            Some(subs) => expansions.push(subs.to_vec()),
            None => expansions.push(vec![(m.clone(), Rational::one())]),
        }
    }
    let mut out = State::zero();
    let mut selection: Vec<usize> = vec![0; expansions.len()];
    loop {
        let mut modes: Vec<NegMode> = Vec::with_capacity(expansions.len());
        let mut factor = Rational::one();
        for (slot, &choice) in selection.iter().enumerate() {
            let (m, r) = &expansions[slot][choice];
            modes.push(m.clone());
            factor *= r;
        }
        if let Some((mono, sign)) = sort_modes(modes, pres) {
            let c = coeff.scale(&(factor * Rational::from_integer(BigInt::from(sign))));
            out = out.add(&State::of_monomial(mono, c));
        }
        // advance the odometer
        let mut slot = 0;
        loop {
            if slot == selection.len() {
                return Ok(out);
            }
            selection[slot] += 1;
            if selection[slot] < expansions[slot].len() {
                break;
            }
            selection[slot] = 0;
            slot += 1;
        }
    }
}

/// Insertion sort counting Koszul transpositions. `None` when an odd mode
/// repeats.
fn sort_modes(mut modes: Vec<NegMode>, pres: &Presentation) -> Option<(Monomial, i8)> {
    let mut sign = 1i8;
    for i in 1..modes.len() {
        let mut j = i;
        while j > 0 && modes[j - 1].cmp_key(&modes[j]) == Ordering::Greater {
            sign *= koszul_sign(pres.gen_parity(modes[j - 1].gen), pres.gen_parity(modes[j].gen));
            modes.swap(j - 1, j);
            j -= 1;
        }
    }
    for w in modes.windows(2) {
        if w[0] == w[1] && pres.gen_parity(w[0].gen).is_odd() {
            return None;
        }
    }
    Some((Monomial::from_sorted(modes, pres), sign))
}

/// Prepend a negative mode: `g_(-1-k) v`.
pub fn prepend_mode(gen: usize, k: &MultiIndex, v: &State, pres: &Presentation) -> State {
    let mut out = State::zero();
    for (m, c) in &v.terms {
        let mut modes = Vec::with_capacity(m.len() + 1);
        modes.push(NegMode::new(gen, k.clone()));
        modes.extend(m.modes().iter().cloned());
        out = out.add(&normalize(&modes, c, pres).expect("modes from valid state"));
    }
    out
}

/// Cohomological degree and spin of a state.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Bigrading {
    pub degree: i64,
    pub spin: Vec<Rational>,
}

impl fmt::Display for Bigrading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let spin: Vec<String> = self.spin.iter().map(|s| s.to_string()).collect();
        write!(f, "deg {} spin ({})", self.degree, spin.join(","))
    }
}

/// Grade contribution of a single mode: degree of the generator, spin of the
/// generator plus the mode index.
pub fn mode_grade(m: &NegMode, pres: &Presentation) -> (i64, Vec<Rational>) {
    let g = &pres.gens[m.gen];
    let spin: Vec<Rational> = g
        .spin
        .iter()
        .zip(&m.k.0)
        .map(|(s, &k)| s + Rational::from_integer(BigInt::from(k)))
        .collect();
    (g.degree, spin)
}

fn term_grade(m: &Monomial, c: &Scalar, pres: &Presentation) -> Option<Bigrading> {
    let mut degree = c.degree()?;
    let mut spin = vec![Rational::zero(); pres.ambient.vars];
    for nm in m.modes() {
        let (d, s) = mode_grade(nm, pres);
        degree += d;
        for (acc, x) in spin.iter_mut().zip(s) {
            *acc += x;
        }
    }
    Some(Bigrading { degree, spin })
}

/// Bigrading of a homogeneous state.
pub fn grade(v: &State, pres: &Presentation) -> Result<Bigrading> {
    let mut out: Option<Bigrading> = None;
    for (m, c) in &v.terms {
        let g = term_grade(m, c, pres)
            .ok_or_else(|| Error::Inhomogeneous(v.render(pres)))?;
        match &out {
            None => out = Some(g),
            Some(prev) if *prev == g => {}
            _ => return Err(Error::Inhomogeneous(v.render(pres))),
        }
    }
    Ok(out.unwrap_or(Bigrading {
        degree: 0,
        spin: vec![Rational::zero(); pres.ambient.vars],
    }))
}

/// Divided-power translation operator `T^(k)` applied to a state.
///
/// On a single mode, `T^(k) g_(-1-l) = binom(l+k, k) g_(-1-l-k)`; on a
/// monomial it distributes by the divided-power Leibniz rule; `T^(k)` with
/// `k != 0` kills the bare vacuum.
pub fn translate(k: &MultiIndex, v: &State, pres: &Presentation) -> State {
    if k.is_zero() {
        return v.clone();
    }
    let mut out = State::zero();
    for (m, c) in &v.terms {
        let d = m.len();
        if d == 0 {
            continue; // T^(k) vac = 0 for k != 0
        }
        // distribute k over the d modes
        let splits = index_splits(k, d);
        for split in splits {
            let mut modes = Vec::with_capacity(d);
            let mut factor = Rational::one();
            for (nm, part) in m.modes().iter().zip(&split) {
                let shifted = nm.k.add(part).expect("ambient length");
                factor *= Rational::from_integer(
                    mi_binom(&shifted, part).expect("ambient length"),
                );
                modes.push(NegMode::new(nm.gen, shifted));
            }
            let piece = normalize(&modes, &c.scale(&factor), pres).expect("valid modes");
            out = out.add(&piece);
        }
    }
    out
}

/// All ways to write `k` as an ordered sum of `d` multi-indices.
fn index_splits(k: &MultiIndex, d: usize) -> Vec<Vec<MultiIndex>> {
    if d == 0 {
        return if k.is_zero() { vec![vec![]] } else { vec![] };
    }
    if d == 1 {
        return vec![vec![k.clone()]];
    }
    let mut out = Vec::new();
    for first in MultiIndex::all_bounded(k.len(), k.total()) {
        let Ok(Some(rest)) = k.sub_checked(&first) else {
            continue;
        };
        for mut tail in index_splits(&rest, d - 1) {
            let mut v = Vec::with_capacity(d);
            v.push(first.clone());
            v.append(&mut tail);
            out.push(v);
        }
    }
    out
}

/// Mode cutoff for enumerating gradings that are not bounded by spin alone.
#[derive(Clone, Copy, Debug)]
pub struct Cutoff {
    pub max_mode_total: u32,
    pub max_len: usize,
}

/// All canonical basis monomials with componentwise spin at most
/// `spin_bound` and degree inside `degree_range` when given.
///
/// Errors when the grading admits infinitely many such monomials and no
/// cutoff is supplied (an even mode with zero spin contribution, or a
/// negative spin component among the generators).
pub fn enumerate_basis(
    pres: &Presentation,
    degree_range: Option<(i64, i64)>,
    spin_bound: &[Rational],
    cutoff: Option<Cutoff>,
) -> Result<Vec<Monomial>> {
    let n = pres.ambient.vars;
    assert_eq!(spin_bound.len(), n);
    // candidate canonical modes with contribution inside the bound
    let mut candidates: Vec<(NegMode, Vec<Rational>, i64)> = Vec::new();
    for (gi, g) in pres.gens.iter().enumerate() {
        if cutoff.is_none() && g.spin.iter().any(|s| s < &Rational::zero()) {
            return Err(Error::NonEnumerable(format!(
                "generator {} has a negative spin component; supply a mode cutoff",
                g.name
            )));
        }
        // per-component cap on k
        let mut caps = Vec::with_capacity(n);
        let mut possible = true;
        for i in 0..n {
            let room = &spin_bound[i] - &g.spin[i];
            if room < Rational::zero() {
                possible = false;
                break;
            }
            let cap = room.floor().to_integer();
            let cap: u32 = cap.try_into().unwrap_or(0);
            caps.push(cap.min(cutoff.map_or(u32::MAX, |c| c.max_mode_total)));
        }
        if !possible {
            continue;
        }
        let max_total: u32 = caps.iter().sum();
        let max_total = max_total.min(cutoff.map_or(u32::MAX, |c| c.max_mode_total));
        for k in MultiIndex::all_bounded(n, max_total) {
            if k.0.iter().zip(&caps).any(|(ki, cap)| ki > cap) {
                continue;
            }
            let mode = NegMode::new(gi, k);
            if pres.rewrite_mode(&mode).is_some() {
                continue; // non-canonical
            }
            let (d, s) = mode_grade(&mode, pres);
            if s.iter().zip(spin_bound).any(|(si, b)| si > b) {
                continue;
            }
            if cutoff.is_none()
                && !pres.gen_parity(gi).is_odd()
                && s.iter().all(|x| x.is_zero())
            {
                return Err(Error::NonEnumerable(format!(
                    "even mode {}[-1-{}] has zero spin; supply a mode cutoff",
                    pres.gens[gi].name, mode.k
                )));
            }
            candidates.push((mode, s, d));
        }
    }
    candidates.sort_by(|a, b| a.0.cmp_key(&b.0));

    let max_len = cutoff.map_or(usize::MAX, |c| c.max_len);
    let mut out: Vec<Monomial> = Vec::new();
    let mut current: Vec<NegMode> = Vec::new();
    rec(
        pres,
        &candidates,
        0,
        &mut current,
        &vec![Rational::zero(); n],
        0,
        spin_bound,
        max_len,
        &mut out,
    );
    #[allow(clippy::too_many_arguments)]
    fn rec(
        pres: &Presentation,
        cands: &[(NegMode, Vec<Rational>, i64)],
        from: usize,
        current: &mut Vec<NegMode>,
        spin: &[Rational],
        degree: i64,
        bound: &[Rational],
        max_len: usize,
        out: &mut Vec<Monomial>,
    ) {
        out.push(Monomial::from_sorted(current.clone(), pres));
        if current.len() >= max_len {
            return;
        }
        for (i, (mode, s, d)) in cands.iter().enumerate().skip(from) {
            // odd modes may not repeat
            if pres.gen_parity(mode.gen).is_odd() && current.last() == Some(mode) {
                continue;
            }
            let next_spin: Vec<Rational> = spin.iter().zip(s).map(|(a, b)| a + b).collect();
            if next_spin.iter().zip(bound).any(|(x, b)| x > b) {
                continue;
            }
            current.push(mode.clone());
            rec(pres, cands, i, current, &next_spin, degree + d, bound, max_len, out);
            current.pop();
        }
    }
    // drop the duplicate empty monomial visits and filter by degree
    let mut seen = std::collections::BTreeSet::new();
    let mut result = Vec::new();
    for m in out {
        if !seen.insert(m.clone()) {
            continue;
        }
        if let Some((lo, hi)) = degree_range {
            let st = State::of_monomial(m.clone(), Scalar::one(pres.ring.clone()));
            let g = grade(&st, pres)?;
            if g.degree < lo || g.degree > hi {
                continue;
            }
        }
        result.push(m);
    }
    Ok(result)
}
