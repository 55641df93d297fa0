//! Generator/bracket presentations and their text format.
//!
//! A presentation lists generators (cohomological degree, super parity, spin)
//! together with the bracket table `k -> a_(k) b` of singular products, the
//! central parameter ring, and optional linear relations among negative
//! modes. The reconstruction dictionary in [`crate::engine`] turns this datum
//! into a full algebra of fields.

use num::{BigInt, One, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::arith::{koszul_sign, MultiIndex, ParamRing, Parity, Rational, Scalar};
use crate::omega::Ambient;
use crate::state::{grade, normalize, translate, Bigrading, NegMode, State};
use crate::{Error, Result};

/// Generator declaration.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Generator {
    pub name: String,
    pub degree: i64,
    /// Super parity on top of the cohomological grading.
    pub odd: bool,
    pub spin: Vec<Rational>,
}

impl Generator {
    pub fn even(name: &str, degree: i64, spin: Vec<Rational>) -> Generator {
        Generator {
            name: name.to_string(),
            degree,
            odd: false,
            spin,
        }
    }

    pub fn fermionic(name: &str, degree: i64, spin: Vec<Rational>) -> Generator {
        Generator {
            name: name.to_string(),
            degree,
            odd: true,
            spin,
        }
    }
}

/// One linear relation among negative modes: `sum c_i g_i,(-1-k_i) = 0`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ModeRelation {
    pub terms: Vec<(usize, MultiIndex, Rational)>,
}

/// Bracket row for one ordered generator pair: `k -> a_(k) b`.
pub type BracketRow = BTreeMap<MultiIndex, State>;

/// A presented algebra: ambient `(n, N)`, parameter ring, generators, the
/// bracket table, and mode relations preprocessed into a rewrite map.
#[derive(Clone, Debug)]
pub struct Presentation {
    pub ambient: Ambient,
    pub ring: Arc<ParamRing>,
    /// Spin denominators divide this.
    pub spin_denom: u32,
    pub gens: Vec<Generator>,
    pub table: BTreeMap<(usize, usize), BracketRow>,
    pub relations: Vec<ModeRelation>,
    rewrite: BTreeMap<(usize, MultiIndex), Vec<(NegMode, Rational)>>,
}

impl PartialEq for Presentation {
    fn eq(&self, other: &Self) -> bool {
        self.ambient == other.ambient
            && *self.ring == *other.ring
            && self.spin_denom == other.spin_denom
            && self.gens == other.gens
            && self.table == other.table
            && self.relations == other.relations
    }
}

impl Presentation {
    /// Assemble a presentation without a table; attach rows afterwards.
    pub fn skeleton(
        ambient: Ambient,
        ring: Arc<ParamRing>,
        spin_denom: u32,
        gens: Vec<Generator>,
        relations: Vec<ModeRelation>,
    ) -> Result<Presentation> {
        let mut names = std::collections::BTreeSet::new();
        for g in &gens {
            if !names.insert(g.name.clone()) {
                return Err(Error::Invalid(format!("duplicate generator `{}`", g.name)));
            }
            if g.spin.len() != ambient.vars {
                return Err(Error::Invalid(format!(
                    "generator `{}` has spin length {} in ambient n={}",
                    g.name,
                    g.spin.len(),
                    ambient.vars
                )));
            }
        }
        for r in &relations {
            if r.terms.is_empty() {
                return Err(Error::Invalid("empty mode relation".into()));
            }
            for (g, k, _) in &r.terms {
                if *g >= gens.len() {
                    return Err(Error::UnknownGenerator(format!("#{g}")));
                }
                if k.len() != ambient.vars {
                    return Err(Error::DimensionMismatch(k.len(), ambient.vars));
                }
            }
        }
        let rewrite = eliminate_relations(&relations);
        Ok(Presentation {
            ambient,
            ring,
            spin_denom,
            gens,
            table: BTreeMap::new(),
            relations,
            rewrite,
        })
    }

    pub fn insert_row(&mut self, a: usize, b: usize, row: BracketRow) {
        let row: BracketRow = row.into_iter().filter(|(_, v)| !v.is_zero()).collect();
        if row.is_empty() {
            self.table.remove(&(a, b));
        } else {
            self.table.insert((a, b), row);
        }
    }

    pub fn gen_index(&self, name: &str) -> Result<usize> {
        self.gens
            .iter()
            .position(|g| g.name == name)
            .ok_or_else(|| Error::UnknownGenerator(name.to_string()))
    }

    /// Full Koszul parity: cohomological degree plus super parity.
    pub fn gen_parity(&self, i: usize) -> Parity {
        let g = &self.gens[i];
        let p = Parity::of_int(g.degree);
        if g.odd {
            p.xor(Parity::Odd)
        } else {
            p
        }
    }

    pub fn koszul_pair(&self, a: usize, b: usize) -> i8 {
        koszul_sign(self.gen_parity(a), self.gen_parity(b))
    }

    pub fn bracket_row(&self, a: usize, b: usize) -> Option<&BracketRow> {
        self.table.get(&(a, b))
    }

    /// Singular product `a_(k) b` for generators, zero when absent.
    pub fn bracket(&self, a: usize, k: &MultiIndex, b: usize) -> State {
        self.table
            .get(&(a, b))
            .and_then(|row| row.get(k))
            .cloned()
            .unwrap_or_else(State::zero)
    }

    /// Largest bracket index total in the table.
    pub fn max_bracket_total(&self) -> u32 {
        self.table
            .values()
            .flat_map(|row| row.keys())
            .map(|k| k.total())
            .max()
            .unwrap_or(0)
    }

    pub(crate) fn rewrite_mode(&self, m: &NegMode) -> Option<&[(NegMode, Rational)]> {
        self.rewrite
            .get(&(m.gen, m.k.clone()))
            .map(|v| v.as_slice())
    }

    /// The skew image of a bracket row: from the row of `(a, b)` produce the
    /// row of `(b, a)` via
    /// `b_(k) a = p(a,b) sum_l (-1)^{|k|+|l|+N+1} T^(l) (a_(k+l) b)`.
    pub fn skew_image(&self, a: usize, b: usize, row: &BracketRow) -> BracketRow {
        let p_ab = self.koszul_pair(a, b);
        let nd = self.ambient.omega_degree;
        let mut out: BracketRow = BTreeMap::new();
        let keys: Vec<&MultiIndex> = row.keys().collect();
        for k in all_keys_below(&keys) {
            let mut acc = State::zero();
            for (m, v) in row {
                let Some(l) = m.sub_checked(&k).expect("ambient") else {
                    continue;
                };
                let sign = (k.total() as i64 + l.total() as i64 + nd + 1).rem_euclid(2);
                let mut piece = translate(&l, v, self);
                if sign == 1 {
                    piece = piece.neg();
                }
                acc = acc.add(&piece);
            }
            if p_ab < 0 {
                acc = acc.neg();
            }
            if !acc.is_zero() {
                out.insert(k, acc);
            }
        }
        out
    }

    /// Fill in missing bracket orientations from skew-symmetry; verify
    /// consistency where both orientations are present.
    pub fn skew_complete(mut self) -> Result<Presentation> {
        let g = self.gens.len();
        for a in 0..g {
            for b in a..g {
                let ab = self.table.get(&(a, b)).cloned();
                let ba = if a == b {
                    ab.clone()
                } else {
                    self.table.get(&(b, a)).cloned()
                };
                match (ab, ba) {
                    (None, None) => {}
                    (Some(row), None) => {
                        let img = self.skew_image(a, b, &row);
                        self.insert_row(b, a, img);
                    }
                    (None, Some(row)) => {
                        let img = self.skew_image(b, a, &row);
                        self.insert_row(a, b, img);
                    }
                    (Some(row_ab), Some(row_ba)) => {
                        let img = self.skew_image(a, b, &row_ab);
                        if !rows_equal(&img, &row_ba) {
                            return Err(Error::InconsistentTable(
                                self.gens[a].name.clone(),
                                self.gens[b].name.clone(),
                                first_row_difference(&img, &row_ba, &self),
                            ));
                        }
                    }
                }
            }
        }
        Ok(self)
    }

    /// Structural checks: degree/spin homogeneity of every table entry,
    /// relation homogeneity, spin denominators. Violations are data, not
    /// errors.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.ambient.vars;
        let nd = self.ambient.omega_degree;
        let denom = BigInt::from(self.spin_denom);
        for g in &self.gens {
            for s in &g.spin {
                if !(s * Rational::from_integer(denom.clone())).is_integer() {
                    out.push(format!(
                        "generator {}: spin component {} not a multiple of 1/{}",
                        g.name, s, self.spin_denom
                    ));
                }
            }
        }
        for ((a, b), row) in &self.table {
            let (ga, gb) = (&self.gens[*a], &self.gens[*b]);
            for (k, v) in row {
                if v.is_zero() {
                    continue;
                }
                let expect_deg = ga.degree + gb.degree - nd;
                let expect_spin: Vec<Rational> = (0..n)
                    .map(|i| {
                        &ga.spin[i] + &gb.spin[i]
                            - Rational::from_integer(BigInt::from(k.0[i] + 1))
                    })
                    .collect();
                match grade(v, self) {
                    Err(_) => out.push(format!(
                        "bracket ({},{}) index {k}: inhomogeneous value",
                        ga.name, gb.name
                    )),
                    Ok(Bigrading { degree, spin }) => {
                        if degree != expect_deg {
                            out.push(format!(
                                "bracket ({},{}) index {k}: degree {degree}, expected {expect_deg}",
                                ga.name, gb.name
                            ));
                        }
                        if spin != expect_spin {
                            out.push(format!(
                                "bracket ({},{}) index {k}: spin mismatch",
                                ga.name, gb.name
                            ));
                        }
                    }
                }
                let expect_parity = self
                    .gen_parity(*a)
                    .xor(self.gen_parity(*b))
                    .xor(Parity::of_int(nd));
                match v.parity(self) {
                    Some(p) if p == expect_parity => {}
                    _ => out.push(format!(
                        "bracket ({},{}) index {k}: parity mismatch",
                        ga.name, gb.name
                    )),
                }
            }
        }
        for (ri, r) in self.relations.iter().enumerate() {
            let mut sig: Option<(i64, Vec<Rational>)> = None;
            for (g, k, _) in &r.terms {
                let gen = &self.gens[*g];
                let spin: Vec<Rational> = gen
                    .spin
                    .iter()
                    .zip(&k.0)
                    .map(|(s, &ki)| s + Rational::from_integer(BigInt::from(ki)))
                    .collect();
                let this = (gen.degree, spin);
                match &sig {
                    None => sig = Some(this),
                    Some(prev) if *prev == this => {}
                    _ => {
                        out.push(format!("relation {ri}: inhomogeneous terms"));
                        break;
                    }
                }
            }
        }
        // skew consistency of stored pairs
        for a in 0..self.gens.len() {
            for b in a..self.gens.len() {
                let (Some(row_ab), Some(row_ba)) = (
                    self.table.get(&(a, b)),
                    if a == b {
                        self.table.get(&(a, b))
                    } else {
                        self.table.get(&(b, a))
                    },
                ) else {
                    continue;
                };
                let img = self.skew_image(a, b, row_ab);
                if !rows_equal(&img, row_ba) {
                    out.push(format!(
                        "bracket pair ({},{}) fails skew consistency: {}",
                        self.gens[a].name,
                        self.gens[b].name,
                        first_row_difference(&img, row_ba, self)
                    ));
                }
            }
        }
        out
    }

    /// Normalize raw modes against this presentation.
    pub fn state(&self, modes: &[(usize, MultiIndex)], coeff: Scalar) -> Result<State> {
        let raw: Vec<NegMode> = modes
            .iter()
            .map(|(g, k)| NegMode::new(*g, k.clone()))
            .collect();
        normalize(&raw, &coeff, self)
    }

    /// The single-generator state `g_(-1-0) vac`.
    pub fn gen_state(&self, g: usize) -> State {
        self.state(&[(g, MultiIndex::zero(self.ambient.vars))], Scalar::one(self.ring.clone()))
            .expect("generator state")
    }
}

fn rows_equal(a: &BracketRow, b: &BracketRow) -> bool {
    let keys: std::collections::BTreeSet<&MultiIndex> = a.keys().chain(b.keys()).collect();
    keys.into_iter().all(|k| {
        let va = a.get(k);
        let vb = b.get(k);
        match (va, vb) {
            (None, None) => true,
            (Some(v), None) | (None, Some(v)) => v.is_zero(),
            (Some(x), Some(y)) => x == y,
        }
    })
}

fn first_row_difference(a: &BracketRow, b: &BracketRow, pres: &Presentation) -> String {
    let keys: std::collections::BTreeSet<&MultiIndex> = a.keys().chain(b.keys()).collect();
    for k in keys {
        let va = a.get(k).cloned().unwrap_or_else(State::zero);
        let vb = b.get(k).cloned().unwrap_or_else(State::zero);
        if va != vb {
            return format!(
                "index {k}: skew expects `{}`, table has `{}`",
                va.render(pres),
                vb.render(pres)
            );
        }
    }
    "rows agree".into()
}

/// All indices dominated by some key of the row (candidate output indices
/// for the skew image).
fn all_keys_below(keys: &[&MultiIndex]) -> Vec<MultiIndex> {
    let mut out = std::collections::BTreeSet::new();
    for k in keys {
        for j in MultiIndex::all_bounded(k.len(), k.total()) {
            if j.leq(k).unwrap_or(false) {
                out.insert(j);
            }
        }
    }
    out.into_iter().collect()
}

/// Mode ordering key used to pick elimination pivots: largest mode first.
#[derive(Clone, PartialEq, Eq, Debug)]
struct ModeKey(usize, MultiIndex);

impl PartialOrd for ModeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ModeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .cmp(&other.0)
            .then_with(|| self.1.rev_lex_cmp(&other.1))
    }
}

/// Exact Gaussian elimination of the mode relations into a rewrite map
/// (pivot mode -> combination of non-pivot modes).
fn eliminate_relations(
    relations: &[ModeRelation],
) -> BTreeMap<(usize, MultiIndex), Vec<(NegMode, Rational)>> {
    let mut rows: Vec<BTreeMap<ModeKey, Rational>> = relations
        .iter()
        .map(|r| {
            let mut row = BTreeMap::new();
            for (g, k, c) in &r.terms {
                let key = ModeKey(*g, k.clone());
                let e = row.entry(key).or_insert_with(Rational::zero);
                *e += c;
            }
            row.retain(|_, c: &mut Rational| !c.is_zero());
            row
        })
        .collect();

    let mut pivots: Vec<(ModeKey, usize)> = Vec::new();
    loop {
        // the unprocessed row with the largest leading mode
        let mut best: Option<(ModeKey, usize)> = None;
        for (i, row) in rows.iter().enumerate() {
            if pivots.iter().any(|(_, r)| *r == i) {
                continue;
            }
            if let Some(lead) = row.keys().next_back() {
                if best.as_ref().map_or(true, |(k, _)| lead > k) {
                    best = Some((lead.clone(), i));
                }
            }
        }
        let Some((pivot, idx)) = best else { break };
        let scale = rows[idx][&pivot].clone();
        for c in rows[idx].values_mut() {
            *c /= &scale;
        }
        let pivot_row = rows[idx].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == idx {
                continue;
            }
            if let Some(c) = row.get(&pivot).cloned() {
                for (k, v) in &pivot_row {
                    let e = row.entry(k.clone()).or_insert_with(Rational::zero);
                    *e -= &c * v;
                }
                row.retain(|_, v: &mut Rational| !v.is_zero());
            }
        }
        pivots.push((pivot, idx));
    }

    let mut out = BTreeMap::new();
    for (pivot, idx) in pivots {
        let subs: Vec<(NegMode, Rational)> = rows[idx]
            .iter()
            .filter(|(k, _)| **k != pivot)
            .map(|(k, c)| (NegMode::new(k.0, k.1.clone()), -c))
            .collect();
        out.insert((pivot.0, pivot.1), subs);
    }
    out
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Debug)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(char),
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

fn lex(text: &str) -> Result<Lexer> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c == '\n' {
            chars.next();
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            col += 1;
            continue;
        }
        if c == '#' {
            while let Some(&d) = chars.peek() {
                if d == '\n' {
                    break;
                }
                chars.next();
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_ascii_digit() {
                    s.push(d);
                    chars.next();
                    col += 1;
                } else {
                    break;
                }
            }
            let v: i64 = s.parse().map_err(|_| Error::Parse {
                line: tl,
                col: tc,
                msg: format!("integer out of range: {s}"),
            })?;
            toks.push((Tok::Int(v), tl, tc));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_alphanumeric() || d == '_' || d == '\'' {
                    s.push(d);
                    chars.next();
                    col += 1;
                } else {
                    break;
                }
            }
            toks.push((Tok::Ident(s), tl, tc));
            continue;
        }
        if "{}()[],;:=*+-^/".contains(c) {
            chars.next();
            col += 1;
            toks.push((Tok::Punct(c), tl, tc));
            continue;
        }
        return Err(Error::Parse {
            line: tl,
            col: tc,
            msg: format!("unexpected character `{c}`"),
        });
    }
    Ok(Lexer { toks, pos: 0 })
}

impl Lexer {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(t, _, _)| t)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or((0, 0))
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (line, col) = self.here();
        Err(Error::Parse {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn expect_punct(&mut self, c: char) -> Result<()> {
        match self.peek() {
            Some(Tok::Punct(d)) if *d == c => {
                self.pos += 1;
                Ok(())
            }
            other => self.err(format!("expected `{c}`, found {other:?}")),
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            other => self.err(format!("expected `{kw}`, found {other:?}")),
        }
    }

    fn expect_ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {other:?}")),
        }
    }

    fn expect_int(&mut self) -> Result<i64> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            other => self.err(format!("expected integer, found {other:?}")),
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(d)) if *d == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
}

/// Parse a presentation from its text form.
pub fn parse_presentation(text: &str) -> Result<Presentation> {
    let mut lx = lex(text)?;
    lx.expect_kw("cva")?;
    lx.expect_punct('{')?;
    let mut n: Option<usize> = None;
    let mut nd: Option<i64> = None;
    let mut spin_denom = 1u32;
    let mut params: Vec<(String, i64)> = Vec::new();
    let mut gens: Vec<Generator> = Vec::new();
    // brackets and relations are collected raw and resolved second pass
    struct RawEntry {
        a: String,
        b: String,
        k: MultiIndex,
        expr: StateExpr,
    }
    let mut entries: Vec<RawEntry> = Vec::new();
    let mut raw_rels: Vec<Vec<(String, MultiIndex, Rational)>> = Vec::new();

    while !lx.eat_punct('}') {
        if lx.eat_kw("n") {
            lx.expect_punct('=')?;
            n = Some(lx.expect_int()? as usize);
            lx.expect_punct(';')?;
        } else if lx.eat_kw("N") {
            lx.expect_punct('=')?;
            nd = Some(lx.expect_int()?);
            lx.expect_punct(';')?;
        } else if lx.eat_kw("L") {
            lx.expect_punct('=')?;
            spin_denom = lx.expect_int()? as u32;
            lx.expect_punct(';')?;
        } else if lx.eat_kw("params") {
            lx.expect_punct('{')?;
            while !lx.eat_punct('}') {
                let name = lx.expect_ident()?;
                lx.expect_punct(':')?;
                lx.expect_kw("deg")?;
                let neg = lx.eat_punct('-');
                let mut d = lx.expect_int()?;
                if neg {
                    d = -d;
                }
                params.push((name, d));
                lx.eat_punct(';');
            }
        } else if lx.eat_kw("gen") {
            let name = lx.expect_ident()?;
            lx.expect_punct(':')?;
            lx.expect_kw("deg")?;
            let neg = lx.eat_punct('-');
            let mut degree = lx.expect_int()?;
            if neg {
                degree = -degree;
            }
            lx.expect_punct(',')?;
            lx.expect_kw("parity")?;
            let par = lx.expect_ident()?;
            let odd = match par.as_str() {
                "even" => false,
                "odd" => true,
                _ => return lx.err("parity must be even or odd"),
            };
            lx.expect_punct(',')?;
            lx.expect_kw("spin")?;
            let nn = n.ok_or_else(|| Error::Invalid("spin before n".into()))?;
            let spin = parse_spin_vec(&mut lx, nn)?;
            lx.expect_punct(';')?;
            gens.push(Generator {
                name,
                degree,
                odd,
                spin,
            });
        } else if lx.eat_kw("bracket") {
            lx.expect_punct('(')?;
            let a = lx.expect_ident()?;
            lx.expect_punct(',')?;
            let b = lx.expect_ident()?;
            lx.expect_punct(')')?;
            lx.expect_punct('{')?;
            let nn = n.ok_or_else(|| Error::Invalid("bracket before n".into()))?;
            while !lx.eat_punct('}') {
                let k = parse_index(&mut lx, nn)?;
                lx.expect_punct('=')?;
                let expr = parse_state_expr(&mut lx, nn)?;
                lx.expect_punct(';')?;
                entries.push(RawEntry {
                    a: a.clone(),
                    b: b.clone(),
                    k,
                    expr,
                });
            }
        } else if lx.eat_kw("rel") {
            lx.expect_punct('{')?;
            let nn = n.ok_or_else(|| Error::Invalid("rel before n".into()))?;
            let mut terms = Vec::new();
            let mut sign = if lx.eat_punct('-') { -1i64 } else { 1 };
            loop {
                // [coef *] gen [-1-k]
                let mut coef = Rational::from_integer(BigInt::from(sign));
                if matches!(lx.peek(), Some(Tok::Int(_))) {
                    let r = parse_rational(&mut lx)?;
                    coef = coef * r;
                    lx.expect_punct('*')?;
                }
                let gname = lx.expect_ident()?;
                let k = parse_mode_index(&mut lx, nn)?;
                terms.push((gname, k, coef));
                if lx.eat_punct('+') {
                    sign = 1;
                } else if lx.eat_punct('-') {
                    sign = -1;
                } else {
                    break;
                }
            }
            lx.expect_punct('=')?;
            let z = lx.expect_int()?;
            if z != 0 {
                return lx.err("relation must equal 0");
            }
            lx.eat_punct(';');
            lx.expect_punct('}')?;
            raw_rels.push(terms);
        } else {
            return lx.err("expected a section keyword");
        }
    }

    let n = n.ok_or_else(|| Error::Invalid("missing n".into()))?;
    let nd = nd.ok_or_else(|| Error::Invalid("missing N".into()))?;
    let ring = Arc::new(ParamRing::new(params)?);
    let ambient = Ambient::new(n, nd);
    // resolve relations
    let gen_index = |name: &str| -> Result<usize> {
        gens.iter()
            .position(|g| g.name == name)
            .ok_or_else(|| Error::UnknownGenerator(name.to_string()))
    };
    let mut relations = Vec::new();
    for raw in raw_rels {
        let mut terms = Vec::new();
        for (name, k, c) in raw {
            terms.push((gen_index(&name)?, k, c));
        }
        relations.push(ModeRelation { terms });
    }
    let mut pres = Presentation::skeleton(ambient, ring, spin_denom, gens, relations)?;
    // resolve bracket entries
    let mut table: BTreeMap<(usize, usize), BracketRow> = BTreeMap::new();
    for e in entries {
        let a = pres.gen_index(&e.a)?;
        let b = pres.gen_index(&e.b)?;
        let v = eval_state_expr(&e.expr, &pres)?;
        let row = table.entry((a, b)).or_default();
        if row.contains_key(&e.k) {
            return Err(Error::Invalid(format!(
                "duplicate bracket index {} for ({},{})",
                e.k, e.a, e.b
            )));
        }
        row.insert(e.k, v);
    }
    for ((a, b), row) in table {
        pres.insert_row(a, b, row);
    }
    Ok(pres)
}

fn parse_spin_vec(lx: &mut Lexer, n: usize) -> Result<Vec<Rational>> {
    if lx.eat_punct('(') {
        let mut out = Vec::new();
        loop {
            out.push(parse_signed_rational(lx)?);
            if lx.eat_punct(')') {
                break;
            }
            lx.expect_punct(',')?;
        }
        if out.len() != n {
            return lx.err(format!("spin vector of length {} in ambient n={n}", out.len()));
        }
        Ok(out)
    } else {
        let r = parse_signed_rational(lx)?;
        if n != 1 {
            return lx.err("bare spin only for n=1");
        }
        Ok(vec![r])
    }
}

fn parse_signed_rational(lx: &mut Lexer) -> Result<Rational> {
    let neg = lx.eat_punct('-');
    let r = parse_rational(lx)?;
    Ok(if neg { -r } else { r })
}

fn parse_rational(lx: &mut Lexer) -> Result<Rational> {
    let p = lx.expect_int()?;
    if lx.eat_punct('/') {
        let q = lx.expect_int()?;
        if q == 0 {
            return lx.err("zero denominator");
        }
        Ok(Rational::new(BigInt::from(p), BigInt::from(q)))
    } else {
        Ok(Rational::from_integer(BigInt::from(p)))
    }
}

/// Multi-index literal: `(a,b,c)`, or a bare integer when `n = 1`.
fn parse_index(lx: &mut Lexer, n: usize) -> Result<MultiIndex> {
    if lx.eat_punct('(') {
        let mut out = Vec::new();
        loop {
            out.push(lx.expect_int()? as u32);
            if lx.eat_punct(')') {
                break;
            }
            lx.expect_punct(',')?;
        }
        if out.len() != n {
            return lx.err(format!("index arity {} in ambient n={n}", out.len()));
        }
        Ok(MultiIndex(out))
    } else {
        let v = lx.expect_int()?;
        if n != 1 {
            return lx.err("bare index only for n=1");
        }
        Ok(MultiIndex(vec![v as u32]))
    }
}

/// `[-1-k]` mode suffix.
fn parse_mode_index(lx: &mut Lexer, n: usize) -> Result<MultiIndex> {
    lx.expect_punct('[')?;
    lx.expect_punct('-')?;
    let one = lx.expect_int()?;
    if one != 1 {
        return lx.err("mode must be written [-1-k]");
    }
    lx.expect_punct('-')?;
    let k = parse_index(lx, n)?;
    lx.expect_punct(']')?;
    Ok(k)
}

/// Unresolved state expression (names looked up against the presentation in
/// a second pass).
#[derive(Clone, Debug)]
enum StateExpr {
    Sum(Vec<(Rational, StateTerm)>),
}

#[derive(Clone, Debug)]
struct StateTerm {
    params: Vec<(String, u32)>,
    rationals: Rational,
    atom: StateAtom,
}

#[derive(Clone, Debug)]
enum StateAtom {
    Vac,
    Zero,
    Modes(Vec<(String, MultiIndex)>),
    BareGen(String),
    Translate(MultiIndex, String),
}

fn parse_state_expr(lx: &mut Lexer, n: usize) -> Result<StateExpr> {
    let mut terms = Vec::new();
    let mut sign = if lx.eat_punct('-') {
        -Rational::one()
    } else {
        Rational::one()
    };
    loop {
        let term = parse_state_term(lx, n)?;
        terms.push((sign.clone(), term));
        if lx.eat_punct('+') {
            sign = Rational::one();
        } else if lx.eat_punct('-') {
            sign = -Rational::one();
        } else {
            break;
        }
    }
    Ok(StateExpr::Sum(terms))
}

fn parse_state_term(lx: &mut Lexer, n: usize) -> Result<StateTerm> {
    let mut params: Vec<(String, u32)> = Vec::new();
    let mut rationals = Rational::one();
    loop {
        match lx.peek() {
            Some(Tok::Int(_)) => {
                let r = parse_rational(lx)?;
                rationals *= r;
                if !lx.eat_punct('*') {
                    // a bare number must be the whole term: `0`
                    if rationals.is_zero() {
                        return Ok(StateTerm {
                            params,
                            rationals,
                            atom: StateAtom::Zero,
                        });
                    }
                    return lx.err("expected `*` after numeric factor");
                }
            }
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                if s == "vac" {
                    lx.pos += 1;
                    return Ok(StateTerm {
                        params,
                        rationals,
                        atom: StateAtom::Vac,
                    });
                }
                if s == "T" && matches!(lx.peek2(), Some(Tok::Punct('('))) {
                    lx.pos += 1;
                    lx.expect_punct('(')?;
                    let mut out = Vec::new();
                    loop {
                        out.push(lx.expect_int()? as u32);
                        if lx.eat_punct(')') {
                            break;
                        }
                        lx.expect_punct(',')?;
                    }
                    if out.len() != n {
                        return lx.err(format!("index arity {} in ambient n={n}", out.len()));
                    }
                    let k = MultiIndex(out);
                    let g = lx.expect_ident()?;
                    return Ok(StateTerm {
                        params,
                        rationals,
                        atom: StateAtom::Translate(k, g),
                    });
                }
                // generator mode string or parameter factor
                if matches!(lx.peek2(), Some(Tok::Punct('['))) {
                    // mode string: gen[-1-k] ... vac
                    let mut modes = Vec::new();
                    loop {
                        match lx.peek() {
                            Some(Tok::Ident(name)) if name == "vac" => {
                                lx.pos += 1;
                                return Ok(StateTerm {
                                    params,
                                    rationals,
                                    atom: StateAtom::Modes(modes),
                                });
                            }
                            Some(Tok::Ident(name)) => {
                                let name = name.clone();
                                lx.pos += 1;
                                let k = parse_mode_index(lx, n)?;
                                modes.push((name, k));
                            }
                            _ => return lx.err("expected mode or `vac`"),
                        }
                    }
                }
                // parameter factor `c` or `c^2`, else a bare generator
                lx.pos += 1;
                if lx.eat_punct('^') {
                    let e = lx.expect_int()? as u32;
                    params.push((s, e));
                    lx.expect_punct('*')?;
                } else if lx.eat_punct('*') {
                    params.push((s, 1));
                } else {
                    return Ok(StateTerm {
                        params,
                        rationals,
                        atom: StateAtom::BareGen(s),
                    });
                }
            }
            other => return lx.err(format!("unexpected token in state: {other:?}")),
        }
    }
}

fn eval_state_expr(expr: &StateExpr, pres: &Presentation) -> Result<State> {
    let StateExpr::Sum(terms) = expr;
    let mut out = State::zero();
    for (sign, term) in terms {
        let mut coeff = Scalar::from_rational(pres.ring.clone(), sign * &term.rationals);
        for (name, exp) in &term.params {
            let idx = pres
                .ring
                .lookup(name)
                .ok_or_else(|| Error::UnknownGenerator(format!("parameter {name}")))?;
            for _ in 0..*exp {
                coeff = coeff.mul(&Scalar::param(pres.ring.clone(), idx));
            }
        }
        let piece = match &term.atom {
            StateAtom::Zero => State::zero(),
            StateAtom::Vac => State::of_monomial(crate::state::Monomial::vacuum(), coeff),
            StateAtom::BareGen(name) => {
                let g = pres.gen_index(name)?;
                pres.state(&[(g, MultiIndex::zero(pres.ambient.vars))], coeff)?
            }
            StateAtom::Modes(modes) => {
                let resolved: Result<Vec<(usize, MultiIndex)>> = modes
                    .iter()
                    .map(|(name, k)| Ok((pres.gen_index(name)?, k.clone())))
                    .collect();
                pres.state(&resolved?, coeff)?
            }
            StateAtom::Translate(k, name) => {
                let g = pres.gen_index(name)?;
                let base = pres.state(&[(g, MultiIndex::zero(pres.ambient.vars))], coeff)?;
                translate(k, &base, pres)
            }
        };
        out = out.add(&piece);
    }
    Ok(out)
}

/// Parse a state in the mode-string syntax against a presentation, e.g.
/// `2 * Gamma[-1-1] vac + c * vac`.
pub fn parse_state(text: &str, pres: &Presentation) -> Result<State> {
    let mut lx = lex(text)?;
    let expr = parse_state_expr(&mut lx, pres.ambient.vars)?;
    if lx.peek().is_some() {
        return lx.err("trailing input after state");
    }
    eval_state_expr(&expr, pres)
}

/// Parse a bare scalar, e.g. `3/2 * c^2`.
pub fn parse_scalar(text: &str, ring: &Arc<ParamRing>) -> Result<Scalar> {
    let mut lx = lex(text)?;
    let mut out = Scalar::zero(ring.clone());
    let mut sign = if lx.eat_punct('-') {
        -Rational::one()
    } else {
        Rational::one()
    };
    loop {
        let mut coeff = Scalar::from_rational(ring.clone(), sign.clone());
        loop {
            match lx.peek() {
                Some(Tok::Int(_)) => {
                    let r = parse_rational(&mut lx)?;
                    coeff = coeff.scale(&r);
                }
                Some(Tok::Ident(name)) => {
                    let name = name.clone();
                    lx.pos += 1;
                    let idx = ring
                        .lookup(&name)
                        .ok_or_else(|| Error::UnknownGenerator(format!("parameter {name}")))?;
                    let mut e = 1u32;
                    if lx.eat_punct('^') {
                        e = lx.expect_int()? as u32;
                    }
                    for _ in 0..e {
                        coeff = coeff.mul(&Scalar::param(ring.clone(), idx));
                    }
                }
                _ => return lx.err("expected scalar factor"),
            }
            if !lx.eat_punct('*') {
                break;
            }
        }
        out = out.add(&coeff);
        if lx.eat_punct('+') {
            sign = Rational::one();
        } else if lx.eat_punct('-') {
            sign = -Rational::one();
        } else {
            break;
        }
    }
    if lx.peek().is_some() {
        return lx.err("trailing input after scalar");
    }
    Ok(out)
}

/// Canonical text form; `parse_presentation(render(p))` reproduces `p`.
pub fn render(pres: &Presentation) -> String {
    let mut s = String::new();
    let n = pres.ambient.vars;
    writeln!(s, "cva {{").unwrap();
    writeln!(s, "  n={}; N={};", n, pres.ambient.omega_degree).unwrap();
    if !pres.ring.is_empty() {
        let params: Vec<String> = pres
            .ring
            .params()
            .iter()
            .map(|(p, d)| format!("{p} : deg {d};"))
            .collect();
        writeln!(s, "  params {{ {} }}", params.join(" ")).unwrap();
    }
    writeln!(s, "  L={};", pres.spin_denom).unwrap();
    for g in &pres.gens {
        let spin: Vec<String> = g.spin.iter().map(|x| x.to_string()).collect();
        writeln!(
            s,
            "  gen {} : deg {}, parity {}, spin ({});",
            g.name,
            g.degree,
            if g.odd { "odd" } else { "even" },
            spin.join(",")
        )
        .unwrap();
    }
    for ((a, b), row) in &pres.table {
        writeln!(
            s,
            "  bracket ({}, {}) {{",
            pres.gens[*a].name, pres.gens[*b].name
        )
        .unwrap();
        for (k, v) in row {
            writeln!(s, "    ({}) = {};", join_index(k), v.render(pres)).unwrap();
        }
        writeln!(s, "  }}").unwrap();
    }
    for r in &pres.relations {
        let terms: Vec<String> = r
            .terms
            .iter()
            .map(|(g, k, c)| {
                format!(
                    "{}*{}[-1-({})]",
                    c,
                    pres.gens[*g].name,
                    join_index(k)
                )
            })
            .collect();
        writeln!(s, "  rel {{ {} = 0; }}", terms.join(" + ")).unwrap();
    }
    writeln!(s, "}}").unwrap();
    s
}

fn join_index(k: &MultiIndex) -> String {
    k.0.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{enumerate_basis, Monomial};

    pub(crate) const CW1_SRC: &str = "cva { n=1; N=1; params { c : deg 1 } L=1;
      gen Gamma : deg 1, parity even, spin (2);
      bracket (Gamma, Gamma) {
        0 = T(1) Gamma;          # state shifted once
        1 = 2 * Gamma;
        3 = c * vac; } }";

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn parse_cw1_source() {
        let p = parse_presentation(CW1_SRC).unwrap();
        assert_eq!(p.ambient.vars, 1);
        assert_eq!(p.ambient.omega_degree, 1);
        assert_eq!(p.gens.len(), 1);
        let row = p.bracket_row(0, 0).unwrap();
        assert_eq!(row.len(), 3);
        // (0) entry is Gamma[-1-1] vac with coefficient 1
        let v0 = &row[&mi(&[0])];
        let expect = p
            .state(&[(0, mi(&[1]))], Scalar::one(p.ring.clone()))
            .unwrap();
        assert_eq!(v0, &expect);
        // (3) entry is c * vac
        let v3 = &row[&mi(&[3])];
        let cvac = State::of_monomial(
            crate::state::Monomial::vacuum(),
            Scalar::param(p.ring.clone(), 0),
        );
        assert_eq!(v3, &cvac);
        assert!(p.validate().is_empty(), "{:?}", p.validate());
    }

    #[test]
    fn cw1_is_skew_consistent() {
        let p = parse_presentation(CW1_SRC).unwrap();
        let q = p.clone().skew_complete().unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn corrupted_central_term_fails_skew() {
        // flipping the sign of the degree-3 entry breaks nothing (it is
        // skew-fixed), but corrupting the (1) entry does
        let src = CW1_SRC.replace("2 * Gamma", "3 * Gamma");
        let p = parse_presentation(&src).unwrap();
        assert!(p.skew_complete().is_err());
    }

    #[test]
    fn malformed_index_arity() {
        let src = CW1_SRC.replace("1 = 2 * Gamma;", "(1,2) = 2 * Gamma;");
        assert!(parse_presentation(&src).is_err());
    }

    #[test]
    fn render_round_trip() {
        let p = parse_presentation(CW1_SRC).unwrap();
        let text = render(&p);
        let q = parse_presentation(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn validation_catches_degree_violation() {
        let src = CW1_SRC.replace("deg 1, parity even", "deg 0, parity even");
        let p = parse_presentation(&src).unwrap();
        assert!(!p.validate().is_empty());
    }

    fn heisenberg2() -> Presentation {
        // two commuting even b-generators with the gradient relations at
        // low mode totals, spin(b^i) = e_i
        let ring = ParamRing::trivial();
        let gens = vec![
            Generator::even("b1", 0, vec![Rational::one(), Rational::zero()]),
            Generator::even("b2", 0, vec![Rational::zero(), Rational::one()]),
        ];
        let mut relations = Vec::new();
        for k in MultiIndex::all_bounded(2, 4) {
            let kj = |i: usize| Rational::from_integer(BigInt::from(k.0[i] + 1));
            relations.push(ModeRelation {
                terms: vec![
                    (0, k.add(&mi(&[0, 1])).unwrap(), kj(1)),
                    (1, k.add(&mi(&[1, 0])).unwrap(), -kj(0)),
                ],
            });
        }
        Presentation::skeleton(Ambient::new(2, 1), ring, 1, gens, relations).unwrap()
    }

    #[test]
    fn gradient_relation_rewrites_modes() {
        let p = heisenberg2();
        let a = p
            .state(&[(0, mi(&[0, 1]))], Scalar::one(p.ring.clone()))
            .unwrap();
        let b = p
            .state(&[(1, mi(&[1, 0]))], Scalar::one(p.ring.clone()))
            .unwrap();
        assert_eq!(a, b);
        assert!(!a.is_zero());
        // k = (1,0): 1*b1_(-1-(1,1)) = 2*b2_(-1-(2,0))
        let c = p
            .state(&[(0, mi(&[1, 1]))], Scalar::one(p.ring.clone()))
            .unwrap();
        let d = p
            .state(&[(1, mi(&[2, 0]))], Scalar::from_int(p.ring.clone(), 2))
            .unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn normalize_koszul_and_odd_square() {
        let ring = ParamRing::trivial();
        let gens = vec![
            Generator::fermionic("x", 0, vec![Rational::one()]),
            Generator::fermionic("y", 0, vec![Rational::one()]),
        ];
        let p = Presentation::skeleton(Ambient::new(1, 1), ring, 1, gens, vec![]).unwrap();
        let one = Scalar::one(p.ring.clone());
        // odd square vanishes
        let sq = p.state(&[(0, mi(&[0])), (0, mi(&[0]))], one.clone()).unwrap();
        assert!(sq.is_zero());
        // swapping two odd modes flips the sign
        let xy = p.state(&[(0, mi(&[0])), (1, mi(&[0]))], one.clone()).unwrap();
        let yx = p.state(&[(1, mi(&[0])), (0, mi(&[0]))], one).unwrap();
        assert_eq!(xy, yx.neg());
        // normalization is idempotent under re-normalization of the terms
        for (m, c) in &xy.terms {
            let again = normalize(m.modes(), c, &p).unwrap();
            assert_eq!(again, State::of_monomial(m.clone(), c.clone()));
        }
    }

    #[test]
    fn translate_examples() {
        let p = parse_presentation(CW1_SRC).unwrap();
        let one = Scalar::one(p.ring.clone());
        let a = p.state(&[(0, mi(&[2]))], one.clone()).unwrap();
        let ta = translate(&mi(&[1]), &a, &p);
        let expect = p.state(&[(0, mi(&[3]))], Scalar::from_int(p.ring.clone(), 3)).unwrap();
        assert_eq!(ta, expect);
        // T^(0) is the identity
        assert_eq!(translate(&mi(&[0]), &a, &p), a);
        // composition: T^(j) T^(k) = binom(j+k,j) T^(j+k)
        let v = p.state(&[(0, mi(&[1])), (0, mi(&[0]))], one).unwrap();
        for (j, k) in [(1u32, 1u32), (2, 1), (1, 3)] {
            let lhs = translate(&mi(&[j]), &translate(&mi(&[k]), &v, &p), &p);
            let rhs = translate(&mi(&[j + k]), &v, &p)
                .scale(&Rational::from_integer(crate::arith::binom_u32(j + k, j)));
            assert_eq!(lhs, rhs, "j={j} k={k}");
        }
        // exp(zT) exp(-zT) = id, coefficientwise to order 4: the coefficient
        // of z^m for m > 0 in sum_{j+k=m} (-1)^k T^(j) T^(k) v vanishes
        for m in 1u32..=4 {
            let mut acc = State::zero();
            for j in 0..=m {
                let k = m - j;
                let mut piece = translate(&mi(&[j]), &translate(&mi(&[k]), &v, &p), &p);
                if k % 2 == 1 {
                    piece = piece.neg();
                }
                acc = acc.add(&piece);
            }
            assert!(acc.is_zero(), "m={m}");
        }
    }

    #[test]
    fn enumerate_cw1() {
        let p = parse_presentation(CW1_SRC).unwrap();
        let two = vec![Rational::from_integer(BigInt::from(2))];
        let basis = enumerate_basis(&p, None, &two, None).unwrap();
        assert_eq!(basis.len(), 2); // vac, Gamma_(-1)
        let four = vec![Rational::from_integer(BigInt::from(4))];
        let basis = enumerate_basis(&p, None, &four, None).unwrap();
        // vac and k = 0,1,2; the modes are odd (degree N = 1) so no repeats,
        // and the first distinct pair already has spin 5
        assert_eq!(basis.len(), 4);
        assert!(basis.contains(&Monomial::vacuum()));
    }

    #[test]
    fn enumerate_rejects_flat_even_mode() {
        let ring = ParamRing::trivial();
        let gens = vec![Generator::even("beta", 0, vec![Rational::zero()])];
        let p = Presentation::skeleton(Ambient::new(1, 1), ring, 1, gens, vec![]).unwrap();
        let bound = vec![Rational::from_integer(BigInt::from(3))];
        assert!(enumerate_basis(&p, None, &bound, None).is_err());
        // with a cutoff it enumerates fine
        let c = crate::state::Cutoff {
            max_mode_total: 3,
            max_len: 2,
        };
        assert!(enumerate_basis(&p, None, &bound, Some(c)).is_ok());
    }

    #[test]
    fn scalar_and_state_parsing() {
        let p = parse_presentation(CW1_SRC).unwrap();
        let s = parse_scalar("3/2 * c", &p.ring).unwrap();
        assert_eq!(s, Scalar::param(p.ring.clone(), 0).scale(&Rational::new(3.into(), 2.into())));
        let v = parse_state("2 * Gamma[-1-1] vac + c * vac - Gamma", &p).unwrap();
        let rendered = v.render(&p);
        let again = parse_state(&rendered, &p).unwrap();
        assert_eq!(v, again, "rendered: {rendered}");
    }
}
