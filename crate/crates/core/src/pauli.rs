//! Pauli strings and weighted Pauli sums in symplectic form.
//!
//! A string on `n` qubits is stored as two bit masks: bit `k` of `x` is set
//! when qubit `k` carries X or Y, bit `k` of `z` when it carries Z or Y. The
//! string denotes `i^{|x & z|} X^x Z^z`, so `Y = iXZ` and every stored string
//! is Hermitian. Products and commutation reduce to popcounts.
//!
//! Sums keep their terms sorted lexicographically over the letter array
//! (qubit 0 first, `I < X < Y < Z`) with no duplicates and no coefficient of
//! modulus below [`DROP_TOL`].

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::simulator::Statevector;

/// Coefficients below this modulus are dropped during canonicalization.
pub const DROP_TOL: f64 = 1e-12;

/// Largest register supported by the bit-mask encoding.
pub const MAX_QUBITS: usize = 64;

const I_POW: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

/// `i^k` for any integer `k`.
#[inline]
pub fn i_pow(k: i64) -> Complex64 {
    I_POW[k.rem_euclid(4) as usize]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Letter::I,
            (true, false) => Letter::X,
            (true, true) => Letter::Y,
            (false, true) => Letter::Z,
        }
    }

    fn bits(self) -> (bool, bool) {
        match self {
            Letter::I => (false, false),
            Letter::X => (true, false),
            Letter::Y => (true, true),
            Letter::Z => (false, true),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Letter::I),
            'X' => Some(Letter::X),
            'Y' => Some(Letter::Y),
            'Z' => Some(Letter::Z),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_qubits: usize,
    x: u64,
    z: u64,
}

fn mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn check_same(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Self {
        assert!(
            (1..=MAX_QUBITS).contains(&n_qubits),
            "PauliString supports 1..=64 qubits"
        );
        Self {
            n_qubits,
            x: 0,
            z: 0,
        }
    }

    /// Builds a string from raw symplectic masks. Bits above `n_qubits` must be clear.
    pub fn from_bits(n_qubits: usize, x: u64, z: u64) -> Self {
        let s = Self::identity(n_qubits);
        let m = mask(n_qubits);
        assert!(x & !m == 0 && z & !m == 0, "mask bits beyond register");
        Self { x, z, ..s }
    }

    /// `letters[k]` acts on qubit `k`.
    pub fn from_letters(letters: &[Letter]) -> Self {
        let mut s = Self::identity(letters.len());
        for (k, l) in letters.iter().enumerate() {
            s.set(k, *l);
        }
        s
    }

    pub fn single(n_qubits: usize, qubit: usize, letter: Letter) -> Self {
        let mut s = Self::identity(n_qubits);
        s.set(qubit, letter);
        s
    }

    /// Product of Z on every listed qubit.
    pub fn z_string(n_qubits: usize, qubits: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::identity(n_qubits);
        for q in qubits {
            s.set(q, Letter::Z);
        }
        s
    }

    pub fn set(&mut self, qubit: usize, letter: Letter) {
        assert!(qubit < self.n_qubits, "qubit {qubit} out of range");
        let (bx, bz) = letter.bits();
        let bit = 1u64 << qubit;
        self.x = (self.x & !bit) | if bx { bit } else { 0 };
        self.z = (self.z & !bit) | if bz { bit } else { 0 };
    }

    pub fn letter(&self, qubit: usize) -> Letter {
        Letter::from_bits(self.x >> qubit & 1 == 1, self.z >> qubit & 1 == 1)
    }

    pub fn letters(&self) -> Vec<Letter> {
        (0..self.n_qubits).map(|k| self.letter(k)).collect()
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn x_bits(&self) -> u64 {
        self.x
    }

    pub fn z_bits(&self) -> u64 {
        self.z
    }

    /// Qubits carrying a non-identity letter.
    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.support() == 0
    }

    /// True for Z/I tensor products.
    pub fn is_diagonal(&self) -> bool {
        self.x == 0
    }

    /// Phase exponent `|x & z|`, i.e. the number of Y letters.
    fn y_count(&self) -> i64 {
        (self.x & self.z).count_ones() as i64
    }

    /// Returns `(phase, product)` with `phase * product == self * other`.
    pub fn multiply(&self, other: &PauliString) -> Result<(Complex64, PauliString)> {
        check_same(self.n_qubits, other.n_qubits)?;
        Ok(self.multiply_unchecked(other))
    }

    pub(crate) fn multiply_unchecked(&self, other: &PauliString) -> (Complex64, PauliString) {
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        let product = PauliString {
            n_qubits: self.n_qubits,
            x,
            z,
        };
        let swap = (self.z & other.x).count_ones() as i64;
        let k = self.y_count() + other.y_count() + 2 * swap - product.y_count();
        (i_pow(k), product)
    }

    pub fn commutes(&self, other: &PauliString) -> Result<bool> {
        check_same(self.n_qubits, other.n_qubits)?;
        Ok(self.commutes_unchecked(other))
    }

    pub(crate) fn commutes_unchecked(&self, other: &PauliString) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) % 2 == 0
    }

    /// Qubit-wise commutation: on every qubit the letters agree or one is I.
    pub fn qubitwise_commutes(&self, other: &PauliString) -> bool {
        let both = self.support() & other.support();
        (self.x ^ other.x) & both == 0 && (self.z ^ other.z) & both == 0
    }

    /// Action on a computational basis state: `P|b> = phase |b'>`.
    #[inline]
    pub fn apply_to_basis(&self, b: usize) -> (Complex64, usize) {
        let b64 = b as u64;
        let sign = ((self.z & b64).count_ones() % 2) as i64;
        (i_pow(self.y_count() + 2 * sign), (b64 ^ self.x) as usize)
    }

    /// Eigenvalue (+1/-1) of a diagonal string on a computational basis state.
    #[inline]
    pub fn parity_sign(&self, b: usize) -> f64 {
        if (self.z & b as u64).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Drops the listed qubits and renumbers the rest in ascending order.
    pub fn remove_qubits(&self, removed: &[usize]) -> PauliString {
        let kept: Vec<usize> = (0..self.n_qubits).filter(|q| !removed.contains(q)).collect();
        let mut out = PauliString::identity(kept.len());
        for (new, &old) in kept.iter().enumerate() {
            out.set(new, self.letter(old));
        }
        out
    }

    /// Places this string on a larger register, qubit `k` moving to `positions[k]`.
    pub fn embed(&self, n_qubits: usize, positions: &[usize]) -> PauliString {
        assert_eq!(positions.len(), self.n_qubits);
        let mut out = PauliString::identity(n_qubits);
        for (k, &p) in positions.iter().enumerate() {
            out.set(p, self.letter(k));
        }
        out
    }

    /// Dense `2^n x 2^n` matrix.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            let (ph, b2) = self.apply_to_basis(b);
            m[(b2, b)] = ph;
        }
        m
    }
}

impl Ord for PauliString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n_qubits.cmp(&other.n_qubits).then_with(|| {
            for k in 0..self.n_qubits {
                let o = self.letter(k).cmp(&other.letter(k));
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PauliString {
    /// Qubit 0 is the rightmost character.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in (0..self.n_qubits).rev() {
            write!(f, "{}", self.letter(k).as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.is_empty() || chars.len() > MAX_QUBITS {
            return Err(Error::Parse(format!("bad Pauli string `{s}`")));
        }
        let n = chars.len();
        let mut out = PauliString::identity(n);
        for (i, c) in chars.iter().enumerate() {
            let l = Letter::from_char(*c)
                .ok_or_else(|| Error::Parse(format!("bad Pauli letter `{c}` in `{s}`")))?;
            out.set(n - 1 - i, l);
        }
        Ok(out)
    }
}

/// Weighted sum of Pauli strings in canonical form.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: Vec<(PauliString, Complex64)>,
}

impl PauliSum {
    pub fn zero(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            terms: Vec::new(),
        }
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self::from_string(PauliString::identity(n_qubits), Complex64::new(1.0, 0.0))
    }

    pub fn from_string(p: PauliString, coeff: Complex64) -> Self {
        Self::from_terms(p.n_qubits(), [(p, coeff)]).expect("single term")
    }

    /// Collects terms, merging duplicates and dropping negligible coefficients.
    pub fn from_terms(
        n_qubits: usize,
        terms: impl IntoIterator<Item = (PauliString, Complex64)>,
    ) -> Result<Self> {
        let mut acc: HashMap<PauliString, Complex64> = HashMap::new();
        for (p, c) in terms {
            check_same(n_qubits, p.n_qubits())?;
            *acc.entry(p).or_default() += c;
        }
        Ok(Self::from_map(n_qubits, acc))
    }

    fn from_map(n_qubits: usize, acc: HashMap<PauliString, Complex64>) -> Self {
        let mut terms: Vec<_> = acc.into_iter().filter(|(_, c)| c.norm() >= DROP_TOL).collect();
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        Self { n_qubits, terms }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(PauliString, Complex64)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, p: &PauliString) -> Complex64 {
        self.terms
            .binary_search_by(|(q, _)| q.cmp(p))
            .map(|i| self.terms[i].1)
            .unwrap_or_default()
    }

    pub fn add(&self, other: &PauliSum) -> Result<PauliSum> {
        check_same(self.n_qubits, other.n_qubits)?;
        Self::from_terms(
            self.n_qubits,
            self.terms.iter().chain(other.terms.iter()).copied(),
        )
    }

    pub fn sub(&self, other: &PauliSum) -> Result<PauliSum> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> PauliSum {
        Self::from_terms(self.n_qubits, self.terms.iter().map(|(p, c)| (*p, c * s)))
            .expect("same register")
    }

    /// Adds `c * I`.
    pub fn shift(&self, c: f64) -> PauliSum {
        self.add(&PauliSum::identity(self.n_qubits).scale(Complex64::new(c, 0.0)))
            .expect("same register")
    }

    pub fn adjoint(&self) -> PauliSum {
        Self::from_terms(self.n_qubits, self.terms.iter().map(|(p, c)| (*p, c.conj())))
            .expect("same register")
    }

    /// Operator product `self * other`.
    pub fn sum_product(&self, other: &PauliSum) -> Result<PauliSum> {
        check_same(self.n_qubits, other.n_qubits)?;
        let mut acc: HashMap<PauliString, Complex64> =
            HashMap::with_capacity(self.len() * other.len());
        for (p, a) in &self.terms {
            for (q, b) in &other.terms {
                let (ph, r) = p.multiply_unchecked(q);
                *acc.entry(r).or_default() += ph * a * b;
            }
        }
        Ok(Self::from_map(self.n_qubits, acc))
    }

    /// `self^k` for `k >= 1`, aborting once an intermediate exceeds `max_terms`.
    pub fn power(&self, k: u32, max_terms: usize) -> Result<PauliSum> {
        assert!(k >= 1);
        let mut out = self.clone();
        for _ in 1..k {
            out = out.sum_product(self)?;
            if out.len() > max_terms {
                return Err(Error::TermExplosion(out.len()));
            }
        }
        Ok(out)
    }

    pub fn commutator_is_zero(&self, other: &PauliSum) -> Result<bool> {
        let ab = self.sum_product(other)?;
        let ba = other.sum_product(self)?;
        Ok(ab.sub(&ba)?.terms.iter().all(|(_, c)| c.norm() < 1e-10))
    }

    pub fn max_imag(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.im.abs()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        self.max_imag() < DROP_TOL
    }

    /// Checks Hermiticity and strips residual imaginary parts.
    pub fn into_hermitian(self) -> Result<PauliSum> {
        let m = self.max_imag();
        if m >= 1e-9 {
            return Err(Error::NonHermitian(m));
        }
        Self::from_terms(
            self.n_qubits,
            self.terms.into_iter().map(|(p, c)| (p, Complex64::new(c.re, 0.0))),
        )
    }

    /// Coefficient of the identity string.
    pub fn constant(&self) -> Complex64 {
        self.coefficient(&PauliString::identity(self.n_qubits))
    }

    /// `self |psi>` on raw amplitudes.
    pub fn apply(&self, amps: &[Complex64]) -> Result<Vec<Complex64>> {
        check_same(1usize << self.n_qubits, amps.len())?;
        let mut out = vec![Complex64::default(); amps.len()];
        for (p, c) in &self.terms {
            for (b, a) in amps.iter().enumerate() {
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let (ph, b2) = p.apply_to_basis(b);
                out[b2] += c * ph * a;
            }
        }
        Ok(out)
    }

    /// `<psi|self|psi>` for a normalized state.
    pub fn expectation(&self, psi: &Statevector) -> Result<Complex64> {
        check_same(self.n_qubits, psi.n_qubits())?;
        let dev = (psi.norm() - 1.0).abs();
        if dev > 1e-10 {
            return Err(Error::NotNormalized(dev));
        }
        let v = self.expectation_unchecked(psi.amplitudes());
        if v.im.abs() < DROP_TOL {
            Ok(Complex64::new(v.re, 0.0))
        } else {
            Ok(v)
        }
    }

    pub(crate) fn expectation_unchecked(&self, amps: &[Complex64]) -> Complex64 {
        let mut total = Complex64::default();
        for (p, c) in &self.terms {
            let mut acc = Complex64::default();
            for (b, a) in amps.iter().enumerate() {
                let (ph, b2) = p.apply_to_basis(b);
                acc += amps[b2].conj() * ph * a;
            }
            total += c * acc;
        }
        total
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for (p, c) in &self.terms {
            for b in 0..dim {
                let (ph, b2) = p.apply_to_basis(b);
                m[(b2, b)] += c * ph;
            }
        }
        m
    }

    /// Matrix restricted to the span of the given computational basis states.
    pub fn matrix_in_subspace(&self, basis: &[usize]) -> DMatrix<Complex64> {
        let index: HashMap<usize, usize> = basis.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let d = basis.len();
        let mut m = DMatrix::zeros(d, d);
        for (col, &b) in basis.iter().enumerate() {
            for (p, c) in &self.terms {
                let (ph, b2) = p.apply_to_basis(b);
                if let Some(&row) = index.get(&b2) {
                    m[(row, col)] += c * ph;
                }
            }
        }
        m
    }

    /// Decomposes a dense `2^n x 2^n` matrix into Pauli strings.
    pub fn from_dense(n_qubits: usize, m: &DMatrix<Complex64>) -> Result<PauliSum> {
        let dim = 1usize << n_qubits;
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.nrows(),
            });
        }
        let mut terms = Vec::new();
        for x in 0..dim as u64 {
            for z in 0..dim as u64 {
                let p = PauliString::from_bits(n_qubits, x, z);
                // tr(P^dag M) / dim, P Hermitian
                let mut tr = Complex64::default();
                for b in 0..dim {
                    let (ph, b2) = p.apply_to_basis(b);
                    tr += ph.conj() * m[(b2, b)];
                }
                terms.push((p, tr / dim as f64));
            }
        }
        Self::from_terms(n_qubits, terms)
    }

    /// One term per line: `<re> <im> <letters>`, qubit 0 rightmost.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (p, c) in &self.terms {
            s.push_str(&format!("{:?} {:?} {}\n", c.re, c.im, p));
        }
        s
    }

    /// Parses [`PauliSum::to_text`] output. An empty sum needs `n_qubits`.
    pub fn from_text(text: &str, n_qubits: Option<usize>) -> Result<PauliSum> {
        let mut terms = Vec::new();
        let mut n = n_qubits;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", lineno + 1)));
            }
            let re: f64 = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad real part", lineno + 1)))?;
            let im: f64 = fields[1]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad imaginary part", lineno + 1)))?;
            let p: PauliString = fields[2].parse()?;
            match n {
                None => n = Some(p.n_qubits()),
                Some(k) => check_same(k, p.n_qubits())?,
            }
            terms.push((p, Complex64::new(re, im)));
        }
        let n = n.ok_or_else(|| Error::Parse("empty operator without register size".into()))?;
        Self::from_terms(n, terms)
    }
}

impl fmt::Display for PauliSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Serialized as its letter string, qubit 0 rightmost.
impl serde::Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn dense_close(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tol: f64) -> bool {
        (a - b).iter().all(|v| v.norm() < tol)
    }

    /// Kronecker-product oracle independent of the bit encoding.
    fn dense_oracle(p: &PauliString) -> DMatrix<Complex64> {
        let single = |l: Letter| -> DMatrix<Complex64> {
            let z = c(0.0, 0.0);
            let o = c(1.0, 0.0);
            let i = c(0.0, 1.0);
            match l {
                Letter::I => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
                Letter::X => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
                Letter::Y => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
                Letter::Z => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
            }
        };
        // qubit n-1 is the most significant factor
        let mut m = DMatrix::from_element(1, 1, c(1.0, 0.0));
        for k in (0..p.n_qubits()).rev() {
            m = m.kronecker(&single(p.letter(k)));
        }
        m
    }

    #[test]
    fn xy_is_iz() {
        let (ph, p) = ps("X").multiply(&ps("Y")).unwrap();
        assert_eq!(ph, c(0.0, 1.0));
        assert_eq!(p, ps("Z"));
    }

    #[test]
    fn zz_squares_to_identity() {
        let (ph, p) = ps("ZZ").multiply(&ps("ZZ")).unwrap();
        assert_eq!(ph, c(1.0, 0.0));
        assert!(p.is_identity());
    }

    #[test]
    fn xy_times_yy() {
        // X⊗Y · Y⊗Y = (XY)⊗(YY) = iZ⊗I
        let (ph, p) = ps("XY").multiply(&ps("YY")).unwrap();
        let expect = dense_oracle(&ps("XY")) * dense_oracle(&ps("YY"));
        assert!(dense_close(&(dense_oracle(&p) * ph), &expect, 1e-14));
        assert_eq!(ph, c(0.0, 1.0));
        assert_eq!(p, ps("ZI"));
    }

    #[test]
    fn identity_is_neutral() {
        let a = ps("XYZI");
        let (ph, p) = a.multiply(&PauliString::identity(4)).unwrap();
        assert_eq!((ph, p), (c(1.0, 0.0), a));
    }

    #[test]
    fn size_mismatch_is_an_error() {
        assert!(ps("X").multiply(&ps("XX")).is_err());
        assert!(ps("X").commutes(&ps("XX")).is_err());
        let a = PauliSum::identity(1);
        let b = PauliSum::identity(2);
        assert!(a.sum_product(&b).is_err());
    }

    #[test]
    fn commutation_examples() {
        assert!(ps("XX").commutes(&ps("ZZ")).unwrap());
        assert!(!ps("IX").commutes(&ps("IZ")).unwrap());
    }

    #[test]
    fn sum_product_examples() {
        let z = PauliSum::from_string(ps("Z"), c(1.0, 0.0));
        let zz = z.sum_product(&z).unwrap();
        assert_eq!(zz, PauliSum::identity(1));

        let xz = PauliSum::from_terms(1, [(ps("X"), c(1.0, 0.0)), (ps("Z"), c(1.0, 0.0))]).unwrap();
        let sq = xz.sum_product(&xz).unwrap();
        assert_eq!(sq, PauliSum::identity(1).scale(c(2.0, 0.0)));
    }

    #[test]
    fn canonical_ordering_is_lexicographic_from_qubit_zero() {
        let s = PauliSum::from_terms(
            2,
            [
                (ps("IZ"), c(1.0, 0.0)),
                (ps("ZI"), c(1.0, 0.0)),
                (ps("XX"), c(1.0, 0.0)),
                (ps("II"), c(1.0, 0.0)),
                (ps("IZ"), c(1.0, 0.0)),
                (ps("YY"), c(1e-15, 0.0)),
            ],
        )
        .unwrap();
        let order: Vec<String> = s.terms().iter().map(|(p, _)| p.to_string()).collect();
        assert_eq!(order, vec!["II", "ZI", "XX", "IZ"]);
        assert_eq!(s.coefficient(&ps("IZ")), c(2.0, 0.0));
    }

    #[test]
    fn expectation_examples() {
        let z = PauliSum::from_string(ps("Z"), c(1.0, 0.0));
        let zero = Statevector::zero_state(1);
        assert_eq!(z.expectation(&zero).unwrap(), c(1.0, 0.0));

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = Statevector::from_amplitudes(vec![c(h, 0.0), c(h, 0.0)]).unwrap();
        let x = PauliSum::from_string(ps("X"), c(1.0, 0.0));
        assert!((x.expectation(&plus).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn expectation_rejects_unnormalized_and_wrong_size() {
        let z = PauliSum::from_string(ps("ZZ"), c(1.0, 0.0));
        let psi = Statevector::zero_state(1);
        assert!(matches!(z.expectation(&psi), Err(Error::DimensionMismatch { .. })));
        let bad = Statevector::from_amplitudes_unchecked(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let z1 = PauliSum::from_string(ps("Z"), c(1.0, 0.0));
        assert!(matches!(z1.expectation(&bad), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn text_format_example() {
        let s = PauliSum::from_terms(
            4,
            [(ps("IXYZ"), c(0.5, -0.25)), (ps("ZZII"), c(-1.0, 0.0))],
        )
        .unwrap();
        let text = s.to_text();
        assert!(text.contains("0.5 -0.25 IXYZ"));
        assert_eq!(PauliSum::from_text(&text, None).unwrap(), s);
        assert_eq!(ps("IXYZ").letter(0), Letter::Z);
    }

    #[test]
    fn from_dense_inverts_to_dense() {
        let s = PauliSum::from_terms(
            2,
            [(ps("XY"), c(0.3, 0.1)), (ps("ZI"), c(-1.0, 0.0)), (ps("II"), c(2.0, 0.0))],
        )
        .unwrap();
        let back = PauliSum::from_dense(2, &s.to_dense()).unwrap();
        assert_eq!(back.len(), 3);
        assert!(back.sub(&s).unwrap().is_empty());
    }

    fn arb_string(n: usize) -> impl Strategy<Value = PauliString> {
        (0u64..(1 << n), 0u64..(1 << n)).prop_map(move |(x, z)| PauliString::from_bits(n, x, z))
    }

    fn arb_sum(n: usize) -> impl Strategy<Value = PauliSum> {
        prop::collection::vec((arb_string(n), -2.0f64..2.0, -2.0f64..2.0), 1..5).prop_map(
            move |v| {
                PauliSum::from_terms(n, v.into_iter().map(|(p, a, b)| (p, c(a, b)))).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn multiply_matches_dense(n in 1usize..=4, seed in any::<u64>()) {
            let m = (1u64 << n) - 1;
            let mix = |k: u64| seed.wrapping_mul(0x9E3779B97F4A7C15).rotate_left(k as u32 * 13);
            let a = PauliString::from_bits(n, mix(1) & m, mix(2) & m);
            let b = PauliString::from_bits(n, mix(3) & m, mix(4) & m);
            let (ph, p) = a.multiply(&b).unwrap();
            let lhs = dense_oracle(&p) * ph;
            let rhs = dense_oracle(&a) * dense_oracle(&b);
            prop_assert!(dense_close(&lhs, &rhs, 1e-13));
            prop_assert!(dense_close(&a.to_dense(), &dense_oracle(&a), 1e-15));
        }

        #[test]
        fn commutes_matches_dense(a in arb_string(3), b in arb_string(3)) {
            let (da, db) = (dense_oracle(&a), dense_oracle(&b));
            let comm = &da * &db - &db * &da;
            let zero = comm.iter().all(|v| v.norm() < 1e-13);
            prop_assert_eq!(a.commutes(&b).unwrap(), zero);
        }

        #[test]
        fn sum_product_is_associative(a in arb_sum(2), b in arb_sum(2), d in arb_sum(2)) {
            let left = a.sum_product(&b).unwrap().sum_product(&d).unwrap();
            let right = a.sum_product(&b.sum_product(&d).unwrap()).unwrap();
            let diff = left.sub(&right).unwrap();
            prop_assert!(diff.terms().iter().all(|(_, v)| v.norm() < 1e-9));
            prop_assert!(a.sum_product(&b).unwrap().len() <= a.len() * b.len());
        }

        #[test]
        fn expectation_is_linear(a in arb_sum(2), b in arb_sum(2), s in -3.0f64..3.0,
                                 amps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4)) {
            let v: Vec<Complex64> = amps.iter().map(|(r, i)| c(*r, *i)).collect();
            let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let psi = Statevector::from_amplitudes(v.iter().map(|x| x / norm).collect()).unwrap();
            let combo = a.add(&b.scale(c(s, 0.0))).unwrap();
            let lhs = combo.expectation(&psi).unwrap();
            let rhs = a.expectation(&psi).unwrap() + b.expectation(&psi).unwrap() * s;
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }

        #[test]
        fn text_round_trip_is_exact(a in arb_sum(3)) {
            let back = PauliSum::from_text(&a.to_text(), Some(3)).unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
