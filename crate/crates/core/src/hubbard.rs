//! The Hubbard ring: Hamiltonian, point-group and parity symmetries in the
//! symmetry basis, and exact diagonalization per symmetry sector.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermion::{
    check_sites, jordan_wigner, momentum_eigenvalue, momentum_of, pair_unitary, site_mode, site_to_symmetry,
    symmetry_mode, symmetry_orbitals, FermionOperator, ModeOrdering, Spin, SymmetryOrbital,
};
use crate::pauli::{Letter, PauliString, PauliSum};
use crate::simulator::Statevector;

/// Largest register diagonalized densely.
pub const MAX_ED_QUBITS: usize = 12;

const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HubbardParams {
    pub n_sites: usize,
    pub t: f64,
    pub t_prime: f64,
    pub u: f64,
}

impl HubbardParams {
    pub fn new(n_sites: usize, t: f64, t_prime: f64, u: f64) -> Result<Self> {
        let p = Self { n_sites, t, t_prime, u };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_sites(self.n_sites)?;
        if ![self.t, self.t_prime, self.u].iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite Hubbard parameters {self:?}")));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        2 * self.n_sites
    }
}

/// Site-basis Hamiltonian
/// `-t sum (c_j^dag c_{j+1} + h.c.) - t' sum (c_j^dag c_{j+2} + h.c.) + U sum n_{j up} n_{j down}`,
/// sums over every site `j` of the ring.
pub fn build_hamiltonian(p: &HubbardParams) -> Result<FermionOperator> {
    p.validate()?;
    let n = p.n_sites;
    let mut op = FermionOperator::zero(2 * n);
    for (dist, amp) in [(1, p.t), (2, p.t_prime)] {
        if amp == 0.0 {
            continue;
        }
        for s in Spin::BOTH {
            for j in 0..n {
                let (a, b) = (site_mode(n, j, s), site_mode(n, j + dist, s));
                op.push(Complex64::new(-amp, 0.0), vec![(a, true), (b, false)])?;
                op.push(Complex64::new(-amp, 0.0), vec![(b, true), (a, false)])?;
            }
        }
    }
    if p.u != 0.0 {
        for j in 0..n {
            let (up, dn) = (site_mode(n, j, Spin::Up), site_mode(n, j, Spin::Down));
            op.push(Complex64::new(p.u, 0.0), vec![(up, true), (up, false), (dn, true), (dn, false)])?;
        }
    }
    Ok(op)
}

/// Symmetry operators of the ring after the Jordan-Wigner map in the symmetry basis.
#[derive(Clone, Debug)]
pub struct Symmetries {
    pub n_sites: usize,
    pub ordering: ModeOrdering,
    /// Rotation by one site.
    pub rotation: PauliSum,
    /// Rotation by half the ring.
    pub c2: PauliString,
    pub mirror: PauliString,
    pub p_up: PauliString,
    pub p_down: PauliString,
    /// `C2 P_up`.
    pub a: PauliString,
    /// `C2 M`.
    pub b: PauliString,
}

impl Symmetries {
    /// The commuting set used for tapering: `A, B, M, P_down`.
    pub fn tapering_set(&self) -> Vec<PauliString> {
        vec![self.a, self.b, self.mirror, self.p_down]
    }

    pub fn named(&self) -> [(&'static str, PauliString); 6] {
        [
            ("C2", self.c2),
            ("M", self.mirror),
            ("P_up", self.p_up),
            ("P_down", self.p_down),
            ("A", self.a),
            ("B", self.b),
        ]
    }
}

fn z_over(n_sites: usize, ordering: &ModeOrdering, pick: impl Fn(SymmetryOrbital, Spin) -> bool) -> Result<PauliString> {
    let mut qubits = Vec::new();
    for o in symmetry_orbitals(n_sites)? {
        for s in Spin::BOTH {
            if pick(o, s) {
                qubits.push(ordering.qubit_of(symmetry_mode(n_sites, o, s)));
            }
        }
    }
    Ok(PauliString::z_string(2 * n_sites, qubits))
}

/// Builds the symmetry operators for an ordering of the symmetry-basis modes.
pub fn build_symmetries(n_sites: usize, ordering: &ModeOrdering) -> Result<Symmetries> {
    check_sites(n_sites)?;
    let n_modes = 2 * n_sites;
    if ordering.n_modes() != n_modes {
        return Err(Error::DimensionMismatch {
            expected: n_modes,
            found: ordering.n_modes(),
        });
    }
    let half = n_sites / 2;
    // lambda^{n/2} for each orbital
    let c2_odd = |o: SymmetryOrbital| match o {
        SymmetryOrbital::Plus => false,
        SymmetryOrbital::Minus => half % 2 == 1,
        SymmetryOrbital::Even(p) | SymmetryOrbital::Odd(p) => p % 2 == 1,
    };
    let c2 = z_over(n_sites, ordering, |o, _| c2_odd(o))?;
    let mirror = z_over(n_sites, ordering, |o, _| matches!(o, SymmetryOrbital::Odd(_)))?;
    let p_up = z_over(n_sites, ordering, |_, s| s == Spin::Up)?;
    let p_down = z_over(n_sites, ordering, |_, s| s == Spin::Down)?;
    let a = c2.multiply(&p_up)?.1;
    let b = c2.multiply(&mirror)?.1;
    let rotation = rotation_operator(n_sites, ordering)?;
    Ok(Symmetries {
        n_sites,
        ordering: ordering.clone(),
        rotation,
        c2,
        mirror,
        p_up,
        p_down,
        a,
        b,
    })
}

/// One-site rotation as a Pauli sum: a phase `lambda^{n_lambda}` per momentum
/// mode, with each e/o pair rotated back to momentum modes by [`pair_unitary`].
fn rotation_operator(n_sites: usize, ordering: &ModeOrdering) -> Result<PauliSum> {
    let n_q = 2 * n_sites;
    let v = pair_unitary();
    let vm = DMatrix::from_fn(4, 4, |r, c| v[r][c]);
    let one = Complex64::new(1.0, 0.0);
    let mut total = PauliSum::identity(n_q);
    for s in Spin::BOTH {
        let minus_q = ordering.qubit_of(symmetry_mode(n_sites, SymmetryOrbital::Minus, s));
        total = total.sum_product(&PauliSum::from_string(PauliString::single(n_q, minus_q, Letter::Z), one))?;
        for p in 1..n_sites / 2 {
            let qe = ordering.qubit_of(symmetry_mode(n_sites, SymmetryOrbital::Even(p), s));
            let qo = ordering.qubit_of(symmetry_mode(n_sites, SymmetryOrbital::Odd(p), s));
            let lam = momentum_eigenvalue(n_sites, momentum_of(n_sites, SymmetryOrbital::Even(p)));
            let lam_bar = momentum_eigenvalue(n_sites, momentum_of(n_sites, SymmetryOrbital::Odd(p)));
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![one, lam, lam_bar, lam * lam_bar]));
            let local = vm.adjoint() * d * &vm;
            let local = PauliSum::from_dense(2, &local)?;
            let mut embedded = Vec::with_capacity(local.len());
            for (ps, c) in local.terms() {
                embedded.push((ps.embed(n_q, &[qe, qo]), *c));
            }
            total = total.sum_product(&PauliSum::from_terms(n_q, embedded)?)?;
        }
    }
    Ok(total)
}

/// Point-group irreducible representations appearing for the 4- and 6-site rings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Irrep {
    /// `lambda = 1`, mirror even.
    A1,
    /// `lambda = 1`, mirror odd.
    A2,
    /// `lambda = -1`, mirror odd.
    B1,
    /// `lambda = -1`, mirror even.
    B2,
    /// `lambda = +-i` on four sites.
    E,
    /// `lambda = exp(+-i pi / 3)` on six sites.
    E1,
    /// `lambda = exp(+-2 i pi / 3)` on six sites.
    E2,
}

impl fmt::Display for Irrep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Irrep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "A1" => Irrep::A1,
            "A2" => Irrep::A2,
            "B1" => Irrep::B1,
            "B2" => Irrep::B2,
            "E" => Irrep::E,
            "E1" => Irrep::E1,
            "E2" => Irrep::E2,
            _ => return Err(Error::Parse(format!("unknown irrep `{s}`"))),
        })
    }
}

impl Irrep {
    /// A representative rotation eigenvalue.
    pub fn representative_lambda(self, n_sites: usize) -> Complex64 {
        let root = |m: usize| momentum_eigenvalue(n_sites, m % n_sites);
        match self {
            Irrep::A1 | Irrep::A2 => root(0),
            Irrep::B1 | Irrep::B2 => root(n_sites / 2),
            Irrep::E => root(1),
            Irrep::E1 => root(n_sites / 6),
            Irrep::E2 => root(2 * n_sites / 6),
        }
    }

    /// Mirror eigenvalue of the sector used to host this irrep.
    pub fn mirror_sign(self) -> i8 {
        match self {
            Irrep::A2 | Irrep::B1 => -1,
            _ => 1,
        }
    }

    fn from_lambda(n_sites: usize, lambda: Complex64, s_m: i8) -> Option<Irrep> {
        let near = |z: Complex64| (lambda - z).norm() < 1e-6;
        if near(Complex64::new(1.0, 0.0)) {
            return Some(if s_m > 0 { Irrep::A1 } else { Irrep::A2 });
        }
        if near(Complex64::new(-1.0, 0.0)) {
            return Some(if s_m < 0 { Irrep::B1 } else { Irrep::B2 });
        }
        Self::from_cos(n_sites, lambda.re).filter(|_| (lambda.norm() - 1.0).abs() < 1e-6)
    }

    /// Complex irreps are identified by `Re lambda` alone.
    fn from_cos(n_sites: usize, re: f64) -> Option<Irrep> {
        let candidates: &[(f64, Irrep)] = if n_sites == 4 {
            &[(0.0, Irrep::E)]
        } else {
            &[(0.5, Irrep::E1), (-0.5, Irrep::E2)]
        };
        candidates.iter().find(|(c, _)| (re - c).abs() < 1e-6).map(|&(_, i)| i)
    }
}

/// Eigenvalues of the commuting diagonal symmetries fixing a tapered sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sector {
    pub c2: i8,
    pub mirror: i8,
    pub p_up: i8,
    pub p_down: i8,
}

impl Sector {
    /// Half filling with `S_z = 0`, in the sector hosting `irrep`.
    pub fn half_filling(n_sites: usize, irrep: Irrep) -> Result<Self> {
        check_sites(n_sites)?;
        let lam = irrep.representative_lambda(n_sites);
        let c2 = if lam.powu(n_sites as u32 / 2).re > 0.0 { 1 } else { -1 };
        let p = if (n_sites / 2) % 2 == 0 { 1 } else { -1 };
        Ok(Self {
            c2,
            mirror: irrep.mirror_sign(),
            p_up: p,
            p_down: p,
        })
    }

    pub fn a(&self) -> i8 {
        self.c2 * self.p_up
    }

    pub fn b(&self) -> i8 {
        self.c2 * self.mirror
    }

    /// Eigenvalues matching [`Symmetries::tapering_set`].
    pub fn tapering_eigenvalues(&self) -> Vec<i8> {
        vec![self.a(), self.b(), self.mirror, self.p_down]
    }

    /// Every `+-1` assignment of the four symmetries.
    pub fn all() -> Vec<Sector> {
        let mut v = Vec::with_capacity(16);
        for bits in 0..16u8 {
            let s = |k: u8| if bits >> k & 1 == 0 { 1 } else { -1 };
            v.push(Sector {
                c2: s(0),
                mirror: s(1),
                p_up: s(2),
                p_down: s(3),
            });
        }
        v
    }
}

/// Classification of a symmetry eigenstate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorLabel {
    pub irrep: Irrep,
    pub s_a: i8,
    pub s_b: i8,
    pub s_m: i8,
    pub s_p_down: i8,
    /// Rotation eigenvalue when the state is a rotation eigenstate.
    pub lambda: Option<Complex64>,
}

/// Selects computational-basis states by values of diagonal operators.
#[derive(Clone, Debug, Default)]
pub struct BasisFilter {
    constraints: Vec<(PauliSum, f64)>,
}

impl BasisFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn require(mut self, op: PauliSum, value: f64) -> Result<Self> {
        if let Some((p, _)) = op.terms().iter().find(|(p, _)| !p.is_diagonal()) {
            return Err(Error::NotDiagonal(p.to_string()));
        }
        self.constraints.push((op, value));
        Ok(self)
    }

    pub fn require_string(self, s: PauliString, sign: i8) -> Result<Self> {
        self.require(PauliSum::from_string(s, Complex64::new(1.0, 0.0)), f64::from(sign))
    }

    pub fn accepts(&self, b: usize) -> bool {
        self.constraints
            .iter()
            .all(|(op, v)| (diagonal_value(op, b) - v).abs() < 1e-9)
    }

    pub fn basis(&self, n_qubits: usize) -> Vec<usize> {
        (0..1usize << n_qubits).filter(|&b| self.accepts(b)).collect()
    }
}

/// `<b| op |b>` for a diagonal operator.
pub fn diagonal_value(op: &PauliSum, b: usize) -> f64 {
    op.terms().iter().map(|(p, c)| c.re * p.parity_sign(b)).sum()
}

/// Eigenpairs of an operator restricted to a set of basis states, ascending.
#[derive(Clone, Debug)]
pub struct Spectrum {
    n_qubits: usize,
    basis: Vec<usize>,
    pub energies: Vec<f64>,
    /// Columns are eigenvectors over `basis`.
    vectors: DMatrix<Complex64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    /// Eigenvector `i` on the full register.
    pub fn state(&self, i: usize) -> Statevector {
        let mut amps = vec![Complex64::default(); 1 << self.n_qubits];
        for (k, &b) in self.basis.iter().enumerate() {
            amps[b] = self.vectors[(k, i)];
        }
        Statevector::from_amplitudes_unchecked(amps)
    }

    /// Index ranges of levels degenerate within `tol`.
    pub fn levels(&self, tol: f64) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.energies[i] - self.energies[start] > tol {
                out.push(start..i);
                start = i;
            }
        }
        out
    }

    /// Re-diagonalizes each degenerate level with respect to a Hermitian `op`.
    pub fn resolve_degeneracies(&mut self, op: &PauliSum) -> Result<()> {
        for level in self.levels(DEGENERACY_TOL) {
            if level.len() < 2 {
                continue;
            }
            let states: Vec<Statevector> = level.clone().map(|i| self.state(i)).collect();
            let images: Vec<Vec<Complex64>> = states
                .iter()
                .map(|s| op.apply(s.amplitudes()))
                .collect::<Result<_>>()?;
            let k = level.len();
            let m = DMatrix::from_fn(k, k, |r, c| {
                states[r]
                    .amplitudes()
                    .iter()
                    .zip(&images[c])
                    .map(|(a, b)| a.conj() * b)
                    .sum::<Complex64>()
            });
            let m = (&m + m.adjoint()).unscale(2.0);
            let eig = m.symmetric_eigen();
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]).reverse());
            let block = self.vectors.columns(level.start, k).clone_owned();
            for (slot, &j) in order.iter().enumerate() {
                let col = &block * eig.eigenvectors.column(j);
                self.vectors.set_column(level.start + slot, &col);
            }
        }
        Ok(())
    }
}

/// Dense diagonalization of `h` on the basis states accepted by `filter`.
pub fn exact_diagonalize(h: &PauliSum, filter: &BasisFilter) -> Result<Spectrum> {
    let n = h.n_qubits();
    if n > MAX_ED_QUBITS {
        return Err(Error::TooLarge(n));
    }
    if !h.is_hermitian() {
        return Err(Error::NonHermitian(h.max_imag()));
    }
    let basis = filter.basis(n);
    if basis.is_empty() {
        return Ok(Spectrum {
            n_qubits: n,
            basis,
            energies: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let m = h.matrix_in_subspace(&basis);
    let m = (&m + m.adjoint()).unscale(2.0);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..basis.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(basis.len(), basis.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Spectrum {
        n_qubits: n,
        basis,
        energies,
        vectors,
    })
}

/// Mapped Hubbard ring with its symmetries.
#[derive(Clone, Debug)]
pub struct HubbardModel {
    pub params: HubbardParams,
    pub ordering: ModeOrdering,
    /// Hamiltonian in the symmetry basis after Jordan-Wigner.
    pub hamiltonian: PauliSum,
    pub number: PauliSum,
    pub symmetries: Symmetries,
}

impl HubbardModel {
    pub fn new(params: HubbardParams) -> Result<Self> {
        let ordering = ModeOrdering::tapering_layout(params.n_sites)?;
        Self::with_ordering(params, ordering)
    }

    pub fn with_ordering(params: HubbardParams, ordering: ModeOrdering) -> Result<Self> {
        params.validate()?;
        let n = params.n_sites;
        let change = site_to_symmetry(n)?;
        let h_site = build_hamiltonian(&params)?;
        let hamiltonian = jordan_wigner(&change.apply(&h_site)?, &ordering)?.into_hermitian()?;
        let number = jordan_wigner(&FermionOperator::number(2 * n, 0..2 * n)?, &ordering)?.into_hermitian()?;
        let symmetries = build_symmetries(n, &ordering)?;
        Ok(Self {
            params,
            ordering,
            hamiltonian,
            number,
            symmetries,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.hamiltonian.n_qubits()
    }

    pub fn half_filling(&self) -> usize {
        self.params.n_sites
    }

    pub fn sector_filter(&self, sector: Option<&Sector>, n_particles: Option<usize>) -> Result<BasisFilter> {
        let mut f = BasisFilter::new();
        if let Some(s) = sector {
            let sy = &self.symmetries;
            f = f
                .require_string(sy.c2, s.c2)?
                .require_string(sy.mirror, s.mirror)?
                .require_string(sy.p_up, s.p_up)?
                .require_string(sy.p_down, s.p_down)?;
        }
        if let Some(n) = n_particles {
            f = f.require(self.number.clone(), n as f64)?;
        }
        Ok(f)
    }

    /// Spectrum within a sector and particle number, with degenerate levels
    /// resolved by the rotation.
    pub fn spectrum(&self, sector: Option<&Sector>, n_particles: Option<usize>) -> Result<Spectrum> {
        let mut spec = exact_diagonalize(&self.hamiltonian, &self.sector_filter(sector, n_particles)?)?;
        spec.resolve_degeneracies(&self.rotation_probe()?)?;
        Ok(spec)
    }

    /// Ground energy and state of a half-filled sector.
    pub fn sector_ground(&self, sector: &Sector) -> Result<(f64, Statevector)> {
        let spec = self.spectrum(Some(sector), Some(self.half_filling()))?;
        if spec.is_empty() {
            return Err(Error::Numerical(format!("sector {sector:?} is empty at half filling")));
        }
        Ok((spec.ground_energy(), spec.state(0)))
    }

    /// Hermitian function of the commuting symmetries whose eigenvalues
    /// separate every rotation eigenvalue and spin parity.
    fn rotation_probe(&self) -> Result<PauliSum> {
        let sy = &self.symmetries;
        let r = &sy.rotation;
        let re = r.add(&r.adjoint())?.scale(Complex64::new(0.5, 0.0));
        let im = r.sub(&r.adjoint())?.scale(Complex64::new(0.0, -0.5));
        let parity = |s: PauliString, w: f64| PauliSum::from_string(s, Complex64::new(w, 0.0));
        re.add(&im.scale(Complex64::new(0.3, 0.0)))?
            .add(&parity(sy.p_up, 0.011))?
            .add(&parity(sy.p_down, 0.0047))?
            .into_hermitian()
    }

    /// Symmetry labels of a full-register eigenstate.
    pub fn classify(&self, psi: &Statevector) -> Result<SectorLabel> {
        classify_state(psi, &self.symmetries)
    }
}

/// Reads off the symmetry eigenvalues and irrep of a simultaneous eigenstate.
pub fn classify_state(psi: &Statevector, sym: &Symmetries) -> Result<SectorLabel> {
    let mut measured = Vec::new();
    let mut signs = HashMap::new();
    let mut ok = true;
    for (name, s) in sym.named() {
        let v = PauliSum::from_string(s, Complex64::new(1.0, 0.0)).expectation(psi)?.re;
        measured.push((name.to_string(), v));
        ok &= (v.abs() - 1.0).abs() < 1e-6;
        signs.insert(name, if v > 0.0 { 1i8 } else { -1 });
    }
    let r = sym.rotation.expectation(psi)?;
    measured.push(("Re C_rot".into(), r.re));
    measured.push(("Im C_rot".into(), r.im));
    if !ok {
        return Err(Error::NotEigenstate(measured));
    }
    let s_m = signs["M"];
    let (irrep, lambda) = if (r.norm() - 1.0).abs() < 1e-6 {
        match Irrep::from_lambda(sym.n_sites, r, s_m) {
            Some(i) => (i, Some(r)),
            None => return Err(Error::NotEigenstate(measured)),
        }
    } else if r.im.abs() < 1e-6 {
        match Irrep::from_cos(sym.n_sites, r.re) {
            Some(i) => (i, None),
            None => return Err(Error::NotEigenstate(measured)),
        }
    } else {
        return Err(Error::NotEigenstate(measured));
    };
    Ok(SectorLabel {
        irrep,
        s_a: signs["A"],
        s_b: signs["B"],
        s_m,
        s_p_down: signs["P_down"],
        lambda,
    })
}

/// Ground-energy difference `E(b) - E(a)` of two half-filled sectors.
pub fn sector_gap(params: &HubbardParams, a: &Sector, b: &Sector) -> Result<f64> {
    let model = HubbardModel::new(*params)?;
    Ok(model.sector_ground(b)?.0 - model.sector_ground(a)?.0)
}

/// Bisection in `t'/t` for the sign change of `E(b) - E(a)` at fixed `U`.
pub fn find_transition(
    n_sites: usize,
    t: f64,
    u: f64,
    a: &Sector,
    b: &Sector,
    (mut lo, mut hi): (f64, f64),
    tol: f64,
) -> Result<f64> {
    let gap = |r: f64| sector_gap(&HubbardParams::new(n_sites, t, r * t, u)?, a, b);
    let mut g_lo = gap(lo)?;
    let g_hi = gap(hi)?;
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::Numerical(format!(
            "no sign change of the sector gap in [{lo}, {hi}] ({g_lo}, {g_hi})"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let g = gap(mid)?;
        if g.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One row of a spectrum export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub t_prime_over_t: f64,
    pub sector: String,
    pub level_index: usize,
    pub energy: f64,
}

pub fn write_spectrum_csv<W: Write>(mut w: W, rows: &[SpectrumRow]) -> Result<()> {
    writeln!(w, "t_prime_over_t,sector,level_index,energy")?;
    for r in rows {
        writeln!(w, "{},{},{},{:.12}", r.t_prime_over_t, r.sector, r.level_index, r.energy)?;
    }
    Ok(())
}
