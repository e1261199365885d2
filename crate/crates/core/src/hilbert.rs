//! Composite Hilbert space of one truncated cavity mode and `n` qubits.
//!
//! Ordering: the cavity is the leftmost tensor factor, qubit `j` occupies slot
//! `j + 1`, and each qubit factor is ordered `{|e>, |g>}` so that
//! `sigma_z = diag(1, -1)`. A product basis state `|m; b_1 .. b_n>` therefore
//! sits at index `m * 2^n + sum_j bit_j * 2^(n - 1 - j)` with `bit = 0` for
//! `|e>` and `1` for `|g>`.
//!
//! A layout may carry an excitation cap. The Tavis-Cummings Hamiltonian and
//! the sigma_z drive conserve `N_exc = a^dagger a + sum_j sigma_j^+ sigma_j^-`,
//! and every jump operator lowers it, so the span of product states with
//! `N_exc <= cap` is invariant whenever the cavity is not driven. Restricting
//! to it is exact for such runs and keeps the dimension at `n + 2` for a single
//! excitation.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{ComplexMatrix, LinalgError};

/// Largest retained dimension accepted by [`build_operators`] unless the caller
/// raises it.
pub const DEFAULT_MAX_DIM: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("fock_dim must be at least 2, got {0}")]
    FockDimTooSmall(usize),
    #[error("Hilbert space of dimension {dim} exceeds the cap of {cap}; use a smaller Fock truncation, fewer qubits or an excitation cap")]
    TooLarge { dim: usize, cap: usize },
    #[error("too many qubits for a product-space index: {0}")]
    TooManyQubits(usize),
    #[error("cavity excitation {excitation} is outside the truncation (fock_dim = {fock_dim})")]
    ExcitationOutOfRange { excitation: usize, fock_dim: usize },
    #[error("expected {expected} qubit levels, got {got}")]
    QubitCountMismatch { expected: usize, got: usize },
    #[error("state with {excitations} excitations is outside the excitation cap {cap}")]
    AboveExcitationCap { excitations: usize, cap: usize },
    #[error("unknown qubit level {0:?}; expected 'e' or 'g'")]
    BadQubitLevel(char),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Qubit basis level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QubitLevel {
    Excited,
    Ground,
}

impl QubitLevel {
    fn bit(self) -> usize {
        match self {
            QubitLevel::Excited => 0,
            QubitLevel::Ground => 1,
        }
    }

    /// Parses a string such as `"egg"` into levels.
    pub fn parse_levels(s: &str) -> Result<Vec<QubitLevel>, LayoutError> {
        s.chars()
            .map(|c| match c {
                'e' | 'E' => Ok(QubitLevel::Excited),
                'g' | 'G' => Ok(QubitLevel::Ground),
                other => Err(LayoutError::BadQubitLevel(other)),
            })
            .collect()
    }

    pub fn all_ground(n: usize) -> Vec<QubitLevel> {
        vec![QubitLevel::Ground; n]
    }
}

/// Dimensions of the cavity-plus-qubits space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemLayout {
    n_qubits: usize,
    fock_dim: usize,
    excitation_cap: Option<usize>,
}

impl SystemLayout {
    pub fn new(n_qubits: usize, fock_dim: usize) -> Result<Self, LayoutError> {
        if fock_dim < 2 {
            return Err(LayoutError::FockDimTooSmall(fock_dim));
        }
        if n_qubits >= usize::BITS as usize - 1 {
            return Err(LayoutError::TooManyQubits(n_qubits));
        }
        fock_dim
            .checked_mul(1usize << n_qubits)
            .ok_or(LayoutError::TooManyQubits(n_qubits))?;
        Ok(Self {
            n_qubits,
            fock_dim,
            excitation_cap: None,
        })
    }

    /// Restricts the basis to product states with at most `cap` total
    /// excitations.
    pub fn with_excitation_cap(mut self, cap: usize) -> Self {
        self.excitation_cap = Some(cap);
        self
    }

    pub fn without_excitation_cap(mut self) -> Self {
        self.excitation_cap = None;
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    pub fn excitation_cap(&self) -> Option<usize> {
        self.excitation_cap
    }

    /// `fock_dim * 2^n_qubits`, the dimension of the full tensor product.
    pub fn product_dim(&self) -> usize {
        self.fock_dim << self.n_qubits
    }

    /// Dimension of the retained basis (equals [`Self::product_dim`] without a cap).
    pub fn dim(&self) -> usize {
        match self.excitation_cap {
            None => self.product_dim(),
            Some(_) => Basis::new(self).len(),
        }
    }

    fn retains(&self, cavity: usize, qubit_bits: usize) -> bool {
        match self.excitation_cap {
            None => true,
            Some(cap) => cavity + excited_count(qubit_bits, self.n_qubits) <= cap,
        }
    }
}

fn excited_count(qubit_bits: usize, n: usize) -> usize {
    n - qubit_bits.count_ones() as usize
}

/// The retained product basis of a layout, in increasing product-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    layout: SystemLayout,
    states: Vec<(usize, usize)>,
    index_of: Vec<Option<usize>>,
}

impl Basis {
    pub fn new(layout: &SystemLayout) -> Self {
        let nq = 1usize << layout.n_qubits;
        let mut states = Vec::new();
        let mut index_of = vec![None; layout.product_dim()];
        for m in 0..layout.fock_dim {
            for q in 0..nq {
                if layout.retains(m, q) {
                    index_of[m * nq + q] = Some(states.len());
                    states.push((m, q));
                }
            }
        }
        Self {
            layout: *layout,
            states,
            index_of,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    /// `(cavity level, qubit bit pattern)` of each retained basis state.
    pub fn states(&self) -> &[(usize, usize)] {
        &self.states
    }

    pub fn index(&self, cavity: usize, qubit_bits: usize) -> Option<usize> {
        self.index_of
            .get(cavity * (1usize << self.layout.n_qubits) + qubit_bits)
            .copied()
            .flatten()
    }

    fn qubit_bit(&self, bits: usize, j: usize) -> usize {
        (bits >> (self.layout.n_qubits - 1 - j)) & 1
    }

    fn bits_of(&self, levels: &[QubitLevel]) -> usize {
        levels
            .iter()
            .fold(0usize, |acc, level| (acc << 1) | level.bit())
    }

    /// `rho_R = Tr_Q rho`.
    pub fn partial_trace_qubits(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix, LayoutError> {
        if rho.dim() != self.len() {
            return Err(LinalgError::DimensionMismatch {
                op: "partial_trace_qubits",
                left: rho.dim(),
                right: self.len(),
            }
            .into());
        }
        let fd = self.layout.fock_dim;
        let mut out = ComplexMatrix::zeros(fd);
        for (r, &(m, q)) in self.states.iter().enumerate() {
            for mp in 0..fd {
                if let Some(c) = self.index(mp, q) {
                    let z = out.get(m, mp) + rho.get(r, c);
                    out.set(m, mp, z);
                }
            }
        }
        Ok(out)
    }

    /// Embeds `rho_cavity ⊗ |q><q|` for the given qubit levels.
    pub fn product_state(
        &self,
        rho_cavity: &ComplexMatrix,
        qubits: &[QubitLevel],
    ) -> Result<ComplexMatrix, LayoutError> {
        let fd = self.layout.fock_dim;
        if rho_cavity.dim() != fd {
            return Err(LinalgError::DimensionMismatch {
                op: "product_state",
                left: rho_cavity.dim(),
                right: fd,
            }
            .into());
        }
        if qubits.len() != self.layout.n_qubits {
            return Err(LayoutError::QubitCountMismatch {
                expected: self.layout.n_qubits,
                got: qubits.len(),
            });
        }
        let q = self.bits_of(qubits);
        let mut out = ComplexMatrix::zeros(self.len());
        for m in 0..fd {
            for mp in 0..fd {
                let z = rho_cavity.get(m, mp);
                if z == C64::new(0.0, 0.0) {
                    continue;
                }
                match (self.index(m, q), self.index(mp, q)) {
                    (Some(r), Some(c)) => out.set(r, c, z),
                    _ => {
                        return Err(LayoutError::AboveExcitationCap {
                            excitations: m.max(mp) + excited_count(q, self.layout.n_qubits),
                            cap: self.layout.excitation_cap.unwrap_or(usize::MAX),
                        })
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Operators of the model embedded in the retained basis.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub basis: Basis,
    pub a: ComplexMatrix,
    pub a_dag: ComplexMatrix,
    pub number_op: ComplexMatrix,
    pub sigma_minus: Vec<ComplexMatrix>,
    pub sigma_plus: Vec<ComplexMatrix>,
    pub sigma_z: Vec<ComplexMatrix>,
    pub identity: ComplexMatrix,
}

impl OperatorSet {
    pub fn layout(&self) -> &SystemLayout {
        self.basis.layout()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `N_exc = a^dagger a + sum_j sigma_j^+ sigma_j^-`.
    pub fn excitation_op(&self) -> ComplexMatrix {
        let diag: Vec<f64> = self
            .basis
            .states()
            .iter()
            .map(|&(m, q)| (m + excited_count(q, self.layout().n_qubits)) as f64)
            .collect();
        ComplexMatrix::from_real_diagonal(&diag)
    }

    /// `sum_j sigma_z,j`.
    pub fn total_sigma_z(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim());
        for sz in &self.sigma_z {
            out += sz;
        }
        out
    }

    /// `a + a^dagger`.
    pub fn position(&self) -> ComplexMatrix {
        &self.a + &self.a_dag
    }

    pub fn partial_trace_qubits(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix, LayoutError> {
        self.basis.partial_trace_qubits(rho)
    }
}

/// Builds the operator set with the default dimension cap.
pub fn build_operators(layout: &SystemLayout) -> Result<OperatorSet, LayoutError> {
    build_operators_with_cap(layout, DEFAULT_MAX_DIM)
}

pub fn build_operators_with_cap(
    layout: &SystemLayout,
    max_dim: usize,
) -> Result<OperatorSet, LayoutError> {
    let basis = Basis::new(layout);
    let dim = basis.len();
    if dim > max_dim {
        return Err(LayoutError::TooLarge { dim, cap: max_dim });
    }
    let n = layout.n_qubits;

    let mut a = ComplexMatrix::zeros(dim);
    let mut number = vec![0.0; dim];
    let mut sigma_minus = vec![ComplexMatrix::zeros(dim); n];
    let mut sigma_z: Vec<Vec<f64>> = vec![vec![0.0; dim]; n];

    for (r, &(m, q)) in basis.states().iter().enumerate() {
        number[r] = m as f64;
        if m > 0 {
            // Lowering never leaves the retained space.
            let c = basis.index(m - 1, q).expect("lowered state is retained");
            a.set(c, r, C64::new((m as f64).sqrt(), 0.0));
        }
        for j in 0..n {
            let bit = basis.qubit_bit(q, j);
            if bit == 0 {
                sigma_z[j][r] = 1.0;
                let lowered = q | (1 << (n - 1 - j));
                let c = basis.index(m, lowered).expect("lowered state is retained");
                sigma_minus[j].set(c, r, C64::new(1.0, 0.0));
            } else {
                sigma_z[j][r] = -1.0;
            }
        }
    }

    let a_dag = a.dagger();
    let sigma_plus = sigma_minus.iter().map(ComplexMatrix::dagger).collect();
    Ok(OperatorSet {
        basis,
        a,
        a_dag,
        number_op: ComplexMatrix::from_real_diagonal(&number),
        sigma_minus,
        sigma_plus,
        sigma_z: sigma_z
            .iter()
            .map(|d| ComplexMatrix::from_real_diagonal(d))
            .collect(),
        identity: ComplexMatrix::identity(dim),
    })
}

/// Pure product state `|m; q_1 .. q_n><m; q_1 .. q_n|`.
pub fn basis_state(
    layout: &SystemLayout,
    cavity_excitation: usize,
    qubits: &[QubitLevel],
) -> Result<ComplexMatrix, LayoutError> {
    if cavity_excitation >= layout.fock_dim {
        return Err(LayoutError::ExcitationOutOfRange {
            excitation: cavity_excitation,
            fock_dim: layout.fock_dim,
        });
    }
    let mut cavity = ComplexMatrix::zeros(layout.fock_dim);
    cavity.set(cavity_excitation, cavity_excitation, C64::new(1.0, 0.0));
    Basis::new(layout).product_state(&cavity, qubits)
}

/// `Tr_Q rho` for a state on `layout`.
pub fn partial_trace_qubits(
    rho: &ComplexMatrix,
    layout: &SystemLayout,
) -> Result<ComplexMatrix, LayoutError> {
    Basis::new(layout).partial_trace_qubits(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, expectation, hermitian_eigenvalues, kron, matmul};
    use proptest::prelude::*;

    fn layout(n: usize, fd: usize) -> SystemLayout {
        SystemLayout::new(n, fd).unwrap()
    }

    fn lowering(levels: usize) -> ComplexMatrix {
        let mut a = ComplexMatrix::zeros(levels);
        for m in 1..levels {
            a.set(m - 1, m, C64::new((m as f64).sqrt(), 0.0));
        }
        a
    }

    /// Kronecker-product embedding, written independently of the basis code.
    fn embed(factors: &[ComplexMatrix]) -> ComplexMatrix {
        factors[1..]
            .iter()
            .fold(factors[0].clone(), |acc, f| kron(&acc, f).unwrap())
    }

    fn random_density(dim: usize, seed: u64) -> ComplexMatrix {
        let mut state = seed ^ 0x9e3779b97f4a7c15;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let entries = (0..dim * dim).map(|_| C64::new(next(), next())).collect();
        let m = ComplexMatrix::from_entries(dim, entries).unwrap();
        let p = matmul(&m, &m.dagger()).unwrap();
        p.scale(p.trace().inv())
    }

    #[test]
    fn cavity_only_lowering_operator() {
        let ops = build_operators(&layout(0, 3)).unwrap();
        let s2 = 2f64.sqrt();
        let expected =
            ComplexMatrix::from_real_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, s2], &[0.0, 0.0, 0.0]])
                .unwrap();
        assert!(ops.a.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn qubit_sigma_z_embedding() {
        let ops = build_operators(&layout(1, 2)).unwrap();
        let expected = kron(
            &ComplexMatrix::identity(2),
            &ComplexMatrix::from_real_diagonal(&[1.0, -1.0]),
        )
        .unwrap();
        assert_eq!(ops.sigma_z[0], expected);
    }

    #[test]
    fn operators_match_kronecker_embedding() {
        let (n, fd) = (3, 3);
        let ops = build_operators(&layout(n, fd)).unwrap();
        let i2 = ComplexMatrix::identity(2);
        let sm = ComplexMatrix::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]]).unwrap();
        let mut factors = vec![lowering(fd)];
        factors.extend(std::iter::repeat_n(i2.clone(), n));
        assert!(ops.a.max_abs_diff(&embed(&factors)) < 1e-15);
        for j in 0..n {
            let mut f = vec![ComplexMatrix::identity(fd)];
            for k in 0..n {
                f.push(if k == j { sm.clone() } else { i2.clone() });
            }
            assert_eq!(ops.sigma_minus[j], embed(&f));
        }
    }

    #[test]
    fn distinct_qubits_commute() {
        let ops = build_operators(&layout(2, 2)).unwrap();
        let c = commutator(&ops.sigma_minus[0], &ops.sigma_plus[1]).unwrap();
        assert!(c.max_abs() < 1e-12);
    }

    #[test]
    fn operator_set_invariants() {
        for (n, fd) in [(0, 4), (1, 3), (3, 2), (2, 4)] {
            let ops = build_operators(&layout(n, fd)).unwrap();
            assert_eq!(ops.a_dag, ops.a.dagger());
            let na = matmul(&ops.a_dag, &ops.a).unwrap();
            assert!(na.max_abs_diff(&ops.number_op) < 1e-12);
            for j in 0..n {
                assert_eq!(ops.sigma_plus[j], ops.sigma_minus[j].dagger());
                assert!(commutator(&ops.a, &ops.sigma_minus[j]).unwrap().max_abs() < 1e-12);
                assert!(commutator(&ops.a, &ops.sigma_plus[j]).unwrap().max_abs() < 1e-12);
                for k in 0..n {
                    let c = commutator(&ops.sigma_z[j], &ops.sigma_z[k]).unwrap();
                    assert!(c.max_abs() < 1e-12);
                }
            }
            let ev = hermitian_eigenvalues(&ops.number_op).unwrap();
            let mult = 1usize << n;
            for (i, e) in ev.iter().enumerate() {
                assert!((e - (i / mult) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let err = build_operators_with_cap(&layout(5, 8), 100).unwrap_err();
        assert_eq!(err, LayoutError::TooLarge { dim: 256, cap: 100 });
        assert!(matches!(
            SystemLayout::new(2, 1),
            Err(LayoutError::FockDimTooSmall(1))
        ));
    }

    #[test]
    fn basis_states_expectations() {
        let l = layout(1, 2);
        let ops = build_operators(&l).unwrap();
        let vac = basis_state(&l, 0, &[QubitLevel::Ground]).unwrap();
        assert!(expectation(&ops.number_op, &vac).unwrap().norm() < 1e-15);
        assert!((expectation(&ops.sigma_z[0], &vac).unwrap().re + 1.0).abs() < 1e-15);
        let one = basis_state(&l, 1, &[QubitLevel::Ground]).unwrap();
        assert!((expectation(&ops.number_op, &one).unwrap().re - 1.0).abs() < 1e-15);

        let l5 = layout(5, 2);
        let s = basis_state(&l5, 1, &QubitLevel::all_ground(5)).unwrap();
        assert!((s.trace().re - 1.0).abs() < 1e-15);
        let purity = expectation(&s, &s).unwrap().re;
        assert!((purity - 1.0).abs() < 1e-15);
    }

    #[test]
    fn basis_state_errors() {
        let l = layout(1, 2);
        assert!(matches!(
            basis_state(&l, 2, &[QubitLevel::Ground]),
            Err(LayoutError::ExcitationOutOfRange { .. })
        ));
        assert!(matches!(
            basis_state(&l, 0, &[]),
            Err(LayoutError::QubitCountMismatch { .. })
        ));
        let capped = l.with_excitation_cap(1);
        assert!(matches!(
            basis_state(&capped, 1, &[QubitLevel::Excited]),
            Err(LayoutError::AboveExcitationCap { .. })
        ));
    }

    #[test]
    fn partial_trace_of_product_state() {
        let l = layout(2, 3);
        let rho_c = random_density(3, 11);
        let qubits = QubitLevel::parse_levels("eg").unwrap();
        let rho = Basis::new(&l).product_state(&rho_c, &qubits).unwrap();
        let reduced = partial_trace_qubits(&rho, &l).unwrap();
        assert!(reduced.max_abs_diff(&rho_c) < 1e-15);
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        // (|0,e> + |1,g>)/sqrt 2 with fock_dim = 2, one qubit.
        let l = layout(1, 2);
        let basis = Basis::new(&l);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut psi = vec![C64::new(0.0, 0.0); 4];
        psi[basis.index(0, 0).unwrap()] = C64::new(s, 0.0);
        psi[basis.index(1, 1).unwrap()] = C64::new(s, 0.0);
        let rho = crate::linalg::ComplexVector::new(psi).unwrap().projector();
        let reduced = partial_trace_qubits(&rho, &l).unwrap();
        assert!(reduced.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[0.5, 0.5])) < 1e-15);
    }

    /// Element-wise summation over the full product index, written without
    /// the `Basis` helper.
    fn partial_trace_oracle(rho: &ComplexMatrix, n: usize, fd: usize) -> ComplexMatrix {
        let nq = 1usize << n;
        let mut out = ComplexMatrix::zeros(fd);
        for m in 0..fd {
            for mp in 0..fd {
                let mut acc = C64::new(0.0, 0.0);
                for q in 0..nq {
                    acc += rho.get(m * nq + q, mp * nq + q);
                }
                out.set(m, mp, acc);
            }
        }
        out
    }

    #[test]
    fn partial_trace_matches_summation_oracle() {
        for (n, fd, seed) in [(1, 2, 1), (2, 3, 2), (3, 2, 3), (2, 4, 4)] {
            let l = layout(n, fd);
            let rho = random_density(l.dim(), seed);
            let reduced = partial_trace_qubits(&rho, &l).unwrap();
            assert!(reduced.max_abs_diff(&partial_trace_oracle(&rho, n, fd)) < 1e-14);
            assert!((reduced.trace() - rho.trace()).norm() < 1e-12);
            assert!(reduced.is_hermitian(1e-14));
        }
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let l = layout(1, 2);
        assert!(partial_trace_qubits(&ComplexMatrix::identity(3), &l).is_err());
    }

    #[test]
    fn capped_basis_is_a_restriction_of_the_full_one() {
        let full = layout(3, 3);
        let capped = full.with_excitation_cap(1);
        assert_eq!(capped.dim(), 5);
        let ops_full = build_operators(&full).unwrap();
        let ops_cap = build_operators(&capped).unwrap();
        let basis_full = Basis::new(&full);
        let keep: Vec<usize> = Basis::new(&capped)
            .states()
            .iter()
            .map(|&(m, q)| basis_full.index(m, q).unwrap())
            .collect();
        assert_eq!(ops_full.a.submatrix(&keep), ops_cap.a);
        for j in 0..3 {
            assert_eq!(ops_full.sigma_minus[j].submatrix(&keep), ops_cap.sigma_minus[j]);
            assert_eq!(ops_full.sigma_z[j].submatrix(&keep), ops_cap.sigma_z[j]);
        }
    }

    proptest! {
        #[test]
        fn partial_trace_is_linear(
            seed in any::<u64>(),
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let l = layout(2, 3);
            let rho = random_density(l.dim(), seed);
            let sigma = random_density(l.dim(), seed.wrapping_add(17));
            let mut combo = rho.scale(C64::new(alpha, 0.0));
            combo.add_scaled(C64::new(beta, 0.0), &sigma).unwrap();
            let lhs = partial_trace_qubits(&combo, &l).unwrap();
            let mut rhs = partial_trace_qubits(&rho, &l).unwrap().scale(C64::new(alpha, 0.0));
            rhs.add_scaled(C64::new(beta, 0.0), &partial_trace_qubits(&sigma, &l).unwrap()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }
}
