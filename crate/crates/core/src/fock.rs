//! Exact truncated-Fock-space engine.
//!
//! Each optical mode holds between `0` and `cutoff` photons. Basis states are
//! enumerated in mixed radix `cutoff + 1` with mode `0` as the most
//! significant digit, so for two modes and cutoff 2 the order is
//! `|00⟩, |01⟩, |02⟩, |10⟩, …, |22⟩`. That order never changes.
//!
//! The pump is not a mode here: it is a classical complex amplitude folded
//! into the squeezing parameter `kappa` passed to [`spdc_evolve`].

use log::warn;
use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::expm;
use crate::C64;

/// Leakage above this in a freshly built coherent state is worth a warning.
pub const COHERENT_LEAKAGE_WARN: f64 = 1e-6;
/// Default leakage bound for oracle evolutions; exceeding it is an error.
pub const DEFAULT_LEAKAGE_BOUND: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("mode index {mode} out of range for {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("basis needs at least one mode")]
    NoModes,
    #[error("cutoff {0} is too small; at least one photon per mode is required")]
    CutoffTooSmall(usize),
    #[error("modes must be distinct (got {0} twice)")]
    SameMode(usize),
    #[error("transmissivity {0} outside [0, 1]")]
    Transmissivity(f64),
    #[error("detector efficiency {0} outside [0, 1]")]
    Efficiency(f64),
    #[error("detectors share mode {0}")]
    OverlappingDetectors(usize),
    #[error("amplitude vector has length {got}, basis dimension is {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("state has zero norm")]
    ZeroNorm,
    #[error(
        "truncation leakage {leakage:.3e} exceeds bound {bound:.1e} at cutoff {cutoff}; \
         raise the cutoff or shrink the amplitudes"
    )]
    TruncationLeakage {
        leakage: f64,
        bound: f64,
        cutoff: usize,
    },
    #[error("conditioning outcome has zero probability")]
    ZeroProbabilityOutcome,
}

/// Truncated multimode Fock basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasis {
    n_modes: usize,
    cutoff: usize,
}

impl FockBasis {
    pub fn new(n_modes: usize, cutoff: usize) -> Result<Self, FockError> {
        if n_modes == 0 {
            return Err(FockError::NoModes);
        }
        Ok(Self { n_modes, cutoff })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `(cutoff + 1)^n_modes`.
    pub fn dimension(&self) -> usize {
        (self.cutoff + 1).pow(self.n_modes as u32)
    }

    fn radix(&self) -> usize {
        self.cutoff + 1
    }

    fn stride(&self, mode: usize) -> usize {
        self.radix().pow((self.n_modes - 1 - mode) as u32)
    }

    pub fn check_mode(&self, mode: usize) -> Result<(), FockError> {
        if mode >= self.n_modes {
            Err(FockError::ModeOutOfRange {
                mode,
                n_modes: self.n_modes,
            })
        } else {
            Ok(())
        }
    }

    /// Photon number of `mode` in basis state `index`.
    pub fn occupation(&self, index: usize, mode: usize) -> usize {
        (index / self.stride(mode)) % self.radix()
    }

    pub fn occupations(&self, index: usize) -> Vec<usize> {
        (0..self.n_modes)
            .map(|m| self.occupation(index, m))
            .collect()
    }

    /// Index of the basis state with the given occupations, if representable.
    pub fn index_of(&self, occupations: &[usize]) -> Option<usize> {
        if occupations.len() != self.n_modes || occupations.iter().any(|&n| n > self.cutoff) {
            return None;
        }
        Some(occupations.iter().fold(0, |acc, &n| acc * self.radix() + n))
    }

    /// True if any mode of the basis state sits at the cutoff.
    pub fn touches_cutoff(&self, index: usize) -> bool {
        (0..self.n_modes).any(|m| self.occupation(index, m) == self.cutoff)
    }

    fn total_photons(&self, index: usize) -> usize {
        (0..self.n_modes).map(|m| self.occupation(index, m)).sum()
    }
}

/// Complex amplitudes over a [`FockBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    basis: FockBasis,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn vacuum(basis: FockBasis) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dimension()];
        amplitudes[0] = C64::new(1.0, 0.0);
        Self { basis, amplitudes }
    }

    /// Wraps raw amplitudes without normalizing them.
    pub fn from_amplitudes(basis: FockBasis, amplitudes: Vec<C64>) -> Result<Self, FockError> {
        if amplitudes.len() != basis.dimension() {
            return Err(FockError::DimensionMismatch {
                got: amplitudes.len(),
                expected: basis.dimension(),
            });
        }
        Ok(Self { basis, amplitudes })
    }

    /// Single Fock state `|n_0, n_1, …⟩`.
    pub fn fock(basis: FockBasis, occupations: &[usize]) -> Result<Self, FockError> {
        let index = basis
            .index_of(occupations)
            .ok_or(FockError::DimensionMismatch {
                got: occupations.len(),
                expected: basis.n_modes(),
            })?;
        let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dimension()];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self { basis, amplitudes })
    }

    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Amplitude of `|occupations⟩`, zero if it lies outside the truncation.
    pub fn amplitude(&self, occupations: &[usize]) -> C64 {
        self.basis
            .index_of(occupations)
            .map_or(C64::new(0.0, 0.0), |i| self.amplitudes[i])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self, FockError> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(FockError::ZeroNorm);
        }
        Ok(Self {
            basis: self.basis,
            amplitudes: self.amplitudes.iter().map(|z| z / n).collect(),
        })
    }

    /// Fraction of the probability sitting in basis states with some mode at
    /// the cutoff. Those states are where truncation distorts the dynamics.
    pub fn truncation_leakage(&self) -> f64 {
        let total = self.norm_sqr();
        if total == 0.0 {
            return 0.0;
        }
        let edge: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| self.basis.touches_cutoff(*i))
            .map(|(_, z)| z.norm_sqr())
            .sum();
        edge / total
    }

    pub fn mean_photon_number(&self, mode: usize) -> f64 {
        let total = self.norm_sqr();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, z)| self.basis.occupation(i, mode) as f64 * z.norm_sqr())
            .sum::<f64>()
            / total
    }

    pub fn mean_total_photon_number(&self) -> f64 {
        let total = self.norm_sqr();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, z)| self.basis.total_photons(i) as f64 * z.norm_sqr())
            .sum::<f64>()
            / total
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Divides every amplitude by the vacuum amplitude, bringing the state
    /// to the unnormalized convention where `⟨0…0|ψ⟩ = 1`. Returns `None`
    /// when the vacuum amplitude vanishes.
    pub fn vacuum_referenced(&self) -> Option<Vec<C64>> {
        let v = self.amplitudes[0];
        if v.norm() == 0.0 {
            return None;
        }
        Some(self.amplitudes.iter().map(|z| z / v).collect())
    }

    pub fn apply(&self, op: &ModeOperator) -> StateVector {
        assert_eq!(self.basis, op.basis, "operator and state bases differ");
        let v = nalgebra::DVector::from_column_slice(&self.amplitudes);
        let out = &op.matrix * v;
        StateVector {
            basis: self.basis,
            amplitudes: out.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Hermitian,
    Unitary,
    General,
}

/// Dense operator on a [`FockBasis`].
#[derive(Debug, Clone)]
pub struct ModeOperator {
    basis: FockBasis,
    matrix: DMatrix<C64>,
    kind: OperatorKind,
}

impl ModeOperator {
    pub fn identity(basis: FockBasis) -> Self {
        let d = basis.dimension();
        Self {
            basis,
            matrix: DMatrix::identity(d, d),
            kind: OperatorKind::Unitary,
        }
    }

    /// Truncated annihilation operator: `a|n⟩ = √n |n−1⟩`.
    pub fn annihilation(basis: FockBasis, mode: usize) -> Result<Self, FockError> {
        basis.check_mode(mode)?;
        let d = basis.dimension();
        let stride = basis.stride(mode);
        let mut m = DMatrix::zeros(d, d);
        for col in 0..d {
            let n = basis.occupation(col, mode);
            if n > 0 {
                m[(col - stride, col)] = C64::new((n as f64).sqrt(), 0.0);
            }
        }
        Ok(Self {
            basis,
            matrix: m,
            kind: OperatorKind::General,
        })
    }

    /// Truncated creation operator, the adjoint of [`Self::annihilation`].
    pub fn creation(basis: FockBasis, mode: usize) -> Result<Self, FockError> {
        let a = Self::annihilation(basis, mode)?;
        Ok(Self {
            basis,
            matrix: a.matrix.adjoint(),
            kind: OperatorKind::General,
        })
    }

    pub fn number(basis: FockBasis, mode: usize) -> Result<Self, FockError> {
        basis.check_mode(mode)?;
        let d = basis.dimension();
        let diag =
            nalgebra::DVector::from_fn(d, |i, _| C64::new(basis.occupation(i, mode) as f64, 0.0));
        Ok(Self {
            basis,
            matrix: DMatrix::from_diagonal(&diag),
            kind: OperatorKind::Hermitian,
        })
    }

    /// `exp(generator)` for an anti-Hermitian generator.
    fn unitary_from_generator(basis: FockBasis, generator: DMatrix<C64>) -> Self {
        Self {
            basis,
            matrix: expm(&generator),
            kind: OperatorKind::Unitary,
        }
    }

    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn is_unitary(&self) -> bool {
        self.kind == OperatorKind::Unitary
    }

    /// Largest elementwise deviation of `U†U` from the identity, restricted
    /// to basis states with no mode at the cutoff.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.matrix.adjoint() * &self.matrix;
        let d = self.basis.dimension();
        let mut worst: f64 = 0.0;
        for i in (0..d).filter(|&i| !self.basis.touches_cutoff(i)) {
            for j in (0..d).filter(|&j| !self.basis.touches_cutoff(j)) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// Coherent state `|amp⟩` on one mode, vacuum on the others, normalized
/// after truncation.
pub fn coherent_state(mode: usize, amp: C64, basis: FockBasis) -> Result<StateVector, FockError> {
    let mut amps = vec![C64::new(0.0, 0.0); basis.n_modes()];
    basis.check_mode(mode)?;
    amps[mode] = amp;
    coherent_product(&amps, basis)
}

/// Product of coherent states, one amplitude per mode.
pub fn coherent_product(amps: &[C64], basis: FockBasis) -> Result<StateVector, FockError> {
    if amps.len() != basis.n_modes() {
        return Err(FockError::DimensionMismatch {
            got: amps.len(),
            expected: basis.n_modes(),
        });
    }
    if basis.cutoff() < 1 {
        return Err(FockError::CutoffTooSmall(basis.cutoff()));
    }
    let per_mode: Vec<Vec<C64>> = amps
        .iter()
        .map(|&a| coherent_series(a, basis.cutoff()))
        .collect();
    let amplitudes = (0..basis.dimension())
        .map(|i| {
            (0..basis.n_modes())
                .map(|m| per_mode[m][basis.occupation(i, m)])
                .product::<C64>()
        })
        .collect();
    let state = StateVector { basis, amplitudes }.normalized()?;
    let leakage = state.truncation_leakage();
    if leakage > COHERENT_LEAKAGE_WARN {
        warn!(
            "coherent state truncation leakage {leakage:.2e} at cutoff {}",
            basis.cutoff()
        );
    }
    Ok(state)
}

/// `e^{-|a|²/2} a^n / √(n!)` for `n = 0..=cutoff`.
fn coherent_series(amp: C64, cutoff: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(cutoff + 1);
    let mut term = C64::new((-amp.norm_sqr() / 2.0).exp(), 0.0);
    out.push(term);
    for n in 1..=cutoff {
        term = term * amp / (n as f64).sqrt();
        out.push(term);
    }
    out
}

/// Two-mode mixer `exp(θ(e^{iφ} a†b − e^{−iφ} a b†))` with `θ = arccos √T`.
///
/// A photon entering `mode_a` stays there with probability `T`.
pub fn beamsplitter(
    basis: FockBasis,
    mode_a: usize,
    mode_b: usize,
    transmissivity: f64,
    phase: f64,
) -> Result<ModeOperator, FockError> {
    if !(0.0..=1.0).contains(&transmissivity) {
        return Err(FockError::Transmissivity(transmissivity));
    }
    if mode_a == mode_b {
        return Err(FockError::SameMode(mode_a));
    }
    let ad = ModeOperator::creation(basis, mode_a)?;
    let b = ModeOperator::annihilation(basis, mode_b)?;
    let theta = transmissivity.sqrt().acos();
    let hop = &ad.matrix * &b.matrix * C64::from_polar(theta, phase);
    let generator = &hop - hop.adjoint();
    Ok(ModeOperator::unitary_from_generator(basis, generator))
}

/// Single-mode phase shifter `exp(iθ n)`.
pub fn phase_shifter(basis: FockBasis, mode: usize, theta: f64) -> Result<ModeOperator, FockError> {
    basis.check_mode(mode)?;
    let d = basis.dimension();
    let diag = nalgebra::DVector::from_fn(d, |i, _| {
        C64::from_polar(1.0, basis.occupation(i, mode) as f64 * theta)
    });
    Ok(ModeOperator {
        basis,
        matrix: DMatrix::from_diagonal(&diag),
        kind: OperatorKind::Unitary,
    })
}

/// Two-mode squeezing unitary `exp(κ a₁†a₂† − κ* a₁a₂)` in the parametric
/// approximation; `kappa` lumps coupling, pump amplitude and interaction time.
pub fn spdc_operator(
    basis: FockBasis,
    mode_1: usize,
    mode_2: usize,
    kappa: C64,
) -> Result<ModeOperator, FockError> {
    if mode_1 == mode_2 {
        return Err(FockError::SameMode(mode_1));
    }
    let a1d = ModeOperator::creation(basis, mode_1)?;
    let a2d = ModeOperator::creation(basis, mode_2)?;
    let pair = &a1d.matrix * &a2d.matrix * kappa;
    let generator = &pair - pair.adjoint();
    Ok(ModeOperator::unitary_from_generator(basis, generator))
}

/// Evolves `state` under down-conversion, failing if the result leaks more
/// than [`DEFAULT_LEAKAGE_BOUND`] into the cutoff boundary.
pub fn spdc_evolve(
    state: &StateVector,
    mode_1: usize,
    mode_2: usize,
    kappa: C64,
) -> Result<StateVector, FockError> {
    spdc_evolve_bounded(state, mode_1, mode_2, kappa, DEFAULT_LEAKAGE_BOUND)
}

pub fn spdc_evolve_bounded(
    state: &StateVector,
    mode_1: usize,
    mode_2: usize,
    kappa: C64,
    leakage_bound: f64,
) -> Result<StateVector, FockError> {
    let u = spdc_operator(state.basis(), mode_1, mode_2, kappa)?;
    let out = state.apply(&u);
    let leakage = out.truncation_leakage();
    if leakage > leakage_bound {
        return Err(FockError::TruncationLeakage {
            leakage,
            bound: leakage_bound,
            cutoff: state.basis().cutoff(),
        });
    }
    Ok(out)
}

/// Multiplies each amplitude by `e^{i n θ}`, `n` the photon number in `mode`.
pub fn phase_shift(state: &StateVector, mode: usize, theta: f64) -> Result<StateVector, FockError> {
    let basis = state.basis();
    basis.check_mode(mode)?;
    let amplitudes = state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(i, z)| z * C64::from_polar(1.0, basis.occupation(i, mode) as f64 * theta))
        .collect();
    Ok(StateVector { basis, amplitudes })
}

/// A threshold detector watching one or more modes.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub modes: Vec<usize>,
    pub efficiency: f64,
}

impl Detector {
    pub fn ideal(modes: Vec<usize>) -> Self {
        Self {
            modes,
            efficiency: 1.0,
        }
    }
}

/// Joint outcome distribution of two threshold detectors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClickDistribution {
    pub none: f64,
    pub det1_only: f64,
    pub det2_only: f64,
    pub both: f64,
}

impl ClickDistribution {
    pub fn total(&self) -> f64 {
        self.none + self.det1_only + self.det2_only + self.both
    }
}

/// Click statistics of two non-number-resolving detectors.
///
/// Each photon reaching a detector survives independently with the detector
/// efficiency; the detector fires if at least one survives.
pub fn click_probabilities(
    state: &StateVector,
    det1: &Detector,
    det2: &Detector,
) -> Result<ClickDistribution, FockError> {
    let basis = state.basis();
    for det in [det1, det2] {
        if !(0.0..=1.0).contains(&det.efficiency) {
            return Err(FockError::Efficiency(det.efficiency));
        }
        for &m in &det.modes {
            basis.check_mode(m)?;
        }
    }
    if let Some(&m) = det1.modes.iter().find(|m| det2.modes.contains(m)) {
        return Err(FockError::OverlappingDetectors(m));
    }
    let total = state.norm_sqr();
    if total == 0.0 {
        return Err(FockError::ZeroNorm);
    }
    let photons = |i: usize, det: &Detector| -> i32 {
        det.modes
            .iter()
            .map(|&m| basis.occupation(i, m))
            .sum::<usize>() as i32
    };
    let mut dist = ClickDistribution::default();
    for (i, z) in state.amplitudes().iter().enumerate() {
        let p = z.norm_sqr() / total;
        if p == 0.0 {
            continue;
        }
        let miss1 = (1.0 - det1.efficiency).powi(photons(i, det1));
        let miss2 = (1.0 - det2.efficiency).powi(photons(i, det2));
        dist.none += p * miss1 * miss2;
        dist.det1_only += p * (1.0 - miss1) * miss2;
        dist.det2_only += p * miss1 * (1.0 - miss2);
        dist.both += p * (1.0 - miss1) * (1.0 - miss2);
    }
    Ok(dist)
}

/// Projects onto "an ideal threshold detector on `modes` fired" (or did not),
/// returning the renormalized state and the outcome probability.
pub fn project_on_click(
    state: &StateVector,
    modes: &[usize],
    clicked: bool,
) -> Result<(StateVector, f64), FockError> {
    let basis = state.basis();
    for &m in modes {
        basis.check_mode(m)?;
    }
    let total = state.norm_sqr();
    if total == 0.0 {
        return Err(FockError::ZeroNorm);
    }
    let amplitudes: Vec<C64> = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let fired = modes.iter().any(|&m| basis.occupation(i, m) > 0);
            if fired == clicked {
                z
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let kept = StateVector { basis, amplitudes };
    let probability = kept.norm_sqr() / total;
    if probability == 0.0 {
        return Err(FockError::ZeroProbabilityOutcome);
    }
    Ok((kept.normalized()?, probability))
}
