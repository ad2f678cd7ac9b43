//! Fixed-point binary encoding of continuous increments and the resulting
//! QUBO and Ising problems.
//!
//! Bit order is variable-major and little-endian within a variable: bit
//! `i·L + j` carries weight `2ʲ·ε_i` of the `i`-th active variable.

use std::collections::BTreeMap;

use nalgebra::DVector;
use thiserror::Error;

use crate::quad::QuadraticForm;

/// Widest supported bits per variable.
pub const MAX_BITS_PER_VAR: u32 = 52;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("bits per variable must be in 1..={MAX_BITS_PER_VAR}, got {0}")]
    InvalidBits(u32),
    #[error("inverted range at {index}: [{d_min}, {d_max}]")]
    InvertedRange {
        index: usize,
        d_min: f64,
        d_max: f64,
    },
    #[error("negative or non-finite error {value} at {index}")]
    InvalidEpsilon { index: usize, value: f64 },
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("QUBO index ({i}, {j}) invalid for {n_bits} bits")]
    InvalidIndex { i: usize, j: usize, n_bits: usize },
}

fn check_bits(l: u32) -> Result<(), EncodingError> {
    if l == 0 || l > MAX_BITS_PER_VAR {
        return Err(EncodingError::InvalidBits(l));
    }
    Ok(())
}

fn levels(l: u32) -> f64 {
    ((1u64 << l) - 1) as f64
}

/// `ε = (d_max − d_min)/(2ᴸ − 1)` and `δ̄ = (d_max + d_min − ε)/2`.
pub fn error_from_range(
    d_min: &DVector<f64>,
    d_max: &DVector<f64>,
    l: u32,
) -> Result<(DVector<f64>, DVector<f64>), EncodingError> {
    check_bits(l)?;
    if d_min.len() != d_max.len() {
        return Err(EncodingError::DimensionMismatch {
            what: "d_max",
            expected: d_min.len(),
            found: d_max.len(),
        });
    }
    let mut eps = DVector::zeros(d_min.len());
    let mut center = DVector::zeros(d_min.len());
    for i in 0..d_min.len() {
        if !(d_min[i] <= d_max[i]) {
            return Err(EncodingError::InvertedRange {
                index: i,
                d_min: d_min[i],
                d_max: d_max[i],
            });
        }
        eps[i] = (d_max[i] - d_min[i]) / levels(l);
        center[i] = (d_max[i] + d_min[i] - eps[i]) / 2.0;
    }
    Ok((eps, center))
}

/// `d_min = δ̄ − (2ᴸ⁻¹ − 1)ε` and `d_max = δ̄ + 2ᴸ⁻¹ε`.
pub fn range_from_error(
    eps: &DVector<f64>,
    center: &DVector<f64>,
    l: u32,
) -> Result<(DVector<f64>, DVector<f64>), EncodingError> {
    check_bits(l)?;
    if eps.len() != center.len() {
        return Err(EncodingError::DimensionMismatch {
            what: "center",
            expected: eps.len(),
            found: center.len(),
        });
    }
    let half = (1u64 << (l - 1)) as f64;
    let mut d_min = DVector::zeros(eps.len());
    let mut d_max = DVector::zeros(eps.len());
    for i in 0..eps.len() {
        if !(eps[i] >= 0.0) || !eps[i].is_finite() {
            return Err(EncodingError::InvalidEpsilon {
                index: i,
                value: eps[i],
            });
        }
        d_min[i] = center[i] - (half - 1.0) * eps[i];
        d_max[i] = center[i] + half * eps[i];
    }
    Ok((d_min, d_max))
}

/// Per-variable encoding data. Variables with `ε = 0` are frozen at `d_min`
/// and own no bits.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingSpec {
    bits_per_var: u32,
    epsilon: DVector<f64>,
    center: DVector<f64>,
    d_min: DVector<f64>,
    d_max: DVector<f64>,
    active: Vec<usize>,
}

impl EncodingSpec {
    pub fn from_range(
        d_min: DVector<f64>,
        d_max: DVector<f64>,
        bits_per_var: u32,
    ) -> Result<Self, EncodingError> {
        let (epsilon, center) = error_from_range(&d_min, &d_max, bits_per_var)?;
        Ok(Self::assemble(bits_per_var, epsilon, center, d_min, d_max))
    }

    pub fn from_error(
        epsilon: DVector<f64>,
        center: DVector<f64>,
        bits_per_var: u32,
    ) -> Result<Self, EncodingError> {
        let (d_min, d_max) = range_from_error(&epsilon, &center, bits_per_var)?;
        Ok(Self::assemble(bits_per_var, epsilon, center, d_min, d_max))
    }

    fn assemble(
        bits_per_var: u32,
        epsilon: DVector<f64>,
        center: DVector<f64>,
        d_min: DVector<f64>,
        d_max: DVector<f64>,
    ) -> Self {
        let active = (0..epsilon.len()).filter(|&i| epsilon[i] > 0.0).collect();
        Self {
            bits_per_var,
            epsilon,
            center,
            d_min,
            d_max,
            active,
        }
    }

    pub fn bits_per_var(&self) -> u32 {
        self.bits_per_var
    }

    pub fn n_vars(&self) -> usize {
        self.epsilon.len()
    }

    pub fn epsilon(&self) -> &DVector<f64> {
        &self.epsilon
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn d_min(&self) -> &DVector<f64> {
        &self.d_min
    }

    pub fn d_max(&self) -> &DVector<f64> {
        &self.d_max
    }

    /// Indices of variables that own bits.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// `[2⁰, 2¹, …, 2ᴸ⁻¹]`.
    pub fn beta(&self) -> Vec<f64> {
        (0..self.bits_per_var).map(|j| (1u64 << j) as f64).collect()
    }

    pub fn n_bits(&self) -> usize {
        self.active.len() * self.bits_per_var as usize
    }

    /// Active variable owning bit `bit`, and the bit's weight `2ʲ·ε`.
    fn bit_owner(&self, bit: usize) -> (usize, f64) {
        let l = self.bits_per_var as usize;
        let var = self.active[bit / l];
        (var, self.epsilon[var] * (1u64 << (bit % l)) as f64)
    }
}

/// `δ = d_min + V b`.
pub fn decode(spec: &EncodingSpec, bits: &[u8]) -> Result<DVector<f64>, EncodingError> {
    if bits.len() != spec.n_bits() {
        return Err(EncodingError::DimensionMismatch {
            what: "bit vector",
            expected: spec.n_bits(),
            found: bits.len(),
        });
    }
    let mut delta = spec.d_min.clone();
    for (b, &bit) in bits.iter().enumerate() {
        if bit != 0 {
            let (var, w) = spec.bit_owner(b);
            delta[var] += w;
        }
    }
    Ok(delta)
}

/// Upper-triangular QUBO `bᵀQb + offset`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuboProblem {
    n_bits: usize,
    q: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl QuboProblem {
    pub fn new(n_bits: usize) -> Self {
        Self {
            n_bits,
            q: BTreeMap::new(),
            offset: 0.0,
        }
    }

    /// Builds from triplets; `(j, i)` entries with `j > i` are folded onto `(i, j)`.
    pub fn from_triplets(
        n_bits: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        offset: f64,
    ) -> Result<Self, EncodingError> {
        let mut p = Self::new(n_bits);
        p.offset = offset;
        for (i, j, v) in triplets {
            p.add(i, j, v)?;
        }
        Ok(p)
    }

    /// Adds `v` to the coefficient of `b_i b_j`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<(), EncodingError> {
        if i >= self.n_bits || j >= self.n_bits {
            return Err(EncodingError::InvalidIndex {
                i,
                j,
                n_bits: self.n_bits,
            });
        }
        let key = (i.min(j), i.max(j));
        *self.q.entry(key).or_insert(0.0) += v;
        Ok(())
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn set_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0)
    }

    /// Stored `(i, j, value)` entries with `i ≤ j`, in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.q.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn max_abs(&self) -> f64 {
        self.q.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `bᵀQb`, offset excluded.
    pub fn energy(&self, bits: &[u8]) -> f64 {
        self.entries()
            .filter(|&(i, j, _)| bits[i] != 0 && bits[j] != 0)
            .map(|(_, _, v)| v)
            .sum()
    }

    /// Dense symmetric adjacency used by the local-field samplers: the
    /// diagonal holds `Q_ii`, off-diagonal entries are listed once per end.
    pub fn neighbours(&self) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
        let mut diag = vec![0.0; self.n_bits];
        let mut adj = vec![Vec::new(); self.n_bits];
        for (i, j, v) in self.entries() {
            if i == j {
                diag[i] += v;
            } else if v != 0.0 {
                adj[i].push((j, v));
                adj[j].push((i, v));
            }
        }
        (diag, adj)
    }
}

/// `Q = VᵀAV + diag(Vᵀ(g + 2A d_min))`, with offset `c + d_minᵀg + d_minᵀA d_min`.
pub fn qubo_from_quadratic(
    form: &QuadraticForm,
    spec: &EncodingSpec,
) -> Result<QuboProblem, EncodingError> {
    if form.n_vars() != spec.n_vars() {
        return Err(EncodingError::DimensionMismatch {
            what: "encoding",
            expected: form.n_vars(),
            found: spec.n_vars(),
        });
    }
    let n_bits = spec.n_bits();
    let mut p = QuboProblem::new(n_bits);
    p.offset = form.evaluate(&spec.d_min);

    let lin = &form.gradient + (&form.a * &spec.d_min) * 2.0;
    let owners: Vec<(usize, f64)> = (0..n_bits).map(|b| spec.bit_owner(b)).collect();
    for (r, &(vr, wr)) in owners.iter().enumerate() {
        let diag = wr * lin[vr] + wr * wr * form.a[(vr, vr)];
        if diag != 0.0 {
            p.q.insert((r, r), diag);
        }
        for (c, &(vc, wc)) in owners.iter().enumerate().skip(r + 1) {
            let v = wr * wc * (form.a[(vr, vc)] + form.a[(vc, vr)]);
            if v != 0.0 {
                p.q.insert((r, c), v);
            }
        }
    }
    Ok(p)
}

/// `E(s) = Σ h_i s_i + Σ_{i<j} J_ij s_i s_j + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingProblem {
    pub h: Vec<f64>,
    pub j: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

impl IsingProblem {
    pub fn energy(&self, spins: &[i8]) -> f64 {
        let lin: f64 = self.h.iter().zip(spins).map(|(h, &s)| h * s as f64).sum();
        let quad: f64 = self
            .j
            .iter()
            .map(|(&(a, b), v)| v * (spins[a] * spins[b]) as f64)
            .sum();
        lin + quad + self.offset
    }
}

/// Substitutes `b = (1 + s)/2`. The QUBO's own offset is carried over.
pub fn qubo_to_ising(problem: &QuboProblem) -> IsingProblem {
    let mut h = vec![0.0; problem.n_bits()];
    let mut j = BTreeMap::new();
    let mut offset = problem.offset();
    for (a, b, v) in problem.entries() {
        if a == b {
            h[a] += v / 2.0;
            offset += v / 2.0;
        } else {
            *j.entry((a, b)).or_insert(0.0) += v / 4.0;
            h[a] += v / 4.0;
            h[b] += v / 4.0;
            offset += v / 4.0;
        }
    }
    IsingProblem { h, j, offset }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn all_bits(n: usize) -> impl Iterator<Item = Vec<u8>> {
        (0u32..(1 << n)).map(move |m| (0..n).map(|i| ((m >> i) & 1) as u8).collect())
    }

    #[test]
    fn error_from_range_examples() {
        let (e, c) = error_from_range(&dv(&[0.0]), &dv(&[3.0]), 2).unwrap();
        assert_eq!((e[0], c[0]), (1.0, 1.0));
        let (e, c) = error_from_range(&dv(&[0.0]), &dv(&[1.0]), 1).unwrap();
        assert_eq!((e[0], c[0]), (1.0, 0.0));
        let (e, c) = error_from_range(&dv(&[2.5]), &dv(&[2.5]), 3).unwrap();
        assert_eq!((e[0], c[0]), (0.0, 2.5));
        assert!(matches!(
            error_from_range(&dv(&[1.0]), &dv(&[0.0]), 2),
            Err(EncodingError::InvertedRange { .. })
        ));
        assert!(matches!(
            error_from_range(&dv(&[0.0]), &dv(&[1.0]), 0),
            Err(EncodingError::InvalidBits(0))
        ));
    }

    #[test]
    fn range_from_error_examples() {
        let (lo, hi) = range_from_error(&dv(&[1.0]), &dv(&[1.0]), 2).unwrap();
        assert_eq!((lo[0], hi[0]), (0.0, 3.0));
        let (lo, hi) = range_from_error(&dv(&[0.0]), &dv(&[-0.3]), 4).unwrap();
        assert_eq!((lo[0], hi[0]), (-0.3, -0.3));
        assert!(range_from_error(&dv(&[-1.0]), &dv(&[0.0]), 2).is_err());
    }

    #[test]
    fn decode_examples() {
        let spec = EncodingSpec::from_range(dv(&[0.0]), dv(&[3.0]), 2).unwrap();
        assert_eq!(decode(&spec, &[0, 0]).unwrap()[0], 0.0);
        assert_eq!(decode(&spec, &[1, 1]).unwrap()[0], 3.0);
        assert_eq!(decode(&spec, &[1, 0]).unwrap()[0], 1.0);
        assert_eq!(decode(&spec, &[0, 1]).unwrap()[0], 2.0);
        assert!(matches!(
            decode(&spec, &[0, 1, 1]),
            Err(EncodingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn frozen_variables_own_no_bits() {
        let spec =
            EncodingSpec::from_range(dv(&[0.0, 1.0, -1.0]), dv(&[3.0, 1.0, 2.0]), 2).unwrap();
        assert_eq!(spec.active(), &[0, 2]);
        assert_eq!(spec.n_bits(), 4);
        let d = decode(&spec, &[1, 0, 0, 1]).unwrap();
        assert_eq!(d.as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(spec.beta(), vec![1.0, 2.0]);
    }

    #[test]
    fn qubo_single_square() {
        let f = QuadraticForm::new(0.0, dv(&[0.0]), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let spec = EncodingSpec::from_range(dv(&[0.0]), dv(&[1.0]), 1).unwrap();
        let q = qubo_from_quadratic(&f, &spec).unwrap();
        assert_eq!(q.get(0, 0), 1.0);
        assert_eq!(q.offset(), 0.0);
        assert_eq!(q.energy(&[0]), 0.0);
        assert_eq!(q.energy(&[1]), 1.0);
    }

    #[test]
    fn qubo_shifted_square_is_flat() {
        let f = QuadraticForm::new(0.0, dv(&[1.0]), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let spec = EncodingSpec::from_range(dv(&[-1.0]), dv(&[0.0]), 1).unwrap();
        let q = qubo_from_quadratic(&f, &spec).unwrap();
        assert_eq!(q.get(0, 0), 0.0);
        assert_eq!(q.offset(), 0.0);
        for b in [[0u8], [1u8]] {
            assert_eq!(q.energy(&b) + q.offset(), 0.0);
        }
    }

    #[test]
    fn zero_form_zero_qubo() {
        let mut f = QuadraticForm::zeros(2);
        f.constant = 4.2;
        let spec = EncodingSpec::from_range(dv(&[-1.0, -1.0]), dv(&[1.0, 1.0]), 3).unwrap();
        let q = qubo_from_quadratic(&f, &spec).unwrap();
        assert_eq!(q.entries().count(), 0);
        assert_eq!(q.offset(), 4.2);
    }

    #[test]
    fn ising_single_bit() {
        let q = QuboProblem::from_triplets(1, [(0, 0, 3.0)], 0.0).unwrap();
        let is = qubo_to_ising(&q);
        assert_eq!(is.h, vec![1.5]);
        assert!(is.j.is_empty());
        assert_eq!(is.offset, 1.5);
        let z = qubo_to_ising(&QuboProblem::new(3));
        assert_eq!(z.h, vec![0.0; 3]);
        assert!(z.j.is_empty());
        assert_eq!(z.offset, 0.0);
    }

    #[test]
    fn qubo_index_checks_and_folding() {
        let mut q = QuboProblem::new(2);
        assert!(q.add(2, 0, 1.0).is_err());
        q.add(1, 0, 1.5).unwrap();
        q.add(0, 1, 0.5).unwrap();
        assert_eq!(q.entries().collect::<Vec<_>>(), vec![(0, 1, 2.0)]);
    }

    fn random_form(n: usize, vals: &[f64]) -> QuadraticForm {
        let m = DMatrix::from_fn(n, n, |i, j| vals[i * n + j]);
        let a = (&m + m.transpose()) * 0.5;
        let g = DVector::from_fn(n, |i, _| vals[n * n + i]);
        QuadraticForm::new(vals[n * n + n], g, a).unwrap()
    }

    proptest! {
        #[test]
        fn round_trip_range_error(
            lo in prop::collection::vec(-5.0f64..5.0, 1..4),
            width in prop::collection::vec(0.0f64..5.0, 4),
            l in 1u32..6,
        ) {
            let lo = dv(&lo);
            let hi = DVector::from_fn(lo.len(), |i, _| lo[i] + width[i]);
            let (e, c) = error_from_range(&lo, &hi, l).unwrap();
            let (lo2, hi2) = range_from_error(&e, &c, l).unwrap();
            prop_assert!((&lo2 - &lo).amax() <= 1e-14 * (1.0 + lo.amax() + hi.amax()));
            prop_assert!((&hi2 - &hi).amax() <= 1e-14 * (1.0 + lo.amax() + hi.amax()));
        }

        #[test]
        fn qubo_matches_form_on_every_bit_vector(
            n in 1usize..4,
            l in 1u32..4,
            vals in prop::collection::vec(-3.0f64..3.0, 13),
            lo in prop::collection::vec(-2.0f64..0.0, 3),
            eps in prop::collection::vec(0.01f64..1.0, 3),
        ) {
            let f = random_form(n, &vals);
            let spec = EncodingSpec::from_error(
                DVector::from_column_slice(&eps[..n]),
                DVector::from_column_slice(&lo[..n]),
                l,
            ).unwrap();
            let q = qubo_from_quadratic(&f, &spec).unwrap();
            for b in all_bits(spec.n_bits()) {
                let want = f.evaluate(&decode(&spec, &b).unwrap());
                let got = q.energy(&b) + q.offset();
                prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }

        #[test]
        fn decode_is_within_range_and_injective(
            eps in prop::collection::vec(0.01f64..1.0, 2),
            l in 1u32..4,
        ) {
            let spec = EncodingSpec::from_error(dv(&eps), dv(&[0.0, 0.0]), l).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for b in all_bits(spec.n_bits()) {
                let d = decode(&spec, &b).unwrap();
                for i in 0..2 {
                    prop_assert!(d[i] >= spec.d_min()[i] - 1e-15 && d[i] <= spec.d_max()[i] + 1e-15);
                }
                seen.insert((d[0].to_bits(), d[1].to_bits()));
            }
            prop_assert_eq!(seen.len(), 1 << spec.n_bits());
        }

        #[test]
        fn ising_matches_qubo(vals in prop::collection::vec(-5.0f64..5.0, 10), off in -1.0f64..1.0) {
            let mut q = QuboProblem::new(4);
            q.set_offset(off);
            let mut k = 0;
            for i in 0..4 {
                for j in i..4 {
                    q.add(i, j, vals[k]).unwrap();
                    k += 1;
                }
            }
            let is = qubo_to_ising(&q);
            for b in all_bits(4) {
                let s: Vec<i8> = b.iter().map(|&v| 2 * v as i8 - 1).collect();
                let want = q.energy(&b) + q.offset();
                prop_assert!((is.energy(&s) - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }

        #[test]
        fn folded_storage_agrees(vals in prop::collection::vec(-5.0f64..5.0, 9)) {
            let full = QuboProblem::from_triplets(
                3,
                (0..9).map(|k| (k / 3, k % 3, vals[k])),
                0.0,
            ).unwrap();
            let sym = QuboProblem::from_triplets(
                3,
                (0..9).map(|k| {
                    let (i, j) = (k / 3, k % 3);
                    (i, j, 0.5 * (vals[i * 3 + j] + vals[j * 3 + i]))
                }),
                0.0,
            ).unwrap();
            for b in all_bits(3) {
                let dense: f64 = (0..9).map(|k| vals[k] * (b[k / 3] * b[k % 3]) as f64).sum();
                prop_assert!((full.energy(&b) - dense).abs() < 1e-12);
                prop_assert!((sym.energy(&b) - dense).abs() < 1e-12);
            }
        }
    }
}
