//! Symbolic spin-1/2 operators as sums of Cartesian spin strings.
//!
//! A term is a product `S_{i1}^{a1} S_{i2}^{a2} …` on distinct sites with a
//! complex coefficient. Because every such string is Hermitian and the strings
//! are linearly independent, an operator is Hermitian exactly when all of its
//! coefficients are real.
//!
//! Basis convention: spin `i` is tensor factor `i`, i.e. bit `N − 1 − i` of the
//! basis index, and bit value 0 is the `S_z = +1/2` state.

use std::collections::BTreeMap;
use std::fmt;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Largest register any dense or sparse expansion will accept.
pub const MAX_SITES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Axis {
        Self::ALL[i]
    }

    pub fn unit(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

type Key = Vec<(u16, Axis)>;

/// Sum of spin strings on an `n_sites` register.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinOperator {
    n_sites: usize,
    terms: BTreeMap<Key, C64>,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn levi(a: usize, b: usize) -> Option<(usize, f64)> {
    match (a, b) {
        (0, 1) => Some((2, 1.0)),
        (1, 2) => Some((0, 1.0)),
        (2, 0) => Some((1, 1.0)),
        (1, 0) => Some((2, -1.0)),
        (2, 1) => Some((0, -1.0)),
        (0, 2) => Some((1, -1.0)),
        _ => None,
    }
}

impl SpinOperator {
    pub fn zero(n_sites: usize) -> Self {
        Self {
            n_sites,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n_sites: usize, coeff: f64) -> Self {
        let mut op = Self::zero(n_sites);
        op.add_term(Vec::new(), c(coeff));
        op
    }

    /// `coeff · S_site^axis`
    pub fn single(n_sites: usize, site: usize, axis: Axis, coeff: f64) -> Self {
        assert!(site < n_sites, "site {site} outside register of {n_sites}");
        let mut op = Self::zero(n_sites);
        op.add_term(vec![(site as u16, axis)], c(coeff));
        op
    }

    /// `coeff · S_i^a S_j^b` for `i ≠ j`.
    pub fn pair(n_sites: usize, i: usize, a: Axis, j: usize, b: Axis, coeff: f64) -> Self {
        assert!(i < n_sites && j < n_sites && i != j, "bad pair ({i}, {j})");
        let mut op = Self::zero(n_sites);
        let key = if i < j {
            vec![(i as u16, a), (j as u16, b)]
        } else {
            vec![(j as u16, b), (i as u16, a)]
        };
        op.add_term(key, c(coeff));
        op
    }

    /// `Σ_i S_i^axis`
    pub fn collective(n_sites: usize, axis: Axis) -> Self {
        let mut op = Self::zero(n_sites);
        for i in 0..n_sites {
            op.add_term(vec![(i as u16, axis)], c(1.0));
        }
        op
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterates `(string, coefficient)` pairs in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (&[(u16, Axis)], C64)> {
        self.terms.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    /// Coefficient of a given string (zero when absent).
    pub fn coefficient(&self, string: &[(usize, Axis)]) -> C64 {
        let mut key: Key = string.iter().map(|(s, a)| (*s as u16, *a)).collect();
        key.sort();
        self.terms.get(&key).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    fn add_term(&mut self, key: Key, coeff: C64) {
        if coeff.re == 0.0 && coeff.im == 0.0 {
            return;
        }
        let entry = self.terms.entry(key).or_insert(C64::new(0.0, 0.0));
        *entry += coeff;
    }

    fn check_same_register(&self, other: &Self) {
        assert_eq!(self.n_sites, other.n_sites, "operators act on different registers");
    }

    /// Removes terms whose magnitude is at most `tol`.
    pub fn pruned(mut self, tol: f64) -> Self {
        self.terms.retain(|_, v| v.norm() > tol);
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.scaled_complex(c(s))
    }

    pub fn scaled_complex(&self, s: C64) -> Self {
        let mut out = Self::zero(self.n_sites);
        for (k, v) in &self.terms {
            out.add_term(k.clone(), *v * s);
        }
        out
    }

    /// `self += s · other`
    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        self.check_same_register(other);
        for (k, v) in &other.terms {
            self.add_term(k.clone(), *v * s);
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    /// Operator product `self · other`.
    pub fn mul(&self, other: &Self) -> Self {
        self.check_same_register(other);
        let mut out = Self::zero(self.n_sites);
        for (ka, va) in &self.terms {
            for (kb, vb) in &other.terms {
                let (key, factor) = multiply_strings(ka, kb);
                out.add_term(key, *va * *vb * factor);
            }
        }
        out.pruned(0.0)
    }

    /// `[self, other]`
    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).minus(&other.mul(self)).pruned(1e-15 * (self.norm_l1() * other.norm_l1()).max(1e-300))
    }

    /// Sum of coefficient magnitudes, a cheap scale estimate.
    pub fn norm_l1(&self) -> f64 {
        self.terms.values().map(|v| v.norm()).sum()
    }

    /// Hermitian adjoint.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.n_sites);
        for (k, v) in &self.terms {
            out.add_term(k.clone(), v.conj());
        }
        out
    }

    /// Largest imaginary part of any coefficient; zero for Hermitian operators.
    pub fn hermiticity_defect(&self) -> f64 {
        self.terms.values().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Normalised Hilbert–Schmidt product `Tr(A† B) / 2^N`.
    pub fn hs_inner(&self, other: &Self) -> C64 {
        self.check_same_register(other);
        let mut acc = C64::new(0.0, 0.0);
        for (k, va) in &self.terms {
            if let Some(vb) = other.terms.get(k) {
                acc += va.conj() * *vb * 0.25f64.powi(k.len() as i32);
            }
        }
        acc
    }

    /// Frobenius norm `sqrt(Tr(A†A))`, computed without expanding to a matrix.
    pub fn frobenius_norm(&self) -> f64 {
        (self.hs_inner(self).re * (self.n_sites as f64).exp2()).sqrt()
    }

    /// Conjugation `U† self U` for the global rotation
    /// `U = exp(−iθ n̂·Σ S)` encoded by the matrix `m` with
    /// `U† (a·S) U = (m a)·S` on every site.
    pub fn rotated(&self, m: &[[f64; 3]; 3]) -> Self {
        let mut out = Self::zero(self.n_sites);
        for (key, v) in &self.terms {
            // expand each site factor into its three Cartesian images
            let mut partial: Vec<(Key, f64)> = vec![(Vec::with_capacity(key.len()), 1.0)];
            for &(site, axis) in key {
                let mu = axis.index();
                let mut next = Vec::with_capacity(partial.len() * 3);
                for (k, w) in &partial {
                    for nu in 0..3 {
                        let coef = m[nu][mu];
                        if coef.abs() < 1e-15 {
                            continue;
                        }
                        let mut k2 = k.clone();
                        k2.push((site, Axis::from_index(nu)));
                        next.push((k2, w * coef));
                    }
                }
                partial = next;
            }
            for (k, w) in partial {
                out.add_term(k, *v * w);
            }
        }
        out.pruned(1e-15 * self.norm_l1().max(1e-300))
    }

    /// Whether `[self, Σ S_z] = 0`, decided from the matrix elements.
    pub fn conserves_total_sz(&self) -> bool {
        let compiled = self.compile();
        let dim = 1u64 << self.n_sites;
        let tol = 1e-13 * self.norm_l1().max(1.0);
        let mut row: BTreeMap<u64, C64> = BTreeMap::new();
        for b in 0..dim {
            row.clear();
            let pc = b.count_ones();
            for t in &compiled {
                let (out, amp) = t.apply(b);
                if out.count_ones() != pc {
                    *row.entry(out).or_insert(C64::new(0.0, 0.0)) += amp;
                }
            }
            if row.values().any(|v| v.norm() > tol) {
                return false;
            }
        }
        true
    }

    /// Whether every matrix element in the computational basis is real.
    pub fn is_real_in_z_basis(&self) -> bool {
        let compiled = self.compile();
        let dim = 1u64 << self.n_sites;
        let tol = 1e-13 * self.norm_l1().max(1.0);
        let mut row: BTreeMap<u64, C64> = BTreeMap::new();
        for b in 0..dim {
            row.clear();
            for t in &compiled {
                let (out, amp) = t.apply(b);
                *row.entry(out).or_insert(C64::new(0.0, 0.0)) += amp;
            }
            if row.values().any(|v| v.im.abs() > tol) {
                return false;
            }
        }
        true
    }

    pub(crate) fn compile(&self) -> Vec<CompiledTerm> {
        assert!(self.n_sites <= MAX_SITES, "register too large");
        let n = self.n_sites;
        self.terms
            .iter()
            .map(|(key, v)| {
                let mut flip = 0u64;
                let mut sign_mask = 0u64;
                let mut factor = *v * 0.5f64.powi(key.len() as i32);
                for &(site, axis) in key {
                    let bit = 1u64 << (n - 1 - site as usize);
                    match axis {
                        Axis::X => flip |= bit,
                        Axis::Y => {
                            flip |= bit;
                            sign_mask |= bit;
                            factor *= C64::new(0.0, 1.0);
                        }
                        Axis::Z => sign_mask |= bit,
                    }
                }
                CompiledTerm {
                    flip,
                    sign_mask,
                    factor,
                }
            })
            .collect()
    }

    /// Dense `2^N × 2^N` matrix.
    pub fn to_dense(&self) -> Result<Mat<C64>> {
        if self.n_sites > 14 {
            return Err(Error::Capacity {
                requested: self.n_sites,
                cap: 14,
            });
        }
        let dim = 1usize << self.n_sites;
        let mut m = Mat::<C64>::zeros(dim, dim);
        for t in self.compile() {
            for b in 0..dim {
                let (out, amp) = t.apply(b as u64);
                m[(out as usize, b)] += amp;
            }
        }
        Ok(m)
    }

    /// `self · x` for a state of length `2^N`.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        let dim = 1usize << self.n_sites;
        if x.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                found: x.len(),
            });
        }
        let mut y = vec![C64::new(0.0, 0.0); dim];
        for t in self.compile() {
            for (b, xb) in x.iter().enumerate() {
                let (out, amp) = t.apply(b as u64);
                y[out as usize] += amp * *xb;
            }
        }
        Ok(y)
    }

    /// `⟨x| self |x⟩`
    pub fn expectation(&self, x: &[C64]) -> Result<C64> {
        let y = self.apply(x)?;
        Ok(x.iter().zip(&y).map(|(a, b)| a.conj() * *b).sum())
    }
}

/// A spin string lowered to bit masks: `|b⟩ ↦ factor · (−1)^{|b ∧ sign_mask|} |b ⊕ flip⟩`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CompiledTerm {
    pub flip: u64,
    pub sign_mask: u64,
    pub factor: C64,
}

impl CompiledTerm {
    #[inline]
    pub fn apply(&self, b: u64) -> (u64, C64) {
        let amp = if (b & self.sign_mask).count_ones() % 2 == 0 {
            self.factor
        } else {
            -self.factor
        };
        (b ^ self.flip, amp)
    }
}

/// Product of two canonical strings: returns the merged string and the scalar
/// picked up from same-site products `S^a S^b = δ_ab/4 + (i/2) ε_abc S^c`.
fn multiply_strings(a: &Key, b: &Key) -> (Key, C64) {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut factor = C64::new(1.0, 0.0);
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(sa, xa)), Some(&(sb, xb))) if sa == sb => {
                if xa == xb {
                    factor *= 0.25;
                } else {
                    let (c_axis, sign) = levi(xa.index(), xb.index()).expect("distinct axes");
                    factor *= C64::new(0.0, 0.5 * sign);
                    out.push((sa, Axis::from_index(c_axis)));
                }
                i += 1;
                j += 1;
            }
            (Some(&(sa, xa)), Some(&(sb, _))) if sa < sb => {
                out.push((sa, xa));
                i += 1;
            }
            (Some(_), Some(&(sb, xb))) => {
                out.push((sb, xb));
                j += 1;
            }
            (Some(&p), None) => {
                out.push(p);
                i += 1;
            }
            (None, Some(&p)) => {
                out.push(p);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    (out, factor)
}

/// Active rotation matrix for angle `theta` about unit axis `n` (Rodrigues).
pub fn rotation_matrix(n: [f64; 3], theta: f64) -> [[f64; 3]; 3] {
    let (s, co) = theta.sin_cos();
    let t = 1.0 - co;
    let [x, y, z] = n;
    [
        [co + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, co + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, co + z * z * t],
    ]
}

pub fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub const MAT3_IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Heisenberg-picture image of a pulse: the matrix `m` with
/// `U† (a·S) U = (m a)·S` for `U = exp(−iθ n̂·S)`.
pub fn pulse_frame_matrix(n: [f64; 3], theta: f64) -> [[f64; 3]; 3] {
    rotation_matrix(n, -theta)
}

/// Normalises a 3-vector; errors on the zero vector.
pub fn unit_vector(v: [f64; 3]) -> Result<[f64; 3]> {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::invalid(format!("axis {v:?} cannot be normalised")));
    }
    Ok([v[0] / norm, v[1] / norm, v[2] / norm])
}
