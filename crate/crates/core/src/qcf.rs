//! Exact continued-fraction data for `β = [b,b,b,...]`: the quadratic surd
//! `β = (−b + √(b²+4))/2` with a 128-bit fixed-point image, convergent
//! denominators `q_n`, and the Ostrowski / Zeckendorff digit expansions.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QcfError {
    #[error("b must be a positive integer (got {0})")]
    InvalidB(u64),
    #[error("N must be >= 1")]
    InvalidN,
    #[error("n_max must be >= 1")]
    InvalidNMax,
    #[error("ostrowski rule 1 violated: c_1 = {c1} must satisfy 0 <= c_1 < b = {b}")]
    Rule1 { c1: u32, b: u32 },
    #[error("ostrowski rule 2 violated: c_{index} = {digit} exceeds b = {b}")]
    Rule2 { index: usize, digit: u32, b: u32 },
    #[error("ostrowski rule 3 violated: c_{index} must be 0 because the next digit equals b")]
    Rule3 { index: usize },
}

/// `β = (−b + √(b²+4))/2`, the quadratic irrational with continued fraction
/// `[0; b, b, b, ...]`. Held exactly (the surd is determined by `b`) together
/// with a Q0.128 fixed-point image of the fractional value, which is the
/// single source for `{rβ}` streams in the evaluation kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticSurd {
    b: u32,
    /// floor(β · 2^128); 0 < β < 1 so this is the whole value.
    beta_fp: u128,
    /// Integer part of √(b²+4).
    disc_root_int: u32,
    /// floor(frac(√(b²+4)) · 2^128).
    disc_root_fp: u128,
}

impl QuadraticSurd {
    /// Builds the surd for `β(b)`. Rejects `b = 0`.
    pub fn new(b: u32) -> Result<Self, QcfError> {
        if b == 0 {
            return Err(QcfError::InvalidB(0));
        }
        let disc = BigUint::from(u64::from(b) * u64::from(b) + 4);
        // floor(sqrt(disc) * 2^128) = isqrt(disc << 256)
        let s = (disc << 256u32).sqrt();
        let int_part = (&s >> 128u32).to_u32().expect("disc root fits u32");
        let frac = &s - (BigUint::from(int_part) << 128u32);
        let disc_root_fp = frac.to_u128().expect("fraction fits u128");
        // beta = (sqrt(disc) - b)/2, exact halving of the fixed-point image
        let beta_big = (&s - (BigUint::from(b) << 128u32)) >> 1u32;
        let beta_fp = beta_big.to_u128().expect("beta < 1 fits u128");
        Ok(Self {
            b,
            beta_fp,
            disc_root_int: int_part,
            disc_root_fp,
        })
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    /// Q0.128 image of β; error below 2^−128.
    pub fn beta_fp(&self) -> u128 {
        self.beta_fp
    }

    pub fn beta_f64(&self) -> f64 {
        self.beta_fp as f64 * 2f64.powi(-128)
    }

    /// √(b²+4) as f64, derived from the fixed-point image.
    pub fn disc_root_f64(&self) -> f64 {
        self.disc_root_int as f64 + self.disc_root_fp as f64 * 2f64.powi(-128)
    }

    /// Residual of `β² + bβ − 1` in units of 2^−128 (should be a few units).
    pub fn defect_units(&self) -> BigInt {
        let beta = BigInt::from(self.beta_fp);
        let scale = BigInt::one() << 128u32;
        let lhs = (&beta * &beta) / &scale + BigInt::from(self.b) * &beta;
        (lhs - &scale).abs()
    }
}

/// Denominators `q_0, q_1, ..., q_nmax` of the convergents of `β(b)`:
/// `q_0 = 1, q_1 = b, q_{n+1} = b·q_n + q_{n−1}`. Fibonacci numbers shifted
/// by one index when `b = 1` (`q_n = F_{n+1}`).
#[derive(Debug, Clone)]
pub struct ConvergentTable {
    b: u32,
    q: Vec<BigUint>,
}

impl ConvergentTable {
    pub fn new(b: u32, n_max: usize) -> Result<Self, QcfError> {
        if b == 0 {
            return Err(QcfError::InvalidB(0));
        }
        if n_max < 1 {
            return Err(QcfError::InvalidNMax);
        }
        let mut q = Vec::with_capacity(n_max + 1);
        q.push(BigUint::one());
        q.push(BigUint::from(b));
        for _ in 1..n_max {
            let next = BigUint::from(b) * &q[q.len() - 1] + &q[q.len() - 2];
            q.push(next);
        }
        Ok(Self { b, q })
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn q(&self, n: usize) -> &BigUint {
        &self.q[n]
    }

    pub fn q_u64(&self, n: usize) -> Option<u64> {
        self.q.get(n).and_then(|v| v.to_u64())
    }

    /// Largest n with q_n <= limit.
    pub fn top_level_within(&self, limit: u64) -> Option<usize> {
        let lim = BigUint::from(limit);
        (0..self.q.len()).rev().find(|&n| self.q[n] <= lim)
    }

    /// Checks the closed form `q_n = (β^{−(n+1)} − (−β)^{n+1})/√(b²+4)`
    /// exactly in the ring Z[√(b²+4)]: with `β = (−b+√D)/2` and
    /// `β^{−1} = (b+√D)/2`, both powers have the form `(x + y√D)/2^{n+1}`
    /// and the identity reduces to integer equalities.
    pub fn closed_form_holds(&self, n: usize) -> bool {
        let d = BigInt::from(u64::from(self.b) * u64::from(self.b) + 4);
        let mul = |a: &(BigInt, BigInt), c: &(BigInt, BigInt)| -> (BigInt, BigInt) {
            (&a.0 * &c.0 + &a.1 * &c.1 * &d, &a.0 * &c.1 + &a.1 * &c.0)
        };
        let mut pos = (BigInt::one(), BigInt::zero()); // (b+sqrtD)/2 power
        let mut neg = (BigInt::one(), BigInt::zero()); // (-b+sqrtD)/2 power
        let base_pos = (BigInt::from(self.b), BigInt::one());
        let base_neg = (-BigInt::from(self.b), BigInt::one());
        for _ in 0..=n {
            pos = mul(&pos, &base_pos);
            neg = mul(&neg, &base_neg);
        }
        // beta^{-(n+1)} - (-beta)^{n+1} = [pos - (-1)^{n+1} neg] / 2^{n+1}
        let sign_flip = (n + 1) % 2 == 1;
        let (nx, ny) = if sign_flip {
            (&pos.0 + &neg.0, &pos.1 + &neg.1)
        } else {
            (&pos.0 - &neg.0, &pos.1 - &neg.1)
        };
        // must equal q_n * sqrtD * 2^{n+1}: rational part 0, sqrtD part q_n*2^{n+1}
        let qn = BigInt::from(self.q[n].clone());
        nx.is_zero() && ny == qn << (n + 1)
    }
}

/// Fibonacci numbers `F_0 = 0, F_1 = 1, ...` up to and including `F_nmax`
/// (requires `n_max <= 92` so everything fits in u64).
pub fn fibonacci(n_max: usize) -> Vec<u64> {
    assert!(n_max <= 92, "F_n overflows u64 beyond n = 92");
    let mut f = vec![0u64, 1];
    for _ in 1..n_max {
        f.push(f[f.len() - 1] + f[f.len() - 2]);
    }
    f.truncate(n_max + 1);
    f
}

/// Ostrowski digits of a positive integer with respect to `β(b)`:
/// `N = Σ c_{i+1} q_i` with `0 ≤ c_1 < b`, `0 ≤ c_{i+1} ≤ b`, and
/// `c_i = 0` whenever `c_{i+1} = b`. `digits[i]` stores `c_{i+1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OstrowskiDigits {
    b: u32,
    digits: Vec<u32>,
    value: u64,
}

impl OstrowskiDigits {
    pub fn b(&self) -> u32 {
        self.b
    }

    /// Least-significant first: `digits()[i]` is the coefficient of `q_i`.
    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    pub fn value(&self) -> u64 {
        self.value
    }
}

fn q_ladder_u64(b: u32, limit: u64) -> Vec<u64> {
    let mut q = vec![1u64, u64::from(b)];
    loop {
        let (hi, lo) = (q[q.len() - 1], q[q.len() - 2]);
        match u64::from(b).checked_mul(hi).and_then(|x| x.checked_add(lo)) {
            Some(next) if next <= limit => q.push(next),
            _ => break,
        }
    }
    q
}

/// Greedy top-down Ostrowski expansion. The greedy choice satisfies rules
/// 1–3 automatically: taking `c_{i+1} = b` leaves a remainder below
/// `q_{i−1}`, forcing the next digit to zero.
pub fn ostrowski_expand(n: u64, b: u32) -> Result<OstrowskiDigits, QcfError> {
    if b == 0 {
        return Err(QcfError::InvalidB(0));
    }
    if n == 0 {
        return Err(QcfError::InvalidN);
    }
    let q = q_ladder_u64(b, n);
    let mut digits = vec![0u32; q.len()];
    let mut rem = n;
    for i in (0..q.len()).rev() {
        digits[i] = (rem / q[i]) as u32;
        rem %= q[i];
    }
    debug_assert_eq!(rem, 0);
    debug_assert!(ostrowski_value(b, &digits).is_ok());
    Ok(OstrowskiDigits {
        b,
        digits,
        value: n,
    })
}

/// Validates digit rules 1–3 and reconstructs `Σ c_{i+1} q_i`, identifying
/// the violated rule on bad input. `digits[i]` is the coefficient of `q_i`.
pub fn ostrowski_value(b: u32, digits: &[u32]) -> Result<u64, QcfError> {
    if b == 0 {
        return Err(QcfError::InvalidB(0));
    }
    if let Some(&c1) = digits.first() {
        if c1 >= b {
            return Err(QcfError::Rule1 { c1, b });
        }
    }
    for (i, &c) in digits.iter().enumerate().skip(1) {
        if c > b {
            return Err(QcfError::Rule2 {
                index: i + 1,
                digit: c,
                b,
            });
        }
    }
    for i in 0..digits.len().saturating_sub(1) {
        if digits[i + 1] == b && digits[i] != 0 {
            return Err(QcfError::Rule3 { index: i + 1 });
        }
    }
    let q = q_ladder_u64(b, u64::MAX >> 8);
    let mut total = 0u64;
    for (i, &c) in digits.iter().enumerate() {
        total += u64::from(c) * q[i];
    }
    Ok(total)
}

/// Zeckendorff representation `N = Σ F_{n_i}` with indices `n_1 < ... < n_k`,
/// `n_1 ≥ 2` and gaps `n_{i+1} − n_i ≥ 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeckendorffIndices {
    indices: Vec<u32>,
    value: u64,
}

impl ZeckendorffIndices {
    /// Increasing Fibonacci indices, smallest first.
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn value(&self) -> u64 {
        self.value
    }
}

pub fn zeckendorff_expand(n: u64) -> Result<ZeckendorffIndices, QcfError> {
    if n == 0 {
        return Err(QcfError::InvalidN);
    }
    let f = fibonacci(92);
    let mut rem = n;
    let mut indices = Vec::new();
    let mut i = f.len() - 1;
    while rem > 0 {
        while f[i] > rem {
            i -= 1;
        }
        indices.push(i as u32);
        rem -= f[i];
        // greedy leaves rem < F_{i-1}, so the gap >= 2 is automatic
    }
    indices.reverse();
    Ok(ZeckendorffIndices { indices, value: n })
}
