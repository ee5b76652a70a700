//! Evaluation primitives: exact fixed-point streams for `{rβ}`, signed
//! nearest-integer distance, log-domain Sudler products with compensated
//! summation and a tracked error bound, perturbed products along convergent
//! denominators, and the `A_n · B_n · C_n` factorization.
//!
//! All product evaluation is chunked (chunk size 2^16) with per-chunk
//! compensated partial sums reduced strictly left to right, so results are
//! bit-identical whether chunks are computed in parallel or sequentially.

use crate::qcf::{fibonacci, ConvergentTable, QcfError, QuadraticSurd};
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

pub const CHUNK: u64 = 1 << 16;
const EPS: f64 = 2.220_446_049_250_313e-16;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    Qcf(#[from] QcfError),
    #[error("evaluation needs {needed} factors, over the budget of {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },
    #[error("sin(pi r alpha) = 0 exactly at r = {r} (rational alpha)")]
    ExactZero { r: u64 },
    #[error("rational alpha must satisfy 0 < m/n < 1 with n > 0")]
    BadRational,
    #[error("index n = {n} not usable here (need n >= {min})")]
    BadIndex { n: u32, min: u32 },
    #[error("C_n factor undefined: s_n({r})^2 <= s_n(0,eps)^2 for eps = {eps}")]
    FactorCUndefined { r: u64, eps: f64 },
}

/// A computed value together with a rigorous absolute error bound
/// (truncation + fixed-point drift + rounding).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalWithBound {
    pub value: f64,
    pub abs_err: f64,
    /// Set by limit-function evaluation when the argument cannot be
    /// distinguished from a root of `G_β` within the bound.
    pub at_root: bool,
}

impl EvalWithBound {
    pub fn new(value: f64, abs_err: f64) -> Self {
        Self {
            value,
            abs_err,
            at_root: false,
        }
    }
}

/// Evaluation controls shared by the product routines.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Maximum number of sine factors a single evaluation may consume.
    pub budget: u64,
    pub parallel: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            budget: 10_000_000,
            parallel: true,
        }
    }
}

/// Signed distance to the nearest integer, `((x)) ∈ (−1/2, 1/2]`.
pub fn signed_frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f > 0.5 {
        f - 1.0
    } else {
        f
    }
}

/// Incremental `{rβ}` stream over the Q0.128 image of β. Addition is exact
/// modulo 2^128, so after any number of steps the accumulator equals
/// `beta_fp · r mod 2^128`; the only deviation from the real `{rβ}` is the
/// initial image error, at most `r · 2^−128`.
#[derive(Debug, Clone)]
pub struct FracState {
    beta_fp: u128,
    r: u64,
    acc: u128,
}

impl FracState {
    pub fn new(surd: &QuadraticSurd) -> Self {
        Self {
            beta_fp: surd.beta_fp(),
            r: 0,
            acc: 0,
        }
    }

    /// Jumps directly to index `r` via exact wrapping multiplication.
    pub fn seek(&mut self, r: u64) {
        self.r = r;
        self.acc = self.beta_fp.wrapping_mul(r as u128);
    }

    /// Advances to `r+1` and returns the fixed-point `{(r+1)β}`.
    pub fn step(&mut self) -> u128 {
        self.acc = self.acc.wrapping_add(self.beta_fp);
        self.r += 1;
        self.acc
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn frac_fp(&self) -> u128 {
        self.acc
    }

    pub fn frac_f64(&self) -> f64 {
        fp_to_f64(self.acc)
    }
}

pub fn fp_to_f64(fp: u128) -> f64 {
    fp as f64 * 2f64.powi(-128)
}

/// `((xβ))` for (possibly negative) integer x, from the wrapping fixed point.
pub fn signed_frac_fp(beta_fp: u128, x: i128) -> f64 {
    let fp = beta_fp.wrapping_mul(x as u128);
    if fp > u128::MAX / 2 {
        -(fp.wrapping_neg() as f64) * 2f64.powi(-128)
    } else {
        fp as f64 * 2f64.powi(-128)
    }
}

/// Neumaier two-term compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.c
    }
}

/// Compensated log-domain product state: `log_sum` accumulates
/// `Σ log(2|sin π x_r|)` with its correction term and running error bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogProduct {
    acc: Compensated,
    pub count: u64,
    /// Rigorous bound on |accumulated − true| in the log domain.
    pub err_bound: f64,
    abs_sum: f64,
}

impl LogProduct {
    pub fn log_sum(&self) -> f64 {
        self.acc.total()
    }

    /// Final value with error bound transported out of the log domain.
    pub fn to_eval(&self) -> EvalWithBound {
        let value = self.log_sum().exp();
        let log_err = self.err_bound + 4.0 * EPS * self.abs_sum;
        EvalWithBound::new(value, value * log_err.exp_m1() * (1.0 + 4.0 * EPS))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ChunkSum {
    sum: f64,
    c: f64,
    bound: f64,
    abs_sum: f64,
}

/// One chunk of `Σ_{r=r0+1}^{r0+len} log 2|sin π({rβ} + shift)|`.
fn eval_chunk(beta_fp: u128, shift: f64, r0: u64, len: u64) -> ChunkSum {
    let mut st = FracState {
        beta_fp,
        r: 0,
        acc: 0,
    };
    st.seek(r0);
    let mut acc = Compensated::default();
    let mut bound = 0.0f64;
    let mut abs_sum = 0.0f64;
    for _ in 0..len {
        let fp = st.step();
        let mut y = fp_to_f64(fp) + shift;
        y -= y.floor();
        let z = y.min(1.0 - y);
        let l = (2.0 * (PI * z).sin()).ln();
        acc.add(l);
        abs_sum += l.abs();
        // argument error: fixed-point drift r·2^-128 plus f64 conversion and
        // shift rounding; log derivative bounded by pi·cot(pi z) <= 1/z
        let arg_err = st.r() as f64 * 2f64.powi(-128) + 2.0 * EPS;
        bound += arg_err / z.max(1e-300) + 2.0 * EPS * (1.0 + l.abs());
    }
    ChunkSum {
        sum: acc.sum,
        c: acc.c,
        bound,
        abs_sum,
    }
}

/// Chunked evaluation of the log-domain product `Π 2|sin π({rβ}+shift)|`,
/// `r = 1..=n`. Chunk results are reduced left to right, so the outcome is
/// independent of the thread count.
pub fn log_sudler_shifted(surd: &QuadraticSurd, shift: f64, n: u64, parallel: bool) -> LogProduct {
    let beta_fp = surd.beta_fp();
    let n_chunks = n.div_ceil(CHUNK);
    let chunk_of = |k: u64| -> ChunkSum {
        let r0 = k * CHUNK;
        let len = CHUNK.min(n - r0);
        eval_chunk(beta_fp, shift, r0, len)
    };
    let parts: Vec<ChunkSum> = if parallel && n_chunks > 1 {
        (0..n_chunks).into_par_iter().map(chunk_of).collect()
    } else {
        (0..n_chunks).map(chunk_of).collect()
    };
    let mut out = LogProduct::default();
    for p in parts {
        out.acc.add(p.sum);
        out.acc.add(p.c);
        out.err_bound += p.bound;
        out.abs_sum += p.abs_sum;
    }
    out.count = n;
    out
}

/// The number the Sudler product is evaluated at: an exact quadratic surd
/// `β(b)` or an exact rational `m/n` in lowest terms.
#[derive(Debug, Clone)]
pub enum Alpha {
    Surd(QuadraticSurd),
    Rational { num: u64, den: u64 },
}

impl Alpha {
    pub fn golden() -> Self {
        Alpha::Surd(QuadraticSurd::new(1).expect("b=1"))
    }

    pub fn from_b(b: u32) -> Result<Self, QcfError> {
        Ok(Alpha::Surd(QuadraticSurd::new(b)?))
    }

    pub fn rational(num: u64, den: u64) -> Result<Self, KernelError> {
        if den == 0 || num == 0 || num >= den {
            return Err(KernelError::BadRational);
        }
        Ok(Alpha::Rational { num, den })
    }
}

/// `P_N(α) = Π_{r=1..N} 2|sin π r α|`.
///
/// Rational `m/n` is evaluated through exact residues `r·m mod n` and
/// signals an exact zero at the first `r` with `n | r·m`; the surd path
/// streams `{rβ}` from the fixed point.
pub fn sudler_product(alpha: &Alpha, n: u64, opts: &EvalOptions) -> Result<EvalWithBound, KernelError> {
    if n == 0 {
        return Err(KernelError::Qcf(QcfError::InvalidN));
    }
    if n > opts.budget {
        return Err(KernelError::BudgetExceeded {
            needed: n,
            budget: opts.budget,
        });
    }
    match alpha {
        Alpha::Surd(surd) => Ok(log_sudler_shifted(surd, 0.0, n, opts.parallel).to_eval()),
        Alpha::Rational { num, den } => {
            let (m, d) = (*num, *den);
            if d == 0 || m == 0 || m >= d {
                return Err(KernelError::BadRational);
            }
            let mut acc = Compensated::default();
            let mut k: u64 = 0;
            for r in 1..=n {
                k += m;
                if k >= d {
                    k -= d;
                }
                if k == 0 {
                    return Err(KernelError::ExactZero { r });
                }
                let z = (k as f64 / d as f64).min((d - k) as f64 / d as f64);
                acc.add((2.0 * (PI * z).sin()).ln());
            }
            let log = acc.total();
            let value = log.exp();
            // residues are exact; only sin/log rounding remains
            let bound = 4.0 * EPS * (n as f64) * (1.0 + log.abs() / n as f64);
            Ok(EvalWithBound::new(value, value * bound.exp_m1()))
        }
    }
}

/// Level data for perturbed products: the denominator `Q`, the sign `σ` in
/// front of `ε/Q`, and the previous denominator used by the factorization.
///
/// For `b = 1` the index is the Fibonacci index of Eq.-(5) convention
/// (`Q = F_n`, sign `(−1)^{n+1}`); for `b ≥ 2` it is the convergent index
/// (`Q = q_n`, sign `(−1)^n`). Both agree under `q_m = F_{m+1}`.
pub(crate) fn ladder(b: u32, n: u32) -> Result<(u64, f64, u64), KernelError> {
    if b == 0 {
        return Err(KernelError::Qcf(QcfError::InvalidB(0)));
    }
    if b == 1 {
        if n < 1 {
            return Err(KernelError::BadIndex { n, min: 1 });
        }
        if n > 90 {
            return Err(KernelError::BudgetExceeded {
                needed: u64::MAX,
                budget: 0,
            });
        }
        let f = fibonacci((n + 1) as usize);
        let sigma = if n % 2 == 1 { 1.0 } else { -1.0 };
        let prev = if n >= 2 { f[(n - 1) as usize] } else { 0 };
        Ok((f[n as usize], sigma, prev))
    } else {
        let table = ConvergentTable::new(b, n.max(1) as usize)?;
        let q = table
            .q_u64(n as usize)
            .ok_or(KernelError::BudgetExceeded {
                needed: u64::MAX,
                budget: 0,
            })?;
        let sigma = if n % 2 == 0 { 1.0 } else { -1.0 };
        let prev = if n >= 1 {
            table.q_u64((n - 1) as usize).unwrap()
        } else {
            0
        };
        Ok((q, sigma, prev))
    }
}

/// Perturbed Sudler product `P_Q(β, ε) = Π_{r=1..Q} 2|sin π(rβ + σ ε/Q)|`
/// with the sign convention described on [`ladder`].
pub fn perturbed_product(
    b: u32,
    n: u32,
    eps: f64,
    opts: &EvalOptions,
) -> Result<EvalWithBound, KernelError> {
    let surd = QuadraticSurd::new(b)?;
    let (q, sigma, _) = ladder(b, n)?;
    if q > opts.budget {
        return Err(KernelError::BudgetExceeded {
            needed: q,
            budget: opts.budget,
        });
    }
    let shift = sigma * eps / q as f64;
    Ok(log_sudler_shifted(&surd, shift, q, opts.parallel).to_eval())
}

/// The `A_n · B_n · C_n` factorization of `P_Q(β, ε)`:
///
/// - `A = 2Q |sin π(Qβ + σε/Q)|`
/// - `s_0 = 2 sin π(ε/Q + t/2)` with `t = ‖Qβ‖`
/// - `s(r) = 2 sin π(r/Q − t([Wr mod Q]/Q − 1/2))`, `W` the previous denominator
/// - `B = Π s(r) / (2|sin πr/Q|)`, `C = Π (1 − s_0²/s(r)²)^{1/2}`
///
/// The residues `[Wr]` are carried by exact integer arithmetic. The product
/// `A·B·C` reproduces `P_Q(β,ε)` as an identity.
#[derive(Debug, Clone, Copy)]
pub struct FactorTriple {
    pub n: u32,
    pub a: f64,
    pub b_factor: f64,
    pub c: f64,
    pub s0: f64,
    /// `‖Qβ‖`, the convergence scale of the level.
    pub t: f64,
}

impl FactorTriple {
    pub fn product(&self) -> f64 {
        self.a * self.b_factor * self.c
    }
}

pub fn factor_triple(b: u32, n: u32, eps: f64, opts: &EvalOptions) -> Result<FactorTriple, KernelError> {
    if n < 2 {
        return Err(KernelError::BadIndex { n, min: 2 });
    }
    let surd = QuadraticSurd::new(b)?;
    let (q, _sigma, w) = ladder(b, n)?;
    if q > opts.budget {
        return Err(KernelError::BudgetExceeded {
            needed: q,
            budget: opts.budget,
        });
    }
    let qf = q as f64;
    // t = ||Q beta|| from the exact fixed point
    let fp = surd.beta_fp().wrapping_mul(q as u128);
    let t = fp_to_f64(fp).min(fp_to_f64(fp.wrapping_neg()));
    // A = 2Q |sin pi(Q beta + sigma eps/Q)| = 2Q |sin pi(t + eps/Q)|
    let a = 2.0 * qf * (PI * (t + eps / qf)).sin().abs();
    let s0 = 2.0 * (PI * (eps / qf + t / 2.0)).sin();
    let s02 = s0 * s0;
    let mut log_b = Compensated::default();
    let mut log_c2 = Compensated::default();
    let mut m: u64 = 0;
    for r in 1..q {
        m += w;
        if m >= q {
            m -= q;
        }
        let sr = 2.0 * (PI * (r as f64 / qf - t * (m as f64 / qf - 0.5))).sin();
        let denom = 2.0 * (PI * (r as f64 / qf).min((q - r) as f64 / qf)).sin();
        log_b.add((sr / denom).ln());
        let rest = 1.0 - s02 / (sr * sr);
        if rest <= 0.0 {
            return Err(KernelError::FactorCUndefined { r, eps });
        }
        log_c2.add(rest.ln());
    }
    Ok(FactorTriple {
        n,
        a,
        b_factor: log_b.total().exp(),
        c: (0.5 * log_c2.total()).exp(),
        s0,
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_frac_examples() {
        assert_eq!(signed_frac(0.75), -0.25);
        assert_eq!(signed_frac(0.5), 0.5);
        assert_eq!(signed_frac(3.25), 0.25);
        assert_eq!(signed_frac(-0.25), -0.25);
        assert_eq!(signed_frac(2.0), 0.0);
    }

    #[test]
    fn trigonometric_identity_small() {
        // P_{n-1}(1/n) = n
        let opts = EvalOptions::default();
        for n in [2u64, 3, 7, 100, 500] {
            let alpha = Alpha::rational(1, n).unwrap();
            let p = sudler_product(&alpha, n - 1, &opts).unwrap();
            assert!(
                (p.value - n as f64).abs() / n as f64 <= 1e-10,
                "n={n}: {} vs {n}",
                p.value
            );
        }
    }

    #[test]
    fn rational_exact_zero_signalled() {
        let opts = EvalOptions::default();
        let alpha = Alpha::rational(1, 7).unwrap();
        assert_eq!(
            sudler_product(&alpha, 7, &opts),
            Err(KernelError::ExactZero { r: 7 })
        );
        // not in lowest terms: first zero at r = den/gcd
        let alpha = Alpha::rational(2, 6).unwrap();
        assert_eq!(
            sudler_product(&alpha, 5, &opts),
            Err(KernelError::ExactZero { r: 3 })
        );
        assert!(matches!(Alpha::rational(7, 7), Err(KernelError::BadRational)));
        assert!(matches!(Alpha::rational(0, 7), Err(KernelError::BadRational)));
    }

    #[test]
    fn golden_single_factor() {
        // P_1(phi) = 2 sin(pi phi) = 1.86406484762646...
        let opts = EvalOptions::default();
        let p = sudler_product(&Alpha::golden(), 1, &opts).unwrap();
        assert!((p.value - 1.86406484762646).abs() < 1e-12);
        // perturbed_product(1, 2, 0) over F_2 = 1 is the same single factor
        let p2 = perturbed_product(1, 2, 0.0, &opts).unwrap();
        assert!((p2.value - p.value).abs() < 1e-14);
    }

    #[test]
    fn log_product_matches_direct_multiplication() {
        let surd = QuadraticSurd::new(1).unwrap();
        let lp = log_sudler_shifted(&surd, 0.0, 1000, false);
        let mut direct = 1.0f64;
        let mut st = FracState::new(&surd);
        for _ in 0..1000 {
            let y = fp_to_f64(st.step());
            direct *= 2.0 * (PI * y).sin().abs();
        }
        let v = lp.log_sum().exp();
        assert!((v - direct).abs() / direct < 1e-12);
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let surd = QuadraticSurd::new(6).unwrap();
        let n = 3 * CHUNK + 12345;
        let seq = log_sudler_shifted(&surd, 0.0, n, false);
        let par = log_sudler_shifted(&surd, 0.0, n, true);
        assert_eq!(seq.log_sum().to_bits(), par.log_sum().to_bits());
        assert!((seq.log_sum() - par.log_sum()).abs() <= seq.err_bound + par.err_bound);
    }

    #[test]
    fn incremental_equals_direct_multiplication() {
        let surd = QuadraticSurd::new(7).unwrap();
        let mut st = FracState::new(&surd);
        for r in 1..=100_000u64 {
            let fp = st.step();
            assert_eq!(fp, surd.beta_fp().wrapping_mul(r as u128));
        }
    }

    #[test]
    fn perturbed_product_b6_small_table_entry() {
        // P_7(beta(6)) = 0.90689368 (Lemma-2 style direct value)
        let opts = EvalOptions::default();
        let surd = QuadraticSurd::new(6).unwrap();
        let p = log_sudler_shifted(&surd, 0.0, 7, false).to_eval();
        assert!((p.value - 0.90689368).abs() < 1e-6);
    }

    #[test]
    fn factorization_identity_spot() {
        let opts = EvalOptions::default();
        for (b, n, eps) in [(1u32, 10u32, 0.1f64), (1, 20, 0.1), (5, 4, -0.05), (6, 4, 0.3), (2, 9, 0.0)] {
            let ft = factor_triple(b, n, eps, &opts).unwrap();
            let p = perturbed_product(b, n, eps, &opts).unwrap();
            let rel = (ft.product() - p.value).abs() / p.value;
            assert!(rel < 1e-10, "b={b} n={n} eps={eps}: rel={rel:.3e}");
        }
    }

    #[test]
    fn factor_c_undefined_outside_validity() {
        // enormous eps makes s_0 exceed some s(r)
        let opts = EvalOptions::default();
        let err = factor_triple(1, 10, 30.0, &opts);
        assert!(matches!(err, Err(KernelError::FactorCUndefined { .. })));
    }

    #[test]
    fn budget_is_enforced() {
        let opts = EvalOptions {
            budget: 100,
            parallel: false,
        };
        let err = sudler_product(&Alpha::golden(), 101, &opts);
        assert!(matches!(err, Err(KernelError::BudgetExceeded { .. })));
    }
}
