//! Error-bounded evaluation of the limit machinery: the gap sequence
//! `u_b(r)`, the limit functions `G_β(ε)` in their explicit-product form,
//! the constants `C_b`, closed-form root localization, the analytic second
//! derivative of `log G_β`, and log-concavity certificates that bound `G_β`
//! on an interval from endpoint evaluations alone.
//!
//! `G_β(ε)^b = |ε√D+1|^b / (β(β+1)⋯(β+b−1)) ·
//!     Π_r Π_j |1 − (2ε√D+1)²/u_b(r)²| / |1 − (2b−2j+2β+1)²/u_b(r)²|`
//! with `D = b²+4`. The tail of the log-sum is bounded through
//! `|log|1−δ²|| ≤ δ²/(1−δ²)` and `u_b(r) > 2√D·r − 1`.

use crate::kernel::{fp_to_f64, Compensated, EvalWithBound, FracState};
use crate::qcf::{QcfError, QuadraticSurd};
use thiserror::Error;

const EPS: f64 = 2.220_446_049_250_313e-16;
const RADIUS_CAP: u64 = 1 << 31;

#[derive(Debug, Error, PartialEq)]
pub enum LimitError {
    #[error(transparent)]
    Qcf(#[from] QcfError),
    #[error("target_abs_err must be positive")]
    BadTarget,
    #[error("eps = {eps} is at or outside a root of G_beta (root at {root})")]
    AtRoot { eps: f64, root: f64 },
    #[error("interval [{lo}, {hi}] is not strictly inside one root interval of G_beta")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("certificate inconclusive: G({eps}) = {value} +- {abs_err} cannot be separated from {threshold}")]
    Inconclusive {
        eps: f64,
        value: f64,
        abs_err: f64,
        threshold: f64,
    },
    #[error("witness point {witness} does not establish monotonicity on the interval")]
    BadWitness { witness: f64 },
}

/// `u_b(r) = 2√(b²+4)·r − 2{rβ} + 1`, from the fixed-point `{rβ}`.
pub fn u_seq(b: u32, r: u64) -> Result<f64, LimitError> {
    let surd = QuadraticSurd::new(b)?;
    let two_sqrt_d = 2.0 * surd.disc_root_f64();
    let frac = fp_to_f64(surd.beta_fp().wrapping_mul(r as u128));
    Ok(two_sqrt_d * r as f64 - 2.0 * frac + 1.0)
}

/// Per-`b` constants of the explicit formula.
struct Shape {
    surd: QuadraticSurd,
    b: u32,
    sqrt_d: f64,
    /// `γ_j = 2b − 2j + 2β + 1`, j = 1..b
    gammas: Vec<f64>,
    /// `−(1/b) Σ_j ln(β + j − 1)`
    prefix: f64,
}

impl Shape {
    fn new(b: u32) -> Result<Self, LimitError> {
        let surd = QuadraticSurd::new(b)?;
        let beta = surd.beta_f64();
        let sqrt_d = surd.disc_root_f64();
        let gammas: Vec<f64> = (1..=b)
            .map(|j| 2.0 * b as f64 - 2.0 * j as f64 + 2.0 * beta + 1.0)
            .collect();
        let prefix = -(1..=b).map(|j| (beta + (j - 1) as f64).ln()).sum::<f64>() / b as f64;
        Ok(Self {
            surd,
            b,
            sqrt_d,
            gammas,
            prefix,
        })
    }

    /// `δ̃ = 2ε√D + 1`, the numerator constant.
    fn delta_tilde(&self, eps: f64) -> f64 {
        2.0 * eps * self.sqrt_d + 1.0
    }

    /// Partial log-sum over `r ≤ radius` plus a rounding bound; `None` when
    /// a factor vanishes exactly (ε is a root in f64).
    fn log_partial(&self, eps: f64, radius: u64) -> Option<(f64, f64)> {
        let dl = self.delta_tilde(eps);
        let dl2 = dl * dl;
        let pre = (eps * self.sqrt_d + 1.0).abs().ln() + self.prefix;
        if pre == f64::NEG_INFINITY {
            return None;
        }
        let g2: Vec<f64> = self.gammas.iter().map(|g| g * g).collect();
        let two_sqrt_d = 2.0 * self.sqrt_d;
        let inv_b = 1.0 / self.b as f64;
        let bf = self.b as f64;
        let mut acc = Compensated::default();
        let mut round = 0.0f64;
        let mut st = FracState::new(&self.surd);
        for r in 1..=radius {
            let frac = fp_to_f64(st.step());
            let u = two_sqrt_d * r as f64 - 2.0 * frac + 1.0;
            let v = 1.0 / (u * u);
            let num = 1.0 - dl2 * v;
            if num == 0.0 {
                return None;
            }
            let mut den = 1.0;
            for &gg in &g2 {
                den *= 1.0 - gg * v;
            }
            let term = num.abs().ln() - den.ln() * inv_b;
            acc.add(term);
            // near a root the numerator cancels catastrophically; charge the
            // relative error of dl^2*v against |num|
            round += EPS * (4.0 + 4.0 * term.abs() + 4.0 * (dl2 * v) / num.abs() + 2.0 * bf);
        }
        Some((pre + acc.total(), round))
    }

    /// Rigorous tail bound for `Σ_{r>R}` of the combined log terms.
    /// Uses `u_b(r) > 2√D·r − 1`, `Σ_{r>R} (2√D r−1)^{−2} ≤ 1/(2√D(2√D R−1))`
    /// and `|log|1−x|| ≤ |x|/(1−|x|)`.
    fn tail_bound(&self, eps: f64, radius: u64) -> f64 {
        let dl2 = self.delta_tilde(eps).powi(2);
        let u_min = 2.0 * self.sqrt_d * (radius + 1) as f64 - 1.0;
        let u_min2 = u_min * u_min;
        let x_num = dl2 / u_min2;
        let g2max = self.gammas[0] * self.gammas[0];
        let x_den = g2max / u_min2;
        if x_num >= 0.5 || x_den >= 0.5 {
            return f64::INFINITY;
        }
        let s = 1.0 / (2.0 * self.sqrt_d * (2.0 * self.sqrt_d * radius as f64 - 1.0));
        let num_part = dl2 / (1.0 - x_num);
        let den_part =
            self.gammas.iter().map(|g| g * g).sum::<f64>() / (self.b as f64) / (1.0 - x_den);
        (num_part + den_part) * s
    }

    fn radius_for(&self, eps: f64, target_log: f64) -> u64 {
        let dl2 = self.delta_tilde(eps).powi(2);
        let coef = dl2 + self.gammas.iter().map(|g| g * g).sum::<f64>() / self.b as f64;
        let d4 = 4.0 * self.sqrt_d * self.sqrt_d;
        let r = (1.25 * coef / (d4 * target_log)).ceil();
        if !r.is_finite() {
            return RADIUS_CAP;
        }
        (r as u64).clamp(64, RADIUS_CAP)
    }
}

/// Evaluates `G_β(ε)` at a fixed truncation radius; exposed so callers can
/// observe how the reported bound shrinks with the radius.
pub fn g_eval_with_radius(b: u32, eps: f64, radius: u64) -> Result<EvalWithBound, LimitError> {
    let shape = Shape::new(b)?;
    Ok(eval_at_radius(&shape, eps, radius))
}

fn eval_at_radius(shape: &Shape, eps: f64, radius: u64) -> EvalWithBound {
    match shape.log_partial(eps, radius) {
        None => EvalWithBound {
            value: 0.0,
            abs_err: 0.0,
            at_root: true,
        },
        Some((log_val, round)) => {
            let tail = shape.tail_bound(eps, radius);
            let value = log_val.exp();
            let abs_err = value * (tail + round).exp_m1() * (1.0 + 4.0 * EPS);
            let mut out = EvalWithBound::new(value, abs_err);
            out.at_root = value - abs_err <= 0.0;
            out
        }
    }
}

/// `G_β(ε)` with truncation radius chosen so tail + rounding stays within
/// `target_abs_err`. Flags `at_root` when the result cannot be separated
/// from zero (ε at a root within the bound).
pub fn g_eval(b: u32, eps: f64, target_abs_err: f64) -> Result<EvalWithBound, LimitError> {
    if !(target_abs_err > 0.0) {
        return Err(LimitError::BadTarget);
    }
    let shape = Shape::new(b)?;
    // start from the bound with G ~ 1 and refine if the value turns out larger
    let mut radius = shape.radius_for(eps, target_abs_err / 2.0);
    for _ in 0..8 {
        let out = eval_at_radius(&shape, eps, radius);
        if out.at_root || out.abs_err <= target_abs_err || radius >= RADIUS_CAP {
            return Ok(out);
        }
        let factor = (out.abs_err / target_abs_err).max(2.0).min(1024.0) as u64;
        radius = radius.saturating_mul(factor).min(RADIUS_CAP);
    }
    Ok(eval_at_radius(&shape, eps, radius))
}

/// `C_b = G_β(0)` through the same product formula (Theorem-2 form for b=1).
pub fn c_const(b: u32, target_abs_err: f64) -> Result<EvalWithBound, LimitError> {
    g_eval(b, 0.0, target_abs_err)
}

/// Closed-form consecutive roots of `G_β` bracketing 0:
/// `ε_− = −1/√D` (vanishing of `|ε√D+1|`) and `ε_+ = (u_b(1)−1)/(2√D)`
/// (first `δ_r = 1` crossing).
pub fn roots_near_zero(b: u32) -> Result<(f64, f64), LimitError> {
    let shape = Shape::new(b)?;
    let u1 = u_seq(b, 1)?;
    Ok((-1.0 / shape.sqrt_d, (u1 - 1.0) / (2.0 * shape.sqrt_d)))
}

/// All roots of `G_β` in `[lo, hi]`, in increasing order. Roots are the
/// solutions of `2ε√D + 1 = ±u_b(r)` together with `ε = −1/√D`.
pub fn enumerate_roots(b: u32, lo: f64, hi: f64) -> Result<Vec<f64>, LimitError> {
    let shape = Shape::new(b)?;
    let two_sqrt_d = 2.0 * shape.sqrt_d;
    let mut roots = Vec::new();
    let push = |roots: &mut Vec<f64>, x: f64| {
        if x >= lo && x <= hi {
            roots.push(x);
        }
    };
    push(&mut roots, -1.0 / shape.sqrt_d);
    let r_cap = (lo.abs().max(hi.abs())).ceil() as u64 + 3;
    for r in 1..=r_cap {
        let u = u_seq(b, r)?;
        push(&mut roots, (u - 1.0) / two_sqrt_d);
        push(&mut roots, (-u - 1.0) / two_sqrt_d);
    }
    roots.sort_by(|a, c| a.partial_cmp(c).unwrap());
    Ok(roots)
}

/// The open interval between consecutive roots that contains `x` strictly.
pub fn root_interval(b: u32, x: f64) -> Result<(f64, f64), LimitError> {
    let span = x.abs() + 2.0;
    let roots = enumerate_roots(b, -span, span)?;
    let mut lo = -span;
    let mut hi = span;
    for root in roots {
        if root == x {
            return Err(LimitError::AtRoot { eps: x, root });
        }
        if root < x && root > lo {
            lo = root;
        }
        if root > x && root < hi {
            hi = root;
        }
    }
    Ok((lo, hi))
}

/// Truncated analytic second derivative of `log G_β` together with the
/// rigorous bound for the discarded tail. The truncation at radius `R`
/// matches `g_eval_with_radius`: the truncated formula is exactly
/// `(log G_R)''`, which finite differences of the truncated product verify.
pub fn d2_log_g_with_radius(b: u32, eps: f64, radius: u64) -> Result<EvalWithBound, LimitError> {
    let shape = Shape::new(b)?;
    let (rlo, _rhi) = root_interval(b, eps)?;
    let _ = rlo;
    let d = shape.sqrt_d * shape.sqrt_d;
    let dl = shape.delta_tilde(eps);
    let first = -d / (eps * shape.sqrt_d + 1.0).powi(2);
    let two_sqrt_d = 2.0 * shape.sqrt_d;
    let mut acc = Compensated::default();
    let mut st = FracState::new(&shape.surd);
    for r in 1..=radius {
        let frac = fp_to_f64(st.step());
        let u = two_sqrt_d * r as f64 - 2.0 * frac + 1.0;
        let m = (u - dl).abs();
        let p = (u + dl).abs();
        acc.add(1.0 / (m * m) + 1.0 / (p * p));
    }
    let sum = acc.total();
    // tail: both |u - dl| and |u + dl| exceed 2 sqrtD r - 1 - |dl| beyond R
    let margin = two_sqrt_d * radius as f64 - 1.0 - dl.abs();
    if margin <= 0.0 {
        return Err(LimitError::BadTarget);
    }
    let tail = 8.0 * d / (two_sqrt_d * margin);
    let value = first - 4.0 * d * sum;
    let abs_err = tail + 8.0 * EPS * (value.abs() + 4.0 * d * sum);
    Ok(EvalWithBound::new(value, abs_err))
}

/// Analytic second derivative of `log G_β` with radius chosen from the
/// target bound. Requires ε strictly inside a root interval.
pub fn d2_log_g(b: u32, eps: f64, target_abs_err: f64) -> Result<EvalWithBound, LimitError> {
    if !(target_abs_err > 0.0) {
        return Err(LimitError::BadTarget);
    }
    let shape = Shape::new(b)?;
    let d = shape.sqrt_d * shape.sqrt_d;
    // tail ~ 8D / (2 sqrtD (2 sqrtD R)) = 2/R
    let radius = ((8.0 * d / (4.0 * d * target_abs_err)).ceil() as u64).clamp(1024, RADIUS_CAP);
    d2_log_g_with_radius(b, eps, radius)
}

/// Outcome of an interval certificate.
#[derive(Debug, Clone, Copy)]
pub struct Certificate {
    pub b: u32,
    pub lo: f64,
    pub hi: f64,
    pub threshold: f64,
    pub lo_eval: EvalWithBound,
    pub hi_eval: EvalWithBound,
    pub holds: bool,
}

fn eval_sharp(b: u32, eps: f64, threshold: f64) -> Result<EvalWithBound, LimitError> {
    let mut target = 1e-6;
    let mut out = g_eval(b, eps, target)?;
    for _ in 0..3 {
        if (out.value - threshold).abs() > 4.0 * out.abs_err {
            return Ok(out);
        }
        target = ((out.value - threshold).abs() / 8.0).max(1e-10);
        out = g_eval(b, eps, target)?;
    }
    if (out.value - threshold).abs() <= out.abs_err {
        return Err(LimitError::Inconclusive {
            eps,
            value: out.value,
            abs_err: out.abs_err,
            threshold,
        });
    }
    Ok(out)
}

fn check_one_interval(b: u32, lo: f64, hi: f64) -> Result<(), LimitError> {
    if !(lo < hi) {
        return Err(LimitError::InvalidInterval { lo, hi });
    }
    let (rlo, rhi) = root_interval(b, lo)?;
    if !(hi < rhi && lo > rlo) {
        return Err(LimitError::InvalidInterval { lo, hi });
    }
    Ok(())
}

/// Certifies `G_β > threshold` on all of `[lo, hi]` from the endpoints:
/// by strict log-concavity inside a root interval, the minimum over the
/// interval is attained at an endpoint.
pub fn certify_above(b: u32, lo: f64, hi: f64, threshold: f64) -> Result<Certificate, LimitError> {
    check_one_interval(b, lo, hi)?;
    let lo_eval = eval_sharp(b, lo, threshold)?;
    let hi_eval = eval_sharp(b, hi, threshold)?;
    let holds =
        lo_eval.value - lo_eval.abs_err > threshold && hi_eval.value - hi_eval.abs_err > threshold;
    Ok(Certificate {
        b,
        lo,
        hi,
        threshold,
        lo_eval,
        hi_eval,
        holds,
    })
}

/// Certifies `G_β ≤ threshold` on `[lo, hi]` using unimodality: inside a
/// root interval `G_β` rises to a single peak and falls, so a witness point
/// `w` outside the interval with `G(w) > G(endpoint nearest w)` places the
/// whole interval on one monotone side; that endpoint then bounds the max.
pub fn certify_below(
    b: u32,
    lo: f64,
    hi: f64,
    threshold: f64,
    witness: f64,
) -> Result<Certificate, LimitError> {
    check_one_interval(b, lo, hi)?;
    let (rlo, rhi) = root_interval(b, lo)?;
    if !(witness > rlo && witness < rhi) || (witness >= lo && witness <= hi) {
        return Err(LimitError::BadWitness { witness });
    }
    let edge = if witness > hi { hi } else { lo };
    let edge_eval = eval_sharp(b, edge, threshold)?;
    let w_eval = g_eval(b, witness, 1e-7)?;
    if !(w_eval.value - w_eval.abs_err > edge_eval.value + edge_eval.abs_err) {
        return Err(LimitError::BadWitness { witness });
    }
    let other = if witness > hi { lo } else { hi };
    let other_eval = g_eval(b, other, 1e-7)?;
    let holds = edge_eval.value + edge_eval.abs_err <= threshold;
    Ok(Certificate {
        b,
        lo,
        hi,
        threshold,
        lo_eval: if witness > hi { other_eval } else { edge_eval },
        hi_eval: if witness > hi { edge_eval } else { other_eval },
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u_values() {
        // u(1) = sqrt(5) + 2 for the golden ratio
        assert!((u_seq(1, 1).unwrap() - (5f64.sqrt() + 2.0)).abs() < 1e-12);
        // b=6: 2*sqrt(40) - 2(sqrt(10)-3) + 1 = 13.3245553203...
        assert!((u_seq(6, 1).unwrap() - 13.3245553203).abs() < 1e-9);
        // b=5 high-precision direct evaluation
        assert!((u_seq(5, 1).unwrap() - 11.3851648071).abs() < 1e-9);
        // generic bracket: u_b(r) in (2 sqrtD (r-1/2), 2 sqrtD (r+1/2))
        for b in [2u32, 7] {
            let d = ((b * b + 4) as f64).sqrt();
            for r in 1..=50u64 {
                let u = u_seq(b, r).unwrap();
                assert!(u > 2.0 * d * (r as f64 - 0.5) && u < 2.0 * d * (r as f64 + 0.5));
            }
        }
    }

    #[test]
    fn special_value_g_at_minus_phi_over_sqrt5() {
        let phi = 0.618_033_988_749_894_9_f64;
        let eps = -phi / 5f64.sqrt();
        let g = g_eval(1, eps, 5e-8).unwrap();
        assert!((g.value - 1.0).abs() < 1e-7, "G = {}", g.value);
    }

    #[test]
    fn c1_matches_direct_products() {
        // Direct P_{F_n}(phi) converge to 2.4071142357...; the paper's
        // printed table (2.406152) disagrees with its own formula.
        let c = c_const(1, 1e-8).unwrap();
        assert!((c.value - 2.4071142357).abs() < 1e-7, "C_1 = {}", c.value);
    }

    #[test]
    fn roots_closed_form() {
        let (lo, hi) = roots_near_zero(1).unwrap();
        assert!((lo + 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((hi - (5.0 + 5f64.sqrt()) / 10.0).abs() < 1e-12);
        // b=6: (-1/sqrt40, (6+beta)/sqrt40)
        let (lo, hi) = roots_near_zero(6).unwrap();
        let beta = 10f64.sqrt() - 3.0;
        assert!((lo + 1.0 / 40f64.sqrt()).abs() < 1e-12);
        assert!((hi - (6.0 + beta) / 40f64.sqrt()).abs() < 1e-12);
        // G vanishes there within bound
        let g = g_eval(6, hi, 1e-6).unwrap();
        assert!(g.at_root, "value {} err {}", g.value, g.abs_err);
        assert!(g.value.abs() < 1e-6);
    }

    #[test]
    fn proposition_anchors_b1() {
        let g = g_eval(1, -0.26, 1e-8).unwrap();
        assert!(g.value > 1.09 && g.value < 1.11, "G(-0.26) = {}", g.value);
        let g = g_eval(1, 0.58, 1e-8).unwrap();
        assert!(g.value > 1.10 && g.value < 1.12, "G(0.58) = {}", g.value);
    }

    #[test]
    fn certify_range_b1() {
        let cert = certify_above(1, -0.26, 0.58, 1.01).unwrap();
        assert!(cert.holds);
        // a threshold equal to the computed endpoint value is inconclusive
        let v = g_eval(1, -0.26, 1e-9).unwrap().value;
        let err = certify_above(1, -0.26, 0.58, v);
        assert!(matches!(err, Err(LimitError::Inconclusive { .. })));
        // interval containing a root is invalid
        let err = certify_above(1, -0.5, 0.0, 0.5);
        assert!(matches!(err, Err(LimitError::InvalidInterval { .. })));
    }

    #[test]
    fn certify_below_b6_window() {
        // Lemma-2 claim: G_beta <= 0.96 on [-0.0257, -0.02], witness at 0
        let cert = certify_below(6, -0.0257, -0.02, 0.96, 0.0).unwrap();
        assert!(cert.holds);
        // and the endpoint value is ~0.9487 (paper: 0.949)
        assert!((cert.hi_eval.value - 0.9487).abs() < 5e-3);
    }

    #[test]
    fn tail_bound_halves_when_radius_doubles() {
        for (b, eps) in [(1u32, 0.1f64), (6, -0.05), (5, 0.3)] {
            for radius in [2_000u64, 20_000] {
                let e1 = g_eval_with_radius(b, eps, radius).unwrap();
                let e2 = g_eval_with_radius(b, eps, 2 * radius).unwrap();
                assert!(
                    e1.abs_err / e2.abs_err >= 1.9,
                    "b={b} eps={eps} R={radius}: {} -> {}",
                    e1.abs_err,
                    e2.abs_err
                );
            }
        }
    }

    #[test]
    fn d2_is_negative_and_matches_differences() {
        // compare against finite differences of the radius-matched truncated
        // product: (log G_R)'' is exactly the truncated analytic formula
        let radius = 200_000u64;
        let d2 = d2_log_g_with_radius(1, 0.0, radius).unwrap();
        assert!(d2.value < 0.0);
        let h = 1e-4;
        let gm = g_eval_with_radius(1, -h, radius).unwrap().value.ln();
        let g0 = g_eval_with_radius(1, 0.0, radius).unwrap().value.ln();
        let gp = g_eval_with_radius(1, h, radius).unwrap().value.ln();
        let fd = (gp - 2.0 * g0 + gm) / (h * h);
        assert!(
            (fd - d2.value).abs() / d2.value.abs() < 1e-4,
            "fd={fd} analytic={}",
            d2.value
        );
        // the full-tail version agrees within its reported bound
        let full = d2_log_g(1, 0.0, 1e-5).unwrap();
        assert!((full.value - d2.value).abs() <= full.abs_err + d2.abs_err);
        let root = roots_near_zero(1).unwrap().0;
        assert!(matches!(
            d2_log_g(1, root, 1e-6),
            Err(LimitError::AtRoot { .. })
        ));
    }
}
