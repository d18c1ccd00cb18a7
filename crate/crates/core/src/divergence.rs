//! The f-divergence catalog: pointwise evaluators, reward-penalty terms,
//! exact divergences on finite distributions, and a control-variate
//! Monte-Carlo estimator.
//!
//! Each divergence is generated by a convex `f` with `f(1) = 0` via
//! `D_f(p, q) = E_q[f(p/q)]`. The closed-form solver only supports the
//! divergences whose `f'` excludes 0 from its domain; total variation and
//! chi-squared stay estimate-only.

use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// Which f-divergence a [`DivergenceSpec`] denotes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceKind {
    ReverseKl,
    ForwardKl,
    JensenShannon,
    Alpha,
    TotalVariation,
    ChiSquared,
}

/// A named f-divergence with its evaluators and admissibility flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceSpec {
    kind: DivergenceKind,
    alpha: Option<f64>,
}

impl DivergenceSpec {
    pub fn reverse_kl() -> Self {
        Self {
            kind: DivergenceKind::ReverseKl,
            alpha: None,
        }
    }

    pub fn forward_kl() -> Self {
        Self {
            kind: DivergenceKind::ForwardKl,
            alpha: None,
        }
    }

    pub fn jensen_shannon() -> Self {
        Self {
            kind: DivergenceKind::JensenShannon,
            alpha: None,
        }
    }

    /// The alpha family is restricted to the open interval (0, 1); its
    /// endpoints are served by the dedicated reverse/forward KL specs.
    pub fn alpha(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Argument(format!(
                "alpha must lie in (0, 1), got {a}"
            )));
        }
        Ok(Self {
            kind: DivergenceKind::Alpha,
            alpha: Some(a),
        })
    }

    pub fn total_variation() -> Self {
        Self {
            kind: DivergenceKind::TotalVariation,
            alpha: None,
        }
    }

    pub fn chi_squared() -> Self {
        Self {
            kind: DivergenceKind::ChiSquared,
            alpha: None,
        }
    }

    pub fn kind(&self) -> DivergenceKind {
        self.kind
    }

    pub fn alpha_value(&self) -> Option<f64> {
        self.alpha
    }

    /// True iff 0 is outside the domain of `f'`, the hypothesis the
    /// closed-form solver needs.
    pub fn solver_admissible(&self) -> bool {
        !matches!(
            self.kind,
            DivergenceKind::TotalVariation | DivergenceKind::ChiSquared
        )
    }

    pub fn strictly_convex(&self) -> bool {
        !matches!(self.kind, DivergenceKind::TotalVariation)
    }

    /// Supremum of range(f'), the upper edge the dual bracket leans on.
    /// `ReverseKl` is unbounded above.
    pub fn f_prime_sup(&self) -> f64 {
        match self.kind {
            DivergenceKind::ReverseKl => f64::INFINITY,
            DivergenceKind::ForwardKl => 0.0,
            DivergenceKind::JensenShannon => std::f64::consts::LN_2,
            DivergenceKind::Alpha => 1.0 / self.alpha.unwrap(),
            DivergenceKind::TotalVariation => 0.5,
            DivergenceKind::ChiSquared => f64::INFINITY,
        }
    }
}

impl fmt::Display for DivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DivergenceKind::ReverseKl => write!(f, "rkl"),
            DivergenceKind::ForwardKl => write!(f, "fkl"),
            DivergenceKind::JensenShannon => write!(f, "jsd"),
            DivergenceKind::Alpha => write!(f, "alpha:{}", self.alpha.unwrap()),
            DivergenceKind::TotalVariation => write!(f, "tv"),
            DivergenceKind::ChiSquared => write!(f, "chi2"),
        }
    }
}

impl FromStr for DivergenceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rkl" => Ok(Self::reverse_kl()),
            "fkl" => Ok(Self::forward_kl()),
            "jsd" => Ok(Self::jensen_shannon()),
            "tv" => Ok(Self::total_variation()),
            "chi2" => Ok(Self::chi_squared()),
            other => {
                if let Some(v) = other.strip_prefix("alpha:") {
                    let a: f64 = v
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad alpha value in '{other}'")))?;
                    Self::alpha(a)
                } else {
                    Err(Error::Parse(format!(
                        "unknown divergence '{other}' (expected rkl, fkl, jsd, alpha:<v>, tv, chi2)"
                    )))
                }
            }
        }
    }
}

/// A probability vector over a finite outcome set.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    probs: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Argument("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Argument(
                "distribution entries must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!(
                "distribution sums to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { probs })
    }

    /// Uniform distribution over `n` outcomes.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("empty distribution".into()));
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn check_positive(spec: &DivergenceSpec, u: f64) -> Result<()> {
    if !u.is_finite() || u < 0.0 {
        return Err(Error::Domain(format!(
            "ratio must be a finite nonnegative real, got {u} for {spec}"
        )));
    }
    Ok(())
}

/// `f(u)` for the spec's generator.
///
/// `u = 0` is accepted only where `f` extends continuously (reverse KL,
/// Jensen-Shannon, total variation, chi-squared); forward KL and the alpha
/// family reject it.
pub fn f_value(spec: &DivergenceSpec, u: f64) -> Result<f64> {
    check_positive(spec, u)?;
    match spec.kind {
        DivergenceKind::ReverseKl => Ok(if u == 0.0 { 0.0 } else { u * u.ln() }),
        DivergenceKind::ForwardKl => {
            if u == 0.0 {
                Err(Error::Domain("forward KL f(u) diverges at u = 0".into()))
            } else {
                Ok(-u.ln())
            }
        }
        DivergenceKind::JensenShannon => {
            let ulogu = if u == 0.0 { 0.0 } else { u * u.ln() };
            Ok(ulogu - (u + 1.0) * ((u + 1.0) / 2.0).ln())
        }
        DivergenceKind::Alpha => {
            if u == 0.0 {
                return Err(Error::Domain(
                    "alpha-divergence f'(u) diverges at u = 0".into(),
                ));
            }
            if u == 1.0 {
                // the closed form cancels only approximately in floats
                return Ok(0.0);
            }
            let a = spec.alpha.unwrap();
            Ok((u.powf(1.0 - a) - (1.0 - a) * u - a) / (a * (a - 1.0)))
        }
        DivergenceKind::TotalVariation => Ok(0.5 * (u - 1.0).abs()),
        DivergenceKind::ChiSquared => Ok((u - 1.0) * (u - 1.0)),
    }
}

/// `f'(u)`. Total variation is non-differentiable at u = 1.
pub fn f_prime(spec: &DivergenceSpec, u: f64) -> Result<f64> {
    check_positive(spec, u)?;
    if u == 0.0 {
        return Err(Error::Domain(format!("f'(0) is undefined for {spec}")));
    }
    match spec.kind {
        DivergenceKind::ReverseKl => Ok(u.ln() + 1.0),
        DivergenceKind::ForwardKl => Ok(-1.0 / u),
        DivergenceKind::JensenShannon => Ok((2.0 * u / (1.0 + u)).ln()),
        DivergenceKind::Alpha => {
            let a = spec.alpha.unwrap();
            Ok((1.0 - u.powf(-a)) / a)
        }
        DivergenceKind::TotalVariation => {
            if u == 1.0 {
                Err(Error::Domain(
                    "total variation f' is non-differentiable at u = 1".into(),
                ))
            } else if u > 1.0 {
                Ok(0.5)
            } else {
                Ok(-0.5)
            }
        }
        DivergenceKind::ChiSquared => Ok(2.0 * (u - 1.0)),
    }
}

/// `f''(u)`, available for the four solver-admissible divergences.
pub fn f_double_prime(spec: &DivergenceSpec, u: f64) -> Result<f64> {
    check_positive(spec, u)?;
    if u == 0.0 {
        return Err(Error::Domain(format!("f''(0) is undefined for {spec}")));
    }
    match spec.kind {
        DivergenceKind::ReverseKl => Ok(1.0 / u),
        DivergenceKind::ForwardKl => Ok(1.0 / (u * u)),
        DivergenceKind::JensenShannon => Ok(1.0 / (u * (1.0 + u))),
        DivergenceKind::Alpha => {
            let a = spec.alpha.unwrap();
            Ok(u.powf(-a - 1.0))
        }
        _ => Err(Error::NotImplemented(format!(
            "f'' is only provided for solver-admissible divergences, not {spec}"
        ))),
    }
}

/// `(f')^{-1}(v)`, defined on the open range of `f'`:
/// all reals for reverse KL, `v < 0` for forward KL, `v < ln 2` for
/// Jensen-Shannon, `v < 1/alpha` for the alpha family.
pub fn f_prime_inv(spec: &DivergenceSpec, v: f64) -> Result<f64> {
    if !spec.solver_admissible() {
        return Err(Error::NotImplemented(format!(
            "(f')^-1 is not available for {spec}"
        )));
    }
    if !v.is_finite() {
        return Err(Error::Range(format!("non-finite argument {v}")));
    }
    match spec.kind {
        DivergenceKind::ReverseKl => Ok((v - 1.0).exp()),
        DivergenceKind::ForwardKl => {
            if v >= 0.0 {
                Err(Error::Range(format!(
                    "forward KL requires v < 0, got {v}"
                )))
            } else {
                Ok(-1.0 / v)
            }
        }
        DivergenceKind::JensenShannon => {
            if v >= std::f64::consts::LN_2 {
                Err(Error::Range(format!(
                    "Jensen-Shannon requires v < ln 2 = {}, got {v}",
                    std::f64::consts::LN_2
                )))
            } else {
                let ev = v.exp();
                Ok(ev / (2.0 - ev))
            }
        }
        DivergenceKind::Alpha => {
            let a = spec.alpha.unwrap();
            if v >= 1.0 / a {
                Err(Error::Range(format!(
                    "alpha-divergence requires v < 1/alpha = {}, got {v}",
                    1.0 / a
                )))
            } else {
                Ok((1.0 - a * v).powf(-1.0 / a))
            }
        }
        _ => unreachable!(),
    }
}

/// Per-sample reward-penalty magnitude at ratio `t = pi_ref / pi`:
/// `ln t` for reverse KL, `t ln t - (t+1) ln((t+1)/2)` for Jensen-Shannon,
/// `t ln t` for forward KL.
pub fn penalty_term(spec: &DivergenceSpec, t: f64) -> Result<f64> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::Domain(format!("penalty ratio must be positive, got {t}")));
    }
    match spec.kind {
        DivergenceKind::ReverseKl => Ok(t.ln()),
        DivergenceKind::JensenShannon => {
            Ok(t * t.ln() - (t + 1.0) * ((t + 1.0) / 2.0).ln())
        }
        DivergenceKind::ForwardKl => Ok(t * t.ln()),
        _ => Err(Error::NotImplemented(format!(
            "penalty term is defined for rkl, jsd, fkl only, not {spec}"
        ))),
    }
}

/// Exact `D_f(p, q) = sum_y q(y) f(p(y)/q(y))` on finite distributions.
///
/// Outcomes with `q(y) = 0` carry no mass under `q` and are skipped, except
/// that divergences with superlinear `f` (reverse KL, chi-squared) blow up
/// when `p` puts mass there, in which case `+inf` is returned so frontier
/// sweeps can report the blow-up.
pub fn exact_divergence(
    spec: &DivergenceSpec,
    p: &FiniteDistribution,
    q: &FiniteDistribution,
) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "distributions have {} and {} outcomes",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        if qi == 0.0 {
            if pi > 0.0
                && matches!(
                    spec.kind,
                    DivergenceKind::ReverseKl | DivergenceKind::ChiSquared
                )
            {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        let u = pi / qi;
        // Forward KL and the alpha family reject u = 0 at the evaluator
        // level; the divergence term still has a limit (infinite for
        // forward KL, q/(1-alpha) for alpha).
        let term = match (spec.kind, u == 0.0) {
            (DivergenceKind::ForwardKl, true) => return Ok(f64::INFINITY),
            (DivergenceKind::Alpha, true) => qi / (1.0 - spec.alpha.unwrap()),
            _ => qi * f_value(spec, u)?,
        };
        total += term;
    }
    Ok(total.max(0.0))
}

/// Sample mean and standard error of `f(r) - f'(1) (r - 1)` over i.i.d.
/// ratio draws `r = p/q` with the sample point drawn from `q`.
pub fn mc_estimate(spec: &DivergenceSpec, ratio_samples: &[f64]) -> Result<(f64, f64)> {
    if ratio_samples.is_empty() {
        return Err(Error::Argument("empty ratio sample sequence".into()));
    }
    let fp1 = f_prime(spec, 1.0)?;
    let mut values = Vec::with_capacity(ratio_samples.len());
    for &r in ratio_samples {
        values.push(f_value(spec, r)? - fp1 * (r - 1.0));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Ok((mean, se))
}

/// All six catalog entries with a representative alpha, for test sweeps.
pub fn catalog() -> Vec<DivergenceSpec> {
    vec![
        DivergenceSpec::reverse_kl(),
        DivergenceSpec::forward_kl(),
        DivergenceSpec::jensen_shannon(),
        DivergenceSpec::alpha(0.5).unwrap(),
        DivergenceSpec::total_variation(),
        DivergenceSpec::chi_squared(),
    ]
}

/// The four divergences the closed-form solver accepts.
pub fn solver_admissible_specs() -> Vec<DivergenceSpec> {
    vec![
        DivergenceSpec::reverse_kl(),
        DivergenceSpec::forward_kl(),
        DivergenceSpec::jensen_shannon(),
        DivergenceSpec::alpha(0.5).unwrap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{E, LN_2};

    fn admissible_with_alphas() -> Vec<DivergenceSpec> {
        vec![
            DivergenceSpec::reverse_kl(),
            DivergenceSpec::forward_kl(),
            DivergenceSpec::jensen_shannon(),
            DivergenceSpec::alpha(0.3).unwrap(),
            DivergenceSpec::alpha(0.5).unwrap(),
            DivergenceSpec::alpha(0.7).unwrap(),
        ]
    }

    #[test]
    fn f_is_zero_at_one_for_every_spec() {
        for spec in catalog() {
            assert_eq!(f_value(&spec, 1.0).unwrap(), 0.0, "{spec}");
        }
    }

    #[test]
    fn table_values() {
        let rkl = DivergenceSpec::reverse_kl();
        let fkl = DivergenceSpec::forward_kl();
        let jsd = DivergenceSpec::jensen_shannon();
        let a05 = DivergenceSpec::alpha(0.5).unwrap();

        assert!((f_value(&fkl, E).unwrap() - (-1.0)).abs() < 1e-15);
        // (u^{1-a} - (1-a) u - a) / (a (a-1)) at a=0.5, u=4: (2 - 2 - 0.5) / (-0.25)
        assert!((f_value(&a05, 4.0).unwrap() - 2.0).abs() < 1e-12);

        assert!((f_prime(&rkl, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(f_prime(&jsd, 1.0).unwrap(), 0.0);
        assert!((f_prime(&fkl, 2.0).unwrap() - (-0.5)).abs() < 1e-15);

        assert!((f_double_prime(&rkl, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((f_double_prime(&jsd, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((f_double_prime(&a05, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn admissibility_flags_match_table() {
        for spec in catalog() {
            let expect = !matches!(
                spec.kind(),
                DivergenceKind::TotalVariation | DivergenceKind::ChiSquared
            );
            assert_eq!(spec.solver_admissible(), expect, "{spec}");
        }
        assert!(!DivergenceSpec::total_variation().strictly_convex());
        assert!(DivergenceSpec::chi_squared().strictly_convex());
    }

    #[test]
    fn inverse_round_trip_on_log_grid() {
        for spec in admissible_with_alphas() {
            let mut u = 1e-6;
            while u <= 1e6 {
                let v = f_prime(&spec, u).unwrap();
                let back = f_prime_inv(&spec, v).unwrap();
                let rel = (back - u).abs() / u;
                assert!(rel < 1e-10, "{spec} at u={u}: rel={rel}");
                u *= 10.0;
            }
        }
    }

    #[test]
    fn f_prime_inv_range_errors() {
        let fkl = DivergenceSpec::forward_kl();
        assert!(matches!(f_prime_inv(&fkl, 0.1), Err(Error::Range(_))));
        let jsd = DivergenceSpec::jensen_shannon();
        assert!(matches!(f_prime_inv(&jsd, LN_2), Err(Error::Range(_))));
        let a = DivergenceSpec::alpha(0.5).unwrap();
        assert!(matches!(f_prime_inv(&a, 2.0), Err(Error::Range(_))));
        assert!((f_prime_inv(&fkl, -0.5).unwrap() - 2.0).abs() < 1e-14);
        assert!((f_prime_inv(&DivergenceSpec::reverse_kl(), 1.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn f_double_prime_matches_finite_differences() {
        for spec in admissible_with_alphas() {
            for &u in &[0.05, 0.3, 1.0, 2.7, 40.0] {
                let h = 1e-5 * u;
                let fd =
                    (f_prime(&spec, u + h).unwrap() - f_prime(&spec, u - h).unwrap()) / (2.0 * h);
                let exact = f_double_prime(&spec, u).unwrap();
                assert!(exact > 0.0);
                let rel = (fd - exact).abs() / exact;
                assert!(rel < 1e-6, "{spec} at u={u}: rel={rel}");
            }
        }
    }

    #[test]
    fn domain_errors_on_bad_ratios() {
        for spec in catalog() {
            assert!(f_value(&spec, -0.5).is_err(), "{spec}");
            assert!(f_prime(&spec, 0.0).is_err(), "{spec}");
        }
        assert!(f_value(&DivergenceSpec::forward_kl(), 0.0).is_err());
        assert!(f_value(&DivergenceSpec::alpha(0.5).unwrap(), 0.0).is_err());
        assert_eq!(f_value(&DivergenceSpec::reverse_kl(), 0.0).unwrap(), 0.0);
        assert!((f_value(&DivergenceSpec::jensen_shannon(), 0.0).unwrap() - LN_2).abs() < 1e-15);
        assert!(matches!(
            f_prime(&DivergenceSpec::total_variation(), 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn penalty_values_and_growth_ordering() {
        let rkl = DivergenceSpec::reverse_kl();
        let jsd = DivergenceSpec::jensen_shannon();
        let fkl = DivergenceSpec::forward_kl();
        assert_eq!(penalty_term(&rkl, 1.0).unwrap(), 0.0);
        assert_eq!(penalty_term(&jsd, 1.0).unwrap(), 0.0);
        // 100 ln 100
        assert!((penalty_term(&fkl, 100.0).unwrap() - 460.517).abs() < 1e-3);
        assert!((penalty_term(&jsd, 100.0).unwrap() - 64.398).abs() < 1e-3);
        assert!((penalty_term(&rkl, 100.0).unwrap() - 4.60517).abs() < 1e-5);
        let mut t = 10.0;
        while t <= 1e4 {
            let p_f = penalty_term(&fkl, t).unwrap();
            let p_j = penalty_term(&jsd, t).unwrap();
            let p_r = penalty_term(&rkl, t).unwrap();
            assert!(p_f > p_j && p_j > p_r, "ordering fails at t={t}");
            t *= 2.0;
        }
        assert!(penalty_term(&DivergenceSpec::chi_squared(), 2.0).is_err());
    }

    #[test]
    fn exact_divergence_known_values() {
        let rkl = DivergenceSpec::reverse_kl();
        let p = FiniteDistribution::new(vec![0.75, 0.25]).unwrap();
        let q = FiniteDistribution::new(vec![0.5, 0.5]).unwrap();
        // brute force: 0.75 ln 1.5 + 0.25 ln 0.5
        let expect = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((exact_divergence(&rkl, &p, &q).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.130812).abs() < 1e-6);

        let jsd = DivergenceSpec::jensen_shannon();
        let one_hot = FiniteDistribution::new(vec![1.0, 0.0]).unwrap();
        let other = FiniteDistribution::new(vec![0.0, 1.0]).unwrap();
        assert!((exact_divergence(&jsd, &one_hot, &other).unwrap() - LN_2).abs() < 1e-12);

        // p = q gives exactly 0 for every catalog entry
        for spec in catalog() {
            assert_eq!(exact_divergence(&spec, &q, &q).unwrap(), 0.0, "{spec}");
        }

        // reverse-KL blow-up when q vanishes where p does not
        assert!(exact_divergence(&rkl, &one_hot, &other)
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn exact_divergence_shape_error() {
        let p = FiniteDistribution::new(vec![0.5, 0.5]).unwrap();
        let q = FiniteDistribution::uniform(3).unwrap();
        assert!(matches!(
            exact_divergence(&DivergenceSpec::reverse_kl(), &p, &q),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn mc_estimate_is_exact_on_constant_ratios() {
        for spec in admissible_with_alphas() {
            let (est, se) = mc_estimate(&spec, &vec![1.0; 100]).unwrap();
            assert_eq!(est, 0.0, "{spec}");
            assert_eq!(se, 0.0, "{spec}");
        }
        assert!(mc_estimate(&DivergenceSpec::reverse_kl(), &[]).is_err());
    }

    #[test]
    fn mc_estimate_weighted_mean_identity() {
        // On a finite support, weighting the per-ratio values by q reproduces
        // the exact divergence: sum_y q f(p/q) - f'(1) sum_y (p - q) = D_f.
        let p = FiniteDistribution::new(vec![0.6, 0.3, 0.1]).unwrap();
        let q = FiniteDistribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        for spec in admissible_with_alphas() {
            let fp1 = f_prime(&spec, 1.0).unwrap();
            let mut mean = 0.0;
            for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
                let r = pi / qi;
                mean += qi * (f_value(&spec, r).unwrap() - fp1 * (r - 1.0));
            }
            let exact = exact_divergence(&spec, &p, &q).unwrap();
            assert!((mean - exact).abs() < 1e-12, "{spec}");
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["rkl", "fkl", "jsd", "alpha:0.5", "alpha:0.3", "tv", "chi2"] {
            let spec: DivergenceSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("alpha:1.5".parse::<DivergenceSpec>().is_err());
        assert!("alpha:0".parse::<DivergenceSpec>().is_err());
        assert!("kl".parse::<DivergenceSpec>().is_err());
    }

    proptest! {
        #[test]
        fn f_prime_strictly_increasing(u1 in 1e-5f64..1e5, factor in 1.001f64..10.0) {
            let u2 = u1 * factor;
            for spec in admissible_with_alphas() {
                let a = f_prime(&spec, u1).unwrap();
                let b = f_prime(&spec, u2).unwrap();
                prop_assert!(a < b, "{} at {} vs {}", spec, u1, u2);
            }
        }

        #[test]
        fn f_value_midpoint_convex(u1 in 1e-4f64..1e4, u2 in 1e-4f64..1e4) {
            for spec in catalog() {
                let mid = f_value(&spec, 0.5 * (u1 + u2)).unwrap();
                let avg = 0.5 * (f_value(&spec, u1).unwrap() + f_value(&spec, u2).unwrap());
                prop_assert!(mid <= avg + 1e-9 * (1.0 + avg.abs()), "{}", spec);
            }
        }

        #[test]
        fn divergence_nonnegative_zero_iff_equal(
            raw in proptest::collection::vec(0.05f64..1.0, 2..6),
        ) {
            let total: f64 = raw.iter().sum();
            let p = FiniteDistribution::new(raw.iter().map(|x| x / total).collect()).unwrap();
            let q = FiniteDistribution::uniform(p.len()).unwrap();
            for spec in admissible_with_alphas() {
                let d = exact_divergence(&spec, &p, &q).unwrap();
                prop_assert!(d >= 0.0);
                let dd = exact_divergence(&spec, &p, &p).unwrap();
                prop_assert!(dd.abs() < 1e-12);
            }
        }
    }
}
