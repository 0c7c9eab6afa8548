use crate::error::{domain, Error, Result};
use crate::mixture::check_k;
use crate::poly::{factorial, PiecewisePoly};

/// Values of `G = int_0^t g` and of the derivatives of `g` at `t`, with
/// everything past the last breakpoint read off from that breakpoint and the
/// derivatives of `g` taken as zero there (mixture densities vanish beyond
/// their largest atom).
fn cdf_terms(big: &PiecewisePoly, k: usize, t: f64) -> Vec<f64> {
    if t >= big.end() {
        let mut v = vec![0.0; k + 1];
        v[0] = big.eval_unchecked(big.end(), 0);
        return v;
    }
    big.eval_all(t, k)
}

fn inversion_from_primitive(big: &PiecewisePoly, k: usize, t: f64) -> f64 {
    let terms = cdf_terms(big, k, t);
    let mut acc = 0.0;
    let mut pow = 1.0;
    for (j, gj) in terms.iter().enumerate() {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * pow / factorial(j) * gj;
        pow *= t;
    }
    acc
}

/// Mixing distribution function recovered from a mixture density `g`:
/// `F(t) = sum_{j=0}^{k} (-1)^j t^j / j! G^{(j)}(t)` with `G` the primitive of
/// `g` vanishing at zero. Right limits are used at breakpoints.
pub fn invert_mixing(g: &PiecewisePoly, k: usize, t: f64) -> Result<f64> {
    check_k(k)?;
    if !(t > 0.0) {
        return domain(format!("mixing CDF needs t > 0, got {t}"));
    }
    let big = g.antiderivative(1, g.start())?;
    Ok(inversion_from_primitive(&big, k, t))
}

/// [`invert_mixing`] at many points, integrating `g` once.
pub fn mixing_cdf_curve(g: &PiecewisePoly, k: usize, ts: &[f64]) -> Result<Vec<f64>> {
    check_k(k)?;
    if let Some(bad) = ts.iter().find(|t| !(**t > 0.0)) {
        return domain(format!("mixing CDF needs t > 0, got {bad}"));
    }
    let big = g.antiderivative(1, g.start())?;
    Ok(ts.iter().map(|&t| inversion_from_primitive(&big, k, t)).collect())
}

/// `F(t) = 1 - g^{(k-1)}(t) / g^{(k-1)}(0+)`, the distribution of the
/// mixing variable when observations are length-biased by `t^k`.
pub fn invert_hampel(g: &PiecewisePoly, k: usize, t: f64) -> Result<f64> {
    check_k(k)?;
    if !(t >= 0.0) {
        return domain(format!("t must be nonnegative, got {t}"));
    }
    let d = g.derivative(k - 1);
    let at_zero = d.eval(d.start(), 0)?;
    if at_zero == 0.0 || !at_zero.is_finite() {
        return Err(Error::Degenerate("the (k-1)-st derivative vanishes at 0+".into()));
    }
    let at_t = if t >= d.end() { 0.0 } else { d.eval(t, 0)? };
    Ok(1.0 - at_t / at_zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{mixture_to_piecewise, MassConstraint, MixingMeasure};
    use approx::assert_relative_eq;

    fn single(t: f64, k: usize) -> PiecewisePoly {
        let mm = MixingMeasure::new(vec![t], vec![1.0], MassConstraint::Unit).unwrap();
        mixture_to_piecewise(&mm, k).unwrap()
    }

    #[test]
    fn single_atom_steps() {
        let g = single(1.0, 2);
        assert!(invert_mixing(&g, 2, 0.5).unwrap().abs() < 1e-15);
        assert_relative_eq!(invert_mixing(&g, 2, 1.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(invert_mixing(&g, 2, 10.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(invert_mixing(&g, 2, 0.0).is_err());
    }

    #[test]
    fn hampel_single_atom() {
        let g = single(2.0, 3);
        assert_eq!(invert_hampel(&g, 3, 1.0).unwrap(), 0.0);
        assert_eq!(invert_hampel(&g, 3, 2.5).unwrap(), 1.0);
        assert_eq!(invert_hampel(&g, 3, 100.0).unwrap(), 1.0);
    }
}
