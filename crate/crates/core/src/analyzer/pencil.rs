//! Roots of the marginal-stability condition at one fixed marginal frequency
//! `v`: the eigenvalue reduction for any number of populations, plus the
//! hand-coded two-population quadratic kept as an independent cross-check.

use crate::model::LorentzianSpec;
use nalgebra::DMatrix;
use num_complex::Complex64;

use super::AnalyzerError;

/// Relative cutoff under which a reduced eigenvalue mu = 1/eta counts as zero,
/// i.e. as an infinite root caused by rank deficiency of the coupling matrix.
const ZERO_EIGENVALUE_CUT: f64 = 1e-12;

/// Marginal-stability offset Delta + i (v + Omega) of one population — the
/// building block of the two-population quadratic's coefficients.
pub fn marginal_term(dist: &LorentzianSpec, v: f64) -> Complex64 {
    Complex64::new(dist.delta, v + dist.omega0)
}

/// Diagonal entries c(v) = 2 (Delta + i (v + Omega)) = 1/g(iv), one per
/// population. Their real part 2*Delta is strictly positive, which keeps the
/// diagonal invertible for every v.
pub(crate) fn diagonal_terms(dists: &[LorentzianSpec], v: f64) -> Vec<Complex64> {
    dists
        .iter()
        .map(|d| d.g_inverse(Complex64::new(0.0, v)))
        .collect()
}

/// All finite complex coupling scales `eta` at which some mode with marginal
/// frequency `v` sits exactly on the stability boundary, i.e. the roots of
/// det(eta * kbar - diag(c(v))) = 0 for the unit-scale complex coupling
/// `kbar`.
///
/// Since diag(c) is always invertible, the roots are eta = 1/mu over the
/// nonzero eigenvalues mu of diag(c)^(-1) * kbar; eigenvalues within
/// `1e-12 * ||A||` of zero are rank-deficiency artifacts and are dropped, so
/// the root count equals the rank-degree of the condition. Roots are sorted by
/// (re, im) for reproducibility.
pub fn dispersion_roots_at(
    kbar: &DMatrix<Complex64>,
    dists: &[LorentzianSpec],
    v: f64,
) -> Result<Vec<Complex64>, AnalyzerError> {
    let m = dists.len();
    if kbar.nrows() != m || kbar.ncols() != m {
        return Err(AnalyzerError::Dimension(format!(
            "coupling is {}x{} but {m} population(s) given",
            kbar.nrows(),
            kbar.ncols()
        )));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let c = diagonal_terms(dists, v);
    let mut a = kbar.clone();
    for s in 0..m {
        let inv = c[s].inv();
        for s2 in 0..m {
            a[(s, s2)] *= inv;
        }
    }
    let scale = a.norm();
    if scale == 0.0 {
        return Ok(Vec::new()); // zero coupling: no finite roots
    }
    let cut = ZERO_EIGENVALUE_CUT * scale;
    let mus: Vec<Complex64> = if m == 1 {
        vec![a[(0, 0)]]
    } else {
        let schur = a
            .try_schur(1e-14, 100_000)
            .ok_or(AnalyzerError::Eigensolver { v })?;
        let eigs = schur
            .eigenvalues()
            .ok_or(AnalyzerError::Eigensolver { v })?;
        eigs.iter().copied().collect()
    };
    let mut roots: Vec<Complex64> = mus
        .into_iter()
        .filter(|mu| mu.norm() > cut)
        .map(|mu| mu.inv())
        .collect();
    roots.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(roots)
}

/// Two-population special case, written out as the explicit quadratic
/// D eta^2 - 2 eta (b k00 + a k11) + 4 a b = 0 with a, b the populations'
/// marginal terms and D = det k. Kept formula-level (no linear algebra) as an
/// independent check on [`dispersion_roots_at`]; lag-free coupling only.
///
/// Returns both roots, the single root of the degenerate linear case D = 0,
/// or nothing when the condition has no finite root.
pub fn two_pop_quadratic_roots(
    k: &DMatrix<f64>,
    dists: &[LorentzianSpec],
    v: f64,
) -> Vec<Complex64> {
    assert_eq!(k.nrows(), 2, "quadratic form is specific to two populations");
    assert_eq!(k.ncols(), 2);
    assert_eq!(dists.len(), 2);
    let a = marginal_term(&dists[0], v);
    let b = marginal_term(&dists[1], v);
    let det = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(1, 0)];
    // Half the linear coefficient, negated: eta^2 det - 2 eta half + 4ab = 0.
    let half = b * k[(0, 0)] + a * k[(1, 1)];
    let product = 4.0 * a * b; // |a|, |b| >= Delta > 0, so never zero
    if det == 0.0 {
        if half.norm() == 0.0 {
            return Vec::new(); // condition degenerates to a constant
        }
        return vec![product / (2.0 * half)];
    }
    let sqrt_disc = (half * half - det * product).sqrt();
    // Pick the sign that avoids cancellation, then use the root product.
    let q = if (half.conj() * sqrt_disc).re >= 0.0 {
        half + sqrt_disc
    } else {
        half - sqrt_disc
    };
    let r1 = q / det;
    let r2 = product / q;
    vec![r1, r2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lorentz(omega0: f64, delta: f64) -> LorentzianSpec {
        LorentzianSpec { omega0, delta }
    }

    fn real_kbar(rows: &[&[f64]]) -> DMatrix<Complex64> {
        let m = rows.len();
        DMatrix::from_fn(m, m, |i, j| Complex64::new(rows[i][j], 0.0))
    }

    #[test]
    fn marginal_term_and_diagonal_agree() {
        let d = lorentz(2.0, 1.0);
        let v = -1.0;
        let a = marginal_term(&d, v);
        assert_eq!(a, Complex64::new(1.0, 1.0));
        assert_eq!(diagonal_terms(&[d], v)[0], 2.0 * a);
    }

    #[test]
    fn single_population_root_is_diagonal_over_coupling() {
        let dists = [lorentz(2.0, 1.0)];
        let kbar = real_kbar(&[&[2.0]]);
        let roots = dispersion_roots_at(&kbar, &dists, -2.0).unwrap();
        assert_eq!(roots.len(), 1);
        // c(-2) = 2, k = 2, so eta = 1 exactly.
        assert_relative_eq!(roots[0].re, 1.0, max_relative = 1e-14);
        assert_relative_eq!(roots[0].im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_coupling_has_no_finite_roots() {
        let dists = [lorentz(0.0, 1.0), lorentz(1.0, 0.5)];
        let kbar = real_kbar(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!(dispersion_roots_at(&kbar, &dists, 0.3).unwrap().is_empty());
    }

    #[test]
    fn rank_deficient_coupling_drops_the_infinite_root() {
        // det k = 0 leaves a degree-one condition: exactly one finite root.
        let dists = [lorentz(0.0, 1.0), lorentz(0.0, 1.0)];
        let kbar = real_kbar(&[&[3.0, 1.5], &[2.0, 1.0]]);
        let roots = dispersion_roots_at(&kbar, &dists, 0.0).unwrap();
        assert_eq!(roots.len(), 1, "singular coupling keeps one finite root");
        // At v = -Omega = 0 the root is 2 Delta / trace = 1/2.
        assert_relative_eq!(roots[0].re, 0.5, max_relative = 1e-12);
        assert_relative_eq!(roots[0].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn resonant_roots_match_trace_determinant_closed_form() {
        // Identical populations at v = -Omega reduce to det(eta k - 2 Delta I),
        // so eta = 2 Delta (T ± sqrt(T^2 - 4D)) / (2D); here the discriminant
        // is negative and the roots form a conjugate pair.
        let dists = [lorentz(2.0, 1.0), lorentz(2.0, 1.0)];
        let kbar = real_kbar(&[&[3.0, 1.0], &[-3.5, -0.5]]);
        let roots = dispersion_roots_at(&kbar, &dists, -2.0).unwrap();
        let (t, d) = (2.5_f64, 2.0_f64);
        let s = (4.0 * d - t * t).sqrt();
        let expect = Complex64::new(t / d, -s / d);
        assert_eq!(roots.len(), 2);
        for r in &roots {
            assert!(
                (r - expect).norm() < 1e-12 || (r - expect.conj()).norm() < 1e-12,
                "root {r} should be {expect} or its conjugate"
            );
        }
    }

    #[test]
    fn quadratic_roots_match_eigenvalue_route() {
        // Heterogeneous two-population system; compare the two independent
        // computations at several marginal frequencies.
        let dists = [lorentz(2.0, 1.0), lorentz(4.0, 0.5)];
        let k = DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, 1.0, 2.0]);
        let kbar = DMatrix::from_fn(2, 2, |i, j| Complex64::new(k[(i, j)], 0.0));
        for &v in &[-6.0, -4.024, -2.0, -1.722, 0.0, 1.5] {
            let mut quad = two_pop_quadratic_roots(&k, &dists, v);
            let mut eig = dispersion_roots_at(&kbar, &dists, v).unwrap();
            quad.sort_by(|x, y| x.re.total_cmp(&y.re));
            eig.sort_by(|x, y| x.re.total_cmp(&y.re));
            assert_eq!(quad.len(), 2);
            assert_eq!(eig.len(), 2);
            for (q, e) in quad.iter().zip(eig.iter()) {
                assert!(
                    (q - e).norm() < 1e-10 * q.norm().max(1.0),
                    "v = {v}: quadratic {q} vs eigenvalue {e}"
                );
            }
        }
    }

    #[test]
    fn quadratic_linear_degenerate_case_matches_eigenvalue_route() {
        let dists = [lorentz(2.0, 1.0), lorentz(4.0, 0.5)];
        let k = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, -3.5, -7.0 / 6.0]);
        let kbar = DMatrix::from_fn(2, 2, |i, j| Complex64::new(k[(i, j)], 0.0));
        let det = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(1, 0)];
        assert_eq!(det, 0.0, "engineered determinant must vanish exactly");
        for &v in &[-3.0, -1.0, 2.0] {
            let quad = two_pop_quadratic_roots(&k, &dists, v);
            let eig = dispersion_roots_at(&kbar, &dists, v).unwrap();
            assert_eq!(quad.len(), 1);
            assert_eq!(eig.len(), 1);
            assert!(
                (quad[0] - eig[0]).norm() < 1e-10 * quad[0].norm().max(1.0),
                "v = {v}: linear root {} vs eigenvalue {}",
                quad[0],
                eig[0]
            );
        }
    }
}
