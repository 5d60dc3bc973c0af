//! The affine group G_A = ℝ^d ⋊_A ℝ and analysis on it: wavelet
//! transforms, Peetre-type norms of coefficient arrays, translation bounds,
//! control weights and local maximal functions.

mod grid;
mod maximal;
mod point;
mod pti;
mod wavelet;
mod weights;

pub use grid::{GroupArray, GroupGrid};
pub use maximal::{local_maximal, wiener_amalgam_norm, MaximalArray, Neighborhood, Side};
pub use point::{Group, GroupPoint};
pub use pti::{pti_norm, right_translate, translation_bound_check, translation_bounds, PtiStacks, TranslationReport, TRANSLATION_SLACK};
pub use wavelet::{
    group_convolve_with_cross, isometry_check, profile_field, reproducing_check, wavelet_support, wavelet_transform,
    IsometryReport, ReproducingReport, WaveletField,
};
pub use weights::{
    envelope_compare, sample_group_point, theta, weight_v, ControlWeight, EnvelopeReport, EnvelopeSpec, VSampler,
};

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;
    use crate::analyzers::{make_admissible, SpectralProfile};
    use crate::expansive::{ExpansiveMatrix, QuasiNormStructure};
    use crate::field::{FrequencyGrid, GridSpec};
    use crate::suite::AtomField;

    fn line() -> (Group, FrequencyGrid, QuasiNormStructure) {
        let a = ExpansiveMatrix::diagonal(&[2.0]).unwrap();
        let fg = FrequencyGrid::for_matrix(GridSpec::new(1, 16.0, 256).unwrap(), &a).unwrap();
        (Group::new(&a).unwrap(), fg, QuasiNormStructure::new(&a).unwrap())
    }

    #[test]
    fn group_law_examples() {
        let (g, _, _) = line();
        let p = g.mul(&GroupPoint::new(vec![1.0], 1.0), &GroupPoint::new(vec![1.0], 0.0));
        assert_eq!(p, GroupPoint::new(vec![3.0], 1.0));
        let i = g.inv(&GroupPoint::new(vec![1.0], 1.0));
        assert!((i.x[0] + 0.5).abs() < 1e-15 && i.s == -1.0);
        assert_eq!(g.modular(&GroupPoint::new(vec![0.0], 1.0)), 0.5);
    }

    #[test]
    fn theta_cases() {
        assert_eq!(theta([2.0, 3.0], 1.0), 2.0);
        assert!((theta([2.0, 3.0], -1.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sigma_at_infinity() {
        let cw = ControlWeight::new(2.0, 0.5, 2.0, f64::INFINITY).unwrap();
        assert!((cw.sigma[0] - 2f64.powf(1.5)).abs() < 1e-12);
        assert!((cw.sigma[1] - 2f64.powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn wavelet_of_itself_at_identity_is_energy() {
        let (_, fg, _) = line();
        let adm = make_admissible(SpectralProfile::bump(0.0, 2.0).unwrap(), 1.0 / 64.0).unwrap();
        let psi = profile_field(&fg, &adm.psi).unwrap();
        let gg = GroupGrid::new(*fg.spec(), 0.0, 0.125, 1).unwrap();
        let w = wavelet_transform(&fg, &psi, &adm, &gg).unwrap();
        let centre = fg.spec().grid_index_of(&[0.0], 1e-9).unwrap();
        let e = psi.l2_norm().powi(2);
        assert!((w.array.slices[0][centre].re - e).abs() < 1e-10 * e);
    }

    #[test]
    fn isometry_and_reproduction() {
        let (_, fg, _) = line();
        let adm = make_admissible(SpectralProfile::bump(0.0, 2.0).unwrap(), 1.0 / 64.0).unwrap();
        let gen = SpectralProfile::bump(0.0, 1.5).unwrap();
        let f = AtomField::single(gen, GroupPoint::new(vec![0.5], 0.5)).sample(&fg).unwrap();
        let (lo, hi) = wavelet_support(&adm.psi, -0.5, 1.0);
        let gg = GroupGrid::covering(*fg.spec(), lo, hi, 0.125).unwrap();
        let w = wavelet_transform(&fg, &f, &adm, &gg).unwrap();
        assert!(isometry_check(&fg, &f, &w).relative_error < 1e-2);
        let rep = reproducing_check(&fg, &f, &adm, &adm, &gg).unwrap();
        assert!(rep.relative_l2 < 0.05, "{rep:?}");
    }

    #[test]
    fn covariance_under_grid_translation() {
        let (g, fg, _) = line();
        let adm = make_admissible(SpectralProfile::bump(0.0, 2.0).unwrap(), 1.0 / 64.0).unwrap();
        let gen = SpectralProfile::bump(0.0, 1.5).unwrap();
        let atoms = AtomField::single(gen, GroupPoint::new(vec![0.0], 0.5));
        let gg = GroupGrid::covering(*fg.spec(), -2.0, 2.0, 0.25).unwrap();
        let shift = GroupPoint::new(vec![fg.spec().step() * 5.0], 0.0);
        let a = wavelet_transform(&fg, &atoms.sample(&fg).unwrap(), &adm, &gg).unwrap().array;
        let b = wavelet_transform(&fg, &atoms.translate(&g, &shift).sample(&fg).unwrap(), &adm, &gg).unwrap().array;
        for (sa, sb) in a.slices.iter().zip(&b.slices) {
            for k in 0..sa.len() {
                let src = (k + sa.len() - 5) % sa.len();
                assert!((sb[k] - sa[src]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn haar_measure_is_left_invariant() {
        let (g, fg, _) = line();
        let gg = GroupGrid::covering(*fg.spec(), -3.0, 3.0, 1.0 / 32.0).unwrap();
        let bump = |s: f64| crate::analyzers::bump(s, -1.5, 1.5);
        let f = |p: &GroupPoint| (-p.x[0] * p.x[0]).exp() * bump(p.s);
        let h = GroupPoint::new(vec![0.3], 0.4);
        let hi = g.inv(&h);
        let a = gg.integrate(2.0, f);
        let b = gg.integrate(2.0, |p| f(&g.mul(&hi, p)));
        assert!((a - b).abs() < 1e-8 * a, "{a} {b}");
    }

    #[test]
    fn left_maximal_dominates_and_commutes_with_translation() {
        let (g, fg, _) = line();
        let gg = GroupGrid::covering(*fg.spec(), -1.0, 1.0, 0.25).unwrap();
        let arr = GroupArray::from_fn(gg, |p| Complex64::new((-(p.x[0] - p.s).powi(2)).exp(), 0.0));
        let q = Neighborhood { a: 0.5, b: 0.25 };
        let m = local_maximal(&g, &arr, &q, Side::Left).unwrap();
        let two = local_maximal(&g, &arr, &q, Side::Two).unwrap();
        for i in 0..gg.count {
            for k in 0..gg.spatial.len() {
                assert!(m.slices[i][k] >= arr.slices[i][k].norm());
                assert!(two.slices[i][k] >= m.slices[i][k]);
            }
        }
        let n = gg.spatial.len();
        let shifted = GroupArray { grid: gg, slices: arr.slices.iter().map(|s| (0..n).map(|k| s[(k + n - 3) % n]).collect()).collect() };
        let ms = local_maximal(&g, &shifted, &q, Side::Left).unwrap();
        for i in 0..gg.count {
            for k in 0..n {
                assert_eq!(ms.slices[i][k], m.slices[i][(k + n - 3) % n]);
            }
        }
    }

    #[test]
    fn control_weight_symmetry_and_floor() {
        let (g, _, qn) = line();
        let sampler = VSampler::new(&qn, 8, 16, 3).unwrap();
        assert_eq!(weight_v(&qn, &g, &sampler, &[0.0], 0.0).0, 1.0);
        let cw = ControlWeight::new(2.0, 0.3, 1.5, 2.0).unwrap();
        for p in [GroupPoint::new(vec![0.7], 1.3), GroupPoint::new(vec![-4.0], -2.2)] {
            assert!(cw.symmetry_defect(&qn, &g, &sampler, &p) < 1e-9);
            assert!(cw.eval(&qn, &g, &sampler, &p) >= 1.0);
        }
    }
}
