use std::sync::OnceLock;

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use tlinf_core::analyzers::{default_profile, make_admissible, make_analyzing_pair, SpectralProfile};
use tlinf_core::experiment::ExperimentConfig;
use tlinf_core::field::{FrequencyGrid, GridSpec, SampledField};
use tlinf_core::frames::{frame_bounds, sample_index_set, FrameOperator, IndexKind};
use tlinf_core::group::{
    weight_v, ControlWeight, Group, GroupArray, GroupGrid, GroupPoint, Neighborhood, PtiStacks, VSampler,
};
use tlinf_core::norms::{window_plans, NormContext, NormParams};
use tlinf_core::peetre::PeetreStack;
use tlinf_core::suite::{Atom, AtomField};
use tlinf_core::{ExpansiveMatrix, QuasiNormStructure};

fn matrix(k: usize) -> ExpansiveMatrix {
    match k % 4 {
        0 => ExpansiveMatrix::diagonal(&[2.0, 2.0]),
        1 => ExpansiveMatrix::from_rows(2, &[2.0, 1.0, 0.0, 2.0]),
        2 => ExpansiveMatrix::diagonal(&[2.0, 4.0]),
        _ => ExpansiveMatrix::from_rows(2, &[1.0, -1.0, 1.0, 1.0]),
    }
    .unwrap()
}

fn apply(m: &nalgebra::DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).iter().cloned().collect()
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, 2), -2.0f64..2.0).prop_map(|(x, e)| x.iter().map(|v| v * 10f64.powf(e)).collect())
}

fn group_point() -> impl Strategy<Value = GroupPoint> {
    (prop::collection::vec(-3.0f64..3.0, 2), -2.0f64..2.0).prop_map(|(x, s)| GroupPoint::new(x, s))
}

struct Plane {
    fgrid: FrequencyGrid,
    qn: QuasiNormStructure,
}

fn plane() -> &'static Plane {
    static P: OnceLock<Plane> = OnceLock::new();
    P.get_or_init(|| {
        let a = matrix(0);
        Plane {
            fgrid: FrequencyGrid::for_matrix(GridSpec::new(2, 8.0, 64).unwrap(), &a).unwrap(),
            qn: QuasiNormStructure::new(&a).unwrap(),
        }
    })
}

fn atoms() -> impl Strategy<Value = AtomField> {
    prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5, 0.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..4).prop_map(|v| AtomField {
        generator: SpectralProfile::bump(0.0, 1.0).unwrap(),
        atoms: v
            .into_iter()
            .map(|(x, y, s, re, im)| Atom { coef: Complex64::new(re, im), at: GroupPoint::new(vec![x, y], s) })
            .collect(),
    })
}

fn sampled(f: &AtomField) -> SampledField {
    f.sample(&plane().fgrid).unwrap()
}

fn exponent() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.5, 1.0, 2.0, f64::INFINITY])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quasi_norm_is_homogeneous_and_symmetric(k in 0usize..4, x in point()) {
        let a = matrix(k);
        let qn = QuasiNormStructure::new(&a).unwrap();
        let r = qn.quasi_norm(&x);
        prop_assert_eq!(qn.quasi_norm(&apply(a.entries(), &x)), a.abs_det() * r);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert_eq!(qn.quasi_norm(&neg), r);
    }

    #[test]
    fn fractional_powers_form_a_semigroup(k in 0usize..4, s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let g = Group::new(&matrix(k)).unwrap();
        let st = g.power(s + t);
        let err = (g.power(s) * g.power(t) - &st).norm();
        prop_assert!(err <= 1e-8 * st.norm(), "{err}");
    }

    #[test]
    fn group_axioms(k in 0usize..4, g in group_point(), h in group_point(), u in group_point()) {
        let grp = Group::new(&matrix(k)).unwrap();
        let close = |p: &GroupPoint, q: &GroupPoint| {
            let scale = 1.0 + p.x.iter().chain(&q.x).fold(0.0f64, |m, v| m.max(v.abs()));
            (p.s - q.s).abs() <= 1e-12 && p.x.iter().zip(&q.x).all(|(a, b)| (a - b).abs() <= 1e-12 * scale)
        };
        let left = grp.mul(&grp.mul(&g, &h), &u);
        let right = grp.mul(&g, &grp.mul(&h, &u));
        prop_assert!(close(&left, &right), "{left:?} {right:?}");
        let e = GroupPoint::identity(2);
        prop_assert!(close(&grp.mul(&g, &grp.inv(&g)), &e));
        prop_assert!(close(&grp.mul(&grp.inv(&g), &g), &e));
        let m = grp.modular(&grp.mul(&g, &h)) / (grp.modular(&g) * grp.modular(&h));
        prop_assert!((m - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn calderon_pair_partitions_unity(lo in -1.0f64..0.5, width in 2.0f64..3.0, t in -4.0f64..4.0) {
        let pair = make_analyzing_pair(&plane().fgrid, SpectralProfile::bump(lo, lo + width).unwrap()).unwrap();
        let sum: f64 = (-12..=12).map(|k| pair.phi.at_level(t + k as f64) * pair.psi.at_level(t + k as f64)).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "{sum}");
    }

    #[test]
    fn profiles_vanish_off_their_shell(lo in -2.0f64..2.0, width in 0.5f64..3.0, t in -6.0f64..6.0) {
        let p = SpectralProfile::bump(lo, lo + width).unwrap();
        if t <= lo || t >= lo + width {
            prop_assert_eq!(p.at_level(t), 0.0);
        } else {
            prop_assert!(p.at_level(t) > 0.0);
        }
    }

    #[test]
    fn control_weight_is_symmetric(alpha in -2.0f64..2.0, q in exponent(), g in group_point()) {
        let p = plane();
        let group = Group::new(p.qn.matrix()).unwrap();
        let sampler = VSampler::new(&p.qn, 4, 8, 3).unwrap();
        let beta = NormParams::default_beta(q);
        let cw = ControlWeight::new(p.qn.abs_det(), alpha, beta, q).unwrap();
        prop_assert!(cw.symmetry_defect(&p.qn, &group, &sampler, &g) <= 1e-9);
        let (v, _) = weight_v(&p.qn, &group, &sampler, &g.x, g.s);
        prop_assert!(v >= 1.0);
    }

    #[test]
    fn config_overrides_round_trip(alpha in -3.0f64..3.0, n in 3u32..8, label in "[a-z]{1,8}") {
        let sets = vec![
            format!("norm.alpha={alpha}"),
            format!("grid.n={}", 1usize << n),
            format!("label={label}"),
        ];
        let cfg = ExperimentConfig::default().with_overrides(&sets).unwrap();
        prop_assert_eq!(cfg.norm.alpha, alpha);
        prop_assert_eq!(cfg.grid.n, 1usize << n);
        prop_assert_eq!(&cfg.label, &label);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bank_is_linear_in_the_field(f in atoms(), g in atoms(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let p = plane();
        let (sf, sg) = (sampled(&f), sampled(&g));
        let c = Complex64::new(re, im);
        let direct = sampled(&f.scaled(c).sum(&g).unwrap());
        let combined = sf.combine(c, &sg, Complex64::new(1.0, 0.0));
        let scale = combined.l2_norm().max(1e-300);
        let err = direct.combine(Complex64::new(1.0, 0.0), &combined, Complex64::new(-1.0, 0.0)).l2_norm();
        prop_assert!(err <= 1e-10 * scale, "{err}");
        let ctx = NormContext::new(&p.fgrid, &p.qn, default_profile(), NormParams::default()).unwrap();
        let (bd, bc) = (ctx.bank(&direct).unwrap(), ctx.bank(&combined).unwrap());
        let top = bc.magnitudes.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
        for (x, y) in bd.magnitudes.iter().flatten().zip(bc.magnitudes.iter().flatten()) {
            prop_assert!((x - y).abs() <= 1e-10 * top.max(1e-300));
        }
    }

    #[test]
    fn peetre_dominates_and_decreases_in_beta(f in atoms(), b1 in 0.6f64..4.0, db in 0.0f64..3.0, s in 0.0f64..1.5) {
        let p = plane();
        let band = tlinf_core::field::convolve_scale(&p.fgrid, &sampled(&f), &default_profile(), s).unwrap();
        let mags = band.magnitudes();
        let stack = PeetreStack::new(p.fgrid.spec(), &p.qn, mags.clone(), s, 3).unwrap();
        let lo = stack.evaluate(b1);
        let hi = stack.evaluate(b1 + db);
        for ((m, a), b) in mags.iter().zip(&lo.values).zip(&hi.values) {
            prop_assert!(a >= m && b >= m);
            prop_assert!(b <= a);
        }
    }

    #[test]
    fn tl_norm_is_homogeneous(f in atoms(), q in exponent(), alpha in -1.0f64..1.0, re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let p = plane();
        let ctx = NormContext::new(&p.fgrid, &p.qn, default_profile(), NormParams::default()).unwrap();
        let sf = sampled(&f);
        let c = Complex64::new(re, im);
        let a = ctx.tl(&ctx.bank(&sf).unwrap(), alpha, q).value;
        let b = ctx.tl(&ctx.bank(&sf.scaled(c)).unwrap(), alpha, q).value;
        prop_assert!((b - c.norm() * a).abs() <= 1e-12 * b.max(1e-300), "{a} {b}");
    }

    #[test]
    fn tl_norm_is_an_r_quasi_norm(f in atoms(), g in atoms(), q in exponent(), alpha in -1.0f64..1.0) {
        let p = plane();
        let ctx = NormContext::new(&p.fgrid, &p.qn, default_profile(), NormParams::default()).unwrap();
        let (sf, sg) = (sampled(&f), sampled(&g));
        let one = Complex64::new(1.0, 0.0);
        let norm = |h: &SampledField| ctx.tl(&ctx.bank(h).unwrap(), alpha, q).value;
        let r = q.min(1.0);
        let (a, b, s) = (norm(&sf), norm(&sg), norm(&sf.combine(one, &sg, one)));
        prop_assert!(s.powf(r) <= a.powf(r) + b.powf(r) + 1e-10, "{s} {a} {b}");
    }

    #[test]
    fn more_windows_never_lower_the_norm(f in atoms(), q in exponent(), alpha in -1.0f64..1.0) {
        let p = plane();
        let sf = sampled(&f);
        let narrow = NormParams { ell_min: 0, ell_max: 1, ..Default::default() };
        let wide = NormParams { ell_min: -1, ell_max: 2, ..Default::default() };
        let cn = NormContext::new(&p.fgrid, &p.qn, default_profile(), narrow).unwrap();
        let cw = NormContext::new(&p.fgrid, &p.qn, default_profile(), wide).unwrap();
        let bank = cn.bank(&sf).unwrap();
        prop_assert!(cw.tl(&bank, alpha, q).value >= cn.tl(&bank, alpha, q).value);
    }

    #[test]
    fn besov_dominates_tl_infinity(f in atoms(), alpha in -1.0f64..1.0) {
        let p = plane();
        let params = NormParams { alpha, q: f64::INFINITY, ..Default::default() };
        let ctx = NormContext::new(&p.fgrid, &p.qn, default_profile(), params).unwrap();
        let sf = sampled(&f);
        let tl = ctx.tl_norm_inf(&sf).unwrap().value;
        let besov = ctx.besov_norm(&sf).unwrap().value;
        prop_assert!(tl <= besov * (1.0 + 1e-12), "{tl} {besov}");
    }

    #[test]
    fn pti_norm_is_an_r_quasi_norm(
        c1 in prop::collection::vec(-1.0f64..1.0, 6),
        c2 in prop::collection::vec(-1.0f64..1.0, 6),
        q in exponent(),
        alpha in -1.0f64..1.0,
    ) {
        let p = plane();
        let spatial = *p.fgrid.spec();
        let grid = GroupGrid::new(spatial, -1.0, 0.5, 6).unwrap();
        let bump = |c: &[f64]| {
            let c = c.to_vec();
            move |g: &GroupPoint| {
                let i = ((g.s + 1.0) / 0.5).round() as usize;
                let r2: f64 = g.x.iter().map(|v| v * v).sum();
                Complex64::new(c[i] * (-r2 / (1.0 + c[(i + 1) % 6].abs())).exp(), 0.0)
            }
        };
        let f = GroupArray::from_fn(grid, bump(&c1));
        let g = GroupArray::from_fn(grid, bump(&c2));
        let one = Complex64::new(1.0, 0.0);
        let sum = f.combine(one, &g, one).unwrap();
        let params = NormParams::default();
        let plans = window_plans(&spatial, &p.qn, &params).unwrap();
        let beta = NormParams::default_beta(q);
        let norm = |h: &GroupArray| PtiStacks::new(&p.qn, h, 3).unwrap().norm(&spatial, p.qn.abs_det(), &plans, alpha, beta, q).value;
        let r = q.min(1.0);
        let (a, b, s) = (norm(&f), norm(&g), norm(&sum));
        prop_assert!(s.powf(r) <= a.powf(r) + b.powf(r) + 1e-10, "{s} {a} {b}");
    }
}

struct Frame {
    fgrid: FrequencyGrid,
    op: FrameOperator,
}

fn frame() -> &'static Frame {
    static F: OnceLock<Frame> = OnceLock::new();
    F.get_or_init(|| {
        let a = ExpansiveMatrix::diagonal(&[2.0]).unwrap();
        let fgrid = FrequencyGrid::for_matrix(GridSpec::new(1, 8.0, 256).unwrap(), &a).unwrap();
        let group = Group::new(&a).unwrap();
        let psi = make_admissible(SpectralProfile::bump(0.0, 2.0).unwrap(), 1.0 / 64.0).unwrap();
        let dom = GroupGrid::covering(*fgrid.spec(), -1.5, 3.0, 0.125).unwrap();
        let set = sample_index_set(&group, &dom, &Neighborhood::default(), IndexKind::Covering, 8.0).unwrap();
        let op = FrameOperator::new(&fgrid, &psi, &set.gamma).unwrap();
        Frame { fgrid, op }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn frame_energy_is_sandwiched(x in -2.0f64..2.0, s in 0.0f64..1.0, y in -2.0f64..2.0, t in 0.0f64..1.0) {
        let fr = frame();
        let gen = SpectralProfile::bump(0.0, 1.5).unwrap();
        let fit = AtomField::single(gen, GroupPoint::new(vec![0.3], 0.5)).sample(&fr.fgrid).unwrap();
        let bounds = frame_bounds(&fr.op, std::slice::from_ref(&fit), 20, 1).unwrap();
        let held = AtomField::single(gen, GroupPoint::new(vec![x], s))
            .sum(&AtomField::single(gen, GroupPoint::new(vec![y], t)))
            .unwrap()
            .sample(&fr.fgrid)
            .unwrap();
        let energy: f64 = fr.op.analysis(&held).unwrap().iter().map(|c| c.norm_sqr()).sum();
        let n2 = held.l2_norm().powi(2);
        prop_assert!(energy >= bounds.a_lo * n2 * (1.0 - 1e-9), "{energy} {n2} {bounds:?}");
        prop_assert!(energy <= bounds.b_hi * n2 * (1.0 + 1e-9), "{energy} {n2} {bounds:?}");
    }
}
