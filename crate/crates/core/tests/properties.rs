//! Invariants checked on randomly generated metrics, twists and functions.

use std::f64::consts::PI;

use proptest::prelude::*;
use twistflow::entropy::{constant_test_value, constraint_defect, minimize_w, w_functional};
use twistflow::flow::{run, step_normalized, FlowMode, FlowState, RunOptions};
use twistflow::geometry::{
    core_sup_abs, diameter, grad_sq, integrate_with_tails, laplacian, scalar_curvature, trace_twist, translate,
    validate_class, MetricProfile, Normalization, TwistProfile,
};
use twistflow::mabuchi::{mabuchi_energy_path, PotentialPath};
use twistflow::monitors::monitor_series;
use twistflow::numerics::{Field, Grid};
use twistflow::potential::{c_constant, check_weighted_poincare, gradient_energy, solve_ricci_potential};

const MAX_CURVATURE: f64 = 100.0;

fn grid() -> Grid {
    Grid::new(10.0, 801).unwrap()
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

#[derive(Debug, Clone)]
struct Case {
    metric: MetricProfile,
    twist: TwistProfile,
}

prop_compose! {
    fn bumps()(a in proptest::collection::vec((-0.08..0.08f64, -1.5..1.5f64, 0.7..1.5f64), 2)) -> Vec<(f64, f64, f64)> {
        a
    }
}

fn potential(g: Grid, bumps: &[(f64, f64, f64)]) -> Field {
    Field::from_fn(g, |x| bumps.iter().map(|(a, c, w)| a * (-(x - c) * (x - c) / (w * w)).exp()).sum())
}

/// A twist `ε sech²x (1 + b tanh x sech x)` and a metric in its class, with
/// bounded curvature.
fn case() -> impl Strategy<Value = Case> {
    (prop_oneof![Just(0.0), 0.05..0.4f64], -0.5..0.5f64, bumps()).prop_filter_map("unresolved metric", |(eps, b, bumps)| {
        let g = grid();
        let twist = TwistProfile::new(Field::from_fn(g, |x| eps * sech2(x) * (1.0 + b * x.tanh() / x.cosh()))).ok()?;
        let metric = MetricProfile::scaled_fubini_study(g, 1.0 - eps).with_potential(&potential(g, &bumps)).ok()?;
        (scalar_curvature(&metric).sup_abs() <= MAX_CURVATURE).then_some(Case { metric, twist })
    })
}

fn function() -> impl Strategy<Value = Field> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.5..2.0f64)
        .prop_map(|(a, b, c, w)| Field::from_fn(grid(), move |x| a * x.tanh() + b * (-(x - c) * (x - c) / (w * w)).exp()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn riemannian_quantities_are_twice_complex(c in case(), f in function()) {
        let m = &c.metric;
        let pairs = [
            (laplacian(m, &f, Normalization::Complex), laplacian(m, &f, Normalization::Riemannian)),
            (grad_sq(m, &f, Normalization::Complex), grad_sq(m, &f, Normalization::Riemannian)),
            (trace_twist(m, &c.twist, Normalization::Complex), trace_twist(m, &c.twist, Normalization::Riemannian)),
        ];
        for (cx, rm) in pairs {
            for (a, b) in cx.values().iter().zip(rm.values()) {
                prop_assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gauss_bonnet(c in case()) {
        let r = scalar_curvature(&c.metric);
        let total = c.metric.integrate_dm(r.values());
        prop_assert!((total - 4.0 * PI).abs() < 1e-6, "∫R dm = {total}");
    }

    #[test]
    fn potentials_keep_the_class(c in case()) {
        validate_class(&c.metric, &c.twist).unwrap();
        let l = integrate_with_tails(c.metric.h().values(), grid().spacing());
        prop_assert!((l + c.twist.mass() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn ricci_potential_solves_its_equation(c in case()) {
        let p = solve_ricci_potential(&c.metric, &c.twist).unwrap();
        let m = &c.metric;
        let lap = laplacian(m, &p.u, Normalization::Complex);
        let tr = trace_twist(m, &c.twist, Normalization::Complex);
        let r = scalar_curvature(m);
        let defect = lap.zip_map(&tr.zip_map(&r, |t, r| 1.0 + t - r), |a, b| a - b);
        // discretization error grows with the curvature on this coarse grid
        let bound = 1e-6 * (1.0 + r.sup_abs());
        prop_assert!(core_sup_abs(m, &defect) < bound, "defect {:e}, sup|R| {:e}", core_sup_abs(m, &defect), r.sup_abs());
        let e: Vec<f64> = p.u.values().iter().map(|u| (-u).exp()).collect();
        prop_assert!((m.integrate_dm(&e) / m.volume() - 1.0).abs() < 1e-12);
        prop_assert!(c_constant(m, &p) <= 1e-12);
    }

    #[test]
    fn weighted_poincare_holds(c in case(), f in function()) {
        let p = solve_ricci_potential(&c.metric, &c.twist).unwrap();
        prop_assert!(check_weighted_poincare(&c.metric, &p, &f) >= -1e-9);
    }

    #[test]
    fn entropy_is_scale_invariant(c in case(), f in function(), scale in 0.2..5.0f64, tau in 0.1..2.0f64) {
        let a = w_functional(&c.metric, &c.twist, &f, tau);
        let b = w_functional(&c.metric.scaled(scale), &c.twist, &f, scale * tau);
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        let da = constraint_defect(&c.metric, &f, tau);
        let db = constraint_defect(&c.metric.scaled(scale), &f, scale * tau);
        prop_assert!((da - db).abs() <= 1e-10 * (1.0 + da.abs()));
    }

    #[test]
    fn diameter_scales_with_the_square_root(c in case(), scale in 0.2..5.0f64) {
        let d = diameter(&c.metric);
        prop_assert!((diameter(&c.metric.scaled(scale)) - scale.sqrt() * d).abs() < 1e-10 * d);
    }

    #[test]
    fn translation_is_an_isometry(bumps in bumps(), shift in -1.0..1.0f64) {
        let g = grid();
        let m = MetricProfile::fubini_study(g).with_potential(&potential(g, &bumps));
        prop_assume!(m.is_ok());
        let m = m.unwrap();
        let moved = translate(&m, shift);
        prop_assert!((moved.volume() - m.volume()).abs() < 1e-8);
        prop_assert!((diameter(&moved) - diameter(&m)).abs() < 1e-6);
    }

    #[test]
    fn normalized_step_preserves_volume_and_dissipates(c in case()) {
        let s = FlowState::new(c.metric.clone(), c.twist.clone(), FlowMode::Normalized).unwrap();
        let next = step_normalized(&s, 0.01).unwrap();
        prop_assert!((next.metric.volume() - s.metric.volume()).abs() < 1e-10);
        prop_assert!(next.mabuchi <= s.mabuchi);
        let (y0, y1) = (
            gradient_energy(&s.metric, s.potential.as_ref().unwrap()),
            gradient_energy(&next.metric, next.potential.as_ref().unwrap()),
        );
        prop_assert!(y1 <= y0 * (1.0 + 1e-9) + 1e-14, "Y rose from {y0} to {y1}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn mu_is_below_the_constant_test_value(c in case()) {
        let r = minimize_w(&c.metric, &c.twist, 0.5, 2e-10).unwrap();
        prop_assert!(r.mu <= constant_test_value(&c.metric, &c.twist) + 1e-9);
        prop_assert!(r.constraint_residual < 1e-8);
    }

    #[test]
    fn mu_is_scale_invariant(c in case(), scale in 0.5..2.0f64) {
        let a = minimize_w(&c.metric, &c.twist, 0.5, 2e-10).unwrap().mu;
        let b = minimize_w(&c.metric.scaled(scale), &c.twist, 0.5 * scale, 2e-10).unwrap().mu;
        prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn mabuchi_energy_is_path_independent(bumps in bumps(), eps in 0.0..0.4f64) {
        let g = grid();
        let t = TwistProfile::sech2(g, eps).unwrap_or_else(|_| TwistProfile::zero(g));
        let base = MetricProfile::scaled_fubini_study(g, 1.0 - t.mass() / 2.0);
        let end = potential(g, &bumps);
        prop_assume!(base.with_potential(&end).is_ok() && base.with_potential(&end.map(|p| 0.5 * p)).is_ok());
        // 65 σ-nodes: the quadratic path bends enough that 33 leave a
        // quadrature error near 1e-6
        let lin = PotentialPath::linear(base.clone(), t.clone(), &end, 65).unwrap();
        let Ok(quad) = PotentialPath::from_fn(base, t, 65, |s| end.map(|p| s * s * p)) else {
            return Ok(());
        };
        let (a, b) = (mabuchi_energy_path(&lin).unwrap(), mabuchi_energy_path(&quad).unwrap());
        prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn monitors_are_consistent(c in case()) {
        let s = FlowState::new(c.metric.clone(), c.twist.clone(), FlowMode::Normalized).unwrap();
        let traj = run(s, 0.1, 0.01, &RunOptions { sample_stride: 5, ..RunOptions::default() }).unwrap();
        let series = monitor_series(&traj, false, None).unwrap();
        for (k, m) in series.samples.iter().enumerate() {
            let st = &traj.states[k];
            prop_assert!(m.osc_u >= 0.0 && m.sup_u >= 0.0 && m.c <= 1e-12);
            prop_assert!((m.volume - st.metric.volume()).abs() == 0.0);
            prop_assert!((m.mabuchi - st.mabuchi).abs() == 0.0);
        }
        // the Mabuchi energy never increases along the flow
        prop_assert!(series.samples.windows(2).all(|w| w[1].mabuchi <= w[0].mabuchi));
    }
}
