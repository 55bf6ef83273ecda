//! The property suite behind `twistflow verify`: every property is a margin
//! against a limit, printed as one table row.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use twistflow::entropy::{constant_test_value, coupled_w_run, minimize_w};
use twistflow::flow::{rescaling_correspondence_check, run, FlowMode, FlowState, RunOptions};
use twistflow::geometry::{scalar_curvature, tensor_oracle_2d, MetricProfile, OracleOptions, TwistProfile};
use twistflow::mabuchi::{mabuchi_energy_path, PotentialPath};
use twistflow::monitors::{identity_residuals, monitor_report, semidiscrete_identity_residuals, MonitorOptions, BULK_FRACTION};
use twistflow::numerics::{refinement_orders, Field, Grid};
use twistflow::potential::{check_weighted_poincare, solve_ricci_potential};
use twistflow::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Run on the sign-flipped twist and check against the declared one.
    SignFlip,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub property: String,
    pub value: f64,
    pub limit: f64,
    /// Positive when the property holds.
    pub margin: f64,
    pub pass: bool,
}

impl Row {
    fn at_most(property: &str, value: f64, limit: f64) -> Self {
        Self { property: property.into(), value, limit, margin: limit - value, pass: value <= limit }
    }

    fn at_least(property: &str, value: f64, limit: f64) -> Self {
        Self { property: property.into(), value, limit, margin: value - limit, pass: value >= limit }
    }
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

fn random_twist(g: Grid, rng: &mut ChaCha8Rng) -> (f64, TwistProfile) {
    let eps = if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.05..0.4) };
    let b = rng.gen_range(-0.5..0.5);
    let a = Field::from_fn(g, |x| eps * sech2(x) * (1.0 + b * x.tanh() / x.cosh()));
    (eps, TwistProfile::new(a).expect("decaying nonnegative density"))
}

/// Bound on `|R|` for random metrics; deeper necks are not resolved on the
/// standard grid.
const MAX_CURVATURE: f64 = 100.0;

fn random_metric(g: Grid, eps: f64, rng: &mut ChaCha8Rng) -> MetricProfile {
    let round = MetricProfile::scaled_fubini_study(g, 1.0 - eps);
    loop {
        let bumps: Vec<(f64, f64, f64)> =
            (0..2).map(|_| (rng.gen_range(-0.08..0.08), rng.gen_range(-1.5..1.5), rng.gen_range(0.7..1.5))).collect();
        let phi = Field::from_fn(g, |x| bumps.iter().map(|(a, c, w)| a * (-(x - c) * (x - c) / (w * w)).exp()).sum());
        if let Ok(m) = round.with_potential(&phi) {
            if scalar_curvature(&m).sup_abs() <= MAX_CURVATURE {
                return m;
            }
        }
    }
}

fn random_function(g: Grid, rng: &mut ChaCha8Rng) -> Field {
    let (a, b, c, w) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0));
    Field::from_fn(g, move |x| a * x.tanh() + b * (-(x - c) * (x - c) / (w * w)).exp())
}

fn perturbed(g: Grid, eps: f64, amplitude: f64) -> Result<(MetricProfile, TwistProfile)> {
    let t = TwistProfile::sech2(g, eps)?;
    let m = MetricProfile::scaled_fubini_study(g, 1.0 - eps).with_potential(&Field::from_fn(g, |x| amplitude * (-x * x).exp()))?;
    Ok((m, t))
}

fn min_order(errors: &[f64]) -> f64 {
    errors.windows(2).map(|p| (p[0] / p[1]).log2()).fold(f64::INFINITY, f64::min)
}

struct Suite {
    seed: u64,
    quick: bool,
}

impl Suite {
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }

    fn oracle(&self) -> Result<Vec<Row>> {
        let opts = OracleOptions { stride: 1, ..OracleOptions::default() };
        let mut r = self.rng(1);
        let mut worst = 0.0f64;
        let g = Grid::standard();
        for _ in 0..if self.quick { 5 } else { 20 } {
            let (eps, t) = random_twist(g, &mut r);
            let m = random_metric(g, eps, &mut r);
            worst = worst.max(tensor_oracle_2d(&m, &t, &random_function(g, &mut r), opts)?.max_deviation());
        }
        let mut rows = vec![Row::at_most("tensor oracle deviation", worst, 1e-4)];
        if !self.quick {
            let mut order = f64::INFINITY;
            for stream in 100..103 {
                let errs = [251, 501, 1001]
                    .iter()
                    .map(|&n| {
                        let g = Grid::new(10.0, n)?;
                        let mut r = self.rng(stream);
                        let (eps, t) = random_twist(g, &mut r);
                        let m = random_metric(g, eps, &mut r);
                        Ok(tensor_oracle_2d(&m, &t, &random_function(g, &mut r), opts)?.max_deviation())
                    })
                    .collect::<Result<Vec<f64>>>()?;
                order = refinement_orders(&errs, 1e-7).into_iter().fold(order, f64::min);
            }
            rows.push(Row::at_least("tensor oracle order", order, 2.0));
        }
        Ok(rows)
    }

    fn identities(&self) -> Result<Vec<Row>> {
        let (m, t) = perturbed(Grid::standard(), 0.25, 0.05)?;
        let mut time = Vec::new();
        for dt in [0.02, 0.01, 0.005] {
            let s = FlowState::new(m.clone(), t.clone(), FlowMode::Normalized)?;
            let traj = run(s, 0.2 + dt, dt, &RunOptions { sample_stride: 1, ..RunOptions::default() })?;
            let k = traj.states.len();
            time.push(identity_residuals(&traj.states[k - 3], &traj.states[k - 2], &traj.states[k - 1])?);
        }
        let worst = |rs: &[twistflow::monitors::IdentityResiduals]| {
            min_order(&rs.iter().map(|r| r.u).collect::<Vec<_>>())
                .min(min_order(&rs.iter().map(|r| r.grad_sq).collect::<Vec<_>>()))
                .min(min_order(&rs.iter().map(|r| r.laplacian).collect::<Vec<_>>()))
        };
        let mut rows = vec![Row::at_least("evolution identity order in dt", worst(&time), 1.0)];
        if !self.quick {
            let mut space = Vec::new();
            for n in [251, 501, 1001] {
                let (m, t) = perturbed(Grid::new(10.0, n)?, 0.25, 0.05)?;
                space.push(semidiscrete_identity_residuals(&FlowState::new(m, t, FlowMode::Normalized)?, 1e-5, BULK_FRACTION)?);
            }
            rows.push(Row::at_least("evolution identity order in dx", worst(&space), 2.0));
        }
        Ok(rows)
    }

    fn poincare(&self) -> Result<Vec<Row>> {
        let g = Grid::standard();
        let mut r = self.rng(2);
        let (metrics, functions) = if self.quick { (4, 25) } else { (20, 50) };
        let mut margin = f64::INFINITY;
        for _ in 0..metrics {
            let (eps, t) = random_twist(g, &mut r);
            let m = random_metric(g, eps, &mut r);
            let p = solve_ricci_potential(&m, &t)?;
            for _ in 0..functions {
                margin = margin.min(check_weighted_poincare(&m, &p, &random_function(g, &mut r)));
            }
        }
        Ok(vec![Row::at_least(&format!("weighted Poincare margin ({} cases)", metrics * functions), margin, -1e-9)])
    }

    fn entropy(&self) -> Result<Vec<Row>> {
        let g = Grid::standard();
        let mut r = self.rng(3);
        let mut excess = f64::NEG_INFINITY;
        let cases = if self.quick { 5 } else { 50 };
        for _ in 0..cases {
            let (eps, t) = random_twist(g, &mut r);
            let m = random_metric(g, eps, &mut r);
            excess = excess.max(minimize_w(&m, &t, 0.5, 2e-10)?.mu - constant_test_value(&m, &t));
        }
        let (m, t) = perturbed(g, 0.25, 0.05)?;
        let w = coupled_w_run(&m, &t, 0.5, 0.2, 0.01)?;
        let (tke, _) = perturbed(g, 0.25, 0.0)?;
        let at_tke = minimize_w(&tke, &t, 0.5, 2e-10)?;
        Ok(vec![
            Row::at_most(&format!("mu - W(constant) over {cases} metrics"), excess, 1e-9),
            Row::at_most("W decrease along coupled run", w.max_decrease(), 1e-8),
            Row::at_most("dW/dt formula relative error", w.derivative_error(0.05), 0.02),
            Row::at_most("minimizer oscillation at soliton", at_tke.minimizer().osc(), 1e-5),
        ])
    }

    fn mabuchi(&self) -> Result<Vec<Row>> {
        let (base, t) = perturbed(Grid::standard(), 0.25, 0.0)?;
        let g = *base.grid();
        let end = Field::from_fn(g, |x| 0.1 * (-(x - 0.3) * (x - 0.3)).exp());
        let lin = mabuchi_energy_path(&PotentialPath::linear(base.clone(), t.clone(), &end, 33)?)?;
        let quad = mabuchi_energy_path(&PotentialPath::from_fn(base, t, 33, |s| {
            end.map(|p| s * s * p + 0.5 * s * (1.0 - s) * p * p)
        })?)?;
        Ok(vec![Row::at_most("Mabuchi path independence", (lin - quad).abs(), 1e-5)])
    }

    fn rescaling(&self) -> Result<Vec<Row>> {
        let (m, t) = perturbed(Grid::standard(), 0.25, 0.05)?;
        let (dt, horizon) = if self.quick { (0.005, 0.1f64) } else { (0.0025, 0.3f64) };
        let opts = RunOptions { sample_stride: 1, ..RunOptions::default() };
        let norm = run(FlowState::new(m.clone(), t.clone(), FlowMode::Normalized)?, -(1.0 - 2.0 * horizon).ln() + 0.02, dt, &opts)?;
        let unnorm = run(FlowState::new(m, t, FlowMode::Unnormalized)?, horizon, dt, &RunOptions { sample_stride: 4, ..opts })?;
        let limit = if self.quick { 1e-4 } else { 1e-5 };
        Ok(vec![Row::at_most(&format!("rescaling correspondence at dt {dt}"), rescaling_correspondence_check(&norm, &unnorm), limit)])
    }

    /// Monitors evaluated on a run of the sign-flipped twist against the
    /// twist it was supposed to use; every failing monitor becomes a row.
    fn fault(&self) -> Result<Vec<Row>> {
        let g = Grid::standard();
        let t = TwistProfile::sech2(g, 0.25)?;
        let flipped = TwistProfile::new_unchecked(t.a().map(|a| -a));
        let m = MetricProfile::scaled_fubini_study(g, 1.25).with_potential(&Field::from_fn(g, |x| 0.05 * (-x * x).exp()))?;
        let traj = run(FlowState::new(m, flipped, FlowMode::Normalized)?, 0.2, 0.05, &RunOptions::default())?;
        let (_, verdict) = monitor_report(&traj, &t, &MonitorOptions::default())?;
        Ok(verdict
            .checks
            .iter()
            .map(|c| Row { property: format!("fixture: {}", c.name), value: f64::NAN, limit: f64::NAN, margin: c.margin, pass: c.pass })
            .collect())
    }
}

type Property = fn(&Suite) -> Result<Vec<Row>>;

pub struct VerifyResult {
    pub rows: Vec<Row>,
    pub errors: Vec<String>,
}

impl VerifyResult {
    pub fn pass(&self) -> bool {
        self.errors.is_empty() && self.rows.iter().all(|r| r.pass)
    }
}

pub fn verify(quick: bool, seed: u64, fault: Option<Fault>) -> VerifyResult {
    let suite = Suite { seed, quick };
    let mut props: Vec<(&str, Property)> = vec![
        ("oracle", Suite::oracle),
        ("identities", Suite::identities),
        ("poincare", Suite::poincare),
        ("entropy", Suite::entropy),
        ("mabuchi", Suite::mabuchi),
        ("rescaling", Suite::rescaling),
    ];
    if fault == Some(Fault::SignFlip) {
        props.push(("fault fixture", Suite::fault));
    }
    let results: Vec<(&str, Result<Vec<Row>>)> = props.par_iter().map(|(name, p)| (*name, p(&suite))).collect();
    let mut out = VerifyResult { rows: Vec::new(), errors: Vec::new() };
    for (name, r) in results {
        match r {
            Ok(rows) => out.rows.extend(rows),
            Err(e) => out.errors.push(format!("{name}: {e}")),
        }
    }
    out
}

pub fn verify_command(quick: bool, seed: u64, fault: Option<Fault>) -> i32 {
    let start = Instant::now();
    let result = verify(quick, seed, fault);
    println!("{:<46} {:>11} {:>9} {:>11}  status", "property", "value", "limit", "margin");
    for r in &result.rows {
        // Fixture rows carry only a margin.
        let or_dash = |v: f64, prec: usize| if v.is_nan() { "-".to_string() } else { format!("{v:.prec$e}") };
        println!(
            "{:<46} {:>11} {:>9} {:>11.3e}  {}",
            r.property,
            or_dash(r.value, 3),
            or_dash(r.limit, 1),
            r.margin,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    for e in &result.errors {
        println!("error: {e}");
    }
    let failed = result.rows.iter().filter(|r| !r.pass).count() + result.errors.len();
    println!(
        "{} properties, {failed} failed, seed {seed}, {:.1}s",
        result.rows.len() + result.errors.len(),
        start.elapsed().as_secs_f64()
    );
    if result.pass() {
        0
    } else {
        1
    }
}
