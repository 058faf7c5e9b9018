//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line on
//! stderr (bypassing the test harness capture) and then asserts.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use cpa_contraction::cli::{self, Certificate, Config, Synthesis, VerifyArgs};
use cpa_contraction::cpa_metric::{contraction_matrix, CpaMetric};
use cpa_contraction::floquet_oracle::{contraction_probe, find_periodic_orbit, integrate, monodromy};
use cpa_contraction::sdp_assembly::{
    assemble, compute_e_coeffs, decode_gradient_row, residual, BlockKind, BlockTag, Objective, SdpProblem,
};
use cpa_contraction::sdp_solver::{certify, solve, SolverSettings};
use cpa_contraction::system::{parse_system, SystemDefinition};
use cpa_contraction::triangulation::{build_complex, check_complex, reference_x_star, Region, ScalingMatrix, SimplicialComplex};
use cpa_contraction::verifier::{verify_error_gap, verify_interpolation_bound, verify_vertex_constraints};

struct Checks(Vec<String>);

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.0.push(what());
        }
    }
}

/// Runs `body`, prints the verdict line and fails the test on any failed
/// check, error or panic.
fn criterion(n: u32, title: &str, body: impl FnOnce(&mut Checks) -> Result<String, String>) {
    let mut checks = Checks(Vec::new());
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| body(&mut checks)));
    let detail = match outcome {
        Ok(Ok(d)) => d,
        Ok(Err(e)) => {
            checks.0.push(format!("error: {e}"));
            String::new()
        }
        Err(p) => {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            checks.0.push(format!("panic: {}", msg.unwrap_or_default()));
            String::new()
        }
    };
    let verdict = if checks.0.is_empty() { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n} [{title}]: {verdict} ({:.1} s) {detail}",
        t0.elapsed().as_secs_f64()
    );
    assert!(checks.0.is_empty(), "criterion {n} failed: {:#?}", checks.0);
}

fn config(name: &str) -> Config {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    Config::from_json(&std::fs::read_to_string(&path).expect("config file")).expect("valid config")
}

struct Lin1 {
    config: Config,
    cert: Certificate,
    seconds: f64,
}

/// Criterion-1 synthesis, shared by the tests that reuse its certificate.
fn lin1() -> &'static Lin1 {
    static CELL: OnceLock<Lin1> = OnceLock::new();
    CELL.get_or_init(|| {
        let config = config("forced_linear.json");
        let t0 = Instant::now();
        let out = cli::synthesize(&config, &VerifyArgs::default(), None).expect("synthesis runs");
        let seconds = t0.elapsed().as_secs_f64();
        let Synthesis::Certified(cert) = out else { panic!("no certificate: {out:?}") };
        Lin1 { config, cert: *cert, seconds }
    })
}

fn lin1_complex(l: &Lin1) -> (SystemDefinition, SimplicialComplex) {
    let sys = l.config.system().unwrap();
    let complex = cli::build(&l.config, &sys, l.cert.k).unwrap();
    (sys, complex)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[test]
fn criterion_1_linear_end_to_end() {
    criterion(1, "1-D linear synthesis", |c| {
        let l = lin1();
        let r = &l.cert.verification;
        c.check(r.passed, || "verification did not pass".into());
        c.check(r.estimates_hold, || "interpolation or gap estimate failed".into());
        c.check(r.sampled.samples >= 100_000, || format!("only {} samples", r.sampled.samples));
        c.check(r.sampled.max_lambda <= -1.0 + 1e-6, || format!("max lambda_max {}", r.sampled.max_lambda));
        c.check(l.seconds < 60.0, || format!("took {:.1} s", l.seconds));

        let back = Certificate::from_json(&l.cert.to_json()).map_err(err)?;
        c.check(back == l.cert, || "certificate does not round-trip".into());

        // oracle: scalar variational equation y' = -y, monodromy e^{-2 pi}
        let sys = l.config.system().map_err(err)?;
        let orbit = find_periodic_orbit(&sys, &[0.0], 1e-12, 50, 4000).map_err(err)?;
        let fl = monodromy(&sys, &orbit, 4000).map_err(err)?;
        let expected = (-2.0 * std::f64::consts::PI).exp();
        c.check((fl.monodromy[0] - expected).abs() <= 1e-9, || format!("monodromy {} vs {expected}", fl.monodromy[0]));
        let top = fl.exponents[0];
        c.check((top + 1.0).abs() <= 1e-6, || format!("oracle exponent {top}"));
        let bound = l.cert.floquet_bound;
        c.check(bound >= -1.0 - 1e-6, || format!("Floquet bound {bound} below -1"));
        c.check(bound >= top - 1e-6, || format!("Floquet bound {bound} below oracle exponent {top}"));
        Ok(format!(
            "K = {}, C = {:.6}, bound {:.6}, oracle {:.9}, max lambda_max {:.4}, {} samples, synthesis {:.2} s",
            l.cert.k, l.cert.c[0].0, bound, top, r.sampled.max_lambda, r.sampled.samples, l.seconds
        ))
    });
}

#[test]
fn criterion_2_forced_oscillator_end_to_end() {
    criterion(2, "2-D forced oscillator synthesis", |c| {
        let config = config("forced_oscillator.json");
        let sys = config.system().map_err(err)?;

        // oracle first: the orbit must lie inside the region
        let orbit = find_periodic_orbit(&sys, &[0.0, 0.0], 1e-12, 50, 4000).map_err(err)?;
        let fl = monodromy(&sys, &orbit, 4000).map_err(err)?;
        for &e in &fl.exponents {
            c.check((e + 1.0).abs() <= 1e-5, || format!("oracle exponent {e}"));
        }
        let region = config.region().map_err(err)?;
        let tr = integrate(&sys, 0.0, &orbit.x_star, sys.period(), 400).map_err(err)?;
        c.check(tr.states.iter().all(|x| region.contains(x)), || "periodic orbit leaves the region".into());

        let t0 = Instant::now();
        let out = cli::synthesize(&config, &VerifyArgs { tol: 1e-6, ..VerifyArgs::default() }, None).map_err(err)?;
        let seconds = t0.elapsed().as_secs_f64();
        let Synthesis::Certified(cert) = out else { return Err(format!("no certificate: {out:?}")) };
        let r = &cert.verification;
        c.check(cert.k <= 7, || format!("K = {}", cert.k));
        c.check(r.passed, || "verification did not pass".into());
        c.check(r.estimates_hold, || "interpolation or gap estimate failed".into());
        c.check(r.sampled.tol == 1e-6, || format!("tolerance {}", r.sampled.tol));
        let bound = cert.floquet_bound;
        c.check(bound >= -1.0 - 1e-5, || format!("Floquet bound {bound}"));
        c.check(bound >= fl.exponents[0] - 1e-5, || format!("bound {bound} below oracle {}", fl.exponents[0]));
        c.check(seconds < 600.0, || format!("took {seconds:.0} s"));
        Ok(format!(
            "K = {}, C = {:.4e}, bound {:.4e}, oracle {:?}, max lambda_max {:.4e}, synthesis {:.1} s",
            cert.k,
            cert.c[0].0,
            bound,
            fl.exponents.iter().map(|e| format!("{e:.7}")).collect::<Vec<_>>(),
            r.sampled.max_lambda,
            seconds
        ))
    });
}

#[test]
fn criterion_3_triangulation_laws() {
    criterion(3, "triangulation laws", |c| {
        let period = 2.0;
        let mut summary = Vec::new();
        for (n, s) in [(1usize, vec![0.8]), (2, vec![1.0, 0.75])] {
            let scaling = ScalingMatrix::new(&s).map_err(err)?;
            let region = Region::single(vec![(-0.4, 0.4); n]).map_err(err)?;
            let x_star = reference_x_star(n).map_err(err)?;
            let mut constant = None;
            for k in 0..=4u32 {
                let complex = build_complex(&region, period, k, &scaling).map_err(err)?;
                let report = check_complex(&complex, 500, u64::from(k));
                c.check(report.is_valid(), || {
                    format!(
                        "n={n} K={k}: {} face violations, {} unpaired, {} uncovered",
                        report.face_violations.len(),
                        report.unpaired_vertices.len(),
                        report.uncovered_points.len()
                    )
                });
                let scale = 0.5f64.powi(k as i32);
                let h_bound = scaling.s_star() * scale * period;
                let mut worst_inv = 0.0f64;
                for i in 0..complex.num_simplices() {
                    let g = complex.geometry(i);
                    c.check(g.h <= h_bound * (1.0 + 4.0 * f64::EPSILON), || format!("n={n} K={k}: h {} > {h_bound}", g.h));
                    worst_inv = worst_inv.max(g.inverse_one_norm);
                }
                let scaled = worst_inv * scale;
                let r = *constant.get_or_insert(scaled);
                c.check((scaled - r).abs() <= 1e-10 * r, || format!("n={n} K={k}: ||X^-1|| 2^-K = {scaled} vs {r}"));
                let ref_bound = x_star / (scaling.s_lower() * period * scale);
                c.check(worst_inv <= ref_bound * (1.0 + 1e-12), || format!("n={n} K={k}: {worst_inv} > {ref_bound}"));
                if k == 4 {
                    summary.push(format!("n={n}: {} simplices at K=4, ||X^-1|| 2^-K = {r:.6}", complex.num_simplices()));
                }
            }
        }
        Ok(summary.join("; "))
    });
}

/// Direct evaluation of block `b` of the assembled problem through the CPA
/// metric, as a full row-major matrix.
fn direct_block(
    problem: &SdpProblem,
    b: usize,
    complex: &SimplicialComplex,
    sys: &SystemDefinition,
    cpa: &CpaMetric<'_>,
    cd: (&[f64], &[f64], Option<f64>),
    epsilon0: f64,
) -> Vec<f64> {
    let n = complex.dim();
    let (cs, ds, cmax) = cd;
    let pick = |v: &[f64], nu: u32| if v.len() == 1 { v[0] } else { v[nu as usize] };
    let tag: BlockTag = problem.tag(b);
    let shift = |m: Vec<f64>, scale: f64, diag: f64| -> Vec<f64> {
        let mut out: Vec<f64> = m.iter().map(|x| scale * x).collect();
        for i in 0..n {
            out[i * n + i] += diag;
        }
        out
    };
    match tag.kind {
        BlockKind::Positivity => shift(cpa.slot_matrix(tag.index as usize), 1.0, -epsilon0),
        BlockKind::MetricBound => {
            let (slot, cv) = if tag.simplex == BlockTag::NONE {
                (tag.index as usize, cs[0])
            } else {
                (complex.simplex_slots(tag.simplex as usize)[tag.index as usize], pick(cs, tag.simplex))
            };
            shift(cpa.slot_matrix(slot), -1.0, cv)
        }
        BlockKind::Contraction => {
            let nu = tag.simplex as usize;
            let k = tag.index as usize;
            let slot = complex.simplex_slots(nu)[k];
            let v = complex.vertex(complex.simplex(nu).vertices[k] as usize);
            let ft = sys.eval_extended(v[0], &v[1..]).unwrap();
            let jac = sys.eval_jacobian(v[0], &v[1..]).unwrap();
            let orbital = cpa.directional_derivative(nu, &ft);
            let m = contraction_matrix(&cpa.slot_matrix(slot), &jac, &orbital, n);
            let e = compute_e_coeffs(complex.geometry(nu).h, n, &complex.bounds(nu).unwrap(), sys.smoothness())
                .unwrap()
                .value(pick(cs, tag.simplex), pick(ds, tag.simplex));
            shift(m, -1.0, -(e + 1.0))
        }
        BlockKind::GradientBound => {
            let (e, l, positive) = decode_gradient_row(tag.index, n);
            let w = cpa.gradient(tag.simplex as usize, e)[l];
            vec![pick(ds, tag.simplex) / (n as f64 + 1.0) + if positive { w } else { -w }]
        }
        BlockKind::MaxLink => vec![cmax.unwrap() - pick(cs, tag.simplex)],
        BlockKind::Generic => unreachable!("assembled blocks carry a family"),
    }
}

#[test]
fn criterion_4_assembly_oracle() {
    criterion(4, "assembly oracle and census", |c| {
        let l = lin1();
        let (sys, complex) = lin1_complex(l);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst = 0.0f64;
        let mut blocks_checked = 0usize;
        for (uniform_cd, objective) in [(true, Objective::MinC), (false, Objective::MinC)] {
            let mut config = l.config.clone();
            config.mode.uniform_cd = uniform_cd;
            config.mode.objective = objective;
            let (problem, map) = assemble(&complex, &sys, &config.assembly_options()).map_err(err)?;
            let trials = if uniform_cd { 100 } else { 10 };
            for _ in 0..trials {
                let y: Vec<f64> = (0..problem.num_vars()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let cpa = CpaMetric::new(&complex, map.metric_values(&y)).map_err(err)?;
                let (cs, ds) = (map.c_values(&y), map.d_values(&y));
                let cmax = map.cmax_var().map(|i| y[i]);
                for b in 0..problem.num_blocks() {
                    let got = residual(&problem, &y, b).map_err(err)?;
                    let want = direct_block(&problem, b, &complex, &sys, &cpa, (&cs, &ds, cmax), config.epsilon0);
                    for (g, w) in got.iter().zip(&want) {
                        let dev = (g - w).abs() / (1.0 + w.abs());
                        worst = worst.max(dev);
                    }
                    blocks_checked += 1;
                }
            }
        }
        c.check(worst <= 1e-10, || format!("worst deviation {worst:e}"));

        // census in per-simplex feasibility mode
        let mut census = Vec::new();
        let cases: Vec<(Config, SystemDefinition, SimplicialComplex)> = {
            let mut v = vec![(l.config.clone(), sys.clone(), complex.clone())];
            let osc = config("forced_oscillator.json");
            let osc_sys = osc.system().map_err(err)?;
            for k in 0..=2 {
                let mut small = osc.clone();
                small.region = cli::RegionSpec::Single(vec![[-0.3, 0.3], [-0.2, 0.4]]);
                let cx = cli::build(&small, &osc_sys, k).map_err(err)?;
                v.push((small, osc_sys.clone(), cx));
            }
            v
        };
        for (mut config, sys, complex) in cases {
            config.mode.uniform_cd = false;
            config.mode.objective = Objective::None;
            let (problem, _) = assemble(&complex, &sys, &config.assembly_options()).map_err(err)?;
            let n = complex.dim();
            let s = complex.num_simplices();
            let v = complex.num_slots();
            let m = 2 * s + n * (n + 1) / 2 * v;
            c.check(problem.num_vars() == m, || format!("n={n}: m = {} vs {m}", problem.num_vars()));
            let kinds = problem.kind_histogram();
            let count = |k: BlockKind| kinds.get(&k).copied().unwrap_or(0);
            let size_one = count(BlockKind::GradientBound);
            let size_n = count(BlockKind::Positivity) + count(BlockKind::MetricBound) + count(BlockKind::Contraction);
            c.check(size_one == n * (n + 1) * (n + 1) * s, || format!("n={n}: {size_one} size-1 blocks"));
            c.check(size_n == v + 2 * (n + 2) * s, || format!("n={n}: {size_n} size-n blocks"));
            c.check(problem.num_blocks() == size_one + size_n, || format!("n={n}: unexpected block families"));
            if n > 1 {
                let sizes = problem.size_histogram();
                c.check(sizes.get(&1).copied().unwrap_or(0) == size_one, || format!("n={n}: size histogram {sizes:?}"));
                c.check(sizes.get(&n).copied().unwrap_or(0) == size_n, || format!("n={n}: size histogram {sizes:?}"));
            }
            census.push(format!("n={n} s={s} v={v} m={m}"));
        }
        Ok(format!("{blocks_checked} blocks compared, worst relative deviation {worst:.2e}; census {}", census.join(", ")))
    });
}

#[test]
fn criterion_5_interpolation_bound() {
    criterion(5, "interpolation bound, van der Pol", |c| {
        let sys = parse_system("dim = 2; period = 1; f1 = x2; f2 = -x1 - x2*(x1^2 - 1)").map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut coords = Vec::new();
        let mut simplices = Vec::new();
        while simplices.len() < 50 {
            let centre = [rng.random_range(0.0..1.0), rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)];
            let size = rng.random_range(0.05..0.6);
            let verts: Vec<Vec<f64>> = (0..4)
                .map(|_| centre.iter().map(|x| x + size * rng.random_range(-1.0..1.0)).collect())
                .collect();
            let refs: Vec<&[f64]> = verts.iter().map(Vec::as_slice).collect();
            // skip nearly flat draws
            if cpa_contraction::triangulation::simplex_geometry(&refs).is_err() {
                continue;
            }
            let base = coords.len();
            coords.extend(verts);
            simplices.push((base..base + 4).collect::<Vec<_>>());
        }
        let mut complex = SimplicialComplex::from_simplices(coords, simplices).map_err(err)?;
        complex.attach_bounds(&sys).map_err(err)?;

        let mut violations = 0;
        let mut worst_ratio = 0.0f64;
        for i in 0..complex.num_simplices() {
            // independent sampling: uniform barycentric weights by sorted cuts
            let verts: Vec<&[f64]> = complex.simplex(i).vertices.iter().map(|&v| complex.vertex(v as usize)).collect();
            let fv: Vec<Vec<f64>> = verts.iter().map(|v| sys.eval_f(v[0], &v[1..]).unwrap()).collect();
            let bound = 3.0 * complex.bounds(i).unwrap().second * complex.geometry(i).h.powi(2);
            for _ in 0..1000 {
                let mut cuts: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                cuts.sort_by(f64::total_cmp);
                let w = [cuts[0], cuts[1] - cuts[0], cuts[2] - cuts[1], 1.0 - cuts[2]];
                let x: Vec<f64> = (0..3).map(|k| (0..4).map(|r| w[r] * verts[r][k]).sum()).collect();
                let f = sys.eval_f(x[0], &x[1..]).unwrap();
                let e = (0..2).map(|k| (f[k] - (0..4).map(|r| w[r] * fv[r][k]).sum::<f64>()).abs()).fold(0.0, f64::max);
                if e > bound {
                    violations += 1;
                }
                worst_ratio = worst_ratio.max(e / bound);
            }
            let lib = verify_interpolation_bound(&complex, i, &sys, 1000, i as u64).map_err(err)?;
            c.check(lib.holds(0.0), || format!("simplex {i}: library ratio {}", lib.worst_ratio));
        }
        c.check(violations == 0, || format!("{violations} violations"));
        Ok(format!("50 simplices x 1000 points, worst error / bound {worst_ratio:.3e}"))
    });
}

#[test]
fn criterion_6_error_gap() {
    criterion(6, "error gap and tampering control", |c| {
        let l = lin1();
        let (sys, complex) = lin1_complex(l);
        let cpa = CpaMetric::new(&complex, l.cert.metric_values()).map_err(err)?;
        let bounds = l.cert.bounds();
        let samples = 500;
        let mut worst_ratio = 0.0f64;
        for nu in 0..complex.num_simplices() {
            let g = verify_error_gap(&cpa, &sys, nu, bounds.c_at(nu), bounds.d_at(nu), samples, nu as u64).map_err(err)?;
            c.check(g.worst_gap <= g.bound + 1e-8, || format!("simplex {nu}: gap {} > {}", g.worst_gap, g.bound));
            c.check(g.holds(1e-8, 1e-6), || format!("simplex {nu}: estimate fails, {g:?}"));
            if g.bound > 0.0 {
                worst_ratio = worst_ratio.max(g.worst_gap / g.bound);
            }
        }

        // negative control: solve with E_nu halved in every vertex
        // contraction block, then check against the honest estimates
        let (honest, map) = assemble(&complex, &sys, &l.config.assembly_options()).map_err(err)?;
        let cd = [map.c_var(0) as u32, map.d_var(0) as u32];
        let mut tampered = SdpProblem::new(honest.num_vars(), honest.objective().to_vec());
        let mut terms = Vec::new();
        for b in 0..honest.num_blocks() {
            let blk = honest.block(b);
            terms.clear();
            for (t, &v) in blk.vars.iter().enumerate() {
                let half = blk.tag.kind == BlockKind::Contraction && cd.contains(&v);
                let scale = if half { 0.5 } else { 1.0 };
                terms.push((v, blk.coef(t).iter().map(|x| scale * x).collect::<Vec<f64>>()));
            }
            tampered.push_block(blk.size, blk.f0, &mut terms, blk.tag);
        }
        let sol = solve(&tampered, &l.config.solver).map_err(err)?;
        c.check(sol.is_feasible(), || format!("tampered problem {:?}", sol.status));
        let bad = CpaMetric::new(&complex, map.metric_values(&sol.y)).map_err(err)?;
        let (bc, bd) = (map.c_values(&sol.y)[0], map.d_values(&sol.y)[0]);
        let mut detected = 0;
        for nu in 0..complex.num_simplices() {
            let g = verify_error_gap(&bad, &sys, nu, bc, bd, samples, nu as u64).map_err(err)?;
            if !g.holds(1e-8, 1e-6) {
                detected += 1;
            }
        }
        let vertex = verify_vertex_constraints(&honest, &sol.y, 1e-6).map_err(err)?;
        c.check(detected > 0, || "halved E_nu not detected by the sampled estimate".into());
        c.check(vertex.violations > 0, || "halved E_nu not detected at the vertices".into());
        Ok(format!(
            "{} simplices, worst gap / (E/n) {worst_ratio:.3e}; tampered: {detected} simplices flagged, {} vertex violations",
            complex.num_simplices(),
            vertex.violations
        ))
    });
}

/// Block size, `F_0` and `(variable, F_i)`, all full row-major.
type DenseBlock = (usize, Vec<f64>, Vec<(usize, Vec<f64>)>);

struct RandomSdp {
    problem: SdpProblem,
    blocks: Vec<DenseBlock>,
    c: Vec<f64>,
    /// Strictly feasible point (single-variable problems).
    y0: Vec<f64>,
    /// Known optimal value (multi-variable problems).
    optimum: Option<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = gaussian(rng, n);
    (&a + a.transpose()) * 0.5
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = gaussian(rng, n);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

/// `Q diag(values) Q^T`.
fn with_spectrum(q: &DMatrix<f64>, values: &[f64]) -> DMatrix<f64> {
    q * DMatrix::from_diagonal(&DVector::from_column_slice(values)) * q.transpose()
}

/// Random block SDP. Single-variable problems are built around a sampled
/// interior point and a strictly feasible dual. Multi-variable problems are
/// built around a strictly complementary pair `X* Z* = 0`, so `c y*` is the
/// optimal value; the first variable carries a positive definite
/// coefficient in every block, which makes the primal strictly feasible.
fn random_sdp(rng: &mut ChaCha8Rng, single_var: bool) -> RandomSdp {
    loop {
        let nb = rng.random_range(1..=5usize);
        let sizes: Vec<usize> = (0..nb).map(|_| rng.random_range(1..=4usize)).collect();
        let dims: usize = sizes.iter().map(|s| s * (s + 1) / 2).sum();
        let m = if single_var { 1 } else { rng.random_range(2..=dims.clamp(2, 20)) };
        let y0: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut blocks = Vec::new();
        let mut c = vec![0.0; m];
        let mut covered = vec![false; m];
        for (b, &s) in sizes.iter().enumerate() {
            let mut terms = Vec::new();
            for (i, cov) in covered.iter_mut().enumerate() {
                if i == 0 && !single_var {
                    terms.push((i, random_pd(rng, s)));
                    *cov = true;
                } else if single_var || rng.random_bool(0.6) {
                    terms.push((i, random_symmetric(rng, s)));
                    *cov = true;
                }
            }
            let (x, z) = if single_var {
                (random_pd(rng, s), random_pd(rng, s))
            } else {
                let q = gaussian(rng, s).qr().q();
                let rank_z = if b == 0 { rng.random_range(1..=s) } else { rng.random_range(0..=s) };
                let xs: Vec<f64> = (0..s).map(|k| if k < rank_z { 0.0 } else { rng.random_range(0.5..2.0) }).collect();
                let zs: Vec<f64> = (0..s).map(|k| if k < rank_z { rng.random_range(0.5..2.0) } else { 0.0 }).collect();
                (with_spectrum(&q, &xs), with_spectrum(&q, &zs))
            };
            let mut f0 = -x;
            for (i, f) in &terms {
                f0 += f * y0[*i];
            }
            for (i, f) in &terms {
                c[*i] += f.dot(&z);
            }
            blocks.push((s, f0, terms));
        }
        if covered.iter().any(|&v| !v) {
            continue;
        }
        // the F_i must be well away from linear dependence
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for (_, _, terms) in &blocks {
            for (i, fi) in terms {
                for (j, fj) in terms {
                    gram[(*i, *j)] += fi.dot(fj);
                }
            }
        }
        let spectrum = gram.symmetric_eigenvalues();
        if spectrum.min() < 1e-3 * spectrum.max() {
            continue;
        }
        let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let c: Vec<f64> = c.iter().map(|v| v / scale).collect();
        let optimum = (!single_var).then(|| c.iter().zip(&y0).map(|(a, b)| a * b).sum());
        let mut problem = SdpProblem::new(m, c.clone());
        let full = |a: &DMatrix<f64>| a.transpose().as_slice().to_vec();
        let blocks: Vec<DenseBlock> = blocks
            .iter()
            .map(|(s, f0, terms)| (*s, full(f0), terms.iter().map(|(i, f)| (*i, full(f))).collect()))
            .collect();
        for (s, f0, terms) in &blocks {
            problem.push_dense_block(*s, f0, terms, BlockTag::generic());
        }
        return RandomSdp { problem, blocks, c, y0, optimum };
    }
}

fn feasible(sdp: &RandomSdp, y: &[f64]) -> bool {
    sdp.blocks.iter().all(|(s, f0, terms)| {
        let mut x = -DMatrix::from_row_slice(*s, *s, f0);
        for (i, f) in terms {
            x += DMatrix::from_row_slice(*s, *s, f) * y[*i];
        }
        x.symmetric_eigenvalues().min() >= 0.0
    })
}

/// Minimum of `c y` for a single-variable problem by bisection on the
/// sign of the smallest eigenvalue.
fn bisection_reference(sdp: &RandomSdp) -> f64 {
    let c = sdp.c[0];
    let dir = -c.signum();
    let y0 = sdp.y0[0];
    let mut step = 1.0;
    while feasible(sdp, &[y0 + dir * step]) {
        step *= 2.0;
        assert!(step < 1e9, "unbounded single-variable problem");
    }
    let (mut good, mut bad) = (0.0, step);
    for _ in 0..200 {
        let mid = 0.5 * (good + bad);
        if feasible(sdp, &[y0 + dir * mid]) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    c * (y0 + dir * good)
}

#[test]
fn criterion_7_solver_suite() {
    criterion(7, "solver on random SDPs", |c| {
        let settings = SolverSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        let mut statuses = std::collections::BTreeMap::new();
        for case in 0..100 {
            let single_var = case % 5 == 0;
            let sdp = random_sdp(&mut rng, single_var);
            let sol = solve(&sdp.problem, &settings).map_err(err)?;
            *statuses.entry(format!("{:?}", sol.status)).or_insert(0) += 1;
            c.check(sol.is_feasible(), || format!("case {case}: {:?}", sol.status));
            let cert = certify(&sdp.problem, &sol.y, 1e-6).map_err(err)?;
            c.check(cert.is_clean(), || format!("case {case}: certify worst {}", cert.worst));
            let reference = sdp.optimum.unwrap_or_else(|| bisection_reference(&sdp));
            let dev = (sol.objective - reference).abs();
            worst = worst.max(dev);
            c.check(dev <= 1e-6, || format!("case {case}: objective {} vs reference {reference}", sol.objective));
            let again = solve(&sdp.problem, &settings).map_err(err)?;
            let same = again.y.len() == sol.y.len() && again.y.iter().zip(&sol.y).all(|(a, b)| a.to_bits() == b.to_bits());
            c.check(same && again.iterations == sol.iterations, || format!("case {case}: repeated solve differs"));
        }
        Ok(format!("100 problems (20 single-variable), statuses {statuses:?}, worst objective deviation {worst:.2e}"))
    });
}

#[test]
fn criterion_8_contraction_probes() {
    criterion(8, "contraction probes", |c| {
        let l = lin1();
        let (sys, complex) = lin1_complex(l);
        let cpa = CpaMetric::new(&complex, l.cert.metric_values()).map_err(err)?;
        let period = sys.period();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst = 0.0f64;
        for probe in 0..20 {
            let start = [rng.random_range(0.0..period), rng.random_range(-1.8..0.8)];
            let offset = [rng.random_range(-1e-3..1e-3)];
            let series = contraction_probe(&cpa, &sys, &start, &offset, 2.0 * period, 2000).map_err(err)?;
            worst = worst.max(series.worst_relative_increase());
            c.check(series.is_nonincreasing(1e-6), || {
                format!("probe {probe} from {start:?}: relative increase {}", series.worst_relative_increase())
            });
        }

        // negative controls: a metric that grows faster than the flow
        // contracts, and the certified metric on an expanding system
        let wobbly = CpaMetric::from_fn(&complex, |v| vec![1.0 + 20.0 * v[0].sin().abs()]).map_err(err)?;
        let s1 = contraction_probe(&wobbly, &sys, &[0.0, -0.3], &[1e-3], period, 1000).map_err(err)?;
        c.check(!s1.is_nonincreasing(1e-6), || "wobbly metric shows no increase".into());
        let expanding = parse_system("dim = 1; period = 2*pi; f1 = x1").map_err(err)?;
        let s2 = contraction_probe(&cpa, &expanding, &[0.0, 0.0], &[1e-3], 1.0, 500).map_err(err)?;
        c.check(!s2.is_nonincreasing(1e-6), || "expanding system shows no increase".into());
        Ok(format!(
            "20 probes, worst relative increase {worst:.2e}; controls increase by {:.2e} and {:.2e}",
            s1.worst_relative_increase(),
            s2.worst_relative_increase()
        ))
    });
}
